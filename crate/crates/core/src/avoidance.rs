//! First-stage solver: pick a set of controlled aircraft and their speed /
//! heading deviations so that every pair is separated on its infinite
//! post-maneuver ray, minimizing deviation plus per-aircraft control cost.
//!
//! Control sets are enumerated best-first by fixed cost. Only sets covering
//! every initial conflict can be feasible, so enumeration nodes are pruned
//! with an exact weighted vertex-cover bound on the still-uncovered
//! conflicts and against the incumbent. For each candidate set the
//! continuous subproblem over `(q, theta)` is attacked by multistart
//! penalty descent with the disjunct of every pair fixed per start;
//! candidates count as feasible only if the exact separation predicate
//! passes for every pair, never on solver bookkeeping.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{
    self, ConflictLines, GeometryError, Maneuver, PairGeometry,
};
use crate::scenario::{Scenario, SolverConfig};
use crate::pairs;

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    /// No control set up to all aircraft admits a feasible maneuver set.
    Infeasible,
    /// The time limit expired before any feasible solution was found.
    TimeLimit,
    Geometry(GeometryError),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Infeasible => write!(f, "avoidance stage is infeasible"),
            SolveError::TimeLimit => {
                write!(f, "avoidance time limit expired without a feasible solution")
            }
            SolveError::Geometry(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SolveError {}

impl From<GeometryError> for SolveError {
    fn from(e: GeometryError) -> Self {
        SolveError::Geometry(e)
    }
}

/// A feasible avoidance solution with optimality bookkeeping.
#[derive(Debug, Clone)]
pub struct AvoidanceSolution {
    pub maneuvers: Vec<Maneuver>,
    /// Active disjunct per pair (order of [`crate::pairs`]).
    pub z: Vec<bool>,
    /// Value of the avoidance objective at the returned maneuvers.
    pub objective: f64,
    /// Exact weighted vertex-cover bound; deviations are nonnegative, so
    /// this is a true lower bound on any feasible objective.
    pub lower_bound: f64,
    pub gap: f64,
    pub runtime: f64,
    pub timed_out: bool,
}

impl AvoidanceSolution {
    pub fn controlled_count(&self) -> usize {
        self.maneuvers.iter().filter(|m| m.controlled).count()
    }
}

/// Avoidance objective:
/// `sum_i w theta_i^2 + (1 - w)(1 - q_i)^2 + f_i (lambda_f + r_i)`.
pub fn avoidance_objective(maneuvers: &[Maneuver], w: f64, lambda_f: f64, r: &[f64]) -> f64 {
    maneuvers
        .iter()
        .zip(r)
        .map(|(m, ri)| {
            let f = if m.controlled { 1.0 } else { 0.0 };
            w * m.theta * m.theta + (1.0 - w) * (1.0 - m.q).powi(2) + f * (lambda_f + ri)
        })
        .sum()
}

/// Exact minimum-weight vertex cover of the initial-conflict graph with
/// vertex weights `lambda_f + r_i`; a valid lower bound on the control-cost
/// portion of any feasible solution.
pub fn vertex_cover_lower_bound(p0: &[(usize, usize)], lambda_f: f64, r: &[f64]) -> f64 {
    let weights: Vec<f64> = r.iter().map(|ri| lambda_f + ri).collect();
    min_weight_cover(p0, &weights, u64::MAX).unwrap_or(f64::INFINITY)
}

/// Exact weighted vertex cover over edges whose vertices are restricted to
/// `allowed` (bitmask). `None` when some edge cannot be covered at all.
fn min_weight_cover(edges: &[(usize, usize)], weights: &[f64], allowed: u64) -> Option<f64> {
    // Drop edges already impossible; bail out early.
    for &(u, v) in edges {
        if allowed & (1 << u) == 0 && allowed & (1 << v) == 0 {
            return None;
        }
    }
    let mut best = f64::INFINITY;
    let mut chosen = 0u64;
    branch_cover(edges, weights, allowed, &mut chosen, 0.0, &mut best);
    Some(best)
}

fn branch_cover(
    edges: &[(usize, usize)],
    weights: &[f64],
    allowed: u64,
    chosen: &mut u64,
    cost: f64,
    best: &mut f64,
) {
    // Matching-based lower bound: vertex-disjoint uncovered edges each force
    // at least their cheaper endpoint.
    let mut lb = 0.0;
    let mut matched = 0u64;
    let mut first_uncovered = None;
    for &(u, v) in edges {
        if *chosen & (1 << u) != 0 || *chosen & (1 << v) != 0 {
            continue;
        }
        if first_uncovered.is_none() {
            first_uncovered = Some((u, v));
        }
        if matched & (1 << u) == 0 && matched & (1 << v) == 0 {
            matched |= (1 << u) | (1 << v);
            let wu = if allowed & (1 << u) != 0 { weights[u] } else { f64::INFINITY };
            let wv = if allowed & (1 << v) != 0 { weights[v] } else { f64::INFINITY };
            lb += wu.min(wv);
        }
    }
    if cost + lb >= *best {
        return;
    }
    let Some((u, v)) = first_uncovered else {
        *best = cost;
        return;
    };
    for cand in [u, v] {
        if allowed & (1 << cand) != 0 {
            *chosen |= 1 << cand;
            branch_cover(edges, weights, allowed, chosen, cost + weights[cand], best);
            *chosen &= !(1 << cand);
        }
    }
}

/// Per-pair data shared by the continuous subproblem.
struct PairData {
    i: usize,
    j: usize,
    dx: f64,
    dy: f64,
    inv_p: f64,
    /// Norm the descent aims at; equals the scenario norm unless the caller
    /// asked for extra margin, and is capped below the initial distance.
    d_eff: f64,
    lines: ConflictLines,
    /// The relative-velocity box misses the conflict region: the pair can
    /// never conflict within bounds and is skipped in the hot loop.
    always_safe: bool,
}

struct Problem<'s> {
    scenario: &'s Scenario,
    pairs: Vec<PairData>,
}

impl<'s> Problem<'s> {
    fn new(scenario: &'s Scenario, d_target: f64) -> Result<Self, GeometryError> {
        let mut data = Vec::new();
        for (i, j) in pairs(scenario.len()) {
            let pg = PairGeometry::new(
                &scenario.aircraft[i],
                &scenario.aircraft[j],
                &scenario.bounds,
                scenario.d,
            )?;
            let dist = (pg.dx * pg.dx + pg.dy * pg.dy).sqrt();
            let d_eff = d_target.min(0.99 * dist).max(scenario.d);
            let lines = if d_eff == scenario.d {
                pg.lines
            } else {
                geometry::conflict_region_lines(pg.dx, pg.dy, d_eff)?
            };
            let always_safe = !geometry::wedge_intersects_box(&lines, &pg.vbox);
            data.push(PairData {
                i,
                j,
                dx: pg.dx,
                dy: pg.dy,
                inv_p: 1.0 / dist,
                d_eff,
                lines,
                always_safe,
            });
        }
        Ok(Problem {
            scenario,
            pairs: data,
        })
    }

    /// Exact feasibility of a full maneuver vector.
    ///
    /// Pairs with a controlled endpoint are held to their effective norm;
    /// untouched pairs only need the true scenario norm.
    fn certify(&self, maneuvers: &[Maneuver]) -> bool {
        self.pairs.iter().all(|p| {
            let (vx, vy) = geometry::relative_velocity(
                &self.scenario.aircraft[p.i],
                &self.scenario.aircraft[p.j],
                &maneuvers[p.i],
                &maneuvers[p.j],
            );
            let d = if maneuvers[p.i].controlled || maneuvers[p.j].controlled {
                p.d_eff
            } else {
                self.scenario.d
            };
            geometry::is_separated(p.dx, p.dy, vx, vy, d).unwrap_or(false)
        })
    }
}

/// Safety margin (knots) pulled inside each root-line constraint so that
/// the exact predicate passes comfortably at the descent's limit point.
const LINE_MARGIN_KN: f64 = 1e-3;

/// Continuous subproblem: minimize the deviation cost of the controlled set
/// `cover` subject to pairwise separation, via multistart fixed-disjunct
/// penalty descent. Returns maneuvers and deviation cost of the best
/// exactly-feasible candidate.
fn solve_cover(
    problem: &Problem,
    cover: u64,
    config: &SolverConfig,
    deadline: Instant,
) -> Option<(Vec<Maneuver>, f64)> {
    let scenario = problem.scenario;
    let n = scenario.len();
    let members: Vec<usize> = (0..n).filter(|i| cover & (1 << i) != 0).collect();
    let bounds = &scenario.bounds;

    // Pairs with no controlled endpoint are fixed: if any of them conflicts
    // the cover is infeasible outright.
    let nominal_all: Vec<Maneuver> = (0..n).map(|_| Maneuver::nominal()).collect();
    for p in &problem.pairs {
        if cover & (1 << p.i) == 0 && cover & (1 << p.j) == 0 && !p.always_safe {
            let (vx, vy) = geometry::relative_velocity(
                &scenario.aircraft[p.i],
                &scenario.aircraft[p.j],
                &nominal_all[p.i],
                &nominal_all[p.j],
            );
            if !geometry::is_separated(p.dx, p.dy, vx, vy, scenario.d).unwrap_or(false) {
                return None;
            }
        }
    }
    if members.is_empty() {
        return Some((nominal_all, 0.0));
    }

    let active: Vec<&PairData> = problem
        .pairs
        .iter()
        .filter(|p| !p.always_safe && (cover & (1 << p.i) != 0 || cover & (1 << p.j) != 0))
        .collect();

    // Hopeless-cover check: if some pair's achievable relative-velocity box
    // sits entirely inside its conflict wedge, no maneuver of this control
    // set can separate it.
    let collapsed = crate::geometry::ControlBounds::new(1.0, 1.0, 0.0, 0.0);
    for p in &active {
        let bi = if cover & (1 << p.i) != 0 { bounds } else { &collapsed };
        let bj = if cover & (1 << p.j) != 0 { bounds } else { &collapsed };
        let vbox = geometry::relative_velocity_box_mixed(
            &scenario.aircraft[p.i],
            &scenario.aircraft[p.j],
            bi,
            bj,
        );
        if geometry::box_inside_wedge(&p.lines, &vbox) {
            return None;
        }
    }

    // Column index of each aircraft's (q, theta) block, or usize::MAX.
    let mut col = vec![usize::MAX; n];
    for (k, &i) in members.iter().enumerate() {
        col[i] = 2 * k;
    }
    let dim = 2 * members.len();

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in 0..config.starts.max(1) {
        if Instant::now() >= deadline {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(
            config
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(cover)
                .wrapping_add((start as u64) << 32),
        );
        let mut x = vec![0.0f64; dim];
        for k in 0..members.len() {
            if start == 0 {
                x[2 * k] = 1.0;
                x[2 * k + 1] = 0.0;
            } else {
                x[2 * k] = rng.gen_range(bounds.q_lo..=bounds.q_hi);
                x[2 * k + 1] = rng.gen_range(bounds.theta_lo..=bounds.theta_hi);
            }
        }
        // A start whose fixed disjuncts turn out wrong gets its branches
        // re-fixed from the point it reached, up to twice.
        let mut zs = fix_disjuncts(problem, &active, &members, &col, &x);
        for _round in 0..3 {
            descend(problem, &active, &members, &col, &zs, config, &mut x);
            let maneuvers = to_maneuvers(n, &members, &x);
            if problem.certify(&maneuvers) {
                let dev = deviation_cost(&x, members.len(), config.w);
                if best.as_ref().map_or(true, |(_, b)| dev < *b) {
                    best = Some((x.clone(), dev));
                }
                break;
            }
            let refreshed = fix_disjuncts(problem, &active, &members, &col, &x);
            if refreshed == zs {
                break;
            }
            zs = refreshed;
        }
    }
    best.map(|(x, dev)| (to_maneuvers(n, &members, &x), dev))
}

fn to_maneuvers(n: usize, members: &[usize], x: &[f64]) -> Vec<Maneuver> {
    let mut maneuvers = vec![Maneuver::nominal(); n];
    for (k, &i) in members.iter().enumerate() {
        maneuvers[i] = Maneuver::controlled(x[2 * k], x[2 * k + 1]);
    }
    maneuvers
}

fn deviation_cost(x: &[f64], members: usize, w: f64) -> f64 {
    (0..members)
        .map(|k| w * x[2 * k + 1].powi(2) + (1.0 - w) * (1.0 - x[2 * k]).powi(2))
        .sum()
}

/// Relative velocity of an active pair under the current variables.
fn pair_velocity(
    problem: &Problem,
    p: &PairData,
    col: &[usize],
    x: &[f64],
) -> (f64, f64) {
    let vel = |idx: usize| -> (f64, f64) {
        let s = &problem.scenario.aircraft[idx];
        let (q, theta) = if col[idx] == usize::MAX {
            (1.0, 0.0)
        } else {
            (x[col[idx]], x[col[idx] + 1])
        };
        let a = s.heading + theta;
        (q * s.speed * a.cos(), q * s.speed * a.sin())
    };
    let (vix, viy) = vel(p.i);
    let (vjx, vjy) = vel(p.j);
    (vix - vjx, viy - vjy)
}

/// Pick, per active pair, the disjunct with the smaller violation at the
/// start point; the branch stays fixed for the whole descent.
fn fix_disjuncts(
    problem: &Problem,
    active: &[&PairData],
    _members: &[usize],
    col: &[usize],
    x: &[f64],
) -> Vec<bool> {
    active
        .iter()
        .map(|p| {
            let (vx, vy) = pair_velocity(problem, p, col, x);
            let n_val = (vy * p.dx - vx * p.dy) * p.inv_p;
            let v1 = hinge(n_val).powi(2) + hinge(p.lines.lower(vx, vy)).powi(2);
            let v0 = hinge(-n_val).powi(2) + hinge(-p.lines.upper(vx, vy)).powi(2);
            v1 <= v0
        })
        .collect()
}

fn hinge(v: f64) -> f64 {
    v.max(0.0)
}

/// Value-only variant for line searches.
fn penalty_value(
    problem: &Problem,
    active: &[&PairData],
    col: &[usize],
    zs: &[bool],
    x: &[f64],
) -> f64 {
    let mut total = 0.0;
    for (p, &z) in active.iter().zip(zs) {
        let (vx, vy) = pair_velocity(problem, p, col, x);
        let n_val = (vy * p.dx - vx * p.dy) * p.inv_p;
        let (c1, c2) = if z {
            (n_val, p.lines.lower(vx, vy) + LINE_MARGIN_KN)
        } else {
            (-n_val, -(p.lines.upper(vx, vy)) + LINE_MARGIN_KN)
        };
        total += hinge(c1).powi(2) + hinge(c2).powi(2);
    }
    total
}

/// Penalty value and gradient of the fixed-disjunct constraint system.
fn penalty_terms(
    problem: &Problem,
    active: &[&PairData],
    col: &[usize],
    zs: &[bool],
    x: &[f64],
    grad: &mut [f64],
) -> f64 {
    let mut total = 0.0;
    for (p, &z) in active.iter().zip(zs) {
        let (vx, vy) = pair_velocity(problem, p, col, x);
        // Constraint values normalized to knots; positive = violated.
        let n_val = (vy * p.dx - vx * p.dy) * p.inv_p;
        let (c1, g1x, g1y, c2, g2x, g2y) = if z {
            (
                n_val,
                -p.dy * p.inv_p,
                p.dx * p.inv_p,
                p.lines.lower(vx, vy) + LINE_MARGIN_KN,
                p.lines.gamma_l,
                -p.lines.phi_l,
            )
        } else {
            (
                -n_val,
                p.dy * p.inv_p,
                -p.dx * p.inv_p,
                -(p.lines.upper(vx, vy)) + LINE_MARGIN_KN,
                -p.lines.gamma_u,
                p.lines.phi_u,
            )
        };
        for (c, gx, gy) in [(c1, g1x, g1y), (c2, g2x, g2y)] {
            let h = hinge(c);
            if h == 0.0 {
                continue;
            }
            total += h * h;
            let scale = 2.0 * h;
            // Chain through v(q, theta) for each controlled endpoint.
            for (idx, sign) in [(p.i, 1.0), (p.j, -1.0)] {
                if col[idx] == usize::MAX {
                    continue;
                }
                let s = &problem.scenario.aircraft[idx];
                let q = x[col[idx]];
                let theta = x[col[idx] + 1];
                let a = s.heading + theta;
                let (ca, sa) = (a.cos(), a.sin());
                let dvx_dq = s.speed * ca;
                let dvy_dq = s.speed * sa;
                let dvx_dt = -q * s.speed * sa;
                let dvy_dt = q * s.speed * ca;
                grad[col[idx]] += scale * sign * (gx * dvx_dq + gy * dvy_dq);
                grad[col[idx] + 1] += scale * sign * (gx * dvx_dt + gy * dvy_dt);
            }
        }
    }
    total
}

/// Projected spectral-gradient descent (Barzilai-Borwein steps with a
/// backtracking safeguard) over an increasing penalty ladder; variables
/// clamp to the control bounds every step.
fn descend(
    problem: &Problem,
    active: &[&PairData],
    members: &[usize],
    col: &[usize],
    zs: &[bool],
    config: &SolverConfig,
    x: &mut [f64],
) {
    let bounds = &problem.scenario.bounds;
    let w = config.w;
    let m = members.len();
    let dim = x.len();
    let clamp = |x: &mut [f64]| {
        for k in 0..m {
            x[2 * k] = x[2 * k].clamp(bounds.q_lo, bounds.q_hi);
            x[2 * k + 1] = x[2 * k + 1].clamp(bounds.theta_lo, bounds.theta_hi);
        }
    };
    clamp(x);

    let mut grad = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut prev_x = vec![0.0; dim];
    let mut prev_grad = vec![0.0; dim];

    let mut mu = 1e-2;
    while mu <= 1e8 {
        let mut have_prev = false;
        let mut prev_value = f64::INFINITY;
        for _ in 0..200 {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let pen = penalty_terms(problem, active, col, zs, x, &mut grad);
            let mut value = mu * pen;
            for k in 0..m {
                value += w * x[2 * k + 1].powi(2) + (1.0 - w) * (1.0 - x[2 * k]).powi(2);
                grad[2 * k] *= mu;
                grad[2 * k + 1] *= mu;
                grad[2 * k] += -2.0 * (1.0 - w) * (1.0 - x[2 * k]);
                grad[2 * k + 1] += 2.0 * w * x[2 * k + 1];
            }
            if prev_value - value < 1e-14 * value.abs().max(1.0) && prev_value.is_finite() {
                break;
            }
            prev_value = value;
            let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
            if gnorm2 < 1e-22 {
                break;
            }
            // Spectral step from the last (x, grad) pair.
            let mut step = if have_prev {
                let mut sy = 0.0;
                let mut yy = 0.0;
                for k in 0..dim {
                    let s = x[k] - prev_x[k];
                    let y = grad[k] - prev_grad[k];
                    sy += s * y;
                    yy += y * y;
                }
                if sy > 0.0 && yy > 0.0 {
                    (sy / yy).clamp(1e-12, 1e2)
                } else {
                    1e-6
                }
            } else {
                1e-7
            };
            prev_x.copy_from_slice(x);
            prev_grad.copy_from_slice(&grad);
            have_prev = true;

            // Backtracking safeguard with projection.
            let mut improved = false;
            while step > 1e-16 {
                for k in 0..dim {
                    trial[k] = x[k] - step * grad[k];
                }
                clamp(&mut trial);
                let tpen = penalty_value(problem, active, col, zs, &trial);
                let mut tvalue = mu * tpen;
                for k in 0..m {
                    tvalue +=
                        w * trial[2 * k + 1].powi(2) + (1.0 - w) * (1.0 - trial[2 * k]).powi(2);
                }
                if tvalue < value {
                    let moved: f64 = x
                        .iter()
                        .zip(&trial)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    x.copy_from_slice(&trial);
                    improved = moved >= 1e-26;
                    break;
                }
                step *= 0.25;
            }
            if !improved {
                break;
            }
        }
        mu *= 10.0;
    }
}

/// Node of the best-first control-set enumeration.
struct Node {
    /// Fixed cost of the set plus the residual cover bound: a lower bound
    /// on the objective of any completion.
    key: f64,
    mask: u64,
    max: i64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.mask == other.mask
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap; ties resolved by the smaller mask so the
        // lexicographically earliest control set wins.
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.mask.cmp(&self.mask))
    }
}

/// Solve the avoidance stage.
///
/// `r` is the per-aircraft projected recovery penalty added to the fixed
/// control cost (zero on the first penalty-loop iteration).
pub fn solve_avoidance(
    scenario: &Scenario,
    config: &SolverConfig,
    r: &[f64],
) -> Result<AvoidanceSolution, SolveError> {
    let started = Instant::now();
    let deadline = started + std::time::Duration::from_secs_f64(config.time_limit.max(0.001));
    let n = scenario.len();
    assert_eq!(r.len(), n);
    assert!(n <= 64, "control-set enumeration is limited to 64 aircraft");
    assert!(r.iter().all(|&ri| ri >= 0.0), "penalties must be nonnegative");

    let p0 = geometry::initial_conflict_set(&scenario.aircraft, scenario.d)?;
    let weights: Vec<f64> = r.iter().map(|ri| config.lambda_f + ri).collect();
    let problem = Problem::new(scenario, scenario.d)?;

    if p0.is_empty() {
        let maneuvers: Vec<Maneuver> = (0..n).map(|_| Maneuver::nominal()).collect();
        let z = extract_z(&problem, &maneuvers);
        return Ok(AvoidanceSolution {
            maneuvers,
            z,
            objective: 0.0,
            lower_bound: 0.0,
            gap: 0.0,
            runtime: started.elapsed().as_secs_f64(),
            timed_out: false,
        });
    }

    let lower_bound = min_weight_cover(&p0, &weights, u64::MAX).unwrap_or(f64::INFINITY);

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    heap.push(Node {
        key: lower_bound,
        mask: 0,
        max: -1,
    });
    let mut incumbent: Option<(Vec<Maneuver>, f64)> = None;
    let mut timed_out = false;

    while let Some(node) = heap.pop() {
        if let Some((_, best_obj)) = &incumbent {
            if node.key >= *best_obj {
                break;
            }
        }
        if Instant::now() >= deadline {
            timed_out = true;
            break;
        }
        let fixed: f64 = (0..n)
            .filter(|i| node.mask & (1 << i) != 0)
            .map(|i| weights[i])
            .sum();
        let covers_all = p0
            .iter()
            .all(|&(u, v)| node.mask & (1 << u) != 0 || node.mask & (1 << v) != 0);
        if covers_all {
            if let Some((maneuvers, dev)) = solve_cover(&problem, node.mask, config, deadline) {
                let objective = fixed + dev;
                if incumbent
                    .as_ref()
                    .map_or(true, |(_, best)| objective < *best)
                {
                    incumbent = Some((maneuvers, objective));
                }
            }
        }
        // Canonical extension: add one vertex above the current maximum.
        for next in (node.max + 1) as usize..n {
            let mask = node.mask | (1 << next);
            let allowed: u64 = if next + 1 >= 64 {
                0
            } else {
                !((1u64 << (next + 1)) - 1)
            };
            let uncovered: Vec<(usize, usize)> = p0
                .iter()
                .copied()
                .filter(|&(u, v)| mask & (1 << u) == 0 && mask & (1 << v) == 0)
                .collect();
            let Some(residual) = min_weight_cover(&uncovered, &weights, allowed) else {
                continue;
            };
            let child_fixed = fixed + weights[next];
            heap.push(Node {
                key: child_fixed + residual,
                mask,
                max: next as i64,
            });
        }
    }

    match incumbent {
        Some((maneuvers, objective)) => {
            let z = extract_z(&problem, &maneuvers);
            let gap = ((objective - lower_bound) / objective.max(1e-9)).max(0.0);
            Ok(AvoidanceSolution {
                maneuvers,
                z,
                objective,
                lower_bound,
                gap,
                runtime: started.elapsed().as_secs_f64(),
                timed_out,
            })
        }
        None if timed_out => Err(SolveError::TimeLimit),
        None => Err(SolveError::Infeasible),
    }
}

/// Re-derive the active disjunct per pair from the final maneuvers (the
/// less violated branch; for separated pairs at least one is satisfied
/// outside the boundary band).
fn extract_z(problem: &Problem, maneuvers: &[Maneuver]) -> Vec<bool> {
    problem
        .pairs
        .iter()
        .map(|p| {
            let (vx, vy) = geometry::relative_velocity(
                &problem.scenario.aircraft[p.i],
                &problem.scenario.aircraft[p.j],
                &maneuvers[p.i],
                &maneuvers[p.j],
            );
            let n_val = (vy * p.dx - vx * p.dy) * p.inv_p;
            let v1 = hinge(n_val).powi(2) + hinge(p.lines.lower(vx, vy)).powi(2);
            let v0 = hinge(-n_val).powi(2) + hinge(-p.lines.upper(vx, vy)).powi(2);
            v1 <= v0
        })
        .collect()
}

/// Re-optimize the continuous maneuvers of `base`'s controlled set against
/// an inflated separation norm (`kappa` times the scenario norm, capped
/// below each pair's initial distance).
///
/// The result, when feasible, clears every pair by a real margin instead of
/// grazing the norm, which typically unlocks earlier recovery times. The
/// caller re-certifies against the true norm via [`rescore_solution`].
pub fn margin_variant(
    scenario: &Scenario,
    base: &AvoidanceSolution,
    config: &SolverConfig,
    kappa: f64,
) -> Option<Vec<Maneuver>> {
    assert!(kappa >= 1.0);
    let problem = Problem::new(scenario, scenario.d * kappa).ok()?;
    let cover: u64 = base
        .maneuvers
        .iter()
        .enumerate()
        .filter(|(_, m)| m.controlled)
        .fold(0u64, |acc, (i, _)| acc | (1 << i));
    let deadline = Instant::now() + std::time::Duration::from_secs_f64(config.time_limit);
    let (maneuvers, _) = solve_cover(&problem, cover, config, deadline)?;
    Some(maneuvers)
}

/// Build a solution record for externally supplied maneuvers: certifies
/// exact pairwise separation, the control coupling and the initial-conflict
/// cuts, then rescores the objective against `base`'s lower bound.
pub fn rescore_solution(
    scenario: &Scenario,
    maneuvers: Vec<Maneuver>,
    base: &AvoidanceSolution,
    config: &SolverConfig,
    r: &[f64],
) -> Result<AvoidanceSolution, SolveError> {
    let problem = Problem::new(scenario, scenario.d)?;
    for (m, state) in maneuvers.iter().zip(&scenario.aircraft) {
        if !m.is_valid(&scenario.bounds) {
            return Err(SolveError::Geometry(GeometryError::InvalidAircraft {
                id: state.id.clone(),
                reason: "maneuver violates the control bounds or coupling",
            }));
        }
    }
    let p0 = geometry::initial_conflict_set(&scenario.aircraft, scenario.d)?;
    let cut_ok = p0
        .iter()
        .all(|&(u, v)| maneuvers[u].controlled || maneuvers[v].controlled);
    if !cut_ok || !problem.certify(&maneuvers) {
        return Err(SolveError::Infeasible);
    }
    let objective = avoidance_objective(&maneuvers, config.w, config.lambda_f, r);
    let z = extract_z(&problem, &maneuvers);
    let gap = ((objective - base.lower_bound) / objective.max(1e-9)).max(0.0);
    Ok(AvoidanceSolution {
        maneuvers,
        z,
        objective,
        lower_bound: base.lower_bound,
        gap,
        runtime: base.runtime,
        timed_out: base.timed_out,
    })
}

/// Exhaustively certified variant used by small-instance quality tests:
/// solves every control set and every disjunct start, returning the best
/// feasible objective found. Exponential; callers keep `n` small.
pub fn exhaustive_avoidance_objective(
    scenario: &Scenario,
    config: &SolverConfig,
    r: &[f64],
) -> Option<f64> {
    let n = scenario.len();
    let p0 = geometry::initial_conflict_set(&scenario.aircraft, scenario.d).ok()?;
    let problem = Problem::new(scenario, scenario.d).ok()?;
    let weights: Vec<f64> = r.iter().map(|ri| config.lambda_f + ri).collect();
    let deadline = Instant::now() + std::time::Duration::from_secs(3600);
    let mut best: Option<f64> = None;
    for mask in 0..(1u64 << n) {
        let covers = p0
            .iter()
            .all(|&(u, v)| mask & (1 << u) != 0 || mask & (1 << v) != 0);
        if !covers {
            continue;
        }
        let fixed: f64 = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| weights[i])
            .sum();
        if let Some((_, dev)) = solve_cover(&problem, mask, config, deadline) {
            let obj = fixed + dev;
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ControlBounds;
    use crate::scenario::generate_cp;
    use std::f64::consts::PI;

    #[test]
    fn objective_examples() {
        let nominal = vec![Maneuver::nominal(); 2];
        assert_eq!(avoidance_objective(&nominal, 0.5, 1.0, &[0.0, 0.0]), 0.0);

        let one = vec![Maneuver::controlled(0.94, 0.0)];
        let v = avoidance_objective(&one, 0.5, 1.0, &[0.0]);
        assert!((v - 1.0018).abs() < 1e-9);

        // A positive penalty on a controlled aircraft adds exactly r.
        let with_r = avoidance_objective(&one, 0.5, 1.0, &[0.7]);
        assert!((with_r - (v + 0.7)).abs() < 1e-12);
    }

    #[test]
    fn vertex_cover_examples() {
        assert_eq!(vertex_cover_lower_bound(&[], 1.0, &[0.0; 4]), 0.0);
        // Clique on n vertices needs n - 1.
        for n in 2..=8 {
            let edges: Vec<(usize, usize)> = crate::pairs(n).collect();
            let r = vec![0.0; n];
            let lb = vertex_cover_lower_bound(&edges, 1.0, &r);
            assert!((lb - (n as f64 - 1.0)).abs() < 1e-12, "K_{n}: {lb}");
        }
        // Single edge with weights (1, 2) picks the cheaper endpoint.
        let lb = vertex_cover_lower_bound(&[(0, 1)], 1.0, &[0.0, 1.0]);
        assert!((lb - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conflict_free_scenario_is_all_nominal() {
        let a = crate::geometry::AircraftState::new("a", 0.0, 0.0, 0.0, 500.0, 100.0, 0.0).unwrap();
        let b = crate::geometry::AircraftState::new("b", 0.0, 20.0, 0.0, 500.0, 100.0, 20.0).unwrap();
        let s = Scenario {
            label: "free".into(),
            aircraft: vec![a, b],
            d: 5.0,
            bounds: ControlBounds::standard(),
        };
        let sol = solve_avoidance(&s, &SolverConfig::default(), &[0.0, 0.0]).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert_eq!(sol.gap, 0.0);
        assert_eq!(sol.controlled_count(), 0);
    }

    #[test]
    fn head_on_pair_resolves_with_cut_satisfied() {
        let a = crate::geometry::AircraftState::new("a", -100.0, 0.0, 0.0, 500.0, 100.0, 0.0)
            .unwrap();
        let b = crate::geometry::AircraftState::new("b", 100.0, 0.0, PI, 500.0, -100.0, 0.0)
            .unwrap();
        let s = Scenario {
            label: "head-on".into(),
            aircraft: vec![a, b],
            d: 5.0,
            bounds: ControlBounds::standard(),
        };
        let config = SolverConfig::default();
        let sol = solve_avoidance(&s, &config, &[0.0, 0.0]).unwrap();
        let f: usize = sol.controlled_count();
        assert!(f >= 1, "cut f_i + f_j >= 1 must hold");
        // Certified separation.
        let (vx, vy) = crate::geometry::relative_velocity(
            &s.aircraft[0],
            &s.aircraft[1],
            &sol.maneuvers[0],
            &sol.maneuvers[1],
        );
        assert!(crate::geometry::is_separated(-200.0, 0.0, vx, vy, 5.0).unwrap());
        // Exhaustive over the three covers: our objective within 5%.
        let oracle = exhaustive_avoidance_objective(&s, &config, &[0.0, 0.0]).unwrap();
        assert!(sol.objective <= 1.05 * oracle + 1e-9);
    }

    #[test]
    fn cp4_controls_three_aircraft() {
        let s = generate_cp(4, 100.0, 500.0).unwrap();
        let config = SolverConfig::default();
        let sol = solve_avoidance(&s, &config, &[0.0; 4]).unwrap();
        assert_eq!(sol.controlled_count(), 3, "CP-4 needs n - 1 controlled");
        assert!(sol.objective >= 3.0 && sol.objective < 3.1, "{}", sol.objective);
        assert!(sol.gap >= 0.0 && sol.gap < 0.05);
        for m in &sol.maneuvers {
            assert!(m.is_valid(&s.bounds));
        }
    }

    #[test]
    fn enlarging_bounds_does_not_hurt() {
        let mut narrow = generate_cp(4, 100.0, 500.0).unwrap();
        narrow.bounds = ControlBounds::new(0.97, 1.01, -0.2, 0.2);
        let mut wide = narrow.clone();
        wide.bounds = ControlBounds::standard();
        let config = SolverConfig::default();
        let o1 = solve_avoidance(&narrow, &config, &[0.0; 4]).unwrap().objective;
        let o2 = solve_avoidance(&wide, &config, &[0.0; 4]).unwrap().objective;
        assert!(o2 <= o1 + 1e-6, "wide {o2} vs narrow {o1}");
    }

    #[test]
    fn penalties_steer_cover_choice() {
        // Head-on pair: with a large penalty on aircraft 0, the solver
        // controls aircraft 1 instead.
        let a = crate::geometry::AircraftState::new("a", -100.0, 0.0, 0.0, 500.0, 100.0, 0.0)
            .unwrap();
        let b = crate::geometry::AircraftState::new("b", 100.0, 0.0, PI, 500.0, -100.0, 0.0)
            .unwrap();
        let s = Scenario {
            label: "head-on".into(),
            aircraft: vec![a, b],
            d: 5.0,
            bounds: ControlBounds::standard(),
        };
        let config = SolverConfig::default();
        let sol = solve_avoidance(&s, &config, &[5.0, 0.0]).unwrap();
        assert!(!sol.maneuvers[0].controlled || sol.maneuvers[1].controlled);
        assert!(sol.maneuvers[1].controlled);
    }
}
