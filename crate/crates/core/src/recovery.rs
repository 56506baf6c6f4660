//! Recovery-time assignment over a discrete period grid.
//!
//! After avoidance, every aircraft flies its (possibly deviated) ray until a
//! chosen recovery time `t_i = m * step`, then turns straight towards its
//! target at nominal speed. For each pair and each candidate period
//! combination the module classifies the three pairwise states (both
//! recovering, one avoiding / one recovering and its mirror) as conflicting
//! or not; the conflicting combinations form the forbidden sets that drive
//! both the exact branch-and-bound assignment and the greedy baseline.
//!
//! Recovery legs are treated as unbounded rays past the target, so the
//! checks are a conservative superset of the real exposure.

use std::fmt;
use std::time::Instant;

use crate::geometry::{self, AircraftState, GeometryError, Maneuver};
use crate::scenario::Scenario;
use crate::{pair_index, pairs};

#[derive(Debug, Clone, PartialEq)]
pub enum RecoveryError {
    /// No conflict-free period assignment exists within the grid.
    Infeasible,
    /// The search deadline expired before an optimal assignment was proven.
    TimeLimit,
    /// Turn point coincides with the target while the heading deviated.
    DegenerateRecovery { aircraft: String },
}

impl fmt::Display for RecoveryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecoveryError::Infeasible => {
                write!(f, "no conflict-free recovery assignment within the period grid")
            }
            RecoveryError::TimeLimit => write!(f, "recovery search hit the time limit"),
            RecoveryError::DegenerateRecovery { aircraft } => write!(
                f,
                "aircraft `{aircraft}`: turn point coincides with the target under a deviated heading"
            ),
        }
    }
}

impl std::error::Error for RecoveryError {}

/// One aircraft's recovery decision and the derived leg geometry.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RecoveryPlan {
    /// Period index `m`; the recovery time is `m * step`.
    pub period: usize,
    /// Recovery time (hours).
    pub time: f64,
    /// Turn point: position on the avoidance leg at the recovery time (NM).
    pub turn_x: f64,
    pub turn_y: f64,
    /// Recovery deviation angle (radians); zero when the heading was never
    /// deviated.
    pub theta_r: f64,
    /// Distance flown on the avoidance leg (NM).
    pub d_a: f64,
    /// Distance from the turn point to the target (NM).
    pub d_r: f64,
}

/// Leg geometry of a recovery at period `m` with period length `step`.
///
/// The avoidance position at `t = m * step` becomes the turn point; the
/// recovery leg runs straight from there to the target. `theta_r` follows
/// the sine rule in the triangle (start, turn point, target) and is only
/// defined for a deviated heading.
pub fn recovery_geometry(
    state: &AircraftState,
    m: &Maneuver,
    period: usize,
    step: f64,
) -> Result<RecoveryPlan, RecoveryError> {
    let time = period as f64 * step;
    let (tx, ty) = state.position_at(m, time);
    let d_a = m.q * state.speed * time;
    let d_r = ((state.target_x - tx).powi(2) + (state.target_y - ty).powi(2)).sqrt();
    let theta_r = if m.theta == 0.0 {
        0.0
    } else if d_r <= 1e-9 {
        return Err(RecoveryError::DegenerateRecovery {
            aircraft: state.id.clone(),
        });
    } else {
        (d_a * m.theta.sin() / d_r).clamp(-1.0, 1.0).asin()
    };
    Ok(RecoveryPlan {
        period,
        time,
        turn_x: tx,
        turn_y: ty,
        theta_r,
        d_a,
        d_r,
    })
}

/// Avoidance cost of one aircraft:
/// `(1 - w)(1 - q)^2 + w theta^2 + lambda_f f`.
pub fn avoidance_cost_a(m: &Maneuver, w: f64, lambda_f: f64) -> f64 {
    let f = if m.controlled { 1.0 } else { 0.0 };
    (1.0 - w) * (1.0 - m.q).powi(2) + w * m.theta * m.theta + lambda_f * f
}

/// Piecewise-linear trajectory: avoidance leg until the turn time, then a
/// straight recovery leg through the target and onward.
#[derive(Debug, Clone, Copy)]
pub struct FlightPath {
    pub start: (f64, f64),
    pub v_avoid: (f64, f64),
    pub turn_time: f64,
    pub turn_point: (f64, f64),
    pub v_recovery: (f64, f64),
    /// Absolute time at which the aircraft passes its target.
    pub target_time: f64,
}

impl FlightPath {
    pub fn new(state: &AircraftState, m: &Maneuver, turn_time: f64) -> Self {
        let v_avoid = state.velocity(m);
        let turn_point = state.position_at(m, turn_time);
        let (v_recovery, leg) = recovery_velocity(state, turn_point);
        FlightPath {
            start: (state.x, state.y),
            v_avoid,
            turn_time,
            turn_point,
            v_recovery,
            target_time: turn_time + leg / state.speed,
        }
    }

    pub fn position(&self, t: f64) -> (f64, f64) {
        if t <= self.turn_time {
            (
                self.start.0 + self.v_avoid.0 * t,
                self.start.1 + self.v_avoid.1 * t,
            )
        } else {
            let dt = t - self.turn_time;
            (
                self.turn_point.0 + self.v_recovery.0 * dt,
                self.turn_point.1 + self.v_recovery.1 * dt,
            )
        }
    }
}

/// Recovery-leg velocity: nominal speed directed from the turn point to the
/// target. Falls back to the nominal heading when the turn point already
/// sits on the target.
fn recovery_velocity(state: &AircraftState, turn: (f64, f64)) -> ((f64, f64), f64) {
    let ex = state.target_x - turn.0;
    let ey = state.target_y - turn.1;
    let leg = (ex * ex + ey * ey).sqrt();
    if leg <= 1e-9 {
        (
            (
                state.speed * state.heading.cos(),
                state.speed * state.heading.sin(),
            ),
            0.0,
        )
    } else {
        ((state.speed * ex / leg, state.speed * ey / leg), leg)
    }
}

/// Forbidden (conflicting) period combinations of one aircraft pair.
///
/// Index convention: entry `[m * (periods + 1) + n]` refers to aircraft `i`
/// of the pair recovering at period `m` and aircraft `j` at period `n`.
/// `forbidden_ar` is only meaningful for `m > n` (i still avoiding while j
/// recovers), `forbidden_ra` for `m < n`.
#[derive(Debug, Clone)]
pub struct PairOmega {
    pub forbidden_rr: Vec<bool>,
    pub forbidden_ar: Vec<bool>,
    pub forbidden_ra: Vec<bool>,
    /// Conflict start time (hours, absolute) of the avoiding-i /
    /// recovering-j state, indexed by j's period; `None` when that state is
    /// conflict-free.
    pub tau_ar: Vec<Option<f64>>,
    /// Mirror of `tau_ar`, indexed by i's period.
    pub tau_ra: Vec<Option<f64>>,
}

impl PairOmega {
    fn empty(grid: usize) -> Self {
        PairOmega {
            forbidden_rr: vec![false; grid * grid],
            forbidden_ar: vec![false; grid * grid],
            forbidden_ra: vec![false; grid * grid],
            tau_ar: vec![None; grid],
            tau_ra: vec![None; grid],
        }
    }
}

/// Forbidden sets for all pairs plus the per-aircraft recovery-leg geometry
/// for every candidate period.
#[derive(Debug, Clone)]
pub struct OmegaSets {
    /// Largest period index; valid periods are `0..=periods`.
    pub periods: usize,
    /// Period length (hours).
    pub step: f64,
    pub d: f64,
    /// `plans[i][m]` is aircraft `i`'s recovery plan for period `m`.
    pub plans: Vec<Vec<RecoveryPlan>>,
    /// Per-pair forbidden sets in the order of [`crate::pairs`].
    pub pairs: Vec<PairOmega>,
}

impl OmegaSets {
    pub fn aircraft_count(&self) -> usize {
        self.plans.len()
    }

    /// Whether aircraft `u` at period `mu` conflicts with aircraft `v` at
    /// period `mv` in any applicable pairwise state.
    pub fn conflicts(&self, u: usize, mu: usize, v: usize, mv: usize) -> bool {
        let n = self.aircraft_count();
        let grid = self.periods + 1;
        let (i, j, m, p) = if u < v { (u, v, mu, mv) } else { (v, u, mv, mu) };
        let o = &self.pairs[pair_index(i, j, n)];
        let idx = m * grid + p;
        if o.forbidden_rr[idx] {
            return true;
        }
        if m > p && o.forbidden_ar[idx] {
            return true;
        }
        if m < p && o.forbidden_ra[idx] {
            return true;
        }
        false
    }

    /// Whether aircraft `u` recovering at `mu` conflicts with aircraft `v`
    /// while `v` is still on its avoidance leg, for any later period `v`
    /// could still choose.
    pub fn conflicts_with_avoiding(&self, u: usize, mu: usize, v: usize) -> bool {
        let n = self.aircraft_count();
        let grid = self.periods + 1;
        let (i, j) = if u < v { (u, v) } else { (v, u) };
        let o = &self.pairs[pair_index(i, j, n)];
        for later in mu + 1..=self.periods {
            let forbidden = if u < v {
                o.forbidden_ra[mu * grid + later]
            } else {
                o.forbidden_ar[later * grid + mu]
            };
            if forbidden {
                return true;
            }
        }
        false
    }

    /// Assemble synthetic sets from raw forbidden matrices (used by
    /// randomized exactness studies; plans carry only period and time).
    pub fn from_forbidden(
        n: usize,
        periods: usize,
        step: f64,
        d: f64,
        forbidden: Vec<PairOmega>,
    ) -> Self {
        assert_eq!(forbidden.len(), n * (n - 1) / 2);
        let plans = (0..n)
            .map(|_| {
                (0..=periods)
                    .map(|m| RecoveryPlan {
                        period: m,
                        time: m as f64 * step,
                        turn_x: 0.0,
                        turn_y: 0.0,
                        theta_r: 0.0,
                        d_a: 0.0,
                        d_r: 0.0,
                    })
                    .collect()
            })
            .collect();
        OmegaSets {
            periods,
            step,
            d,
            plans,
            pairs: forbidden,
        }
    }
}

/// Raw forbidden-matrix builder used by tests; grid is `periods + 1`.
pub fn empty_pair_omega(periods: usize) -> PairOmega {
    PairOmega::empty(periods + 1)
}

/// Classify every pairwise state over the period grid.
///
/// For each pair `(i, j)` and candidate periods `(m, n)`:
/// - both recovering: place both aircraft at `t0 = max(m, n) * step` along
///   their piecewise paths and test ray separation of the recovery legs; a
///   conflict counts only if it starts before the instance horizon (latest
///   possible target passage plus margin), which is itself an upper bound
///   on the certification oracle's sampling window;
/// - `i` avoiding / `j` recovering (`m > n`): test `i`'s avoidance ray
///   against `j`'s recovery ray from `t0 = n * step`; if they conflict, the
///   combination is forbidden exactly when `i` turns after the conflict
///   start time `tau`;
/// - the mirrored state symmetrically.
pub fn build_omega_sets(
    scenario: &Scenario,
    maneuvers: &[Maneuver],
    periods: usize,
    step: f64,
) -> OmegaSets {
    let n = scenario.len();
    let grid = periods + 1;
    let d = scenario.d;
    let plans: Vec<Vec<RecoveryPlan>> = scenario
        .aircraft
        .iter()
        .zip(maneuvers)
        .map(|(state, m)| {
            (0..=periods)
                .map(|period| plan_unchecked(state, m, period, step))
                .collect()
        })
        .collect();
    let paths: Vec<Vec<FlightPath>> = scenario
        .aircraft
        .iter()
        .zip(maneuvers)
        .map(|(state, m)| {
            (0..=periods)
                .map(|period| FlightPath::new(state, m, period as f64 * step))
                .collect()
        })
        .collect();

    // Conflicts that begin after everyone is provably past its target are
    // phantom artifacts of the onward rays; the certification oracle never
    // samples them. The cap dominates the oracle horizon (latest possible
    // turn, plus 0.5 h against its 0.2 h margin).
    let horizon_cap = paths
        .iter()
        .map(|per_period| per_period[periods].target_time)
        .fold(0.0f64, f64::max)
        + 0.5;

    let mut sets = Vec::with_capacity(n * (n - 1) / 2);
    for (i, j) in pairs(n) {
        let mut o = PairOmega::empty(grid);
        // Mixed states first: they also provide tau.
        for nj in 0..=periods {
            o.tau_ar[nj] = mixed_conflict_start(
                &paths[i][periods], // i still avoiding: any path shares the avoidance ray
                &paths[j][nj],
                nj as f64 * step,
                d,
            );
            o.tau_ra[nj] = mixed_conflict_start(
                &paths[j][periods],
                &paths[i][nj],
                nj as f64 * step,
                d,
            );
        }
        for m in 0..=periods {
            for nj in 0..=periods {
                let idx = m * grid + nj;
                if m > nj {
                    if let Some(tau) = o.tau_ar[nj] {
                        o.forbidden_ar[idx] = m as f64 * step > tau;
                    }
                }
                if m < nj {
                    if let Some(tau) = o.tau_ra[m] {
                        o.forbidden_ra[idx] = nj as f64 * step > tau;
                    }
                }
                // Both recovering from t0 = max(m, n) * step.
                let t0 = m.max(nj) as f64 * step;
                let (xi, yi) = paths[i][m].position(t0);
                let (xj, yj) = paths[j][nj].position(t0);
                let vx = paths[i][m].v_recovery.0 - paths[j][nj].v_recovery.0;
                let vy = paths[i][m].v_recovery.1 - paths[j][nj].v_recovery.1;
                o.forbidden_rr[idx] =
                    match ray_conflict_start(xi - xj, yi - yj, vx, vy, d) {
                        Some(tau) => t0 + tau < horizon_cap,
                        None => false,
                    };
            }
        }
        sets.push(o);
    }
    OmegaSets {
        periods,
        step,
        d,
        plans,
        pairs: sets,
    }
}

/// First time (relative to the ray origin) at which the pair dips below the
/// norm, or `None` when the rays stay separated. An initial violation
/// reports time zero.
fn ray_conflict_start(dx: f64, dy: f64, vx: f64, vy: f64, d: f64) -> Option<f64> {
    match geometry::is_separated(dx, dy, vx, vy, d) {
        Ok(true) => None,
        Ok(false) => {
            let a = vx * vx + vy * vy;
            let b = dx * vx + dy * vy;
            let c = dx * dx + dy * dy - d * d;
            let disc = (b * b - a * c).max(0.0);
            Some((-b - disc.sqrt()) / a)
        }
        Err(GeometryError::DegenerateGeometry { .. }) => Some(0.0),
        Err(_) => Some(0.0),
    }
}

/// Plan constructor that clamps instead of erroring on the degenerate
/// turn-at-target case (the bulk builder must classify every combination).
fn plan_unchecked(state: &AircraftState, m: &Maneuver, period: usize, step: f64) -> RecoveryPlan {
    let time = period as f64 * step;
    let (tx, ty) = state.position_at(m, time);
    let d_a = m.q * state.speed * time;
    let d_r = ((state.target_x - tx).powi(2) + (state.target_y - ty).powi(2)).sqrt();
    let theta_r = if m.theta == 0.0 || d_r <= 1e-9 {
        0.0
    } else {
        (d_a * m.theta.sin() / d_r).clamp(-1.0, 1.0).asin()
    };
    RecoveryPlan {
        period,
        time,
        turn_x: tx,
        turn_y: ty,
        theta_r,
        d_a,
        d_r,
    }
}

/// Conflict start time of the state "avoider vs recoverer turning at `t0`".
///
/// Returns `None` when the two rays stay separated for all `t >= t0`;
/// otherwise the absolute time at which the distance first reaches the
/// norm (the smaller root of the squared-distance quadratic).
fn mixed_conflict_start(avoider: &FlightPath, recoverer: &FlightPath, t0: f64, d: f64) -> Option<f64> {
    let (xa, ya) = (
        avoider.start.0 + avoider.v_avoid.0 * t0,
        avoider.start.1 + avoider.v_avoid.1 * t0,
    );
    let (xr, yr) = recoverer.turn_point;
    let dx = xa - xr;
    let dy = ya - yr;
    let vx = avoider.v_avoid.0 - recoverer.v_recovery.0;
    let vy = avoider.v_avoid.1 - recoverer.v_recovery.1;
    ray_conflict_start(dx, dy, vx, vy, d).map(|t| t0 + t)
}

/// A complete recovery assignment.
#[derive(Debug, Clone)]
pub struct RecoverySolution {
    pub plans: Vec<RecoveryPlan>,
    /// Per pair `(i, j)`: `t_i < t_j`.
    pub alpha: Vec<bool>,
    /// Per pair `(i, j)`: `t_i > t_j`.
    pub beta: Vec<bool>,
    /// `sum_i a_i (m_i * step)^2`.
    pub objective: f64,
    pub runtime: f64,
    pub timed_out: bool,
}

impl RecoverySolution {
    pub fn periods(&self) -> Vec<usize> {
        self.plans.iter().map(|p| p.period).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.plans.iter().map(|p| p.time).collect()
    }
}

fn assemble_solution(
    omega: &OmegaSets,
    assignment: &[usize],
    a: &[f64],
    started: Instant,
    timed_out: bool,
) -> RecoverySolution {
    let n = assignment.len();
    let plans: Vec<RecoveryPlan> = assignment
        .iter()
        .enumerate()
        .map(|(i, &m)| omega.plans[i][m].clone())
        .collect();
    let mut alpha = Vec::with_capacity(n * (n - 1) / 2);
    let mut beta = Vec::with_capacity(n * (n - 1) / 2);
    for (i, j) in pairs(n) {
        alpha.push(assignment[i] < assignment[j]);
        beta.push(assignment[i] > assignment[j]);
    }
    let objective = assignment
        .iter()
        .enumerate()
        .map(|(i, &m)| a[i] * (m as f64 * omega.step).powi(2))
        .sum();
    RecoverySolution {
        plans,
        alpha,
        beta,
        objective,
        runtime: started.elapsed().as_secs_f64(),
        timed_out,
    }
}

/// Globally optimal recovery assignment minimizing `sum_i a_i t_i^2`, with
/// the unweighted `sum_i t_i^2` as a secondary criterion among optima (so
/// zero-weight aircraft still recover as early as possible).
///
/// Depth-first branch and bound: aircraft ordered by `a` descending (ties
/// by index), periods tried in ascending order, domains forward-checked
/// against the forbidden sets, nodes pruned against the incumbent plus a
/// cheapest-remaining-period bound. The first optimum found under this
/// deterministic order wins any remaining tie.
pub fn solve_recovery_exact(
    omega: &OmegaSets,
    a: &[f64],
    deadline: Option<Instant>,
) -> Result<RecoverySolution, RecoveryError> {
    let started = Instant::now();
    let n = omega.aircraft_count();
    assert_eq!(a.len(), n);
    if n == 0 {
        return Ok(assemble_solution(omega, &[], a, started, false));
    }
    let grid = omega.periods + 1;
    let full: u64 = if grid >= 64 { u64::MAX } else { (1u64 << grid) - 1 };

    // A pair with no free combination at all dooms the search; fail fast
    // instead of proving it by exhaustion.
    for (i, j) in pairs(n) {
        let mut any_free = false;
        'combos: for m in 0..grid {
            for p in 0..grid {
                if !omega.conflicts(i, m, j, p) {
                    any_free = true;
                    break 'combos;
                }
            }
        }
        if !any_free {
            return Err(RecoveryError::Infeasible);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y].partial_cmp(&a[x]).unwrap().then(x.cmp(&y)));

    // cost[i][m] = a_i * (m * step)^2
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..grid)
                .map(|m| a[i] * (m as f64 * omega.step).powi(2))
                .collect()
        })
        .collect();

    struct Search<'s> {
        omega: &'s OmegaSets,
        order: Vec<usize>,
        cost: Vec<Vec<f64>>,
        step: f64,
        best_cost: f64,
        best_secondary: f64,
        tie_eps: f64,
        best: Option<Vec<usize>>,
        assignment: Vec<usize>,
        deadline: Option<Instant>,
        expired: bool,
    }

    impl Search<'_> {
        /// Cheapest completion of the aircraft at `order[pos..]` given the
        /// current domains; admissible since forward checking only shrinks
        /// them.
        fn lower_bound(&self, pos: usize, domains: &[u64]) -> f64 {
            (pos..self.order.len())
                .map(|k| {
                    let i = self.order[k];
                    let m = domains[i].trailing_zeros() as usize;
                    self.cost[i][m]
                })
                .sum()
        }

        /// Cheapest remaining secondary (unweighted) cost.
        fn secondary_lower_bound(&self, pos: usize, domains: &[u64]) -> f64 {
            (pos..self.order.len())
                .map(|k| {
                    let i = self.order[k];
                    let m = domains[i].trailing_zeros() as usize;
                    (m as f64 * self.step).powi(2)
                })
                .sum()
        }

        fn dfs(&mut self, pos: usize, domains: &[u64], partial: f64, partial_sec: f64) {
            if self.expired {
                return;
            }
            if let Some(dl) = self.deadline {
                if Instant::now() >= dl {
                    self.expired = true;
                    return;
                }
            }
            if pos == self.order.len() {
                if partial < self.best_cost - self.tie_eps {
                    self.best_cost = partial;
                    self.best_secondary = partial_sec;
                    self.best = Some(self.assignment.clone());
                } else if partial <= self.best_cost + self.tie_eps
                    && partial_sec < self.best_secondary - 1e-12
                {
                    self.best_cost = self.best_cost.min(partial);
                    self.best_secondary = partial_sec;
                    self.best = Some(self.assignment.clone());
                }
                return;
            }
            let i = self.order[pos];
            let rest_lb = self.lower_bound(pos + 1, domains);
            let rest_sec_lb = self.secondary_lower_bound(pos + 1, domains);
            let mut remaining = domains[i];
            while remaining != 0 {
                let m = remaining.trailing_zeros() as usize;
                remaining &= remaining - 1;
                let node_cost = partial + self.cost[i][m];
                let node_sec = partial_sec + (m as f64 * self.step).powi(2);
                if node_cost + rest_lb > self.best_cost + self.tie_eps {
                    // Period values ascend, so later values of this
                    // aircraft only cost more.
                    break;
                }
                // Inside the tie band the secondary criterion must still be
                // improvable; both terms grow with m, so break as well.
                if node_cost + rest_lb >= self.best_cost - self.tie_eps
                    && node_sec + rest_sec_lb >= self.best_secondary - 1e-12
                {
                    break;
                }
                let mut next = domains.to_vec();
                next[i] = 1u64 << m;
                let mut dead = false;
                for later in pos + 1..self.order.len() {
                    let v = self.order[later];
                    let mut dom = next[v];
                    let mut mask = dom;
                    while mask != 0 {
                        let mv = mask.trailing_zeros() as usize;
                        mask &= mask - 1;
                        if self.omega.conflicts(i, m, v, mv) {
                            dom &= !(1u64 << mv);
                        }
                    }
                    if dom == 0 {
                        dead = true;
                        break;
                    }
                    next[v] = dom;
                }
                if dead {
                    continue;
                }
                self.assignment[i] = m;
                self.dfs(pos + 1, &next, node_cost, node_sec);
            }
        }
    }

    let max_cost: f64 = (0..n).map(|i| cost[i][grid - 1]).sum();
    let mut search = Search {
        omega,
        order,
        cost,
        step: omega.step,
        best_cost: f64::INFINITY,
        best_secondary: f64::INFINITY,
        tie_eps: 1e-12 * (1.0 + max_cost),
        best: None,
        assignment: vec![0; n],
        deadline,
        expired: false,
    };
    let domains = vec![full; n];
    search.dfs(0, &domains, 0.0, 0.0);

    match (search.best, search.expired) {
        (Some(best), expired) => Ok(assemble_solution(omega, &best, a, started, expired)),
        (None, true) => Err(RecoveryError::TimeLimit),
        (None, false) => Err(RecoveryError::Infeasible),
    }
}

/// Greedy recovery baseline.
///
/// Sweeps periods from 0 upward; at each period, scans aircraft in
/// nonincreasing priority order and fixes an aircraft at the current period
/// when it is compatible with everything already fixed and with every
/// still-avoiding aircraft; the scan repeats until no further aircraft can
/// be fixed at this period.
pub fn solve_recovery_greedy(
    omega: &OmegaSets,
    a: &[f64],
    priorities: &[f64],
) -> Result<RecoverySolution, RecoveryError> {
    let started = Instant::now();
    let n = omega.aircraft_count();
    assert_eq!(a.len(), n);
    assert_eq!(priorities.len(), n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| priorities[y].partial_cmp(&priorities[x]).unwrap().then(x.cmp(&y)));

    let mut fixed: Vec<Option<usize>> = vec![None; n];
    for m in 0..=omega.periods {
        loop {
            let mut changed = false;
            for &u in &order {
                if fixed[u].is_some() {
                    continue;
                }
                let ok_fixed = (0..n).all(|v| match fixed[v] {
                    Some(mv) if v != u => !omega.conflicts(u, m, v, mv),
                    _ => true,
                });
                if !ok_fixed {
                    continue;
                }
                let ok_avoiding = (0..n)
                    .all(|v| v == u || fixed[v].is_some() || !omega.conflicts_with_avoiding(u, m, v));
                if !ok_avoiding {
                    continue;
                }
                fixed[u] = Some(m);
                changed = true;
            }
            if !changed {
                break;
            }
        }
    }
    if fixed.iter().any(|f| f.is_none()) {
        return Err(RecoveryError::Infeasible);
    }
    let assignment: Vec<usize> = fixed.into_iter().map(|f| f.unwrap()).collect();
    Ok(assemble_solution(omega, &assignment, a, started, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ControlBounds;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_6;

    fn straight_state(x: f64, y: f64, heading: f64, speed: f64, reach: f64) -> AircraftState {
        AircraftState::new(
            format!("s{x}-{y}"),
            x,
            y,
            heading,
            speed,
            x + reach * heading.cos(),
            y + reach * heading.sin(),
        )
        .unwrap()
    }

    #[test]
    fn recovery_geometry_straight_flight() {
        let s = straight_state(0.0, 0.0, 0.0, 500.0, 200.0);
        let plan = recovery_geometry(&s, &Maneuver::nominal(), 3, 0.1).unwrap();
        assert!((plan.d_a - 150.0).abs() < 1e-9);
        assert_eq!(plan.theta_r, 0.0);
        assert!((plan.turn_x - 150.0).abs() < 1e-9 && plan.turn_y.abs() < 1e-9);
    }

    #[test]
    fn recovery_geometry_sine_rule_example() {
        // d_a = 10 at theta = pi/6, target placed so d_r = 40:
        // theta_r = asin(10 * 0.5 / 40) = asin(0.125).
        let target_x = 10.0 * FRAC_PI_6.cos() + (1600.0f64 - 25.0).sqrt();
        let s = AircraftState::new("e", 0.0, 0.0, 0.0, 500.0, target_x, 0.0).unwrap();
        let m = Maneuver::controlled(1.0, FRAC_PI_6);
        let plan = recovery_geometry(&s, &m, 1, 0.02).unwrap();
        assert!((plan.d_a - 10.0).abs() < 1e-9);
        assert!((plan.d_r - 40.0).abs() < 1e-9);
        assert!((plan.theta_r - 0.125f64.asin()).abs() < 1e-9);
        assert!((plan.theta_r - 0.12533).abs() < 1e-4);
    }

    #[test]
    fn recovery_geometry_zero_time() {
        let s = straight_state(5.0, -3.0, 1.0, 480.0, 100.0);
        let plan = recovery_geometry(&s, &Maneuver::controlled(0.97, 0.2), 0, 0.05).unwrap();
        assert_eq!(plan.d_a, 0.0);
        assert_eq!(plan.theta_r, 0.0);
        assert!((plan.turn_x - 5.0).abs() < 1e-12 && (plan.turn_y + 3.0).abs() < 1e-12);
    }

    #[test]
    fn avoidance_cost_examples() {
        assert_eq!(avoidance_cost_a(&Maneuver::nominal(), 0.5, 1.0), 0.0);
        let m = Maneuver::controlled(1.0, FRAC_PI_6);
        let c = avoidance_cost_a(&m, 0.5, 1.0);
        assert!((c - (0.5 * FRAC_PI_6 * FRAC_PI_6 + 1.0)).abs() < 1e-12);
        assert!((c - 1.1371).abs() < 1e-4);
        // w = 0 isolates the speed term.
        let m = Maneuver::controlled(0.94, 0.3);
        assert!((avoidance_cost_a(&m, 0.0, 0.0) - (0.06f64).powi(2)).abs() < 1e-12);
    }

    fn parallel_scenario() -> (Scenario, Vec<Maneuver>) {
        let a = straight_state(0.0, 0.0, 0.0, 500.0, 200.0);
        let b = straight_state(0.0, 10.0, 0.0, 500.0, 200.0);
        (
            Scenario {
                label: "parallel".into(),
                aircraft: vec![a, b],
                d: 5.0,
                bounds: ControlBounds::standard(),
            },
            vec![Maneuver::nominal(), Maneuver::nominal()],
        )
    }

    #[test]
    fn parallel_recovery_legs_have_empty_forbidden_sets() {
        let (scenario, maneuvers) = parallel_scenario();
        let omega = build_omega_sets(&scenario, &maneuvers, 5, 0.1);
        let o = &omega.pairs[0];
        assert!(o.forbidden_rr.iter().all(|&b| !b));
        assert!(o.forbidden_ar.iter().all(|&b| !b));
        assert!(o.forbidden_ra.iter().all(|&b| !b));
    }

    fn symmetric_headon() -> (Scenario, Vec<Maneuver>) {
        // Both deviate left by 12 degrees; avoidance rays separate, but an
        // early turn re-creates the head-on geometry.
        let a = straight_state(-100.0, 0.0, 0.0, 500.0, 200.0);
        let b = straight_state(100.0, 0.0, std::f64::consts::PI, 500.0, 200.0);
        let theta = 12f64.to_radians();
        (
            Scenario {
                label: "head-on".into(),
                aircraft: vec![a, b],
                d: 5.0,
                bounds: ControlBounds::standard(),
            },
            vec![
                Maneuver::controlled(1.0, theta),
                Maneuver::controlled(1.0, theta),
            ],
        )
    }

    #[test]
    fn headon_recovery_forbids_early_simultaneous_turns() {
        let (scenario, maneuvers) = symmetric_headon();
        let omega = build_omega_sets(&scenario, &maneuvers, 15, 2.0 / 60.0);
        let grid = omega.periods + 1;
        let o = &omega.pairs[0];
        // Turning back immediately reproduces the head-on conflict.
        assert!(o.forbidden_rr[0]);
        // Late enough simultaneous turns are safe (the crossing lies behind).
        assert!(!o.forbidden_rr[(grid - 1) * grid + (grid - 1)]);
        // The forbidden diagonal is a prefix: conflicting below a threshold.
        let diag: Vec<bool> = (0..grid).map(|m| o.forbidden_rr[m * grid + m]).collect();
        let first_free = diag.iter().position(|&b| !b).unwrap();
        assert!(first_free > 0);
        assert!(diag[first_free..].iter().all(|&b| !b));
    }

    #[test]
    fn mixed_state_respects_tau() {
        let (scenario, maneuvers) = symmetric_headon();
        let omega = build_omega_sets(&scenario, &maneuvers, 15, 2.0 / 60.0);
        let grid = omega.periods + 1;
        let o = &omega.pairs[0];
        for nj in 0..grid {
            if let Some(tau) = o.tau_ar[nj] {
                for m in nj + 1..grid {
                    let expect = m as f64 * omega.step > tau;
                    assert_eq!(o.forbidden_ar[m * grid + nj], expect);
                }
            } else {
                for m in nj + 1..grid {
                    assert!(!o.forbidden_ar[m * grid + nj]);
                }
            }
        }
    }

    #[test]
    fn exact_all_free_assigns_period_zero() {
        let (scenario, maneuvers) = parallel_scenario();
        let omega = build_omega_sets(&scenario, &maneuvers, 5, 0.1);
        let sol = solve_recovery_exact(&omega, &[1.0, 1.0], None).unwrap();
        assert_eq!(sol.periods(), vec![0, 0]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn exact_single_forbidden_delays_one_aircraft() {
        let mut o = empty_pair_omega(5);
        o.forbidden_rr[0] = true; // (0, 0)
        let omega = OmegaSets::from_forbidden(2, 5, 0.1, 5.0, vec![o]);
        let sol = solve_recovery_exact(&omega, &[1.0, 1.0], None).unwrap();
        let mut p = sol.periods();
        p.sort_unstable();
        assert_eq!(p, vec![0, 1]);
        assert!((sol.objective - 1.0 * 0.1 * 0.1).abs() < 1e-12);
    }

    fn random_omega(rng: &mut ChaCha8Rng, n: usize, periods: usize, density: f64) -> OmegaSets {
        let grid = periods + 1;
        let mut sets = Vec::new();
        for _ in crate::pairs(n) {
            let mut o = empty_pair_omega(periods);
            for m in 0..grid {
                for p in 0..grid {
                    let idx = m * grid + p;
                    o.forbidden_rr[idx] = rng.gen_bool(density);
                    if m > p {
                        o.forbidden_ar[idx] = rng.gen_bool(density);
                    }
                    if m < p {
                        o.forbidden_ra[idx] = rng.gen_bool(density);
                    }
                }
            }
            sets.push(o);
        }
        OmegaSets::from_forbidden(n, periods, 0.1, 5.0, sets)
    }

    /// Exhaustive oracle: enumerate every assignment.
    fn exhaustive_optimum(omega: &OmegaSets, a: &[f64]) -> Option<f64> {
        let n = omega.aircraft_count();
        let grid = omega.periods + 1;
        let total = grid.pow(n as u32);
        let mut best: Option<f64> = None;
        for code in 0..total {
            let mut c = code;
            let mut assignment = vec![0usize; n];
            for slot in &mut assignment {
                *slot = c % grid;
                c /= grid;
            }
            let feasible = crate::pairs(n)
                .all(|(i, j)| !omega.conflicts(i, assignment[i], j, assignment[j]));
            if !feasible {
                continue;
            }
            let cost: f64 = assignment
                .iter()
                .enumerate()
                .map(|(i, &m)| a[i] * (m as f64 * omega.step).powi(2))
                .sum();
            best = Some(best.map_or(cost, |b: f64| b.min(cost)));
        }
        best
    }

    #[test]
    fn exact_matches_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..60 {
            let n = rng.gen_range(2..=4);
            let periods = rng.gen_range(1..=5);
            let omega = random_omega(&mut rng, n, periods, 0.25);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let brute = exhaustive_optimum(&omega, &a);
            let solved = solve_recovery_exact(&omega, &a, None);
            match brute {
                Some(expected) => {
                    let sol = solved.unwrap_or_else(|e| panic!("case {case}: {e}"));
                    assert!(
                        (sol.objective - expected).abs() < 1e-12,
                        "case {case}: {} vs {}",
                        sol.objective,
                        expected
                    );
                }
                None => assert!(matches!(solved, Err(RecoveryError::Infeasible))),
            }
        }
    }

    #[test]
    fn greedy_never_beats_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..60 {
            let n = rng.gen_range(2..=4);
            let periods = rng.gen_range(1..=5);
            let omega = random_omega(&mut rng, n, periods, 0.2);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
            let pri: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let exact = solve_recovery_exact(&omega, &a, None);
            let greedy = solve_recovery_greedy(&omega, &a, &pri);
            if let (Ok(e), Ok(g)) = (&exact, &greedy) {
                assert!(g.objective >= e.objective - 1e-12);
            }
            // Greedy feasibility implies exact feasibility.
            if greedy.is_ok() {
                assert!(exact.is_ok());
            }
        }
    }

    #[test]
    fn greedy_all_free_fixes_everyone_at_zero() {
        let (scenario, maneuvers) = parallel_scenario();
        let omega = build_omega_sets(&scenario, &maneuvers, 5, 0.1);
        let sol = solve_recovery_greedy(&omega, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(sol.periods(), vec![0, 0]);
    }

    #[test]
    fn alpha_beta_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let omega = random_omega(&mut rng, 4, 4, 0.15);
        let a = vec![1.0, 0.5, 0.25, 0.75];
        if let Ok(sol) = solve_recovery_exact(&omega, &a, None) {
            let p = sol.periods();
            for (k, (i, j)) in crate::pairs(4).enumerate() {
                assert_eq!(sol.alpha[k], p[i] < p[j]);
                assert_eq!(sol.beta[k], p[i] > p[j]);
                assert!(!(sol.alpha[k] && sol.beta[k]));
            }
        }
    }

    #[test]
    fn forbidden_monotonicity_of_exact_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let n = 3;
            let periods = 4;
            let base = random_omega(&mut rng, n, periods, 0.1);
            let mut tighter = base.clone();
            // Add a few more forbidden entries.
            for o in &mut tighter.pairs {
                for idx in 0..o.forbidden_rr.len() {
                    if rng.gen_bool(0.05) {
                        o.forbidden_rr[idx] = true;
                    }
                }
            }
            let a = vec![1.0, 1.0, 1.0];
            let b1 = exhaustive_optimum(&base, &a);
            let b2 = exhaustive_optimum(&tighter, &a);
            match (b1, b2) {
                (Some(x), Some(y)) => assert!(y >= x - 1e-12),
                (None, Some(_)) => panic!("tightening cannot create feasibility"),
                _ => {}
            }
        }
    }
}
