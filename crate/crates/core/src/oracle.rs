//! Independent certification of solutions.
//!
//! Nothing here shares code with the solvers' separation predicates: the
//! simulator advances every aircraft along its piecewise path and samples
//! pairwise distances on a fixed grid, and the brute-force pair minimizer
//! grid-scans the squared distance directly. Both are used as ground truth
//! by the test suites.

use crate::geometry::Maneuver;
use crate::recovery::FlightPath;
use crate::scenario::Scenario;

/// Result of a trajectory simulation.
#[derive(Debug, Clone)]
pub struct SimReport {
    /// Global minimum pairwise distance over the sampled horizon
    /// (infinite for fewer than two aircraft).
    pub min_distance: f64,
    /// Sample times at which some pair was closer than `d - tol`.
    pub violation_times: Vec<f64>,
}

impl SimReport {
    pub fn is_clean(&self) -> bool {
        self.violation_times.is_empty()
    }
}

/// Distance slack below the norm that counts as a violation (NM).
pub const VIOLATION_TOL: f64 = 1e-6;

/// Horizon covering the slowest aircraft's target passage plus margin.
pub fn default_horizon(scenario: &Scenario, maneuvers: &[Maneuver], turn_times: &[f64]) -> f64 {
    let mut horizon: f64 = 0.0;
    for ((state, m), &turn) in scenario.aircraft.iter().zip(maneuvers).zip(turn_times) {
        let path = FlightPath::new(state, m, turn);
        horizon = horizon.max(path.target_time);
    }
    horizon + 0.2
}

/// Sample the full piecewise trajectories every `dt` hours up to `horizon`
/// and report the minimum pairwise distance and every violation instant.
pub fn simulate(
    scenario: &Scenario,
    maneuvers: &[Maneuver],
    turn_times: &[f64],
    dt: f64,
    horizon: f64,
) -> SimReport {
    assert!(dt > 0.0, "simulation step must be positive");
    let n = scenario.len();
    let paths: Vec<FlightPath> = scenario
        .aircraft
        .iter()
        .zip(maneuvers)
        .zip(turn_times)
        .map(|((state, m), &turn)| FlightPath::new(state, m, turn))
        .collect();
    let mut min_distance = f64::INFINITY;
    let mut min_time = 0.0;
    let mut violation_times = Vec::new();
    let steps = (horizon / dt).ceil() as usize;
    let mut positions = vec![(0.0, 0.0); n];
    let mut sample = |t: f64| -> f64 {
        for (slot, path) in positions.iter_mut().zip(&paths) {
            *slot = path.position(t);
        }
        let mut worst = f64::INFINITY;
        for (i, j) in crate::pairs(n) {
            let (xi, yi) = positions[i];
            let (xj, yj) = positions[j];
            let dist = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
            worst = worst.min(dist);
        }
        worst
    };
    for k in 0..=steps {
        let t = k as f64 * dt;
        let worst = sample(t);
        if worst < min_distance {
            min_distance = worst;
            min_time = t;
        }
        if worst < scenario.d - VIOLATION_TOL {
            violation_times.push(t);
        }
    }
    // The coarse grid can overshoot a sharp quadratic minimum by up to
    // v * dt / 2; refine around the best sample so the reported minimum is
    // trustworthy to well under 1e-3 NM.
    let lo = (min_time - dt).max(0.0);
    let hi = (min_time + dt).min(horizon.max(min_time));
    let fine = 2000usize;
    for k in 0..=fine {
        let t = lo + (hi - lo) * k as f64 / fine as f64;
        min_distance = min_distance.min(sample(t));
    }
    SimReport {
        min_distance,
        violation_times,
    }
}

/// Grid-minimize the pairwise distance `|(dx, dy) + t (vx, vy)|` over
/// `[0, t_hi]` with one Newton polish step on the squared-distance
/// derivative (exact for the quadratic), clamped back to the interval.
pub fn brute_force_pair_min(
    dx: f64,
    dy: f64,
    vx: f64,
    vy: f64,
    t_hi: f64,
    steps: usize,
) -> (f64, f64) {
    let dist2 = |t: f64| -> f64 { (dx + vx * t).powi(2) + (dy + vy * t).powi(2) };
    let mut best_t = 0.0;
    let mut best = dist2(0.0);
    for k in 1..=steps {
        let t = t_hi * k as f64 / steps as f64;
        let v = dist2(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    // d/dt dist2 = 2 (v.v) t + 2 (p.v); one Newton step lands on the vertex.
    let a = vx * vx + vy * vy;
    if a > 0.0 {
        let t = (best_t - (a * best_t + dx * vx + dy * vy) / a).clamp(0.0, t_hi);
        let v = dist2(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    (best_t, best.sqrt())
}
