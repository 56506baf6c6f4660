//! Conflict-free 2D aircraft trajectory planning with explicit recovery.
//!
//! The library decomposes horizontal deconfliction into two coupled stages:
//!
//! 1. **Avoidance** — each aircraft may scale its speed (`q`) and deviate its
//!    heading (`theta`); an on/off variable marks which aircraft are
//!    controlled at all. The solver finds maneuvers under which every pair of
//!    aircraft stays separated by the horizontal norm `d` on their (infinite)
//!    post-maneuver rays.
//! 2. **Recovery** — every aircraft picks a discrete time at which it turns
//!    from its avoidance leg straight towards its target waypoint. Pairwise
//!    incompatibility sets over the discrete time grid keep the combined
//!    piecewise-linear trajectories conflict-free.
//!
//! A penalty loop alternates the two stages, projecting each aircraft's
//! realized recovery cost back into the avoidance objective so that later
//! iterations trade a little extra deviation for earlier recovery.
//!
//! Everything a solver claims is re-checked by an independent, sampling-based
//! simulation oracle ([`oracle`]); solver bookkeeping is never trusted for
//! feasibility.

pub mod avoidance;
pub mod geometry;
pub mod oracle;
pub mod penalty;
pub mod recovery;
pub mod scenario;

pub use avoidance::{solve_avoidance, AvoidanceSolution};
pub use geometry::{AircraftState, ControlBounds, Maneuver};
pub use penalty::{exact_naive, greedy_naive, run, CostLedger, PipelineSolution};
pub use recovery::{RecoveryPlan, RecoverySolution};
pub use scenario::{Scenario, SolverConfig};

/// Iterate ordered aircraft pairs `(i, j)` with `i < j`.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Index of pair `(i, j)`, `i < j`, in the order produced by [`pairs`].
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_index_matches_iteration_order() {
        for n in 0..8 {
            for (k, (i, j)) in pairs(n).enumerate() {
                assert_eq!(pair_index(i, j, n), k);
            }
        }
    }
}
