//! Benchmark instance generation and scenario/solution file I/O.
//!
//! Two benchmark families are provided: the circle problem (CP), with
//! aircraft uniformly spaced on a circle all heading to its centre, and the
//! random circle problem (RCP), with randomized angles, speeds and slightly
//! off-centre headings. Scenario and solution files are JSON; angles at the
//! scenario-file boundary are degrees, all distances NM, speeds knots.

use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{self, AircraftState, ControlBounds, GeometryError};

/// Default horizontal separation norm (NM).
pub const DEFAULT_D: f64 = 5.0;

#[derive(Debug)]
pub enum ScenarioError {
    /// Generated or loaded aircraft come closer than the separation norm.
    TooDense { distance: f64, d: f64 },
    /// Malformed scenario or solution file.
    Parse(String),
    Io(std::io::Error),
    Geometry(GeometryError),
    DuplicateId(String),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::TooDense { distance, d } => write!(
                f,
                "aircraft too dense: initial distance {distance:.4} NM below the norm {d} NM"
            ),
            ScenarioError::Parse(msg) => write!(f, "parse error: {msg}"),
            ScenarioError::Io(e) => write!(f, "io error: {e}"),
            ScenarioError::Geometry(e) => write!(f, "{e}"),
            ScenarioError::DuplicateId(id) => write!(f, "duplicate aircraft id `{id}`"),
        }
    }
}

impl std::error::Error for ScenarioError {}

impl From<std::io::Error> for ScenarioError {
    fn from(e: std::io::Error) -> Self {
        ScenarioError::Io(e)
    }
}

impl From<GeometryError> for ScenarioError {
    fn from(e: GeometryError) -> Self {
        ScenarioError::Geometry(e)
    }
}

/// A conflict-resolution instance: aircraft, separation norm and control
/// bounds.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub aircraft: Vec<AircraftState>,
    /// Horizontal separation norm (NM).
    pub d: f64,
    pub bounds: ControlBounds,
}

impl Scenario {
    /// Validate pairwise initial separation and id uniqueness.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut ids: Vec<&str> = self.aircraft.iter().map(|a| a.id.as_str()).collect();
        ids.sort_unstable();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                return Err(ScenarioError::DuplicateId(w[0].to_string()));
            }
        }
        for (i, j) in crate::pairs(self.aircraft.len()) {
            let a = &self.aircraft[i];
            let b = &self.aircraft[j];
            let dist = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
            if dist < self.d {
                return Err(ScenarioError::TooDense {
                    distance: dist,
                    d: self.d,
                });
            }
        }
        Ok(())
    }

    /// Pairs in conflict under nominal motion.
    pub fn initial_conflicts(&self) -> Result<Vec<(usize, usize)>, GeometryError> {
        geometry::initial_conflict_set(&self.aircraft, self.d)
    }

    pub fn len(&self) -> usize {
        self.aircraft.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aircraft.is_empty()
    }
}

/// Solver configuration shared by both stages and the penalty loop.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    /// Trade-off between heading (`w`) and speed (`1 - w`) deviation.
    pub w: f64,
    /// Fixed cost of controlling an aircraft.
    pub lambda_f: f64,
    /// Weight of the squared recovery time in the total cost.
    pub lambda_t: f64,
    /// Number of recovery periods beyond period 0.
    pub periods: usize,
    /// Period length (hours).
    pub step: f64,
    /// Convergence tolerance on the total-cost change.
    pub threshold: f64,
    /// Interpret `threshold` relative to the previous total cost.
    pub relative_threshold: bool,
    /// Per-stage time limit (seconds).
    pub time_limit: f64,
    pub seed: u64,
    pub max_iter: usize,
    /// Multistart count for the continuous avoidance subproblem.
    pub starts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            w: 0.5,
            lambda_f: 1.0,
            lambda_t: 0.25,
            periods: 15,
            step: 2.0 / 60.0,
            threshold: 0.05,
            relative_threshold: true,
            time_limit: 300.0,
            seed: 0,
            max_iter: 10,
            starts: 16,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.periods < 1 || self.step <= 0.0 || self.threshold <= 0.0 {
            return Err(ScenarioError::Parse(
                "config requires periods >= 1, step > 0 and threshold > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Circle problem: `n` aircraft uniformly spaced on a circle of `radius`
/// NM, all heading to the centre at the same `speed`, targets antipodal.
pub fn generate_cp(n: usize, radius: f64, speed: f64) -> Result<Scenario, ScenarioError> {
    assert!(n >= 2, "a circle problem needs at least two aircraft");
    let mut aircraft = Vec::with_capacity(n);
    for k in 0..n {
        let angle = TAU * k as f64 / n as f64;
        let (x, y) = (radius * angle.cos(), radius * angle.sin());
        let heading = (angle + std::f64::consts::PI).rem_euclid(TAU);
        aircraft.push(AircraftState::new(
            format!("AC{k:02}"),
            x,
            y,
            heading,
            speed,
            -x,
            -y,
        )?);
    }
    let scenario = Scenario {
        label: format!("CP-{n}"),
        aircraft,
        d: DEFAULT_D,
        bounds: ControlBounds::standard(),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Random circle problem: random circle angles (rejection-sampled to keep
/// pairwise distances above the norm), headings towards a random point
/// within `jitter` NM of the centre, speeds uniform in `speed_range`,
/// targets `2 * radius` along the heading. Deterministic in `seed`.
pub fn generate_rcp(
    n: usize,
    radius: f64,
    seed: u64,
    speed_range: (f64, f64),
    jitter: f64,
) -> Result<Scenario, ScenarioError> {
    assert!(n >= 2, "a random circle problem needs at least two aircraft");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = DEFAULT_D;
    let mut angles: Vec<f64> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while angles.len() < n {
        attempts += 1;
        if attempts > 10_000 {
            return Err(ScenarioError::TooDense { distance: 0.0, d });
        }
        let a = rng.gen_range(0.0..TAU);
        let ok = angles.iter().all(|&b| {
            let chord = 2.0 * radius * ((a - b) / 2.0).sin().abs();
            chord >= d
        });
        if ok {
            angles.push(a);
        }
    }
    let mut aircraft = Vec::with_capacity(n);
    for (k, &angle) in angles.iter().enumerate() {
        let (x, y) = (radius * angle.cos(), radius * angle.sin());
        // Aim point uniform in the jitter disk around the centre.
        let r = jitter * rng.gen_range(0.0f64..=1.0).sqrt();
        let phi = rng.gen_range(0.0..TAU);
        let (ax, ay) = (r * phi.cos(), r * phi.sin());
        let heading = (ay - y).atan2(ax - x).rem_euclid(TAU);
        let speed = rng.gen_range(speed_range.0..=speed_range.1);
        let target_x = x + 2.0 * radius * heading.cos();
        let target_y = y + 2.0 * radius * heading.sin();
        aircraft.push(AircraftState::new(
            format!("AC{k:02}"),
            x,
            y,
            heading,
            speed,
            target_x,
            target_y,
        )?);
    }
    let scenario = Scenario {
        label: format!("RCP-{n}"),
        aircraft,
        d,
        bounds: ControlBounds::standard(),
    };
    scenario.validate()?;
    Ok(scenario)
}

// --- file formats -----------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct AircraftRecord {
    id: String,
    x_nm: f64,
    y_nm: f64,
    heading_deg: f64,
    speed_kn: f64,
    target_x_nm: f64,
    target_y_nm: f64,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ScenarioFile {
    label: String,
    #[serde(default = "default_d")]
    d_nm: f64,
    q_lo: f64,
    q_hi: f64,
    theta_lo_deg: f64,
    theta_hi_deg: f64,
    aircraft: Vec<AircraftRecord>,
}

fn default_d() -> f64 {
    DEFAULT_D
}

pub fn write_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let file = ScenarioFile {
        label: scenario.label.clone(),
        d_nm: scenario.d,
        q_lo: scenario.bounds.q_lo,
        q_hi: scenario.bounds.q_hi,
        theta_lo_deg: scenario.bounds.theta_lo.to_degrees(),
        theta_hi_deg: scenario.bounds.theta_hi.to_degrees(),
        aircraft: scenario
            .aircraft
            .iter()
            .map(|a| AircraftRecord {
                id: a.id.clone(),
                x_nm: a.x,
                y_nm: a.y,
                heading_deg: a.heading.to_degrees(),
                speed_kn: a.speed,
                target_x_nm: a.target_x,
                target_y_nm: a.target_y,
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let file: ScenarioFile =
        serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let mut aircraft = Vec::with_capacity(file.aircraft.len());
    for rec in &file.aircraft {
        aircraft.push(AircraftState::new(
            rec.id.clone(),
            rec.x_nm,
            rec.y_nm,
            rec.heading_deg.to_radians(),
            rec.speed_kn,
            rec.target_x_nm,
            rec.target_y_nm,
        )?);
    }
    let scenario = Scenario {
        label: file.label,
        aircraft,
        d: file.d_nm,
        bounds: ControlBounds::new(
            file.q_lo,
            file.q_hi,
            file.theta_lo_deg.to_radians(),
            file.theta_hi_deg.to_radians(),
        ),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Per-aircraft entry of a solution file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolutionAircraft {
    pub id: String,
    pub q: f64,
    pub theta_rad: f64,
    pub controlled: bool,
    pub recovery_period: usize,
    pub recovery_time_h: f64,
}

/// Per-aircraft cost bookkeeping mirrored into solution files.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LedgerRecord {
    pub id: String,
    pub a: f64,
    pub r: f64,
    pub tc: f64,
}

/// On-disk solution: maneuvers, recovery times and the cost ledger.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolutionFile {
    pub label: String,
    pub aircraft: Vec<SolutionAircraft>,
    pub per_aircraft_costs: Vec<LedgerRecord>,
    pub tc_totals: Vec<f64>,
    pub delta_tc: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub avoidance_objective: f64,
    pub avoidance_lower_bound: f64,
    pub avoidance_gap: f64,
    pub recovery_objective: f64,
    pub total_cost: f64,
}

pub fn write_solution(solution: &SolutionFile, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let text =
        serde_json::to_string_pretty(solution).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_solution(path: impl AsRef<Path>) -> Result<SolutionFile, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))
}
