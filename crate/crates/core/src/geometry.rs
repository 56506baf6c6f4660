//! Exact 2D separation mathematics.
//!
//! All quantities use nautical miles, knots and hours; angles are radians in
//! math convention (measured from the +x axis). For a pair of aircraft the
//! module provides the closest-approach time, the quadratic separation
//! surrogate `g`, the two root lines of `g = 0` that bound the conflict
//! region in relative-velocity space, the disjunctive half-plane test built
//! on those lines, and sound interval bounds on the achievable relative
//! velocity.

use std::f64::consts::TAU;
use std::fmt;

/// Squared-speed threshold below which a relative velocity is treated as
/// zero (kn^2). Pairs with zero relative velocity keep a constant distance.
pub const EPS_V2: f64 = 1e-9;

/// Errors raised by pairwise geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    /// Aircraft violate the separation norm already at t = 0.
    DegenerateGeometry { distance: f64, d: f64 },
    /// Initial distance equals the separation norm; the two root lines of
    /// `g = 0` coincide and the conflict region is not well defined.
    TangentGeometry { distance: f64, d: f64 },
    /// An aircraft state violates a construction invariant.
    InvalidAircraft { id: String, reason: &'static str },
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::DegenerateGeometry { distance, d } => write!(
                f,
                "aircraft pair already closer than the separation norm at t=0 ({distance:.4} NM < {d} NM)"
            ),
            GeometryError::TangentGeometry { distance, d } => write!(
                f,
                "initial distance {distance:.4} NM is tangent to the separation norm {d} NM"
            ),
            GeometryError::InvalidAircraft { id, reason } => {
                write!(f, "invalid aircraft `{id}`: {reason}")
            }
        }
    }
}

impl std::error::Error for GeometryError {}

/// Initial state of one aircraft: position, heading, speed and the target
/// waypoint it must eventually reach.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AircraftState {
    pub id: String,
    /// Initial position (NM).
    pub x: f64,
    pub y: f64,
    /// Initial heading (radians, math convention, normalized to `[0, 2pi)`).
    pub heading: f64,
    /// Nominal speed (knots), strictly positive.
    pub speed: f64,
    /// Target waypoint (NM); must differ from the initial position.
    pub target_x: f64,
    pub target_y: f64,
}

impl AircraftState {
    pub fn new(
        id: impl Into<String>,
        x: f64,
        y: f64,
        heading: f64,
        speed: f64,
        target_x: f64,
        target_y: f64,
    ) -> Result<Self, GeometryError> {
        let id = id.into();
        if !(speed > 0.0) {
            return Err(GeometryError::InvalidAircraft {
                id,
                reason: "speed must be strictly positive",
            });
        }
        if !heading.is_finite() {
            return Err(GeometryError::InvalidAircraft {
                id,
                reason: "heading must be finite",
            });
        }
        if target_x == x && target_y == y {
            return Err(GeometryError::InvalidAircraft {
                id,
                reason: "target point must differ from the initial position",
            });
        }
        Ok(AircraftState {
            id,
            x,
            y,
            heading: heading.rem_euclid(TAU),
            speed,
            target_x,
            target_y,
        })
    }

    /// Velocity under a maneuver: `(q v cos(h + theta), q v sin(h + theta))`.
    pub fn velocity(&self, m: &Maneuver) -> (f64, f64) {
        let a = self.heading + m.theta;
        (m.q * self.speed * a.cos(), m.q * self.speed * a.sin())
    }

    /// Position at time `t` (hours) along the maneuvered ray.
    pub fn position_at(&self, m: &Maneuver, t: f64) -> (f64, f64) {
        let (vx, vy) = self.velocity(m);
        (self.x + vx * t, self.y + vy * t)
    }
}

/// One aircraft's avoidance decision: speed ratio, heading deviation and the
/// on/off control flag. An uncontrolled aircraft is exactly nominal.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Maneuver {
    pub q: f64,
    pub theta: f64,
    pub controlled: bool,
}

impl Maneuver {
    /// The nominal, uncontrolled maneuver (`q = 1`, `theta = 0`).
    pub fn nominal() -> Self {
        Maneuver {
            q: 1.0,
            theta: 0.0,
            controlled: false,
        }
    }

    pub fn controlled(q: f64, theta: f64) -> Self {
        Maneuver {
            q,
            theta,
            controlled: true,
        }
    }

    /// Control coupling and bound invariants: uncontrolled implies exactly
    /// nominal; controlled values lie within `bounds`.
    pub fn is_valid(&self, bounds: &ControlBounds) -> bool {
        if !self.controlled {
            return self.q == 1.0 && self.theta == 0.0;
        }
        self.q >= bounds.q_lo
            && self.q <= bounds.q_hi
            && self.theta >= bounds.theta_lo
            && self.theta <= bounds.theta_hi
    }
}

/// Bounds on the speed ratio and heading deviation of a controlled aircraft.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ControlBounds {
    pub q_lo: f64,
    pub q_hi: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl ControlBounds {
    pub fn new(q_lo: f64, q_hi: f64, theta_lo: f64, theta_hi: f64) -> Self {
        assert!(
            q_lo <= 1.0 && 1.0 <= q_hi && theta_lo <= 0.0 && 0.0 <= theta_hi,
            "control bounds must contain the nominal maneuver"
        );
        ControlBounds {
            q_lo,
            q_hi,
            theta_lo,
            theta_hi,
        }
    }

    /// Subliminal speed range [-6%, +3%] and heading range [-30deg, +30deg].
    pub fn standard() -> Self {
        ControlBounds::new(
            0.94,
            1.03,
            -std::f64::consts::FRAC_PI_6,
            std::f64::consts::FRAC_PI_6,
        )
    }
}

impl Default for ControlBounds {
    fn default() -> Self {
        ControlBounds::standard()
    }
}

/// Coefficients of the two root lines of `g = 0`, oriented so that the
/// conflict region is exactly
/// `{ (vx, vy) : vx*gamma_l - vy*phi_l >= 0  and  vx*gamma_u - vy*phi_u <= 0 }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictLines {
    pub gamma_l: f64,
    pub phi_l: f64,
    pub gamma_u: f64,
    pub phi_u: f64,
}

impl ConflictLines {
    /// Signed value of the lower line at `(vx, vy)`; `>= 0` inside the
    /// conflict region.
    pub fn lower(&self, vx: f64, vy: f64) -> f64 {
        vx * self.gamma_l - vy * self.phi_l
    }

    /// Signed value of the upper line at `(vx, vy)`; `<= 0` inside the
    /// conflict region.
    pub fn upper(&self, vx: f64, vy: f64) -> f64 {
        vx * self.gamma_u - vy * self.phi_u
    }

    /// Conflict-region membership test.
    pub fn in_conflict_region(&self, vx: f64, vy: f64) -> bool {
        self.lower(vx, vy) >= 0.0 && self.upper(vx, vy) <= 0.0
    }
}

/// Interval bounds on the achievable relative velocity of a pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityBox {
    pub vx_lo: f64,
    pub vx_hi: f64,
    pub vy_lo: f64,
    pub vy_hi: f64,
}

impl VelocityBox {
    pub fn contains(&self, vx: f64, vy: f64) -> bool {
        vx >= self.vx_lo && vx <= self.vx_hi && vy >= self.vy_lo && vy <= self.vy_hi
    }

    /// Box of the swapped pair (negation of both intervals).
    pub fn negated(&self) -> Self {
        VelocityBox {
            vx_lo: -self.vx_hi,
            vx_hi: -self.vx_lo,
            vy_lo: -self.vy_hi,
            vy_hi: -self.vy_lo,
        }
    }
}

/// Cached pairwise quantities: relative initial position, nominal relative
/// velocity, the oriented conflict-region lines and the relative-velocity
/// box under the active control bounds.
#[derive(Debug, Clone)]
pub struct PairGeometry {
    pub dx: f64,
    pub dy: f64,
    /// Nominal relative velocity (both aircraft uncontrolled).
    pub vx: f64,
    pub vy: f64,
    pub lines: ConflictLines,
    pub vbox: VelocityBox,
}

impl PairGeometry {
    pub fn new(
        i: &AircraftState,
        j: &AircraftState,
        bounds: &ControlBounds,
        d: f64,
    ) -> Result<Self, GeometryError> {
        let dx = i.x - j.x;
        let dy = i.y - j.y;
        let nominal = Maneuver::nominal();
        let (vx, vy) = relative_velocity(i, j, &nominal, &nominal);
        let lines = conflict_region_lines(dx, dy, d)?;
        let vbox = relative_velocity_box(i, j, bounds);
        Ok(PairGeometry {
            dx,
            dy,
            vx,
            vy,
            lines,
            vbox,
        })
    }
}

/// Relative velocity of aircraft `i` with respect to `j` under maneuvers.
pub fn relative_velocity(
    i: &AircraftState,
    j: &AircraftState,
    mi: &Maneuver,
    mj: &Maneuver,
) -> (f64, f64) {
    let (vix, viy) = i.velocity(mi);
    let (vjx, vjy) = j.velocity(mj);
    (vix - vjx, viy - vjy)
}

/// Closest-approach time and the quadratic separation surrogate of a pair.
///
/// `t_min` is `None` when the relative speed is (numerically) zero: the pair
/// keeps a constant distance and must be treated as separated; `g` carries
/// no meaning in that case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationMetrics {
    pub t_min: Option<f64>,
    pub g: f64,
}

/// Compute the closest-approach time and `g` for relative state
/// `(dx, dy, vx, vy)` and separation norm `d`.
///
/// `g = vy^2 (dx^2 - d^2) + vx^2 (dy^2 - d^2) - 2 dx dy vx vy`, which equals
/// the squared-distance margin at the closest approach scaled by the squared
/// relative speed; `g >= 0` or `t_min <= 0` means the pair never comes
/// closer than `d` for `t >= 0`.
pub fn separation_metrics(
    dx: f64,
    dy: f64,
    vx: f64,
    vy: f64,
    d: f64,
) -> Result<SeparationMetrics, GeometryError> {
    let dist2 = dx * dx + dy * dy;
    if dist2 < d * d {
        return Err(GeometryError::DegenerateGeometry {
            distance: dist2.sqrt(),
            d,
        });
    }
    let v2 = vx * vx + vy * vy;
    let g = vy * vy * (dx * dx - d * d) + vx * vx * (dy * dy - d * d) - 2.0 * dx * dy * vx * vy;
    if v2 < EPS_V2 {
        return Ok(SeparationMetrics { t_min: None, g });
    }
    let t_min = -(dx * vx + dy * vy) / v2;
    Ok(SeparationMetrics {
        t_min: Some(t_min),
        g,
    })
}

/// Whether the pair stays separated by at least `d` for all `t >= 0` along
/// the rays defined by `(dx, dy)` + t `(vx, vy)`.
pub fn is_separated(dx: f64, dy: f64, vx: f64, vy: f64, d: f64) -> Result<bool, GeometryError> {
    let m = separation_metrics(dx, dy, vx, vy, d)?;
    Ok(match m.t_min {
        None => true,
        Some(t_min) => m.g >= 0.0 || t_min <= 0.0,
    })
}

/// Relative tolerance band around `g = 0` inside which boundary
/// classification is ambiguous.
pub fn g_tolerance(dx: f64, dy: f64, vx: f64, vy: f64) -> f64 {
    let p = dx.abs().max(dy.abs()).max(1.0);
    let v = vx.abs().max(vy.abs()).max(1.0);
    1e-6 * p * p * v * v
}

/// Build the two oriented root lines of `g = 0` for relative position
/// `(dx, dy)` and norm `d`.
///
/// The root lines bound the cone of relative velocities that steer the pair
/// within distance `d`. Each line has two algebraic forms (from solving
/// `g = 0` for `vx` or for `vy`); the better-conditioned one is kept. Role
/// (lower/upper) and sign are then fixed numerically from dot and cross
/// products against the cone axis so that the conjunction in
/// [`ConflictLines`] matches the probed sign of `g` and `t_min`.
pub fn conflict_region_lines(dx: f64, dy: f64, d: f64) -> Result<ConflictLines, GeometryError> {
    let dist2 = dx * dx + dy * dy;
    if dist2 <= d * d {
        return Err(GeometryError::TangentGeometry {
            distance: dist2.sqrt(),
            d,
        });
    }
    let beta = (dist2 - d * d).sqrt();
    let dist = dist2.sqrt();
    // Cone axis: unit vector from j towards i reversed, i.e. the closing
    // direction in relative-velocity space.
    let wx = -dx / dist;
    let wy = -dy / dist;

    let mut role_l: Option<(f64, f64)> = None; // unit normal (a, b) of s(v) = a vx + b vy
    let mut role_u: Option<(f64, f64)> = None;
    for s in [1.0, -1.0] {
        // Two parallel normal representations of the same root line.
        let na = (dy * dy - d * d, -(dx * dy + s * d * beta));
        let nb = (-(dx * dy - s * d * beta), dx * dx - d * d);
        let n = if na.0 * na.0 + na.1 * na.1 >= nb.0 * nb.0 + nb.1 * nb.1 {
            na
        } else {
            nb
        };
        let norm = (n.0 * n.0 + n.1 * n.1).sqrt();
        // Line direction, oriented to point into the half-plane of the axis.
        let mut tx = -n.1 / norm;
        let mut ty = n.0 / norm;
        if tx * wx + ty * wy < 0.0 {
            tx = -tx;
            ty = -ty;
        }
        // cross(p, t) = -d (scaled) on the lower boundary, +d on the upper.
        let cross = ty * dx - tx * dy;
        let normal = (-ty, tx);
        if cross < 0.0 {
            role_l = Some(normal);
        } else {
            role_u = Some(normal);
        }
    }
    let (la, lb) = role_l.ok_or(GeometryError::TangentGeometry {
        distance: dist,
        d,
    })?;
    let (ua, ub) = role_u.ok_or(GeometryError::TangentGeometry {
        distance: dist,
        d,
    })?;
    // Sign so that the cone axis satisfies lower >= 0 and upper <= 0.
    let sl = if la * wx + lb * wy >= 0.0 { 1.0 } else { -1.0 };
    let su = if ua * wx + ub * wy <= 0.0 { 1.0 } else { -1.0 };
    Ok(ConflictLines {
        gamma_l: sl * la,
        phi_l: -sl * lb,
        gamma_u: su * ua,
        phi_u: -su * ub,
    })
}

/// Evaluate the `z`-selected disjunct of the linearized separation
/// condition.
///
/// The conflict-free region is split by the line through the relative
/// position direction into two convex halves; `z` selects the half. A pair
/// is separated (outside the `g` tolerance band) iff at least one branch is
/// satisfied.
pub fn disjunctive_check(
    dx: f64,
    dy: f64,
    vx: f64,
    vy: f64,
    lines: &ConflictLines,
    z: bool,
) -> bool {
    let n = vy * dx - vx * dy;
    if z {
        n <= 0.0 && lines.lower(vx, vy) <= 0.0
    } else {
        n >= 0.0 && lines.upper(vx, vy) >= 0.0
    }
}

fn interval_mul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let c = [a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1];
    (
        c.iter().copied().fold(f64::INFINITY, f64::min),
        c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

/// Exact range of `cos` over the angle interval `[lo, hi]`.
fn cos_range(lo: f64, hi: f64) -> (f64, f64) {
    debug_assert!(hi >= lo);
    if hi - lo >= TAU {
        return (-1.0, 1.0);
    }
    let mut min = lo.cos().min(hi.cos());
    let mut max = lo.cos().max(hi.cos());
    // Interior extrema at multiples of 2pi (max) and pi + 2k pi (min).
    if (lo / TAU).ceil() <= (hi / TAU).floor() {
        max = 1.0;
    }
    if ((lo - std::f64::consts::PI) / TAU).ceil() <= ((hi - std::f64::consts::PI) / TAU).floor() {
        min = -1.0;
    }
    (min, max)
}

fn sin_range(lo: f64, hi: f64) -> (f64, f64) {
    cos_range(lo - std::f64::consts::FRAC_PI_2, hi - std::f64::consts::FRAC_PI_2)
}

fn velocity_intervals(s: &AircraftState, bounds: &ControlBounds) -> ((f64, f64), (f64, f64)) {
    let q = (bounds.q_lo * s.speed, bounds.q_hi * s.speed);
    let a_lo = s.heading + bounds.theta_lo;
    let a_hi = s.heading + bounds.theta_hi;
    (
        interval_mul(q, cos_range(a_lo, a_hi)),
        interval_mul(q, sin_range(a_lo, a_hi)),
    )
}

/// Sound interval bounds on the relative velocity of `(i, j)` over all
/// maneuvers within `bounds`; contains the exact relative velocity of every
/// feasible maneuver pair.
pub fn relative_velocity_box(
    i: &AircraftState,
    j: &AircraftState,
    bounds: &ControlBounds,
) -> VelocityBox {
    relative_velocity_box_mixed(i, j, bounds, bounds)
}

/// [`relative_velocity_box`] with separate bounds per aircraft (collapse
/// one side to `q in [1, 1], theta = 0` for an uncontrolled aircraft).
pub fn relative_velocity_box_mixed(
    i: &AircraftState,
    j: &AircraftState,
    bounds_i: &ControlBounds,
    bounds_j: &ControlBounds,
) -> VelocityBox {
    let (ix, iy) = velocity_intervals(i, bounds_i);
    let (jx, jy) = velocity_intervals(j, bounds_j);
    VelocityBox {
        vx_lo: ix.0 - jx.1,
        vx_hi: ix.1 - jx.0,
        vy_lo: iy.0 - jy.1,
        vy_hi: iy.1 - jy.0,
    }
}

/// Whether the box lies entirely inside the (convex) conflict wedge: true
/// when every corner does.
pub fn box_inside_wedge(lines: &ConflictLines, b: &VelocityBox) -> bool {
    [
        (b.vx_lo, b.vy_lo),
        (b.vx_lo, b.vy_hi),
        (b.vx_hi, b.vy_lo),
        (b.vx_hi, b.vy_hi),
    ]
    .iter()
    .all(|&(vx, vy)| lines.in_conflict_region(vx, vy))
}

/// Whether the conflict region (a wedge with apex at the origin) meets the
/// relative-velocity box. A `false` answer proves the pair separated under
/// every in-bounds maneuver combination.
///
/// Convexity of both sets reduces the test to: a box corner inside the
/// wedge, the apex inside the box, or a wedge boundary ray crossing the box.
pub fn wedge_intersects_box(lines: &ConflictLines, b: &VelocityBox) -> bool {
    let corners = [
        (b.vx_lo, b.vy_lo),
        (b.vx_lo, b.vy_hi),
        (b.vx_hi, b.vy_lo),
        (b.vx_hi, b.vy_hi),
    ];
    if corners
        .iter()
        .any(|&(vx, vy)| lines.in_conflict_region(vx, vy))
    {
        return true;
    }
    if b.contains(0.0, 0.0) {
        return true;
    }
    // Boundary rays: along each root line, on the side satisfying the other
    // line's constraint.
    let ray_hits = |mut tx: f64, mut ty: f64, keep: &dyn Fn(f64, f64) -> bool| -> bool {
        if !keep(tx, ty) {
            tx = -tx;
            ty = -ty;
        }
        if !keep(tx, ty) {
            return false;
        }
        ray_intersects_box(tx, ty, b)
    };
    ray_hits(lines.phi_l, lines.gamma_l, &|x, y| lines.upper(x, y) <= 0.0)
        || ray_hits(lines.phi_u, lines.gamma_u, &|x, y| lines.lower(x, y) >= 0.0)
}

/// Slab test: does the ray `s * (tx, ty)`, `s >= 0`, meet the box?
fn ray_intersects_box(tx: f64, ty: f64, b: &VelocityBox) -> bool {
    let mut s_lo = 0.0f64;
    let mut s_hi = f64::INFINITY;
    for (t, lo, hi) in [(tx, b.vx_lo, b.vx_hi), (ty, b.vy_lo, b.vy_hi)] {
        if t.abs() < 1e-15 {
            if 0.0 < lo || 0.0 > hi {
                return false;
            }
        } else {
            let a = lo / t;
            let c = hi / t;
            s_lo = s_lo.max(a.min(c));
            s_hi = s_hi.min(a.max(c));
        }
    }
    s_lo <= s_hi
}

/// Pairs of aircraft that are in conflict under nominal (uncontrolled)
/// motion. Errors if any pair is closer than `d` already at `t = 0`.
pub fn initial_conflict_set(
    aircraft: &[AircraftState],
    d: f64,
) -> Result<Vec<(usize, usize)>, GeometryError> {
    let nominal = Maneuver::nominal();
    let mut conflicts = Vec::new();
    for (i, j) in crate::pairs(aircraft.len()) {
        let a = &aircraft[i];
        let b = &aircraft[j];
        let (vx, vy) = relative_velocity(a, b, &nominal, &nominal);
        if !is_separated(a.x - b.x, a.y - b.y, vx, vy, d)? {
            conflicts.push((i, j));
        }
    }
    Ok(conflicts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::brute_force_pair_min;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    fn state(x: f64, y: f64, heading: f64, speed: f64) -> AircraftState {
        // Target one hour ahead along the heading; irrelevant for velocity math.
        AircraftState::new(
            "t",
            x,
            y,
            heading,
            speed,
            x + speed * heading.cos(),
            y + speed * heading.sin(),
        )
        .unwrap()
    }

    #[test]
    fn relative_velocity_head_on() {
        let i = state(0.0, 0.0, 0.0, 500.0);
        let j = state(100.0, 0.0, PI, 500.0);
        let (vx, vy) = relative_velocity(&i, &j, &Maneuver::nominal(), &Maneuver::nominal());
        assert!((vx - 1000.0).abs() < 1e-9);
        assert!(vy.abs() < 1e-9);
    }

    #[test]
    fn relative_velocity_identical_states() {
        let i = state(3.0, 4.0, 1.0, 450.0);
        let m = Maneuver::controlled(0.97, 0.1);
        let (vx, vy) = relative_velocity(&i, &i.clone(), &m, &m);
        assert_eq!((vx, vy), (0.0, 0.0));
    }

    #[test]
    fn relative_velocity_crossing() {
        let i = state(0.0, 0.0, 0.0, 500.0);
        let j = state(0.0, 100.0, FRAC_PI_2, 500.0);
        let (vx, vy) = relative_velocity(&i, &j, &Maneuver::nominal(), &Maneuver::nominal());
        assert!((vx - 500.0).abs() < 1e-9);
        assert!((vy + 500.0).abs() < 1e-9);
    }

    #[test]
    fn metrics_head_on_conflict() {
        let m = separation_metrics(-20.0, 0.0, 1000.0, 0.0, 5.0).unwrap();
        assert!((m.t_min.unwrap() - 0.02).abs() < 1e-12);
        assert!((m.g - (-2.5e7)).abs() < 1e-3);
        assert!(!is_separated(-20.0, 0.0, 1000.0, 0.0, 5.0).unwrap());
        // Independent confirmation: grid-minimized distance dips below d.
        let (t_star, dist_star) = brute_force_pair_min(-20.0, 0.0, 1000.0, 0.0, 1.0, 10_000);
        assert!((t_star - 0.02).abs() < 1e-6);
        assert!(dist_star < 5.0);
    }

    #[test]
    fn metrics_crossing_separated() {
        let m = separation_metrics(0.0, 50.0, 500.0, -500.0, 5.0).unwrap();
        assert!((m.t_min.unwrap() - 0.05).abs() < 1e-12);
        assert!((m.g - 6.125e8).abs() < 1e-1);
        assert!(is_separated(0.0, 50.0, 500.0, -500.0, 5.0).unwrap());
        let (_, dist_star) = brute_force_pair_min(0.0, 50.0, 500.0, -500.0, 1.0, 10_000);
        assert!((dist_star - 25.0 * 2.0_f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn metrics_zero_relative_velocity() {
        let m = separation_metrics(0.0, 10.0, 0.0, 0.0, 5.0).unwrap();
        assert_eq!(m.t_min, None);
        assert!(is_separated(0.0, 10.0, 0.0, 0.0, 5.0).unwrap());
    }

    #[test]
    fn metrics_rejects_initial_violation() {
        let err = separation_metrics(1.0, 1.0, 100.0, 0.0, 5.0).unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateGeometry { .. }));
    }

    #[test]
    fn conflict_lines_head_on_example() {
        let lines = conflict_region_lines(-20.0, 0.0, 5.0).unwrap();
        // Root-line slopes: vx = -/+ sqrt(375)/5 * vy.
        let slope = 375.0_f64.sqrt() / 5.0;
        for (gamma, phi) in [(lines.gamma_l, lines.phi_l), (lines.gamma_u, lines.phi_u)] {
            // Point on the line: vx = phi/gamma * vy.
            let ratio = phi / gamma;
            assert!(
                (ratio.abs() - slope).abs() < 1e-9,
                "line slope {ratio} vs expected +/-{slope}"
            );
        }
        assert!(lines.in_conflict_region(1000.0, 0.0));
        // Tail-chase (opening) velocity is outside.
        assert!(!lines.in_conflict_region(-1000.0, 0.0));

        // Swapped axes: same slopes, roles exchanged by symmetry.
        let lines2 = conflict_region_lines(0.0, -20.0, 5.0).unwrap();
        assert!(lines2.in_conflict_region(0.0, 1000.0));
        assert!(!lines2.in_conflict_region(0.0, -1000.0));
    }

    #[test]
    fn conflict_lines_tangent_is_error() {
        let err = conflict_region_lines(3.0, 4.0, 5.0).unwrap_err();
        assert!(matches!(err, GeometryError::TangentGeometry { .. }));
    }

    #[test]
    fn conflict_region_matches_g_sign() {
        // Membership in C must equal (g < 0 and t_min > 0) away from the
        // boundary band, across random geometries and probe velocities.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 5.0;
        for _ in 0..2000 {
            let dx = rng.gen_range(-200.0..200.0);
            let dy = rng.gen_range(-200.0..200.0);
            if dx * dx + dy * dy <= d * d * 1.01 {
                continue;
            }
            let lines = conflict_region_lines(dx, dy, d).unwrap();
            for _ in 0..20 {
                let vx = rng.gen_range(-1200.0..1200.0);
                let vy = rng.gen_range(-1200.0..1200.0);
                let m = separation_metrics(dx, dy, vx, vy, d).unwrap();
                if m.g.abs() <= g_tolerance(dx, dy, vx, vy) {
                    continue;
                }
                let in_conflict = match m.t_min {
                    None => false,
                    Some(t) => m.g < 0.0 && t > 0.0,
                };
                assert_eq!(
                    lines.in_conflict_region(vx, vy),
                    in_conflict,
                    "dx={dx} dy={dy} vx={vx} vy={vy} g={} t={:?}",
                    m.g,
                    m.t_min
                );
            }
        }
    }

    #[test]
    fn disjunction_equivalent_to_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 5.0;
        for _ in 0..2000 {
            let dx = rng.gen_range(-200.0..200.0);
            let dy = rng.gen_range(-200.0..200.0);
            if dx * dx + dy * dy <= d * d * 1.01 {
                continue;
            }
            let lines = conflict_region_lines(dx, dy, d).unwrap();
            for _ in 0..20 {
                let vx = rng.gen_range(-1200.0..1200.0);
                let vy = rng.gen_range(-1200.0..1200.0);
                let m = separation_metrics(dx, dy, vx, vy, d).unwrap();
                if m.g.abs() <= g_tolerance(dx, dy, vx, vy) {
                    continue;
                }
                let sat = disjunctive_check(dx, dy, vx, vy, &lines, true)
                    || disjunctive_check(dx, dy, vx, vy, &lines, false);
                assert_eq!(
                    sat,
                    is_separated(dx, dy, vx, vy, d).unwrap(),
                    "dx={dx} dy={dy} vx={vx} vy={vy}"
                );
            }
        }
    }

    #[test]
    fn disjunction_examples() {
        // Separated crossing case: some branch is satisfied.
        let lines = conflict_region_lines(0.0, 50.0, 5.0).unwrap();
        assert!(
            disjunctive_check(0.0, 50.0, 500.0, -500.0, &lines, true)
                || disjunctive_check(0.0, 50.0, 500.0, -500.0, &lines, false)
        );
        // Head-on conflict: neither branch.
        let lines = conflict_region_lines(-20.0, 0.0, 5.0).unwrap();
        assert!(!disjunctive_check(-20.0, 0.0, 1000.0, 0.0, &lines, true));
        assert!(!disjunctive_check(-20.0, 0.0, 1000.0, 0.0, &lines, false));
        // A point exactly on the split line with g > 0 satisfies a branch
        // (closed half-planes): take the opening direction itself.
        assert!(
            disjunctive_check(-20.0, 0.0, -300.0, 0.0, &lines, true)
                || disjunctive_check(-20.0, 0.0, -300.0, 0.0, &lines, false)
        );
    }

    #[test]
    fn velocity_box_degenerate_bounds() {
        let i = state(0.0, 0.0, 0.3, 480.0);
        let j = state(50.0, -20.0, 2.1, 520.0);
        let collapsed = ControlBounds::new(1.0, 1.0, 0.0, 0.0);
        let b = relative_velocity_box(&i, &j, &collapsed);
        let (vx, vy) = relative_velocity(&i, &j, &Maneuver::nominal(), &Maneuver::nominal());
        assert!((b.vx_lo - vx).abs() < 1e-9 && (b.vx_hi - vx).abs() < 1e-9);
        assert!((b.vy_lo - vy).abs() < 1e-9 && (b.vy_hi - vy).abs() < 1e-9);
    }

    #[test]
    fn velocity_box_contains_sampled_maneuvers() {
        let i = state(0.0, 0.0, 0.0, 500.0);
        let j = state(100.0, 0.0, PI, 500.0);
        let bounds = ControlBounds::new(0.94, 1.03, -FRAC_PI_6, FRAC_PI_6);
        let b = relative_velocity_box(&i, &j, &bounds);
        assert!(b.contains(1000.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let mi = Maneuver::controlled(
                rng.gen_range(bounds.q_lo..=bounds.q_hi),
                rng.gen_range(bounds.theta_lo..=bounds.theta_hi),
            );
            let mj = Maneuver::controlled(
                rng.gen_range(bounds.q_lo..=bounds.q_hi),
                rng.gen_range(bounds.theta_lo..=bounds.theta_hi),
            );
            let (vx, vy) = relative_velocity(&i, &j, &mi, &mj);
            assert!(b.contains(vx, vy), "({vx}, {vy}) escaped {b:?}");
        }
    }

    #[test]
    fn velocity_box_swap_negates() {
        let i = state(0.0, 0.0, 0.7, 470.0);
        let j = state(80.0, 30.0, 3.9, 530.0);
        let bounds = ControlBounds::standard();
        let b_ij = relative_velocity_box(&i, &j, &bounds);
        let b_ji = relative_velocity_box(&j, &i, &bounds);
        assert_eq!(b_ij.negated(), b_ji);
    }

    #[test]
    fn separation_swap_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..1000 {
            let dx = rng.gen_range(-200.0..200.0);
            let dy = rng.gen_range(-200.0..200.0);
            if dx * dx + dy * dy < 25.0 {
                continue;
            }
            let vx = rng.gen_range(-1200.0..1200.0);
            let vy = rng.gen_range(-1200.0..1200.0);
            assert_eq!(
                is_separated(dx, dy, vx, vy, 5.0).unwrap(),
                is_separated(-dx, -dy, -vx, -vy, 5.0).unwrap()
            );
        }
    }

    #[test]
    fn wedge_box_test_matches_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = 5.0;
        for _ in 0..500 {
            let dx = rng.gen_range(-150.0..150.0);
            let dy = rng.gen_range(-150.0..150.0);
            if dx * dx + dy * dy <= d * d * 1.1 {
                continue;
            }
            let lines = conflict_region_lines(dx, dy, d).unwrap();
            let cx = rng.gen_range(-800.0..800.0);
            let cy = rng.gen_range(-800.0..800.0);
            let hw = rng.gen_range(1.0..400.0);
            let hh = rng.gen_range(1.0..400.0);
            let b = VelocityBox {
                vx_lo: cx - hw,
                vx_hi: cx + hw,
                vy_lo: cy - hh,
                vy_hi: cy + hh,
            };
            // Dense sample of the box on a 21x21 grid; membership of any
            // sample implies intersection.
            let mut sampled_hit = false;
            for a in 0..=20 {
                for c in 0..=20 {
                    let vx = b.vx_lo + (b.vx_hi - b.vx_lo) * a as f64 / 20.0;
                    let vy = b.vy_lo + (b.vy_hi - b.vy_lo) * c as f64 / 20.0;
                    if lines.in_conflict_region(vx, vy) {
                        sampled_hit = true;
                    }
                }
            }
            let test = wedge_intersects_box(&lines, &b);
            // Soundness: sampling can only under-report, never over-report.
            if sampled_hit {
                assert!(test, "sampled member but test says empty: {dx} {dy} {b:?}");
            }
        }
    }

    #[test]
    fn parallel_aircraft_have_no_initial_conflicts() {
        let a = state(0.0, 0.0, 0.0, 500.0);
        let b = state(0.0, 10.0, 0.0, 500.0);
        let conflicts = initial_conflict_set(&[a, b], 5.0).unwrap();
        assert!(conflicts.is_empty());
    }

    #[test]
    fn aircraft_state_invariants() {
        assert!(AircraftState::new("a", 0.0, 0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(AircraftState::new("a", 0.0, 0.0, 0.0, 500.0, 0.0, 0.0).is_err());
        let s = AircraftState::new("a", 0.0, 0.0, -FRAC_PI_2, 500.0, 0.0, -10.0).unwrap();
        assert!((s.heading - 1.5 * PI).abs() < 1e-12);
    }
}
