//! The base vector field on the band `R x [-1, 1]` with discs of radius 1/4
//! removed around `(2i, 0)`, its circle component, and the orbit-invariant
//! boundary coordinate `omega`.
//!
//! Orbits enter through `|y| = 1` and leave through the boundary circles of
//! the removed discs. The saddles sit at `(2k + 1, 0)`; their stable manifolds
//! are the vertical lines `x = 2k + 1`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::config::{AlphaProfile, BetaProfile, FlowParams, PhiVariant};
use crate::ode::{Direction, EventAction, EventFunction, OdeError, OdeSystem, Solver, Termination};

/// Radius of the removed discs.
pub const DISC_RADIUS: f64 = 0.25;
/// Outer radius of the alpha support.
pub const ALPHA_RADIUS: f64 = 1.0 / 3.0;
pub const BETA_LO: f64 = 0.5;
pub const BETA_HI: f64 = 2.0 / 3.0;
/// Largest step the flow integrator takes; resolves the narrow beta profile
/// and keeps circle increments per step well below one turn.
/// Points this far outside the band still count as on its boundary (event
/// localization lands slightly past the crossing).
pub const DOMAIN_SLACK: f64 = 1e-8;
pub const FLOW_H_MAX: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("omega is not computable at ({x}, {y}): {reason}")]
    Separatrix { x: f64, y: f64, reason: String },
    #[error("point ({x}, {y}) is outside the band domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("orbit left the band at time {time}")]
    DomainExit { time: f64, partial: Box<OrbitSegment> },
    #[error("no terminal event before time {max_time}")]
    MaxTimeExceeded {
        max_time: f64,
        partial: Box<OrbitSegment>,
    },
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// A point of the three-dimensional base manifold in band coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub y: f64,
    /// Circle coordinate, kept lifted to `R` (reduce mod 1 when needed).
    pub theta: f64,
}

impl BandPoint {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// Inside the band and outside every removed disc.
    pub fn in_domain(&self) -> bool {
        self.y.abs() <= 1.0 + DOMAIN_SLACK && disc_distance(self.x, self.y) >= -DOMAIN_SLACK
    }
}

/// Signed distance to the nearest removed disc boundary (negative inside).
pub fn disc_distance(x: f64, y: f64) -> f64 {
    let cx = 2.0 * (x / 2.0).round();
    (x - cx).hypot(y) - DISC_RADIUS
}

/// Center `2k + 1` of the saddle nearest to `x`.
pub fn nearest_saddle(x: f64) -> f64 {
    2.0 * ((x - 1.0) / 2.0).round() + 1.0
}

/// Reduces a boundary coordinate to the representative in `[-1, 3)`.
pub fn wrap4(w: f64) -> f64 {
    if (-1.0..3.0).contains(&w) {
        return w;
    }
    let r = (w + 1.0).rem_euclid(4.0) - 1.0;
    if r >= 3.0 { r - 4.0 } else { r }
}

/// Smooth step: 0 for `u <= 0`, 1 for `u >= 1`, C-infinity in between.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / u).exp();
    let b = (-1.0 / (1.0 - u)).exp();
    a / (a + b)
}

// plateau height of the smoothed linear profile; above x/2 on the blend
// interval so the profile stays monotone
const LINEAR_PLATEAU: f64 = 0.21;

fn linear_smoothed_half(x: f64) -> f64 {
    // x in [0, 1/2]
    let s = smooth_step((x - 1.0 / 3.0) * 12.0);
    (1.0 - s) * 0.5 * x + s * LINEAR_PLATEAU
}

impl PhiVariant {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            PhiVariant::Sine => 0.5 * (PI * x).sin(),
            PhiVariant::LinearSmoothed => {
                let k = x.floor();
                let r = x - k;
                let v = linear_smoothed_half(r.min(1.0 - r));
                if (k as i64).rem_euclid(2) == 0 {
                    v
                } else {
                    -v
                }
            }
        }
    }
}

/// The default profile `sin(pi x) / 2`.
pub fn eval_phi(x: f64) -> f64 {
    PhiVariant::Sine.eval(x)
}

/// `(-phi(x), -y)`.
pub fn eval_base_field(p: &BandPoint, phi: PhiVariant) -> (f64, f64) {
    (-phi.eval(p.x), -p.y)
}

pub fn alpha(x: f64, y: f64, params: &FlowParams) -> f64 {
    match params.alpha {
        AlphaProfile::Zero => 0.0,
        AlphaProfile::Smooth => {
            let c = nearest_saddle(x);
            let r = (x - c).hypot(y);
            if r >= ALPHA_RADIUS {
                return 0.0;
            }
            let i = ((c - 1.0) / 2.0).round() as i64;
            let sign = if i.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let inner = params.r_alpha_inner;
            sign * (1.0 - smooth_step((r - inner) / (ALPHA_RADIUS - inner)))
        }
    }
}

/// `beta(|y|)`, zero outside the open band `(1/2, 2/3)`.
pub fn beta(u: f64, params: &FlowParams) -> f64 {
    let u = u.abs();
    if u <= BETA_LO || u >= BETA_HI {
        return 0.0;
    }
    let v = match params.beta {
        BetaProfile::Zero => 0.0,
        BetaProfile::InverseProduct => {
            // peak of (u - 1/2)(2/3 - u) is 1/144 at u = 7/12
            (144.0 - 1.0 / ((u - BETA_LO) * (BETA_HI - u))).exp()
        }
        BetaProfile::Bump => {
            let q = (u - 7.0 / 12.0) * 12.0;
            (1.0 - 1.0 / (1.0 - q * q)).exp()
        }
    };
    params.beta_scale * v
}

/// Circle component given a known value of `omega` on the orbit.
pub fn theta_rate(x: f64, y: f64, omega: Option<f64>, params: &FlowParams) -> f64 {
    let a = alpha(x, y, params);
    let b = beta(y, params);
    let band = if b == 0.0 || params.t == 0.0 {
        0.0
    } else {
        let w = omega.expect("omega is required inside the beta band");
        params.t * b * (0.5 * PI * w).sin()
    };
    -params.theta_sign * (a + band)
}

/// Circle component of the field at `p`, computing `omega` when needed.
pub fn eval_theta_field(p: &BandPoint, params: &FlowParams) -> Result<f64, FlowError> {
    let omega = if beta(p.y, params) != 0.0 && params.t != 0.0 {
        Some(eval_omega(p.x, p.y, params)?)
    } else {
        None
    };
    Ok(theta_rate(p.x, p.y, omega, params))
}

struct BackwardBase {
    phi: PhiVariant,
}

impl OdeSystem<2> for BackwardBase {
    fn rhs(&self, _t: f64, s: &[f64; 2]) -> [f64; 2] {
        [self.phi.eval(s[0]), s[1]]
    }
}

struct AbsYLevel(f64);

impl EventFunction<2> for AbsYLevel {
    fn value(&self, _t: f64, s: &[f64; 2]) -> f64 {
        s[1].abs() - self.0
    }
    fn direction(&self) -> Direction {
        Direction::Rising
    }
}

/// The orbit-invariant boundary coordinate, reduced to `[-1, 3)`.
///
/// Off the axis the point is flowed backwards to `|y| = 1`; the hit `x`
/// gives `omega = x` on the top edge and `omega = 2 - x` on the bottom edge.
/// On `y = 0` the interval rule applies: `1` on `(4i, 4i + 2)`, `-1` on
/// `(4i + 2, 4i + 4)`.
pub fn eval_omega(x: f64, y: f64, params: &FlowParams) -> Result<f64, FlowError> {
    if y.abs() > 1.0 + DOMAIN_SLACK || disc_distance(x, y) < -DOMAIN_SLACK {
        return Err(FlowError::OutsideDomain { x, y });
    }
    if y == 0.0 {
        let r = x.rem_euclid(4.0);
        return Ok(if r < 2.0 { 1.0 } else { -1.0 });
    }
    if y.abs() >= 1.0 {
        let w = if y > 0.0 { x } else { 2.0 - x };
        return Ok(wrap4(w));
    }
    let solver = Solver::new(params.ode_tol * 1e-2, params.event_tol).with_h_max(0.05);
    let out = solver.integrate(
        &BackwardBase { phi: params.phi },
        0.0,
        [x, y],
        params.max_time,
        &[&AbsYLevel(1.0)],
        |_, _, _| EventAction::Stop,
        |_, _| {},
    )?;
    if out.termination != Termination::Event(0) {
        return Err(FlowError::Separatrix {
            x,
            y,
            reason: format!("backward orbit did not reach |y| = 1 within {}", params.max_time),
        });
    }
    let x_hit = out.y[0];
    let w = if y > 0.0 { x_hit } else { 2.0 - x_hit };
    Ok(wrap4(w))
}

/// Full field `(x, y, theta)` along one orbit, with `omega` fixed at its
/// (orbit-invariant) value.
pub struct OrbitField<'a> {
    pub params: &'a FlowParams,
    pub omega: Option<f64>,
}

impl OdeSystem<3> for OrbitField<'_> {
    fn rhs(&self, _t: f64, s: &[f64; 3]) -> [f64; 3] {
        [
            -self.params.phi.eval(s[0]),
            -s[1],
            theta_rate(s[0], s[1], self.omega, self.params),
        ]
    }
}

/// Events understood by [`integrate_orbit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCondition {
    /// Crossing of `y = level`.
    YLevel { level: f64, direction: Direction },
    /// Reaching the boundary circle of a removed disc.
    DiscBoundary,
    /// Crossing `theta = 0 mod 1` within distance `eps` of a saddle.
    SectionDisc { eps: f64 },
    /// Entering the alpha support.
    AlphaSupport,
    /// Entering the beta band from above.
    BetaBand,
}

impl StopCondition {
    fn value(&self, s: &[f64; 3]) -> f64 {
        match *self {
            StopCondition::YLevel { level, .. } => s[1] - level,
            StopCondition::DiscBoundary => disc_distance(s[0], s[1]),
            StopCondition::SectionDisc { .. } => (PI * s[2]).sin(),
            StopCondition::AlphaSupport => {
                (s[0] - nearest_saddle(s[0])).hypot(s[1]) - ALPHA_RADIUS
            }
            StopCondition::BetaBand => s[1].abs() - BETA_HI,
        }
    }

    fn direction(&self) -> Direction {
        match *self {
            StopCondition::YLevel { direction, .. } => direction,
            StopCondition::SectionDisc { .. } => Direction::Either,
            _ => Direction::Falling,
        }
    }

    /// Whether a localized crossing really terminates (the section disc also
    /// requires proximity to a saddle).
    fn accepts(&self, s: &[f64; 3]) -> bool {
        match *self {
            StopCondition::SectionDisc { eps } => {
                (s[0] - nearest_saddle(s[0])).hypot(s[1]) < eps
            }
            _ => true,
        }
    }
}

impl EventFunction<3> for StopCondition {
    fn value(&self, _t: f64, s: &[f64; 3]) -> f64 {
        StopCondition::value(self, s)
    }
    fn direction(&self) -> Direction {
        StopCondition::direction(self)
    }
}

struct BandExit;

impl EventFunction<3> for BandExit {
    fn value(&self, _t: f64, s: &[f64; 3]) -> f64 {
        s[1].abs() - 1.0 - 1e-9
    }
    fn direction(&self) -> Direction {
        Direction::Rising
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalEvent {
    /// Index into the stop list, with the condition that fired.
    Stop(usize, StopCondition),
    MaxTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSegment {
    pub samples: Vec<(f64, BandPoint)>,
    pub terminal_event: TerminalEvent,
    /// Copy index of the cover the segment lives in (1 for a bare band orbit).
    pub chart: u8,
}

impl OrbitSegment {
    pub fn last(&self) -> (f64, BandPoint) {
        *self.samples.last().expect("segments always hold the start point")
    }

    /// CSV with header `time,x,y,theta,chart`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,x,y,theta,chart\n");
        for (t, p) in &self.samples {
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                t, p.x, p.y, p.theta, self.chart
            ));
        }
        out
    }
}

/// Solver configured for flow orbits.
pub fn flow_solver(params: &FlowParams) -> Solver {
    Solver::new(params.ode_tol, params.event_tol).with_h_max(FLOW_H_MAX)
}

/// Integrates the full field from `start` until one of `stops` fires.
/// `omega` is computed at the start point unless already known.
pub fn integrate_orbit(
    start: BandPoint,
    stops: &[StopCondition],
    params: &FlowParams,
) -> Result<OrbitSegment, FlowError> {
    let omega = if start.y.abs() > BETA_LO && params.t != 0.0 {
        Some(eval_omega(start.x, start.y, params)?)
    } else {
        None
    };
    integrate_orbit_with_omega(start, omega, stops, params, true)
}

/// As [`integrate_orbit`] with a caller-supplied `omega`; `record` controls
/// whether intermediate samples are kept.
pub fn integrate_orbit_with_omega(
    start: BandPoint,
    omega: Option<f64>,
    stops: &[StopCondition],
    params: &FlowParams,
    record: bool,
) -> Result<OrbitSegment, FlowError> {
    if !start.in_domain() {
        return Err(FlowError::OutsideDomain {
            x: start.x,
            y: start.y,
        });
    }
    let field = OrbitField { params, omega };
    let mut events: Vec<&dyn EventFunction<3>> =
        stops.iter().map(|s| s as &dyn EventFunction<3>).collect();
    events.push(&BandExit);
    let exit_index = stops.len();
    let mut samples = Vec::new();
    let out = flow_solver(params).integrate(
        &field,
        0.0,
        [start.x, start.y, start.theta],
        params.max_time,
        &events,
        |i, _t, s| {
            if i == exit_index || stops[i].accepts(s) {
                EventAction::Stop
            } else {
                EventAction::Continue
            }
        },
        |t, s| {
            if record {
                samples.push((t, BandPoint::new(s[0], s[1], s[2])));
            }
        },
    )?;
    let end = BandPoint::new(out.y[0], out.y[1], out.y[2]);
    if !record {
        samples.push((0.0, start));
        samples.push((out.t, end));
    }
    match out.termination {
        Termination::Event(i) if i == exit_index => Err(FlowError::DomainExit {
            time: out.t,
            partial: Box::new(OrbitSegment {
                samples,
                terminal_event: TerminalEvent::MaxTime,
                chart: 1,
            }),
        }),
        Termination::Event(i) => Ok(OrbitSegment {
            samples,
            terminal_event: TerminalEvent::Stop(i, stops[i]),
            chart: 1,
        }),
        Termination::EndTime => Err(FlowError::MaxTimeExceeded {
            max_time: params.max_time,
            partial: Box::new(OrbitSegment {
                samples,
                terminal_event: TerminalEvent::MaxTime,
                chart: 1,
            }),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> FlowParams {
        FlowParams::written_orientation()
    }

    /// Closed form of omega for the sine profile: orbits satisfy
    /// `tan(pi x / 2) = tan(pi x0 / 2) * |y|^(pi/2)`.
    fn omega_sine_oracle(x: f64, y: f64) -> f64 {
        let k = ((x + 1.0) / 2.0).floor();
        let center = 2.0 * k;
        let u = (0.5 * PI * (x - center)).tan() / y.abs().powf(0.5 * PI);
        let x_hit = center + 2.0 / PI * u.atan();
        wrap4(if y > 0.0 { x_hit } else { 2.0 - x_hit })
    }

    #[test]
    fn phi_values() {
        assert_eq!(eval_phi(0.0), 0.0);
        assert!(eval_phi(1.0).abs() < 1e-15);
        let v = 0.5 * (0.3 * PI).sin();
        assert!((eval_phi(0.3) - v).abs() < 1e-15);
        assert!((eval_phi(1.3) + v).abs() < 1e-15);
    }

    #[test]
    fn phi_identities_on_grid() {
        for variant in [PhiVariant::Sine, PhiVariant::LinearSmoothed] {
            for i in 0..1000 {
                let x = -5.0 + 10.0 * i as f64 / 999.0;
                let a = variant.eval(x);
                assert!((variant.eval(x + 1.0) + a).abs() < 1e-12, "{variant} {x}");
                assert!((variant.eval(-x) + a).abs() < 1e-12, "{variant} {x}");
                assert!(a.abs() <= 1.0);
            }
        }
        assert!((PhiVariant::LinearSmoothed.eval(0.2) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn base_field_fixed_points_and_saddle_jacobian() {
        let (u, v) = eval_base_field(&BandPoint::new(1.0, 0.0, 0.0), PhiVariant::Sine);
        assert!(u.abs() < 1e-15 && v == 0.0);
        let (u, v) = eval_base_field(&BandPoint::new(0.2, 0.5, 0.0), PhiVariant::Sine);
        assert_eq!((u, v), (-eval_phi(0.2), -0.5));
        for variant in [PhiVariant::Sine, PhiVariant::LinearSmoothed] {
            for k in -2..=2 {
                let x0 = 2.0 * k as f64 + 1.0;
                let h = 1e-6;
                let f = |x: f64, y: f64| eval_base_field(&BandPoint::new(x, y, 0.0), variant);
                let dxx = (f(x0 + h, 0.0).0 - f(x0 - h, 0.0).0) / (2.0 * h);
                let dyy = (f(x0, h).1 - f(x0, -h).1) / (2.0 * h);
                let dxy = (f(x0, h).0 - f(x0, -h).0) / (2.0 * h);
                assert_eq!(dxy, 0.0);
                assert!(dxx > 0.0 && dyy < 0.0, "saddle at {x0}");
                if variant == PhiVariant::Sine {
                    assert!((dxx - PI / 2.0).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn theta_field_examples() {
        let p = params();
        let at = |x, y| eval_theta_field(&BandPoint::new(x, y, 0.0), &p).unwrap();
        assert_eq!(at(1.0, 0.0), -1.0);
        assert_eq!(at(3.0, 0.0), 1.0);
        assert_eq!(at(0.0, 0.8), 0.0);
        assert_eq!(at(2.0, -0.7), 0.0);
        // reversed orientation flips the sign
        let q = FlowParams::default();
        assert_eq!(eval_theta_field(&BandPoint::new(1.0, 0.0, 0.0), &q).unwrap(), 1.0);
    }

    #[test]
    fn alpha_antiperiodic_on_grid() {
        let p = params();
        for i in 0..1000 {
            let x = -4.0 + 8.0 * i as f64 / 999.0;
            let y = 0.3 * ((i as f64) * 0.37).sin();
            assert_eq!(alpha(x + 2.0, y, &p), -alpha(x, y, &p));
        }
    }

    #[test]
    fn beta_profiles() {
        let p = params();
        assert!((beta(7.0 / 12.0, &p) - 1.0).abs() < 1e-12);
        assert_eq!(beta(0.5, &p), 0.0);
        assert_eq!(beta(0.7, &p), 0.0);
        assert!(beta(-0.6, &p) > 0.0);
        let q = FlowParams {
            beta: BetaProfile::Bump,
            ..params()
        };
        assert!((beta(7.0 / 12.0, &q) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn omega_boundary_and_axis_cases() {
        let p = params();
        assert_eq!(eval_omega(0.4, 1.0, &p).unwrap(), 0.4);
        assert_eq!(eval_omega(0.4, -1.0, &p).unwrap(), 1.6);
        assert_eq!(eval_omega(0.5, 0.0, &p).unwrap(), 1.0);
        assert_eq!(eval_omega(2.5, 0.0, &p).unwrap(), -1.0);
        assert_eq!(eval_omega(-1.5, 0.0, &p).unwrap(), -1.0);
        assert!(matches!(
            eval_omega(0.1, 0.1, &p),
            Err(FlowError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn omega_matches_closed_form() {
        let p = params();
        for &(x, y) in &[(0.3, 0.5), (0.9, 0.2), (-0.7, -0.4), (2.6, 0.35), (1.2, -0.9), (0.95, 0.05)] {
            let w = eval_omega(x, y, &p).unwrap();
            assert!((w - omega_sine_oracle(x, y)).abs() < 1e-8, "({x},{y}) {w}");
        }
    }

    #[test]
    fn saddle_orbit_is_stationary_and_winds() {
        let p = params();
        let seg = integrate_orbit(
            BandPoint::new(1.0, 0.0, 0.3),
            &[StopCondition::DiscBoundary],
            &FlowParams { max_time: 5.0, ..p },
        );
        let Err(FlowError::MaxTimeExceeded { partial, .. }) = seg else {
            panic!("expected the fixed point to never leave");
        };
        let (t, end) = partial.last();
        assert_eq!(t, 5.0);
        assert!(end.x == 1.0 && end.y == 0.0);
        assert!((end.theta - (0.3 - 5.0)).abs() < 1e-9);
    }

    #[test]
    fn stable_manifold_orbit_never_reaches_a_disc() {
        let p = FlowParams {
            max_time: 50.0,
            ..params()
        };
        let r = integrate_orbit(BandPoint::new(1.0, 1.0, 0.0), &[StopCondition::DiscBoundary], &p);
        assert!(matches!(r, Err(FlowError::MaxTimeExceeded { .. })));
    }

    #[test]
    fn beta_band_transit_time() {
        // y' = -y from 2/3 to 1/2 takes ln(4/3)
        let p = params();
        let start = BandPoint::new(0.0, 2.0 / 3.0, 0.0);
        let seg = integrate_orbit(
            start,
            &[StopCondition::YLevel {
                level: 0.5,
                direction: Direction::Falling,
            }],
            &p,
        )
        .unwrap();
        assert!((seg.last().0 - (4.0f64 / 3.0).ln()).abs() < 1e-8);
    }

    #[test]
    fn omega_constant_along_orbit() {
        let p = params();
        let start = BandPoint::new(0.7, 0.9, 0.0);
        let w0 = eval_omega(start.x, start.y, &p).unwrap();
        let seg = integrate_orbit(start, &[StopCondition::DiscBoundary], &p).unwrap();
        let mut worst: f64 = 0.0;
        for (_, q) in seg.samples.iter().step_by(7) {
            worst = worst.max((eval_omega(q.x, q.y, &p).unwrap() - w0).abs());
        }
        assert!(worst <= 10.0 * p.ode_tol, "omega drift {worst}");
    }

    #[test]
    fn section_disc_hits_near_saddle() {
        let p = params();
        let seg = integrate_orbit(
            BandPoint::new(1.0 - 1e-6, 1.0, 0.0),
            &[StopCondition::DiscBoundary, StopCondition::SectionDisc { eps: 0.05 }],
            &p,
        )
        .unwrap();
        let (_, end) = seg.last();
        assert!(matches!(seg.terminal_event, TerminalEvent::Stop(1, _)));
        assert!((end.x - 1.0).hypot(end.y) < 0.05);
        assert!((end.theta - end.theta.round()).abs() < 1e-8);
    }

    #[test]
    fn csv_header() {
        let seg = OrbitSegment {
            samples: vec![(0.0, BandPoint::new(0.0, 1.0, 0.0))],
            terminal_event: TerminalEvent::MaxTime,
            chart: 2,
        };
        let csv = seg.to_csv();
        assert!(csv.starts_with("time,x,y,theta,chart\n"));
        assert!(csv.trim_end().ends_with(",2"));
    }
}
