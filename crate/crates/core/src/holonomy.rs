//! Deviation function, torus gluing and the composite boundary holonomies of
//! the four-fold cover.
//!
//! Copy `k` of the cover is entered through torus `T_k` (the outer edge
//! `|y| = 1` of the band) and left through `T_{k+1}` (a removed disc
//! boundary). Crossing a copy shifts the circle coordinate by the deviation
//! `f(omega)`; the exit coordinates are carried into the next copy by `A^-1`.
//! One traversal is therefore
//!
//! ```text
//! g(omega, theta) = A^-1(omega, theta + f(omega)) = (-theta - f(omega), omega)
//! ```
//!
//! and the composites `A^-1 h_i ... A^-1 h_1` are the iterates of `g` started
//! at `(omega, 0)`. The fiber coordinate is never touched by any map here.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::base_flow::{
    self, eval_omega, integrate_orbit_with_omega, wrap4, BandPoint, FlowError, StopCondition,
    TerminalEvent,
};
use crate::config::FlowParams;
use crate::quad;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HolonomyError {
    #[error("argument {omega} is within {margin} of an odd integer")]
    Separatrix { omega: f64, margin: f64 },
    #[error("torus T{torus} ({side:?}) is not glued by A in that direction")]
    WrongBoundary { torus: u8, side: BoundarySide },
    #[error("holonomy index {0} outside 1..=4")]
    BadIndex(usize),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Distance from `omega` to the nearest odd integer.
pub fn separatrix_distance(omega: f64) -> f64 {
    (omega - base_flow::nearest_saddle(omega)).abs()
}

/// `int beta(e^s) ds = int_{1/2}^{2/3} beta(u) / u du`.
pub fn beta_band_integral(params: &FlowParams) -> f64 {
    quad::integrate(
        |u| base_flow::beta(u, params) / u,
        base_flow::BETA_LO,
        base_flow::BETA_HI,
        1e-14,
    )
}

/// Circle displacement picked up in the beta band by the orbit with boundary
/// coordinate `omega`, from the closed form.
pub fn beta_band_deviation(omega: f64, i_beta: f64, params: &FlowParams) -> f64 {
    -params.theta_sign * params.t * (0.5 * PI * omega).sin() * i_beta
}

/// Total circle displacement of the orbit entering the top edge at boundary
/// coordinate `omega` with `theta = 0`, up to the removed disc it falls into.
pub fn deviation_f(omega: f64, params: &FlowParams) -> Result<f64, HolonomyError> {
    let w = wrap4(omega);
    if separatrix_distance(w) < params.event_tol {
        return Err(HolonomyError::Separatrix {
            omega,
            margin: params.event_tol,
        });
    }
    let seg = integrate_orbit_with_omega(
        BandPoint::new(w, 1.0, 0.0),
        Some(w),
        &[StopCondition::DiscBoundary],
        params,
        false,
    )
    .map_err(|e| match e {
        FlowError::MaxTimeExceeded { .. } => HolonomyError::Separatrix {
            omega,
            margin: params.event_tol,
        },
        other => other.into(),
    })?;
    Ok(seg.last().1.theta)
}

/// Deviation of an orbit together with whether it entered the alpha support.
pub fn deviation_with_alpha_flag(
    omega: f64,
    params: &FlowParams,
) -> Result<(f64, bool), HolonomyError> {
    let w = wrap4(omega);
    let seg = integrate_orbit_with_omega(
        BandPoint::new(w, 1.0, 0.0),
        Some(w),
        &[StopCondition::DiscBoundary, StopCondition::AlphaSupport],
        params,
        false,
    )?;
    match seg.terminal_event {
        TerminalEvent::Stop(1, _) => Ok((deviation_f(omega, params)?, true)),
        _ => Ok((seg.last().1.theta, false)),
    }
}

/// How the argument of the deviation function is identified.
///
/// `Lifted` is the function computed by the flow: defined on the reals minus
/// the odd integers, odd, 4-periodic, with `f(w + 2) = -f(w)`.
/// `ArgumentMod2` reduces the argument into `[0, 2)` first, which is the
/// non-negative convention used by the contraction estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviationReading {
    Lifted,
    ArgumentMod2,
}

impl DeviationReading {
    pub fn reduce(self, omega: f64) -> f64 {
        match self {
            DeviationReading::Lifted => wrap4(omega),
            DeviationReading::ArgumentMod2 => omega.rem_euclid(2.0),
        }
    }
}

/// Anything that can evaluate the deviation function.
pub trait DeviationSource: Sync {
    fn deviation(&self, omega: f64) -> Result<f64, HolonomyError>;
}

/// Recomputes every value by orbit integration.
#[derive(Debug, Clone)]
pub struct DirectDeviation {
    pub params: FlowParams,
    pub reading: DeviationReading,
    /// Arguments closer than this to an odd integer are rejected.
    pub margin: f64,
}

impl DirectDeviation {
    pub fn new(params: &FlowParams, reading: DeviationReading, margin: f64) -> Self {
        Self {
            params: params.clone(),
            reading,
            margin,
        }
    }
}

impl DeviationSource for DirectDeviation {
    fn deviation(&self, omega: f64) -> Result<f64, HolonomyError> {
        let w = self.reading.reduce(omega);
        if separatrix_distance(w) < self.margin {
            return Err(HolonomyError::Separatrix {
                omega,
                margin: self.margin,
            });
        }
        deviation_f(w, &self.params)
    }
}

/// Tabulated deviation function on `[-1, 3)` with linear interpolation.
#[derive(Debug, Clone)]
pub struct DeviationTable {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub params_hash: String,
    pub step: f64,
    pub margin: f64,
    pub reading: DeviationReading,
}

impl DeviationTable {
    /// Tabulates on multiples of `step` in `[-1, 3)` at distance at least
    /// `margin` from the odd integers.
    pub fn build(params: &FlowParams, step: f64, margin: f64) -> Result<Self, HolonomyError> {
        let n = (4.0 / step).round() as usize;
        let grid: Vec<f64> = (0..n)
            .map(|i| -1.0 + i as f64 * step)
            .filter(|w| separatrix_distance(*w) >= margin)
            .collect();
        let values = grid
            .par_iter()
            .map(|w| deviation_f(*w, params))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            grid,
            values,
            params_hash: params.fingerprint(),
            step,
            margin,
            reading: DeviationReading::Lifted,
        })
    }

    pub fn with_reading(mut self, reading: DeviationReading) -> Self {
        self.reading = reading;
        self
    }

    fn lookup(&self, w: f64) -> Option<f64> {
        let idx = self.grid.partition_point(|g| *g <= w);
        if idx == 0 || idx == self.grid.len() {
            return None;
        }
        let (a, b) = (self.grid[idx - 1], self.grid[idx]);
        if b - a > 1.5 * self.step {
            // bracket straddles an excluded separatrix neighborhood
            return None;
        }
        let s = (w - a) / (b - a);
        Some((1.0 - s) * self.values[idx - 1] + s * self.values[idx])
    }

    /// CSV with header `omega,f`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# params {}\nomega,f\n", self.params_hash);
        for (w, f) in self.grid.iter().zip(&self.values) {
            out.push_str(&format!("{w:.10},{f:.12e}\n"));
        }
        out
    }
}

impl DeviationSource for DeviationTable {
    fn deviation(&self, omega: f64) -> Result<f64, HolonomyError> {
        let w = self.reading.reduce(omega);
        // the table is stored on [-1, 3); a mod-2 argument in [0, 2) is inside
        self.lookup(w).ok_or(HolonomyError::Separatrix {
            omega,
            margin: self.margin,
        })
    }
}

/// Which of its two roles a torus coordinate is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySide {
    /// Coordinates of `T_k` as the inflow edge of copy `k`.
    Inflow,
    /// Coordinates of `T_k` as the outflow disc boundary of copy `k - 1`.
    Outflow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusCoord {
    pub omega: f64,
    pub theta: f64,
    /// 1..=5; `T_5` is `T_1` translated by `c^4`.
    pub torus: u8,
    pub side: BoundarySide,
}

/// `A(omega, theta) = (theta, -omega)`.
pub fn a_map(omega: f64, theta: f64) -> (f64, f64) {
    (theta, -omega)
}

/// `A^-1(omega, theta) = (-theta, omega)`.
pub fn a_inv_map(omega: f64, theta: f64) -> (f64, f64) {
    (-theta, omega)
}

/// Outflow coordinates of `T_k`, `k = 2..=5`, to inflow coordinates.
pub fn glue_a_inv(c: TorusCoord) -> Result<TorusCoord, HolonomyError> {
    if c.side != BoundarySide::Outflow || !(2..=5).contains(&c.torus) {
        return Err(HolonomyError::WrongBoundary {
            torus: c.torus,
            side: c.side,
        });
    }
    let (omega, theta) = a_inv_map(c.omega, c.theta);
    Ok(TorusCoord {
        omega,
        theta,
        torus: c.torus,
        side: BoundarySide::Inflow,
    })
}

/// Inflow coordinates of `T_k`, `k = 2..=5`, back to outflow coordinates.
pub fn glue_a(c: TorusCoord) -> Result<TorusCoord, HolonomyError> {
    if c.side != BoundarySide::Inflow || !(2..=5).contains(&c.torus) {
        return Err(HolonomyError::WrongBoundary {
            torus: c.torus,
            side: c.side,
        });
    }
    let (omega, theta) = a_map(c.omega, c.theta);
    Ok(TorusCoord {
        omega,
        theta,
        torus: c.torus,
        side: BoundarySide::Outflow,
    })
}

/// The composite `A^-1 h_i ... A^-1 h_1 (omega, 0)` from the explicit
/// formulas (which use oddness of the deviation function to simplify).
pub fn boundary_holonomy_closed_form(
    i: usize,
    omega: f64,
    f: &dyn DeviationSource,
) -> Result<(f64, f64), HolonomyError> {
    if !(1..=4).contains(&i) {
        return Err(HolonomyError::BadIndex(i));
    }
    let f1 = f.deviation(omega)?;
    if i == 1 {
        return Ok((-f1, omega));
    }
    let f2 = f.deviation(f1)?;
    if i == 2 {
        return Ok((-omega + f2, -f1));
    }
    let p = f1 + f.deviation(omega - f2)?;
    if i == 3 {
        return Ok((p, -omega + f2));
    }
    Ok((omega - f2 - f.deviation(p)?, p))
}

/// One traversal `g(omega, theta) = A^-1(omega, theta + f(omega))`.
pub fn traverse_copy(
    omega: f64,
    theta: f64,
    f: &dyn DeviationSource,
) -> Result<(f64, f64), HolonomyError> {
    let d = f.deviation(omega)?;
    Ok(a_inv_map(omega, theta + d))
}

/// Iterates [`traverse_copy`] `i` times from `(omega, 0)`.
pub fn boundary_holonomy_iterated(
    i: usize,
    omega: f64,
    f: &dyn DeviationSource,
) -> Result<(f64, f64), HolonomyError> {
    if !(1..=4).contains(&i) {
        return Err(HolonomyError::BadIndex(i));
    }
    let mut c = (omega, 0.0);
    for _ in 0..i {
        c = traverse_copy(c.0, c.1, f)?;
    }
    Ok(c)
}

/// Flow-level record of one copy traversal.
#[derive(Debug, Clone, PartialEq)]
pub struct CopyTraversal {
    /// 1-based copy index.
    pub copy: usize,
    pub entry: TorusCoord,
    /// Outflow coordinates on `T_{copy+1}`; `omega` is re-measured at the exit
    /// point, not carried over from the entry.
    pub exit: TorusCoord,
    pub time: f64,
    pub exit_point: BandPoint,
}

/// Traces the actual orbit through `copies` consecutive copies starting at
/// inflow coordinates `(omega, theta)` of `T_1`. Odd copies are entered
/// through the top edge, even copies through the bottom edge.
pub fn trace_cover(
    omega: f64,
    theta: f64,
    copies: usize,
    margin: f64,
    params: &FlowParams,
) -> Result<Vec<CopyTraversal>, HolonomyError> {
    let mut out = Vec::with_capacity(copies);
    let mut entry = TorusCoord {
        omega,
        theta,
        torus: 1,
        side: BoundarySide::Inflow,
    };
    for copy in 1..=copies {
        let w = wrap4(entry.omega);
        if separatrix_distance(w) < margin {
            return Err(HolonomyError::Separatrix {
                omega: entry.omega,
                margin,
            });
        }
        let start = if copy % 2 == 1 {
            BandPoint::new(w, 1.0, entry.theta)
        } else {
            BandPoint::new(2.0 - w, -1.0, entry.theta)
        };
        let seg = integrate_orbit_with_omega(
            start,
            Some(w),
            &[StopCondition::DiscBoundary],
            params,
            false,
        )?;
        let (time, end) = seg.last();
        let w_exit = eval_omega(end.x, end.y, params)?;
        let shift = wrap4(w_exit - w + 2.0) - 2.0;
        let exit = TorusCoord {
            omega: entry.omega + shift,
            theta: end.theta,
            torus: (copy + 1) as u8,
            side: BoundarySide::Outflow,
        };
        out.push(CopyTraversal {
            copy,
            entry,
            exit,
            time,
            exit_point: end,
        });
        entry = glue_a_inv(exit)?;
    }
    Ok(out)
}

/// One row of a holonomy verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct HolonomyRow {
    pub omega: f64,
    /// `None` when an intermediate argument is inadmissible.
    pub closed: Option<(f64, f64)>,
    pub flow: Option<(f64, f64)>,
    pub error: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolonomyReport {
    pub index: usize,
    pub rows: Vec<HolonomyRow>,
}

impl HolonomyReport {
    /// Largest discrepancy over admissible rows.
    pub fn max_error(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.error)
            .fold(0.0, f64::max)
    }

    pub fn checked_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// CSV with header `omega,closed_omega,closed_theta,flow_omega,flow_theta,err`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,closed_omega,closed_theta,flow_omega,flow_theta,err,note\n");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{:.10},{},{},{},{},{},{}\n",
                r.omega,
                fmt(r.closed.map(|c| c.0)),
                fmt(r.closed.map(|c| c.1)),
                fmt(r.flow.map(|c| c.0)),
                fmt(r.flow.map(|c| c.1)),
                fmt(r.error),
                r.note
            ));
        }
        out
    }
}

/// Compares the closed-form composite `i` against traced orbits on `grid`.
/// Rows whose closed form or trace meets a separatrix neighborhood (distance
/// `margin`) are kept in the report but not compared.
pub fn verify_holonomy_against_flow(
    i: usize,
    grid: &[f64],
    margin: f64,
    f: &dyn DeviationSource,
    params: &FlowParams,
) -> Result<HolonomyReport, HolonomyError> {
    if !(1..=4).contains(&i) {
        return Err(HolonomyError::BadIndex(i));
    }
    let rows = grid
        .par_iter()
        .map(|&omega| {
            let closed = boundary_holonomy_closed_form(i, omega, f);
            let flow = trace_cover(omega, 0.0, i, margin, params).map(|tr| {
                let last = tr.last().expect("at least one copy");
                let next = glue_a_inv(last.exit).expect("outflow side");
                (next.omega, next.theta)
            });
            match (closed, flow) {
                (Ok(c), Ok(fl)) => HolonomyRow {
                    omega,
                    closed: Some(c),
                    flow: Some(fl),
                    error: Some((c.0 - fl.0).abs().max((c.1 - fl.1).abs())),
                    note: String::new(),
                },
                (c, fl) => HolonomyRow {
                    omega,
                    closed: c.ok(),
                    flow: fl.ok(),
                    error: None,
                    note: "separatrix".to_string(),
                },
            }
        })
        .collect();
    Ok(HolonomyReport { index: i, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BetaProfile;

    struct Odd;
    impl DeviationSource for Odd {
        fn deviation(&self, w: f64) -> Result<f64, HolonomyError> {
            Ok(0.1 * (0.5 * PI * w).sin() + 0.05 * w.powi(3) / (1.0 + w * w))
        }
    }

    #[test]
    fn gluing_formulas() {
        assert_eq!(a_map(1.0, 2.0), (2.0, -1.0));
        let mut c = (0.3, -0.7);
        for _ in 0..4 {
            c = a_map(c.0, c.1);
        }
        assert_eq!(c, (0.3, -0.7));
        let mut state = 42u64;
        for _ in 0..100 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let w = (state >> 11) as f64 / (1u64 << 53) as f64 * 8.0 - 4.0;
            let th = ((state >> 7) % 1000) as f64 / 1000.0;
            let (a, b) = a_map(w, th);
            assert_eq!(a_inv_map(a, b), (w, th));
        }
    }

    #[test]
    fn glue_side_checks() {
        let out = TorusCoord {
            omega: 0.2,
            theta: 0.4,
            torus: 2,
            side: BoundarySide::Outflow,
        };
        let inn = glue_a_inv(out).unwrap();
        assert_eq!((inn.omega, inn.theta, inn.side), (-0.4, 0.2, BoundarySide::Inflow));
        assert_eq!(glue_a(inn).unwrap(), out);
        assert!(matches!(glue_a_inv(inn), Err(HolonomyError::WrongBoundary { .. })));
        let t1 = TorusCoord { torus: 1, ..out };
        assert!(glue_a_inv(t1).is_err());
    }

    #[test]
    fn closed_form_equals_iteration_for_odd_functions() {
        for &w in &[0.0, 0.2, 0.77, 1.5, -0.4] {
            for i in 1..=4 {
                let a = boundary_holonomy_closed_form(i, w, &Odd).unwrap();
                let b = boundary_holonomy_iterated(i, w, &Odd).unwrap();
                assert!((a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-14);
            }
        }
        assert_eq!(boundary_holonomy_closed_form(4, 0.0, &Odd).unwrap(), (0.0, 0.0));
        assert!(boundary_holonomy_closed_form(5, 0.0, &Odd).is_err());
    }

    #[test]
    fn deviation_zero_and_odd() {
        let p = FlowParams::default();
        assert_eq!(deviation_f(0.0, &p).unwrap(), 0.0);
        for &w in &[0.1, 0.45, 0.8, 1.3] {
            let a = deviation_f(w, &p).unwrap();
            let b = deviation_f(-w, &p).unwrap();
            assert!((a + b).abs() < 10.0 * p.ode_tol, "{w}: {a} {b}");
        }
        assert!(matches!(
            deviation_f(1.0, &p),
            Err(HolonomyError::Separatrix { .. })
        ));
    }

    #[test]
    fn beta_integral_levels_and_linearity() {
        let p = FlowParams::default();
        let i1 = beta_band_integral(&p);
        let i2 = quad::integrate(
            |u| base_flow::beta(u, &p) / u,
            base_flow::BETA_LO,
            base_flow::BETA_HI,
            1e-10,
        );
        assert!(i1 > 0.0);
        assert!((i1 - i2).abs() < 1e-10);
        let doubled = FlowParams {
            beta_scale: 2.0,
            ..p.clone()
        };
        assert!((beta_band_integral(&doubled) - 2.0 * i1).abs() < 1e-15);
        let zero = FlowParams {
            beta: BetaProfile::Zero,
            ..p
        };
        assert_eq!(beta_band_integral(&zero), 0.0);
    }

    #[test]
    fn beta_integral_against_trapezoid() {
        // the integrand is flat to all orders at both ends of the band
        let p = FlowParams::default();
        let n = 20000;
        let (a, b) = (base_flow::BETA_LO, base_flow::BETA_HI);
        let h = (b - a) / n as f64;
        let trap: f64 = (1..n)
            .map(|k| {
                let u = a + k as f64 * h;
                base_flow::beta(u, &p) / u
            })
            .sum::<f64>()
            * h;
        assert!((trap - beta_band_integral(&p)).abs() < 1e-12);
    }

    #[test]
    fn table_interpolates_and_flags_separatrices() {
        let p = FlowParams::default();
        let table = DeviationTable::build(&p, 1.0 / 16.0, 0.05).unwrap();
        assert!(table.deviation(0.0).unwrap().abs() < 1e-12);
        let direct = deviation_f(0.3, &p).unwrap();
        assert!((table.deviation(0.3).unwrap() - direct).abs() < 1e-2);
        assert!(table.deviation(1.0).is_err());
        assert!((table.deviation(4.3).unwrap() - table.deviation(0.3).unwrap()).abs() < 1e-12);
        assert!(table.to_csv().contains("omega,f\n"));
    }
}
