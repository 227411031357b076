//! Poincaré section, first-return map with homotopy words, return-time
//! constants and the fiberwise contraction certificate.
//!
//! The section has five pieces. `S_0` is the inflow torus `T_1` of the first
//! cover copy; `S_k`, `k = 1..=4`, is the disc of radius `eps` around a saddle
//! of copy `k`, taken at circle coordinate `theta = 0 mod 1`.
//!
//! Inside copy `k` the fiber metric is `|C^{-W} v|` with potential
//! `W = w_k(omega, theta)` in lifted chart coordinates. The flow is the
//! identity on fibers, so a return rescales a vector of the `mu`-eigenspace of
//! `C` by `mu^{-(W_end - W_start)}`.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::base_flow::{
    self, eval_omega, integrate_orbit_with_omega, nearest_saddle, wrap4, BandPoint, FlowError,
    StopCondition, TerminalEvent,
};
use crate::config::FlowParams;
use crate::fiber_metric::{mu, FiberMetric, MetricError};
use crate::group_rep::{
    build_blocks_dim, build_representation, eval_word, spectral_check, ExponentTuple, RepError,
    Representation, SpectralError, Word,
};
use crate::holonomy::{
    a_inv_map, boundary_holonomy_closed_form, glue_a_inv, separatrix_distance, trace_cover,
    DeviationSource, HolonomyError,
};

pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_MARGIN: f64 = 1e-3;
/// `T_1 = T1_MULTIPLE * T_0`.
pub const T1_MULTIPLE: f64 = 20.0;
/// Disc hits closer than this to the previous one are the same crossing.
const DISC_DEBOUNCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SectionError {
    #[error("disc radius {0} must lie in (0, 1/4)")]
    BadEpsilon(f64),
    #[error("invalid section point: {0}")]
    BadPoint(String),
    #[error("orbit still circling a disc at time {time}")]
    NoExit { time: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Holonomy(#[from] HolonomyError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Rep(#[from] RepError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Vertices of the transition diagram: the tori `T_1..T_5` and discs `D_1..D_4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Piece {
    Torus(u8),
    Disc(u8),
}

impl fmt::Display for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Piece::Torus(i) => write!(f, "T{i}"),
            Piece::Disc(i) => write!(f, "D{i}"),
        }
    }
}

/// Edges `T_i -> T_{i+1}`, `T_i -> D_i`, `D_i -> D_i`, `D_i -> T_{i+1}`.
pub fn is_diagram_edge(from: Piece, to: Piece) -> bool {
    let ok = |i: u8| (1..=4).contains(&i);
    match (from, to) {
        (Piece::Torus(i), Piece::Torus(j)) | (Piece::Disc(i), Piece::Torus(j)) => ok(i) && j == i + 1,
        (Piece::Torus(i), Piece::Disc(j)) | (Piece::Disc(i), Piece::Disc(j)) => ok(i) && j == i,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SectionPoint {
    /// Lifted inflow coordinates on `T_1`.
    Torus { omega: f64, theta: f64 },
    /// The band point `(center + u, v)` of copy `copy` at `theta = winding`.
    /// `omega` is the lifted chart coordinate of its orbit.
    Disc {
        copy: u8,
        center: f64,
        u: f64,
        v: f64,
        omega: f64,
        winding: i64,
    },
}

impl SectionPoint {
    pub fn torus(omega: f64, theta: f64) -> Self {
        SectionPoint::Torus { omega, theta }
    }

    /// Disc point with chart coordinate `omega` measured from the band point.
    pub fn disc(
        copy: u8,
        center: f64,
        u: f64,
        v: f64,
        params: &FlowParams,
    ) -> Result<Self, SectionError> {
        let omega = eval_omega(center + u, v, params)?;
        Ok(SectionPoint::Disc {
            copy,
            center,
            u,
            v,
            omega,
            winding: 0,
        })
    }

    pub fn piece(&self) -> Piece {
        match *self {
            SectionPoint::Torus { .. } => Piece::Torus(1),
            SectionPoint::Disc { copy, .. } => Piece::Disc(copy),
        }
    }

    fn validate(&self, eps: f64) -> Result<(), SectionError> {
        match *self {
            SectionPoint::Torus { omega, theta } => {
                if !(omega.is_finite() && theta.is_finite()) {
                    return Err(SectionError::BadPoint(format!("{self}")));
                }
            }
            SectionPoint::Disc {
                copy, center, u, v, ..
            } => {
                let odd = (center - nearest_saddle(center)).abs() < 1e-12;
                if !(1..=4).contains(&copy) || !odd || u.hypot(v) > eps * (1.0 + 1e-9) {
                    return Err(SectionError::BadPoint(format!("{self}")));
                }
            }
        }
        Ok(())
    }

    /// Chart index and lifted chart coordinates `(omega, theta)`.
    fn chart_coords(&self) -> (u8, f64, f64) {
        match *self {
            SectionPoint::Torus { omega, theta } => (1, omega, theta),
            SectionPoint::Disc {
                copy,
                omega,
                winding,
                ..
            } => (copy, omega, winding as f64),
        }
    }
}

impl fmt::Display for SectionPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SectionPoint::Torus { omega, theta } => write!(f, "S0({omega:.9}, {theta:.9})"),
            SectionPoint::Disc {
                copy, center, u, v, ..
            } => write!(f, "S{copy}[{center}]({u:.9}, {v:.9})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransitionKind {
    S0ToS0,
    S0ToSi,
    SiToSi,
    SiToSj,
    SiToS0,
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransitionKind::S0ToS0 => "S0->S0",
            TransitionKind::S0ToSi => "S0->Si",
            TransitionKind::SiToSi => "Si->Si",
            TransitionKind::SiToSj => "Si->Sj",
            TransitionKind::SiToS0 => "Si->S0",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnRecord {
    pub start: SectionPoint,
    pub end: SectionPoint,
    pub return_time: f64,
    pub homotopy_word: Word,
    pub stable_factor: f64,
    pub unstable_factor: f64,
    /// Diagram vertices visited, start and end included.
    pub path: Vec<Piece>,
    /// Exponent `e` with `stable_factor = mu^-e`.
    pub exponent: f64,
    /// Part of the exponent not carried by the word: offsets of the end
    /// points from their chart basepoints, or excess return time on a disc.
    pub drift: f64,
}

impl ReturnRecord {
    pub fn kind(&self) -> TransitionKind {
        match (self.start, self.end) {
            (SectionPoint::Torus { .. }, SectionPoint::Torus { .. }) => TransitionKind::S0ToS0,
            (SectionPoint::Torus { .. }, SectionPoint::Disc { .. }) => TransitionKind::S0ToSi,
            (SectionPoint::Disc { .. }, SectionPoint::Torus { .. }) => TransitionKind::SiToS0,
            (SectionPoint::Disc { copy: a, .. }, SectionPoint::Disc { copy: b, .. }) => {
                if a == b {
                    TransitionKind::SiToSi
                } else {
                    TransitionKind::SiToSj
                }
            }
        }
    }

    /// First consecutive pair of the path that is not a diagram edge.
    pub fn bad_edge(&self) -> Option<(Piece, Piece)> {
        self.path
            .windows(2)
            .map(|w| (w[0], w[1]))
            .find(|&(a, b)| !is_diagram_edge(a, b))
    }
}

/// `rho(word)` against the metric bookkeeping of one return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WordMetricCheck {
    /// `|rho(word)^-1 v|` for the unit stable vector.
    pub from_word: f64,
    /// `mu^-drift`.
    pub from_drift: f64,
    pub stable_factor: f64,
    pub rel_error: f64,
}

/// Where an orbit currently is: copy, lifted chart `omega`, band point.
#[derive(Debug, Clone, Copy)]
struct Cursor {
    copy: u8,
    omega: f64,
    point: BandPoint,
    time: f64,
}

enum Hop {
    Disc,
    Crossed,
}

fn entry_point(copy: u8, omega: f64, theta: f64) -> BandPoint {
    let w = wrap4(omega);
    if copy % 2 == 1 {
        BandPoint::new(w, 1.0, theta)
    } else {
        BandPoint::new(2.0 - w, -1.0, theta)
    }
}

fn theta_letter(chart: u8) -> String {
    format!("theta{}", if chart == 5 { 1 } else { chart })
}

/// Integer part of a lifted circle coordinate; disc points sit at integers
/// up to the event tolerance.
fn winding_of(theta: f64, on_disc: bool) -> i64 {
    if on_disc {
        theta.round() as i64
    } else {
        theta.floor() as i64
    }
}

/// The word `theta_i^-a c^(j-i) theta_j^b` joining chart basepoints.
pub fn chain_word(i: u8, a: i64, j: u8, b: i64) -> Word {
    let mut w = Word::identity();
    w.push(&theta_letter(i), -a);
    w.push("c", i64::from(j) - i64::from(i));
    w.push(&theta_letter(j), b);
    w
}

/// Time constants of the section.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeConstants {
    /// Return time of the orbit through a disc center.
    pub t0: f64,
    pub t1: f64,
    /// Longest measured transit `T_i -> T_{i+1}`, `T_i -> D_i` or `D_i -> T_{i+1}`.
    pub t2: f64,
    /// Fraction of sampled disc points still circling after `T_1`.
    pub u_t1_fraction: f64,
    /// Longest sampled stay near a disc.
    pub max_residence: f64,
    pub segments: usize,
}

impl TimeConstants {
    pub fn return_bound(&self) -> f64 {
        4.0 * (self.t1 + 2.0 * self.t2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    /// Number of `S_0` points with `omega` in `(0, 2)`.
    pub omegas: usize,
    pub disc_radii: usize,
    pub disc_angles: usize,
    pub margin: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            omegas: 64,
            disc_radii: 4,
            disc_angles: 16,
            margin: DEFAULT_MARGIN,
        }
    }
}

/// `n` points of `(0, 2)` at distance at least `margin` from `0`, `1` and `2`,
/// half on each side of `1`.
pub fn omega_grid(n: usize, margin: f64) -> Vec<f64> {
    let left = n / 2 + n % 2;
    let right = n / 2;
    let side = |k: usize, offset: f64| -> Vec<f64> {
        match k {
            0 => vec![],
            1 => vec![offset + 0.5],
            _ => (0..k)
                .map(|i| offset + margin + (1.0 - 2.0 * margin) * i as f64 / (k - 1) as f64)
                .collect(),
        }
    };
    let mut out = side(left, 0.0);
    out.extend(side(right, 1.0));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub grid: usize,
    /// Grid margin around `0`, `1`, `2`.
    pub margin: f64,
    /// Deviation arguments closer than this to an odd integer exclude a row.
    pub arg_margin: f64,
    /// Tolerance on `f < 0` before a sign violation is reported.
    pub sign_tol: f64,
    /// The row cross-validated by transporting a fiber vector along the
    /// traced orbit.
    pub cross_check_omega: f64,
    /// Tolerance of that cross-validation on the exponent.
    pub flow_tol: f64,
}

impl CertifyOptions {
    pub fn new(params: &FlowParams) -> Self {
        Self {
            grid: 256,
            margin: DEFAULT_MARGIN,
            arg_margin: 1e-6,
            sign_tol: 10.0 * params.ode_tol,
            cross_check_omega: 0.5,
            flow_tol: 10.0 * params.ode_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateRow {
    pub omega: f64,
    pub f_bar: Option<f64>,
    pub e_omega: Option<f64>,
    pub stable_factor: Option<f64>,
    pub unstable_factor: Option<f64>,
    pub return_time: Option<f64>,
    pub word: Option<Word>,
    /// Exponent recomputed from the traced orbit.
    pub e_flow: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertViolation {
    #[error("SignViolation: f({omega}) = {value:e} < 0")]
    SignViolation { omega: f64, value: f64 },
    #[error("ExponentBelowFour: e({omega}) = {e}")]
    ExponentBelowFour { omega: f64, e: f64 },
    #[error("StableFactor: {factor} at omega = {omega} exceeds mu^-4 + 1e-6")]
    StableFactor { omega: f64, factor: f64 },
    #[error("UnstableFactor: {factor} at omega = {omega} below mu^4 - 1e-3")]
    UnstableFactor { omega: f64, factor: f64 },
    #[error("Duality: stable * unstable = {product} at omega = {omega}")]
    Duality { omega: f64, product: f64 },
    #[error("LimitRow: factor {factor} at omega = 0 differs from mu^-4")]
    LimitRow { factor: f64 },
    #[error("CrossCheck: transported factor {flow} against {closed} at omega = {omega}")]
    CrossCheck { omega: f64, closed: f64, flow: f64 },
    #[error("TransitionClosure: {from} -> {to} is not a diagram edge (start {start})")]
    TransitionClosure { from: Piece, to: Piece, start: f64 },
    #[error("NoRows: every grid point was excluded")]
    NoRows,
}

/// A fiber vector carried along the traced orbit of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheck {
    pub omega: f64,
    /// Landing on `T_5` from orbit integration.
    pub landing: (f64, f64),
    /// `|v|` at the landing over `|v|` at the start, `v` in `E^s`.
    pub flow_factor: f64,
    pub closed_factor: f64,
    pub exponent_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCertificate {
    /// The exact row at `omega = 0` (the closed orbit homotopic to `c^4`).
    pub limit_row: CertificateRow,
    pub rows: Vec<CertificateRow>,
    pub cross_check: Option<CrossCheck>,
    pub transitions_checked: usize,
    pub violations: Vec<CertViolation>,
}

impl ContractionCertificate {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn certified(&self) -> impl Iterator<Item = &CertificateRow> {
        self.rows.iter().filter(|r| r.e_omega.is_some())
    }

    pub fn certified_rows(&self) -> usize {
        self.certified().count()
    }

    pub fn min_exponent(&self) -> f64 {
        self.certified().filter_map(|r| r.e_omega).fold(f64::INFINITY, f64::min)
    }

    pub fn max_stable_factor(&self) -> f64 {
        self.certified().filter_map(|r| r.stable_factor).fold(0.0, f64::max)
    }

    pub fn min_unstable_factor(&self) -> f64 {
        self.certified()
            .filter_map(|r| r.unstable_factor)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_duality_error(&self) -> f64 {
        self.certified()
            .filter_map(|r| Some((r.stable_factor? * r.unstable_factor? - 1.0).abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_flow_error(&self) -> f64 {
        self.certified()
            .filter_map(|r| Some((r.e_flow? - r.e_omega?).abs()))
            .fold(0.0, f64::max)
    }

    /// CSV with header `omega,e_omega,stable_factor,unstable_factor,return_time,word`;
    /// the limit row comes first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,e_omega,stable_factor,unstable_factor,return_time,word\n");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        for r in std::iter::once(&self.limit_row).chain(&self.rows) {
            let word = match &r.word {
                Some(w) if r.e_omega.is_some() => w.to_string(),
                _ => format!("excluded: {}", r.note),
            };
            out.push_str(&format!(
                "{:.10},{},{},{},{},{}\n",
                r.omega,
                fmt(r.e_omega),
                fmt(r.stable_factor),
                fmt(r.unstable_factor),
                fmt(r.return_time),
                word
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mu4 = mu().powi(-4);
        let mut s = String::new();
        s.push_str(&format!(
            "rows: {} certified, {} excluded\n",
            self.certified_rows(),
            self.rows.len() - self.certified_rows()
        ));
        s.push_str(&format!("min e_omega: {:.12}\n", self.min_exponent()));
        s.push_str(&format!(
            "max stable_factor: {:.12e} (bound {:.12e})\n",
            self.max_stable_factor(),
            mu4 + 1e-6
        ));
        s.push_str(&format!(
            "min unstable_factor: {:.12e} (bound {:.12e})\n",
            self.min_unstable_factor(),
            mu().powi(4) - 1e-3
        ));
        s.push_str(&format!("max duality error: {:.3e}\n", self.max_duality_error()));
        s.push_str(&format!(
            "limit row factor: {:.15e} (mu^-4 = {:.15e})\n",
            self.limit_row.stable_factor.unwrap_or(f64::NAN),
            mu4
        ));
        s.push_str(&format!("max traced exponent error: {:.3e}\n", self.max_flow_error()));
        if let Some(c) = &self.cross_check {
            s.push_str(&format!(
                "cross-check at omega = {}: transported {:.12e}, closed form {:.12e}\n",
                c.omega, c.flow_factor, c.closed_factor
            ));
        }
        s.push_str(&format!("transitions checked: {}\n", self.transitions_checked));
        match self.violations.first() {
            None => s.push_str("result: PASS\n"),
            Some(v) => s.push_str(&format!(
                "result: FAIL ({} violations, first: {v})\n",
                self.violations.len()
            )),
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedRow {
    pub kind: TransitionKind,
    pub start: SectionPoint,
    pub return_time: f64,
    pub exponent: f64,
    pub stable_factor: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedReport {
    pub rows: Vec<MixedRow>,
}

impl MixedReport {
    pub fn kinds_covered(&self) -> BTreeSet<TransitionKind> {
        self.rows.iter().map(|r| r.kind).collect()
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// CSV with header `kind,start,return_time,exponent,stable_factor,pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,start,return_time,exponent,stable_factor,pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e},{}\n",
                r.kind,
                r.start.to_string().replace(", ", " "),
                r.return_time,
                r.exponent,
                r.stable_factor,
                r.pass
            ));
        }
        out
    }
}

/// Flow parameters, representation and fiber metric shared by all section
/// computations.
#[derive(Debug, Clone)]
pub struct SectionContext {
    pub params: FlowParams,
    pub eps: f64,
    pub tuple: ExponentTuple,
    pub rep: Representation,
    pub metric: FiberMetric,
    /// Unit vector of the `mu`-eigenspace of `C`: contracted by returns.
    pub stable: DVector<f64>,
    /// Unit vector of the `1/mu`-eigenspace of `C`.
    pub unstable: DVector<f64>,
}

impl SectionContext {
    pub fn new(
        params: &FlowParams,
        tuple: &ExponentTuple,
        d: usize,
        eps: f64,
    ) -> Result<Self, SectionError> {
        if !(eps > 0.0 && eps < base_flow::DISC_RADIUS) {
            return Err(SectionError::BadEpsilon(eps));
        }
        let rep = build_representation(tuple, d)?;
        let metric = FiberMetric::new(d, tuple.t0, tuple.t[0], tuple.t[1])?;
        let (c, _) = build_blocks_dim(d)?;
        let split = spectral_check(&c, 1e-9)?
            .splitting
            .ok_or(SpectralError::NotHyperbolic { index: 0 })?;
        Ok(Self {
            params: params.clone(),
            eps,
            tuple: *tuple,
            rep,
            metric,
            stable: split.unstable.column(0).normalize(),
            unstable: split.stable.column(0).normalize(),
        })
    }

    fn potential(&self, chart: u8, omega: f64, theta: f64) -> f64 {
        self.metric
            .chart(chart)
            .expect("chart index in 1..=5")
            .exponent(omega, theta)
    }

    /// Norm ratio between potentials `w_start` and `w_end`.
    fn ratio(&self, v: &DVector<f64>, w_start: f64, w_end: f64) -> Result<f64, SectionError> {
        Ok(self.metric.norm_at_exponent(w_end, v)? / self.metric.norm_at_exponent(w_start, v)?)
    }

    /// The saddle of copy `k` where the circle turns with the sign of `t_k`,
    /// so that winding around it raises the chart potential.
    pub fn disc_center(&self, copy: u8) -> f64 {
        let rate = base_flow::theta_rate(1.0, 0.0, None, &self.params);
        let tk = self.tuple.t[usize::from(copy.clamp(1, 4)) - 1] as f64;
        if rate * tk >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn disc_center_point(&self, copy: u8) -> Result<SectionPoint, SectionError> {
        SectionPoint::disc(copy, self.disc_center(copy), 0.0, 0.0, &self.params)
    }

    fn start_cursor(&self, p: &SectionPoint) -> Cursor {
        match *p {
            SectionPoint::Torus { omega, theta } => Cursor {
                copy: 1,
                omega,
                point: entry_point(1, omega, theta),
                time: 0.0,
            },
            SectionPoint::Disc {
                copy,
                center,
                u,
                v,
                omega,
                winding,
            } => Cursor {
                copy,
                omega,
                point: BandPoint::new(center + u, v, winding as f64),
                time: 0.0,
            },
        }
    }

    /// Integrates to the next disc hit or copy exit.
    fn hop(&self, c: &Cursor) -> Result<(Hop, Cursor), SectionError> {
        let stops = [
            StopCondition::SectionDisc { eps: self.eps },
            StopCondition::DiscBoundary,
        ];
        let mut c = *c;
        let (seg, dt, end) = loop {
            let seg = integrate_orbit_with_omega(c.point, Some(wrap4(c.omega)), &stops, &self.params, false)?;
            let (dt, end) = seg.last();
            if seg.terminal_event == TerminalEvent::Stop(0, stops[0]) && dt < DISC_DEBOUNCE {
                // a start on the disc level re-detects its own crossing
                c = Cursor {
                    point: end,
                    time: c.time + dt,
                    ..c
                };
                continue;
            }
            break (seg, dt, end);
        };
        if let TerminalEvent::Stop(0, _) = seg.terminal_event {
            return Ok((
                Hop::Disc,
                Cursor {
                    point: end,
                    time: c.time + dt,
                    ..c
                },
            ));
        }
        let w = wrap4(c.omega);
        let w_exit = eval_omega(end.x, end.y, &self.params)?;
        let lift = c.omega + wrap4(w_exit - w + 2.0) - 2.0;
        let (omega, theta) = a_inv_map(lift, end.theta);
        let copy = c.copy + 1;
        Ok((
            Hop::Crossed,
            Cursor {
                copy,
                omega,
                point: entry_point(copy, omega, theta),
                time: c.time + dt,
            },
        ))
    }

    fn disc_end(c: &Cursor) -> SectionPoint {
        let center = nearest_saddle(c.point.x);
        SectionPoint::Disc {
            copy: c.copy,
            center,
            u: c.point.x - center,
            v: c.point.y,
            omega: c.omega,
            winding: winding_of(c.point.theta, true),
        }
    }

    /// The diagram vertex reached first from `p`.
    pub fn classify_transition(&self, p: &SectionPoint) -> Result<Piece, SectionError> {
        p.validate(self.eps)?;
        let (hop, c) = self.hop(&self.start_cursor(p))?;
        Ok(match hop {
            Hop::Disc => Piece::Disc(c.copy),
            Hop::Crossed => Piece::Torus(c.copy),
        })
    }

    /// First return of `p` to the section.
    pub fn return_map(&self, p: &SectionPoint) -> Result<ReturnRecord, SectionError> {
        p.validate(self.eps)?;
        let mut cur = self.start_cursor(p);
        let mut path = vec![p.piece()];
        let end = loop {
            let (hop, next) = self.hop(&cur)?;
            cur = next;
            match hop {
                Hop::Disc => {
                    path.push(Piece::Disc(cur.copy));
                    break Self::disc_end(&cur);
                }
                Hop::Crossed => {
                    path.push(Piece::Torus(cur.copy));
                    if cur.copy == 5 {
                        break SectionPoint::torus(cur.omega, cur.point.theta);
                    }
                }
            }
        };
        self.record(*p, end, cur.time, path)
    }

    fn record(
        &self,
        start: SectionPoint,
        end: SectionPoint,
        time: f64,
        path: Vec<Piece>,
    ) -> Result<ReturnRecord, SectionError> {
        let (i, ws, ts) = start.chart_coords();
        let (mut j, we, te) = end.chart_coords();
        if let SectionPoint::Torus { .. } = end {
            j = 5;
        }
        let start_disc = matches!(start, SectionPoint::Disc { .. });
        let end_disc = matches!(end, SectionPoint::Disc { .. });
        let a = winding_of(ts, start_disc);
        let b = winding_of(te, end_disc);
        let same_disc = start_disc && end_disc && i == j;
        let (word, exponent, drift, stable_factor, unstable_factor) = if same_disc {
            let t0 = self.tuple.t0;
            let m = &self.metric;
            let sf = m.section_norm(time, &self.stable, t0)? / m.section_norm(0.0, &self.stable, t0)?;
            let uf = m.section_norm(time, &self.unstable, t0)?
                / m.section_norm(0.0, &self.unstable, t0)?;
            let ti = self.tuple.t[usize::from(i) - 1];
            let k = b - a;
            let mut w = Word::identity();
            w.push(&theta_letter(i), k);
            let e = time * t0 as f64;
            (w, e, e - (ti * k) as f64, sf, uf)
        } else {
            let w_start = self.potential(i, ws, ts);
            let w_end = self.potential(j, we, te);
            let t0 = self.tuple.t0 as f64;
            let base_s = self.potential(i, ws, ts - a as f64) - t0 * f64::from(i - 1);
            let base_e = self.potential(j, we, te - b as f64) - t0 * f64::from(j - 1);
            (
                chain_word(i, a, j, b),
                w_end - w_start,
                base_e - base_s,
                self.ratio(&self.stable, w_start, w_end)?,
                self.ratio(&self.unstable, w_start, w_end)?,
            )
        };
        Ok(ReturnRecord {
            start,
            end,
            return_time: time,
            homotopy_word: word,
            stable_factor,
            unstable_factor,
            path,
            exponent,
            drift,
        })
    }

    /// Consecutive returns from `p` until the orbit is back on `S_0` or
    /// `max_returns` records have been produced.
    pub fn return_chain(
        &self,
        p: &SectionPoint,
        max_returns: usize,
    ) -> Result<Vec<ReturnRecord>, SectionError> {
        let mut out: Vec<ReturnRecord> = Vec::new();
        let mut cur = *p;
        while out.len() < max_returns {
            let r = self.return_map(&cur)?;
            cur = r.end;
            let back = matches!(cur, SectionPoint::Torus { .. });
            out.push(r);
            if back {
                break;
            }
        }
        Ok(out)
    }

    pub fn word_metric_check(&self, r: &ReturnRecord) -> Result<WordMetricCheck, SectionError> {
        let m = eval_word(&self.rep, &r.homotopy_word.inverse())?;
        let from_word = (m.to_real() * &self.stable).norm();
        let from_drift = mu().powf(-r.drift);
        let rel_error = (from_word * from_drift - r.stable_factor).abs() / r.stable_factor;
        Ok(WordMetricCheck {
            from_word,
            from_drift,
            stable_factor: r.stable_factor,
            rel_error,
        })
    }

    /// `n` reproducible section points: half on `S_0` with `omega` in
    /// `(0, 2)` away from the margins and uniform `theta`, half uniform on the
    /// discs.
    pub fn random_points(
        &self,
        n: usize,
        seed: u64,
        margin: f64,
    ) -> Result<Vec<SectionPoint>, SectionError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            if k % 2 == 0 {
                let omega = loop {
                    let w: f64 = rng.gen_range(margin..2.0 - margin);
                    if (w - 1.0).abs() >= margin {
                        break w;
                    }
                };
                out.push(SectionPoint::torus(omega, rng.gen_range(0.0..1.0)));
            } else {
                let copy: u8 = rng.gen_range(1..=4);
                let (u, v) = loop {
                    let u: f64 = rng.gen_range(-self.eps..self.eps);
                    let v: f64 = rng.gen_range(-self.eps..self.eps);
                    if u.hypot(v) <= self.eps {
                        break (u, v);
                    }
                };
                out.push(SectionPoint::disc(copy, self.disc_center(copy), u, v, &self.params)?);
            }
        }
        Ok(out)
    }

    /// Walks through copy `c.copy` to its exit, returning the disc hit times
    /// and the cursor on the next torus.
    fn cross_copy(&self, c: Cursor) -> Result<(Vec<f64>, Cursor), SectionError> {
        let mut hits = Vec::new();
        let mut cur = c;
        loop {
            if cur.time > self.params.max_time {
                return Err(SectionError::NoExit { time: cur.time });
            }
            let (hop, next) = self.hop(&cur)?;
            match hop {
                Hop::Disc => hits.push(next.time),
                Hop::Crossed => return Ok((hits, next)),
            }
            cur = next;
        }
    }

    pub fn measure_time_constants(&self, grid: &TimeGrid) -> Result<TimeConstants, SectionError> {
        let t0 = self.return_map(&self.disc_center_point(1)?)?.return_time;
        let t1 = T1_MULTIPLE * t0;

        let torus: Vec<f64> = omega_grid(grid.omegas, grid.margin)
            .par_iter()
            .map(|&w| -> Result<Vec<f64>, SectionError> {
                let mut cur = self.start_cursor(&SectionPoint::torus(w, 0.0));
                let mut segs = Vec::new();
                while cur.copy <= 4 {
                    let entry = cur.time;
                    let (hits, next) = self.cross_copy(cur)?;
                    match (hits.first(), hits.last()) {
                        (Some(&first), Some(&last)) => {
                            segs.push(first - entry);
                            segs.push(next.time - last);
                        }
                        _ => segs.push(next.time - entry),
                    }
                    cur = next;
                }
                Ok(segs)
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();

        let mut disc_starts = Vec::new();
        for copy in 1..=4u8 {
            let center = self.disc_center(copy);
            for ri in 0..grid.disc_radii {
                let r = self.eps * (ri as f64 + 0.5) / grid.disc_radii as f64;
                for ai in 0..grid.disc_angles {
                    let a = std::f64::consts::TAU * (ai as f64 + 0.5) / grid.disc_angles as f64;
                    disc_starts.push(SectionPoint::disc(
                        copy,
                        center,
                        r * a.cos(),
                        r * a.sin(),
                        &self.params,
                    )?);
                }
            }
        }
        let disc: Vec<(f64, f64)> = disc_starts
            .par_iter()
            .map(|p| -> Result<(f64, f64), SectionError> {
                let (hits, next) = self.cross_copy(self.start_cursor(p))?;
                let last = hits.last().copied().unwrap_or(0.0);
                Ok((last, next.time - last))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let t2 = torus
            .iter()
            .chain(disc.iter().map(|(_, s)| s))
            .fold(0.0, |m: f64, &s| m.max(s));
        let max_residence = disc.iter().fold(0.0, |m: f64, &(r, _)| m.max(r));
        let long = disc.iter().filter(|(r, _)| *r >= t1).count();
        Ok(TimeConstants {
            t0,
            t1,
            t2,
            u_t1_fraction: long as f64 / disc.len().max(1) as f64,
            max_residence,
            segments: torus.len() + disc.len(),
        })
    }

    /// Certificate of the `S_0 -> S_0` contraction on a grid of `(0, 2)`.
    pub fn certify_contraction(
        &self,
        f: &dyn DeviationSource,
        opts: &CertifyOptions,
    ) -> Result<ContractionCertificate, SectionError> {
        let limit_row = self.certificate_row(0.0, f, opts);
        let grid = omega_grid(opts.grid, opts.margin);
        let rows: Vec<CertificateRow> = grid
            .par_iter()
            .map(|&w| self.certificate_row(w, f, opts))
            .collect();
        let records: Vec<Result<ReturnRecord, SectionError>> = grid
            .par_iter()
            .map(|&w| self.return_map(&SectionPoint::torus(w, 0.0)))
            .collect();

        let mut violations = Vec::new();
        for r in &rows {
            if let Some(value) = r.f_bar {
                if value < -opts.sign_tol {
                    violations.push(CertViolation::SignViolation { omega: r.omega, value });
                }
            }
        }
        let mu4 = mu().powi(-4);
        for r in rows.iter().filter(|r| r.e_omega.is_some()) {
            let (e, s, u) = (
                r.e_omega.unwrap_or_default(),
                r.stable_factor.unwrap_or_default(),
                r.unstable_factor.unwrap_or_default(),
            );
            if e < 4.0 {
                violations.push(CertViolation::ExponentBelowFour { omega: r.omega, e });
            }
            if s > mu4 + 1e-6 {
                violations.push(CertViolation::StableFactor { omega: r.omega, factor: s });
            }
            if u < mu().powi(4) - 1e-3 {
                violations.push(CertViolation::UnstableFactor { omega: r.omega, factor: u });
            }
            if (s * u - 1.0).abs() > 1e-8 {
                violations.push(CertViolation::Duality {
                    omega: r.omega,
                    product: s * u,
                });
            }
        }
        let cross_check = self.cross_check(opts.cross_check_omega, f, opts)?;
        if cross_check.exponent_error > opts.flow_tol
            || (cross_check.flow_factor / cross_check.closed_factor - 1.0).abs() > 1e-6
        {
            violations.push(CertViolation::CrossCheck {
                omega: cross_check.omega,
                closed: cross_check.closed_factor,
                flow: cross_check.flow_factor,
            });
        }
        match limit_row.stable_factor {
            Some(s) if (s - mu4).abs() <= 1e-8 => {}
            s => violations.push(CertViolation::LimitRow {
                factor: s.unwrap_or(f64::NAN),
            }),
        }
        if rows.iter().all(|r| r.e_omega.is_none()) {
            violations.push(CertViolation::NoRows);
        }
        let mut transitions_checked = 0;
        for (w, rec) in grid.iter().zip(records) {
            let rec = rec?;
            transitions_checked += rec.path.len() - 1;
            if let Some((from, to)) = rec.bad_edge() {
                violations.push(CertViolation::TransitionClosure {
                    from,
                    to,
                    start: *w,
                });
            }
        }
        Ok(ContractionCertificate {
            limit_row,
            rows,
            cross_check: Some(cross_check),
            transitions_checked,
            violations,
        })
    }

    fn cross_check(
        &self,
        omega: f64,
        f: &dyn DeviationSource,
        opts: &CertifyOptions,
    ) -> Result<CrossCheck, SectionError> {
        let traced = trace_cover(omega, 0.0, 4, opts.arg_margin, &self.params)?;
        let landing = glue_a_inv(traced.last().expect("four traversals").exit)?;
        let closed = boundary_holonomy_closed_form(4, omega, f)?;
        let m = &self.metric;
        let v = &self.stable;
        let start = m.fiber_norm(&m.chart(1)?, omega, 0.0, v)?;
        let flow_factor = m.fiber_norm(&m.chart(5)?, landing.omega, landing.theta, v)? / start;
        let closed_factor = m.fiber_norm(&m.chart(5)?, closed.0, closed.1, v)? / start;
        Ok(CrossCheck {
            omega,
            landing: (landing.omega, landing.theta),
            flow_factor,
            closed_factor,
            exponent_error: (flow_factor.ln() - closed_factor.ln()).abs() / mu().ln(),
        })
    }

    fn certificate_row(&self, omega: f64, f: &dyn DeviationSource, opts: &CertifyOptions) -> CertificateRow {
        let mut row = CertificateRow {
            omega,
            f_bar: None,
            e_omega: None,
            stable_factor: None,
            unstable_factor: None,
            return_time: None,
            word: None,
            e_flow: None,
            note: String::new(),
        };
        row.f_bar = f.deviation(omega).ok();
        let landing = match boundary_holonomy_closed_form(4, omega, f) {
            Ok(l) => l,
            Err(e) => {
                row.note = e.to_string();
                return row;
            }
        };
        let w_start = self.potential(1, omega, 0.0);
        let w_end = self.potential(5, landing.0, landing.1);
        let factors = self
            .ratio(&self.stable, w_start, w_end)
            .and_then(|s| Ok((s, self.ratio(&self.unstable, w_start, w_end)?)));
        match factors {
            Ok((s, u)) => {
                row.stable_factor = Some(s);
                row.unstable_factor = Some(u);
            }
            Err(e) => {
                row.note = e.to_string();
                return row;
            }
        }
        row.e_omega = Some(w_end - w_start);
        row.word = Some(chain_word(1, 0, 5, winding_of(landing.1, false)));
        let traced = trace_cover(omega, 0.0, 4, opts.arg_margin, &self.params)
            .and_then(|t| {
                let exit = t.last().expect("four traversals").exit;
                Ok((t.iter().map(|c| c.time).sum::<f64>(), glue_a_inv(exit)?))
            });
        match traced {
            Ok((time, entry)) => {
                row.return_time = Some(time);
                row.e_flow = Some(self.potential(5, entry.omega, entry.theta) - w_start);
            }
            Err(e) => row.note = format!("not traced: {e}"),
        }
        row
    }

    /// Contraction on every kind of transition among `samples`.
    pub fn certify_mixed_transitions(
        &self,
        samples: &[SectionPoint],
    ) -> Result<MixedReport, SectionError> {
        let records = samples
            .par_iter()
            .map(|p| self.return_map(p))
            .collect::<Result<Vec<_>, _>>()?;
        let t0 = self.tuple.t0 as f64;
        let rows = records
            .into_iter()
            .map(|r| {
                let kind = r.kind();
                let pass = match kind {
                    TransitionKind::SiToSi => {
                        let expect = mu().powf(-r.return_time * t0);
                        r.stable_factor < 1.0 && (r.stable_factor - expect).abs() <= 1e-12 * expect
                    }
                    _ => r.exponent > 0.0 && r.stable_factor <= 1.0,
                };
                MixedRow {
                    kind,
                    start: r.start,
                    return_time: r.return_time,
                    exponent: r.exponent,
                    stable_factor: r.stable_factor,
                    pass,
                }
            })
            .collect();
        Ok(MixedReport { rows })
    }

    /// Starting points along the return chains of `(omega, 0)`: the `S_0`
    /// points themselves and every disc point the chain visits, with lifted
    /// chart coordinates carried along.
    pub fn chain_samples(
        &self,
        omegas: &[f64],
        max_returns: usize,
    ) -> Result<Vec<SectionPoint>, SectionError> {
        let chains = omegas
            .par_iter()
            .map(|&w| self.return_chain(&SectionPoint::torus(w, 0.0), max_returns))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::new();
        for chain in chains {
            for r in &chain {
                out.push(r.start);
            }
        }
        Ok(out)
    }
}

/// Chain starts that reach every kind of transition: orbits this close to the
/// separatrix through `omega = 1` pass the disc section, some of them several
/// times.
pub const CHAIN_OMEGAS: [f64; 8] = [
    0.3,
    0.9999,
    1.0 - 3e-5,
    1.0 - 1e-5,
    1.0 - 1e-7,
    1.0 + 1e-5,
    1.0 + 1e-4,
    1.5,
];

/// Whether a chain start `omega` lies at least `margin` from the odd integers.
pub fn admissible_omega(omega: f64, margin: f64) -> bool {
    separatrix_distance(omega) >= margin
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> SectionContext {
        SectionContext::new(&FlowParams::default(), &ExponentTuple::reference(), 4, DEFAULT_EPSILON)
            .unwrap()
    }

    #[test]
    fn diagram_edges() {
        assert!(is_diagram_edge(Piece::Torus(1), Piece::Torus(2)));
        assert!(is_diagram_edge(Piece::Torus(4), Piece::Torus(5)));
        assert!(is_diagram_edge(Piece::Torus(2), Piece::Disc(2)));
        assert!(is_diagram_edge(Piece::Disc(3), Piece::Disc(3)));
        assert!(is_diagram_edge(Piece::Disc(4), Piece::Torus(5)));
        assert!(!is_diagram_edge(Piece::Disc(1), Piece::Disc(2)));
        assert!(!is_diagram_edge(Piece::Torus(5), Piece::Torus(6)));
        assert!(!is_diagram_edge(Piece::Torus(1), Piece::Disc(2)));
    }

    #[test]
    fn grid_layout() {
        let g = omega_grid(256, 1e-3);
        assert_eq!(g.len(), 256);
        assert!(g.iter().all(|w| *w >= 1e-3 - 1e-15 && *w <= 2.0 - 1e-3 + 1e-15));
        assert!(g.iter().all(|w| (w - 1.0).abs() >= 1e-3 - 1e-15));
        assert!(g.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn chain_word_letters() {
        assert_eq!(chain_word(1, 0, 5, 0).to_string(), "c^4");
        assert_eq!(chain_word(2, 1, 5, -1).to_string(), "theta2^-1*c^3*theta1^-1");
    }

    #[test]
    fn origin_returns_along_c4() {
        let c = ctx();
        let r = c.return_map(&SectionPoint::torus(0.0, 0.0)).unwrap();
        assert_eq!(r.kind(), TransitionKind::S0ToS0);
        assert_eq!(r.homotopy_word.to_string(), "c^4");
        let SectionPoint::Torus { omega, theta } = r.end else {
            panic!("expected a torus landing")
        };
        assert!(omega.abs() < 1e-12 && theta.abs() < 1e-12);
        assert!((r.stable_factor - mu().powi(-4)).abs() < 1e-12);
        assert_eq!(
            r.path,
            [1, 2, 3, 4, 5].map(Piece::Torus).to_vec()
        );
    }

    #[test]
    fn disc_center_loops() {
        let c = ctx();
        for copy in 1..=4 {
            let p = c.disc_center_point(copy).unwrap();
            let r = c.return_map(&p).unwrap();
            assert_eq!(r.kind(), TransitionKind::SiToSi);
            assert!((r.return_time - 1.0).abs() < 1e-8, "{}", r.return_time);
            assert!((r.stable_factor - 1.0 / mu()).abs() < 1e-7);
            let check = c.word_metric_check(&r).unwrap();
            assert!(check.rel_error < 1e-9);
            assert_eq!(c.classify_transition(&p).unwrap(), Piece::Disc(copy));
        }
    }

    #[test]
    fn far_start_crosses_to_next_torus() {
        let c = ctx();
        assert_eq!(
            c.classify_transition(&SectionPoint::torus(0.3, 0.0)).unwrap(),
            Piece::Torus(2)
        );
    }

    #[test]
    fn bad_points_are_rejected() {
        let c = ctx();
        let p = SectionPoint::Disc {
            copy: 1,
            center: 1.0,
            u: 0.2,
            v: 0.0,
            omega: 1.0,
            winding: 0,
        };
        assert!(matches!(c.return_map(&p), Err(SectionError::BadPoint(_))));
        assert!(matches!(
            SectionContext::new(&FlowParams::default(), &ExponentTuple::reference(), 4, 0.3),
            Err(SectionError::BadEpsilon(_))
        ));
    }
}
