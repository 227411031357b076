//! Command-line driver: run configuration, the five commands and their report
//! files.
//!
//! Exit codes: 0 on success, 1 when a verification fails, 2 on configuration,
//! parse or input errors.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::base_flow::{
    disc_distance, integrate_orbit, nearest_saddle, BandPoint, FlowError, OrbitSegment,
    StopCondition,
};
use crate::config::{ConfigError, FlowParams, KeyValues};
use crate::group_rep::{
    build_blocks_dim, build_representation_unchecked, check_relators, checked_matrix_list,
    common_splitting, count_solutions, parse_presentation, solve_exponents, spectral_check,
    ExponentRanges, ExponentTuple, GroupPresentation, ParseError, RepError,
};
use crate::holonomy::{
    separatrix_distance, verify_holonomy_against_flow, DeviationReading, DeviationSource,
    DeviationTable, DirectDeviation, HolonomyError, HolonomyReport,
};
use crate::sections::{
    ContractionCertificate, CertifyOptions, MixedReport, SectionContext, SectionError,
    TimeConstants, TimeGrid, TransitionKind, CHAIN_OMEGAS, DEFAULT_EPSILON, DEFAULT_MARGIN,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Tolerance for the eigen-solves behind the representation checks.
const SPECTRAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("{path}:{source}")]
    Presentation { path: String, source: ParseError },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid start point `{0}`: expected `x,y` or `x,y,theta` inside the band")]
    BadStart(String),
    #[error(transparent)]
    Rep(#[from] RepError),
    #[error(transparent)]
    Holonomy(#[from] HolonomyError),
    #[error(transparent)]
    Section(#[from] SectionError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. }
            | CliError::Presentation { .. }
            | CliError::Io { .. }
            | CliError::BadStart(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fibrewise", version, about = "Fibrewise Anosov flow experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for report files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Number of grid points (overrides the config).
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub svg: bool,
    /// Seed for random sampling (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check the relators, hyperbolicity and the common splitting.
    VerifyRep,
    /// Tabulate the deviation function and compare composites with the flow.
    Holonomy,
    /// Contraction certificate of the return map.
    Certify,
    /// Integrate one orbit.
    Trace {
        /// `x,y` or `x,y,theta`.
        #[arg(long, allow_hyphen_values = true)]
        start: Option<String>,
    },
    /// Enumerate exponent tuples consistent with the relators.
    SolveExponents,
}

/// Everything a command needs, validated before any computation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub flow: FlowParams,
    pub tuple: ExponentTuple,
    pub d: usize,
    pub grid: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub margin: f64,
    /// Distance from the odd integers below which holonomy rows are flagged.
    pub holonomy_margin: f64,
    /// Random section points for the word/metric comparison.
    pub samples: usize,
    pub presentation: Option<PathBuf>,
    pub start: Option<String>,
    /// Integration horizon of `trace`.
    pub trace_time: f64,
    pub solve_range: (i64, i64),
    /// Rows written by `solve-exponents`; the count is always exact.
    pub solve_limit: usize,
    pub out: PathBuf,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            flow: FlowParams::default(),
            tuple: ExponentTuple::reference(),
            d: 4,
            grid: 256,
            seed: 0,
            epsilon: DEFAULT_EPSILON,
            margin: DEFAULT_MARGIN,
            holonomy_margin: 1e-2,
            samples: 50,
            presentation: None,
            start: None,
            trace_time: 50.0,
            solve_range: (-2, 2),
            solve_limit: 100_000,
            out: PathBuf::from("out"),
            svg: false,
        }
    }
}

fn take_four(kv: &mut KeyValues, key: &str) -> Result<Option<[i64; 4]>, ConfigError> {
    let Some((line, value)) = kv.take_raw(key) else {
        return Ok(None);
    };
    let invalid = |reason: String| ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        value: value.clone(),
        reason,
    };
    let parts = value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<i64>().map_err(|e| invalid(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    <[i64; 4]>::try_from(parts)
        .map(Some)
        .map_err(|p| invalid(format!("expected 4 integers, got {}", p.len())))
}

impl RunConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::parse(text)?;
        let mut cfg = Self::default();
        cfg.flow.apply(&mut kv)?;
        if let Some(v) = kv.take_parsed("t0")? {
            cfg.tuple.t0 = v;
        }
        if let Some(v) = take_four(&mut kv, "t_theta")? {
            cfg.tuple.t = v;
        }
        if let Some(v) = take_four(&mut kv, "m")? {
            cfg.tuple.m = v;
        }
        if let Some(v) = take_four(&mut kv, "n")? {
            cfg.tuple.n = v;
        }
        if let Some(v) = kv.take_parsed("d")? {
            cfg.d = v;
        }
        if let Some(v) = kv.take_parsed("grid")? {
            cfg.grid = v;
        }
        if let Some(v) = kv.take_parsed("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = kv.take_parsed("epsilon")? {
            cfg.epsilon = v;
        }
        if let Some(v) = kv.take_parsed("margin")? {
            cfg.margin = v;
        }
        if let Some(v) = kv.take_parsed("holonomy_margin")? {
            cfg.holonomy_margin = v;
        }
        if let Some(v) = kv.take_parsed("samples")? {
            cfg.samples = v;
        }
        if let Some(v) = kv.take_parsed::<String>("presentation")? {
            cfg.presentation = Some(PathBuf::from(v));
        }
        if let Some(v) = kv.take_parsed("start")? {
            cfg.start = Some(v);
        }
        if let Some(v) = kv.take_parsed("trace_time")? {
            cfg.trace_time = v;
        }
        if let Some(v) = kv.take_list::<i64>("solve_range")? {
            if let [lo, hi] = v[..] {
                cfg.solve_range = (lo, hi);
            } else {
                return Err(ConfigError::Invalid {
                    key: "solve_range",
                    reason: "expected `lo, hi`".to_string(),
                });
            }
        }
        if let Some(v) = kv.take_parsed("solve_limit")? {
            cfg.solve_limit = v;
        }
        kv.finish()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.flow.validate()?;
        let bad = |key, reason: &str| {
            Err(ConfigError::Invalid {
                key,
                reason: reason.to_string(),
            })
        };
        if build_blocks_dim(self.d).is_err() {
            return bad("d", "must be a positive multiple of 4");
        }
        if self.grid < 2 || !self.grid.is_multiple_of(2) {
            return bad("grid", "must be even and at least 2");
        }
        if !(self.epsilon > 0.0 && self.epsilon < crate::base_flow::DISC_RADIUS) {
            return bad("epsilon", "must lie in (0, 1/4)");
        }
        if !(self.margin > 0.0 && self.margin < 0.25) {
            return bad("margin", "must lie in (0, 1/4)");
        }
        if !(self.holonomy_margin > 0.0 && self.holonomy_margin < 0.5) {
            return bad("holonomy_margin", "must lie in (0, 1/2)");
        }
        if !(self.trace_time > 0.0 && self.trace_time.is_finite()) {
            return bad("trace_time", "must be finite and > 0");
        }
        if self.solve_range.0 > self.solve_range.1 {
            return bad("solve_range", "lower end exceeds upper end");
        }
        Ok(())
    }

    /// Reads the config file (if any), applies command-line overrides and
    /// validates.
    pub fn load(cli: &Cli) -> Result<Self, CliError> {
        let (mut cfg, path) = match &cli.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| CliError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                let path = p.display().to_string();
                let mut cfg = Self::parse(&text).map_err(|source| CliError::Config {
                    path: path.clone(),
                    source,
                })?;
                // relative paths inside a config file are relative to the file
                if let (Some(pres), Some(dir)) = (&cfg.presentation, p.parent()) {
                    if pres.is_relative() {
                        cfg.presentation = Some(dir.join(pres));
                    }
                }
                (cfg, path)
            }
            None => (Self::default(), "<defaults>".to_string()),
        };
        if let Some(g) = cli.grid {
            cfg.grid = g;
        }
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        if let Command::Trace { start: Some(s) } = &cli.command {
            cfg.start = Some(s.clone());
        }
        cfg.out = cli.out.clone();
        cfg.svg = cli.svg;
        cfg.validate()
            .map_err(|source| CliError::Config { path, source })?;
        Ok(cfg)
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let io = |source| CliError::Io {
            path: self.out.display().to_string(),
            source,
        };
        fs::create_dir_all(&self.out).map_err(io)?;
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Result of a command: its exit code and the human-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub summary: String,
}

impl Outcome {
    fn new(ok: bool, summary: String) -> Self {
        Self {
            code: if ok { EXIT_OK } else { EXIT_FAILURE },
            summary,
        }
    }
}

pub fn cmd_verify_rep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let pres = match &cfg.presentation {
        Some(p) => {
            let path = p.display().to_string();
            let text = fs::read_to_string(p).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            parse_presentation(&text).map_err(|source| CliError::Presentation { path, source })?
        }
        None => GroupPresentation::pi1_m3(),
    };
    let rep = build_representation_unchecked(&cfg.tuple, cfg.d)?;
    let relators = check_relators(&rep, &pres);
    let mut s = format!("tuple: {}\nd: {}\n\n", cfg.tuple, cfg.d);
    s.push_str(&relators.to_text());
    s.push('\n');

    let list = checked_matrix_list(&rep)?;
    let mut hyperbolic = true;
    for (name, m) in &list {
        match spectral_check(m, SPECTRAL_TOL) {
            Ok(r) => {
                hyperbolic &= r.hyperbolic;
                let moduli: Vec<String> = r.moduli.iter().map(|v| format!("{v:.12}")).collect();
                let _ = writeln!(
                    s,
                    "{name}: hyperbolic {} moduli [{}]",
                    r.hyperbolic,
                    moduli.join(", ")
                );
            }
            Err(e) => {
                hyperbolic = false;
                let _ = writeln!(s, "{name}: {e}");
            }
        }
    }
    let matrices: Vec<_> = list.iter().map(|(_, m)| m.clone()).collect();
    let common = match common_splitting(&matrices, SPECTRAL_TOL) {
        Ok(c) => {
            let swapped: Vec<&str> = list
                .iter()
                .zip(&c.swapped)
                .filter(|(_, s)| **s)
                .map(|(n, _)| n.0.as_str())
                .collect();
            let _ = writeln!(
                s,
                "\ncommon splitting: yes (stable {}, unstable {}; swapped: {})",
                c.splitting.stable.ncols(),
                c.splitting.unstable.ncols(),
                if swapped.is_empty() { "none".to_string() } else { swapped.join(" ") }
            );
            true
        }
        Err(e) => {
            let _ = writeln!(s, "\ncommon splitting: no ({e})");
            false
        }
    };
    let ok = relators.all_pass() && hyperbolic && common;
    let _ = writeln!(s, "result: {}", if ok { "PASS" } else { "FAIL" });
    cfg.write("verify_rep.txt", &s)?;
    Ok(Outcome::new(ok, s))
}

/// Grid `-2 + 4 (k + 1/2) / n` on `(-2, 2)`.
pub fn holonomy_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| -2.0 + 4.0 * (k as f64 + 0.5) / n as f64)
        .collect()
}

pub fn cmd_holonomy(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = &cfg.flow;
    let table = DeviationTable::build(params, 4.0 / cfg.grid as f64, cfg.holonomy_margin)?;
    cfg.write("deviation.csv", &table.to_csv())?;

    let grid = holonomy_grid(cfg.grid);
    let f = DirectDeviation::new(params, DeviationReading::Lifted, cfg.holonomy_margin);
    let reports = (1..=4)
        .map(|i| verify_holonomy_against_flow(i, &grid, cfg.holonomy_margin, &f, params))
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = String::new();
    for (k, r) in reports.iter().enumerate() {
        for (j, line) in r.to_csv().lines().enumerate() {
            if j == 0 && k == 0 {
                let _ = writeln!(csv, "index,{line}");
            } else if j > 0 {
                let _ = writeln!(csv, "{},{line}", r.index);
            }
        }
    }
    cfg.write("holonomy.csv", &csv)?;

    let tol = 10.0 * params.ode_tol;
    let mut s = format!("params: {}\ntolerance: {tol:.1e}\n", params.fingerprint());
    let _ = writeln!(s, "deviation table: {} points", table.grid.len());
    for r in &reports {
        let _ = writeln!(
            s,
            "composite {}: {} rows compared, {} flagged separatrix, max error {:.3e}",
            r.index,
            r.checked_rows(),
            r.rows.len() - r.checked_rows(),
            r.max_error()
        );
    }
    let ok = reports.iter().all(|r: &HolonomyReport| r.max_error() <= tol);
    let _ = writeln!(s, "result: {}", if ok { "PASS" } else { "FAIL" });

    if cfg.svg {
        let pts: Vec<(f64, f64)> = grid
            .iter()
            .filter(|w| separatrix_distance(**w) >= cfg.holonomy_margin)
            .filter_map(|&w| Some((w, f.deviation(w).ok()?)))
            .collect();
        cfg.write("deviation.svg", &svg_plot(&[pts], &[], "omega", "f"))?;
    }
    Ok(Outcome::new(ok, s))
}

/// Everything computed by `certify`.
#[derive(Debug, Clone)]
pub struct CertifyRun {
    pub certificate: ContractionCertificate,
    pub times: TimeConstants,
    pub mixed: MixedReport,
    /// Longest first return seen on the grid, the chains and the random points.
    pub max_return_time: f64,
    pub max_word_metric_error: f64,
    pub word_metric_samples: usize,
    /// Names and details of failed checks, in the order they are tested.
    pub failures: Vec<String>,
}

impl CertifyRun {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn run_certification(cfg: &RunConfig) -> Result<CertifyRun, CliError> {
    let params = &cfg.flow;
    let ctx = SectionContext::new(params, &cfg.tuple, cfg.d, cfg.epsilon)?;
    let opts = CertifyOptions {
        grid: cfg.grid,
        margin: cfg.margin,
        ..CertifyOptions::new(params)
    };
    let f = DirectDeviation::new(params, DeviationReading::Lifted, opts.arg_margin);
    let certificate = ctx.certify_contraction(&f, &opts)?;
    let times = ctx.measure_time_constants(&TimeGrid::default())?;
    let samples = ctx.chain_samples(&CHAIN_OMEGAS, 12)?;
    let mixed = ctx.certify_mixed_transitions(&samples)?;

    let points = ctx.random_points(cfg.samples, cfg.seed, cfg.margin)?;
    let mut max_word_metric_error: f64 = 0.0;
    let mut max_return_time = certificate
        .rows
        .iter()
        .filter_map(|r| r.return_time)
        .chain(mixed.rows.iter().map(|r| r.return_time))
        .fold(0.0, f64::max);
    for p in &points {
        let r = ctx.return_map(p)?;
        max_return_time = max_return_time.max(r.return_time);
        max_word_metric_error = max_word_metric_error.max(ctx.word_metric_check(&r)?.rel_error);
    }

    let mut failures: Vec<String> = certificate.violations.iter().map(|v| v.to_string()).collect();
    let bound = times.return_bound();
    if max_return_time > bound {
        failures.push(format!(
            "ReturnTimeBound: {max_return_time:.6} exceeds 4(T1 + 2 T2) = {bound:.6}"
        ));
    }
    if let Some(r) = mixed.rows.iter().find(|r| !r.pass) {
        failures.push(format!(
            "MixedTransition: {} from {} has exponent {:.6}",
            r.kind, r.start, r.exponent
        ));
    }
    let kinds = mixed.kinds_covered();
    for k in [
        TransitionKind::S0ToS0,
        TransitionKind::S0ToSi,
        TransitionKind::SiToSi,
        TransitionKind::SiToS0,
    ] {
        if !kinds.contains(&k) {
            failures.push(format!("MixedTransition: no {k} transition sampled"));
        }
    }
    if max_word_metric_error > 1e-6 {
        failures.push(format!(
            "WordMetric: relative error {max_word_metric_error:.3e} exceeds 1e-6"
        ));
    }
    Ok(CertifyRun {
        certificate,
        times,
        mixed,
        max_return_time,
        max_word_metric_error,
        word_metric_samples: points.len(),
        failures,
    })
}

pub fn cmd_certify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let run = run_certification(cfg)?;
    cfg.write("certificate.csv", &run.certificate.to_csv())?;
    cfg.write("mixed_transitions.csv", &run.mixed.to_csv())?;

    let t = &run.times;
    let mut s = format!("tuple: {}\nd: {}\nparams: {}\n\n", cfg.tuple, cfg.d, cfg.flow.fingerprint());
    s.push_str(&run.certificate.summary());
    let _ = writeln!(s, "\nT0: {:.9}\nT1: {:.9}\nT2: {:.9}", t.t0, t.t1, t.t2);
    let _ = writeln!(
        s,
        "max first return: {:.6} (bound {:.6})",
        run.max_return_time,
        t.return_bound()
    );
    let _ = writeln!(s, "disc samples circling past T1: {:.4}", t.u_t1_fraction);
    let kinds: Vec<String> = run.mixed.kinds_covered().iter().map(|k| k.to_string()).collect();
    let _ = writeln!(
        s,
        "mixed transitions: {} rows, kinds {}",
        run.mixed.rows.len(),
        kinds.join(" ")
    );
    let _ = writeln!(
        s,
        "word/metric: {} samples, max relative error {:.3e}",
        run.word_metric_samples, run.max_word_metric_error
    );
    match run.failures.first() {
        None => s.push_str("overall: PASS\n"),
        Some(first) => {
            let _ = writeln!(s, "overall: FAIL ({} failures, first: {first})", run.failures.len());
        }
    }
    cfg.write("summary.txt", &s)?;

    if cfg.svg {
        let pts: Vec<(f64, f64)> = run
            .certificate
            .rows
            .iter()
            .filter_map(|r| Some((r.omega, r.e_omega?)))
            .collect();
        let floor = vec![(0.0, 4.0), (2.0, 4.0)];
        cfg.write("exponent.svg", &svg_plot(&[pts, floor], &[], "omega", "e"))?;
    }
    Ok(Outcome::new(run.passed(), s))
}

fn parse_start(text: &str) -> Result<BandPoint, CliError> {
    let bad = || CliError::BadStart(text.to_string());
    let v = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    let p = match v[..] {
        [x, y] => BandPoint::new(x, y, 0.0),
        [x, y, theta] => BandPoint::new(x, y, theta),
        _ => return Err(bad()),
    };
    if !(p.x.is_finite() && p.y.is_finite() && p.theta.is_finite()) || !p.in_domain() {
        return Err(bad());
    }
    Ok(p)
}

/// Points where the orbit crosses `theta = 0 mod 1` within `eps` of a saddle,
/// linearly interpolated between samples.
pub fn section_crossings(seg: &OrbitSegment, eps: f64) -> Vec<(f64, BandPoint)> {
    let mut out = Vec::new();
    for w in seg.samples.windows(2) {
        let ((t0, a), (t1, b)) = (w[0], w[1]);
        if a.theta.floor() == b.theta.floor() {
            continue;
        }
        let level = if b.theta > a.theta { b.theta.floor() } else { a.theta.floor() };
        let s = (level - a.theta) / (b.theta - a.theta);
        let x = a.x + s * (b.x - a.x);
        let y = a.y + s * (b.y - a.y);
        if (x - nearest_saddle(x)).hypot(y) < eps {
            out.push((t0 + s * (t1 - t0), BandPoint::new(x, y, level)));
        }
    }
    out
}

pub fn cmd_trace(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let text = cfg.start.as_deref().unwrap_or("");
    let start = parse_start(text)?;
    let params = FlowParams {
        max_time: cfg.trace_time,
        ..cfg.flow.clone()
    };
    let (seg, ok, end) = match integrate_orbit(start, &[StopCondition::DiscBoundary], &params) {
        Ok(seg) => (seg, true, "reached a disc boundary".to_string()),
        Err(FlowError::DomainExit { time, partial }) => {
            (*partial, true, format!("left the band at time {time:.6}"))
        }
        Err(FlowError::MaxTimeExceeded { max_time, partial }) => (
            *partial,
            false,
            format!("no terminal event before time {max_time}"),
        ),
        Err(FlowError::OutsideDomain { .. }) | Err(FlowError::Separatrix { .. }) => {
            return Err(CliError::BadStart(text.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    cfg.write("trace.csv", &seg.to_csv())?;
    let crossings = section_crossings(&seg, cfg.epsilon);
    let mut csv = String::from("time,x,y,theta\n");
    for (t, p) in &crossings {
        let _ = writeln!(csv, "{t:.12e},{:.12e},{:.12e},{:.12e}", p.x, p.y, p.theta);
    }
    cfg.write("trace_crossings.csv", &csv)?;

    let (t_end, last) = seg.last();
    let mut s = format!("start: ({}, {}, {})\n", start.x, start.y, start.theta);
    let _ = writeln!(s, "samples: {}", seg.samples.len());
    let _ = writeln!(
        s,
        "end: time {t_end:.6} at ({:.9}, {:.9}, {:.9})",
        last.x, last.y, last.theta
    );
    let _ = writeln!(s, "theta winding: {:.6}", last.theta - start.theta);
    let _ = writeln!(s, "section crossings: {}", crossings.len());
    let _ = writeln!(s, "distance to nearest disc at end: {:.3e}", disc_distance(last.x, last.y));
    let _ = writeln!(s, "orbit {end}");
    if cfg.svg {
        let path: Vec<(f64, f64)> = seg.samples.iter().map(|(_, p)| (p.x, p.y)).collect();
        let marks: Vec<(f64, f64)> = crossings.iter().map(|(_, p)| (p.x, p.y)).collect();
        cfg.write("trace.svg", &svg_plot(&[path], &marks, "x", "y"))?;
    }
    Ok(Outcome::new(ok, s))
}

pub fn cmd_solve_exponents(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (lo, hi) = cfg.solve_range;
    let ranges = ExponentRanges::uniform(lo..=hi);
    let total = count_solutions(&ranges);
    let mut csv = String::from("t0,t1,t2,t3,t4,m1,m2,m3,m4,n1,n2,n3,n4\n");
    let join = |v: &[i64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    for e in solve_exponents(&ranges).take(cfg.solve_limit) {
        let _ = writeln!(csv, "{},{},{},{}", e.t0, join(&e.t), join(&e.m), join(&e.n));
    }
    cfg.write("solutions.csv", &csv)?;
    let reference = ExponentTuple::reference();
    let mut s = format!("range: [{lo}, {hi}]\nsolutions: {total}\n");
    let _ = writeln!(s, "written: {}", total.min(cfg.solve_limit as u64));
    let _ = writeln!(
        s,
        "reference tuple in range: {}",
        ranges.contains(&reference)
    );
    Ok(Outcome::new(true, s))
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = RunConfig::load(cli)?;
    match &cli.command {
        Command::VerifyRep => cmd_verify_rep(&cfg),
        Command::Holonomy => cmd_holonomy(&cfg),
        Command::Certify => cmd_certify(&cfg),
        Command::Trace { .. } => cmd_trace(&cfg),
        Command::SolveExponents => cmd_solve_exponents(&cfg),
    }
}

/// Runs a parsed command line, printing the summary or error, and returns the
/// process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(o) => {
            print!("{}", o.summary);
            o.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Line plot of `series` with optional point markers, scaled into a fixed
/// 640x400 frame.
pub fn svg_plot(series: &[Vec<(f64, f64)>], marks: &[(f64, f64)], xlabel: &str, ylabel: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 40.0;
    let all = series.iter().flatten().chain(marks);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        (y0, y1) = (y0 - 0.5, y0 + 0.5);
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    let _ = writeln!(
        s,
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let colors = ["#1f5fbf", "#c0392b", "#27ae60"];
    for (i, pts) in series.iter().enumerate() {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1\" points=\"{}\"/>",
            colors[i % colors.len()],
            coords.join(" ")
        );
    }
    for &(x, y) in marks {
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#e67e22\"/>", sx(x), sy(y));
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">{xlabel} [{x0:.3}, {x1:.3}]</text>",
        PAD,
        H - 10.0
    );
    let _ = writeln!(
        s,
        "<text x=\"5\" y=\"{}\" font-size=\"12\">{ylabel} [{y0:.3}, {y1:.3}]</text>",
        PAD - 10.0
    );
    s.push_str("</svg>\n");
    s
}
