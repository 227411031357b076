//! Flow parameters and the flat `key = value` configuration format.
//!
//! ```text
//! # comment
//! t = 10
//! phi_variant = sine
//! ode_tol = 1e-8
//! ```
//!
//! Unknown keys are rejected so that typos do not silently fall back to
//! defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid parameter `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

/// Profile of the odd, antiperiodic function driving the x-motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiVariant {
    /// `sin(pi x) / 2`
    Sine,
    /// `x / 2` near the origin, smoothly flattened towards `x = 1/2`.
    LinearSmoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaProfile {
    /// Radial plateau of height one, smooth cutoff at radius 1/3.
    Smooth,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaProfile {
    /// `exp(-1/((u-1/2)(2/3-u)))`, normalized to peak value one.
    InverseProduct,
    /// Standard bump `exp(1 - 1/(1-q^2))` on the rescaled band.
    Bump,
    Zero,
}

macro_rules! keyword_enum {
    ($ty:ident { $($name:literal => $variant:ident),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($name),+].join(", "))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name,)+ })
            }
        }
    };
}

keyword_enum!(PhiVariant { "sine" => Sine, "linear_smoothed" => LinearSmoothed });
keyword_enum!(AlphaProfile { "smooth" => Smooth, "zero" => Zero });
keyword_enum!(BetaProfile { "inverse_product" => InverseProduct, "bump" => Bump, "zero" => Zero });

/// Analytic ingredients of the base flow plus integration tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    /// Strength of the band term of the circle component.
    pub t: f64,
    /// Radius of the plateau where `|alpha| = 1`.
    pub r_alpha_inner: f64,
    pub phi: PhiVariant,
    pub alpha: AlphaProfile,
    pub beta: BetaProfile,
    /// Multiplies the beta profile (linearity checks).
    pub beta_scale: f64,
    /// Orientation of the circle component: `+1` integrates the field as
    /// written, `-1` reverses it. The shipped default is `-1`, which makes the
    /// deviation function non-negative on `(0, 2)`.
    pub theta_sign: f64,
    pub ode_tol: f64,
    pub event_tol: f64,
    /// Orbits that do not reach their target before this time are treated as
    /// lying on a stable set.
    pub max_time: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            t: 10.0,
            r_alpha_inner: 1.0 / 12.0,
            phi: PhiVariant::Sine,
            alpha: AlphaProfile::Smooth,
            beta: BetaProfile::InverseProduct,
            beta_scale: 1.0,
            theta_sign: -1.0,
            ode_tol: 1e-8,
            event_tol: 1e-10,
            max_time: 1e3,
        }
    }
}

impl FlowParams {
    /// Default parameters with the circle component oriented as written
    /// (`theta_sign = +1`).
    pub fn written_orientation() -> Self {
        Self {
            theta_sign: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key, reason: &str| {
            Err(ConfigError::Invalid {
                key,
                reason: reason.to_string(),
            })
        };
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return bad("t", "must be finite and >= 0");
        }
        if !(self.r_alpha_inner > 0.0 && self.r_alpha_inner < 1.0 / 3.0) {
            return bad("r_alpha_inner", "must lie in (0, 1/3)");
        }
        if !(self.ode_tol > 0.0 && self.ode_tol <= 1e-3) {
            return bad("ode_tol", "must lie in (0, 1e-3]");
        }
        if !(self.event_tol > 0.0 && self.event_tol <= 1e-3) {
            return bad("event_tol", "must lie in (0, 1e-3]");
        }
        if !(self.max_time > 0.0 && self.max_time.is_finite()) {
            return bad("max_time", "must be finite and > 0");
        }
        if self.theta_sign != 1.0 && self.theta_sign != -1.0 {
            return bad("theta_sign", "must be 1 or -1");
        }
        if !self.beta_scale.is_finite() {
            return bad("beta_scale", "must be finite");
        }
        Ok(())
    }

    /// Applies the flow-related keys of `kv`, consuming them.
    pub fn apply(&mut self, kv: &mut KeyValues) -> Result<(), ConfigError> {
        if let Some(v) = kv.take_parsed("t")? {
            self.t = v;
        }
        if let Some(v) = kv.take_parsed("r_alpha_inner")? {
            self.r_alpha_inner = v;
        }
        if let Some(v) = kv.take_parsed("phi_variant")? {
            self.phi = v;
        }
        if let Some(v) = kv.take_parsed("alpha_profile")? {
            self.alpha = v;
        }
        if let Some(v) = kv.take_parsed("beta_profile")? {
            self.beta = v;
        }
        if let Some(v) = kv.take_parsed("beta_scale")? {
            self.beta_scale = v;
        }
        if let Some(v) = kv.take_parsed("theta_sign")? {
            self.theta_sign = v;
        }
        if let Some(v) = kv.take_parsed("ode_tol")? {
            self.ode_tol = v;
        }
        if let Some(v) = kv.take_parsed("event_tol")? {
            self.event_tol = v;
        }
        if let Some(v) = kv.take_parsed("max_time")? {
            self.max_time = v;
        }
        Ok(())
    }

    /// Stable identifier of the parameter set (FNV-1a over the textual form).
    pub fn fingerprint(&self) -> String {
        let text = format!("{self:?}");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Parsed `key = value` lines, remembering line numbers for diagnostics.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if entries
                .insert(key.to_string(), (line, value.to_string()))
                .is_some()
            {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, key: &str, value: &str) {
        self.entries
            .insert(key.to_string(), (0, value.to_string()));
    }

    pub fn take_raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    pub fn take_parsed<T>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, value)) => value.parse::<T>().map(Some).map_err(|e| {
                ConfigError::InvalidValue {
                    line,
                    key: key.to_string(),
                    value: value.clone(),
                    reason: e.to_string(),
                }
            }),
        }
    }

    /// Comma- or whitespace-separated list.
    pub fn take_list<T>(&mut self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, value)) => value
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>().map_err(|e| ConfigError::InvalidValue {
                        line,
                        key: key.to_string(),
                        value: value.clone(),
                        reason: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().min_by_key(|(_, (line, _))| *line) {
            None => Ok(()),
            Some((key, (line, _))) => Err(ConfigError::UnknownKey { line, key }),
        }
    }
}
