//! The integer representation `theta_i -> C^{t_i}`, `c -> C^{t_0}`,
//! `a_i -> C^{m_i} D`, `b_i -> C^{n_i} D`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::matrix::{IntMatrix, MatrixError};
use super::word::{GroupPresentation, Word};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RepError {
    #[error("inconsistent exponents: {0}")]
    InconsistentExponents(String),
    #[error("unsupported dimension {0}: must be a positive multiple of 4")]
    UnsupportedDimension(usize),
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Exponents `t_0`, `t_1..t_4`, `m_1..m_4`, `n_1..n_4` (stored 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ExponentTuple {
    pub t0: i64,
    pub t: [i64; 4],
    pub m: [i64; 4],
    pub n: [i64; 4],
}

impl ExponentTuple {
    /// `t_0 = 1`, `m = (1,3,5,6)`, `n = (2,4,4,5)`, `t = (1,-1,-1,1)`.
    pub fn reference() -> Self {
        Self {
            t0: 1,
            t: [1, -1, -1, 1],
            m: [1, 3, 5, 6],
            n: [2, 4, 4, 5],
        }
    }

    /// The linear equations forced by the relators, as
    /// `(description, lhs, rhs)`.
    pub fn equations(&self) -> [(&'static str, i64, i64); 8] {
        let (t, m, n) = (self.t, self.m, self.n);
        [
            ("t1 = n2 - m2", t[0], n[1] - m[1]),
            ("t1 = m4 - n4", t[0], m[3] - n[3]),
            ("t2 = n3 - m3", t[1], n[2] - m[2]),
            ("t2 = m1 - n1", t[1], m[0] - n[0]),
            ("t3 = n4 - m4", t[2], n[3] - m[3]),
            ("t3 = m2 - n2", t[2], m[1] - n[1]),
            ("t4 = n1 - m1", t[3], n[0] - m[0]),
            ("t4 = m3 - n3", t[3], m[2] - n[2]),
        ]
    }

    pub fn validate(&self) -> Result<(), RepError> {
        for (eq, lhs, rhs) in self.equations() {
            if lhs != rhs {
                return Err(RepError::InconsistentExponents(format!(
                    "{eq} fails: {lhs} != {rhs}"
                )));
            }
        }
        Ok(())
    }

    /// Value of the exponent attached to a generator name.
    pub fn exponent_of(&self, gen: &str) -> Option<i64> {
        let idx = |s: &str| -> Option<usize> {
            let i: usize = s.parse().ok()?;
            (1..=4).contains(&i).then_some(i - 1)
        };
        if gen == "c" {
            Some(self.t0)
        } else if let Some(rest) = gen.strip_prefix("theta") {
            idx(rest).map(|i| self.t[i])
        } else if let Some(rest) = gen.strip_prefix('a') {
            idx(rest).map(|i| self.m[i])
        } else if let Some(rest) = gen.strip_prefix('b') {
            idx(rest).map(|i| self.n[i])
        } else {
            None
        }
    }
}

impl fmt::Display for ExponentTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[i64; 4]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(
            f,
            "t0={} t=({}) m=({}) n=({})",
            self.t0,
            list(&self.t),
            list(&self.m),
            list(&self.n)
        )
    }
}

/// The 4x4 blocks `C = diag(C1, C2)` and `D = [[0, C2^2], [C1^2, 0]]` with
/// `C1 = [[2,1],[1,1]]`, `C2 = C1^-1`.
pub fn build_blocks() -> (IntMatrix, IntMatrix) {
    let c = IntMatrix::from_rows(&[
        &[2, 1, 0, 0],
        &[1, 1, 0, 0],
        &[0, 0, 1, -1],
        &[0, 0, -1, 2],
    ]);
    // C2^2 = [[2,-3],[-3,5]], C1^2 = [[5,3],[3,2]]
    let d = IntMatrix::from_rows(&[
        &[0, 0, 2, -3],
        &[0, 0, -3, 5],
        &[5, 3, 0, 0],
        &[3, 2, 0, 0],
    ]);
    (c, d)
}

/// `(C, D)` block-replicated to dimension `d`.
pub fn build_blocks_dim(d: usize) -> Result<(IntMatrix, IntMatrix), RepError> {
    if d == 0 || !d.is_multiple_of(4) {
        return Err(RepError::UnsupportedDimension(d));
    }
    let (c, dm) = build_blocks();
    Ok((c.block_repeat(d / 4), dm.block_repeat(d / 4)))
}

/// `C^s` for any integer `s`; negative powers use `C^-1 = diag(C2, C1)`.
pub fn c_power(d: usize, s: i64) -> Result<IntMatrix, RepError> {
    let (c, _) = build_blocks_dim(d)?;
    let base = if s >= 0 {
        c
    } else {
        let mut inv = IntMatrix::zeros(d);
        for b in 0..d / 4 {
            let o = 4 * b;
            // C^-1 = diag(C1^-1, C2^-1) = diag(C2, C1)
            for (i, j, v) in [
                (0, 0, 1),
                (0, 1, -1),
                (1, 0, -1),
                (1, 1, 2),
                (2, 2, 2),
                (2, 3, 1),
                (3, 2, 1),
                (3, 3, 1),
            ] {
                inv.set(o + i, o + j, v);
            }
        }
        inv
    };
    let k = u32::try_from(s.unsigned_abs()).map_err(|_| MatrixError::Overflow("matrix power"))?;
    Ok(base.checked_pow(k)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub exponents: ExponentTuple,
    pub d: usize,
    /// generator -> (image, inverse image)
    images: BTreeMap<String, (IntMatrix, IntMatrix)>,
}

/// Checks the exponent equations, then assembles the representation.
pub fn build_representation(e: &ExponentTuple, d: usize) -> Result<Representation, RepError> {
    e.validate()?;
    build_representation_unchecked(e, d)
}

/// As [`build_representation`] without the linear consistency check, so that
/// relator failures can be observed directly.
pub fn build_representation_unchecked(
    e: &ExponentTuple,
    d: usize,
) -> Result<Representation, RepError> {
    let (_, dm) = build_blocks_dim(d)?;
    let mut images = BTreeMap::new();
    let power_pair = |s: i64| -> Result<(IntMatrix, IntMatrix), RepError> {
        Ok((c_power(d, s)?, c_power(d, -s)?))
    };
    images.insert("c".to_string(), power_pair(e.t0)?);
    for i in 0..4 {
        images.insert(format!("theta{}", i + 1), power_pair(e.t[i])?);
        for (name, s) in [("a", e.m[i]), ("b", e.n[i])] {
            // (C^s D)^-1 = D C^-s since D^2 = I
            let (cs, cinv) = power_pair(s)?;
            images.insert(
                format!("{name}{}", i + 1),
                (cs.checked_mul(&dm)?, dm.checked_mul(&cinv)?),
            );
        }
    }
    Ok(Representation {
        exponents: *e,
        d,
        images,
    })
}

impl Representation {
    pub fn generators(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    pub fn image(&self, gen: &str) -> Option<&IntMatrix> {
        self.images.get(gen).map(|p| &p.0)
    }

    pub fn inverse_image(&self, gen: &str) -> Option<&IntMatrix> {
        self.images.get(gen).map(|p| &p.1)
    }
}

/// Exact product of the letter images of `w`.
pub fn eval_word(rep: &Representation, w: &Word) -> Result<IntMatrix, RepError> {
    let mut acc = IntMatrix::identity(rep.d);
    for (g, e) in w.letters() {
        let (m, inv) = rep
            .images
            .get(g)
            .ok_or_else(|| RepError::UnknownGenerator(g.clone()))?;
        let base = if *e > 0 { m } else { inv };
        for _ in 0..e.unsigned_abs() {
            acc = acc.checked_mul(base)?;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelatorRow {
    pub line: usize,
    pub label: String,
    pub word: String,
    pub pass: bool,
    /// Evaluation error (overflow, unknown generator), if any.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelatorReport {
    pub exponents: ExponentTuple,
    pub d: usize,
    pub rows: Vec<RelatorRow>,
}

impl RelatorReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RelatorRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    /// Plain-text report with a fixed key order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("exponents: {}\n", self.exponents));
        out.push_str(&format!("dimension: {}\n", self.d));
        out.push_str(&format!("relators: {}\n", self.rows.len()));
        out.push_str(&format!(
            "passed: {}\n",
            self.rows.iter().filter(|r| r.pass).count()
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "- line: {} | relation: {} | result: {}{}\n",
                r.line,
                r.label,
                if r.pass { "pass" } else { "FAIL" },
                r.error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
            ));
        }
        out
    }
}

/// Evaluates every relator; a relator passes when its image is exactly the
/// identity.
pub fn check_relators(rep: &Representation, pres: &GroupPresentation) -> RelatorReport {
    let rows = pres
        .relators
        .iter()
        .map(|r| {
            let (pass, error) = match eval_word(rep, &r.word) {
                Ok(m) => (m.is_identity(), None),
                Err(e) => (false, Some(e.to_string())),
            };
            RelatorRow {
                line: r.line,
                label: r.label.clone(),
                word: r.word.to_string(),
                pass,
                error,
            }
        })
        .collect();
    RelatorReport {
        exponents: rep.exponents,
        d: rep.d,
        rows,
    }
}
