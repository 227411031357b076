//! Real powers of the hyperbolic block matrix and the chart-wise fiber norms
//! `|v|_(x, y) = |C^{-w(x, y)} v|`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::group_rep::{build_blocks_dim, IntMatrix, RepError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("vector has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("chart index {0} outside 1..=5")]
    BadChart(u8),
    #[error(transparent)]
    Rep(#[from] RepError),
}

/// Spectral decomposition `C = U diag(lambda) U^T` of a symmetric positive
/// definite matrix, giving `C^t = U diag(lambda^t) U^T` for real `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdPowers {
    u: DMatrix<f64>,
    log_lambda: DVector<f64>,
}

impl SpdPowers {
    pub fn new(c: &IntMatrix) -> Result<Self, MetricError> {
        if !c.is_symmetric() {
            return Err(MetricError::NotSpd);
        }
        let eig = SymmetricEigen::new(c.to_real());
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(MetricError::NotSpd);
        }
        Ok(Self {
            u: eig.eigenvectors,
            log_lambda: eig.eigenvalues.map(f64::ln),
        })
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn power(&self, t: f64) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            self.u[(i, j)] * (t * self.log_lambda[j]).exp()
        });
        scaled * self.u.transpose()
    }

    /// `C^t v` without forming the matrix.
    pub fn apply(&self, t: f64, v: &DVector<f64>) -> DVector<f64> {
        let mut coeffs = self.u.transpose() * v;
        for (c, l) in coeffs.iter_mut().zip(self.log_lambda.iter()) {
            *c *= (t * l).exp();
        }
        &self.u * coeffs
    }
}

/// `C^t` by spectral calculus.
pub fn mat_power_real(c: &IntMatrix, t: f64) -> Result<DMatrix<f64>, MetricError> {
    Ok(SpdPowers::new(c)?.power(t))
}

/// One of the five boundary charts along the chain of cover copies, with its
/// affine exponent form in the torus coordinates `(x, y) = (omega, theta)`.
/// Consecutive charts differ by the exponent `t0` of the image of `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricChart {
    pub index: u8,
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
}

impl MetricChart {
    pub fn new(index: u8, t0: i64, t1: i64, t2: i64) -> Result<Self, MetricError> {
        if !(1..=5).contains(&index) {
            return Err(MetricError::BadChart(index));
        }
        Ok(Self {
            index,
            t0: t0 as f64,
            t1: t1 as f64,
            t2: t2 as f64,
        })
    }

    /// `w(x, y)`; at the chart basepoint `(0, 0)` this is `t0 (index - 1)`.
    pub fn exponent(&self, x: f64, y: f64) -> f64 {
        let (t1, t2) = (self.t1, self.t2);
        let offset = self.t0 * f64::from(self.index - 1);
        offset
            + match self.index {
                1 | 5 => t2 * x + t1 * y,
                2 => -t1 * x + t2 * y,
                3 => -t2 * x - t1 * y,
                _ => t1 * x - t2 * y,
            }
    }
}

/// Fiber metric data for a fixed dimension and exponent pair `(t1, t2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberMetric {
    pub powers: SpdPowers,
    pub t0: i64,
    pub t1: i64,
    pub t2: i64,
}

impl FiberMetric {
    pub fn new(d: usize, t0: i64, t1: i64, t2: i64) -> Result<Self, MetricError> {
        let (c, _) = build_blocks_dim(d)?;
        Ok(Self {
            powers: SpdPowers::new(&c)?,
            t0,
            t1,
            t2,
        })
    }

    pub fn dim(&self) -> usize {
        self.powers.dim()
    }

    pub fn chart(&self, index: u8) -> Result<MetricChart, MetricError> {
        MetricChart::new(index, self.t0, self.t1, self.t2)
    }

    fn check(&self, v: &DVector<f64>) -> Result<(), MetricError> {
        if v.len() != self.dim() {
            return Err(MetricError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `|C^{-w} v|` for an explicit exponent `w`.
    pub fn norm_at_exponent(&self, w: f64, v: &DVector<f64>) -> Result<f64, MetricError> {
        self.check(v)?;
        Ok(self.powers.apply(-w, v).norm())
    }

    pub fn fiber_norm(
        &self,
        chart: &MetricChart,
        x: f64,
        y: f64,
        v: &DVector<f64>,
    ) -> Result<f64, MetricError> {
        self.norm_at_exponent(chart.exponent(x, y), v)
    }

    /// Norm on a section piece at time parameter `s`: `|C^{-s t0} v|`.
    pub fn section_norm(&self, s: f64, v: &DVector<f64>, t0: i64) -> Result<f64, MetricError> {
        self.norm_at_exponent(s * t0 as f64, v)
    }
}

/// The dominant eigenvalue `(3 + sqrt 5) / 2` of `C`.
pub fn mu() -> f64 {
    (3.0 + 5f64.sqrt()) / 2.0
}
