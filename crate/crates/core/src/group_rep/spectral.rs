//! Eigenvalues, hyperbolicity and stable/unstable splittings.

use nalgebra::{Complex, DMatrix, Schur, SymmetricEigen};
use thiserror::Error;

use super::matrix::IntMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("matrix is singular")]
    NotInvertible,
    #[error("eigen-solve residual {residual:e} exceeds {tol:e}")]
    IllConditioned { residual: f64, tol: f64 },
    #[error("matrix #{index} is not hyperbolic")]
    NotHyperbolic { index: usize },
    #[error("matrices #{first} and #{second} have no common splitting")]
    NoCommonSplitting { first: usize, second: usize },
    #[error("empty matrix list")]
    Empty,
}

/// Orthonormal bases of the contracting and expanding subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Splitting {
    pub stable: DMatrix<f64>,
    pub unstable: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Moduli sorted in decreasing order.
    pub moduli: Vec<f64>,
    pub hyperbolic: bool,
    pub residual: f64,
    /// Present when the matrix is hyperbolic.
    pub splitting: Option<Splitting>,
}

impl SpectralReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("hyperbolic: {}\n", self.hyperbolic));
        let m: Vec<String> = self.moduli.iter().map(|v| format!("{v:.15}")).collect();
        out.push_str(&format!("moduli: [{}]\n", m.join(", ")));
        out.push_str(&format!("residual: {:.3e}\n", self.residual));
        if let Some(s) = &self.splitting {
            out.push_str(&format!(
                "splitting: stable {} / unstable {}\n",
                s.stable.ncols(),
                s.unstable.ncols()
            ));
        }
        out
    }
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.norm().max(1.0)
}

/// Orthonormal basis of the column space of `p`, keeping singular values above
/// `cut`.
fn column_basis(p: &DMatrix<f64>, cut: f64) -> DMatrix<f64> {
    let svd = p.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cut)
        .collect();
    DMatrix::from_fn(p.nrows(), keep.len(), |i, j| u[(i, keep[j])])
}

/// Eigen-decomposition of an integer matrix. Symmetric input is handled by a
/// symmetric solver; anything else goes through the real Schur form.
pub fn spectral_check(m: &IntMatrix, tol: f64) -> Result<SpectralReport, SpectralError> {
    if m.determinant() == Ok(0) {
        return Err(SpectralError::NotInvertible);
    }
    let a = m.to_real();
    let n = a.nrows();
    let (eigenvalues, residual, splitting_sym) = if m.is_symmetric() {
        let eig = SymmetricEigen::new(a.clone());
        let lam = DMatrix::from_diagonal(&eig.eigenvalues);
        let res = (&a * &eig.eigenvectors - &eig.eigenvectors * lam).norm() / frob(&a);
        let pick = |stable: bool| {
            let cols: Vec<usize> = (0..n)
                .filter(|&i| (eig.eigenvalues[i].abs() < 1.0) == stable)
                .collect();
            DMatrix::from_fn(n, cols.len(), |i, j| eig.eigenvectors[(i, cols[j])])
        };
        let split = Splitting {
            stable: pick(true),
            unstable: pick(false),
        };
        let ev = eig
            .eigenvalues
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .collect();
        (ev, res, Some(split))
    } else {
        let (ev, res) = general_eigenvalues(&a)?;
        (ev, res, None)
    };
    if residual > tol.max(1e-12) {
        return Err(SpectralError::IllConditioned { residual, tol });
    }
    let mut moduli: Vec<f64> = eigenvalues.iter().map(|z| z.norm()).collect();
    moduli.sort_by(|x, y| y.total_cmp(x));
    let hyperbolic = moduli.iter().all(|r| (r - 1.0).abs() > tol);
    let splitting = if !hyperbolic {
        None
    } else if let Some(s) = splitting_sym {
        Some(s)
    } else {
        Some(splitting_by_sign(&a))
    };
    Ok(SpectralReport {
        eigenvalues,
        moduli,
        hyperbolic,
        residual,
        splitting,
    })
}

/// Eigenvalues from a bounded Schur iteration. Spectra symmetric about the
/// origin (such as `+-1`) can stall the shifted QR sweep; a real shift breaks
/// the tie and is subtracted afterwards.
/// The residual is the backward error `|Q T Q^T - A| / |A|` of the Schur form.
fn general_eigenvalues(a: &DMatrix<f64>) -> Result<(Vec<Complex<f64>>, f64), SpectralError> {
    let n = a.nrows();
    for shift in [0.0, 0.371_6, -1.193_7] {
        let id = DMatrix::<f64>::identity(n, n);
        let shifted = a + &id * shift;
        if let Some(schur) = Schur::try_new(shifted.clone(), f64::EPSILON, 10_000) {
            let (q, t) = schur.unpack();
            let ev = quasi_triangular_eigenvalues(&t)
                .into_iter()
                .map(|z| z - Complex::new(shift, 0.0))
                .collect();
            let res = (&q * t * q.transpose() - shifted).norm() / frob(a);
            return Ok((ev, res));
        }
    }
    Err(SpectralError::IllConditioned {
        residual: f64::INFINITY,
        tol: 0.0,
    })
}

/// Eigenvalues of the 1x1 and 2x2 diagonal blocks of a real Schur form.
fn quasi_triangular_eigenvalues(t: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = t.nrows();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let half = (a + d) / 2.0;
            let disc = ((a - d) / 2.0).powi(2) + b * c;
            let root = Complex::new(disc, 0.0).sqrt();
            out.push(Complex::new(half, 0.0) + root);
            out.push(Complex::new(half, 0.0) - root);
            i += 2;
        } else {
            out.push(Complex::new(t[(i, i)], 0.0));
            i += 1;
        }
    }
    out
}

/// Spectral projectors of a hyperbolic matrix from the matrix sign function of
/// its Cayley transform `(A - I)(A + I)^-1`, which sends the open unit disc to
/// the left half-plane.
fn splitting_by_sign(a: &DMatrix<f64>) -> Splitting {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let plus = (a + &id).try_inverse().expect("-1 is not an eigenvalue");
    let mut s = (a - &id) * plus;
    for _ in 0..100 {
        let Some(inv) = s.clone().try_inverse() else { break };
        let next = (&s + inv) * 0.5;
        let delta = (&next - &s).norm();
        s = next;
        if delta < 1e-14 * s.norm() {
            break;
        }
    }
    let p_stable = (&id - &s) * 0.5;
    let p_unstable = (&id + &s) * 0.5;
    Splitting {
        stable: column_basis(&p_stable, 0.5),
        unstable: column_basis(&p_unstable, 0.5),
    }
}

/// Whether the column spaces of two orthonormal bases agree.
fn same_subspace(q1: &DMatrix<f64>, q2: &DMatrix<f64>, tol: f64) -> bool {
    q1.ncols() == q2.ncols() && (q2 - q1 * (q1.transpose() * q2)).norm() < tol
}

const SUBSPACE_TOL: f64 = 1e-8;

/// A splitting invariant under every listed matrix. Some matrices may
/// contract the common `unstable` space instead (inverse powers share
/// eigenspaces with roles exchanged); they are flagged in `swapped`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonSplitting {
    pub splitting: Splitting,
    pub swapped: Vec<bool>,
}

pub fn common_splitting(matrices: &[IntMatrix], tol: f64) -> Result<CommonSplitting, SpectralError> {
    let mut splits = Vec::with_capacity(matrices.len());
    for (index, m) in matrices.iter().enumerate() {
        let rep = spectral_check(m, tol)?;
        match rep.splitting {
            Some(s) => splits.push(s),
            None => return Err(SpectralError::NotHyperbolic { index }),
        }
    }
    let first = splits.first().ok_or(SpectralError::Empty)?.clone();
    let mut swapped = vec![false];
    for (j, s) in splits.iter().enumerate().skip(1) {
        if same_subspace(&first.stable, &s.stable, SUBSPACE_TOL)
            && same_subspace(&first.unstable, &s.unstable, SUBSPACE_TOL)
        {
            swapped.push(false);
        } else if same_subspace(&first.stable, &s.unstable, SUBSPACE_TOL)
            && same_subspace(&first.unstable, &s.stable, SUBSPACE_TOL)
        {
            swapped.push(true);
        } else {
            return Err(SpectralError::NoCommonSplitting { first: 0, second: j });
        }
    }
    Ok(CommonSplitting {
        splitting: first,
        swapped,
    })
}

/// Whether `m` maps the stable space of `split` into its unstable space.
pub fn maps_stable_to_unstable(split: &Splitting, m: &IntMatrix) -> bool {
    let image = m.to_real() * &split.stable;
    let q = &split.unstable;
    (&image - q * (q.transpose() * &image)).norm() < SUBSPACE_TOL * image.norm().max(1.0)
}
