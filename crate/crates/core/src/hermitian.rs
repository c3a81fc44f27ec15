//! Dense Hermitian / positive semi-definite linear algebra.
//!
//! Every matrix that enters the solver (channel Grams, covariances, dual
//! combinations) is a [`HermitianMatrix`]. Symmetry is enforced once at
//! construction so downstream eigensolvers never see asymmetric drift.
//! Eigenvalues are always reported in decreasing order.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

#[inline]
pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    data: DMatrix<Complex64>,
}

impl HermitianMatrix {
    /// Builds a Hermitian matrix as `(a + a⁺) / 2`.
    pub fn from_matrix(a: DMatrix<Complex64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        if a.nrows() == 0 {
            return Err(Error::Domain("matrix dimension must be at least 1".into()));
        }
        Ok(Self::symmetrize(a))
    }

    fn symmetrize(mut a: DMatrix<Complex64>) -> Self {
        let m = a.nrows();
        for i in 0..m {
            a[(i, i)] = c(a[(i, i)].re);
            for j in (i + 1)..m {
                let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
                a[(i, j)] = v;
                a[(j, i)] = v.conj();
            }
        }
        Self { data: a }
    }

    /// Row-major complex entries.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let m = rows.len();
        for r in rows {
            if r.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: r.len(),
                });
            }
        }
        Self::from_matrix(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    /// Real row-major entries embedded with zero imaginary parts.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| c(x)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let m = diag.len();
        Self::from_matrix(DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                c(diag[i])
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn identity(m: usize) -> Self {
        Self {
            data: DMatrix::identity(m, m),
        }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            data: DMatrix::zeros(m, m),
        }
    }

    /// Gram matrix `h⁺ h` of an `n × m` channel.
    pub fn gram(h: &DMatrix<Complex64>) -> Result<Self> {
        Self::from_matrix(h.adjoint() * h)
    }

    /// Rank-one outer product `v v⁺`.
    pub fn outer(v: &[Complex64]) -> Self {
        let m = v.len();
        Self::symmetrize(DMatrix::from_fn(m, m, |i, j| v[i] * v[j].conj()))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[(i, j)]
    }

    pub fn to_rows(&self) -> Vec<Vec<Complex64>> {
        let m = self.dim();
        (0..m)
            .map(|i| (0..m).map(|j| self.data[(i, j)]).collect())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.data[(i, i)].re).sum()
    }

    /// `Re tr(self · other)`; exact for Hermitian arguments.
    pub fn trace_product(&self, other: &HermitianMatrix) -> f64 {
        let m = self.dim();
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                acc += (self.data[(i, j)] * other.data[(j, i)]).re;
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            data: &self.data * c(s),
        }
    }

    pub fn add(&self, other: &HermitianMatrix) -> Self {
        Self {
            data: &self.data + &other.data,
        }
    }

    pub fn sub(&self, other: &HermitianMatrix) -> Self {
        Self {
            data: &self.data - &other.data,
        }
    }

    /// `b · self · b`, re-symmetrized. `b` is expected Hermitian.
    pub fn congruence(&self, b: &HermitianMatrix) -> Self {
        Self::symmetrize(&b.data * &self.data * &b.data)
    }

    /// `t · self · t⁺` for a rectangular `t`.
    pub fn congruence_rect(&self, t: &DMatrix<Complex64>) -> Result<Self> {
        if t.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: t.ncols(),
            });
        }
        Ok(Self::symmetrize(t * &self.data * t.adjoint()))
    }

    /// `A v`.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let m = self.dim();
        (0..m)
            .map(|i| (0..m).map(|j| self.data[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `v⁺ A v` (real for Hermitian `A`).
    pub fn quad_form(&self, v: &[Complex64]) -> f64 {
        self.apply(v)
            .iter()
            .zip(v)
            .map(|(av, x)| (x.conj() * av).re)
            .sum()
    }

    pub fn is_hermitian_exact(&self) -> bool {
        let m = self.dim();
        (0..m).all(|i| (0..m).all(|j| self.data[(i, j)] == self.data[(j, i)].conj()))
    }

    /// `max(0, -λ_min)`.
    pub fn psd_violation(&self) -> Result<f64> {
        let e = eig(self)?;
        Ok((-e.min_eigenvalue()).max(0.0))
    }
}

/// Eigenpairs with eigenvalues sorted in decreasing order.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Unitary; column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<Complex64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()))
    }

    pub fn vector(&self, i: usize) -> Vec<Complex64> {
        self.eigenvectors.column(i).iter().copied().collect()
    }

    /// `Σ f(i, λᵢ) uᵢuᵢ⁺` over the modes where `f` returns `Some`.
    pub fn rebuild<F>(&self, mut f: F) -> HermitianMatrix
    where
        F: FnMut(usize, f64) -> Option<f64>,
    {
        let m = self.dim();
        let mut out = DMatrix::<Complex64>::zeros(m, m);
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            if let Some(w) = f(k, l) {
                if w == 0.0 {
                    continue;
                }
                let u = self.eigenvectors.column(k);
                for i in 0..m {
                    let ui = u[i] * w;
                    for j in 0..m {
                        out[(i, j)] += ui * u[j].conj();
                    }
                }
            }
        }
        HermitianMatrix::symmetrize(out)
    }

    /// Columns whose eigenvalue exceeds `threshold`.
    pub fn columns_above(&self, threshold: f64) -> DMatrix<Complex64> {
        let idx: Vec<usize> = (0..self.dim())
            .filter(|&k| self.eigenvalues[k] > threshold)
            .collect();
        self.select_columns(&idx)
    }

    /// Columns whose eigenvalue is at most `threshold`.
    pub fn columns_at_most(&self, threshold: f64) -> DMatrix<Complex64> {
        let idx: Vec<usize> = (0..self.dim())
            .filter(|&k| self.eigenvalues[k] <= threshold)
            .collect();
        self.select_columns(&idx)
    }

    fn select_columns(&self, idx: &[usize]) -> DMatrix<Complex64> {
        let m = self.dim();
        DMatrix::from_fn(m, idx.len(), |i, j| self.eigenvectors[(i, idx[j])])
    }
}

/// Hermitian eigendecomposition, eigenvalues descending.
pub fn eig(a: &HermitianMatrix) -> Result<EigenDecomposition> {
    let se = a
        .data
        .clone()
        .try_symmetric_eigen(EIG_EPS, EIG_MAX_ITER)
        .ok_or_else(|| Error::Numerical("Hermitian eigendecomposition did not converge".into()))?;
    let m = a.dim();
    let mut order: Vec<usize> = (0..m).collect();
    // stable: ties keep original index order
    order.sort_by(|&i, &j| {
        se.eigenvalues[j]
            .partial_cmp(&se.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if se.eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    let eigenvalues = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(m, m, |i, j| se.eigenvectors[(i, order[j])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Absolute threshold below which an eigenvalue of a matrix with spectral
/// radius `scale` is treated as zero.
#[inline]
pub fn zero_threshold(scale: f64, tol: f64) -> f64 {
    tol * scale
}

/// Positive eigenmodes `Σ_{λᵢ>τ} λᵢuᵢuᵢ⁺`, `τ = tol · max|λ|`.
pub fn psd_part_with_tol(a: &HermitianMatrix, tol: f64) -> Result<HermitianMatrix> {
    let e = eig(a)?;
    let tau = zero_threshold(e.max_abs_eigenvalue(), tol);
    Ok(e.rebuild(|_, l| (l > tau).then_some(l)))
}

pub fn psd_part(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    psd_part_with_tol(a, DEFAULT_RANK_TOL)
}

/// Moore–Penrose pseudo-inverse; eigenvalues `≤ tol · λ₁` are zeroed.
pub fn pinv(a: &HermitianMatrix, tol: f64) -> Result<HermitianMatrix> {
    let e = eig(a)?;
    let tau = zero_threshold(e.max_abs_eigenvalue(), tol);
    Ok(e.rebuild(|_, l| (l.abs() > tau && l.abs() > 0.0).then(|| 1.0 / l)))
}

/// Principal square root of a PSD matrix.
pub fn sqrt_psd(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    sqrt_psd_with_tol(a, DEFAULT_RANK_TOL)
}

pub fn sqrt_psd_with_tol(a: &HermitianMatrix, tol: f64) -> Result<HermitianMatrix> {
    let e = eig(a)?;
    let floor = -zero_threshold(e.max_abs_eigenvalue().max(1.0), tol);
    if e.min_eigenvalue() < floor {
        return Err(Error::Domain(format!(
            "square root of matrix with negative eigenvalue {:.3e}",
            e.min_eigenvalue()
        )));
    }
    Ok(e.rebuild(|_, l| (l > 0.0).then(|| l.sqrt())))
}

/// Number of eigenvalues with `|λᵢ| > tol · max(1, |λ₁|)`.
pub fn numerical_rank(a: &HermitianMatrix, tol: f64) -> Result<usize> {
    Ok(rank_of(&eig(a)?, tol))
}

pub fn rank_of(e: &EigenDecomposition, tol: f64) -> usize {
    let tau = tol * e.max_abs_eigenvalue().max(1.0);
    e.eigenvalues.iter().filter(|l| l.abs() > tau).count()
}

fn mat_vec_norm(a: &DMatrix<Complex64>, v: &[Complex64]) -> f64 {
    let m = a.nrows();
    (0..m)
        .map(|i| {
            (0..v.len())
                .map(|j| a[(i, j)] * v[j])
                .sum::<Complex64>()
                .norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Tests `N(a) ⊆ N(b)`.
///
/// True iff every eigenvector of `a` with eigenvalue `≤ tol · max(1, λ₁(a))`
/// satisfies `‖b u‖ ≤ tol · (1 + ‖b‖)`.
pub fn null_space_contained(a: &HermitianMatrix, b: &HermitianMatrix, tol: f64) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let ea = eig(a)?;
    let tau = tol * ea.max_abs_eigenvalue().max(1.0);
    let limit = tol * (1.0 + b.frobenius_norm());
    Ok((0..ea.dim())
        .filter(|&k| ea.eigenvalues[k] <= tau)
        .all(|k| mat_vec_norm(b.as_matrix(), &ea.vector(k)) <= limit))
}
