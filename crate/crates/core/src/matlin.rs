//! Dense complex linear algebra on top of `faer`.
//!
//! Everything in this crate that touches quantum objects goes through the
//! small set of primitives here: Kronecker products, partial traces,
//! Hermitian eigendecomposition and the pseudo-inverse square root used for
//! steering-equivalent observables.

use faer::{Mat, MatRef, Side};
use num_complex::Complex;

use crate::error::{Error, Result};

#[allow(non_camel_case_types)]
pub type c64 = Complex<f64>;

/// Dense complex matrix.
pub type ComplexMatrix = Mat<c64>;

/// Default tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Dense Hermitian matrix. The full square is stored; construction enforces
/// `m[(i, j)] == conj(m[(j, i)])`.
#[derive(Clone, Debug)]
pub struct HermitianMatrix {
    mat: Mat<c64>,
}

impl HermitianMatrix {
    /// Validates Hermiticity within `tol` and stores the exactly symmetrized
    /// matrix.
    pub fn new(mat: Mat<c64>, tol: f64) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let asym = hermitian_defect(mat.as_ref());
        if asym > tol {
            return Err(Error::NotHermitian(asym));
        }
        Ok(Self::hermitize(mat.as_ref()))
    }

    /// `(m + m†) / 2`.
    pub fn hermitize(m: MatRef<'_, c64>) -> Self {
        let n = m.nrows();
        let mat = Mat::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
        Self { mat }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: Mat::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: Mat::from_fn(dim, dim, |i, j| {
                if i == j {
                    c64::new(1.0, 0.0)
                } else {
                    c64::new(0.0, 0.0)
                }
            }),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            mat: Mat::from_fn(n, n, |i, j| {
                if i == j {
                    c64::new(diag[i], 0.0)
                } else {
                    c64::new(0.0, 0.0)
                }
            }),
        }
    }

    /// `|v⟩⟨v|`.
    pub fn outer(v: &[c64]) -> Self {
        let n = v.len();
        Self {
            mat: Mat::from_fn(n, n, |i, j| v[i] * v[j].conj()),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_mat(&self) -> MatRef<'_, c64> {
        self.mat.as_ref()
    }

    pub fn into_mat(self) -> Mat<c64> {
        self.mat
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.mat[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    /// `Re tr(self · other)`; both Hermitian so the trace is real.
    pub fn trace_product(&self, other: &HermitianMatrix) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.mat[(i, j)] * other.mat[(j, i)]).re;
            }
        }
        acc
    }

    pub fn scale(&self, s: f64) -> Self {
        let n = self.dim();
        Self {
            mat: Mat::from_fn(n, n, |i, j| self.mat[(i, j)] * s),
        }
    }

    pub fn add(&self, other: &HermitianMatrix) -> Self {
        let n = self.dim();
        assert_eq!(n, other.dim(), "dimension mismatch in Hermitian add");
        Self {
            mat: Mat::from_fn(n, n, |i, j| self.mat[(i, j)] + other.mat[(i, j)]),
        }
    }

    pub fn sub(&self, other: &HermitianMatrix) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// `U self U†`.
    pub fn conjugate_by(&self, u: MatRef<'_, c64>) -> Self {
        let prod = u * self.mat.as_ref() * u.adjoint();
        Self::hermitize(prod.as_ref())
    }

    /// `A self A†` for a rectangular `A`.
    pub fn sandwich(&self, a: MatRef<'_, c64>) -> Self {
        self.conjugate_by(a)
    }

    /// Max absolute entry difference.
    pub fn max_abs_diff(&self, other: &HermitianMatrix) -> f64 {
        max_abs_diff(self.mat.as_ref(), other.mat.as_ref())
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(self.mat.as_ref())
    }

    /// True when every imaginary part is below `tol`.
    pub fn is_real(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| self.mat[(i, j)].im.abs() <= tol))
    }
}

pub fn hermitian_defect(m: MatRef<'_, c64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

pub fn frobenius(m: MatRef<'_, c64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> ComplexMatrix {
    let (p, q) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * p, a.ncols() * q, |r, c| {
        a[(r / p, c / q)] * b[(r % p, c % q)]
    })
}

/// Which tensor factor a partial trace removes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

/// Partial trace of a bipartite operator on `C^{d_A} ⊗ C^{d_B}`.
pub fn partial_trace(
    m: &HermitianMatrix,
    dims: (usize, usize),
    subsystem: Subsystem,
) -> Result<HermitianMatrix> {
    let (da, db) = dims;
    if da == 0 || db == 0 || m.dim() != da * db {
        return Err(Error::Dimension(format!(
            "partial trace over {da}x{db} applied to a {}-dimensional operator",
            m.dim()
        )));
    }
    let mat = m.as_mat();
    let out = match subsystem {
        Subsystem::First => Mat::from_fn(db, db, |k, l| {
            (0..da).map(|i| mat[(i * db + k, i * db + l)]).sum::<c64>()
        }),
        Subsystem::Second => Mat::from_fn(da, da, |i, j| {
            (0..db).map(|k| mat[(i * db + k, j * db + k)]).sum::<c64>()
        }),
    };
    Ok(HermitianMatrix::hermitize(out.as_ref()))
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors, matching `values` order.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `V diag(f(λ)) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let v = self.vectors.as_ref();
        let n = v.nrows();
        let k = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mat = Mat::from_fn(n, n, |i, j| {
            (0..k).map(|c| v[(i, c)] * v[(j, c)].conj() * fv[c]).sum::<c64>()
        });
        HermitianMatrix::hermitize(mat.as_ref())
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.map(|l| l)
    }
}

pub fn eig_hermitian(m: &HermitianMatrix) -> Result<HermitianEigen> {
    let evd = m
        .as_mat()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NoConvergence)?;
    let s = evd.S().column_vector();
    let values: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence);
    }
    Ok(HermitianEigen {
        values,
        vectors: evd.U().to_owned(),
    })
}

pub fn eigenvalues_hermitian(m: &HermitianMatrix) -> Result<Vec<f64>> {
    let mut vals: Vec<f64> = m
        .as_mat()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::NoConvergence)?;
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

pub fn min_eigenvalue(m: &HermitianMatrix) -> Result<f64> {
    if m.dim() == 0 {
        return Ok(0.0);
    }
    Ok(eigenvalues_hermitian(m)?[0])
}

/// True iff the smallest eigenvalue is at least `-tol`.
pub fn is_psd(m: &HermitianMatrix, tol: f64) -> bool {
    match min_eigenvalue(m) {
        Ok(l) => l >= -tol,
        Err(_) => false,
    }
}

/// Result of [`pinv_sqrt`].
#[derive(Clone, Debug)]
pub struct PinvSqrt {
    /// `Σ_{λ > tol} λ^{-1/2} v v†`.
    pub result: HermitianMatrix,
    /// Projector onto the eigenvectors kept above.
    pub range_projector: HermitianMatrix,
    pub rank: usize,
}

/// Relative rank tolerance: eigenvalues below `DEFAULT_RANK_TOL · λ_max` are
/// treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Moore–Penrose inverse square root of a PSD matrix together with the
/// projector onto its range. `rank_tol` is absolute; pass `None` to use
/// `DEFAULT_RANK_TOL · λ_max`.
pub fn pinv_sqrt(m: &HermitianMatrix, rank_tol: Option<f64>) -> Result<PinvSqrt> {
    let eig = eig_hermitian(m)?;
    let lmax = eig.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = rank_tol.unwrap_or(DEFAULT_RANK_TOL * lmax.max(f64::MIN_POSITIVE));
    if let Some(&lmin) = eig.values.first() {
        if lmin < -tol {
            return Err(Error::NotPsd(lmin));
        }
    }
    let rank = eig.values.iter().filter(|&&l| l > tol).count();
    let result = eig.map(|l| if l > tol { 1.0 / l.sqrt() } else { 0.0 });
    let range_projector = eig.map(|l| if l > tol { 1.0 } else { 0.0 });
    Ok(PinvSqrt {
        result,
        range_projector,
        rank,
    })
}

/// Square root of a PSD matrix (negative eigenvalues clipped to zero).
pub fn psd_sqrt(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    Ok(eig_hermitian(m)?.map(|l| l.max(0.0).sqrt()))
}

/// Orthonormal basis (as columns) of the orthogonal complement of the column
/// span of `v`, built by Gram–Schmidt against the standard basis.
pub fn orthonormal_complement(v: MatRef<'_, c64>, tol: f64) -> ComplexMatrix {
    let n = v.nrows();
    let mut basis: Vec<Vec<c64>> = Vec::new();
    // Orthonormalize the existing columns first so the complement is exact.
    for c in 0..v.ncols() {
        let col: Vec<c64> = (0..n).map(|i| v[(i, c)]).collect();
        if let Some(q) = gram_schmidt_step(&basis, col, tol) {
            basis.push(q);
        }
    }
    let start = basis.len();
    for e in 0..n {
        if basis.len() == n {
            break;
        }
        let mut col = vec![c64::new(0.0, 0.0); n];
        col[e] = c64::new(1.0, 0.0);
        if let Some(q) = gram_schmidt_step(&basis, col, tol) {
            basis.push(q);
        }
    }
    let extra = &basis[start..];
    Mat::from_fn(n, extra.len(), |i, c| extra[c][i])
}

/// Orthonormal basis (as columns) of the range of an orthogonal projector,
/// picked from its columns by pivoted Gram–Schmidt. Real projectors give
/// real bases.
pub fn projector_basis(p: &HermitianMatrix) -> ComplexMatrix {
    let n = p.dim();
    let rank = p.trace().round().max(0.0) as usize;
    let cols: Vec<Vec<c64>> = (0..n).map(|j| (0..n).map(|i| p.get(i, j)).collect()).collect();
    let mut basis: Vec<Vec<c64>> = Vec::with_capacity(rank);
    while basis.len() < rank {
        let (j, norm) = cols
            .iter()
            .map(|col| residual_norm(&basis, col))
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("projector has columns");
        match gram_schmidt_step(&basis, cols[j].clone(), PROJECTOR_PIVOT_TOL) {
            Some(q) if norm > PROJECTOR_PIVOT_TOL => basis.push(q),
            _ => break,
        }
    }
    Mat::from_fn(n, basis.len(), |i, c| basis[c][i])
}

/// Smallest residual column norm accepted by [`projector_basis`].
const PROJECTOR_PIVOT_TOL: f64 = 1e-6;

fn residual_norm(basis: &[Vec<c64>], v: &[c64]) -> f64 {
    let mut v = v.to_vec();
    for _ in 0..2 {
        for q in basis {
            let proj: c64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
    }
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Projector onto the eigenvectors of a PSD matrix with eigenvalue above
/// `tol` (absolute).
pub fn support_projector(m: &HermitianMatrix, tol: f64) -> Result<HermitianMatrix> {
    Ok(eig_hermitian(m)?.map(|l| if l > tol { 1.0 } else { 0.0 }))
}

/// Projector onto the intersection of the ranges of the given projectors:
/// the kernel of `Σ (1 − P_k)`.
pub fn intersect_projectors(ps: &[&HermitianMatrix], n: usize) -> Result<HermitianMatrix> {
    let mut k = HermitianMatrix::zeros(n);
    for p in ps {
        k = k.add(&HermitianMatrix::identity(n).sub(p));
    }
    Ok(eig_hermitian(&k)?.map(|l| if l < INTERSECTION_TOL { 1.0 } else { 0.0 }))
}

/// Eigenvalue cutoff for the kernel in [`intersect_projectors`].
const INTERSECTION_TOL: f64 = 1e-8;

fn gram_schmidt_step(basis: &[Vec<c64>], mut v: Vec<c64>, tol: f64) -> Option<Vec<c64>> {
    // Two passes of classical Gram–Schmidt keep orthogonality at machine precision.
    for _ in 0..2 {
        for q in basis {
            let proj: c64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm <= tol {
        return None;
    }
    Some(v.into_iter().map(|z| z / norm).collect())
}

pub fn c(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

/// Builds a complex matrix from row-major real/imag parts.
pub fn cmat(rows: usize, cols: usize, f: impl Fn(usize, usize) -> c64) -> ComplexMatrix {
    Mat::from_fn(rows, cols, f)
}
