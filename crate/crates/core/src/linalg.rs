//! Dense linear-algebra primitives shared by the estimators.
//!
//! Eigenvectors are ordered by eigenvalue magnitude, singular vectors by
//! singular value, and every returned column has its largest-magnitude entry
//! made positive so outputs are reproducible. Equal values keep the solver's
//! index order; under ties only the spanned subspace is meaningful.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Maximum absolute asymmetry accepted by [`eig_ordered`].
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Frobenius tolerance on `B^T B - I` for an [`OrthonormalBasis`].
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// An `n x r` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    columns: DMatrix<f64>,
}

impl OrthonormalBasis {
    /// Wraps `columns`, checking `1 <= r <= n` and orthonormality.
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        let (n, r) = columns.shape();
        if r == 0 || r > n {
            return Err(Error::RankOutOfBounds {
                requested: r,
                max: n,
            });
        }
        let defect = orthonormality_defect(&columns);
        if !(defect <= ORTHONORMAL_TOL) {
            return Err(Error::NotOrthonormal(defect));
        }
        Ok(Self { columns })
    }

    /// Orthonormalizes the columns of `m` (thin QR), which must have full
    /// column rank.
    pub fn orthonormalize(m: &DMatrix<f64>) -> Result<Self> {
        let (n, r) = m.shape();
        if r == 0 || r > n {
            return Err(Error::RankOutOfBounds {
                requested: r,
                max: n,
            });
        }
        let qr = m.clone().qr();
        let rdiag = qr.r().diagonal();
        let scale = rdiag.amax().max(f64::MIN_POSITIVE);
        if rdiag.iter().any(|d| d.abs() <= 1e-12 * scale) {
            return Err(Error::DegenerateInput(
                "columns are linearly dependent".into(),
            ));
        }
        let mut q = qr.q();
        fix_signs(&mut q);
        Self::new(q)
    }

    /// Wraps `columns` without any check. Only for assembling inputs to
    /// [`crate::model::validate_decomposition`] and similar auditors.
    pub fn new_unchecked(columns: DMatrix<f64>) -> Self {
        Self { columns }
    }

    /// Skips validation; callers guarantee the invariant.
    pub(crate) fn from_trusted(columns: DMatrix<f64>) -> Self {
        debug_assert!(orthonormality_defect(&columns) <= 1e-8);
        Self { columns }
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.columns
    }

    /// Ambient dimension (node count).
    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    /// Subspace dimension.
    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    /// Right-multiplies by an `r x r` matrix, e.g. an orthogonal rotation.
    pub fn rotate(&self, q: &DMatrix<f64>) -> Result<Self> {
        if q.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "rotation has {} rows, basis has {} columns",
                q.nrows(),
                self.dim()
            )));
        }
        Self::new(&self.columns * q)
    }

    /// Columns of `self` followed by columns of `other`.
    pub fn hstack(&self, other: &OrthonormalBasis) -> DMatrix<f64> {
        hstack(&self.columns, &other.columns)
    }
}

/// Basis plus its eigen- or singular values, in matching order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    pub basis: OrthonormalBasis,
    pub values: DVector<f64>,
}

/// `||B^T B - I||_F`.
pub fn orthonormality_defect(b: &DMatrix<f64>) -> f64 {
    let gram = b.transpose() * b;
    (gram - DMatrix::identity(b.ncols(), b.ncols())).norm()
}

/// Largest `|S_ij - S_ji|`.
pub fn max_asymmetry(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            let d = (s[(i, j)] - s[(j, i)]).abs();
            if d > worst || d.is_nan() {
                worst = d;
            }
        }
    }
    worst
}

pub fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Flips each column so its largest-magnitude entry is positive (first
/// index wins on ties).
pub fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col.len() > 0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn check_rank(k: usize, max: usize) -> Result<()> {
    if k == 0 || k > max {
        return Err(Error::RankOutOfBounds { requested: k, max });
    }
    Ok(())
}

/// Indices sorted by descending `key`, stable on ties.
fn descending_order(keys: impl Iterator<Item = f64>) -> Vec<usize> {
    let keys: Vec<f64> = keys.collect();
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
    idx
}

/// Leading `k` eigenpairs of a symmetric matrix, ordered by `|lambda|`
/// descending, with signed eigenvalues.
pub fn eig_ordered(s: &DMatrix<f64>, k: usize) -> Result<SpectralPair> {
    let (n, m) = s.shape();
    if n != m {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {n}x{m}"
        )));
    }
    check_rank(k, n)?;
    let asymmetry = max_asymmetry(s);
    if !(asymmetry <= SYMMETRY_TOL) {
        return Err(Error::NotSymmetric {
            asymmetry,
            tolerance: SYMMETRY_TOL,
        });
    }
    let sym = (s + s.transpose()) * 0.5;
    let (eigenvalues, eigenvectors) = symmetric_eigen(&sym);
    let order = descending_order(eigenvalues.iter().map(|v| v.abs()));
    let mut vectors = DMatrix::zeros(n, k);
    let mut values = DVector::zeros(k);
    for (dst, &src) in order.iter().take(k).enumerate() {
        vectors.set_column(dst, &eigenvectors.column(src));
        values[dst] = eigenvalues[src];
    }
    fix_signs(&mut vectors);
    Ok(SpectralPair {
        basis: OrthonormalBasis::from_trusted(vectors),
        values,
    })
}

/// Leading `k` left singular vectors and singular values of `x`.
///
/// `k` may exceed the numerical rank; the trailing columns then span an
/// arbitrary orthonormal complement and carry (near-)zero singular values.
pub fn sv_left(x: &DMatrix<f64>, k: usize) -> Result<SpectralPair> {
    let (n, p) = x.shape();
    check_rank(k, n.min(p))?;
    let (u, singular) = thin_svd_left(x);
    let mut vectors = u.columns(0, k).into_owned();
    let values = DVector::from_iterator(k, singular.iter().take(k).copied());
    if orthonormality_defect(&vectors) > ORTHONORMAL_TOL {
        let top = values[0].max(f64::MIN_POSITIVE);
        let keep = values.iter().take_while(|&&v| v > 1e-10 * top).count();
        vectors = complete_orthonormal(&vectors, keep);
    }
    fix_signs(&mut vectors);
    Ok(SpectralPair {
        basis: OrthonormalBasis::from_trusted(vectors),
        values,
    })
}

/// Keeps the first `keep` columns of `m` (assumed orthonormal) and replaces
/// the rest with an orthonormal completion built from canonical vectors.
fn complete_orthonormal(m: &DMatrix<f64>, keep: usize) -> DMatrix<f64> {
    let (n, k) = m.shape();
    let mut out = DMatrix::zeros(n, k);
    let mut filled = 0usize;
    let push = |out: &mut DMatrix<f64>, v: DVector<f64>, filled: &mut usize| {
        let mut w = v;
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for j in 0..*filled {
                let c = out.column(j).dot(&w);
                w.axpy(-c, &out.column(j), 1.0);
            }
        }
        let norm = w.norm();
        if norm > 1e-6 {
            out.set_column(*filled, &(w / norm));
            *filled += 1;
        }
    };
    for j in 0..keep.min(k) {
        push(&mut out, m.column(j).into_owned(), &mut filled);
    }
    let mut e = 0;
    while filled < k && e < n {
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        push(&mut out, v, &mut filled);
        e += 1;
    }
    out
}

fn check_rows(b: &OrthonormalBasis, y: &DMatrix<f64>) -> Result<()> {
    if b.n() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows, matrix has {}",
            b.n(),
            y.nrows()
        )));
    }
    Ok(())
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Singular values of `m`, descending. Empty for an empty matrix.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    to_faer(m).singular_values().expect("SVD converges")
}

/// Thin SVD: left singular vectors (`n x min(n, p)`) and singular values,
/// descending.
fn thin_svd_left(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let svd = to_faer(m).thin_svd().expect("SVD converges");
    let values = (0..svd.S().dim()).map(|i| svd.S()[i]).collect();
    (from_faer(svd.U()), values)
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix.
fn symmetric_eigen(s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let evd = to_faer(s)
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("symmetric eigendecomposition converges");
    let values = (0..evd.S().dim()).map(|i| evd.S()[i]).collect();
    (values, from_faer(evd.U()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(s: &DMatrix<f64>) -> Vec<f64> {
    if s.is_empty() {
        return Vec::new();
    }
    to_faer(s)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("symmetric eigendecomposition converges")
}

/// Orthogonal projection of the columns of `y` onto `C(B)`, as `B (B^T Y)`.
pub fn projector_apply(b: &OrthonormalBasis, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_rows(b, y)?;
    let coeffs = b.columns().tr_mul(y);
    Ok(b.columns() * coeffs)
}

/// `Y - B (B^T Y)`: projection onto the orthogonal complement of `C(B)`.
pub fn residual_apply(b: &OrthonormalBasis, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let proj = projector_apply(b, y)?;
    Ok(y - proj)
}

fn singular_values_sorted(m: DMatrix<f64>) -> Vec<f64> {
    singular_values(&m)
}

/// Cosines of the principal angles between `C(U)` and `C(V)`, descending.
pub fn principal_cosines(u: &OrthonormalBasis, v: &OrthonormalBasis) -> Result<Vec<f64>> {
    if u.n() != v.n() {
        return Err(Error::DimensionMismatch(format!(
            "bases live in R^{} and R^{}",
            u.n(),
            v.n()
        )));
    }
    Ok(singular_values_sorted(v.columns().tr_mul(u.columns()))
        .into_iter()
        .map(|c| c.min(1.0))
        .collect())
}

/// `inf_Q ||U - V Q||_F` over orthogonal `Q`, i.e. `sqrt(2r - 2 sum sigma_i(V^T U))`.
///
/// Near-aligned angles use `1 - cos = sin^2 / (1 + cos)` with the sines
/// taken from `U - V V^T U`, which keeps distances far below `sqrt(eps)`
/// resolvable.
pub fn procrustes_distance(u: &OrthonormalBasis, v: &OrthonormalBasis) -> Result<f64> {
    if u.n() != v.n() || u.dim() != v.dim() {
        return Err(Error::DimensionMismatch(format!(
            "Procrustes distance needs equal shapes, got {}x{} and {}x{}",
            u.n(),
            u.dim(),
            v.n(),
            v.dim()
        )));
    }
    let r = u.dim();
    let cosines = principal_cosines(u, v)?;
    let residual = u.columns() - v.columns() * v.columns().tr_mul(u.columns());
    let mut sines = singular_values_sorted(residual);
    sines.reverse();
    let half_sq: f64 = cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| {
            if c > 0.5 {
                s * s / (1.0 + c)
            } else {
                1.0 - c
            }
        })
        .sum();
    Ok((2.0 * half_sq).max(0.0).sqrt().min((2.0 * r as f64).sqrt()))
}

/// `1 - sigma_1(R1^T R2)`: one minus the cosine of the smallest principal
/// angle between two subspaces.
pub fn delta_separation(r1: &OrthonormalBasis, r2: &OrthonormalBasis) -> Result<f64> {
    let cosines = principal_cosines(r1, r2)?;
    Ok((1.0 - cosines[0]).clamp(0.0, 1.0))
}

/// Number of singular values above `rel_tol * sigma_1`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = singular_values_sorted(m.clone());
    let top = sv[0];
    if !(top > 0.0) {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Orthonormal basis of the numerical column space of `m`, or `None` when
/// `m` is numerically zero.
pub fn column_space(m: &DMatrix<f64>, rel_tol: f64) -> Option<OrthonormalBasis> {
    let rank = numerical_rank(m, rel_tol);
    if rank == 0 {
        return None;
    }
    sv_left(m, rank).ok().map(|p| p.basis)
}

/// Haar-ish random orthonormal `n x r` basis (QR of a Gaussian matrix).
pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> Result<OrthonormalBasis> {
    let g = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    OrthonormalBasis::orthonormalize(&g)
}
