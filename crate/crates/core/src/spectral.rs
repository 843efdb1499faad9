//! Spectral estimator of the joint and individual components, the adjacency
//! spectral embedding, and the single-view baselines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{eig_ordered, residual_apply, sv_left, OrthonormalBasis};
use crate::model::{AdjacencyMatrix, CovariateMatrix, Decomposition, Ranks};

/// Relative cutoff below which a requested individual rank is considered
/// unsupported by the data.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Estimate together with the singular values of the stacked basis
/// `(V1 V2)`, whose gap after position `r_M` indicates how well the joint
/// space is identified.
#[derive(Debug, Clone)]
pub struct SpectralEstimate {
    pub decomposition: Decomposition,
    pub stacked_singular_values: DVector<f64>,
}

impl SpectralEstimate {
    /// `sigma_{r_M} - sigma_{r_M + 1}` of the stacked basis.
    pub fn joint_gap(&self) -> f64 {
        let r = self.decomposition.joint.dim();
        let sv = &self.stacked_singular_values;
        if r < sv.len() {
            sv[r - 1] - sv[r]
        } else {
            sv[r - 1]
        }
    }
}

/// Runs the spectral estimator on observed (or noiseless) data.
pub fn spectral_decompose(
    a: &AdjacencyMatrix,
    x: &CovariateMatrix,
    ranks: Ranks,
) -> Result<Decomposition> {
    spectral_decompose_with_diagnostics(a, x, ranks).map(|e| e.decomposition)
}

pub fn spectral_decompose_with_diagnostics(
    a: &AdjacencyMatrix,
    x: &CovariateMatrix,
    ranks: Ranks,
) -> Result<SpectralEstimate> {
    if a.n() != x.n() {
        return Err(Error::DimensionMismatch(format!(
            "network has {} nodes, covariates have {} rows",
            a.n(),
            x.n()
        )));
    }
    ranks.validate_for(a.n(), x.p())?;
    let v1 = eig_ordered(a.entries(), ranks.network_total())?.basis;
    let v2 = sv_left(x.entries(), ranks.covariate_total())?.basis;
    let stacked = v1.hstack(&v2);
    let all = sv_left(&stacked, stacked.ncols().min(stacked.nrows()))?;
    let joint = OrthonormalBasis::new(all.basis.columns().columns(0, ranks.joint).into_owned())?;
    let network = individual_from_residual(&joint, v1.columns(), ranks.network, "network")?;
    let covariate = individual_from_residual(&joint, v2.columns(), ranks.covariate, "covariate")?;
    Ok(SpectralEstimate {
        decomposition: Decomposition {
            joint,
            network,
            covariate,
        },
        stacked_singular_values: all.values,
    })
}

/// `sv(P_{C(M)^perp} Y, r)`, failing when the `r`-th singular value of the
/// residual is below `DEGENERACY_TOL * sigma_1(Y)`.
pub(crate) fn individual_from_residual(
    joint: &OrthonormalBasis,
    y: &DMatrix<f64>,
    r: usize,
    view: &str,
) -> Result<OrthonormalBasis> {
    let resid = residual_apply(joint, y)?;
    let max_rank = resid.nrows().min(resid.ncols());
    if r > max_rank {
        return Err(Error::RankOutOfBounds {
            requested: r,
            max: max_rank,
        });
    }
    let pair = sv_left(&resid, r)?;
    let scale = top_singular_value(y);
    if !(pair.values[r - 1] > DEGENERACY_TOL * scale) {
        return Err(Error::DegenerateInput(format!(
            "{view} residual has numerical rank below {r} (sigma_{r} = {:e}, sigma_1(input) = {scale:e})",
            pair.values[r - 1]
        )));
    }
    Ok(pair.basis)
}

pub(crate) fn top_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    crate::linalg::singular_values(m)[0]
}

/// Adjacency spectral embedding `V |Lambda|^{1/2}` into `d` dimensions.
pub fn ase(a: &AdjacencyMatrix, d: usize) -> Result<DMatrix<f64>> {
    ase_matrix(a.entries(), d)
}

pub(crate) fn ase_matrix(a: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let pair = eig_ordered(a, d)?;
    let mut y = pair.basis.into_inner();
    for (mut col, lambda) in y.column_iter_mut().zip(pair.values.iter()) {
        col *= lambda.abs().sqrt();
    }
    Ok(y)
}

/// Leading `r` eigenvectors of `A` by magnitude.
pub fn baseline_top_net(a: &AdjacencyMatrix, r: usize) -> Result<OrthonormalBasis> {
    Ok(eig_ordered(a.entries(), r)?.basis)
}

/// Leading `r` left singular vectors of `X`.
pub fn baseline_top_cov(x: &CovariateMatrix, r: usize) -> Result<OrthonormalBasis> {
    Ok(sv_left(x.entries(), r)?.basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hstack, procrustes_distance};

    #[test]
    fn ase_small_cases() {
        let a = AdjacencyMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let y = ase(&a, 1).unwrap();
        assert!((y.norm() - 1.0).abs() < 1e-12);

        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = 4.0;
        let y = ase(&AdjacencyMatrix::new(m).unwrap(), 1).unwrap();
        assert_eq!(y.as_slice(), &[2.0, 0.0, 0.0]);
    }

    #[test]
    fn baselines_on_diagonal() {
        let a = AdjacencyMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]))).unwrap();
        assert_eq!(baseline_top_net(&a, 1).unwrap().columns().as_slice(), &[1.0, 0.0]);
        let x = CovariateMatrix::unnamed(DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 1.0]))).unwrap();
        assert_eq!(baseline_top_cov(&x, 1).unwrap().columns().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn ranks_are_validated() {
        let a = AdjacencyMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let x = CovariateMatrix::unnamed(DMatrix::identity(3, 2)).unwrap();
        let r = Ranks::new(1, 1, 2).unwrap();
        assert!(matches!(spectral_decompose(&a, &x, r), Err(Error::InvalidRanks(_))));
    }

    #[test]
    fn orthogonal_covariate_rotation_is_harmless() {
        // three orthonormal directions in R^6
        let basis = DMatrix::from_fn(6, 3, |i, j| if i % 3 == j { 1.0 / 2f64.sqrt() } else { 0.0 });
        let m = basis.columns(0, 1).into_owned();
        let r1 = basis.columns(1, 1).into_owned();
        let r2 = basis.columns(2, 1).into_owned();
        let p = &m * m.transpose() * 3.0 + &r1 * r1.transpose();
        let w = hstack(&m, &r2) * DMatrix::from_row_slice(2, 3, &[2.0, 0.5, 0.0, 0.0, 1.0, 1.0]);
        let ranks = Ranks::new(1, 1, 1).unwrap();
        let a = AdjacencyMatrix::new(p).unwrap();
        let d0 = spectral_decompose(&a, &CovariateMatrix::unnamed(w.clone()).unwrap(), ranks).unwrap();
        let (c, s) = (0.6, 0.8);
        let q = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let d1 = spectral_decompose(&a, &CovariateMatrix::unnamed(w * q).unwrap(), ranks).unwrap();
        assert!(procrustes_distance(&d0.joint, &d1.joint).unwrap() < 1e-10);
        assert!(procrustes_distance(&d0.covariate, &d1.covariate).unwrap() < 1e-10);
        assert!(procrustes_distance(&d0.joint, &OrthonormalBasis::new(m).unwrap()).unwrap() < 1e-10);
    }
}
