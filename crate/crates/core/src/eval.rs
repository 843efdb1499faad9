//! Error metrics, variance-explained accounting, scree-plot rank selection,
//! and the small clustering utilities used by the group-structure checks.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{eig_ordered, procrustes_distance, sv_left, OrthonormalBasis};
use crate::model::{AdjacencyMatrix, CovariateMatrix, Decomposition, Ranks, CROSS_ORTHOGONALITY_TOL};
use crate::refine::{refine_decompose, RefineConfig};
use crate::simgen::SimInstance;
use crate::spectral::{baseline_top_cov, baseline_top_net, spectral_decompose};

/// Shares of total variation attributed to each component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceReport {
    pub joint: f64,
    pub individual: f64,
    pub residual: f64,
    /// Set when rounding pushed a share below zero and it was clamped.
    pub adjusted: bool,
}

impl VarianceReport {
    fn from_shares(joint: f64, individual: f64) -> Self {
        let mut adjusted = false;
        let mut clamp = |v: f64| {
            if v < 0.0 {
                adjusted = true;
                0.0
            } else {
                v
            }
        };
        let mut joint = clamp(joint);
        let mut individual = clamp(individual);
        let explained = joint + individual;
        if explained > 1.0 {
            adjusted = true;
            joint /= explained;
            individual /= explained;
        }
        let residual = (1.0 - joint - individual).max(0.0);
        Self {
            joint,
            individual,
            residual,
            adjusted,
        }
    }

    pub fn total(&self) -> f64 {
        self.joint + self.individual + self.residual
    }
}

/// Procrustes distance of each block, `(d_M, d_R1, d_R2)`.
pub fn component_errors(est: &Decomposition, truth: &Decomposition) -> Result<(f64, f64, f64)> {
    Ok((
        procrustes_distance(&est.joint, &truth.joint)?,
        procrustes_distance(&est.network, &truth.network)?,
        procrustes_distance(&est.covariate, &truth.covariate)?,
    ))
}

fn cross_check(m: &OrthonormalBasis, r: &OrthonormalBasis) -> Result<()> {
    if m.n() != r.n() {
        return Err(Error::DimensionMismatch(format!(
            "bases have {} and {} rows",
            m.n(),
            r.n()
        )));
    }
    let cross = m.columns().tr_mul(r.columns()).norm();
    if cross > CROSS_ORTHOGONALITY_TOL {
        return Err(Error::InvalidConfig(format!(
            "joint and individual bases are not orthogonal: ||M^T R|| = {cross:e}"
        )));
    }
    Ok(())
}

/// `||P_M X||^2 / ||X||^2` and `||P_R2 X||^2 / ||X||^2`, residual the rest.
pub fn variance_explained_covariates(
    x: &CovariateMatrix,
    m: &OrthonormalBasis,
    r2: &OrthonormalBasis,
) -> Result<VarianceReport> {
    cross_check(m, r2)?;
    if m.n() != x.n() {
        return Err(Error::DimensionMismatch(format!(
            "bases have {} rows, covariates {}",
            m.n(),
            x.n()
        )));
    }
    let total = x.entries().norm_squared();
    if !(total.sqrt() >= 1e-12) {
        return Err(Error::ZeroMatrix);
    }
    let joint = m.columns().tr_mul(x.entries()).norm_squared() / total;
    let individual = r2.columns().tr_mul(x.entries()).norm_squared() / total;
    Ok(VarianceReport::from_shares(joint, individual))
}

/// Projects `A` onto `C(M R1)` on both sides to get `P_hat`, splits the
/// spectral embedding of `P_hat` between `M` and `R1`, and scales by
/// `||P_hat||^2 / ||A||^2`.
///
/// `P_hat = B (B^T A B) B^T` with `B = (M R1)`, so its eigenpairs come from
/// the small core `B^T A B`.
pub fn variance_explained_network(a: &AdjacencyMatrix, d: &Decomposition, latent_dim: usize) -> Result<VarianceReport> {
    cross_check(&d.joint, &d.network)?;
    if d.n() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "bases have {} rows, network has {} nodes",
            d.n(),
            a.n()
        )));
    }
    if latent_dim == 0 || latent_dim > a.n() {
        return Err(Error::RankOutOfBounds {
            requested: latent_dim,
            max: a.n(),
        });
    }
    let total = a.entries().norm_squared();
    if !(total.sqrt() >= 1e-12) {
        return Err(Error::ZeroMatrix);
    }
    let b = d.network_span();
    let core = b.columns().tr_mul(&(a.entries() * b.columns()));
    let core = (&core + core.transpose()) * 0.5;
    let var_p = core.norm_squared() / total;

    let k = core.nrows().min(latent_dim);
    let pair = eig_ordered(&core, k)?;
    let mut coords = pair.basis.into_inner();
    for (mut col, lambda) in coords.column_iter_mut().zip(pair.values.iter()) {
        col *= lambda.abs().sqrt();
    }
    // embedding = B * coords; its projections onto M and R1 are the
    // corresponding row blocks of coords
    let embed_sq = coords.norm_squared();
    if !(embed_sq > 0.0) {
        return Ok(VarianceReport::from_shares(0.0, 0.0));
    }
    let rm = d.joint.dim();
    let on_joint = coords.rows(0, rm).norm_squared() / embed_sq;
    let on_network = coords.rows(rm, coords.nrows() - rm).norm_squared() / embed_sq;
    Ok(VarianceReport::from_shares(on_joint * var_p, on_network * var_p))
}

/// Profile-likelihood elbow of a descending scree sequence: the split `q`
/// (first `q` values vs the rest) minimizing the pooled within-segment sum
/// of squares, i.e. maximizing the two-segment Gaussian profile likelihood
/// with a shared variance. Earliest split wins ties. Capped at `max_rank`.
pub fn rank_select(values: &[f64], max_rank: usize) -> Result<usize> {
    if values.len() < 2 {
        return Err(Error::TooFewValues(values.len()));
    }
    if max_rank == 0 {
        return Err(Error::InvalidConfig("max_rank must be at least 1".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig("scree values must be finite and non-negative".into()));
    }
    if values.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidConfig("scree values must be sorted in descending order".into()));
    }
    let ss = |s: &[f64]| {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
    };
    let scale = ss(values).max(values.iter().map(|v| v * v).sum::<f64>()) * 1e-12;
    let mut best = (1usize, f64::INFINITY);
    for q in 1..values.len() {
        let pooled = ss(&values[..q]) + ss(&values[q..]);
        if pooled < best.1 - scale {
            best = (q, pooled);
        }
    }
    Ok(best.0.min(max_rank))
}

/// Scree values and elbows for the network, covariate and joint ranks.
#[derive(Debug, Clone)]
pub struct RankSelection {
    pub ranks: Ranks,
    pub network_scree: Vec<f64>,
    pub covariate_scree: Vec<f64>,
    pub stacked_scree: Vec<f64>,
}

/// Absolute eigenvalues of `A`, descending.
pub fn network_scree(a: &AdjacencyMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = crate::linalg::symmetric_eigenvalues(a.entries()).iter().map(|l| l.abs()).collect();
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

/// Singular values of `X`, descending.
pub fn covariate_scree(x: &CovariateMatrix) -> Vec<f64> {
    crate::linalg::singular_values(x.entries())
}

/// Elbows of the network and covariate scree plots give `r_M + r_1` and
/// `r_M + r_2`; the elbow of the singular values of the stacked leading
/// bases gives `r_M`, capped so both individual ranks stay positive.
pub fn select_ranks(a: &AdjacencyMatrix, x: &CovariateMatrix, max_rank: usize) -> Result<RankSelection> {
    let network_scree = network_scree(a);
    let covariate_scree = covariate_scree(x);
    let rp = rank_select(&network_scree, max_rank)?;
    let rw = rank_select(&covariate_scree, max_rank)?;
    if rp < 2 || rw < 2 {
        return Err(Error::InvalidRanks(format!(
            "scree elbows give rank(P) = {rp}, rank(W) = {rw}; both must be at least 2 to \
             split into joint and individual parts"
        )));
    }
    let v1 = eig_ordered(a.entries(), rp)?.basis;
    let v2 = sv_left(x.entries(), rw)?.basis;
    let stacked_scree = crate::linalg::singular_values(&v1.hstack(&v2));
    let rm = rank_select(&stacked_scree, rp.min(rw) - 1)?;
    Ok(RankSelection {
        ranks: Ranks::new(rm, rp - rm, rw - rm)?,
        network_scree,
        covariate_scree,
        stacked_scree,
    })
}

/// Estimators compared in the simulations, in output order.
pub const METHODS: [&str; 4] = ["spectral", "spectral_opt", "top_sv_net", "top_sv_cov"];

/// `(d_M, d_R1, d_R2)` of each method in [`METHODS`] on one simulated
/// instance with unit ranks. The rank-one baselines are compared with each
/// true block. Failed estimates yield NaN rows.
pub fn method_errors(inst: &SimInstance, refine_cfg: &RefineConfig) -> [[f64; 3]; 4] {
    let nan = [f64::NAN; 3];
    let ranks = Ranks::new(1, 1, 1).expect("unit ranks");
    let truth = &inst.truth.components;
    let errs = |d: &Decomposition| component_errors(d, truth).map(|(a, b, c)| [a, b, c]).unwrap_or(nan);
    let mut rows = [nan; 4];
    match spectral_decompose(&inst.adjacency, &inst.covariates, ranks) {
        Ok(init) => {
            rows[0] = errs(&init);
            match refine_decompose(&inst.adjacency, &inst.covariates, &init, ranks, refine_cfg) {
                Ok(out) => rows[1] = errs(&out.decomposition),
                Err(e) => log::warn!("refinement failed: {e}"),
            }
        }
        Err(e) => log::warn!("spectral estimate failed: {e}"),
    }
    let baselines = [baseline_top_net(&inst.adjacency, 1), baseline_top_cov(&inst.covariates, 1)];
    for (slot, b) in rows[2..].iter_mut().zip(baselines) {
        if let Ok(b) = b {
            *slot = [&truth.joint, &truth.network, &truth.covariate]
                .map(|t| procrustes_distance(&b, t).unwrap_or(f64::NAN));
        }
    }
    rows
}

const KMEANS_RESTARTS: usize = 50;
const KMEANS_MAX_ITER: usize = 300;

fn sq_dist(rows: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    rows.row(i)
        .iter()
        .zip(centers.row(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn plus_plus_init<R: Rng>(rows: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let n = rows.nrows();
    let mut centers = DMatrix::zeros(k, rows.ncols());
    centers.set_row(0, &rows.row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(rows, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in nearest.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &rows.row(pick));
        for (i, slot) in nearest.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(rows, i, &centers, c));
        }
    }
    centers
}

fn lloyd(rows: &DMatrix<f64>, mut centers: DMatrix<f64>) -> (Vec<usize>, f64) {
    let (n, k) = (rows.nrows(), centers.nrows());
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let best = (0..k)
                .map(|c| (c, sq_dist(rows, i, &centers, c)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
                .0;
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::zeros(k, rows.ncols());
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let updated = sums.row(l) + rows.row(i);
            sums.set_row(l, &updated);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers.set_row(c, &(sums.row(c) / counts[c] as f64));
            } else {
                // re-seed an empty cluster at the point farthest from its center
                let far = (0..n)
                    .map(|i| (i, sq_dist(rows, i, &centers, labels[i])))
                    .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc })
                    .0;
                centers.set_row(c, &rows.row(far));
            }
        }
    }
    let inertia = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(rows, i, &centers, l))
        .sum();
    (labels, inertia)
}

/// Lloyd's algorithm from k-means++ seeds, best of 50 restarts by
/// within-cluster sum of squares. Labels are `0..k`.
pub fn kmeans(rows: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = rows.nrows();
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let init = plus_plus_init(rows, k, &mut rng);
        let (labels, inertia) = lloyd(rows, init);
        if best.as_ref().is_none_or(|b| inertia < b.1) {
            best = Some((labels, inertia));
        }
    }
    Ok(best.expect("at least one restart").0)
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let pairs = choose2(a.len() as u64);
    if pairs == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / pairs;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both partitions trivial in the same way
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hstack;

    fn basis(m: DMatrix<f64>) -> OrthonormalBasis {
        OrthonormalBasis::new(m).unwrap()
    }

    fn unit(n: usize, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, 1);
        m[(i, 0)] = 1.0;
        m
    }

    #[test]
    fn covariate_variance_extremes() {
        let m = basis(unit(4, 0));
        let r2 = basis(unit(4, 1));
        let x = CovariateMatrix::unnamed(DMatrix::from_fn(4, 2, |i, j| if i == 0 { j as f64 + 1.0 } else { 0.0 })).unwrap();
        let rep = variance_explained_covariates(&x, &m, &r2).unwrap();
        assert_eq!((rep.joint, rep.individual, rep.residual), (1.0, 0.0, 0.0));
        let x = CovariateMatrix::unnamed(hstack(&unit(4, 2), &unit(4, 3))).unwrap();
        let rep = variance_explained_covariates(&x, &m, &r2).unwrap();
        assert_eq!((rep.joint, rep.individual, rep.residual), (0.0, 0.0, 1.0));
        let zero = CovariateMatrix::unnamed(DMatrix::zeros(4, 2)).unwrap();
        assert!(matches!(variance_explained_covariates(&zero, &m, &r2), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn network_variance_extremes() {
        let m = unit(4, 0);
        let d = Decomposition {
            joint: basis(m.clone()),
            network: basis(unit(4, 1)),
            covariate: basis(unit(4, 2)),
        };
        let a = AdjacencyMatrix::new(&m * m.transpose()).unwrap();
        let rep = variance_explained_network(&a, &d, 2).unwrap();
        assert!((rep.joint - 1.0).abs() < 1e-12 && rep.individual.abs() < 1e-12 && rep.residual < 1e-12);
        let a = AdjacencyMatrix::new(unit(4, 3) * unit(4, 3).transpose()).unwrap();
        let rep = variance_explained_network(&a, &d, 2).unwrap();
        assert_eq!((rep.joint, rep.individual, rep.residual), (0.0, 0.0, 1.0));
    }

    #[test]
    fn elbow_examples() {
        assert_eq!(rank_select(&[10.0, 9.5, 0.1, 0.09, 0.08], 10).unwrap(), 2);
        assert_eq!(rank_select(&[5.0, 5.0, 5.0, 5.0], 10).unwrap(), 1);
        assert_eq!(rank_select(&[10.0, 9.5, 0.1, 0.09, 0.08], 1).unwrap(), 1);
        assert!(matches!(rank_select(&[1.0], 3), Err(Error::TooFewValues(1))));
        assert!(rank_select(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn kmeans_two_clouds() {
        let rows = DMatrix::from_row_slice(6, 2, &[0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 10.0, 10.0, 10.1, 10.0, 10.0, 10.1]);
        let labels = kmeans(&rows, 2, 3).unwrap();
        assert_eq!(adjusted_rand_index(&labels, &[0, 0, 0, 1, 1, 1]).unwrap(), 1.0);
        let same = DMatrix::from_element(5, 2, 1.0);
        assert_eq!(kmeans(&same, 1, 0).unwrap(), vec![0; 5]);
        assert!(matches!(kmeans(&same, 6, 0), Err(Error::KTooLarge { k: 6, n: 5 })));
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[1, 1, 2, 2], &[1, 1, 2, 2]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[1, 1, 2, 2], &[7, 7, 3, 3]).unwrap(), 1.0);
        // contingency all ones: index 0, expected 2*2/6, max 2
        let v = adjusted_rand_index(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap();
        assert!((v - (0.0 - 2.0 / 3.0) / (2.0 - 2.0 / 3.0)).abs() < 1e-15);
        assert!(matches!(adjusted_rand_index(&[1], &[1, 2]), Err(Error::LengthMismatch(1, 2))));
    }
}
