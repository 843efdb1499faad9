//! Signal-plus-noise model types and the joint/individual decomposition.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{
    self, eig_ordered, numerical_rank, orthonormality_defect, residual_apply, sv_left,
    OrthonormalBasis, ORTHONORMAL_TOL,
};

/// Tolerance for `M^T R = 0` in a valid decomposition.
pub const CROSS_ORTHOGONALITY_TOL: f64 = 1e-8;
/// Relative singular-value cutoff used for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

/// Symmetric `n x n` observed network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    entries: DMatrix<f64>,
}

impl AdjacencyMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (n, m) = entries.shape();
        if n != m {
            return Err(Error::DimensionMismatch(format!(
                "adjacency matrix must be square, got {n}x{m}"
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("adjacency matrix has non-finite entries".into()));
        }
        let asymmetry = linalg::max_asymmetry(&entries);
        if asymmetry > linalg::SYMMETRY_TOL {
            return Err(Error::NotSymmetric {
                asymmetry,
                tolerance: linalg::SYMMETRY_TOL,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_binary(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn has_zero_diagonal(&self) -> bool {
        self.entries.diagonal().iter().all(|&v| v == 0.0)
    }
}

/// `n x p` node covariates with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    entries: DMatrix<f64>,
    column_names: Vec<String>,
}

impl CovariateMatrix {
    pub fn new(entries: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        if entries.ncols() == 0 {
            return Err(Error::DimensionMismatch("covariate matrix has no columns".into()));
        }
        if column_names.len() != entries.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} column names for {} columns",
                column_names.len(),
                entries.ncols()
            )));
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % entries.nrows(), pos / entries.nrows());
            return Err(Error::InvalidConfig(format!(
                "covariate entry ({row}, {col}) is not finite"
            )));
        }
        Ok(Self {
            entries,
            column_names,
        })
    }

    /// Columns named `x1..xp`.
    pub fn unnamed(entries: DMatrix<f64>) -> Result<Self> {
        let names = (1..=entries.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(entries, names)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn p(&self) -> usize {
        self.entries.ncols()
    }
}

/// Joint, network-individual and covariate-individual dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ranks {
    pub joint: usize,
    pub network: usize,
    pub covariate: usize,
}

impl Ranks {
    pub fn new(joint: usize, network: usize, covariate: usize) -> Result<Self> {
        if joint == 0 || network == 0 || covariate == 0 {
            return Err(Error::InvalidRanks(format!(
                "all ranks must be at least 1, got ({joint}, {network}, {covariate})"
            )));
        }
        Ok(Self {
            joint,
            network,
            covariate,
        })
    }

    /// Checks `r_M + r_1 <= n` and `r_M + r_2 <= min(n, p)`.
    pub fn validate_for(&self, n: usize, p: usize) -> Result<()> {
        Self::new(self.joint, self.network, self.covariate)?;
        if self.network_total() > n {
            return Err(Error::InvalidRanks(format!(
                "r_M + r_1 = {} exceeds n = {n}",
                self.network_total()
            )));
        }
        if self.covariate_total() > n.min(p) {
            return Err(Error::InvalidRanks(format!(
                "r_M + r_2 = {} exceeds min(n, p) = {}",
                self.covariate_total(),
                n.min(p)
            )));
        }
        Ok(())
    }

    /// Rank of the network signal, `r_M + r_1`.
    pub fn network_total(&self) -> usize {
        self.joint + self.network
    }

    /// Rank of the covariate signal, `r_M + r_2`.
    pub fn covariate_total(&self) -> usize {
        self.joint + self.covariate
    }
}

impl fmt::Display for Ranks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.joint, self.network, self.covariate)
    }
}

impl std::str::FromStr for Ranks {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidRanks(format!(
                "expected r_M,r_1,r_2, got '{s}'"
            )));
        }
        let mut vals = [0usize; 3];
        for (slot, part) in vals.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::InvalidRanks(format!("'{part}' is not a non-negative integer")))?;
        }
        Ranks::new(vals[0], vals[1], vals[2])
    }
}

/// Joint basis `M` and individual bases `R1` (network), `R2` (covariates).
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub joint: OrthonormalBasis,
    pub network: OrthonormalBasis,
    pub covariate: OrthonormalBasis,
}

impl Decomposition {
    pub fn ranks(&self) -> Ranks {
        Ranks {
            joint: self.joint.dim(),
            network: self.network.dim(),
            covariate: self.covariate.dim(),
        }
    }

    pub fn n(&self) -> usize {
        self.joint.n()
    }

    /// `(M R1)`, orthonormal when the decomposition is valid.
    pub fn network_span(&self) -> OrthonormalBasis {
        OrthonormalBasis::new_unchecked(self.joint.hstack(&self.network))
    }

    /// `(M R2)`.
    pub fn covariate_span(&self) -> OrthonormalBasis {
        OrthonormalBasis::new_unchecked(self.joint.hstack(&self.covariate))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Joint,
    Network,
    Covariate,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::Joint => "M",
            Block::Network => "R1",
            Block::Covariate => "R2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotOrthonormal { block: Block, defect: f64 },
    NotOrthogonalToJoint { block: Block, norm: f64 },
    RowMismatch { block: Block, rows: usize, expected: usize },
    EmptyBlock { block: Block },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotOrthonormal { block, defect } => {
                write!(f, "{block} columns not orthonormal: ||B^T B - I||_F = {defect:e}")
            }
            Violation::NotOrthogonalToJoint { block, norm } => {
                write!(f, "M^T {block} != 0: ||M^T {block}||_F = {norm:e}")
            }
            Violation::RowMismatch {
                block,
                rows,
                expected,
            } => write!(f, "{block} has {rows} rows, expected {expected}"),
            Violation::EmptyBlock { block } => write!(f, "{block} has no columns"),
        }
    }
}

/// Every violated decomposition invariant, with its measured magnitude.
pub fn validate_decomposition(d: &Decomposition) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = d.joint.n();
    let blocks = [
        (Block::Joint, &d.joint),
        (Block::Network, &d.network),
        (Block::Covariate, &d.covariate),
    ];
    for (block, basis) in blocks {
        if basis.dim() == 0 {
            out.push(Violation::EmptyBlock { block });
            continue;
        }
        if basis.n() != n {
            out.push(Violation::RowMismatch {
                block,
                rows: basis.n(),
                expected: n,
            });
            continue;
        }
        let defect = orthonormality_defect(basis.columns());
        if !(defect <= ORTHONORMAL_TOL) {
            out.push(Violation::NotOrthonormal { block, defect });
        }
    }
    if out.is_empty() {
        for (block, basis) in [(Block::Network, &d.network), (Block::Covariate, &d.covariate)] {
            let norm = d.joint.columns().tr_mul(basis.columns()).norm();
            if !(norm <= CROSS_ORTHOGONALITY_TOL) {
                out.push(Violation::NotOrthogonalToJoint { block, norm });
            }
        }
    }
    out
}

/// Signal matrices with their true components, for simulation and oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Network signal `P` (symmetric).
    pub network_signal: DMatrix<f64>,
    /// Covariate signal `W`.
    pub covariate_signal: DMatrix<f64>,
    pub components: Decomposition,
    pub network_labels: Option<Vec<usize>>,
    pub covariate_labels: Option<Vec<usize>>,
    /// `(M R1)^T P`, so `P = (M R1) gamma_network`.
    pub gamma_network: DMatrix<f64>,
    /// `(M R2)^T W`, so `W = (M R2) gamma_covariate`.
    pub gamma_covariate: DMatrix<f64>,
}

impl GroundTruth {
    /// Derives the loading matrices from the components.
    pub fn from_components(
        network_signal: DMatrix<f64>,
        covariate_signal: DMatrix<f64>,
        components: Decomposition,
    ) -> Self {
        let gamma_network = components.network_span().columns().tr_mul(&network_signal);
        let gamma_covariate = components
            .covariate_span()
            .columns()
            .tr_mul(&covariate_signal);
        Self {
            network_signal,
            covariate_signal,
            components,
            network_labels: None,
            covariate_labels: None,
            gamma_network,
            gamma_covariate,
        }
    }

    pub fn ranks(&self) -> Ranks {
        self.components.ranks()
    }

    /// Relative Frobenius errors of `P = (M R1) gamma1` and `W = (M R2) gamma2`.
    pub fn factorization_errors(&self) -> (f64, f64) {
        let rel = |target: &DMatrix<f64>, approx: DMatrix<f64>| {
            let denom = target.norm().max(f64::MIN_POSITIVE);
            (target - approx).norm() / denom
        };
        let p_hat = self.components.network_span().columns() * &self.gamma_network;
        let w_hat = self.components.covariate_span().columns() * &self.gamma_covariate;
        (
            rel(&self.network_signal, p_hat),
            rel(&self.covariate_signal, w_hat),
        )
    }

    /// Every violated invariant, empty when the truth is consistent.
    pub fn audit(&self) -> Vec<String> {
        let mut out: Vec<String> = validate_decomposition(&self.components)
            .into_iter()
            .map(|v| v.to_string())
            .collect();
        let (ep, ew) = self.factorization_errors();
        if !(ep <= 1e-8) {
            out.push(format!("P != (M R1) gamma1: relative error {ep:e}"));
        }
        if !(ew <= 1e-8) {
            out.push(format!("W != (M R2) gamma2: relative error {ew:e}"));
        }
        let ranks = self.ranks();
        let rp = numerical_rank(&self.network_signal, RANK_TOL);
        let rw = numerical_rank(&self.covariate_signal, RANK_TOL);
        if rp != ranks.network_total() {
            out.push(format!("rank(P) = {rp}, expected {}", ranks.network_total()));
        }
        if rw != ranks.covariate_total() {
            out.push(format!("rank(W) = {rw}, expected {}", ranks.covariate_total()));
        }
        out
    }
}

/// Recovers `(M, R1, R2)` from noiseless signals.
///
/// The joint space is spanned by the principal vectors whose cosine with
/// the other view is at least `1 - tol`; each individual space is what
/// remains of its view after projecting out the joint space.
pub fn true_components_from_signals(
    p: &DMatrix<f64>,
    w: &DMatrix<f64>,
    tol: f64,
) -> Result<(Decomposition, Ranks)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    if p.nrows() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "P has {} rows, W has {}",
            p.nrows(),
            w.nrows()
        )));
    }
    let rank_p = numerical_rank(p, RANK_TOL);
    let rank_w = numerical_rank(w, RANK_TOL);
    if rank_p == 0 || rank_w == 0 {
        return Err(Error::DegenerateModel("a signal matrix is numerically zero".into()));
    }
    let v1 = eig_ordered(p, rank_p)?.basis;
    let v2 = sv_left(w, rank_w)?.basis;

    let cross = v1.columns().tr_mul(v2.columns());
    let k = rank_p.min(rank_w);
    let principal = sv_left(&cross, k)?;
    let joint_rank = principal.values.iter().filter(|&&c| c >= 1.0 - tol).count();
    if joint_rank == 0 {
        return Err(Error::DegenerateModel(
            "column spaces of P and W intersect only in {0}".into(),
        ));
    }
    let joint_dirs = v1.columns() * principal.basis.columns().columns(0, joint_rank);
    let joint = sv_left(&joint_dirs, joint_rank)?.basis;

    let individual = |v: &OrthonormalBasis, total: usize, view: &str| -> Result<OrthonormalBasis> {
        let r = total - joint_rank;
        if r == 0 {
            return Err(Error::DegenerateModel(format!(
                "{view} individual subspace is empty"
            )));
        }
        let resid = residual_apply(&joint, v.columns())?;
        let pair = sv_left(&resid, r)?;
        if !(pair.values[r - 1] > 1e-6) {
            return Err(Error::DegenerateModel(format!(
                "{view} individual subspace is numerically empty"
            )));
        }
        Ok(pair.basis)
    };
    let network = individual(&v1, rank_p, "network")?;
    let covariate = individual(&v2, rank_w, "covariate")?;
    let ranks = Ranks::new(joint_rank, network.dim(), covariate.dim())?;
    Ok((
        Decomposition {
            joint,
            network,
            covariate,
        },
        ranks,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{procrustes_distance, random_orthonormal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize, i: usize) -> OrthonormalBasis {
        let mut m = DMatrix::zeros(n, 1);
        m[(i, 0)] = 1.0;
        OrthonormalBasis::new(m).unwrap()
    }

    #[test]
    fn validate_accepts_and_rejects() {
        let good = Decomposition {
            joint: unit(3, 0),
            network: unit(3, 1),
            covariate: unit(3, 2),
        };
        assert!(validate_decomposition(&good).is_empty());

        let overlap = Decomposition {
            joint: unit(3, 0),
            network: unit(3, 0),
            covariate: unit(3, 1),
        };
        let v = validate_decomposition(&overlap);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::NotOrthogonalToJoint { block: Block::Network, .. }));

        let mut half = DMatrix::zeros(3, 1);
        half[(0, 0)] = 0.5;
        let short = Decomposition {
            joint: OrthonormalBasis::new_unchecked(half),
            network: unit(3, 1),
            covariate: unit(3, 2),
        };
        let v = validate_decomposition(&short);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::NotOrthonormal { block: Block::Joint, .. }));
    }

    #[test]
    fn ranks_validation_and_parsing() {
        assert!(Ranks::new(0, 1, 1).is_err());
        let r: Ranks = "2,1,1".parse().unwrap();
        assert_eq!(r, Ranks::new(2, 1, 1).unwrap());
        assert!(r.validate_for(3, 3).is_ok());
        assert!(r.validate_for(2, 3).is_err());
        assert!(r.validate_for(10, 2).is_err());
        assert!("2,1".parse::<Ranks>().is_err());
        assert_eq!(r.to_string(), "2,1,1");
    }

    #[test]
    fn recovers_constructed_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all = random_orthonormal(12, 4, &mut rng).unwrap();
        let cols = all.columns();
        let m = OrthonormalBasis::new(cols.columns(0, 2).into_owned()).unwrap();
        let r1 = OrthonormalBasis::new(cols.columns(2, 1).into_owned()).unwrap();
        let r2 = OrthonormalBasis::new(cols.columns(3, 1).into_owned()).unwrap();
        let p = m.columns() * m.columns().transpose() + r1.columns() * r1.columns().transpose();
        let gamma = DMatrix::from_fn(3, 5, |i, j| ((i * 5 + j) as f64).sin() + if i == j { 3.0 } else { 0.0 });
        let w = m.hstack(&r2) * gamma;
        let (d, ranks) = true_components_from_signals(&p, &w, 1e-8).unwrap();
        assert_eq!(ranks, Ranks::new(2, 1, 1).unwrap());
        assert!(validate_decomposition(&d).is_empty());
        assert!(procrustes_distance(&d.joint, &m).unwrap() < 1e-8);
        assert!(procrustes_distance(&d.network, &r1).unwrap() < 1e-8);
        assert!(procrustes_distance(&d.covariate, &r2).unwrap() < 1e-8);
    }

    #[test]
    fn no_individual_part_is_degenerate() {
        let w = DMatrix::from_fn(6, 2, |i, j| ((i + 2 * j) as f64).cos() + (i * j) as f64);
        let p = &w * w.transpose();
        assert!(matches!(
            true_components_from_signals(&p, &w, 1e-8),
            Err(Error::DegenerateModel(_))
        ));
    }

    #[test]
    fn adjacency_checks_symmetry() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(AdjacencyMatrix::new(a), Err(Error::NotSymmetric { .. })));
        let a = AdjacencyMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert!(a.is_binary() && a.has_zero_diagonal());
    }
}
