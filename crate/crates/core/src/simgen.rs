//! Seeded generators for the synthetic designs: the four-group blockmodel
//! example, the latent-position designs with controlled subspace
//! separation, generic Bernoulli/Gaussian samplers, and random ground truths
//! for exact-recovery checks.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kv;
use crate::linalg::{self, fix_signs, random_orthonormal, OrthonormalBasis};
use crate::model::{
    true_components_from_signals, AdjacencyMatrix, CovariateMatrix, Decomposition, GroundTruth, Ranks,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    StrongJoint,
    WeakJoint,
}

impl Setting {
    pub const ALL: [Setting; 2] = [Setting::StrongJoint, Setting::WeakJoint];

    pub fn as_str(&self) -> &'static str {
        match self {
            Setting::StrongJoint => "strong_joint",
            Setting::WeakJoint => "weak_joint",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "strong_joint" => Ok(Setting::StrongJoint),
            "weak_joint" => Ok(Setting::WeakJoint),
            other => Err(Error::InvalidConfig(format!(
                "unknown setting '{other}' (expected strong_joint or weak_joint)"
            ))),
        }
    }
}

/// Parameters of the latent-position simulation design.
///
/// `delta` is the coefficient of `R1`'s direction inside `R2`
/// (`R2 = delta T + sqrt(1 - delta^2) T'`), so the subspace separation of
/// the individual components is `1 - delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub setting: Setting,
    pub delta: f64,
    pub q1: f64,
    pub q2: f64,
    pub s1: f64,
    pub s2: f64,
    pub tau: f64,
    pub target_degree: f64,
    pub seed: u64,
}

impl SimConfig {
    /// `n = 200`, `p = 10`, `tau = 0.1`, average degree 20, and the signal
    /// strengths of the chosen setting (`s2` as used for the separation sweep).
    pub fn defaults(setting: Setting) -> Self {
        let (q1, q2, s1, s2) = match setting {
            Setting::StrongJoint => (0.5, 0.3, 0.6, 0.2),
            Setting::WeakJoint => (0.2, 0.6, 0.2, 0.7),
        };
        Self {
            n: 200,
            p: 10,
            setting,
            delta: 0.0,
            q1,
            q2,
            s1,
            s2,
            tau: 0.1,
            target_degree: 20.0,
            seed: 0,
        }
    }

    pub fn separation(&self) -> f64 {
        1.0 - self.delta
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n % 4 != 0 {
            return Err(Error::NotDivisibleBy4(self.n));
        }
        if self.p < 2 {
            return Err(Error::InvalidConfig(format!("p must be at least 2, got {}", self.p)));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidConfig(format!("delta must lie in [0, 1], got {}", self.delta)));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be non-negative, got {}", self.tau)));
        }
        for (name, v) in [("q1", self.q1), ("q2", self.q2), ("s1", self.s1), ("s2", self.s2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.target_degree > 0.0) || !self.target_degree.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "target_degree must be positive, got {}",
                self.target_degree
            )));
        }
        Ok(())
    }

    /// Flat `key = value` text, one field per line.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in [
            ("n", self.n.to_string()),
            ("p", self.p.to_string()),
            ("setting", self.setting.to_string()),
            ("delta", self.delta.to_string()),
            ("q1", self.q1.to_string()),
            ("q2", self.q2.to_string()),
            ("s1", self.s1.to_string()),
            ("s2", self.s2.to_string()),
            ("tau", self.tau.to_string()),
            ("target_degree", self.target_degree.to_string()),
            ("seed", self.seed.to_string()),
        ] {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Parses a flat key-value file. Keys not present keep the defaults of
    /// the file's `setting` (strong_joint when absent); unknown keys are
    /// rejected.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let entries = kv::parse(text)?;
        let setting = match entries.get("setting") {
            Some((_, v)) => v.parse()?,
            None => Setting::StrongJoint,
        };
        let mut cfg = SimConfig::defaults(setting);
        for (key, (line, value)) in &entries {
            let bad = |what: &str| Error::parse(*line, format!("{key}: '{value}' is not {what}"));
            let float = || value.parse::<f64>().map_err(|_| bad("a number"));
            match key.as_str() {
                "n" => cfg.n = value.parse().map_err(|_| bad("a non-negative integer"))?,
                "p" => cfg.p = value.parse().map_err(|_| bad("a non-negative integer"))?,
                "setting" => {}
                "delta" => cfg.delta = float()?,
                "q1" => cfg.q1 = float()?,
                "q2" => cfg.q2 = float()?,
                "s1" => cfg.s1 = float()?,
                "s2" => cfg.s2 = float()?,
                "tau" => cfg.tau = float()?,
                "target_degree" => cfg.target_degree = float()?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("an unsigned 64-bit integer"))?,
                _ => return Err(Error::parse(*line, format!("unknown key '{key}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Facts about how a design was realized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignMetadata {
    /// Coefficient of the shared direction in `R2` (the config's `delta`).
    pub inner_product_coefficient: f64,
    /// `1 - sigma_1(R1^T R2)` of the realized components.
    pub separation: f64,
    /// Density multiplier applied to `Y Y^T`.
    pub alpha: f64,
    /// Fraction of entries of `alpha Y Y^T` clipped into `[0, 1]`.
    pub clipped_fraction: f64,
    /// Set when `R2` coincides with `R1`, so the individual spaces are not
    /// identifiable.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct SimInstance {
    pub adjacency: AdjacencyMatrix,
    pub covariates: CovariateMatrix,
    pub truth: GroundTruth,
    pub config: Option<SimConfig>,
    pub metadata: Option<DesignMetadata>,
}

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `P_ij = B[z_i, z_j]` with 1-based labels.
pub fn sbm_probability_matrix(b: &DMatrix<f64>, z: &[usize]) -> Result<DMatrix<f64>> {
    let k = b.nrows();
    if b.ncols() != k || k == 0 {
        return Err(Error::DimensionMismatch(format!(
            "block matrix must be square and non-empty, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    check_probabilities(b)?;
    let asymmetry = linalg::max_asymmetry(b);
    if asymmetry > linalg::SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            asymmetry,
            tolerance: linalg::SYMMETRY_TOL,
        });
    }
    for (index, &label) in z.iter().enumerate() {
        if label == 0 || label > k {
            return Err(Error::LabelOutOfRange { index, label, k });
        }
    }
    Ok(DMatrix::from_fn(z.len(), z.len(), |i, j| b[(z[i] - 1, z[j] - 1)]))
}

fn check_probabilities(p: &DMatrix<f64>) -> Result<()> {
    for j in 0..p.ncols() {
        for i in 0..p.nrows() {
            let v = p[(i, j)];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ProbabilityOutOfRange { row: i, col: j, value: v });
            }
        }
    }
    Ok(())
}

/// Symmetric Bernoulli graph with independent upper-triangle entries.
pub fn sample_bernoulli_graph(p: &DMatrix<f64>, zero_diagonal: bool, seed: u64) -> Result<AdjacencyMatrix> {
    sample_bernoulli_with(p, zero_diagonal, &mut seeded(seed))
}

fn sample_bernoulli_with<R: Rng + ?Sized>(
    p: &DMatrix<f64>,
    zero_diagonal: bool,
    rng: &mut R,
) -> Result<AdjacencyMatrix> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "probability matrix must be square, got {}x{}",
            n,
            p.ncols()
        )));
    }
    check_probabilities(p)?;
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let start = if zero_diagonal { j + 1 } else { j };
        for i in start..n {
            // upper triangle in row-major order; i >= j here so read P[j, i]
            let prob = p[(j, i)];
            let u: f64 = rng.random();
            if u < prob {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    AdjacencyMatrix::new(a)
}

/// `X_ij ~ N(W_ij, tau^2)` independently.
pub fn gaussian_covariates(w: &DMatrix<f64>, tau: f64, seed: u64) -> Result<CovariateMatrix> {
    gaussian_covariates_with(w, tau, &mut seeded(seed))
}

fn gaussian_covariates_with<R: Rng + ?Sized>(w: &DMatrix<f64>, tau: f64, rng: &mut R) -> Result<CovariateMatrix> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be non-negative, got {tau}")));
    }
    if tau == 0.0 {
        return CovariateMatrix::unnamed(w.clone());
    }
    let x = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        w[(i, j)] + tau * rng.sample::<f64, _>(StandardNormal)
    });
    CovariateMatrix::unnamed(x)
}

/// Node count of the four-group example.
pub const GROUP_EXAMPLE_N: usize = 40;

/// Group (1..=4) of each node in the four-group example: ten nodes per group.
pub fn group_structure_groups() -> Vec<usize> {
    (0..GROUP_EXAMPLE_N).map(|i| i / 10 + 1).collect()
}

/// Forty nodes in four groups. The network sees groups 3 and 4 as one
/// community; the covariates see groups 1 and 2 as one cluster. Joint rank
/// 2, individual ranks 1 and 1.
pub fn group_structure_example(seed: u64) -> Result<SimInstance> {
    let b = DMatrix::from_row_slice(3, 3, &[0.6, 0.05, 0.05, 0.05, 0.6, 0.05, 0.05, 0.05, 0.6]);
    let network_labels: Vec<usize> = (1..=GROUP_EXAMPLE_N)
        .map(|i| match i {
            1..=10 => 1,
            11..=20 => 2,
            _ => 3,
        })
        .collect();
    let covariate_labels: Vec<usize> = (1..=GROUP_EXAMPLE_N)
        .map(|i| match i {
            1..=20 => 1,
            21..=30 => 2,
            _ => 3,
        })
        .collect();
    let means = [[-30.0, -60.0, 30.0], [16.0, 8.0, 16.0], [-20.0, 40.0, 20.0]];

    let p = sbm_probability_matrix(&b, &network_labels)?;
    let w = DMatrix::from_fn(GROUP_EXAMPLE_N, 3, |i, j| means[covariate_labels[i] - 1][j]);

    let mut master = seeded(seed);
    let adjacency = sample_bernoulli_with(&p, true, &mut seeded(master.next_u64()))?;
    let covariates = gaussian_covariates_with(&w, 1.0, &mut seeded(master.next_u64()))?;

    let (components, _) = true_components_from_signals(&p, &w, 1e-8)?;
    let mut truth = GroundTruth::from_components(p, w, components);
    truth.network_labels = Some(network_labels);
    truth.covariate_labels = Some(covariate_labels);
    Ok(SimInstance {
        adjacency,
        covariates,
        truth,
        config: None,
        metadata: None,
    })
}

/// `T0 = 1/sqrt(n)`, `T1` alternating signs, `T2` signs alternating in
/// blocks of two.
pub fn orthonormal_design_vectors(n: usize) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    if n == 0 || n % 4 != 0 {
        return Err(Error::NotDivisibleBy4(n));
    }
    let c = 1.0 / (n as f64).sqrt();
    let t0 = DVector::from_element(n, c);
    let t1 = DVector::from_fn(n, |i, _| if i % 2 == 0 { c } else { -c });
    let t2 = DVector::from_fn(n, |i, _| if i % 4 < 2 { c } else { -c });
    Ok((t0, t1, t2))
}

fn column(v: &DVector<f64>) -> OrthonormalBasis {
    OrthonormalBasis::new(DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
        .expect("design vectors are unit length")
}

/// Builds one replication of the latent-position design.
pub fn simulation_design(cfg: &SimConfig) -> Result<SimInstance> {
    cfg.validate()?;
    let n = cfg.n;
    let (t0, t1, t2) = orthonormal_design_vectors(n)?;
    let (shared, other) = (cfg.delta, (1.0 - cfg.delta * cfg.delta).max(0.0).sqrt());
    let (m, r1, r2) = match cfg.setting {
        Setting::StrongJoint => (t0.clone(), t1.clone(), &t1 * shared + &t2 * other),
        Setting::WeakJoint => (t1.clone(), t0.clone(), &t0 * shared + &t2 * other),
    };
    let r2 = &r2 / r2.norm();

    let mut master = seeded(cfg.seed);
    let mut q_rng = seeded(master.next_u64());
    let gauss = DMatrix::from_fn(cfg.p, cfg.p, |_, _| q_rng.sample::<f64, _>(StandardNormal));
    let right = linalg::sv_left(&gauss.transpose(), 2)?;
    let mut q = right.basis.into_inner();
    fix_signs(&mut q);

    let nf = n as f64;
    let network_span = linalg::hstack(
        &DMatrix::from_column_slice(n, 1, m.as_slice()),
        &DMatrix::from_column_slice(n, 1, r1.as_slice()),
    );
    let latent = &network_span
        * DMatrix::from_diagonal(&DVector::from_vec(vec![(nf * cfg.q1).sqrt(), (nf * cfg.q2).sqrt()]));
    let gram = &latent * latent.transpose();
    // A has no self-loops, so the diagonal does not count toward degree
    let total: f64 = gram.sum() - gram.trace();
    if !(total > 0.0) {
        return Err(Error::InvalidConfig(
            "latent positions give zero total edge mass; cannot set the degree".into(),
        ));
    }
    let alpha = cfg.target_degree * nf / total;
    let mut clipped = 0usize;
    let p = gram.map(|v| {
        let s = alpha * v;
        if s < 0.0 {
            clipped += 1;
            0.0
        } else if s > 1.0 {
            clipped += 1;
            1.0
        } else {
            s
        }
    });
    let adjacency = sample_bernoulli_with(&p, true, &mut seeded(master.next_u64()))?;

    let covariate_span = linalg::hstack(
        &DMatrix::from_column_slice(n, 1, m.as_slice()),
        &DMatrix::from_column_slice(n, 1, r2.as_slice()),
    );
    let loadings = DMatrix::from_diagonal(&DVector::from_vec(vec![(nf * cfg.s1).sqrt(), (nf * cfg.s2).sqrt()]))
        * q.transpose();
    let w = covariate_span * loadings;
    let covariates = gaussian_covariates_with(&w, cfg.tau, &mut seeded(master.next_u64()))?;

    let components = Decomposition {
        joint: column(&m),
        network: column(&r1),
        covariate: column(&r2),
    };
    let separation = linalg::delta_separation(&components.network, &components.covariate)?;
    let metadata = DesignMetadata {
        inner_product_coefficient: cfg.delta,
        separation,
        alpha,
        clipped_fraction: clipped as f64 / (n * n) as f64,
        degenerate: separation <= 1e-12,
    };
    if metadata.degenerate {
        log::warn!("design with delta = {} makes R2 coincide with R1", cfg.delta);
    }
    Ok(SimInstance {
        adjacency,
        covariates,
        truth: GroundTruth::from_components(p, w, components),
        config: Some(*cfg),
        metadata: Some(metadata),
    })
}

/// Random ground truth with the given ranks and individual-subspace
/// separation drawn uniformly from `[min_separation, 1]`.
///
/// `P = (M R1) S (M R1)^T` with a random symmetric, possibly indefinite,
/// nonsingular `S`; `W = (M R2) G` with Gaussian `G`.
pub fn random_ground_truth(n: usize, p: usize, ranks: Ranks, min_separation: f64, seed: u64) -> Result<GroundTruth> {
    let total = ranks.joint + ranks.network + ranks.covariate;
    if total > n || ranks.covariate_total() > p {
        return Err(Error::InvalidRanks(format!(
            "ranks {ranks} do not fit n = {n}, p = {p}"
        )));
    }
    if !(0.0..=1.0).contains(&min_separation) {
        return Err(Error::InvalidConfig(format!(
            "min_separation must lie in [0, 1], got {min_separation}"
        )));
    }
    let mut rng = seeded(seed);
    let frame = random_orthonormal(n, total, &mut rng)?.into_inner();
    let m = frame.columns(0, ranks.joint).into_owned();
    let r1 = frame.columns(ranks.joint, ranks.network).into_owned();
    let t = frame.columns(ranks.joint + ranks.network, ranks.covariate).into_owned();

    let cos: f64 = rng.random_range(0.0..=(1.0 - min_separation));
    let sin = (1.0 - cos * cos).sqrt();
    let shared = ranks.network.min(ranks.covariate);
    let mut r2 = t.clone();
    for j in 0..shared {
        let mixed = r1.column(j) * cos + t.column(j) * sin;
        r2.set_column(j, &mixed);
    }

    let k = ranks.network_total();
    let rot = random_orthonormal(k, k, &mut rng)?.into_inner();
    let eigen = DVector::from_fn(k, |_, _| {
        let mag: f64 = rng.random_range(1.0..5.0);
        if rng.random_bool(0.3) {
            -mag
        } else {
            mag
        }
    });
    let core = &rot * DMatrix::from_diagonal(&eigen) * rot.transpose();
    let network_span = linalg::hstack(&m, &r1);
    let signal_p = &network_span * core * network_span.transpose();
    let signal_p = (&signal_p + signal_p.transpose()) * 0.5;

    let loadings = DMatrix::from_fn(ranks.covariate_total(), p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let signal_w = linalg::hstack(&m, &r2) * loadings;

    let components = Decomposition {
        joint: OrthonormalBasis::new(m)?,
        network: OrthonormalBasis::new(r1)?,
        covariate: OrthonormalBasis::new(r2)?,
    };
    Ok(GroundTruth::from_components(signal_p, signal_w, components))
}
