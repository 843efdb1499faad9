//! Block-coordinate refinement of a decomposition.
//!
//! The objective is
//!
//! ```text
//! ||A' - P_M A' - P_R1 A'||_F^2 + ||X - P_M X - P_R2 X||_F^2
//! ```
//!
//! subject to `(M R1)` and `(M R2)` having orthonormal columns, where `A'`
//! holds the eigenvectors of `A` scaled by `|lambda|^{1/2}`. With `M` fixed the
//! optimal individual bases are the leading left singular vectors of the
//! data with `M` projected out; with the individual bases fixed the optimal
//! `M` is the leading left singular space of
//! `P_{C(R1 R2)^perp} (P_{R1^perp} A', P_{R2^perp} X)`. Each update is a global
//! block minimizer, so the loss never increases.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{
    column_space, eig_ordered, hstack, projector_apply, residual_apply, sv_left, OrthonormalBasis,
};
use crate::model::{validate_decomposition, AdjacencyMatrix, CovariateMatrix, Decomposition, Ranks};
use crate::spectral::{top_singular_value, DEGENERACY_TOL};

/// How `A'` and `X` are normalized before refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleMode {
    /// Divide by the Frobenius norm of the best rank-`r` approximation,
    /// which puts both loss terms on the same footing.
    #[default]
    TruncatedNorm,
    /// Divide by the Frobenius norm of the rank-`r` orthonormal basis,
    /// i.e. by `sqrt(r)` regardless of the data.
    BasisNorm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub t_max: usize,
    /// Stop once `|L_t - L_{t-1}| <= epsilon`.
    pub epsilon: f64,
    pub scale_inputs: bool,
    pub scale_mode: ScaleMode,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            t_max: 200,
            epsilon: 1e-8,
            scale_inputs: true,
            scale_mode: ScaleMode::TruncatedNorm,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::InvalidConfig("t_max must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Loss history. `losses[0]` is the loss at the initial point and
/// `losses[t]` the loss after the `t`-th update cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineTrace {
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl RefineTrace {
    /// Largest single-step increase of the loss (0 or negative when monotone).
    pub fn max_increase(&self) -> f64 {
        self.losses
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trace holds the initial loss")
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutput {
    pub decomposition: Decomposition,
    pub trace: RefineTrace,
    /// Factor `A'` was divided by (1 when unscaled).
    pub network_scale: f64,
    /// Factor `X` was divided by (1 when unscaled).
    pub covariate_scale: f64,
}

/// `A' = (|lambda_1|^{1/2} u_1, ..., |lambda_n|^{1/2} u_n)` with eigenpairs
/// ordered by magnitude.
pub fn build_sqrt_eig_matrix(a: &AdjacencyMatrix) -> Result<DMatrix<f64>> {
    let pair = eig_ordered(a.entries(), a.n())?;
    let mut out = pair.basis.into_inner();
    for (mut col, lambda) in out.column_iter_mut().zip(pair.values.iter()) {
        col *= lambda.abs().sqrt();
    }
    Ok(out)
}

/// Divides `m` by `sqrt(sum_{i <= r} sigma_i(m)^2)`; returns the scaled
/// matrix and the factor.
pub fn scale_for_loss(m: &DMatrix<f64>, r: usize) -> Result<(DMatrix<f64>, f64)> {
    let factor = truncated_norm(m, r)?;
    if !(factor >= 1e-12) {
        return Err(Error::DegenerateInput(format!(
            "rank-{r} part of the matrix has norm {factor:e}"
        )));
    }
    Ok((m / factor, factor))
}

fn truncated_norm(m: &DMatrix<f64>, r: usize) -> Result<f64> {
    let max = m.nrows().min(m.ncols());
    if r == 0 || r > max {
        return Err(Error::RankOutOfBounds { requested: r, max });
    }
    let sv = crate::linalg::singular_values(m);
    Ok(sv.iter().take(r).map(|s| s * s).sum::<f64>().sqrt())
}

fn check_shapes(a_prime: &DMatrix<f64>, x: &DMatrix<f64>, n: usize) -> Result<()> {
    if a_prime.nrows() != n || a_prime.ncols() != n || x.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "A' is {}x{}, X is {}x{}, bases have {} rows",
            a_prime.nrows(),
            a_prime.ncols(),
            x.nrows(),
            x.ncols(),
            n
        )));
    }
    Ok(())
}

/// The two-term refinement objective.
pub fn loss(a_prime: &DMatrix<f64>, x: &DMatrix<f64>, d: &Decomposition) -> Result<f64> {
    check_shapes(a_prime, x, d.n())?;
    let net = a_prime - projector_apply(&d.joint, a_prime)? - projector_apply(&d.network, a_prime)?;
    let cov = x - projector_apply(&d.joint, x)? - projector_apply(&d.covariate, x)?;
    Ok(net.norm_squared() + cov.norm_squared())
}

/// True when `value > tol * sigma_1(y)`, computing the SVD of `y` only when
/// the cheap Frobenius bound is inconclusive.
fn exceeds_relative(value: f64, y: &DMatrix<f64>, tol: f64) -> bool {
    if value > tol * y.norm() {
        return true;
    }
    value > tol * top_singular_value(y)
}

fn individual_update(
    joint: &OrthonormalBasis,
    y: &DMatrix<f64>,
    r: usize,
    view: &str,
) -> Result<OrthonormalBasis> {
    let resid = residual_apply(joint, y)?;
    let pair = sv_left(&resid, r)?;
    if !exceeds_relative(pair.values[r - 1], y, DEGENERACY_TOL) {
        return Err(Error::DegenerateInput(format!(
            "{view} residual after removing the joint space has rank below {r}"
        )));
    }
    Ok(pair.basis)
}

/// Optimal `(R1, R2)` for fixed `M`.
pub fn update_individual(
    a_prime: &DMatrix<f64>,
    x: &DMatrix<f64>,
    joint: &OrthonormalBasis,
    r1: usize,
    r2: usize,
) -> Result<(OrthonormalBasis, OrthonormalBasis)> {
    check_shapes(a_prime, x, joint.n())?;
    let network = individual_update(joint, a_prime, r1, "network")?;
    let covariate = individual_update(joint, x, r2, "covariate")?;
    Ok((network, covariate))
}

/// Optimal `M` for fixed `(R1, R2)`.
pub fn update_joint(
    a_prime: &DMatrix<f64>,
    x: &DMatrix<f64>,
    network: &OrthonormalBasis,
    covariate: &OrthonormalBasis,
    r_m: usize,
) -> Result<OrthonormalBasis> {
    check_shapes(a_prime, x, network.n())?;
    if covariate.n() != network.n() {
        return Err(Error::DimensionMismatch("individual bases differ in row count".into()));
    }
    let y = hstack(
        &residual_apply(network, a_prime)?,
        &residual_apply(covariate, x)?,
    );
    let span = column_space(&network.hstack(covariate), 1e-10)
        .expect("orthonormal bases have nonzero column space");
    let z = residual_apply(&span, &y)?;
    let available = z.nrows().min(z.ncols());
    if r_m == 0 || r_m > available {
        return Err(Error::RankOutOfBounds {
            requested: r_m,
            max: available,
        });
    }
    let pair = sv_left(&z, r_m)?;
    if !exceeds_relative(pair.values[r_m - 1], &y, DEGENERACY_TOL) {
        return Err(Error::RankDeficient(format!(
            "the complement of span(R1, R2) leaves rank < {r_m} for the joint space"
        )));
    }
    Ok(pair.basis)
}

fn at(iteration: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::AtIteration {
        iteration,
        source: Box::new(e),
    }
}

/// Refines `init` by alternating joint and individual block updates.
///
/// Only `init.joint` seeds the iteration; the individual bases are
/// re-derived from it. At least one full update cycle always runs.
pub fn refine_decompose(
    a: &AdjacencyMatrix,
    x: &CovariateMatrix,
    init: &Decomposition,
    ranks: Ranks,
    cfg: &RefineConfig,
) -> Result<RefineOutput> {
    cfg.validate()?;
    ranks.validate_for(a.n(), x.p())?;
    if a.n() != x.n() || init.n() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "network has {} nodes, covariates {} rows, initial estimate {} rows",
            a.n(),
            x.n(),
            init.n()
        )));
    }
    if let Some(v) = validate_decomposition(init).first() {
        return Err(Error::InvalidConfig(format!("initial decomposition is invalid: {v}")));
    }
    if init.joint.dim() != ranks.joint {
        return Err(Error::InvalidRanks(format!(
            "initial joint basis has {} columns, r_M = {}",
            init.joint.dim(),
            ranks.joint
        )));
    }

    let a_prime = build_sqrt_eig_matrix(a)?;
    let (a_prime, x_scaled, network_scale, covariate_scale) = if cfg.scale_inputs {
        let (a_s, fa) = match cfg.scale_mode {
            ScaleMode::TruncatedNorm => scale_for_loss(&a_prime, ranks.network_total())?,
            ScaleMode::BasisNorm => {
                let f = (ranks.network_total() as f64).sqrt();
                (&a_prime / f, f)
            }
        };
        let (x_s, fx) = match cfg.scale_mode {
            ScaleMode::TruncatedNorm => scale_for_loss(x.entries(), ranks.covariate_total())?,
            ScaleMode::BasisNorm => {
                let f = (ranks.covariate_total() as f64).sqrt();
                (x.entries() / f, f)
            }
        };
        (a_s, x_s, fa, fx)
    } else {
        (a_prime, x.entries().clone(), 1.0, 1.0)
    };

    let mut joint = init.joint.clone();
    let (mut network, mut covariate) =
        update_individual(&a_prime, &x_scaled, &joint, ranks.network, ranks.covariate).map_err(at(0))?;
    let mut losses = vec![loss(
        &a_prime,
        &x_scaled,
        &Decomposition {
            joint: joint.clone(),
            network: network.clone(),
            covariate: covariate.clone(),
        },
    )?];

    let mut t = 0usize;
    let mut converged = false;
    while t < cfg.t_max {
        let it = t + 1;
        joint = update_joint(&a_prime, &x_scaled, &network, &covariate, ranks.joint).map_err(at(it))?;
        (network, covariate) =
            update_individual(&a_prime, &x_scaled, &joint, ranks.network, ranks.covariate)
                .map_err(at(it))?;
        t = it;
        let current = Decomposition {
            joint: joint.clone(),
            network: network.clone(),
            covariate: covariate.clone(),
        };
        let l = loss(&a_prime, &x_scaled, &current)?;
        let previous = *losses.last().unwrap();
        losses.push(l);
        log::trace!("refine iteration {t}: loss {l:.12e}");
        if (l - previous).abs() <= cfg.epsilon {
            converged = true;
            break;
        }
    }

    Ok(RefineOutput {
        decomposition: Decomposition {
            joint,
            network,
            covariate,
        },
        trace: RefineTrace {
            losses,
            iterations: t,
            converged,
        },
        network_scale,
        covariate_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn sqrt_eig_matrix_small_cases() {
        let a = AdjacencyMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        let ap = build_sqrt_eig_matrix(&a).unwrap();
        assert_eq!(ap, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])));

        let a = AdjacencyMatrix::new(DMatrix::from_element(1, 1, -9.0)).unwrap();
        let ap = build_sqrt_eig_matrix(&a).unwrap();
        assert_eq!(ap[(0, 0)].abs(), 3.0);
    }

    #[test]
    fn scaling_small_cases() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0]));
        let (s, f) = scale_for_loss(&m, 2).unwrap();
        assert!((f - 5.0).abs() < 1e-15);
        assert!((s[(0, 0)] - 0.6).abs() < 1e-15 && (s[(1, 1)] - 0.8).abs() < 1e-15);
        let (_, f) = scale_for_loss(&m, 1).unwrap();
        assert!((f - 4.0).abs() < 1e-15);
        assert!(matches!(
            scale_for_loss(&DMatrix::zeros(2, 2), 1),
            Err(Error::DegenerateInput(_))
        ));
        assert!(scale_for_loss(&m, 3).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RefineConfig::default().validate().is_ok());
        let bad = RefineConfig {
            t_max: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RefineConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn full_individual_basis_leaves_no_room_for_joint() {
        let n = 3;
        let a_prime = DMatrix::identity(n, n);
        let x = DMatrix::identity(n, 2);
        let e = |cols: &[usize]| {
            let mut m = DMatrix::zeros(n, cols.len());
            for (j, &c) in cols.iter().enumerate() {
                m[(c, j)] = 1.0;
            }
            OrthonormalBasis::new(m).unwrap()
        };
        let r1 = e(&[0, 1]);
        let r2 = e(&[2]);
        assert!(matches!(
            update_joint(&a_prime, &x, &r1, &r2, 1),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn pure_joint_network_has_no_individual_part() {
        let m = OrthonormalBasis::new(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).unwrap();
        let a_prime = m.columns() * m.columns().transpose();
        let x = DMatrix::identity(3, 2);
        assert!(matches!(
            update_individual(&a_prime, &x, &m, 1, 1),
            Err(Error::DegenerateInput(_))
        ));
    }
}
