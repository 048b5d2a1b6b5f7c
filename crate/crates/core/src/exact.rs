//! Exact Bayesian linear regression on localized features.
//!
//! These dense `O(F³)` routines are the ground truth that the variational
//! engine is tested against. They are not meant for large `F = M·K`.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::DataView;
use crate::error::{LgrError, Result};
use crate::features::{eta_inv_sq, write_phi, Center, LengthScales};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::math;

/// Gaussian posterior over `F` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

/// Predictive moments at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactPrediction {
    pub mean: f64,
    /// `φ*ᵀ Σ_N φ*`, the variance of the noise-free function value.
    pub latent_variance: f64,
    /// Latent variance plus the observation noise `1/β`.
    pub observation_variance: f64,
}

fn factor(m: &Matrix, context: &str) -> Result<Cholesky> {
    Cholesky::factor(m).map_err(|e| LgrError::NotPositiveDefinite {
        context: context.into(),
        condition: e.condition,
    })
}

fn check_regression_args(features: &Matrix, y: &[f64], prior_cov: &Matrix, beta: f64) -> Result<()> {
    if features.rows() != y.len() {
        return Err(LgrError::DimensionMismatch {
            context: "feature rows vs targets",
            expected: y.len(),
            found: features.rows(),
        });
    }
    if prior_cov.rows() != features.cols() || prior_cov.cols() != features.cols() {
        return Err(LgrError::DimensionMismatch {
            context: "prior covariance vs feature count",
            expected: features.cols(),
            found: prior_cov.rows(),
        });
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(LgrError::InvalidArgument("noise precision must be positive".into()));
    }
    Ok(())
}

/// `ΦᵀΦ` and `Φᵀy`.
fn normal_equations(features: &Matrix, y: &[f64]) -> (Matrix, Vec<f64>) {
    let f = features.cols();
    let mut gram = Matrix::zeros(f, f);
    let mut rhs = vec![0.0; f];
    for (n, &yn) in y.iter().enumerate() {
        let row = features.row(n);
        for i in 0..f {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            rhs[i] += ri * yn;
            for j in i..f {
                gram[(i, j)] += ri * row[j];
            }
        }
    }
    for i in 0..f {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    (gram, rhs)
}

/// Posterior `N(μ_N, Σ_N)` with `Σ_N = (Σ₀⁻¹ + βΦᵀΦ)⁻¹` and
/// `μ_N = Σ_N (βΦᵀy + Σ₀⁻¹μ₀)`.
pub fn exact_posterior(
    features: &Matrix,
    y: &[f64],
    prior_mean: &[f64],
    prior_cov: &Matrix,
    beta: f64,
) -> Result<GaussianPosterior> {
    check_regression_args(features, y, prior_cov, beta)?;
    if prior_mean.len() != features.cols() {
        return Err(LgrError::DimensionMismatch {
            context: "prior mean vs feature count",
            expected: features.cols(),
            found: prior_mean.len(),
        });
    }
    let prior = factor(prior_cov, "prior covariance")?;
    let prior_prec = prior.inverse();
    let (gram, phi_y) = normal_equations(features, y);

    let f = features.cols();
    let mut prec = prior_prec.clone();
    for i in 0..f {
        for j in 0..f {
            prec[(i, j)] += beta * gram[(i, j)];
        }
    }
    let post = factor(&prec, "posterior precision")?;
    let prior_term = prior_prec.mul_vec(prior_mean);
    let rhs: Vec<f64> = phi_y
        .iter()
        .zip(&prior_term)
        .map(|(a, b)| beta * a + b)
        .collect();
    Ok(GaussianPosterior {
        mean: post.solve(&rhs),
        covariance: post.inverse(),
    })
}

pub fn exact_predict(posterior: &GaussianPosterior, phi_star: &[f64], beta: f64) -> Result<ExactPrediction> {
    if phi_star.len() != posterior.mean.len() {
        return Err(LgrError::DimensionMismatch {
            context: "test features vs posterior",
            expected: posterior.mean.len(),
            found: phi_star.len(),
        });
    }
    let latent = posterior.covariance.quad_form(phi_star).max(0.0);
    Ok(ExactPrediction {
        mean: dot(phi_star, &posterior.mean),
        latent_variance: latent,
        observation_variance: latent + 1.0 / beta,
    })
}

/// `log N(y; 0, Φ Σ₀ Φᵀ + β⁻¹ I)`, evaluated in weight space.
pub fn log_evidence(features: &Matrix, y: &[f64], prior_cov: &Matrix, beta: f64) -> Result<f64> {
    check_regression_args(features, y, prior_cov, beta)?;
    let prior = factor(prior_cov, "prior covariance")?;
    let mut prec = prior.inverse();
    let (gram, phi_y) = normal_equations(features, y);
    let f = features.cols();
    for i in 0..f {
        for j in 0..f {
            prec[(i, j)] += beta * gram[(i, j)];
        }
    }
    let post = factor(&prec, "posterior precision")?;
    let n = y.len() as f64;
    let yy = dot(y, y);
    let solved = post.solve(&phi_y);
    let fit = beta * beta * dot(&phi_y, &solved);
    Ok(-0.5 * n * math::LN_2PI + 0.5 * n * math::ln(beta) - 0.5 * beta * yy + 0.5 * fit
        - 0.5 * prior.log_det()
        - 0.5 * post.log_det())
}

/// A local model as seen by the oracle: placement, scales and ARD precisions.
#[derive(Debug, Clone)]
pub struct OracleModel {
    pub center: Center,
    pub scales: LengthScales,
    pub alpha: Vec<f64>,
}

/// Stacked feature matrix `Φ` (N × M·K), model-major column blocks.
pub fn stacked_features(data: DataView<'_>, centers: &[Center], scales: &[LengthScales]) -> Result<Matrix> {
    let d = data.dim();
    let k = d + 1;
    let m_count = centers.len();
    if scales.len() != m_count {
        return Err(LgrError::DimensionMismatch {
            context: "scales vs centers",
            expected: m_count,
            found: scales.len(),
        });
    }
    let mut phi = Matrix::zeros(data.len(), m_count * k);
    let mut buf = vec![0.0; k];
    for (m, (c, s)) in centers.iter().zip(scales).enumerate() {
        if c.dim() != d || s.dim() != d {
            return Err(LgrError::DimensionMismatch {
                context: "model dimension vs data",
                expected: d,
                found: c.dim(),
            });
        }
        let inv_sq = s.inv_sq();
        for n in 0..data.len() {
            let x = data.input(n);
            let eta = eta_inv_sq(x, c.as_slice(), &inv_sq);
            write_phi(x, c.as_slice(), eta, &mut buf);
            for j in 0..k {
                phi[(n, m * k + j)] = buf[j];
            }
        }
    }
    Ok(phi)
}

/// Solves for the stacked weight means that the converged variational
/// E-step satisfies.
///
/// At the fixed point each latent mean is the model's own prediction plus
/// its share `g_m = β_fm⁻¹ / (β_y⁻¹ + Σ β_f⁻¹)` of the global residual.
/// Substituting into the weight update and cancelling the `Φ_mᵀΦ_m μ_m`
/// terms leaves, for every model,
/// `A_m μ_m + β_fm g_m Φ_mᵀ Φ μ = β_fm g_m Φ_mᵀ y`, a joint MK×MK system.
pub fn coupled_weight_optimum(
    data: DataView<'_>,
    models: &[OracleModel],
    beta_y: f64,
    beta_f: &[f64],
) -> Result<Vec<f64>> {
    if models.is_empty() {
        return Err(LgrError::InvalidArgument("need at least one local model".into()));
    }
    if beta_f.len() != models.len() {
        return Err(LgrError::DimensionMismatch {
            context: "model precisions vs models",
            expected: models.len(),
            found: beta_f.len(),
        });
    }
    let k = data.dim() + 1;
    if !(beta_y > 0.0) || beta_f.iter().any(|b| !(*b > 0.0)) {
        return Err(LgrError::InvalidArgument("precisions must be positive".into()));
    }
    for m in models {
        if m.alpha.len() != k || m.alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(LgrError::InvalidArgument(
                "each model needs K positive ARD precisions".into(),
            ));
        }
    }
    let centers: Vec<Center> = models.iter().map(|m| m.center.clone()).collect();
    let scales: Vec<LengthScales> = models.iter().map(|m| m.scales.clone()).collect();
    let phi = stacked_features(data, &centers, &scales)?;
    let (gram, phi_y) = normal_equations(&phi, data.targets());

    let b_inv: Vec<f64> = beta_f.iter().map(|b| 1.0 / b).collect();
    let denom = 1.0 / beta_y + b_inv.iter().sum::<f64>();
    // Row block m is divided by c_m = β_fm g_m (algebraically 1/denom for
    // every m), which makes the system symmetric.
    let coupling: Vec<f64> = beta_f
        .iter()
        .zip(&b_inv)
        .map(|(bf, bi)| bf * (bi / denom))
        .collect();

    let f = models.len() * k;
    let mut system = gram;
    for (m, model) in models.iter().enumerate() {
        for j in 0..k {
            let idx = m * k + j;
            system[(idx, idx)] += model.alpha[j] / coupling[m];
        }
    }
    debug_assert_eq!(system.rows(), f);
    let chol = factor(&system, "coupled weight system")?;
    Ok(chol.solve(&phi_y))
}
