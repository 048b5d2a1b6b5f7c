//! Factorizing variational inference for local Gaussian regression.
//!
//! The generative model is
//!
//! ```text
//! y_n   ~ N(Σ_m f_nm, 1/β_y)
//! f_nm  ~ N(w_mᵀ φ_m(x_n), 1/β_fm)
//! w_m   ~ N(0, A_m⁻¹),  A_m = diag(α_m1 … α_mK)
//! ```
//!
//! and the posterior is approximated by `q(w) q(f)`, which factorizes further
//! into one Gaussian per local model and one per datum. The weight updates
//! are local to each model; the latent-target update couples the models
//! through a shared `M×M` covariance that is diagonal plus rank one and is
//! never materialized.
//!
//! Every E-step and closed-form M-step here is an exact coordinate
//! maximization of [`elbo`]. The length-scale step is plain gradient ascent.
//!
//! With the `parallel` feature, per-model work runs on the rayon pool. Each
//! model's sums are still accumulated sequentially over data, so results do
//! not depend on scheduling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::DataView;
use crate::error::{LgrError, Result};
use crate::features::{eta_inv_sq, Center, LengthScales};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::math;

/// Floor on the variances `1/β_y` and `1/β_fm`.
pub const VAR_FLOOR: f64 = 1e-10;
/// Cap on ARD precisions.
pub const ALPHA_MAX: f64 = 1e6;
pub const LAMBDA_MIN: f64 = 1e-3;
pub const LAMBDA_MAX: f64 = 1e3;

/// Numerical limits applied by the M-steps and the length-scale step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Limits {
    pub var_floor: f64,
    pub alpha_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            var_floor: VAR_FLOOR,
            alpha_max: ALPHA_MAX,
            lambda_min: LAMBDA_MIN,
            lambda_max: LAMBDA_MAX,
        }
    }
}

/// `q(w_m) = N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightPosterior {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl WeightPosterior {
    /// `N(0, A⁻¹)`.
    pub fn prior(alpha: &[f64]) -> Self {
        WeightPosterior {
            mean: vec![0.0; alpha.len()],
            cov: Matrix::from_diagonal(&alpha.iter().map(|a| 1.0 / a).collect::<Vec<_>>()),
        }
    }
}

/// `q(f_n) = N(μ_fn, Σ_f)` for every datum.
///
/// `mu_f` is stored per model (`mu_f[m][n]`). `Σ_f = diag(b_inv) −
/// b_inv b_invᵀ / denom`, where `b_inv` and `denom = obs_var + Σ b_inv` are
/// frozen at the time of the update, so the covariance stays a property of
/// `q` when the precisions move afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTargets {
    pub mu_f: Vec<Vec<f64>>,
    pub b_inv: Vec<f64>,
    pub denom: f64,
    /// `1/β_y` used in the update.
    pub obs_var: f64,
}

impl LatentTargets {
    /// Latents for `n` data and the given model precisions, with zero means.
    pub fn zeros(n: usize, beta_y: f64, beta_f: &[f64]) -> Self {
        let b_inv: Vec<f64> = beta_f.iter().map(|b| 1.0 / b).collect();
        let obs_var = 1.0 / beta_y;
        LatentTargets {
            mu_f: vec![vec![0.0; n]; beta_f.len()],
            denom: obs_var + b_inv.iter().sum::<f64>(),
            b_inv,
            obs_var,
        }
    }

    pub fn n_models(&self) -> usize {
        self.b_inv.len()
    }

    pub fn n_data(&self) -> usize {
        self.mu_f.first().map_or(0, Vec::len)
    }

    /// `Σ_f[m, m]`.
    pub fn sigma_f_diag(&self, m: usize) -> f64 {
        let b = self.b_inv[m];
        b - b * b / self.denom
    }

    /// `1ᵀ Σ_f 1`.
    pub fn sigma_f_sum(&self) -> f64 {
        let s: f64 = self.b_inv.iter().sum();
        s * self.obs_var / self.denom
    }

    /// `log det Σ_f` by the matrix determinant lemma.
    pub fn sigma_f_log_det(&self) -> f64 {
        self.b_inv.iter().map(|b| math::ln(*b)).sum::<f64>() + math::ln(self.obs_var)
            - math::ln(self.denom)
    }

    /// Dense `Σ_f`; only for tests and small `M`.
    pub fn sigma_f_dense(&self) -> Matrix {
        let m = self.n_models();
        let mut s = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let diag = if i == j { self.b_inv[i] } else { 0.0 };
                s[(i, j)] = diag - self.b_inv[i] * self.b_inv[j] / self.denom;
            }
        }
        s
    }

    /// `1ᵀ μ_fn`.
    pub fn total(&self, n: usize) -> f64 {
        self.mu_f.iter().map(|col| col[n]).sum()
    }
}

/// Point estimates of the noise and prior precisions.
#[derive(Debug, Clone, PartialEq)]
pub struct Precisions {
    pub beta_y: f64,
    pub beta_f: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
}

/// Localizer values and the feature Gram matrix of one local model on a
/// data prefix.
#[derive(Debug, Clone)]
pub struct LocalFeatures {
    center: Vec<f64>,
    inv_sq: Vec<f64>,
    eta: Vec<f64>,
    /// `Σ_n φ_n φ_nᵀ`, K×K row-major.
    gram: Vec<f64>,
}

impl LocalFeatures {
    pub fn compute(data: DataView<'_>, center: &Center, scales: &LengthScales) -> Self {
        let k = center.dim() + 1;
        let mut f = LocalFeatures {
            center: center.as_slice().to_vec(),
            inv_sq: scales.inv_sq(),
            eta: Vec::with_capacity(data.len()),
            gram: vec![0.0; k * k],
        };
        f.extend(data);
        f
    }

    /// Appends rows `self.len()..data.len()` under the current scales.
    pub fn extend(&mut self, data: DataView<'_>) {
        let k = self.k();
        let mut xi = vec![0.0; k];
        for n in self.eta.len()..data.len() {
            let x = data.input(n);
            let eta = eta_inv_sq(x, &self.center, &self.inv_sq);
            self.eta.push(eta);
            if eta == 0.0 {
                continue;
            }
            self.xi_into(x, &mut xi);
            let e2 = eta * eta;
            for i in 0..k {
                let a = e2 * xi[i];
                for j in i..k {
                    self.gram[i * k + j] += a * xi[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                self.gram[i * k + j] = self.gram[j * k + i];
            }
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.eta.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.center.len() + 1
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// `Σ_n φ_n φ_nᵀ` as a matrix.
    pub fn gram(&self) -> Matrix {
        let k = self.k();
        Matrix::from_row_major(k, k, self.gram.clone()).expect("gram is K×K")
    }

    /// Unlocalized basis `ξ(x) = [1, x − c]`.
    #[inline]
    fn xi_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for ((o, xi), ci) in out[1..].iter_mut().zip(x).zip(&self.center) {
            *o = xi - ci;
        }
    }

    /// `φ_n` for row `n` of `data`.
    pub fn phi_into(&self, data: DataView<'_>, n: usize, out: &mut [f64]) {
        self.xi_into(data.input(n), out);
        let e = self.eta[n];
        out.iter_mut().for_each(|v| *v *= e);
    }

    /// `wᵀ φ(x)` given the row's localizer value.
    #[inline]
    fn predict_row(&self, x: &[f64], eta: f64, w: &[f64]) -> f64 {
        if eta == 0.0 {
            return 0.0;
        }
        let mut acc = w[0];
        for ((wi, xi), ci) in w[1..].iter().zip(x).zip(&self.center) {
            acc += wi * (xi - ci);
        }
        eta * acc
    }

    /// `tr(Σ Σ_n φφᵀ) = Σ_n φ_nᵀ Σ φ_n`.
    fn trace_with(&self, cov: &Matrix) -> f64 {
        dot(&self.gram, cov.as_slice())
    }
}

fn check_models(feats: &[LocalFeatures], m_count: usize, what: &'static str) -> Result<()> {
    if feats.len() != m_count {
        return Err(LgrError::DimensionMismatch {
            context: what,
            expected: feats.len(),
            found: m_count,
        });
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn map_models<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_models<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// `Σ_n (μ_fnm − μ_wmᵀ φ_m^n)²`.
fn latent_residual_sq(data: DataView<'_>, feat: &LocalFeatures, mean: &[f64], mu_f: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (n, (&eta, &target)) in feat.eta.iter().zip(mu_f).enumerate() {
        let r = target - feat.predict_row(data.input(n), eta, mean);
        acc += r * r;
    }
    acc
}

/// Weight posteriors given the latent targets:
/// `Σ_wm = (β_fm Σ_n φφᵀ + A_m)⁻¹`, `μ_wm = β_fm Σ_wm Σ_n φ E[f_nm]`.
pub fn e_step_weights(
    data: DataView<'_>,
    feats: &[LocalFeatures],
    latents: &LatentTargets,
    prec: &Precisions,
) -> Result<Vec<WeightPosterior>> {
    check_models(feats, latents.n_models(), "features vs latents")?;
    check_models(feats, prec.beta_f.len(), "features vs precisions")?;
    if latents.n_data() != data.len() && latents.n_models() > 0 {
        return Err(LgrError::DimensionMismatch {
            context: "latents vs data",
            expected: data.len(),
            found: latents.n_data(),
        });
    }
    map_models(feats.len(), |m| {
        let feat = &feats[m];
        let k = feat.k();
        let beta = prec.beta_f[m];
        let mut rhs = vec![0.0; k];
        for (n, (&eta, &f)) in feat.eta.iter().zip(&latents.mu_f[m]).enumerate() {
            if eta == 0.0 {
                continue;
            }
            let ef = eta * f;
            rhs[0] += ef;
            for ((r, xi), ci) in rhs[1..].iter_mut().zip(data.input(n)).zip(&feat.center) {
                *r += ef * (xi - ci);
            }
        }
        let mut p = feat.gram();
        p.as_mut_slice().iter_mut().for_each(|v| *v *= beta);
        for (j, a) in prec.alpha[m].iter().enumerate() {
            p[(j, j)] += a;
        }
        let chol = Cholesky::factor(&p).map_err(|e| LgrError::NotPositiveDefinite {
            context: format!("weight precision of local model {m}"),
            condition: e.condition,
        })?;
        let mut mean = chol.solve(&rhs);
        mean.iter_mut().for_each(|v| *v *= beta);
        Ok(WeightPosterior {
            mean,
            cov: chol.inverse(),
        })
    })
    .into_iter()
    .collect()
}

/// Latent-target posterior given the weights:
/// `μ_fn = (μ_wmᵀ φ_m^n)_m + B⁻¹1 (y_n − Σ_m μ_wmᵀ φ_m^n) / denom`.
pub fn e_step_latents(
    data: DataView<'_>,
    feats: &[LocalFeatures],
    weights: &[WeightPosterior],
    prec: &Precisions,
) -> Result<LatentTargets> {
    check_models(feats, weights.len(), "features vs weights")?;
    check_models(feats, prec.beta_f.len(), "features vs precisions")?;
    let n_data = data.len();
    let mut latents = LatentTargets::zeros(n_data, prec.beta_y, &prec.beta_f);
    let mut total = vec![0.0; n_data];
    for (m, feat) in feats.iter().enumerate() {
        if feat.len() != n_data {
            return Err(LgrError::DimensionMismatch {
                context: "features vs data",
                expected: n_data,
                found: feat.len(),
            });
        }
        let col = &mut latents.mu_f[m];
        for (n, (c, &eta)) in col.iter_mut().zip(&feat.eta).enumerate() {
            let p = feat.predict_row(data.input(n), eta, &weights[m].mean);
            *c = p;
            total[n] += p;
        }
    }
    let gain: Vec<f64> = latents.b_inv.iter().map(|b| b / latents.denom).collect();
    let resid: Vec<f64> = (0..n_data).map(|n| data.target(n) - total[n]).collect();
    for (col, g) in latents.mu_f.iter_mut().zip(&gain) {
        for (c, r) in col.iter_mut().zip(&resid) {
            *c += g * r;
        }
    }
    Ok(latents)
}

/// `1/β_y = (1/N) Σ_n (y_n − 1ᵀμ_fn)² + 1ᵀΣ_f1`, floored.
pub fn m_step_beta_y(data: DataView<'_>, latents: &LatentTargets, var_floor: f64) -> f64 {
    let n = data.len();
    let mut resid = 0.0;
    for i in 0..n {
        let r = data.target(i) - latents.total(i);
        resid += r * r;
    }
    let mean_resid = if n == 0 { 0.0 } else { resid / n as f64 };
    1.0 / (mean_resid + latents.sigma_f_sum()).max(var_floor)
}

/// `1/β_fm = (1/N) Σ_n [(μ_fnm − μ_wmᵀφ)² + φᵀΣ_wmφ] + Σ_f[m,m]`, floored.
pub fn m_step_beta_f(
    data: DataView<'_>,
    feats: &[LocalFeatures],
    weights: &[WeightPosterior],
    latents: &LatentTargets,
    m: usize,
    var_floor: f64,
) -> Result<f64> {
    check_index(m, feats.len())?;
    let feat = &feats[m];
    let w = &weights[m];
    let n = data.len().max(1) as f64;
    let resid = latent_residual_sq(data, feat, &w.mean, &latents.mu_f[m]);
    let spread = feat.trace_with(&w.cov);
    let var = (resid + spread) / n + latents.sigma_f_diag(m);
    Ok(1.0 / var.max(var_floor))
}

/// `1/α_mk = μ_wmk² + Σ_wm[k,k]`, capped at `alpha_max`.
pub fn m_step_alpha(weights: &[WeightPosterior], m: usize, k: usize, alpha_max: f64) -> Result<f64> {
    check_index(m, weights.len())?;
    let w = &weights[m];
    check_index(k, w.mean.len())?;
    let second_moment = w.mean[k] * w.mean[k] + w.cov[(k, k)];
    Ok((1.0 / second_moment).min(alpha_max))
}

fn check_index(i: usize, len: usize) -> Result<()> {
    if i >= len {
        Err(LgrError::IndexOutOfRange { index: i, len })
    } else {
        Ok(())
    }
}

/// Gradient of the model-`m` expected log-likelihood term in `log λ_md`.
///
/// `β_fm Σ_n [(μ_fnm − μ_wmᵀφ) μ_wmᵀ − φᵀΣ_wm] ∂φ/∂log λ_md`, with the
/// weight posterior held fixed. Because `λ` only enters through the
/// localizer, `∂φ/∂log λ_md = φ (x_d − c_d)² / λ_d²`.
pub fn lambda_gradient(
    data: DataView<'_>,
    feats: &[LocalFeatures],
    weights: &[WeightPosterior],
    latents: &LatentTargets,
    prec: &Precisions,
    m: usize,
) -> Result<Vec<f64>> {
    check_index(m, feats.len())?;
    Ok(lambda_gradient_one(data, &feats[m], &weights[m], &latents.mu_f[m], prec.beta_f[m]))
}

fn lambda_gradient_one(
    data: DataView<'_>,
    feat: &LocalFeatures,
    w: &WeightPosterior,
    mu_f: &[f64],
    beta_f: f64,
) -> Vec<f64> {
    let d = data.dim();
    let k = d + 1;
    let mut grad = vec![0.0; d];
    let mut phi = vec![0.0; k];
    let mut sphi = vec![0.0; k];
    for (n, (&eta, &f)) in feat.eta.iter().zip(mu_f).enumerate() {
        if eta == 0.0 {
            continue;
        }
        let x = data.input(n);
        feat.xi_into(x, &mut phi);
        phi.iter_mut().for_each(|v| *v *= eta);
        let pred = dot(&phi, &w.mean);
        for (r, s) in sphi.iter_mut().enumerate() {
            *s = dot(w.cov.row(r), &phi);
        }
        let quad = dot(&phi, &sphi);
        let common = (f - pred) * pred - quad;
        for (j, g) in grad.iter_mut().enumerate() {
            let diff = x[j] - feat.center[j];
            *g += diff * diff * feat.inv_sq[j] * common;
        }
    }
    grad.iter_mut().for_each(|g| *g *= beta_f);
    grad
}

/// Gradients for every model.
pub fn lambda_gradients(
    data: DataView<'_>,
    feats: &[LocalFeatures],
    weights: &[WeightPosterior],
    latents: &LatentTargets,
    prec: &Precisions,
) -> Vec<Vec<f64>> {
    map_models(feats.len(), |m| {
        lambda_gradient_one(data, &feats[m], &weights[m], &latents.mu_f[m], prec.beta_f[m])
    })
}

/// `log λ += rate · gradient`, clamped to `[log λ_min, log λ_max]`.
pub fn lambda_ascent_step(
    scales: &LengthScales,
    gradient: &[f64],
    rate: f64,
    limits: &Limits,
) -> Result<LengthScales> {
    if gradient.len() != scales.dim() {
        return Err(LgrError::DimensionMismatch {
            context: "gradient vs length-scales",
            expected: scales.dim(),
            found: gradient.len(),
        });
    }
    if !(rate > 0.0) {
        return Err(LgrError::InvalidArgument("learning rate must be positive".into()));
    }
    let lo = math::ln(limits.lambda_min);
    let hi = math::ln(limits.lambda_max);
    let updated = scales
        .log_lambda()
        .iter()
        .zip(gradient)
        .map(|(l, g)| {
            let step = rate * g;
            let v = if step.is_finite() { l + step } else { *l };
            v.clamp(lo, hi)
        })
        .collect();
    LengthScales::from_log(updated)
}

/// The variational free energy `E_q[log p(y, f, w)] + H[q(w)] + H[q(f)]`.
///
/// `q(f)`'s covariance is the one frozen in `latents`; the precisions enter
/// only through `log p`. Returns `-∞` if a weight covariance is not
/// positive definite.
pub fn elbo(
    data: DataView<'_>,
    feats: &[LocalFeatures],
    weights: &[WeightPosterior],
    latents: &LatentTargets,
    prec: &Precisions,
) -> f64 {
    let n = data.len() as f64;
    let m_count = feats.len();
    let ln2pi = math::LN_2PI;

    let mut obs_resid = 0.0;
    for i in 0..data.len() {
        let r = data.target(i) - latents.total(i);
        obs_resid += r * r;
    }
    let mut total = 0.5 * n * (math::ln(prec.beta_y) - ln2pi)
        - 0.5 * prec.beta_y * (obs_resid + n * latents.sigma_f_sum());

    let per_model: Vec<f64> = map_models(m_count, |m| {
        let feat = &feats[m];
        let w = &weights[m];
        let k = feat.k() as f64;
        let beta = prec.beta_f[m];
        let resid = latent_residual_sq(data, feat, &w.mean, &latents.mu_f[m]);
        let spread = feat.trace_with(&w.cov);
        let lik = 0.5 * n * (math::ln(beta) - ln2pi)
            - 0.5 * beta * (resid + spread + n * latents.sigma_f_diag(m));
        let alpha = &prec.alpha[m];
        let mut prior = -0.5 * k * ln2pi;
        for (j, &a) in alpha.iter().enumerate() {
            prior += 0.5 * math::ln(a) - 0.5 * a * (w.mean[j] * w.mean[j] + w.cov[(j, j)]);
        }
        let entropy = match Cholesky::factor(&w.cov) {
            Ok(c) if c.jitter() == 0.0 => 0.5 * c.log_det() + 0.5 * k * (1.0 + ln2pi),
            _ => f64::NEG_INFINITY,
        };
        lik + prior + entropy
    });
    total += per_model.iter().sum::<f64>();

    if m_count > 0 {
        total += n * (0.5 * latents.sigma_f_log_det() + 0.5 * m_count as f64 * (1.0 + ln2pi));
    }
    total
}
