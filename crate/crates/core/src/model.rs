//! Model lifecycle: incremental placement, pruning, fitting and prediction.
//!
//! [`fit`] walks the data in order. For every datum it places a new local
//! model at the input if no existing localizer reaches `w_gen` there, runs
//! one variational EM sweep over all data seen so far, and prunes models
//! whose ARD precisions all exceed the prune threshold. A convergence phase
//! of further sweeps over the full data follows.
//!
//! Sweep order: latents, weights, `β_f`, `α`, `β_y`, then one length-scale
//! ascent step per model. By default length-scales stay fixed during the
//! data pass and are learned in the convergence phase.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{mse, nmse, variance, Dataset};
use crate::error::{LgrError, Result};
use crate::features::{eta_inv_sq, Center, LengthScales};
use crate::linalg::dot;
use crate::variational::{
    self, LatentTargets, Limits, LocalFeatures, Precisions, WeightPosterior,
};

/// Fitting options.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitConfig {
    /// Placement threshold in `(0, 1]`.
    pub w_gen: f64,
    /// A model is pruned when all its ARD precisions exceed this.
    pub prune_threshold: f64,
    /// Initial length-scale, one value for every dimension or one per
    /// dimension.
    pub lambda_init: Vec<f64>,
    /// Step size of the length-scale gradient ascent on `log λ`, per unit
    /// of localizer mass `Σ_n η_m(x_n)`.
    pub learning_rate: f64,
    /// Extra sweeps over the full data after the data pass.
    pub convergence_iters: usize,
    /// Stop the convergence phase when the relative ELBO change falls below.
    pub elbo_tol: f64,
    pub learn_lengthscales: bool,
    /// Also step the length-scales during the data pass. Off: they are
    /// learned in the convergence phase only.
    pub lengthscales_in_pass: bool,
    /// Run the `β` and `α` M-steps. Off means all precisions stay at their
    /// initial values.
    pub learn_precisions: bool,
    /// During the data pass, sweep after every `sweep_every` new data.
    pub sweep_every: usize,
    /// New models start with `β_f = beta_f_ratio · β_y`.
    pub beta_f_ratio: f64,
    pub limits: Limits,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            w_gen: 0.3,
            prune_threshold: 1e3,
            lambda_init: vec![0.3],
            learning_rate: 5e-2,
            convergence_iters: 1000,
            elbo_tol: 1e-9,
            learn_lengthscales: true,
            lengthscales_in_pass: false,
            learn_precisions: true,
            sweep_every: 1,
            beta_f_ratio: 1.0,
            limits: Limits::default(),
            seed: 1,
            deterministic: false,
        }
    }
}

impl FitConfig {
    /// Every violated constraint, one message per key.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.w_gen > 0.0 && self.w_gen <= 1.0) {
            v.push(format!("w_gen must be in (0, 1], got {}", self.w_gen));
        }
        if !(self.prune_threshold > 0.0) {
            v.push(format!("prune_threshold must be positive, got {}", self.prune_threshold));
        }
        if self.lambda_init.is_empty() || !self.lambda_init.iter().all(|l| l.is_finite() && *l > 0.0) {
            v.push("lambda_init must be non-empty, positive and finite".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            v.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.elbo_tol >= 0.0) {
            v.push(format!("elbo_tol must be non-negative, got {}", self.elbo_tol));
        }
        if self.sweep_every == 0 {
            v.push("sweep_every must be at least 1".into());
        }
        if !(self.beta_f_ratio > 0.0) || !self.beta_f_ratio.is_finite() {
            v.push(format!("beta_f_ratio must be positive, got {}", self.beta_f_ratio));
        }
        let l = &self.limits;
        if !(l.var_floor > 0.0) {
            v.push("limits.var_floor must be positive".into());
        }
        if !(l.alpha_max > 0.0) {
            v.push("limits.alpha_max must be positive".into());
        }
        if !(l.lambda_min > 0.0 && l.lambda_min < l.lambda_max && l.lambda_max.is_finite()) {
            v.push("limits need 0 < lambda_min < lambda_max < inf".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(LgrError::InvalidArgument(v.join("; ")))
        }
    }

    fn initial_scales(&self, dim: usize) -> Result<LengthScales> {
        match self.lambda_init.len() {
            1 => LengthScales::uniform(dim, self.lambda_init[0]),
            n if n == dim => LengthScales::from_lambda(&self.lambda_init),
            n => Err(LgrError::DimensionMismatch {
                context: "lambda_init vs input dimension",
                expected: dim,
                found: n,
            }),
        }
    }
}

/// One trained local model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LocalModel {
    pub center: Center,
    pub scales: LengthScales,
    pub weights: WeightPosterior,
    pub beta_f: f64,
    pub alpha: Vec<f64>,
}

impl LocalModel {
    fn fresh(center: Center, scales: LengthScales, beta_f: f64) -> Self {
        let k = center.dim() + 1;
        let alpha = vec![1.0; k];
        LocalModel {
            weights: WeightPosterior::prior(&alpha),
            center,
            scales,
            beta_f,
            alpha,
        }
    }
}

/// Predictive mean and variance of `y*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Outcome of a placement check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Added(usize),
    Covered,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LgrModel {
    models: Vec<LocalModel>,
    beta_y: f64,
    config: FitConfig,
    dim: usize,
}

/// True when every precision exceeds the threshold.
pub fn is_prunable(alpha: &[f64], threshold: f64) -> bool {
    alpha.iter().all(|&a| a > threshold)
}

/// Which models survive pruning. The last model is never removed: if all
/// are prunable, the one with the smallest minimum precision is kept.
fn survivors<'a>(alphas: impl Iterator<Item = &'a [f64]> + Clone, threshold: f64) -> Vec<bool> {
    let mut keep: Vec<bool> = alphas.clone().map(|a| !is_prunable(a, threshold)).collect();
    if !keep.is_empty() && !keep.iter().any(|k| *k) {
        let mut best = 0;
        let mut best_min = f64::INFINITY;
        for (i, a) in alphas.enumerate() {
            let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
            if lo < best_min {
                best_min = lo;
                best = i;
            }
        }
        keep[best] = true;
    }
    keep
}

fn covered<'a>(x: &[f64], mut localizers: impl Iterator<Item = (&'a [f64], &'a [f64])>, w_gen: f64) -> bool {
    localizers.any(|(c, inv_sq)| eta_inv_sq(x, c, inv_sq) >= w_gen)
}

impl LgrModel {
    /// An untrained model with no local models.
    pub fn empty(dim: usize, beta_y: f64, config: FitConfig) -> Result<Self> {
        Self::from_parts(Vec::new(), beta_y, config, dim)
    }

    pub fn from_parts(models: Vec<LocalModel>, beta_y: f64, config: FitConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(LgrError::InvalidArgument("input dimension must be at least 1".into()));
        }
        if !(beta_y > 0.0) || !beta_y.is_finite() {
            return Err(LgrError::InvalidArgument("beta_y must be positive and finite".into()));
        }
        let k = dim + 1;
        for (i, m) in models.iter().enumerate() {
            let ok = m.center.dim() == dim
                && m.scales.dim() == dim
                && m.alpha.len() == k
                && m.weights.mean.len() == k
                && m.weights.cov.rows() == k
                && m.weights.cov.cols() == k;
            if !ok {
                return Err(LgrError::InvalidArgument(format!(
                    "local model {i} does not match input dimension {dim}"
                )));
            }
            if !(m.beta_f > 0.0) || m.alpha.iter().any(|a| !(*a > 0.0)) {
                return Err(LgrError::InvalidArgument(format!(
                    "local model {i} has non-positive precisions"
                )));
            }
        }
        Ok(LgrModel {
            models,
            beta_y,
            config,
            dim,
        })
    }

    pub fn models(&self) -> &[LocalModel] {
        &self.models
    }

    pub fn models_mut(&mut self) -> &mut [LocalModel] {
        &mut self.models
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn beta_y(&self) -> f64 {
        self.beta_y
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds a fresh local model centered at `x` unless some existing
    /// localizer already reaches `w_gen` there.
    pub fn maybe_add_model(&mut self, x: &[f64]) -> Result<Placement> {
        if x.len() != self.dim {
            return Err(LgrError::DimensionMismatch {
                context: "input vs model dimension",
                expected: self.dim,
                found: x.len(),
            });
        }
        let center = Center::new(x.to_vec())?;
        let inv: Vec<Vec<f64>> = self.models.iter().map(|m| m.scales.inv_sq()).collect();
        let loc = self
            .models
            .iter()
            .zip(&inv)
            .map(|(m, i)| (m.center.as_slice(), i.as_slice()));
        if covered(x, loc, self.config.w_gen) {
            return Ok(Placement::Covered);
        }
        let scales = self.config.initial_scales(self.dim)?;
        let beta_f = self.config.beta_f_ratio * self.beta_y;
        self.models.push(LocalModel::fresh(center, scales, beta_f));
        Ok(Placement::Added(self.models.len() - 1))
    }

    /// Removes every local model whose precisions all exceed the prune
    /// threshold, but never the last one. Returns how many were removed.
    pub fn prune_in_place(&mut self) -> usize {
        let keep = survivors(
            self.models.iter().map(|m| m.alpha.as_slice()),
            self.config.prune_threshold,
        );
        let before = self.models.len();
        let mut it = keep.iter();
        self.models.retain(|_| *it.next().unwrap());
        before - self.models.len()
    }

    pub fn prune(mut self) -> LgrModel {
        self.prune_in_place();
        self
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let (m, v) = self.predict_batch(x)?;
        Ok(Prediction {
            mean: m[0],
            variance: v[0],
        })
    }

    /// Predictions for row-major inputs; identical to per-point calls.
    ///
    /// The variance is `1/β_y + Σ_m 1/β_fm + Σ_m φ_mᵀ Σ_wm φ_m`. The middle
    /// term is not localized, so it grows with `M` even far from the data.
    pub fn predict_batch(&self, inputs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.models.is_empty() {
            return Err(LgrError::EmptyModel);
        }
        if inputs.len() % self.dim != 0 {
            return Err(LgrError::DimensionMismatch {
                context: "prediction inputs vs model dimension",
                expected: self.dim,
                found: inputs.len() % self.dim,
            });
        }
        if !inputs.iter().all(|v| v.is_finite()) {
            return Err(LgrError::NonFinite("prediction inputs"));
        }
        let n = inputs.len() / self.dim;
        let k = self.dim + 1;
        let base = 1.0 / self.beta_y + self.models.iter().map(|m| 1.0 / m.beta_f).sum::<f64>();
        let mut means = vec![0.0; n];
        let mut vars = vec![base; n];
        let mut phi = vec![0.0; k];
        let mut tmp = vec![0.0; k];
        for m in &self.models {
            let inv_sq = m.scales.inv_sq();
            let c = m.center.as_slice();
            for i in 0..n {
                let x = &inputs[i * self.dim..(i + 1) * self.dim];
                let eta = eta_inv_sq(x, c, &inv_sq);
                if eta == 0.0 {
                    continue;
                }
                crate::features::write_phi(x, c, eta, &mut phi);
                means[i] += dot(&phi, &m.weights.mean);
                for (r, t) in tmp.iter_mut().enumerate() {
                    *t = dot(m.weights.cov.row(r), &phi);
                }
                vars[i] += dot(&phi, &tmp).max(0.0);
            }
        }
        Ok((means, vars))
    }
}

/// Per-sweep diagnostics of a fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitReport {
    pub elbo_trace: Vec<f64>,
    /// Live models after each sweep's pruning.
    pub model_count_trace: Vec<usize>,
    /// Models placed since the previous sweep.
    pub added_trace: Vec<usize>,
    /// Models pruned at the end of each sweep.
    pub pruned_trace: Vec<usize>,
    pub final_mse: f64,
    /// `None` when the training targets have zero variance.
    pub final_nmse: Option<f64>,
    pub sweeps_run: usize,
    /// Whether the convergence phase stopped on the ELBO tolerance.
    pub converged: bool,
}

struct Engine<'a> {
    data: &'a Dataset,
    config: &'a FitConfig,
    n_seen: usize,
    centers: Vec<Center>,
    scales: Vec<LengthScales>,
    inv_sq: Vec<Vec<f64>>,
    /// `None` marks features that must be rebuilt after a scale change.
    feats: Vec<Option<LocalFeatures>>,
    weights: Vec<WeightPosterior>,
    prec: Precisions,
    added_since_sweep: usize,
}

impl<'a> Engine<'a> {
    fn new(data: &'a Dataset, config: &'a FitConfig) -> Self {
        let var_y = variance(data.targets()).max(config.limits.var_floor);
        Engine {
            data,
            config,
            n_seen: 0,
            centers: Vec::new(),
            scales: Vec::new(),
            inv_sq: Vec::new(),
            feats: Vec::new(),
            weights: Vec::new(),
            prec: Precisions {
                beta_y: 1.0 / var_y,
                beta_f: Vec::new(),
                alpha: Vec::new(),
            },
            added_since_sweep: 0,
        }
    }

    fn place(&mut self, n: usize) -> Result<()> {
        let x = self.data.input(n);
        let loc = self
            .centers
            .iter()
            .zip(&self.inv_sq)
            .map(|(c, i)| (c.as_slice(), i.as_slice()));
        if covered(x, loc, self.config.w_gen) {
            return Ok(());
        }
        let scales = self.config.initial_scales(self.data.dim())?;
        let k = self.data.dim() + 1;
        self.inv_sq.push(scales.inv_sq());
        self.centers.push(Center::new(x.to_vec())?);
        self.scales.push(scales);
        self.feats.push(None);
        self.weights.push(WeightPosterior::prior(&vec![1.0; k]));
        self.prec.beta_f.push(self.config.beta_f_ratio * self.prec.beta_y);
        self.prec.alpha.push(vec![1.0; k]);
        self.added_since_sweep += 1;
        Ok(())
    }

    fn refresh_features(&mut self) -> Vec<LocalFeatures> {
        let view = self.data.head(self.n_seen);
        self.feats
            .iter_mut()
            .zip(self.centers.iter().zip(&self.scales))
            .map(|(slot, (c, s))| match slot.take() {
                Some(mut f) => {
                    f.extend(view);
                    f
                }
                None => LocalFeatures::compute(view, c, s),
            })
            .collect()
    }

    /// E-step only: latents, then weights. Returns the refreshed latents.
    fn e_step(&mut self, feats: &[LocalFeatures]) -> Result<LatentTargets> {
        let view = self.data.head(self.n_seen);
        let latents = variational::e_step_latents(view, feats, &self.weights, &self.prec)?;
        self.weights = variational::e_step_weights(view, feats, &latents, &self.prec)?;
        Ok(latents)
    }

    /// One EM sweep; returns the ELBO after the closed-form M-steps.
    fn sweep(&mut self) -> Result<f64> {
        let feats = self.refresh_features();
        let latents = self.e_step(&feats)?;
        let view = self.data.head(self.n_seen);
        let limits = self.config.limits;

        if self.config.learn_precisions {
            for m in 0..feats.len() {
                self.prec.beta_f[m] =
                    variational::m_step_beta_f(view, &feats, &self.weights, &latents, m, limits.var_floor)?;
            }
            for m in 0..feats.len() {
                for k in 0..self.prec.alpha[m].len() {
                    self.prec.alpha[m][k] = variational::m_step_alpha(&self.weights, m, k, limits.alpha_max)?;
                }
            }
            self.prec.beta_y = variational::m_step_beta_y(view, &latents, limits.var_floor);
        }
        let elbo = variational::elbo(view, &feats, &self.weights, &latents, &self.prec);

        let in_pass = self.n_seen < self.data.len();
        if self.config.learn_lengthscales && (self.config.lengthscales_in_pass || !in_pass) {
            let grads = variational::lambda_gradients(view, &feats, &self.weights, &latents, &self.prec);
            for (m, g) in grads.iter().enumerate() {
                // step per unit of data support, so wide and narrow models move alike
                let support: f64 = feats[m].eta().iter().sum();
                let rate = self.config.learning_rate / support.max(1.0);
                let next = variational::lambda_ascent_step(&self.scales[m], g, rate, &limits)?;
                if next != self.scales[m] {
                    self.inv_sq[m] = next.inv_sq();
                    self.scales[m] = next;
                    self.feats[m] = None;
                } else {
                    self.feats[m] = Some(feats[m].clone());
                }
            }
        } else {
            for (slot, f) in self.feats.iter_mut().zip(feats) {
                *slot = Some(f);
            }
        }
        Ok(elbo)
    }

    fn prune(&mut self) -> usize {
        let keep = survivors(self.prec.alpha.iter().map(Vec::as_slice), self.config.prune_threshold);
        let removed = keep.iter().filter(|k| !**k).count();
        if removed == 0 {
            return 0;
        }
        fn retain<T>(v: &mut Vec<T>, keep: &[bool]) {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        }
        retain(&mut self.centers, &keep);
        retain(&mut self.scales, &keep);
        retain(&mut self.inv_sq, &keep);
        retain(&mut self.feats, &keep);
        retain(&mut self.weights, &keep);
        retain(&mut self.prec.beta_f, &keep);
        retain(&mut self.prec.alpha, &keep);
        removed
    }

    /// The current state as a model, without refitting.
    fn snapshot(&self) -> Result<LgrModel> {
        let models = (0..self.centers.len())
            .map(|m| LocalModel {
                center: self.centers[m].clone(),
                scales: self.scales[m].clone(),
                weights: self.weights[m].clone(),
                beta_f: self.prec.beta_f[m],
                alpha: self.prec.alpha[m].clone(),
            })
            .collect();
        LgrModel::from_parts(models, self.prec.beta_y, self.config.clone(), self.data.dim())
    }

    fn into_model(mut self) -> Result<LgrModel> {
        // Re-fit the weights to the final length-scales.
        let feats = self.refresh_features();
        if !feats.is_empty() {
            self.e_step(&feats)?;
        }
        let models = self
            .centers
            .into_iter()
            .zip(self.scales)
            .zip(self.weights)
            .zip(self.prec.beta_f)
            .zip(self.prec.alpha)
            .map(|((((center, scales), weights), beta_f), alpha)| LocalModel {
                center,
                scales,
                weights,
                beta_f,
                alpha,
            })
            .collect();
        LgrModel::from_parts(models, self.prec.beta_y, self.config.clone(), self.data.dim())
    }
}

/// Trains a model by incremental placement and variational EM.
pub fn fit(dataset: &Dataset, config: &FitConfig) -> Result<(LgrModel, FitReport)> {
    fit_observed(dataset, config, |_| {})
}

/// [`fit`], calling `before_prune` with the current model after every
/// sweep that leaves some local model prunable.
pub fn fit_observed(
    dataset: &Dataset,
    config: &FitConfig,
    mut before_prune: impl FnMut(&LgrModel),
) -> Result<(LgrModel, FitReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(LgrError::EmptyDataset);
    }
    // Dataset construction already rejects non-finite values.
    let mut engine = Engine::new(dataset, config);
    let mut report = FitReport {
        elbo_trace: Vec::new(),
        model_count_trace: Vec::new(),
        added_trace: Vec::new(),
        pruned_trace: Vec::new(),
        final_mse: 0.0,
        final_nmse: None,
        sweeps_run: 0,
        converged: false,
    };

    let mut record = |engine: &mut Engine<'_>, report: &mut FitReport| -> Result<f64> {
        let elbo = engine.sweep()?;
        if engine.prec.alpha.iter().any(|a| is_prunable(a, config.prune_threshold)) {
            before_prune(&engine.snapshot()?);
        }
        let pruned = engine.prune();
        report.elbo_trace.push(elbo);
        report.added_trace.push(engine.added_since_sweep);
        report.pruned_trace.push(pruned);
        report.model_count_trace.push(engine.centers.len());
        report.sweeps_run += 1;
        engine.added_since_sweep = 0;
        Ok(elbo)
    };

    let n_total = dataset.len();
    for n in 0..n_total {
        engine.n_seen = n + 1;
        engine.place(n)?;
        if (n + 1) % config.sweep_every == 0 || n + 1 == n_total {
            record(&mut engine, &mut report)?;
        }
    }

    let mut prev = *report.elbo_trace.last().expect("data pass ran at least one sweep");
    for _ in 0..config.convergence_iters {
        let e = record(&mut engine, &mut report)?;
        let rel = (e - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = e;
        if rel < config.elbo_tol {
            report.converged = true;
            break;
        }
    }

    let model = engine.into_model()?;
    let (pred, _) = model.predict_batch(dataset.inputs())?;
    report.final_mse = mse(&pred, dataset.targets())?;
    report.final_nmse = nmse(&pred, dataset.targets()).ok();
    Ok((model, report))
}
