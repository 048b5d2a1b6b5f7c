//! Versioned JSON model files.
//!
//! ```json
//! { "format": "lgr-model", "version": 1, "kind": "lgr", "dim": 2, ... }
//! ```
//!
//! Local-model covariances are stored as their lower triangle, row by row.
//! Floats are written in shortest round-trip form, so every stored value
//! reads back bit-identical.

use std::fs;
use std::path::Path;

use lgr_core::linalg::Matrix;
use lgr_core::{Center, FitConfig, LengthScales, LgrModel, LocalModel, LwrModel, WeightPosterior};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT_NAME: &str = "lgr-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: Body,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Body {
    Lgr {
        dim: usize,
        beta_y: f64,
        config: FitConfig,
        models: Vec<LocalDump>,
    },
    Lwr {
        dim: usize,
        ridge: f64,
        log_lambda: Vec<f64>,
        centers: Vec<Vec<f64>>,
        coefficients: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct LocalDump {
    center: Vec<f64>,
    log_lambda: Vec<f64>,
    mean: Vec<f64>,
    cov_lower: Vec<f64>,
    beta_f: f64,
    alpha: Vec<f64>,
}

/// Either kind of trained model.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Lgr(LgrModel),
    Lwr(LwrModel),
}

impl AnyModel {
    pub fn dim(&self) -> usize {
        match self {
            AnyModel::Lgr(m) => m.dim(),
            AnyModel::Lwr(m) => m.dim(),
        }
    }

    pub fn n_models(&self) -> usize {
        match self {
            AnyModel::Lgr(m) => m.n_models(),
            AnyModel::Lwr(m) => m.n_models(),
        }
    }

    /// Means and, for LGR, predictive variances.
    pub fn predict_batch(&self, inputs: &[f64]) -> Result<(Vec<f64>, Option<Vec<f64>>), CliError> {
        match self {
            AnyModel::Lgr(m) => {
                let (mean, var) = m.predict_batch(inputs)?;
                Ok((mean, Some(var)))
            }
            AnyModel::Lwr(m) => {
                let p = m.predict_batch(inputs)?;
                Ok((p.into_iter().map(|p| p.mean).collect(), None))
            }
        }
    }
}

fn lower_triangle(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for r in 0..n {
        out.extend_from_slice(&m.row(r)[..=r]);
    }
    out
}

fn from_lower_triangle(k: usize, lower: &[f64]) -> Result<Matrix, CliError> {
    if lower.len() != k * (k + 1) / 2 {
        return Err(CliError::Format(format!(
            "covariance needs {} lower-triangle entries, found {}",
            k * (k + 1) / 2,
            lower.len()
        )));
    }
    let mut m = Matrix::zeros(k, k);
    let s = m.as_mut_slice();
    let mut i = 0;
    for r in 0..k {
        for c in 0..=r {
            s[r * k + c] = lower[i];
            s[c * k + r] = lower[i];
            i += 1;
        }
    }
    Ok(m)
}

pub fn to_json(model: &AnyModel) -> String {
    let body = match model {
        AnyModel::Lgr(m) => Body::Lgr {
            dim: m.dim(),
            beta_y: m.beta_y(),
            config: m.config().clone(),
            models: m
                .models()
                .iter()
                .map(|l| LocalDump {
                    center: l.center.as_slice().to_vec(),
                    log_lambda: l.scales.log_lambda().to_vec(),
                    mean: l.weights.mean.clone(),
                    cov_lower: lower_triangle(&l.weights.cov),
                    beta_f: l.beta_f,
                    alpha: l.alpha.clone(),
                })
                .collect(),
        },
        AnyModel::Lwr(m) => Body::Lwr {
            dim: m.dim(),
            ridge: m.ridge,
            log_lambda: m.scales.log_lambda().to_vec(),
            centers: m.centers.iter().map(|c| c.as_slice().to_vec()).collect(),
            coefficients: m.coefficients.clone(),
        },
    };
    let env = Envelope {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        body,
    };
    serde_json::to_string_pretty(&env).expect("model dumps contain only finite numbers")
}

pub fn from_json(text: &str) -> Result<AnyModel, CliError> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| CliError::Format(e.to_string()))?;
    if env.format != FORMAT_NAME {
        return Err(CliError::Format(format!("unknown format `{}`", env.format)));
    }
    if env.version != FORMAT_VERSION {
        return Err(CliError::Format(format!(
            "unsupported version {} (expected {FORMAT_VERSION})",
            env.version
        )));
    }
    let bad = |e: lgr_core::LgrError| CliError::Format(e.to_string());
    match env.body {
        Body::Lgr {
            dim,
            beta_y,
            config,
            models,
        } => {
            let k = dim + 1;
            let models = models
                .into_iter()
                .map(|d| {
                    Ok(LocalModel {
                        center: Center::new(d.center).map_err(bad)?,
                        scales: LengthScales::from_log(d.log_lambda).map_err(bad)?,
                        weights: WeightPosterior {
                            mean: d.mean,
                            cov: from_lower_triangle(k, &d.cov_lower)?,
                        },
                        beta_f: d.beta_f,
                        alpha: d.alpha,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(AnyModel::Lgr(LgrModel::from_parts(models, beta_y, config, dim).map_err(bad)?))
        }
        Body::Lwr {
            dim,
            ridge,
            log_lambda,
            centers,
            coefficients,
        } => {
            let scales = LengthScales::from_log(log_lambda).map_err(bad)?;
            let centers = centers
                .into_iter()
                .map(|c| Center::new(c).map_err(bad))
                .collect::<Result<Vec<_>, CliError>>()?;
            let shape_ok = scales.dim() == dim
                && !centers.is_empty()
                && centers.len() == coefficients.len()
                && centers.iter().all(|c| c.dim() == dim)
                && coefficients.iter().all(|b| b.len() == dim + 1 && b.iter().all(|v| v.is_finite()));
            if !shape_ok || !(ridge >= 0.0) {
                return Err(CliError::Format("inconsistent lwr model".into()));
            }
            Ok(AnyModel::Lwr(LwrModel {
                centers,
                scales,
                coefficients,
                ridge,
            }))
        }
    }
}

pub fn save_model(path: &Path, model: &AnyModel) -> Result<(), CliError> {
    fs::write(path, to_json(model)).map_err(|e| CliError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<AnyModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    from_json(&text)
}
