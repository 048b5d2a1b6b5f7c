//! RBF localizers and localized linear features.
//!
//! A local model with center `c` and per-dimension length-scales `λ` is
//! weighted by `η(x) = exp(-½ Σ_d (x_d - c_d)² / λ_d²)`. Its features are the
//! bias-plus-linear basis `ξ(x) = [1, x - c]` scaled by the localizer, so
//! `K = D + 1`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{LgrError, Result};
use crate::math;

/// Exponents below this are clamped before `exp`.
pub const EXPONENT_CLAMP: f64 = -700.0;
/// Localizer values below this are flushed to zero.
pub const FLUSH_BELOW: f64 = 1e-300;

/// Center of a local model, in input units.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct Center(Vec<f64>);

impl Center {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(LgrError::InvalidArgument("center must have at least one coordinate".into()));
        }
        if !coords.iter().all(|c| c.is_finite()) {
            return Err(LgrError::NonFinite("center"));
        }
        Ok(Center(coords))
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Per-dimension length-scales, stored as `log λ`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LengthScales {
    log_lambda: Vec<f64>,
}

impl LengthScales {
    /// From length-scales in input units; each must be positive and finite.
    pub fn from_lambda(lambda: &[f64]) -> Result<Self> {
        if lambda.is_empty() {
            return Err(LgrError::InvalidArgument("need at least one length-scale".into()));
        }
        if !lambda.iter().all(|l| l.is_finite() && *l > 0.0) {
            return Err(LgrError::InvalidArgument(
                "length-scales must be positive and finite".into(),
            ));
        }
        Ok(LengthScales {
            log_lambda: lambda.iter().map(|&l| math::ln(l)).collect(),
        })
    }

    pub fn from_log(log_lambda: Vec<f64>) -> Result<Self> {
        if log_lambda.is_empty() {
            return Err(LgrError::InvalidArgument("need at least one length-scale".into()));
        }
        let ok = log_lambda.iter().all(|l| {
            let v = math::exp(*l);
            v.is_finite() && v > 0.0
        });
        if !ok {
            return Err(LgrError::InvalidArgument(
                "log length-scales must map to positive finite scales".into(),
            ));
        }
        Ok(LengthScales { log_lambda })
    }

    /// The same scale in every one of `dim` dimensions.
    pub fn uniform(dim: usize, lambda: f64) -> Result<Self> {
        Self::from_lambda(&vec![lambda; dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.log_lambda.len()
    }

    #[inline]
    pub fn log_lambda(&self) -> &[f64] {
        &self.log_lambda
    }

    pub fn lambda(&self) -> Vec<f64> {
        self.log_lambda.iter().map(|&l| math::exp(l)).collect()
    }

    /// `1 / λ_d²` per dimension.
    pub fn inv_sq(&self) -> Vec<f64> {
        self.log_lambda.iter().map(|&l| math::exp(-2.0 * l)).collect()
    }
}

/// `φ(x) = η(x)·[1, x₁-c₁, …, x_D-c_D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The localizer weight (first entry).
    #[inline]
    pub fn eta(&self) -> f64 {
        self.0[0]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn check(x: &[f64], center: &Center, scales: &LengthScales) -> Result<()> {
    if x.len() != center.dim() {
        return Err(LgrError::DimensionMismatch {
            context: "input vs center",
            expected: center.dim(),
            found: x.len(),
        });
    }
    if scales.dim() != center.dim() {
        return Err(LgrError::DimensionMismatch {
            context: "length-scales vs center",
            expected: center.dim(),
            found: scales.dim(),
        });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(LgrError::NonFinite("input"));
    }
    Ok(())
}

/// Localizer from precomputed `1/λ²`, with exponent clamping and flushing.
#[inline]
pub(crate) fn eta_inv_sq(x: &[f64], center: &[f64], inv_sq: &[f64]) -> f64 {
    let mut q = 0.0;
    for ((xi, ci), w) in x.iter().zip(center).zip(inv_sq) {
        let d = xi - ci;
        q += d * d * w;
    }
    let e = (-0.5 * q).max(EXPONENT_CLAMP);
    let v = math::exp(e);
    if v < FLUSH_BELOW {
        0.0
    } else {
        v
    }
}

/// Writes `η·[1, x - c]` into `out` (length `D + 1`).
#[inline]
pub(crate) fn write_phi(x: &[f64], center: &[f64], eta: f64, out: &mut [f64]) {
    out[0] = eta;
    for ((o, xi), ci) in out[1..].iter_mut().zip(x).zip(center) {
        *o = eta * (xi - ci);
    }
}

/// Unnormalized RBF localizer weight, in `(0, 1]` up to underflow flushing.
pub fn rbf_weight(x: &[f64], center: &Center, scales: &LengthScales) -> Result<f64> {
    check(x, center, scales)?;
    Ok(eta_inv_sq(x, center.as_slice(), &scales.inv_sq()))
}

pub fn local_features(x: &[f64], center: &Center, scales: &LengthScales) -> Result<FeatureVector> {
    check(x, center, scales)?;
    let eta = eta_inv_sq(x, center.as_slice(), &scales.inv_sq());
    let mut out = vec![0.0; x.len() + 1];
    write_phi(x, center.as_slice(), eta, &mut out);
    Ok(FeatureVector(out))
}

/// `∂φ/∂log λ_d = φ · (x_d - c_d)² / λ_d²`.
pub fn dphi_dlog_lambda(
    x: &[f64],
    center: &Center,
    scales: &LengthScales,
    d: usize,
) -> Result<FeatureVector> {
    check(x, center, scales)?;
    if d >= center.dim() {
        return Err(LgrError::IndexOutOfRange {
            index: d,
            len: center.dim(),
        });
    }
    let inv_sq = scales.inv_sq();
    let diff = x[d] - center.as_slice()[d];
    let factor = diff * diff * inv_sq[d];
    let mut phi = local_features(x, center, scales)?.into_vec();
    phi.iter_mut().for_each(|v| *v *= factor);
    Ok(FeatureVector(phi))
}
