//! Dataset container and regression error metrics.

use alloc::vec::Vec;

use crate::error::{LgrError, Result};

/// `N` inputs of dimension `D` (row-major) with their targets.
///
/// `clean_targets` holds the noise-free function values for synthetic data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    dim: usize,
    targets: Vec<f64>,
    clean_targets: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, dim: usize, targets: Vec<f64>) -> Result<Self> {
        Self::with_clean(inputs, dim, targets, None)
    }

    pub fn with_clean(
        inputs: Vec<f64>,
        dim: usize,
        targets: Vec<f64>,
        clean_targets: Option<Vec<f64>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(LgrError::InvalidArgument("input dimension must be at least 1".into()));
        }
        if inputs.len() != dim * targets.len() {
            return Err(LgrError::DimensionMismatch {
                context: "dataset inputs",
                expected: dim * targets.len(),
                found: inputs.len(),
            });
        }
        if let Some(clean) = &clean_targets {
            if clean.len() != targets.len() {
                return Err(LgrError::DimensionMismatch {
                    context: "dataset clean targets",
                    expected: targets.len(),
                    found: clean.len(),
                });
            }
            if !clean.iter().all(|v| v.is_finite()) {
                return Err(LgrError::NonFinite("dataset clean targets"));
            }
        }
        if !inputs.iter().all(|v| v.is_finite()) {
            return Err(LgrError::NonFinite("dataset inputs"));
        }
        if !targets.iter().all(|v| v.is_finite()) {
            return Err(LgrError::NonFinite("dataset targets"));
        }
        Ok(Dataset {
            inputs,
            dim,
            targets,
            clean_targets,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn input(&self, n: usize) -> &[f64] {
        &self.inputs[n * self.dim..(n + 1) * self.dim]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn clean_targets(&self) -> Option<&[f64]> {
        self.clean_targets.as_deref()
    }

    /// Clean targets when present, otherwise the observed ones.
    pub fn reference_targets(&self) -> &[f64] {
        self.clean_targets.as_deref().unwrap_or(&self.targets)
    }

    pub fn view(&self) -> DataView<'_> {
        self.head(self.len())
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> DataView<'_> {
        let n = n.min(self.len());
        DataView {
            inputs: &self.inputs[..n * self.dim],
            targets: &self.targets[..n],
            dim: self.dim,
        }
    }

    /// Rows picked by index, in the order given.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(rows.len() * self.dim);
        let mut targets = Vec::with_capacity(rows.len());
        let mut clean = self.clean_targets.as_ref().map(|_| Vec::with_capacity(rows.len()));
        for &r in rows {
            inputs.extend_from_slice(self.input(r));
            targets.push(self.targets[r]);
            if let (Some(c), Some(src)) = (clean.as_mut(), self.clean_targets.as_ref()) {
                c.push(src[r]);
            }
        }
        Dataset {
            inputs,
            dim: self.dim,
            targets,
            clean_targets: clean,
        }
    }
}

/// Borrowed view of (a prefix of) a dataset.
#[derive(Debug, Clone, Copy)]
pub struct DataView<'a> {
    inputs: &'a [f64],
    targets: &'a [f64],
    dim: usize,
}

impl<'a> DataView<'a> {
    /// Builds a view from raw row-major slices.
    pub fn new(inputs: &'a [f64], dim: usize, targets: &'a [f64]) -> Result<Self> {
        if dim == 0 || inputs.len() != dim * targets.len() {
            return Err(LgrError::DimensionMismatch {
                context: "data view",
                expected: dim * targets.len(),
                found: inputs.len(),
            });
        }
        Ok(DataView { inputs, targets, dim })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn input(&self, n: usize) -> &'a [f64] {
        &self.inputs[n * self.dim..(n + 1) * self.dim]
    }

    #[inline]
    pub fn target(&self, n: usize) -> f64 {
        self.targets[n]
    }

    pub fn targets(&self) -> &'a [f64] {
        self.targets
    }
}

/// Mean squared error.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(LgrError::DimensionMismatch {
            context: "mse",
            expected: targets.len(),
            found: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(LgrError::EmptyDataset);
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / targets.len() as f64)
}

/// Population variance.
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// MSE divided by the population variance of `targets`.
pub fn nmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if targets.len() < 2 {
        return Err(LgrError::InvalidArgument("nmse needs at least two targets".into()));
    }
    let err = mse(predictions, targets)?;
    let var = variance(targets);
    if var <= 0.0 {
        return Err(LgrError::ZeroVariance);
    }
    Ok(err / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let t = [1.0, 2.0, 4.0];
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn mean_predictor_has_unit_nmse() {
        let t = [1.0, 2.0, 4.0, -3.0];
        let mean = t.iter().sum::<f64>() / 4.0;
        let p = [mean; 4];
        assert!((nmse(&p, &t).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_example() {
        let t = [0.0, 2.0];
        let p = [1.0, 1.0];
        assert_eq!(mse(&p, &t).unwrap(), 1.0);
        assert_eq!(variance(&t), 1.0);
        assert_eq!(nmse(&p, &t).unwrap(), 1.0);
    }

    #[test]
    fn zero_variance_is_an_error() {
        assert_eq!(nmse(&[0.0, 1.0], &[2.0, 2.0]), Err(LgrError::ZeroVariance));
    }

    #[test]
    fn length_checks() {
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(nmse(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn dataset_rejects_bad_shapes_and_nan() {
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2, vec![1.0, 2.0]).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], 2, vec![1.0]).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 2, vec![f64::INFINITY]).is_err());
        let d = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2, vec![5.0, 6.0]).unwrap();
        assert_eq!(d.input(1), &[3.0, 4.0]);
        assert_eq!(d.head(1).len(), 1);
        assert_eq!(d.select(&[1, 0]).targets(), &[6.0, 5.0]);
    }

    proptest! {
        #[test]
        fn nmse_is_scale_free(
            t in proptest::collection::vec(-10.0f64..10.0, 3..40),
            noise in proptest::collection::vec(-1.0f64..1.0, 40),
            s in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        ) {
            prop_assume!(variance(&t) > 1e-6);
            let p: Vec<f64> = t.iter().zip(&noise).map(|(a, b)| a + b).collect();
            let base = nmse(&p, &t).unwrap();
            let ps: Vec<f64> = p.iter().map(|v| v * s).collect();
            let ts: Vec<f64> = t.iter().map(|v| v * s).collect();
            let scaled = nmse(&ps, &ts).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-9 * base.max(1e-12));
        }
    }
}
