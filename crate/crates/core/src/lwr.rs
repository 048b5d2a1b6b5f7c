//! Locally weighted regression baseline.
//!
//! Each local model is an independent weighted least-squares fit of
//! `β_mᵀ[1, x − c_m]` with weights `η_m(x_n)`. Predictions blend the local
//! predictions by their normalized localizer weights.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::DataView;
use crate::error::{LgrError, Result};
use crate::features::{eta_inv_sq, Center, LengthScales};
use crate::linalg::{Cholesky, Matrix};

/// Below this total localizer weight a prediction falls back to the
/// nearest center's local model.
pub const WEIGHT_EPSILON: f64 = 1e-12;

/// Default ridge added to the diagonal of each weighted normal system.
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LwrModel {
    pub centers: Vec<Center>,
    pub scales: LengthScales,
    /// `[β_0, β_1, …, β_D]` per center.
    pub coefficients: Vec<Vec<f64>>,
    pub ridge: f64,
}

/// One blended prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LwrPrediction {
    pub mean: f64,
    /// Set when the total weight was below [`WEIGHT_EPSILON`].
    pub fallback: bool,
}

/// Greedy placement: a datum becomes a center when no existing center
/// reaches `w_gen` there.
pub fn lwr_place_centers(data: DataView<'_>, scales: &LengthScales, w_gen: f64) -> Result<Vec<Center>> {
    if scales.dim() != data.dim() {
        return Err(LgrError::DimensionMismatch {
            context: "length-scales vs input dimension",
            expected: data.dim(),
            found: scales.dim(),
        });
    }
    if !(w_gen > 0.0 && w_gen <= 1.0) {
        return Err(LgrError::InvalidArgument("w_gen must be in (0, 1]".into()));
    }
    let inv_sq = scales.inv_sq();
    let mut centers: Vec<Center> = Vec::new();
    for n in 0..data.len() {
        let x = data.input(n);
        if !centers.iter().any(|c| eta_inv_sq(x, c.as_slice(), &inv_sq) >= w_gen) {
            centers.push(Center::new(x.to_vec())?);
        }
    }
    Ok(centers)
}

/// Weighted ridge fits at the given centers.
pub fn lwr_fit(data: DataView<'_>, centers: Vec<Center>, scales: LengthScales, ridge: f64) -> Result<LwrModel> {
    if data.is_empty() {
        return Err(LgrError::EmptyDataset);
    }
    if centers.is_empty() {
        return Err(LgrError::EmptyModel);
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(LgrError::InvalidArgument("ridge must be non-negative and finite".into()));
    }
    let d = data.dim();
    if scales.dim() != d {
        return Err(LgrError::DimensionMismatch {
            context: "length-scales vs input dimension",
            expected: d,
            found: scales.dim(),
        });
    }
    let k = d + 1;
    let inv_sq = scales.inv_sq();
    let mut xi = vec![0.0; k];
    let mut coefficients = Vec::with_capacity(centers.len());
    for c in &centers {
        if c.dim() != d {
            return Err(LgrError::DimensionMismatch {
                context: "center vs input dimension",
                expected: d,
                found: c.dim(),
            });
        }
        let c = c.as_slice();
        let mut a = Matrix::from_diagonal(&vec![ridge; k]);
        let mut b = vec![0.0; k];
        for n in 0..data.len() {
            let x = data.input(n);
            let w = eta_inv_sq(x, c, &inv_sq);
            if w == 0.0 {
                continue;
            }
            xi[0] = 1.0;
            for j in 0..d {
                xi[j + 1] = x[j] - c[j];
            }
            let y = data.target(n);
            let s = a.as_mut_slice();
            for r in 0..k {
                let wr = w * xi[r];
                b[r] += wr * y;
                for col in 0..k {
                    s[r * k + col] += wr * xi[col];
                }
            }
        }
        let chol = Cholesky::factor(&a).map_err(|e| LgrError::NotPositiveDefinite {
            context: "weighted normal equations".into(),
            condition: e.condition,
        })?;
        coefficients.push(chol.solve(&b));
    }
    Ok(LwrModel {
        centers,
        scales,
        coefficients,
        ridge,
    })
}

impl LwrModel {
    pub fn dim(&self) -> usize {
        self.scales.dim()
    }

    pub fn n_models(&self) -> usize {
        self.centers.len()
    }

    fn local_prediction(&self, m: usize, x: &[f64]) -> f64 {
        let beta = &self.coefficients[m];
        let c = self.centers[m].as_slice();
        beta[0] + x.iter().zip(c).zip(&beta[1..]).map(|((xi, ci), b)| (xi - ci) * b).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> Result<LwrPrediction> {
        Ok(self.predict_batch(x)?[0])
    }

    pub fn predict_batch(&self, inputs: &[f64]) -> Result<Vec<LwrPrediction>> {
        if self.centers.is_empty() {
            return Err(LgrError::EmptyModel);
        }
        let d = self.dim();
        if inputs.len() % d != 0 {
            return Err(LgrError::DimensionMismatch {
                context: "prediction inputs vs model dimension",
                expected: d,
                found: inputs.len() % d,
            });
        }
        if !inputs.iter().all(|v| v.is_finite()) {
            return Err(LgrError::NonFinite("prediction inputs"));
        }
        let inv_sq = self.scales.inv_sq();
        let out = inputs
            .chunks_exact(d)
            .map(|x| {
                let mut num = 0.0;
                let mut den = 0.0;
                for (m, c) in self.centers.iter().enumerate() {
                    let w = eta_inv_sq(x, c.as_slice(), &inv_sq);
                    if w > 0.0 {
                        num += w * self.local_prediction(m, x);
                        den += w;
                    }
                }
                if den >= WEIGHT_EPSILON {
                    LwrPrediction {
                        mean: num / den,
                        fallback: false,
                    }
                } else {
                    let nearest = self.nearest_center(x, &inv_sq);
                    LwrPrediction {
                        mean: self.local_prediction(nearest, x),
                        fallback: true,
                    }
                }
            })
            .collect();
        Ok(out)
    }

    /// Nearest center in the length-scale metric.
    fn nearest_center(&self, x: &[f64], inv_sq: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (m, c) in self.centers.iter().enumerate() {
            let dist: f64 = x
                .iter()
                .zip(c.as_slice())
                .zip(inv_sq)
                .map(|((a, b), s)| (a - b) * (a - b) * s)
                .sum();
            if dist < best_d {
                best_d = dist;
                best = m;
            }
        }
        best
    }

    /// Total localizer weight at `x`.
    pub fn weight_sum(&self, x: &[f64]) -> f64 {
        let inv_sq = self.scales.inv_sq();
        self.centers.iter().map(|c| eta_inv_sq(x, c.as_slice(), &inv_sq)).sum()
    }
}

/// Weighted ridge solution for one center, spelled out densely.
#[cfg(test)]
fn dense_wls(data: DataView<'_>, center: &[f64], scales: &LengthScales, ridge: f64) -> Vec<f64> {
    let k = data.dim() + 1;
    let inv_sq = scales.inv_sq();
    let mut a = Matrix::zeros(k, k);
    let mut b = vec![0.0; k];
    for n in 0..data.len() {
        let x = data.input(n);
        let w = eta_inv_sq(x, center, &inv_sq);
        let mut xi = vec![1.0];
        xi.extend(x.iter().zip(center).map(|(a, c)| a - c));
        for r in 0..k {
            b[r] += w * xi[r] * data.target(n);
            for c in 0..k {
                a.as_mut_slice()[r * k + c] += w * xi[r] * xi[c];
            }
        }
    }
    for r in 0..k {
        a.as_mut_slice()[r * k + r] += ridge;
    }
    Cholesky::factor(&a).unwrap().solve(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    fn line(slope: f64, offset: f64) -> Dataset {
        let xs: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        let ys = xs.iter().map(|x| offset + slope * x).collect();
        Dataset::new(xs, 1, ys).unwrap()
    }

    #[test]
    fn linear_data_is_reproduced() {
        let d = line(2.0, -0.5);
        let scales = LengthScales::uniform(1, 0.3).unwrap();
        let centers = lwr_place_centers(d.view(), &scales, 0.3).unwrap();
        let m = lwr_fit(d.view(), centers, scales, DEFAULT_RIDGE).unwrap();
        for x in [-0.95, -0.2, 0.0, 0.33, 0.9] {
            let p = m.predict(&[x]).unwrap();
            assert!(!p.fallback);
            assert!((p.mean - (-0.5 + 2.0 * x)).abs() < 1e-4, "{x}: {}", p.mean);
        }
    }

    #[test]
    fn coefficients_match_dense_solution() {
        let xs: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).cos()).collect();
        let d = Dataset::new(xs, 1, ys).unwrap();
        let scales = LengthScales::uniform(1, 0.2).unwrap();
        let centers = lwr_place_centers(d.view(), &scales, 0.5).unwrap();
        let m = lwr_fit(d.view(), centers.clone(), scales.clone(), 1e-3).unwrap();
        for (c, beta) in centers.iter().zip(&m.coefficients) {
            let want = dense_wls(d.view(), c.as_slice(), &scales, 1e-3);
            for (a, b) in beta.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn far_queries_use_nearest_center() {
        let d = line(1.0, 0.0);
        let scales = LengthScales::uniform(1, 0.05).unwrap();
        let centers = vec![Center::new(vec![-1.0]).unwrap(), Center::new(vec![1.0]).unwrap()];
        let m = lwr_fit(d.view(), centers, scales, DEFAULT_RIDGE).unwrap();
        let p = m.predict(&[40.0]).unwrap();
        assert!(p.fallback);
        let direct = m.local_prediction(1, &[40.0]);
        assert_eq!(p.mean, direct);
        let p = m.predict(&[-40.0]).unwrap();
        assert_eq!(p.mean, m.local_prediction(0, &[-40.0]));
    }

    #[test]
    fn placement_rule() {
        let d = Dataset::new(vec![0.0, 0.01, 2.0, 0.02], 1, vec![0.0; 4]).unwrap();
        let scales = LengthScales::uniform(1, 0.3).unwrap();
        let c = lwr_place_centers(d.view(), &scales, 0.3).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].as_slice(), &[2.0]);
        let c = lwr_place_centers(d.view(), &scales, 1.0).unwrap();
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn empty_inputs_rejected() {
        let d = line(1.0, 0.0);
        let scales = LengthScales::uniform(1, 0.3).unwrap();
        assert_eq!(lwr_fit(d.view(), vec![], scales, 0.0), Err(LgrError::EmptyModel));
    }
}
