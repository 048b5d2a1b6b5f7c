#![allow(dead_code)]

use lgr_core::exact::OracleModel;
use lgr_core::variational::LocalFeatures;
use lgr_core::{Center, Dataset, LengthScales, Precisions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small problem with random data, placement and precisions.
pub struct Instance {
    pub data: Dataset,
    pub centers: Vec<Center>,
    pub scales: Vec<LengthScales>,
    pub prec: Precisions,
}

impl Instance {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, d: usize, m: usize) -> Instance {
        let xs: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..n)
            .map(|i| {
                let x = &xs[i * d..(i + 1) * d];
                x.iter().map(|v| (2.0 * v).sin()).sum::<f64>() + 0.1 * rng.random_range(-1.0..1.0)
            })
            .collect();
        let data = Dataset::new(xs, d, ys).unwrap();
        let centers = (0..m)
            .map(|_| Center::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let scales = (0..m)
            .map(|_| {
                let l: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..1.5)).collect();
                LengthScales::from_lambda(&l).unwrap()
            })
            .collect();
        let prec = Precisions {
            beta_y: rng.random_range(1.0..50.0),
            beta_f: (0..m).map(|_| rng.random_range(1.0..50.0)).collect(),
            alpha: (0..m).map(|_| (0..=d).map(|_| rng.random_range(0.1..5.0)).collect()).collect(),
        };
        Instance { data, centers, scales, prec }
    }

    pub fn feats(&self) -> Vec<LocalFeatures> {
        self.centers
            .iter()
            .zip(&self.scales)
            .map(|(c, s)| LocalFeatures::compute(self.data.view(), c, s))
            .collect()
    }

    pub fn oracle_models(&self) -> Vec<OracleModel> {
        self.centers
            .iter()
            .zip(&self.scales)
            .zip(&self.prec.alpha)
            .map(|((c, s), a)| OracleModel {
                center: c.clone(),
                scales: s.clone(),
                alpha: a.clone(),
            })
            .collect()
    }
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Draws `n` inputs uniformly from `[lo, hi]` with `y = sin(x) + noise`.
pub fn sine(n: usize, lo: f64, hi: f64, noise: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let xs: Vec<f64> = (0..n).map(|_| r.random_range(lo..hi)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.sin() + noise * r.random_range(-1.0..1.0)).collect();
    Dataset::new(xs, 1, ys).unwrap()
}
