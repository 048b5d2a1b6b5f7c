mod common;

use common::sine;
use lgr_core::lwr::{lwr_fit, lwr_place_centers};
use lgr_core::{Center, Dataset, LengthScales};
use proptest::prelude::*;

fn centers(cs: &[f64]) -> Vec<Center> {
    cs.iter().map(|c| Center::new(vec![*c]).unwrap()).collect()
}

#[test]
fn local_fits_are_independent() {
    let d = sine(80, 0.0, 6.0, 0.1, 1);
    let s = LengthScales::uniform(1, 0.5).unwrap();
    let one = lwr_fit(d.view(), centers(&[1.0]), s.clone(), 1e-6).unwrap();
    let three = lwr_fit(d.view(), centers(&[1.0, 3.0, 5.0]), s, 1e-6).unwrap();
    assert_eq!(one.coefficients[0], three.coefficients[0]);
}

#[test]
fn blend_stays_between_local_predictions() {
    let d = sine(80, 0.0, 6.0, 0.1, 2);
    let s = LengthScales::uniform(1, 0.7).unwrap();
    let m = lwr_fit(d.view(), centers(&[0.5, 2.0, 3.5, 5.0]), s, 1e-6).unwrap();
    for i in 0..60 {
        let x = 0.1 * i as f64;
        let local: Vec<f64> = m
            .centers
            .iter()
            .zip(&m.coefficients)
            .map(|(c, b)| b[0] + b[1] * (x - c.as_slice()[0]))
            .collect();
        let lo = local.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = local.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p = m.predict(&[x]).unwrap();
        assert!(!p.fallback);
        assert!(p.mean >= lo - 1e-12 && p.mean <= hi + 1e-12, "x={x}");
    }
}

#[test]
fn huge_length_scale_gives_global_regression() {
    let d = sine(50, -1.0, 2.0, 0.1, 3);
    let (xs, ys) = (d.inputs(), d.targets());
    let n = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let icept = (sy - slope * sx) / n;
    let s = LengthScales::uniform(1, 1e6).unwrap();
    let m = lwr_fit(d.view(), centers(&[-0.5, 0.7]), s, 0.0).unwrap();
    for x in [-1.0, 0.0, 1.5] {
        let want = icept + slope * x;
        assert!((m.predict(&[x]).unwrap().mean - want).abs() < 1e-8);
    }
}

#[test]
fn constant_targets_give_constant_bias() {
    let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
    let d = Dataset::new(xs, 1, vec![3.0; 30]).unwrap();
    let s = LengthScales::uniform(1, 0.4).unwrap();
    let c = lwr_place_centers(d.view(), &s, 0.5).unwrap();
    let m = lwr_fit(d.view(), c, s, 1e-12).unwrap();
    for b in &m.coefficients {
        assert!((b[0] - 3.0).abs() < 1e-8);
        assert!(b[1].abs() < 1e-8);
    }
}

proptest! {
    #[test]
    fn more_ridge_never_grows_coefficients(seed in 0u64..1000, ridge in 1e-6f64..10.0) {
        let d = sine(40, 0.0, 6.0, 0.3, seed);
        let s = LengthScales::uniform(1, 0.5).unwrap();
        let c = centers(&[1.0, 4.0]);
        let a = lwr_fit(d.view(), c.clone(), s.clone(), ridge).unwrap();
        let b = lwr_fit(d.view(), c, s, 2.0 * ridge).unwrap();
        for (wa, wb) in a.coefficients.iter().zip(&b.coefficients) {
            let na: f64 = wa.iter().map(|v| v * v).sum();
            let nb: f64 = wb.iter().map(|v| v * v).sum();
            prop_assert!(nb <= na * (1.0 + 1e-12));
        }
    }
}
