mod common;

use common::{rel_err, rng, Instance};
use lgr_core::exact::coupled_weight_optimum;
use lgr_core::features::local_features;
use lgr_core::variational::{
    e_step_latents, e_step_weights, elbo, lambda_ascent_step, lambda_gradient, m_step_alpha, m_step_beta_f,
    m_step_beta_y, LocalFeatures, Limits, VAR_FLOOR,
};
use lgr_core::{LatentTargets, LengthScales, Precisions, WeightPosterior};
use proptest::prelude::*;
use rand::Rng;

fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    let l = cholesky(cov);
    let n = x.len();
    // forward substitution for L z = x - mean
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * z[k]).sum();
        z[i] = (x[i] - mean[i] - s) / l[i][i];
    }
    let log_det: f64 = 2.0 * l.iter().enumerate().map(|(i, r)| r[i].ln()).sum::<f64>();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + z.iter().map(|v| v * v).sum::<f64>())
}

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean) * (x - mean) / var)
}

/// `E_q[log p(y, f, w) − log q(f, w)]` by a symmetric sigma-point rule,
/// exact for integrands of degree up to three.
fn elbo_by_quadrature(
    inst: &Instance,
    weights: &[WeightPosterior],
    latents: &LatentTargets,
    prec: &Precisions,
) -> f64 {
    let data = &inst.data;
    let (n, m) = (data.len(), inst.centers.len());
    let k = data.dim() + 1;
    let nf = n * m;
    let dim = nf + m * k;
    let sigma_f: Vec<Vec<f64>> = {
        let s = latents.sigma_f_dense();
        (0..m).map(|i| (0..m).map(|j| s[(i, j)]).collect()).collect()
    };
    let mut mean = vec![0.0; dim];
    let mut cov = vec![vec![0.0; dim]; dim];
    for i in 0..n {
        for a in 0..m {
            mean[i * m + a] = latents.mu_f[a][i];
            for b in 0..m {
                cov[i * m + a][i * m + b] = sigma_f[a][b];
            }
        }
    }
    for (a, w) in weights.iter().enumerate() {
        for r in 0..k {
            mean[nf + a * k + r] = w.mean[r];
            for c in 0..k {
                cov[nf + a * k + r][nf + a * k + c] = w.cov[(r, c)];
            }
        }
    }
    let phis: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|a| local_features(data.input(i), &inst.centers[a], &inst.scales[a]).unwrap().into_vec())
                .collect()
        })
        .collect();
    let integrand = |z: &[f64]| -> f64 {
        let mut v = 0.0;
        for i in 0..n {
            let f = &z[i * m..(i + 1) * m];
            v += normal_logpdf(data.targets()[i], f.iter().sum(), 1.0 / prec.beta_y);
            for a in 0..m {
                let w = &z[nf + a * k..nf + (a + 1) * k];
                let pred: f64 = w.iter().zip(&phis[i][a]).map(|(p, q)| p * q).sum();
                v += normal_logpdf(f[a], pred, 1.0 / prec.beta_f[a]);
            }
            let mu: Vec<f64> = (0..m).map(|a| latents.mu_f[a][i]).collect();
            v -= mvn_logpdf(f, &mu, &sigma_f);
        }
        for (a, w) in weights.iter().enumerate() {
            let zw = &z[nf + a * k..nf + (a + 1) * k];
            for r in 0..k {
                v += normal_logpdf(zw[r], 0.0, 1.0 / prec.alpha[a][r]);
            }
            let c: Vec<Vec<f64>> = (0..k).map(|r| (0..k).map(|s| w.cov[(r, s)]).collect()).collect();
            v -= mvn_logpdf(zw, &w.mean, &c);
        }
        v
    };
    let l = cholesky(&cov);
    let kappa = 1.0;
    let spread = (dim as f64 + kappa).sqrt();
    let mut total = kappa / (dim as f64 + kappa) * integrand(&mean);
    let w_side = 0.5 / (dim as f64 + kappa);
    for col in 0..dim {
        for sign in [-1.0, 1.0] {
            let z: Vec<f64> = (0..dim).map(|r| mean[r] + sign * spread * l[r][col]).collect();
            total += w_side * integrand(&z);
        }
    }
    total
}

fn prior_weights(prec: &Precisions) -> Vec<WeightPosterior> {
    prec.alpha.iter().map(|a| WeightPosterior::prior(a)).collect()
}

#[test]
fn elbo_matches_quadrature() {
    let mut r = rng(7);
    for (n, d, m) in [(1, 1, 1), (2, 1, 2), (3, 2, 2), (2, 2, 3)] {
        let inst = Instance::random(&mut r, n, d, m);
        let feats = inst.feats();
        let view = inst.data.view();
        let latents = e_step_latents(view, &feats, &prior_weights(&inst.prec), &inst.prec).unwrap();
        let weights = e_step_weights(view, &feats, &latents, &inst.prec).unwrap();
        // evaluate under precisions other than the ones q was fitted with
        let other = Instance::random(&mut r, n, d, m).prec;
        let got = elbo(view, &feats, &weights, &latents, &other);
        let want = elbo_by_quadrature(&inst, &weights, &latents, &other);
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "N={n} D={d} M={m}: {got} vs {want}");
    }
}

fn check_step(before: f64, after: f64, what: &str) {
    assert!(after >= before - 1e-8 * before.abs(), "{what} decreased the ELBO: {before} -> {after}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn every_closed_form_update_is_an_ascent(seed in any::<u64>(), n in 1usize..40, d in 1usize..4, m in 1usize..5) {
        let mut r = rng(seed);
        let inst = Instance::random(&mut r, n, d, m);
        let feats = inst.feats();
        let view = inst.data.view();
        let mut prec = inst.prec.clone();
        let mut weights = prior_weights(&prec);
        let mut latents = LatentTargets::zeros(n, prec.beta_y, &prec.beta_f);
        let mut cur = elbo(view, &feats, &weights, &latents, &prec);
        for _ in 0..3 {
            latents = e_step_latents(view, &feats, &weights, &prec).unwrap();
            let e = elbo(view, &feats, &weights, &latents, &prec);
            check_step(cur, e, "latents");
            cur = e;
            weights = e_step_weights(view, &feats, &latents, &prec).unwrap();
            let e = elbo(view, &feats, &weights, &latents, &prec);
            check_step(cur, e, "weights");
            cur = e;
            for j in 0..m {
                prec.beta_f[j] = m_step_beta_f(view, &feats, &weights, &latents, j, VAR_FLOOR).unwrap();
                let e = elbo(view, &feats, &weights, &latents, &prec);
                check_step(cur, e, "beta_f");
                cur = e;
                for c in 0..=d {
                    prec.alpha[j][c] = m_step_alpha(&weights, j, c, 1e6).unwrap();
                    let e = elbo(view, &feats, &weights, &latents, &prec);
                    check_step(cur, e, "alpha");
                    cur = e;
                }
            }
            prec.beta_y = m_step_beta_y(view, &latents, VAR_FLOOR);
            let e = elbo(view, &feats, &weights, &latents, &prec);
            check_step(cur, e, "beta_y");
            cur = e;
        }
    }

    #[test]
    fn length_scale_gradient_matches_finite_differences(seed in any::<u64>(), n in 2usize..30, d in 1usize..4, m in 1usize..4) {
        let mut r = rng(seed);
        let inst = Instance::random(&mut r, n, d, m);
        let feats = inst.feats();
        let view = inst.data.view();
        let latents = e_step_latents(view, &feats, &prior_weights(&inst.prec), &inst.prec).unwrap();
        let weights = e_step_weights(view, &feats, &latents, &inst.prec).unwrap();
        let at = |model: usize, dim: usize, delta: f64| {
            let mut log = inst.scales[model].log_lambda().to_vec();
            log[dim] += delta;
            let s = LengthScales::from_log(log).unwrap();
            let mut f = feats.clone();
            f[model] = LocalFeatures::compute(view, &inst.centers[model], &s);
            elbo(view, &f, &weights, &latents, &inst.prec)
        };
        let h = 1e-5;
        for model in 0..m {
            let g = lambda_gradient(view, &feats, &weights, &latents, &inst.prec, model).unwrap();
            for dim in 0..d {
                let fd = (at(model, dim, h) - at(model, dim, -h)) / (2.0 * h);
                if fd.abs() < 1e-6 {
                    continue;
                }
                prop_assert!((g[dim] - fd).abs() < 1e-4 * fd.abs(), "analytic {} vs fd {}", g[dim], fd);
            }
        }
    }
}

#[test]
fn converged_weights_match_the_joint_system() {
    let mut r = rng(3);
    for _ in 0..10 {
        let n = r.random_range(5..40);
        let d = r.random_range(1..3);
        let m = r.random_range(1..5);
        let inst = Instance::random(&mut r, n, d, m);
        let feats = inst.feats();
        let view = inst.data.view();
        let mut weights = prior_weights(&inst.prec);
        let mut prev: Vec<f64> = Vec::new();
        for _ in 0..100_000 {
            let latents = e_step_latents(view, &feats, &weights, &inst.prec).unwrap();
            weights = e_step_weights(view, &feats, &latents, &inst.prec).unwrap();
            let cur: Vec<f64> = weights.iter().flat_map(|w| w.mean.clone()).collect();
            if !prev.is_empty() && rel_err(&cur, &prev) < 1e-14 {
                break;
            }
            prev = cur;
        }
        let got: Vec<f64> = weights.iter().flat_map(|w| w.mean.clone()).collect();
        let want = coupled_weight_optimum(view, &inst.oracle_models(), inst.prec.beta_y, &inst.prec.beta_f).unwrap();
        assert!(rel_err(&got, &want) < 1e-6, "rel err {}", rel_err(&got, &want));
    }
}

#[test]
fn small_length_scale_steps_rarely_decrease_the_elbo() {
    let mut r = rng(11);
    let mut steps = 0;
    let mut ok = 0;
    for _ in 0..30 {
        let inst = Instance::random(&mut r, 30, 2, 3);
        let feats = inst.feats();
        let view = inst.data.view();
        let latents = e_step_latents(view, &feats, &prior_weights(&inst.prec), &inst.prec).unwrap();
        let weights = e_step_weights(view, &feats, &latents, &inst.prec).unwrap();
        let before = elbo(view, &feats, &weights, &latents, &inst.prec);
        for model in 0..3 {
            let g = lambda_gradient(view, &feats, &weights, &latents, &inst.prec, model).unwrap();
            let s = lambda_ascent_step(&inst.scales[model], &g, 1e-3, &Limits::default()).unwrap();
            let mut f = feats.clone();
            f[model] = LocalFeatures::compute(view, &inst.centers[model], &s);
            let after = elbo(view, &f, &weights, &latents, &inst.prec);
            steps += 1;
            ok += usize::from(after >= before - 1e-8 * before.abs());
        }
    }
    assert!(ok as f64 >= 0.95 * steps as f64, "{ok} of {steps}");
}
