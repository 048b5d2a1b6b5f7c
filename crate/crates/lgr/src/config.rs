//! Run configuration from flat `key = value` files and command-line flags.
//!
//! Keys are the long flag names without dashes (`w-gen`, `learning-rate`,
//! ...); underscores are accepted in place of dashes. Flags override file
//! values. Resolution checks every key and reports all problems at once.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lgr_core::FitConfig;
use serde::Serialize;

use crate::error::CliError;

/// Raw key/value settings, before parsing.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl Settings {
    pub fn new() -> Self {
        Settings::default()
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_file_text(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::new();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => {
                    let key = normalize_key(k);
                    if s.values.insert(key.clone(), v.trim().to_string()).is_some() {
                        errors.push(format!("line {}: duplicate key `{key}`", i + 1));
                    }
                }
                _ => errors.push(format!("line {}: expected `key = value`", i + 1)),
            }
        }
        if errors.is_empty() {
            Ok(s)
        } else {
            Err(CliError::Config(errors))
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse_file_text(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(normalize_key(key), value.into());
    }

    /// Sets `key` only when a value is given; used for optional flags.
    pub fn set_opt(&mut self, key: &str, value: Option<impl Into<String>>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    /// Later settings win.
    pub fn merged(mut self, overrides: Settings) -> Settings {
        self.values.extend(overrides.values);
        self
    }
}

/// Typed reads from [`Settings`] that collect every problem.
struct Reader<'a> {
    settings: &'a Settings,
    known: &'static [&'static str],
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(settings: &'a Settings, known: &'static [&'static str]) -> Self {
        Reader {
            settings,
            known,
            errors: Vec::new(),
        }
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        debug_assert!(self.known.contains(&key), "undeclared key {key}");
        self.settings.values.get(key).map(String::as_str)
    }

    fn parse<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => default,
            Some(v) => match v.parse() {
                Ok(x) => x,
                Err(e) => {
                    self.errors.push(format!("{key}: cannot parse `{v}`: {e}"));
                    default
                }
            },
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Vec<T>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => default,
            Some(v) => {
                let mut out = Vec::new();
                for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    match part.parse() {
                        Ok(x) => out.push(x),
                        Err(e) => {
                            self.errors.push(format!("{key}: cannot parse `{part}`: {e}"));
                            return default;
                        }
                    }
                }
                if out.is_empty() {
                    self.errors.push(format!("{key}: empty list"));
                    return default;
                }
                out
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        self.raw(key).map(String::from)
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.errors.push(msg());
        }
    }

    fn finish(mut self) -> Result<(), CliError> {
        for key in self.settings.values.keys() {
            if !self.known.contains(&key.as_str()) {
                self.errors.push(format!("unknown key `{key}`"));
            }
        }
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(self.errors))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lgr,
    Lwr,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lgr" => Ok(Method::Lgr),
            "lwr" => Ok(Method::Lwr),
            _ => Err("expected `lgr` or `lwr`".into()),
        }
    }
}

impl Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Lgr => "lgr",
            Method::Lwr => "lwr",
        })
    }
}

/// Fitting options shared by `train` and `benchmark`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOptions {
    pub w_gen: f64,
    pub lambda_init: Vec<f64>,
    pub learn_lengthscales: bool,
    pub lengthscales_in_pass: bool,
    pub learning_rate: f64,
    pub iters: usize,
    pub prune_threshold: f64,
    pub elbo_tol: f64,
    pub sweep_every: usize,
    pub beta_f_ratio: f64,
    pub ridge: f64,
    pub seed: u64,
    pub deterministic: bool,
}

const FIT_KEYS: &[&str] = &[
    "w-gen",
    "lambda-init",
    "learn-lengthscales",
    "lengthscales-in-pass",
    "learning-rate",
    "iters",
    "prune-threshold",
    "elbo-tol",
    "sweep-every",
    "beta-f-ratio",
    "ridge",
    "seed",
    "deterministic",
];

impl FitOptions {
    fn read(r: &mut Reader<'_>) -> FitOptions {
        let d = FitConfig::default();
        let o = FitOptions {
            w_gen: r.parse("w-gen", d.w_gen),
            lambda_init: r.list("lambda-init", d.lambda_init.clone()),
            learn_lengthscales: r.parse("learn-lengthscales", d.learn_lengthscales),
            lengthscales_in_pass: r.parse("lengthscales-in-pass", d.lengthscales_in_pass),
            learning_rate: r.parse("learning-rate", d.learning_rate),
            iters: r.parse("iters", d.convergence_iters),
            prune_threshold: r.parse("prune-threshold", d.prune_threshold),
            elbo_tol: r.parse("elbo-tol", d.elbo_tol),
            sweep_every: r.parse("sweep-every", d.sweep_every),
            beta_f_ratio: r.parse("beta-f-ratio", d.beta_f_ratio),
            ridge: r.parse("ridge", lgr_core::lwr::DEFAULT_RIDGE),
            seed: r.parse("seed", d.seed),
            deterministic: r.parse("deterministic", d.deterministic),
        };
        // Key names in core messages follow the field names; map them back.
        for v in o.fit_config(o.w_gen).violations() {
            r.errors.push(v.replace('_', "-").replace("convergence-iters", "iters"));
        }
        r.check(o.ridge >= 0.0 && o.ridge.is_finite(), || {
            format!("ridge must be non-negative and finite, got {}", o.ridge)
        });
        o
    }

    pub fn fit_config(&self, w_gen: f64) -> FitConfig {
        FitConfig {
            w_gen,
            prune_threshold: self.prune_threshold,
            lambda_init: self.lambda_init.clone(),
            learning_rate: self.learning_rate,
            convergence_iters: self.iters,
            elbo_tol: self.elbo_tol,
            learn_lengthscales: self.learn_lengthscales,
            lengthscales_in_pass: self.lengthscales_in_pass,
            sweep_every: self.sweep_every,
            beta_f_ratio: self.beta_f_ratio,
            seed: self.seed,
            deterministic: self.deterministic,
            ..FitConfig::default()
        }
    }
}

/// Resolved configuration of `train`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub method: Method,
    pub dataset: PathBuf,
    pub test: Option<PathBuf>,
    pub target_column: String,
    pub select_columns: Option<String>,
    pub w_gen_sweep: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    #[serde(flatten)]
    pub fit: FitOptions,
}

const TRAIN_KEYS: &[&str] = &[
    "method",
    "dataset",
    "test",
    "target-column",
    "select-columns",
    "w-gen-sweep",
    "out",
    "report",
    "w-gen",
    "lambda-init",
    "learn-lengthscales",
    "lengthscales-in-pass",
    "learning-rate",
    "iters",
    "prune-threshold",
    "elbo-tol",
    "sweep-every",
    "beta-f-ratio",
    "ridge",
    "seed",
    "deterministic",
];

fn check_w_gen_list(r: &mut Reader<'_>, key: &str, list: &[f64]) {
    for w in list {
        r.check(*w > 0.0 && *w <= 1.0, || format!("{key}: w_gen must be in (0, 1], got {w}"));
    }
}

impl TrainConfig {
    pub fn resolve(settings: &Settings) -> Result<Self, CliError> {
        debug_assert!(FIT_KEYS.iter().all(|k| TRAIN_KEYS.contains(k)));
        let mut r = Reader::new(settings, TRAIN_KEYS);
        let method = r.parse("method", Method::Lgr);
        let dataset = r.string("dataset");
        r.check(dataset.is_some(), || "dataset: required".into());
        let w_gen_sweep = r.raw("w-gen-sweep").map(|_| r.list("w-gen-sweep", Vec::new()));
        if let Some(list) = &w_gen_sweep {
            check_w_gen_list(&mut r, "w-gen-sweep", list);
        }
        let cfg = TrainConfig {
            method,
            dataset: dataset.map(PathBuf::from).unwrap_or_default(),
            test: r.string("test").map(PathBuf::from),
            target_column: r.string("target-column").unwrap_or_else(|| "y".into()),
            select_columns: r.string("select-columns"),
            w_gen_sweep,
            out: r.string("out").map(PathBuf::from),
            report: r.string("report").map(PathBuf::from),
            fit: FitOptions::read(&mut r),
        };
        r.finish()?;
        Ok(cfg)
    }
}

/// Resolved configuration of `benchmark`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub w_gen_sweep: Vec<f64>,
    pub n_train: usize,
    pub noise: f64,
    pub grid_edge: usize,
    pub workers: usize,
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub fit: FitOptions,
}

const BENCH_KEYS: &[&str] = &[
    "methods",
    "seeds",
    "w-gen-sweep",
    "n-train",
    "noise",
    "grid-edge",
    "workers",
    "out",
    "w-gen",
    "lambda-init",
    "learn-lengthscales",
    "lengthscales-in-pass",
    "learning-rate",
    "iters",
    "prune-threshold",
    "elbo-tol",
    "sweep-every",
    "beta-f-ratio",
    "ridge",
    "seed",
    "deterministic",
];

pub const DEFAULT_W_GEN_SWEEP: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

impl BenchConfig {
    pub fn resolve(settings: &Settings) -> Result<Self, CliError> {
        let mut r = Reader::new(settings, BENCH_KEYS);
        let cfg = BenchConfig {
            methods: r.list("methods", vec![Method::Lgr, Method::Lwr]),
            seeds: r.list("seeds", vec![1, 2, 3, 4, 5]),
            w_gen_sweep: r.list("w-gen-sweep", DEFAULT_W_GEN_SWEEP.to_vec()),
            n_train: r.parse("n-train", 2000),
            noise: r.parse("noise", 0.2),
            grid_edge: r.parse("grid-edge", 41),
            workers: r.parse("workers", 1),
            out: r.string("out").map(PathBuf::from),
            fit: FitOptions::read(&mut r),
        };
        let sweep = cfg.w_gen_sweep.clone();
        check_w_gen_list(&mut r, "w-gen-sweep", &sweep);
        r.check(cfg.n_train >= 1, || "n-train must be at least 1".into());
        r.check(cfg.noise >= 0.0 && cfg.noise.is_finite(), || {
            format!("noise must be non-negative, got {}", cfg.noise)
        });
        r.check(cfg.grid_edge >= 2, || "grid-edge must be at least 2".into());
        r.check(cfg.workers >= 1, || "workers must be at least 1".into());
        r.finish()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        let mut s = Settings::new();
        for (k, v) in pairs {
            s.set(k, *v);
        }
        s
    }

    #[test]
    fn defaults_resolve() {
        let c = TrainConfig::resolve(&settings(&[("dataset", "d.csv")])).unwrap();
        assert_eq!(c.method, Method::Lgr);
        assert_eq!(c.fit.lambda_init, vec![0.3]);
        assert_eq!(c.fit.iters, 1000);
        assert_eq!(c.fit.prune_threshold, 1e3);
        assert_eq!(c.target_column, "y");
    }

    #[test]
    fn every_violation_is_listed() {
        let s = settings(&[("w_gen", "1.5"), ("iters", "ten"), ("bogus", "1"), ("prune-threshold", "-1")]);
        match TrainConfig::resolve(&s) {
            Err(CliError::Config(v)) => {
                let text = v.join("\n");
                for needle in ["dataset", "iters", "bogus", "w-gen", "prune-threshold"] {
                    assert!(text.contains(needle), "missing {needle} in {text}");
                }
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn flags_override_file() {
        let file = Settings::parse_file_text("w-gen = 0.4\n# comment\nseed=7\n").unwrap();
        let merged = file.merged(settings(&[("w-gen", "0.9"), ("dataset", "x")]));
        let c = TrainConfig::resolve(&merged).unwrap();
        assert_eq!(c.fit.w_gen, 0.9);
        assert_eq!(c.fit.seed, 7);
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(Settings::parse_file_text("w-gen 0.4").is_err());
        assert!(Settings::parse_file_text("a=1\na=2").is_err());
    }
}
