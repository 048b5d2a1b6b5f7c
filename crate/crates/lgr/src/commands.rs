//! The `gen-data`, `train`, `predict` and `benchmark` commands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use lgr_core::lwr::{lwr_fit, lwr_place_centers};
use lgr_core::{fit, mse, nmse, Dataset, FitReport, LengthScales};
use serde::Serialize;

use crate::config::{BenchConfig, FitOptions, Method, TrainConfig};
use crate::data::{self, ColumnSelection};
use crate::error::CliError;
use crate::format::{self, AnyModel};

/// Generators available to `gen-data`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Sine,
    Cross2d,
    Cross2dGrid,
    Arm21,
}

impl std::str::FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sine" => Ok(Generator::Sine),
            "cross2d" => Ok(Generator::Cross2d),
            "cross2d-grid" => Ok(Generator::Cross2dGrid),
            "arm21" => Ok(Generator::Arm21),
            _ => Err(format!("unknown generator `{s}` (sine, cross2d, cross2d-grid, arm21)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenDataArgs {
    pub generator: Generator,
    pub n: usize,
    pub noise: f64,
    pub seed: u64,
    pub edge: usize,
    pub out: PathBuf,
}

/// Generated dataset and its input column names.
pub fn generate(args: &GenDataArgs) -> Result<(Dataset, Vec<String>), CliError> {
    let d = match args.generator {
        Generator::Sine => data::gen_sine(args.n, args.noise, args.seed)?,
        Generator::Cross2d => data::gen_cross2d(args.n, args.noise, args.seed)?,
        Generator::Cross2dGrid => data::cross2d_grid(args.edge)?,
        Generator::Arm21 => data::gen_arm21(args.n, args.noise, args.seed)?,
    };
    let names = match args.generator {
        Generator::Arm21 => arm_column_names(),
        _ => data::default_input_names(d.dim()),
    };
    Ok((d, names))
}

/// `q1…q7, qd1…qd7, qdd1…qdd7`.
pub fn arm_column_names() -> Vec<String> {
    let j = data::ARM_JOINTS;
    ["q", "qd", "qdd"]
        .iter()
        .flat_map(|p| (1..=j).map(move |i| format!("{p}{i}")))
        .collect()
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let (d, names) = generate(args)?;
    data::save_csv(&args.out, &d, &names)?;
    log::info!("wrote {} rows to {}", d.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    /// `null` when the targets have zero variance.
    pub nmse: Option<f64>,
}

impl Metrics {
    pub fn of(pred: &[f64], targets: &[f64]) -> Result<Self, CliError> {
        Ok(Metrics {
            mse: mse(pred, targets)?,
            nmse: nmse(pred, targets).ok(),
        })
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FitSummary {
    pub sweeps_run: usize,
    pub converged: bool,
    pub elbo_first: f64,
    pub elbo_last: f64,
    pub elbo_max: f64,
    pub models_added: usize,
    pub models_pruned: usize,
    pub max_models: usize,
}

impl FitSummary {
    fn of(r: &FitReport) -> Self {
        FitSummary {
            sweeps_run: r.sweeps_run,
            converged: r.converged,
            elbo_first: r.elbo_trace.first().copied().unwrap_or(f64::NAN),
            elbo_last: r.elbo_trace.last().copied().unwrap_or(f64::NAN),
            elbo_max: r.elbo_trace.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            models_added: r.added_trace.iter().sum(),
            models_pruned: r.pruned_trace.iter().sum(),
            max_models: r.model_count_trace.iter().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Timings {
    pub fit_seconds: f64,
    pub predict_seconds: f64,
}

/// The JSON report of one training run.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TrainReport {
    pub method: Method,
    pub w_gen: f64,
    pub n_train: usize,
    pub dim: usize,
    pub input_columns: Vec<String>,
    pub n_models: usize,
    pub train: Metrics,
    /// Against the clean targets of the test file when it has them.
    pub test: Option<Metrics>,
    pub fit: Option<FitSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
    pub config: TrainConfig,
}

/// Fits one model with the given options.
pub fn fit_method(
    method: Method,
    train: &Dataset,
    opts: &FitOptions,
    w_gen: f64,
) -> Result<(AnyModel, Option<FitReport>), CliError> {
    match method {
        Method::Lgr => {
            let (m, r) = fit(train, &opts.fit_config(w_gen))?;
            Ok((AnyModel::Lgr(m), Some(r)))
        }
        Method::Lwr => {
            let scales = if opts.lambda_init.len() == 1 {
                LengthScales::uniform(train.dim(), opts.lambda_init[0])?
            } else {
                LengthScales::from_lambda(&opts.lambda_init)?
            };
            let centers = lwr_place_centers(train.view(), &scales, w_gen)?;
            Ok((AnyModel::Lwr(lwr_fit(train.view(), centers, scales, opts.ridge)?), None))
        }
    }
}

fn selection(spec: &Option<String>) -> ColumnSelection {
    spec.as_deref().map(ColumnSelection::parse).unwrap_or_default()
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}{ext}"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Trains per the config; with a w_gen sweep, one report per value.
pub fn cmd_train(cfg: &TrainConfig) -> Result<Vec<TrainReport>, CliError> {
    let select = selection(&cfg.select_columns);
    let train = data::load_csv(&cfg.dataset, &cfg.target_column, &select)?;
    let test = match &cfg.test {
        Some(p) => Some(data::load_csv(p, &cfg.target_column, &select)?),
        None => None,
    };
    if let Some(t) = &test {
        if t.input_columns != train.input_columns {
            return Err(CliError::Usage(format!(
                "test columns {:?} differ from training columns {:?}",
                t.input_columns, train.input_columns
            )));
        }
    }
    let sweep = cfg.w_gen_sweep.clone();
    let values = sweep.clone().unwrap_or_else(|| vec![cfg.fit.w_gen]);
    let mut reports = Vec::with_capacity(values.len());
    for &w in &values {
        log::info!("training {} with w_gen = {w} on {} rows", cfg.method, train.data.len());
        let t0 = Instant::now();
        let (model, fit_report) = fit_method(cfg.method, &train.data, &cfg.fit, w)?;
        let fit_seconds = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let (train_pred, _) = model.predict_batch(train.data.inputs())?;
        let test_metrics = match &test {
            Some(t) => {
                let (p, _) = model.predict_batch(t.data.inputs())?;
                Some(Metrics::of(&p, t.data.reference_targets())?)
            }
            None => None,
        };
        let predict_seconds = t1.elapsed().as_secs_f64();
        let report = TrainReport {
            method: cfg.method,
            w_gen: w,
            n_train: train.data.len(),
            dim: train.data.dim(),
            input_columns: train.input_columns.clone(),
            n_models: model.n_models(),
            train: Metrics::of(&train_pred, train.data.targets())?,
            test: test_metrics,
            fit: fit_report.as_ref().map(FitSummary::of),
            timings: (!cfg.fit.deterministic).then_some(Timings {
                fit_seconds,
                predict_seconds,
            }),
            config: cfg.clone(),
        };
        let tag = format!(".wgen-{w}");
        if let Some(out) = &cfg.out {
            let path = if sweep.is_some() { with_suffix(out, &tag) } else { out.clone() };
            format::save_model(&path, &model)?;
        }
        if let Some(rep) = &cfg.report {
            let path = if sweep.is_some() { with_suffix(rep, &tag) } else { rep.clone() };
            write_json(&path, &report)?;
        }
        reports.push(report);
    }
    if let (Some(_), Some(rep)) = (&sweep, &cfg.report) {
        let path = with_suffix(rep, ".sweep").with_extension("csv");
        write_sweep_table(&path, &reports)?;
    }
    Ok(reports)
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_sweep_table(path: &Path, reports: &[TrainReport]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Parse(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["w_gen", "n_models", "train_mse", "train_nmse", "test_mse", "test_nmse"])
        .map_err(io)?;
    for r in reports {
        w.write_record([
            r.w_gen.to_string(),
            r.n_models.to_string(),
            r.train.mse.to_string(),
            opt_num(r.train.nmse),
            opt_num(r.test.as_ref().map(|t| t.mse)),
            opt_num(r.test.as_ref().and_then(|t| t.nmse)),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct PredictArgs {
    pub model: PathBuf,
    pub input: PathBuf,
    /// Excluded from the inputs if present, with its clean companion.
    pub target_column: String,
    pub select_columns: Option<String>,
    pub out: Option<PathBuf>,
}

/// Writes `inputs…, mean[, variance]` rows, to a file or standard output.
pub fn cmd_predict(args: &PredictArgs) -> Result<usize, CliError> {
    let model = format::load_model(&args.model)?;
    let select = selection(&args.select_columns);
    let text = fs::read_to_string(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let has_target = text
        .lines()
        .next()
        .map(|h| h.split(',').any(|c| c.trim() == args.target_column))
        .unwrap_or(false);
    let source = args.input.display().to_string();
    let loaded = if has_target {
        data::read_csv(text.as_bytes(), &source, &args.target_column, &select)?
    } else {
        // No target column: every selected column is an input.
        let with_dummy = add_dummy_target(&text);
        data::read_csv(with_dummy.as_bytes(), &source, DUMMY_TARGET, &select)?
    };
    if loaded.data.dim() != model.dim() {
        return Err(CliError::Model(lgr_core::LgrError::DimensionMismatch {
            context: "input columns vs model dimension",
            expected: model.dim(),
            found: loaded.data.dim(),
        }));
    }
    let (mean, var) = model.predict_batch(loaded.data.inputs())?;
    let mut header = loaded.input_columns.clone();
    header.push("mean".into());
    if var.is_some() {
        header.push("variance".into());
    }
    let sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(std::io::BufWriter::new(
            fs::File::create(p).map_err(|e| CliError::io(p, e))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    let out_path = args.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let io = |e: csv::Error| CliError::Parse(format!("{}: {e}", out_path.display()));
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(&header).map_err(io)?;
    for n in 0..loaded.data.len() {
        let mut rec: Vec<String> = loaded.data.input(n).iter().map(f64::to_string).collect();
        rec.push(mean[n].to_string());
        if let Some(v) = &var {
            rec.push(v[n].to_string());
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(&out_path, e))?;
    Ok(loaded.data.len())
}

const DUMMY_TARGET: &str = "\u{0}target";

fn add_dummy_target(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 8 * text.lines().count());
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push_str(line);
        out.push(',');
        out.push_str(if i == 0 { DUMMY_TARGET } else { "0" });
        out.push('\n');
    }
    out
}

/// One `(method, seed, w_gen)` cell of a benchmark.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchCell {
    pub method: Method,
    pub seed: u64,
    pub w_gen: f64,
    pub nmse: f64,
    pub n_models: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_seconds: Option<f64>,
}

/// Across-seed statistics of one method at one w_gen.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchPoint {
    pub method: Method,
    pub w_gen: f64,
    pub nmse_mean: f64,
    pub nmse_std: f64,
    pub n_models_mean: f64,
}

/// One table row: a method at its best w_gen.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub best_nmse_mean: f64,
    pub best_nmse_std: f64,
    pub opt_w_gen: f64,
    pub n_models_mean: f64,
    pub worst_nmse_mean: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchResult {
    pub table: Vec<BenchRow>,
    pub by_w_gen: Vec<BenchPoint>,
    pub cells: Vec<BenchCell>,
    pub config: BenchConfig,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs every `(method, seed, w_gen)` cell of the cross-function protocol.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchResult, CliError> {
    let grid = data::cross2d_grid(cfg.grid_edge)?;
    let trains = cfg
        .seeds
        .iter()
        .map(|&s| data::gen_cross2d(cfg.n_train, cfg.noise, s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut jobs = Vec::new();
    for &method in &cfg.methods {
        for (si, &seed) in cfg.seeds.iter().enumerate() {
            for &w in &cfg.w_gen_sweep {
                jobs.push((method, si, seed, w));
            }
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<BenchCell, CliError>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let run = |&(method, si, seed, w): &(Method, usize, u64, f64)| -> Result<BenchCell, CliError> {
        let mut opts = cfg.fit.clone();
        opts.seed = seed;
        let t0 = Instant::now();
        let (model, _) = fit_method(method, &trains[si], &opts, w)?;
        let secs = t0.elapsed().as_secs_f64();
        let (pred, _) = model.predict_batch(grid.inputs())?;
        let e = nmse(&pred, grid.reference_targets())?;
        log::info!("{method} seed {seed} w_gen {w}: nmse {e:.5}, {} models", model.n_models());
        Ok(BenchCell {
            method,
            seed,
            w_gen: w,
            nmse: e,
            n_models: model.n_models(),
            fit_seconds: (!cfg.fit.deterministic).then_some(secs),
        })
    };
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.min(jobs.len()).max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = run(&jobs[i]);
                results.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    let cells = results
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>, _>>()?;

    let mut by_w_gen = Vec::new();
    let mut table = Vec::new();
    for &method in &cfg.methods {
        let mut points: Vec<(BenchPoint, Vec<f64>)> = Vec::new();
        for &w in &cfg.w_gen_sweep {
            let sel: Vec<&BenchCell> = cells.iter().filter(|c| c.method == method && c.w_gen == w).collect();
            let errs: Vec<f64> = sel.iter().map(|c| c.nmse).collect();
            let (m, s) = mean_std(&errs);
            let models = sel.iter().map(|c| c.n_models as f64).sum::<f64>() / sel.len() as f64;
            points.push((
                BenchPoint {
                    method,
                    w_gen: w,
                    nmse_mean: m,
                    nmse_std: s,
                    n_models_mean: models,
                },
                errs,
            ));
        }
        let best = points
            .iter()
            .min_by(|a, b| a.0.nmse_mean.total_cmp(&b.0.nmse_mean))
            .expect("non-empty sweep");
        let worst = points
            .iter()
            .map(|p| p.0.nmse_mean)
            .fold(f64::NEG_INFINITY, f64::max);
        table.push(BenchRow {
            method,
            best_nmse_mean: best.0.nmse_mean,
            best_nmse_std: best.0.nmse_std,
            opt_w_gen: best.0.w_gen,
            n_models_mean: best.0.n_models_mean,
            worst_nmse_mean: worst,
        });
        by_w_gen.extend(points.into_iter().map(|p| p.0));
    }
    Ok(BenchResult {
        table,
        by_w_gen,
        cells,
        config: cfg.clone(),
    })
}

/// The table as CSV text.
pub fn table_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "best_nmse_mean", "best_nmse_std", "opt_w_gen", "n_models_mean", "worst_nmse_mean"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.best_nmse_mean.to_string(),
            r.best_nmse_std.to_string(),
            r.opt_w_gen.to_string(),
            r.n_models_mean.to_string(),
            r.worst_nmse_mean.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
}

/// Runs the benchmark and writes `benchmark.json` and `benchmark.csv` into
/// the output directory, if any. Returns the CSV table.
pub fn cmd_benchmark(cfg: &BenchConfig) -> Result<(BenchResult, String), CliError> {
    let result = run_benchmark(cfg)?;
    let csv_text = table_csv(&result.table);
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_json(&dir.join("benchmark.json"), &result)?;
        let p = dir.join("benchmark.csv");
        fs::write(&p, &csv_text).map_err(|e| CliError::io(&p, e))?;
    }
    Ok((result, csv_text))
}
