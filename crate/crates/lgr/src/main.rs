use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lgr::commands::{self, GenDataArgs, Generator, PredictArgs};
use lgr::config::{BenchConfig, Settings, TrainConfig};
use lgr::CliError;

/// Local Gaussian regression: generate data, train, predict, benchmark.
///
/// Exit codes: 0 success, 2 usage, 3 invalid configuration, 4 file access,
/// 5 malformed CSV, 6 malformed model file, 7 numerical or model error.
#[derive(Parser)]
#[command(name = "lgr", version)]
struct Cli {
    /// More log output on standard error (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    GenData(GenArgs),
    /// Train a model on a CSV dataset.
    Train(TrainArgs),
    /// Predict with a saved model.
    Predict(PredictCli),
    /// Run the cross-function benchmark.
    Benchmark(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// sine, cross2d, cross2d-grid or arm21.
    #[arg(long)]
    kind: Generator,
    #[arg(long, short = 'n', default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Grid points per side for cross2d-grid.
    #[arg(long, default_value_t = 41)]
    edge: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Options shared by train and benchmark. All values are kept as text and
/// validated together with the config file.
#[derive(Args)]
struct FitArgs {
    /// Flat `key = value` file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    w_gen: Option<String>,
    /// One value, or one per input dimension, comma-separated.
    #[arg(long)]
    lambda_init: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    learn_lengthscales: Option<String>,
    /// Also learn length-scales during the data pass, not only after it.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    lengthscales_in_pass: Option<String>,
    /// Length-scale step size per unit of localizer mass.
    #[arg(long)]
    learning_rate: Option<String>,
    /// Sweeps after the data pass.
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    prune_threshold: Option<String>,
    #[arg(long)]
    elbo_tol: Option<String>,
    /// Sweep after every this many new data during the data pass.
    #[arg(long)]
    sweep_every: Option<String>,
    /// New models start with latent precision `beta_f_ratio` times the
    /// observation precision.
    #[arg(long)]
    beta_f_ratio: Option<String>,
    /// Ridge of the LWR baseline.
    #[arg(long)]
    ridge: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Omit timings so repeated runs give identical reports.
    #[arg(long)]
    deterministic: bool,
}

impl FitArgs {
    fn settings(&self) -> Result<Settings, CliError> {
        let mut s = Settings::new();
        s.set_opt("w-gen", self.w_gen.clone());
        s.set_opt("lambda-init", self.lambda_init.clone());
        s.set_opt("learn-lengthscales", self.learn_lengthscales.clone());
        s.set_opt("lengthscales-in-pass", self.lengthscales_in_pass.clone());
        s.set_opt("learning-rate", self.learning_rate.clone());
        s.set_opt("iters", self.iters.clone());
        s.set_opt("prune-threshold", self.prune_threshold.clone());
        s.set_opt("elbo-tol", self.elbo_tol.clone());
        s.set_opt("sweep-every", self.sweep_every.clone());
        s.set_opt("beta-f-ratio", self.beta_f_ratio.clone());
        s.set_opt("ridge", self.ridge.clone());
        s.set_opt("seed", self.seed.clone());
        if self.deterministic {
            s.set("deterministic", "true");
        }
        let base = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::new(),
        };
        Ok(base.merged(s))
    }
}

#[derive(Args)]
struct TrainArgs {
    /// lgr or lwr.
    #[arg(long)]
    method: Option<String>,
    /// Training CSV.
    #[arg(long)]
    dataset: Option<String>,
    /// Optional test CSV; scored against its clean targets when present.
    #[arg(long)]
    test: Option<String>,
    #[arg(long)]
    target_column: Option<String>,
    /// Comma-separated wildcard patterns selecting input columns.
    #[arg(long)]
    select_columns: Option<String>,
    /// Comma-separated w_gen values; one model and report per value.
    #[arg(long)]
    w_gen_sweep: Option<String>,
    /// Model file (JSON).
    #[arg(long)]
    out: Option<String>,
    /// Report file (JSON).
    #[arg(long)]
    report: Option<String>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct PredictCli {
    #[arg(long)]
    model: PathBuf,
    /// Input CSV; a target column, if present, is ignored.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "y")]
    target_column: String,
    #[arg(long)]
    select_columns: Option<String>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated methods.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    w_gen_sweep: Option<String>,
    #[arg(long)]
    n_train: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    grid_edge: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// Directory for benchmark.json and benchmark.csv.
    #[arg(long)]
    out: Option<String>,
    #[command(flatten)]
    fit: FitArgs,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(a) => commands::cmd_gen_data(&GenDataArgs {
            generator: a.kind,
            n: a.n,
            noise: a.noise,
            seed: a.seed,
            edge: a.edge,
            out: a.out,
        }),
        Command::Train(a) => {
            let mut s = Settings::new();
            s.set_opt("method", a.method);
            s.set_opt("dataset", a.dataset);
            s.set_opt("test", a.test);
            s.set_opt("target-column", a.target_column);
            s.set_opt("select-columns", a.select_columns);
            s.set_opt("w-gen-sweep", a.w_gen_sweep);
            s.set_opt("out", a.out);
            s.set_opt("report", a.report);
            let cfg = TrainConfig::resolve(&a.fit.settings()?.merged(s))?;
            let reports = commands::cmd_train(&cfg)?;
            if cfg.report.is_none() {
                let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
                println!("{text}");
            }
            Ok(())
        }
        Command::Predict(a) => {
            let rows = commands::cmd_predict(&PredictArgs {
                model: a.model,
                input: a.input,
                target_column: a.target_column,
                select_columns: a.select_columns,
                out: a.out,
            })?;
            log::info!("predicted {rows} rows");
            Ok(())
        }
        Command::Benchmark(a) => {
            let mut s = Settings::new();
            s.set_opt("methods", a.methods);
            s.set_opt("seeds", a.seeds);
            s.set_opt("w-gen-sweep", a.w_gen_sweep);
            s.set_opt("n-train", a.n_train);
            s.set_opt("noise", a.noise);
            s.set_opt("grid-edge", a.grid_edge);
            s.set_opt("workers", a.workers);
            s.set_opt("out", a.out);
            let cfg = BenchConfig::resolve(&a.fit.settings()?.merged(s))?;
            let (_, table) = commands::cmd_benchmark(&cfg)?;
            print!("{table}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
