//! Synthetic generators, CSV ingestion and splits.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use lgr_core::Dataset;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wildmatch::WildMatch;

use crate::error::CliError;

/// Suffix of the column holding noise-free targets next to a target column.
pub const CLEAN_SUFFIX: &str = "_clean";

fn noise(noise_sd: f64) -> Result<Normal<f64>, CliError> {
    let bad = || CliError::Usage(format!("noise_sd must be non-negative and finite, got {noise_sd}"));
    if !(noise_sd >= 0.0) {
        return Err(bad());
    }
    Normal::new(0.0, noise_sd).map_err(|_| bad())
}

fn check_n(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("number of samples must be at least 1".into()));
    }
    Ok(())
}

fn build(inputs: Vec<f64>, dim: usize, y: Vec<f64>, clean: Vec<f64>) -> Dataset {
    Dataset::with_clean(inputs, dim, y, Some(clean)).expect("generators produce finite, well-shaped data")
}

/// `x` uniform on `[0, 2π]`, `y = sin(x) + ε`.
pub fn gen_sine(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset, CliError> {
    check_n(n)?;
    let eps = noise(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random_range(0.0..=2.0 * PI);
        let c = x.sin();
        xs.push(x);
        clean.push(c);
        y.push(c + eps.sample(&mut rng));
    }
    Ok(build(xs, 1, y, clean))
}

/// The cross function: the largest of two axis-aligned ridges and a
/// central bump.
pub fn cross_function(x1: f64, x2: f64) -> f64 {
    let a = (-10.0 * x1 * x1).exp();
    let b = (-50.0 * x2 * x2).exp();
    let c = 1.25 * (-5.0 * (x1 * x1 + x2 * x2)).exp();
    a.max(b).max(c)
}

/// Inputs uniform on `[-1, 1]²`, targets the cross function plus noise.
pub fn gen_cross2d(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset, CliError> {
    check_n(n)?;
    let eps = noise(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.random_range(-1.0..=1.0);
        let b = rng.random_range(-1.0..=1.0);
        let c = cross_function(a, b);
        xs.push(a);
        xs.push(b);
        clean.push(c);
        y.push(c + eps.sample(&mut rng));
    }
    Ok(build(xs, 2, y, clean))
}

/// Noise-free cross function on an `edge × edge` regular grid over
/// `[-1, 1]²`, row-major in the first coordinate.
pub fn cross2d_grid(edge: usize) -> Result<Dataset, CliError> {
    if edge < 2 {
        return Err(CliError::Usage("grid edge must be at least 2".into()));
    }
    let step = 2.0 / (edge - 1) as f64;
    let mut xs = Vec::with_capacity(2 * edge * edge);
    let mut y = Vec::with_capacity(edge * edge);
    for i in 0..edge {
        for j in 0..edge {
            let a = -1.0 + step * i as f64;
            let b = -1.0 + step * j as f64;
            xs.push(a);
            xs.push(b);
            y.push(cross_function(a, b));
        }
    }
    Ok(build(xs, 2, y.clone(), y))
}

/// Number of joints of the synthetic arm; inputs are positions,
/// velocities and accelerations.
pub const ARM_JOINTS: usize = 7;
const ARM_PERIOD: f64 = 20.0;
const ARM_ROWS_PER_PERIOD: usize = 2000;

/// Smooth periodic arm-like trajectory: `3·7 = 21` inputs and one
/// torque-like target. Joint frequencies are harmonics of one base period,
/// so the motion repeats the way recorded robot demonstrations do.
pub fn gen_arm21(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset, CliError> {
    check_n(n)?;
    let eps = noise(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = ARM_JOINTS;
    let amp: Vec<f64> = (0..j).map(|_| rng.random_range(0.3..0.8)).collect();
    let base = 2.0 * PI / ARM_PERIOD;
    let freq: Vec<f64> = (0..j).map(|k| base * (1 + k % 3) as f64).collect();
    let phase: Vec<f64> = (0..j).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let dt = ARM_PERIOD / ARM_ROWS_PER_PERIOD as f64;
    let d = 3 * j;
    let mut xs = Vec::with_capacity(d * n);
    let mut y = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    let mut row = vec![0.0; d];
    for i in 0..n {
        let t = i as f64 * dt;
        for k in 0..j {
            let w = freq[k];
            let arg = w * t + phase[k];
            row[k] = amp[k] * arg.sin();
            row[j + k] = amp[k] * w * arg.cos();
            row[2 * j + k] = -amp[k] * w * w * arg.sin();
        }
        let c = arm_torque(&row);
        xs.extend_from_slice(&row);
        clean.push(c);
        y.push(c + eps.sample(&mut rng));
    }
    Ok(build(xs, d, y, clean))
}

/// Torque-like target of the first joint: inertial, Coriolis-like and
/// gravity-like terms.
fn arm_torque(row: &[f64]) -> f64 {
    let j = ARM_JOINTS;
    let (q, rest) = row.split_at(j);
    let (qd, qdd) = rest.split_at(j);
    let inertia = 1.0 + 0.3 * q[1].cos() + 0.1 * q[2].cos();
    let coriolis = -0.3 * q[1].sin() * qd[0] * qd[1] - 0.1 * q[2].sin() * qd[1] * qd[2];
    let gravity = 2.0 * q[0].sin() + 0.5 * (q[0] + q[1]).sin();
    let coupling: f64 = (3..j).map(|k| 0.05 * qdd[k] * q[k].cos()).sum();
    inertia * qdd[0] + coriolis + gravity + coupling
}

/// Seeded shuffle, then the first `fraction` of rows form the first part.
pub fn train_test_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), CliError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Usage(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let mut rows: Vec<usize> = (0..data.len()).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (fraction * data.len() as f64).round() as usize;
    let (a, b) = rows.split_at(cut);
    Ok((data.select(a), data.select(b)))
}

/// Which columns become inputs.
#[derive(Debug, Clone, Default)]
pub struct ColumnSelection {
    patterns: Vec<String>,
}

impl ColumnSelection {
    /// Comma-separated wildcard patterns, e.g. `q*,qd*,qdd*`.
    pub fn parse(spec: &str) -> Self {
        ColumnSelection {
            patterns: spec
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(String::from)
                .collect(),
        }
    }

    pub fn all() -> Self {
        ColumnSelection::default()
    }

    fn matches(&self, name: &str) -> bool {
        self.patterns.is_empty() || self.patterns.iter().any(|p| WildMatch::new(p).matches(name))
    }
}

/// A dataset read from CSV, with the names of its input columns.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub data: Dataset,
    pub input_columns: Vec<String>,
}

/// Reads a headered CSV. The target column is required; a column named
/// `<target>_clean`, if present, supplies clean targets. Inputs are the
/// remaining columns accepted by `select`, in header order.
pub fn load_csv(path: &Path, target_column: &str, select: &ColumnSelection) -> Result<LoadedCsv, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(file, &path.display().to_string(), target_column, select)
}

pub fn read_csv(
    reader: impl std::io::Read,
    source: &str,
    target_column: &str,
    select: &ColumnSelection,
) -> Result<LoadedCsv, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let parse_err = |msg: String| CliError::Parse(format!("{source}: {msg}"));
    let headers = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(parse_err("empty file or missing header row".into()));
    }
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    let target = names
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| parse_err(format!("no target column `{target_column}`")))?;
    let clean_name = format!("{target_column}{CLEAN_SUFFIX}");
    let clean = names.iter().position(|h| *h == clean_name);
    let inputs: Vec<usize> = (0..names.len())
        .filter(|&i| i != target && Some(i) != clean && select.matches(&names[i]))
        .collect();
    if inputs.is_empty() {
        return Err(parse_err("no input columns selected".into()));
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut cs = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| parse_err(format!("line {line}: {e}")))?;
        if record.len() != names.len() {
            return Err(parse_err(format!(
                "line {line}: expected {} fields, found {}",
                names.len(),
                record.len()
            )));
        }
        let cell = |i: usize| -> Result<f64, CliError> {
            let raw = record[i].trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(format!(
                    "line {line}, column `{}`: `{raw}` is not a finite number",
                    names[i]
                ))),
            }
        };
        for &i in &inputs {
            xs.push(cell(i)?);
        }
        ys.push(cell(target)?);
        if let Some(c) = clean {
            cs.push(cell(c)?);
        }
    }
    if ys.is_empty() {
        return Err(parse_err("no data rows".into()));
    }
    let data = Dataset::with_clean(xs, inputs.len(), ys, clean.map(|_| cs))?;
    Ok(LoadedCsv {
        data,
        input_columns: inputs.into_iter().map(|i| names[i].clone()).collect(),
    })
}

/// Default input column names `x1 … xD`.
pub fn default_input_names(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).collect()
}

/// Writes inputs, the target column `y` and, when known, `y_clean`.
pub fn save_csv(path: &Path, data: &Dataset, input_names: &[String]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(BufWriter::new(file), data, input_names).map_err(|e| CliError::io(path, e))
}

pub fn write_csv(out: impl Write, data: &Dataset, input_names: &[String]) -> std::io::Result<()> {
    assert_eq!(input_names.len(), data.dim(), "one name per input column");
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = input_names.to_vec();
    header.push("y".into());
    if data.clean_targets().is_some() {
        header.push(format!("y{CLEAN_SUFFIX}"));
    }
    w.write_record(&header)?;
    // `Display` for f64 prints the shortest string that parses back exactly.
    for n in 0..data.len() {
        let mut rec: Vec<String> = data.input(n).iter().map(f64::to_string).collect();
        rec.push(data.targets()[n].to_string());
        if let Some(c) = data.clean_targets() {
            rec.push(c[n].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()
}
