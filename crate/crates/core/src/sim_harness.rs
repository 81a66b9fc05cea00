//! Monte-Carlo NMSE experiments: sweep one parameter, run both estimators
//! on independent realizations, aggregate, and write CSV.
//!
//! Trial `t` draws its channels from stream `3t` of a ChaCha8 generator keyed
//! by the master seed, and the noise of Scheme 1 and Scheme 2 from streams
//! `3t+1` and `3t+2`. Every sweep point therefore reuses the same random
//! numbers (common random numbers), and results do not depend on how trials
//! are spread over threads: per-trial terms are collected in trial order and
//! summed with compensation.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_model::{draw_scenario, ChannelRealization, ScenarioConfig};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, CMatrix, CompensatedSum};
use crate::overhead::{overhead, Scheme};
use crate::scheme1::{CascadedEstimate, Scheme1Plan};
use crate::scheme2::Scheme2Plan;

/// `Σ‖H_k − Ĥ_k‖²_F` and `Σ‖H_k‖²_F`.
pub fn nmse_terms(truth: &[CMatrix], estimate: &[CMatrix]) -> Result<(f64, f64)> {
    if truth.len() != estimate.len() {
        return Err(Error::Dimension(format!(
            "{} true channels but {} estimates",
            truth.len(),
            estimate.len()
        )));
    }
    let mut num = CompensatedSum::default();
    let mut den = CompensatedSum::default();
    for (h, e) in truth.iter().zip(estimate) {
        if h.shape() != e.shape() {
            return Err(Error::Dimension(format!("shape {:?} vs {:?}", h.shape(), e.shape())));
        }
        num.add(frobenius_sq(&(h - e)));
        den.add(frobenius_sq(h));
    }
    Ok((num.value(), den.value()))
}

/// Single-trial NMSE.
pub fn nmse(truth: &[CMatrix], estimate: &[CMatrix]) -> Result<f64> {
    let (num, den) = nmse_terms(truth, estimate)?;
    if !(den > 0.0) {
        return Err(Error::InvalidArgument("NMSE undefined for all-zero channels".into()));
    }
    Ok(num / den)
}

/// Ratio-of-means NMSE and its delta-method standard error.
///
/// The standard error is NaN with fewer than two samples.
pub fn aggregate_nmse(samples: &[(f64, f64)]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let num: CompensatedSum = samples.iter().map(|s| s.0).collect();
    let den: CompensatedSum = samples.iter().map(|s| s.1).collect();
    let ratio = num.value() / den.value();
    if n < 2 {
        return (ratio, f64::NAN);
    }
    let mean_den = den.value() / n as f64;
    let resid: CompensatedSum = samples.iter().map(|(x, y)| (x - ratio * y).powi(2)).collect();
    let stderr = (resid.value() / (n as f64 * (n - 1) as f64)).sqrt() / mean_den;
    (ratio, stderr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "p_dbm")]
    PDbm,
    #[serde(rename = "M", alias = "m")]
    BsAntennas,
    #[serde(rename = "N", alias = "n")]
    IrsElements,
    #[serde(rename = "K", alias = "k")]
    Users,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::PDbm => "p_dbm",
            SweepVariable::BsAntennas => "M",
            SweepVariable::IrsElements => "N",
            SweepVariable::Users => "K",
        }
    }

    /// Copy of `base` with this variable set to `value`.
    ///
    /// Sweeping `N` drops the planar-array shape, which only fixes `N`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} must be a positive integer, got {value}", self.name())))
            }
        };
        match self {
            SweepVariable::PDbm => {
                if !value.is_finite() {
                    return Err(Error::Config(format!("p_dbm must be finite, got {value}")));
                }
                cfg.p_dbm = value;
            }
            SweepVariable::BsAntennas => cfg.bs_antennas = count()?,
            SweepVariable::IrsElements => {
                cfg.irs_elements = count()?;
                cfg.irs_upa = None;
            }
            SweepVariable::Users => cfg.users = count()?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "p_dbm" | "p" => Ok(SweepVariable::PDbm),
            "M" | "m" => Ok(SweepVariable::BsAntennas),
            "N" | "n" => Ok(SweepVariable::IrsElements),
            "K" | "k" => Ok(SweepVariable::Users),
            other => Err(Error::InvalidArgument(format!("unknown sweep variable `{other}`"))),
        }
    }
}

fn default_trials() -> usize {
    1000
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Scheme1, Scheme::Scheme2]
}

fn default_noise() -> bool {
    true
}

/// One NMSE sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Set to false for noise-free runs.
    #[serde(default = "default_noise")]
    pub noise: bool,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep value list is empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        if let Some(s) = self.schemes.iter().find(|s| !s.is_estimator()) {
            return Err(Error::Config(format!("{s} has no estimator in this crate; only overhead is modelled")));
        }
        self.scenario.validate()?;
        for &v in &self.values {
            self.sweep.apply(&self.scenario, v)?;
        }
        Ok(())
    }
}

/// Several experiments in one file, as `[[experiments]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBatch {
    pub experiments: Vec<ExperimentSpec>,
}

impl ExperimentBatch {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let batch: Self = toml::from_str(text)?;
        if batch.experiments.is_empty() {
            return Err(Error::Config("no [[experiments]] entries".into()));
        }
        for e in &batch.experiments {
            e.validate()?;
        }
        Ok(batch)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// One CSV row: aggregate NMSE of one scheme at one sweep value.
/// Infeasible points carry NaN statistics and zero trials.
#[derive(Debug, Clone, Copy)]
pub struct NmseRow {
    pub scheme: Scheme,
    pub sweep_var: SweepVariable,
    pub sweep_value: f64,
    pub mean_nmse: f64,
    pub stderr: f64,
    pub trials: usize,
}

impl NmseRow {
    pub fn is_feasible(&self) -> bool {
        self.trials > 0
    }

    /// Symmetric confidence interval `mean ± z·stderr`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.mean_nmse - z * self.stderr, self.mean_nmse + z * self.stderr)
    }

    /// Bitwise equality, so NaN fields compare equal to themselves.
    pub fn same_as(&self, other: &NmseRow) -> bool {
        self.scheme == other.scheme
            && self.sweep_var == other.sweep_var
            && self.sweep_value.to_bits() == other.sweep_value.to_bits()
            && self.mean_nmse.to_bits() == other.mean_nmse.to_bits()
            && self.stderr.to_bits() == other.stderr.to_bits()
            && self.trials == other.trials
    }
}

#[derive(Debug, Clone)]
pub struct NmseReport {
    pub rows: Vec<NmseRow>,
    /// Wall time spent on each sweep value, in sweep order.
    pub wall_time: Vec<Duration>,
}

impl NmseReport {
    pub fn row(&self, scheme: Scheme, sweep_value: f64) -> Option<&NmseRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.sweep_value == sweep_value)
    }

    pub fn rows_for(&self, scheme: Scheme) -> Vec<NmseRow> {
        self.rows.iter().filter(|r| r.scheme == scheme).copied().collect()
    }
}

/// Generator for stream `stream` of the master seed.
pub fn trial_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Channel realization of trial `t`.
pub fn trial_realization(config: &ScenarioConfig, trial: u64) -> Result<ChannelRealization> {
    draw_scenario(config, &mut trial_rng(config.seed, 3 * trial))
}

/// An estimator prepared for one scenario.
#[derive(Debug, Clone)]
pub enum EstimatorPlan {
    Scheme1(Scheme1Plan),
    Scheme2(Scheme2Plan),
}

impl EstimatorPlan {
    pub fn new(scheme: Scheme, config: &ScenarioConfig) -> Result<Self> {
        match scheme {
            Scheme::Scheme1 => Ok(EstimatorPlan::Scheme1(Scheme1Plan::new(config)?)),
            Scheme::Scheme2 => Ok(EstimatorPlan::Scheme2(Scheme2Plan::new(config)?)),
            other => Err(Error::InvalidArgument(format!("{other} has no estimator"))),
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            EstimatorPlan::Scheme1(_) => Scheme::Scheme1,
            EstimatorPlan::Scheme2(_) => Scheme::Scheme2,
        }
    }

    /// Noise of this estimator in trial `t` comes from stream `3t + offset`.
    fn stream_offset(&self) -> u64 {
        match self {
            EstimatorPlan::Scheme1(_) => 1,
            EstimatorPlan::Scheme2(_) => 2,
        }
    }

    pub fn run<R: Rng + ?Sized>(&self, real: &ChannelRealization, noise: bool, rng: &mut R) -> Result<CascadedEstimate> {
        match self {
            EstimatorPlan::Scheme1(p) => p.run(real, noise, rng),
            EstimatorPlan::Scheme2(p) => p.run(real, noise, rng),
        }
    }
}

/// `(numerator, denominator)` of each plan for trial `t`.
pub fn run_trial(config: &ScenarioConfig, plans: &[EstimatorPlan], trial: u64, noise: bool) -> Result<Vec<(f64, f64)>> {
    let real = trial_realization(config, trial)?;
    let truth = real.bs_irs_users();
    plans
        .iter()
        .map(|plan| {
            let mut rng = trial_rng(config.seed, 3 * trial + plan.stream_offset());
            let est = plan.run(&real, noise, &mut rng)?;
            nmse_terms(&truth, &est.bs_irs_users)
        })
        .collect()
}

/// Runs the sweep on the current rayon pool.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<NmseReport> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.values.len() * spec.schemes.len());
    let mut wall_time = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let started = Instant::now();
        let cfg = spec.sweep.apply(&spec.scenario, value)?;
        let mut plans = Vec::new();
        for &s in &spec.schemes {
            match overhead(
                s,
                cfg.bs_antennas as u64,
                cfg.irs_elements as u64,
                cfg.users as u64,
                cfg.tc_symbols(),
                cfg.tu_symbols(),
            ) {
                Ok(_) => plans.push(EstimatorPlan::new(s, &cfg)?),
                Err(Error::Infeasible(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let per_trial: Vec<Vec<(f64, f64)>> = if plans.is_empty() {
            Vec::new()
        } else {
            (0..spec.trials as u64)
                .into_par_iter()
                .map(|t| run_trial(&cfg, &plans, t, spec.noise))
                .collect::<Result<_>>()?
        };
        for &s in &spec.schemes {
            let row = match plans.iter().position(|p| p.scheme() == s) {
                Some(i) => {
                    let samples: Vec<(f64, f64)> = per_trial.iter().map(|t| t[i]).collect();
                    let (mean_nmse, stderr) = aggregate_nmse(&samples);
                    NmseRow {
                        scheme: s,
                        sweep_var: spec.sweep,
                        sweep_value: value,
                        mean_nmse,
                        stderr,
                        trials: samples.len(),
                    }
                }
                None => NmseRow {
                    scheme: s,
                    sweep_var: spec.sweep,
                    sweep_value: value,
                    mean_nmse: f64::NAN,
                    stderr: f64::NAN,
                    trials: 0,
                },
            };
            rows.push(row);
        }
        wall_time.push(started.elapsed());
    }
    Ok(NmseReport { rows, wall_time })
}

/// Runs the sweep on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(spec: &ExperimentSpec, threads: usize) -> Result<NmseReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_experiment(spec))
}

pub const NMSE_CSV_HEADER: [&str; 6] = ["scheme", "sweep_var", "sweep_value", "mean_nmse", "stderr", "trials"];

/// Shortest decimal that parses back to the same `f64`.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_csv<W: Write>(report: &NmseReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(NMSE_CSV_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.scheme.name().to_string(),
            r.sweep_var.name().to_string(),
            fmt_f64(r.sweep_value),
            fmt_f64(r.mean_nmse),
            fmt_f64(r.stderr),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(report: &NmseReport, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(report, std::io::BufWriter::new(file))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<NmseRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(NMSE_CSV_HEADER.iter().copied()) {
        return Err(Error::Config(format!("unexpected NMSE CSV header {header:?}")));
    }
    let float = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Config(format!("bad number `{s}`"))) };
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(NmseRow {
                scheme: rec[0].parse()?,
                sweep_var: rec[1].parse()?,
                sweep_value: float(&rec[2])?,
                mean_nmse: float(&rec[3])?,
                stderr: float(&rec[4])?,
                trials: rec[5].parse().map_err(|_| Error::Config(format!("bad trial count `{}`", &rec[5])))?,
            })
        })
        .collect()
}
