use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anchor_est::overhead::write_overhead_csv;
use anchor_est::sim_harness::write_csv;
use anchor_est::{crossover_table, run_experiment, run_experiment_with_threads, ExperimentBatch, ExperimentSpec, NmseReport, Scheme};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod design;
mod failure;
mod grid;
mod plot;

use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "anchor-est", version, about = "Anchor-assisted IRS channel estimation: overhead tables and NMSE sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Training overhead per coherence window over an (M, N, K) grid.
    Overhead(OverheadArgs),
    /// Monte-Carlo NMSE sweep from one experiment file.
    Nmse(NmseArgs),
    /// Several NMSE sweeps from a file of [[experiments]] tables.
    Sweep(NmseArgs),
    /// Dump training designs (pilots and reflection vectors) as CSV.
    Design(design::DesignArgs),
    /// Render an NMSE report CSV as an SVG line chart.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeChoice {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    All,
}

impl SchemeChoice {
    fn estimators(self) -> Vec<Scheme> {
        match self {
            SchemeChoice::One => vec![Scheme::Scheme1],
            SchemeChoice::Two => vec![Scheme::Scheme2],
            SchemeChoice::All => vec![Scheme::Scheme1, Scheme::Scheme2],
        }
    }

    fn with_baselines(self) -> Vec<Scheme> {
        match self {
            SchemeChoice::All => Scheme::ALL.to_vec(),
            other => other.estimators(),
        }
    }
}

#[derive(Debug, Args)]
struct OverheadArgs {
    /// TOML grid file; command-line ranges override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// BS antennas, e.g. `60,70` or `16..=128`.
    #[arg(long = "m")]
    bs_antennas: Option<String>,
    /// IRS elements.
    #[arg(long = "n")]
    irs_elements: Option<String>,
    /// Users.
    #[arg(long = "k")]
    users: Option<String>,
    #[arg(long)]
    tc_ms: Option<f64>,
    #[arg(long)]
    tu_ms: Option<f64>,
    /// `all` adds the reference-user and full-duplex baselines.
    #[arg(long, value_enum, default_value = "all")]
    scheme: SchemeChoice,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NmseArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeChoice>,
    /// Output CSV; falls back to the file's `output`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
    /// Also render the report as an SVG line chart.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// NMSE report CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    title: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Overhead(a) => cmd_overhead(a),
        Command::Nmse(a) => cmd_nmse(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Design(a) => design::run(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("anchor-est: {f}");
            ExitCode::from(f.code())
        }
    }
}

/// Opens `path` for writing, or stdout.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Failure::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_overhead(a: OverheadArgs) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => grid::GridConfig::from_file(p)?,
        None => grid::GridConfig::default(),
    };
    if let Some(s) = &a.bs_antennas {
        cfg.bs_antennas = grid::parse_values(s)?;
    }
    if let Some(s) = &a.irs_elements {
        cfg.irs_elements = grid::parse_values(s)?;
    }
    if let Some(s) = &a.users {
        cfg.users = grid::parse_values(s)?;
    }
    if let Some(t) = a.tc_ms {
        cfg.tc_ms = t;
    }
    if let Some(t) = a.tu_ms {
        cfg.tu_ms = t;
    }
    let cells = crossover_table(&cfg.grid()?, &a.scheme.with_baselines())?;
    let mut out = sink(a.out.as_deref())?;
    write_overhead_csv(&cells, &mut out)?;
    out.flush().map_err(|e| Failure::Io(e.to_string()))?;

    let infeasible: Vec<String> = cells
        .iter()
        .flat_map(|c| c.infeasible.iter().map(move |(s, why)| format!("{s} at (M,N,K)=({},{},{}): {why}", c.m, c.n, c.k)))
        .collect();
    if infeasible.is_empty() {
        Ok(())
    } else {
        Err(Failure::Infeasible(summarize(&infeasible)))
    }
}

fn summarize(items: &[String]) -> String {
    match items {
        [one] => one.clone(),
        [first, rest @ ..] => format!("{first} (and {} more)", rest.len()),
        [] => String::new(),
    }
}

fn apply_overrides(spec: &mut ExperimentSpec, a: &NmseArgs) -> Result<(), Failure> {
    if let Some(seed) = a.seed {
        spec.scenario.seed = seed;
    }
    if let Some(t) = a.trials {
        spec.trials = t;
    }
    if let Some(s) = a.scheme {
        spec.schemes = s.estimators();
    }
    spec.validate()?;
    Ok(())
}

fn execute(spec: &ExperimentSpec, threads: Option<usize>) -> Result<NmseReport, Failure> {
    Ok(match threads {
        Some(0) => return Err(Failure::Config("--threads must be at least 1".into())),
        Some(t) => run_experiment_with_threads(spec, t)?,
        None => run_experiment(spec)?,
    })
}

fn infeasible_points(report: &NmseReport) -> Vec<String> {
    report
        .rows
        .iter()
        .filter(|r| !r.is_feasible())
        .map(|r| format!("{} at {} = {}", r.scheme, r.sweep_var, r.sweep_value))
        .collect()
}

fn finish(report: &NmseReport, out: Option<&Path>, plot_to: Option<&Path>, title: &str) -> Result<(), Failure> {
    let mut w = sink(out)?;
    write_csv(report, &mut w)?;
    w.flush().map_err(|e| Failure::Io(e.to_string()))?;
    if let Some(p) = plot_to {
        plot::render(&report.rows, p, title)?;
    }
    let bad = infeasible_points(report);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Infeasible(format!("protocol infeasible for {}", summarize(&bad))))
    }
}

fn cmd_nmse(a: NmseArgs) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::from_file(&a.config).map_err(|e| Failure::config_file(&a.config, e))?;
    apply_overrides(&mut spec, &a)?;
    let report = execute(&spec, a.threads)?;
    let out = a.out.clone().or_else(|| spec.output.clone());
    let title = format!("NMSE versus {}", spec.sweep);
    finish(&report, out.as_deref(), a.plot.as_deref(), &title)
}

/// Runs every experiment; each one with an `output` also gets its own file,
/// and the combined CSV goes to `--out` or stdout.
fn cmd_sweep(a: NmseArgs) -> Result<(), Failure> {
    let batch = ExperimentBatch::from_file(&a.config).map_err(|e| Failure::config_file(&a.config, e))?;
    let mut combined = NmseReport {
        rows: Vec::new(),
        wall_time: Vec::new(),
    };
    let mut specs = batch.experiments;
    for spec in &mut specs {
        apply_overrides(spec, &a)?;
    }
    for spec in &specs {
        let report = execute(spec, a.threads)?;
        if let Some(p) = &spec.output {
            anchor_est::emit_csv(&report, p)?;
        }
        combined.rows.extend(report.rows);
        combined.wall_time.extend(report.wall_time);
    }
    finish(&combined, a.out.as_deref(), a.plot.as_deref(), "NMSE sweeps")
}

fn cmd_plot(a: PlotArgs) -> Result<(), Failure> {
    let file = File::open(&a.input).map_err(|e| Failure::io(&a.input, e))?;
    let rows = anchor_est::read_csv(file).map_err(|e| Failure::config_file(&a.input, e))?;
    let title = a.title.unwrap_or_else(|| "NMSE".to_string());
    plot::render(&rows, &a.out, &title)
}
