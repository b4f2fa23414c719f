//! Command-line harness: experiment runs, lockstep verification and report
//! files.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::data::{
    build_multiplexer_with, load_classification_file, parse_key_values, Dataset, Schema,
};
use crate::engine::{
    run_experiment, verify_paths, ExperimentReport, ExperimentSummary, MeanSd, RunConfig,
    VerifyReport,
};
use crate::error::{DataError, EngineError};
use crate::tourney::write_audit;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

#[derive(Debug, Parser)]
#[command(
    name = "tourney-gp",
    version,
    about = "Genetic programming with early-terminating tournament selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run experiments and write per-generation stats and summaries.
    Run(RunArgs),
    /// Run both pipelines in lockstep and check they select the same parents.
    Verify(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// shuttle, kddcup, multiplexer-K (K address bits) or custom.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub data_path: Option<PathBuf>,
    /// key=value file describing a classification file's columns.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// key=value file of run settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tournament: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub generations: Option<usize>,
    /// Cases per block (packed words for multiplexer problems).
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Fraction of the population copied unchanged into the next generation.
    #[arg(long)]
    pub elitism: Option<f64>,
    #[arg(long)]
    pub efficient: bool,
    #[arg(long)]
    pub reuse: bool,
    #[arg(long)]
    pub skip_unsampled: bool,
    #[arg(long)]
    pub strict_elitism: bool,
    /// Bit lanes per packed word (32 or 64); multiplexer problems only.
    #[arg(long)]
    pub lanes: Option<u32>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Force-evaluate losers and write an audit file per run.
    #[arg(long)]
    pub audit: bool,
    /// Run both pipelines on the same seeds and report the speedup.
    #[arg(long)]
    pub paired: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Problem {
    Shuttle,
    KddCup,
    Multiplexer(u32),
    Custom,
}

impl std::str::FromStr for Problem {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "shuttle" => Ok(Problem::Shuttle),
            "kddcup" => Ok(Problem::KddCup),
            "custom" => Ok(Problem::Custom),
            _ => {
                let bits = s
                    .strip_prefix("multiplexer-")
                    .and_then(|k| k.parse::<u32>().ok())
                    .ok_or_else(|| CliError::Usage(format!("unknown problem `{s}`")))?;
                if bits == 0 || bits + (1u32 << bits.min(5)) > 26 {
                    return Err(CliError::Usage(format!(
                        "multiplexer-{bits} is out of range (1 to 4 address bits)"
                    )));
                }
                Ok(Problem::Multiplexer(bits))
            }
        }
    }
}

/// A fully resolved invocation.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub problem: Problem,
    pub data_path: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub lanes: Option<u32>,
    pub config: RunConfig,
    pub repeats: usize,
    pub out: PathBuf,
    pub paired: bool,
}

impl ExperimentSpec {
    /// Merges flags over config-file values over defaults.
    pub fn from_args(args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| DataError::Io {
                    path: path.clone(),
                    source,
                })?;
                parse_key_values(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => Vec::new(),
        };
        let mut config = RunConfig::default();
        let mut repeats = 1;
        let mut lanes = None;
        let mut problem = None;
        let mut data_path = None;
        let mut schema = None;
        let mut out = PathBuf::from("results");
        for (key, value) in &file {
            apply_setting(&mut config, key, value, &mut repeats, &mut lanes)?;
            match key.as_str() {
                "problem" => problem = Some(value.clone()),
                "data_path" => data_path = Some(PathBuf::from(value)),
                "schema" => schema = Some(PathBuf::from(value)),
                "out" => out = PathBuf::from(value),
                _ => {}
            }
        }

        let problem: Problem = args
            .problem
            .clone()
            .or(problem)
            .ok_or_else(|| CliError::Usage("--problem is required".into()))?
            .parse()?;
        set(&mut config.tournament_size, args.tournament);
        set(&mut config.population_size, args.population);
        set(&mut config.generations, args.generations);
        set(&mut config.block_size, args.block_size);
        set(&mut config.elitism_fraction, args.elitism);
        set(&mut config.workers, args.workers);
        set(&mut config.seed, args.seed);
        set(&mut repeats, args.repeats);
        config.efficient_selection |= args.efficient;
        config.reuse_unmodified |= args.reuse;
        config.skip_unsampled |= args.skip_unsampled;
        config.strict_elitism |= args.strict_elitism;
        config.audit |= args.audit;
        let lanes = args.lanes.or(lanes);

        if repeats == 0 {
            return Err(CliError::Usage("--repeats must be at least 1".into()));
        }
        if let Some(l) = lanes {
            if !matches!(problem, Problem::Multiplexer(_)) {
                return Err(CliError::Usage(
                    "--lanes applies only to multiplexer problems".into(),
                ));
            }
            if l != 32 && l != 64 {
                return Err(CliError::Usage("--lanes must be 32 or 64".into()));
            }
        }
        config.validate()?;

        Ok(ExperimentSpec {
            problem,
            data_path: args.data_path.clone().or(data_path),
            schema: args.schema.clone().or(schema),
            lanes,
            config,
            repeats,
            out: args.out.clone().unwrap_or(out),
            paired: args.paired,
        })
    }

    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        if let Problem::Multiplexer(bits) = self.problem {
            return Ok(Dataset::Bits(build_multiplexer_with(
                bits,
                self.lanes.unwrap_or(32),
            )));
        }
        let path = self.data_path.as_ref().ok_or_else(|| {
            CliError::Usage("--data-path is required for file-backed problems".into())
        })?;
        let schema = match (&self.schema, &self.problem) {
            (Some(file), _) => {
                let text = fs::read_to_string(file).map_err(|source| DataError::Io {
                    path: file.clone(),
                    source,
                })?;
                Schema::from_key_values(&text)?
            }
            (None, Problem::Shuttle) => Schema::shuttle(),
            (None, Problem::KddCup) => Schema::kddcup(),
            (None, _) => {
                return Err(CliError::Usage(
                    "--schema is required for custom problems".into(),
                ))
            }
        };
        Ok(Dataset::Real(load_classification_file(path, &schema)?))
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_setting(
    config: &mut RunConfig,
    key: &str,
    value: &str,
    repeats: &mut usize,
    lanes: &mut Option<u32>,
) -> Result<(), CliError> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
        value
            .parse()
            .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{value}`")))
    }
    fn flag(key: &str, value: &str) -> Result<bool, CliError> {
        match value {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(CliError::Usage(format!(
                "config key `{key}`: expected a boolean, found `{value}`"
            ))),
        }
    }
    match key {
        "population_size" => config.population_size = num(key, value)?,
        "generations" => config.generations = num(key, value)?,
        "tournament_size" => config.tournament_size = num(key, value)?,
        "p_crossover" => config.p_crossover = num(key, value)?,
        "p_mutation" => config.p_mutation = num(key, value)?,
        "max_depth" => config.max_depth = num(key, value)?,
        "max_size" => config.max_size = num(key, value)?,
        "block_size" => config.block_size = num(key, value)?,
        "elitism_fraction" => config.elitism_fraction = num(key, value)?,
        "efficient_selection" => config.efficient_selection = flag(key, value)?,
        "reuse_unmodified" => config.reuse_unmodified = flag(key, value)?,
        "skip_unsampled" => config.skip_unsampled = flag(key, value)?,
        "strict_elitism" => config.strict_elitism = flag(key, value)?,
        "audit" => config.audit = flag(key, value)?,
        "seed" => config.seed = num(key, value)?,
        "workers" => config.workers = num(key, value)?,
        "repeats" => *repeats = num(key, value)?,
        "lanes" => *lanes = Some(num(key, value)?),
        "problem" | "data_path" | "schema" | "out" => {}
        _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
    }
    Ok(())
}

/// One row of summary.csv.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub pipeline: String,
    pub tournament_size: usize,
    pub runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub avg_size_mean: f64,
    pub avg_size_sd: f64,
    pub time_mean: f64,
    pub time_sd: f64,
    pub saving_mean: f64,
    pub saving_sd: f64,
    pub pruning_saving_mean: f64,
    pub pruning_saving_sd: f64,
    pub gpops_mean: f64,
    pub gpops_sd: f64,
    pub speedup_mean: Option<f64>,
    pub speedup_sd: Option<f64>,
    pub audit_violations: usize,
}

impl SummaryRow {
    fn new(
        pipeline: &str,
        s: &ExperimentSummary,
        speedup: Option<MeanSd>,
        audit_violations: usize,
    ) -> Self {
        SummaryRow {
            pipeline: pipeline.to_string(),
            tournament_size: s.tournament_size,
            runs: s.runs,
            accuracy_mean: s.accuracy.mean,
            accuracy_sd: s.accuracy.sd,
            avg_size_mean: s.avg_size.mean,
            avg_size_sd: s.avg_size.sd,
            time_mean: s.elapsed.mean,
            time_sd: s.elapsed.sd,
            saving_mean: s.saving.mean,
            saving_sd: s.saving.sd,
            pruning_saving_mean: s.pruning_saving.mean,
            pruning_saving_sd: s.pruning_saving.sd,
            gpops_mean: s.gpops.mean,
            gpops_sd: s.gpops.sd,
            speedup_mean: speedup.map(|m| m.mean),
            speedup_sd: speedup.map(|m| m.sd),
            audit_violations,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunOutcome {
    pub rows: Vec<SummaryRow>,
    pub reports: Vec<(String, ExperimentReport)>,
}

impl RunOutcome {
    pub fn audit_violations(&self) -> usize {
        self.rows.iter().map(|r| r.audit_violations).sum()
    }
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| output_error(path, e))?;
    }
    writer.flush().map_err(|e| output_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| output_error(path, e))?;
    fs::write(path, text + "\n").map_err(|e| output_error(path, e))
}

fn write_report(out: &Path, label: &str, report: &ExperimentReport) -> Result<(), CliError> {
    for run in &report.runs {
        let stem = format!(
            "{label}-t{}-seed{}",
            report.config.tournament_size, run.seed
        );
        write_csv(&out.join(format!("{stem}.csv")), &run.generations)?;
        write_json(&out.join(format!("{stem}.json")), run)?;
        if report.config.audit {
            let path = out.join(format!("{stem}-audit.csv"));
            let file = fs::File::create(&path).map_err(|e| output_error(&path, e))?;
            write_audit(file, &run.audit).map_err(|e| output_error(&path, e))?;
        }
    }
    Ok(())
}

/// Runs every repeat of the spec and writes stats, per-run summaries and
/// summary.csv / summary.json under the output directory.
pub fn cmd_run(spec: &ExperimentSpec) -> Result<RunOutcome, CliError> {
    let data = spec.load_dataset()?;
    fs::create_dir_all(&spec.out).map_err(|e| output_error(&spec.out, e))?;

    let pipelines: Vec<(&str, RunConfig)> = if spec.paired {
        let mut standard = spec.config.clone();
        standard.efficient_selection = false;
        let mut efficient = spec.config.clone();
        efficient.efficient_selection = true;
        vec![("standard", standard), ("efficient", efficient)]
    } else {
        let label = if spec.config.efficient_selection {
            "efficient"
        } else {
            "standard"
        };
        vec![(label, spec.config.clone())]
    };

    let mut reports = Vec::new();
    for (label, config) in pipelines {
        let report = run_experiment(&config, &data, spec.repeats)?;
        write_report(&spec.out, label, &report)?;
        reports.push((label.to_string(), report));
    }

    let speedup = if spec.paired {
        let ratios: Vec<f64> = reports[0]
            .1
            .runs
            .iter()
            .zip(&reports[1].1.runs)
            .filter(|(_, e)| e.elapsed > 0.0)
            .map(|(s, e)| s.elapsed / e.elapsed)
            .collect();
        Some(MeanSd::of(&ratios))
    } else {
        None
    };
    let rows: Vec<SummaryRow> = reports
        .iter()
        .map(|(label, report)| {
            let violations = report.runs.iter().map(|r| r.audit_violations()).sum();
            let speed = if label == "efficient" { speedup } else { None };
            SummaryRow::new(label, &report.summary, speed, violations)
        })
        .collect();
    write_csv(&spec.out.join("summary.csv"), &rows)?;
    write_json(&spec.out.join("summary.json"), &rows)?;
    Ok(RunOutcome { rows, reports })
}

/// Verifies each repeat's seed in turn, stopping at the first failure.
pub fn cmd_verify(spec: &ExperimentSpec) -> Result<Vec<VerifyReport>, CliError> {
    let data = spec.load_dataset()?;
    let mut reports = Vec::new();
    for r in 0..spec.repeats {
        let mut config = spec.config.clone();
        config.seed += r as u64;
        let report = verify_paths(&config, &data)?;
        let passed = report.passed();
        reports.push(report);
        if !passed {
            break;
        }
    }
    Ok(reports)
}

fn print_rows(rows: &[SummaryRow]) {
    println!(
        "{:<10} {:>4} {:>16} {:>16} {:>16} {:>16} {:>14}",
        "pipeline", "t", "accuracy %", "avg size", "time s", "saving %", "speedup"
    );
    for r in rows {
        let pair = |m: f64, s: f64| format!("{m:.2} ± {s:.2}");
        let speed = match (r.speedup_mean, r.speedup_sd) {
            (Some(m), Some(s)) => pair(m, s),
            _ => "-".into(),
        };
        println!(
            "{:<10} {:>4} {:>16} {:>16} {:>16} {:>16} {:>14}",
            r.pipeline,
            r.tournament_size,
            pair(r.accuracy_mean, r.accuracy_sd),
            pair(r.avg_size_mean, r.avg_size_sd),
            pair(r.time_mean, r.time_sd),
            pair(r.saving_mean, r.saving_sd),
            speed
        );
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Run(args) => ExperimentSpec::from_args(args).and_then(|spec| {
            let outcome = cmd_run(&spec)?;
            print_rows(&outcome.rows);
            println!("results written to {}", spec.out.display());
            let violations = outcome.audit_violations();
            if violations > 0 {
                eprintln!("audit: {violations} pruned members would have won a tournament");
                return Ok(1);
            }
            Ok(0)
        }),
        Command::Verify(args) => ExperimentSpec::from_args(args).and_then(|spec| {
            let reports = cmd_verify(&spec)?;
            let mut code = 0;
            for (r, report) in reports.iter().enumerate() {
                let seed = spec.config.seed + r as u64;
                match (&report.divergence, report.violations) {
                    (None, 0) => println!(
                        "seed {seed}: ok ({} generations, {} tournaments, {} losers audited)",
                        report.generations, report.tournaments_checked, report.losers_audited
                    ),
                    (divergence, violations) => {
                        code = 1;
                        if let Some(d) = divergence {
                            eprintln!("seed {seed}: divergence at {d}");
                        }
                        if violations > 0 {
                            eprintln!("seed {seed}: {violations} pruned members would have won");
                        }
                    }
                }
            }
            Ok(code)
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
