//! Command-line front end.
//!
//! Every experiment resolves to an [`ExperimentConfig`]: values come from an
//! optional `--config` JSON file and are overridden by flags. Results are
//! written atomically (temporary file in the target directory, then rename)
//! and one summary line per grid point goes to standard output. Failures
//! print a JSON diagnostic on standard error and exit with 2 (validation),
//! 3 (numerical failure) or 4 (I/O).

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bpcge::{self, DEFAULT_MAX_TOTAL};
use crate::covariance::{CovarianceModel, Family};
use crate::envgen::{build_environment, omega_from_noise};
use crate::error::{Error, Result};
use crate::mc::{self, Estimate, EstimateSeries, EventKind, FitResult, Task, SERIES_HEADER};
use crate::passage::{self, EnvEventParams};
use crate::seed::parse_seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

const DEFAULT_WALK_HORIZON: u64 = 10_000_000;
const DEFAULT_HORIZON_FACTOR: f64 = 4.0;

#[derive(Debug, Parser)]
#[command(
    name = "corrwalk",
    version,
    about = "Random walks and branching processes in correlated Gaussian environments",
    long_about = None
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump one sampled environment as rows (index, x, v, omega)
    Env(EnvArgs),
    /// P[tau(N) < tau(-1)] by direct simulation of the walk
    Walk(WalkArgs),
    /// P[T > N] by direct simulation of the branching process
    Branching(BranchingArgs),
    /// P[T > N] from E[1 / sum_{k<=N} e^{V(k)}]
    Tail(TailArgs),
    /// First-passage functionals of the potential
    Passage(PassageArgs),
    /// Frequencies of the environment events B_N^c or G_N
    Events(EventsArgs),
    /// x^{1-H} E[1 / sum_{l=start}^{x} e^{V(l)}]
    Lemma4(Lemma4Args),
    /// Log-log least-squares fit of a series (CSV or JSONL)
    Fit(FitArgs),
    /// Run the experiment described entirely by a config file
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Env,
    Walk,
    Branching,
    Tail,
    Passage,
    Events,
    Lemma4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PassageMode {
    /// P[T(-x) < T(y)] over the grid of x values
    #[default]
    HitOrder,
    /// P[max_{k<=n} V(k) <= barrier] over the grid of n values
    Persistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EventChoice {
    /// Complement of the bad-environment event B_N
    #[default]
    Bad,
    /// Good-environment event G_N
    Good,
}

/// Flags shared by every experiment.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its values
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Covariance family
    #[arg(long, value_enum)]
    pub model: Option<Family>,
    /// Hurst index in [0.5, 1)
    #[arg(long)]
    pub hurst: Option<f64>,
    /// Covariance table r(0), r(1), ... (comma separated) for --model table
    #[arg(long, value_name = "R0,R1,...", value_delimiter = ',')]
    pub table: Option<Vec<f64>>,
    /// Grid of N (or x) values: `a..bxk` (geometric, ratio k) or `a,b,c`
    #[arg(long)]
    pub grid: Option<String>,
    /// Replicates per grid point
    #[arg(long)]
    pub reps: Option<u64>,
    /// Master seed, decimal or 0x-hex
    #[arg(long, value_parser = parse_seed)]
    pub seed: Option<u64>,
    /// Output file
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Output format (default: from the --out extension, else csv)
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (0 = all cores)
    #[arg(long, env = "CORRWALK_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EnvArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct WalkArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Step budget per walk; unfinished walks are reported as censored
    #[arg(long)]
    pub horizon: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct BranchingArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Cap on the cumulative population of one trajectory
    #[arg(long)]
    pub max_total: Option<u64>,
    /// Also write the trajectories of the largest grid point as JSON lines
    #[arg(long, value_name = "PATH")]
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TailArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PassageArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Which functional to estimate
    #[arg(long, value_enum)]
    pub mode: Option<PassageMode>,
    /// Upper level y for hit-order (requires x > y > 0)
    #[arg(long)]
    pub y: Option<f64>,
    /// Horizon multiplier f in ceil(f x^{1/H} (log x)^2) for hit-order
    #[arg(long)]
    pub horizon_factor: Option<f64>,
    /// Barrier for persistence
    #[arg(long)]
    pub barrier: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EventsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Exponent a > 1 of the upper level a log log N
    #[arg(long)]
    pub a: Option<f64>,
    /// Exponent q > 1 in the index b_N
    #[arg(long)]
    pub q: Option<f64>,
    /// eps in (0, 1)
    #[arg(long)]
    pub eps: Option<f64>,
    /// Which event frequency to report
    #[arg(long, value_enum)]
    pub event: Option<EventChoice>,
    /// Also write every event report with its witness values as a JSON array
    #[arg(long, value_name = "PATH")]
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct Lemma4Args {
    #[command(flatten)]
    pub common: CommonArgs,
    /// First index of the sum, 0 or 1
    #[arg(long)]
    pub start: Option<u8>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Series file (CSV or JSON lines); branching trajectory lines are accepted too
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Also write the fit as JSON to this file
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Experiment-specific parameters; unused ones are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_total: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub barrier: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<PassageMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<EventChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reports: Option<PathBuf>,
}

impl Params {
    /// Field-wise `self.or(base)`.
    fn over(self, base: Params) -> Params {
        Params {
            a: self.a.or(base.a),
            q: self.q.or(base.q),
            eps: self.eps.or(base.eps),
            y: self.y.or(base.y),
            horizon_factor: self.horizon_factor.or(base.horizon_factor),
            horizon: self.horizon.or(base.horizon),
            max_total: self.max_total.or(base.max_total),
            start: self.start.or(base.start),
            barrier: self.barrier.or(base.barrier),
            mode: self.mode.or(base.mode),
            event: self.event.or(base.event),
            trajectories: self.trajectories.or(base.trajectories),
            reports: self.reports.or(base.reports),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Output {
    pub path: PathBuf,
    pub format: Format,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: CovarianceModel,
    pub grid: Vec<u64>,
    pub reps: u64,
    pub seed: u64,
    #[serde(default)]
    pub params: Params,
    pub output: Output,
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Loose<T> {
    Value(T),
    Text(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    family: Option<Family>,
    hurst: Option<f64>,
    values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputFile {
    path: Option<PathBuf>,
    format: Option<Format>,
}

/// Config file: the shape of [`ExperimentConfig`] with every field optional.
/// `grid` may also be a grid string and `seed` a decimal or hex string.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: Option<Experiment>,
    #[serde(default)]
    model: ModelFile,
    grid: Option<Loose<Vec<u64>>>,
    reps: Option<u64>,
    seed: Option<Loose<u64>>,
    #[serde(default)]
    params: Params,
    #[serde(default)]
    output: OutputFile,
    workers: Option<usize>,
}

impl ConfigFile {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("config {}: {e}", path.display())))
    }
}

/// Parses `a..bxk` (geometric grid from `a` up to `b`, ratio `k > 1`), a
/// comma-separated list, or a single value.
pub fn parse_grid(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    let bad = || Error::invalid(format!("invalid grid {text:?}: expected a..bxk or a comma list"));
    let grid = if let Some((a, rest)) = text.split_once("..") {
        let (b, k) = rest.split_once('x').ok_or_else(bad)?;
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        let k: f64 = k.trim().parse().map_err(|_| bad())?;
        if a == 0 || !(k > 1.0) || b < a {
            return Err(bad());
        }
        let mut grid = Vec::new();
        let mut value = a as f64;
        loop {
            let n = value.round() as u64;
            if n > b {
                break;
            }
            if grid.last() != Some(&n) {
                grid.push(n);
            }
            value *= k;
        }
        grid
    } else {
        text.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<Vec<u64>>>()?
    };
    check_grid(&grid)?;
    Ok(grid)
}

fn check_grid(grid: &[u64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("grid must not be empty"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid must be strictly increasing"));
    }
    Ok(())
}

fn format_for(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") => Format::Jsonl,
        _ => Format::Csv,
    }
}

impl ExperimentConfig {
    /// Merges flags over the optional config file.
    pub fn resolve(experiment: Option<Experiment>, common: &CommonArgs, flags: Params) -> Result<Self> {
        let file = match &common.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let experiment = experiment
            .or(file.experiment)
            .ok_or_else(|| Error::invalid("config must name an experiment"))?;
        let family = common.model.or(file.model.family).unwrap_or(Family::Fgn);
        let hurst = common.hurst.or(file.model.hurst).unwrap_or(0.5);
        let values = common.table.clone().or(file.model.values);
        let model = match family {
            Family::Table => CovarianceModel::table(
                hurst,
                values.ok_or_else(|| Error::invalid("--model table needs --table values"))?,
            )?,
            _ if values.is_some() => return Err(Error::invalid("--table is only valid with --model table")),
            _ => {
                let m = CovarianceModel { family, hurst, values: None };
                m.validate()?;
                m
            }
        };
        let grid = match (&common.grid, file.grid) {
            (Some(text), _) => parse_grid(text)?,
            (None, Some(Loose::Text(text))) => parse_grid(&text)?,
            (None, Some(Loose::Value(grid))) => {
                check_grid(&grid)?;
                grid
            }
            (None, None) => return Err(Error::invalid("a grid is required (--grid)")),
        };
        let seed = match (common.seed, file.seed) {
            (Some(s), _) => s,
            (None, Some(Loose::Value(s))) => s,
            (None, Some(Loose::Text(text))) => parse_seed(&text).map_err(Error::InvalidParameter)?,
            (None, None) => 0,
        };
        let reps = common.reps.or(file.reps).unwrap_or(1000);
        if reps < 1 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        let path = common
            .out
            .clone()
            .or(file.output.path)
            .ok_or_else(|| Error::invalid("an output path is required (--out)"))?;
        let format = common.format.or(file.output.format).unwrap_or_else(|| format_for(&path));
        let workers = match common.workers.or(file.workers).unwrap_or(1) {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            w => w,
        };
        let config = ExperimentConfig {
            experiment,
            model,
            grid,
            reps,
            seed,
            params: flags.over(file.params),
            output: Output { path, format },
            workers,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        check_grid(&self.grid)?;
        if self.experiment == Experiment::Env {
            if self.grid.len() != 1 {
                return Err(Error::invalid("env takes a single grid value N"));
            }
            return Ok(());
        }
        self.task()?.validate()
    }

    fn event_params(&self) -> Result<EnvEventParams> {
        let d = EnvEventParams::default();
        let p = &self.params;
        EnvEventParams::new(p.a.unwrap_or(d.a), p.q.unwrap_or(d.q), p.eps.unwrap_or(d.eps))
    }

    /// The Monte Carlo task behind a series experiment.
    pub fn task(&self) -> Result<Task> {
        let (model, grid, reps, p) = (self.model.clone(), self.grid.clone(), self.reps, &self.params);
        Ok(match self.experiment {
            Experiment::Env => return Err(Error::invalid("env is not a series experiment")),
            Experiment::Walk => Task::Walk { model, grid, reps, horizon: p.horizon.unwrap_or(DEFAULT_WALK_HORIZON) },
            Experiment::Branching => {
                Task::Branching { model, grid, reps, max_total: p.max_total.unwrap_or(DEFAULT_MAX_TOTAL) }
            }
            Experiment::Tail => Task::Tail { model, grid, reps },
            Experiment::Passage => match p.mode.unwrap_or_default() {
                PassageMode::HitOrder => Task::HitOrder {
                    model,
                    grid,
                    reps,
                    y: p.y.ok_or_else(|| Error::invalid("hit-order needs --y"))?,
                    horizon_factor: p.horizon_factor.unwrap_or(DEFAULT_HORIZON_FACTOR),
                },
                PassageMode::Persistence => Task::Persistence { model, grid, reps, barrier: p.barrier.unwrap_or(0.0) },
            },
            Experiment::Events => Task::Events {
                params: self.event_params()?,
                kind: match p.event.unwrap_or_default() {
                    EventChoice::Bad => EventKind::BadComplement,
                    EventChoice::Good => EventKind::Good,
                },
                model,
                grid,
                reps,
            },
            Experiment::Lemma4 => Task::Lemma4 { model, grid, reps, start: p.start.unwrap_or(0) },
        })
    }
}

/// Exit code for an error.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::NotEmbeddable { .. } | Error::NonPositiveEstimate { .. } | Error::AllCensored => EXIT_NUMERICAL,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

/// Machine-readable diagnostic for standard error.
pub fn diagnostic(error: &Error) -> String {
    let kind = match exit_code(error) {
        EXIT_NUMERICAL => "numerical",
        EXIT_IO => "io",
        _ => "validation",
    };
    serde_json::json!({ "error": kind, "message": error.to_string(), "exit_code": exit_code(error) }).to_string()
}

/// Writes `path` atomically through a temporary file in the same directory.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut out = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut out)?;
        out.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_series(series: &EstimateSeries, output: &Output) -> Result<()> {
    write_atomic(&output.path, |out| match output.format {
        Format::Csv => series.write_csv(out),
        Format::Jsonl => series.write_jsonl(out),
    })
}

fn summary(name: &str, p: &Estimate) -> String {
    format!(
        "{name} n={} estimate={:.6e} stderr={:.3e} reps={} censored={}",
        p.n, p.estimate, p.stderr, p.reps, p.censored
    )
}

fn experiment_name(e: Experiment) -> &'static str {
    match e {
        Experiment::Env => "env",
        Experiment::Walk => "walk",
        Experiment::Branching => "branching",
        Experiment::Tail => "tail",
        Experiment::Passage => "passage",
        Experiment::Events => "events",
        Experiment::Lemma4 => "lemma4",
    }
}

/// Runs a resolved experiment, printing summaries to `stdout`.
pub fn run(config: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    config.validate()?;
    let name = experiment_name(config.experiment);
    match config.experiment {
        Experiment::Env => run_env(config, stdout),
        Experiment::Events => run_events(config, stdout),
        Experiment::Branching if config.params.trajectories.is_some() => run_branching_dump(config, stdout),
        _ => {
            let task = config.task()?;
            let mut io_err = None;
            let series = mc::mc_run_with(&task, config.seed, config.workers, |p| {
                if let Err(e) = writeln!(stdout, "{}", summary(name, p)) {
                    io_err.get_or_insert(e);
                }
            })?;
            if let Some(e) = io_err {
                return Err(e.into());
            }
            write_series(&series, &config.output)
        }
    }
}

fn run_env(config: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    let n = config.grid[0];
    let env = build_environment(&config.model, n as usize, mc::grid_point_seed(config.seed, 0))?;
    write_atomic(&config.output.path, |out| match config.output.format {
        Format::Csv => env.write_csv(out),
        Format::Jsonl => {
            for i in -1..=n as i64 {
                let x = env.x(i).expect("sampled environments carry X_{-1}");
                let line = serde_json::json!({
                    "index": i,
                    "x": x,
                    "v": env.v(i).expect("index in range"),
                    "omega": omega_from_noise(x),
                });
                writeln!(out, "{line}")?;
            }
            Ok(())
        }
    })?;
    let v = env.potential();
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    writeln!(stdout, "env n={n} min_v={lo:.6} max_v={hi:.6} seed={:#x}", env.seed)?;
    Ok(())
}

fn run_events(config: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    let Task::Events { model, grid, reps, params, kind } = config.task()? else {
        unreachable!("events config yields an events task");
    };
    let mut points = Vec::with_capacity(grid.len());
    let mut all_reports = Vec::new();
    for (g, &n) in grid.iter().enumerate() {
        let reports = passage::sample_events(&model, n, &params, reps, mc::grid_point_seed(config.seed, g), config.workers)?;
        let p = mc::event_estimate(n, &reports, kind);
        writeln!(stdout, "{}", summary("events", &p))?;
        points.push(p);
        if config.params.reports.is_some() {
            all_reports.extend(reports);
        }
    }
    let series = EstimateSeries { points, model, label: config.task()?.label().to_string() };
    write_series(&series, &config.output)?;
    if let Some(path) = &config.params.reports {
        write_atomic(path, |out| {
            serde_json::to_writer_pretty(&mut *out, &all_reports).map_err(std::io::Error::other)?;
            writeln!(out)
        })?;
    }
    Ok(())
}

fn run_branching_dump(config: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    let Task::Branching { model, grid, reps, max_total } = config.task()? else {
        unreachable!("branching config yields a branching task");
    };
    let mut points = Vec::with_capacity(grid.len());
    let mut last = Vec::new();
    for (g, &n) in grid.iter().enumerate() {
        let seed = mc::grid_point_seed(config.seed, g);
        let p = if g + 1 == grid.len() {
            let (p, trajectories) =
                mc::branching_tail_with_trajectories(&model, n, reps, seed, max_total, config.workers)?;
            last = trajectories;
            p
        } else {
            mc::branching_tail_frequency(&model, n, reps, seed, max_total, config.workers)?
        };
        writeln!(stdout, "{}", summary("branching", &p))?;
        points.push(p);
    }
    let series = EstimateSeries { points, model, label: config.task()?.label().to_string() };
    write_series(&series, &config.output)?;
    let path = config.params.trajectories.as_ref().expect("dump requested");
    write_atomic(path, |out| bpcge::write_trajectories_jsonl(&last, out))
}

/// One line of a branching trajectory dump.
#[derive(Debug, Deserialize)]
struct TrajectoryLine {
    #[serde(rename = "T")]
    t: Option<u64>,
    censored: bool,
}

/// Reads a series from CSV or JSON lines. Trajectory dumps are turned into
/// the empirical extinction tail `P[T > n]` on the dyadic grid below the
/// largest observed extinction time, counting censored trajectories as
/// surviving.
pub fn read_series(path: &Path) -> Result<Vec<Estimate>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    while first.trim().is_empty() {
        first.clear();
        if reader.read_line(&mut first)? == 0 {
            return Err(Error::invalid(format!("{} is empty", path.display())));
        }
    }
    if !first.trim_start().starts_with('{') {
        if first.trim() != SERIES_HEADER {
            return Err(Error::invalid(format!("{} is not a series file (header `{SERIES_HEADER}`)", path.display())));
        }
        let rest = std::io::Cursor::new(first).chain(reader);
        return EstimateSeries::read_csv(rest);
    }
    let lines: Vec<String> = std::iter::once(Ok(first))
        .chain(reader.lines())
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .collect();
    let bad = |l: &str, e: serde_json::Error| Error::invalid(format!("unreadable line {l:?}: {e}"));
    let head: serde_json::Value = serde_json::from_str(&lines[0]).map_err(|e| bad(&lines[0], e))?;
    if head.get("estimate").is_some() {
        return lines.iter().map(|l| serde_json::from_str(l).map_err(|e| bad(l, e))).collect();
    }
    if head.get("T").is_none() {
        return Err(Error::invalid(format!("{} holds neither series nor trajectory lines", path.display())));
    }
    let trajectories: Vec<TrajectoryLine> =
        lines.iter().map(|l| serde_json::from_str(l).map_err(|e| bad(l, e))).collect::<Result<_>>()?;
    trajectory_tail(&trajectories)
}

fn trajectory_tail(trajectories: &[TrajectoryLine]) -> Result<Vec<Estimate>> {
    let reps = trajectories.len() as u64;
    let censored = trajectories.iter().filter(|t| t.censored).count() as u64;
    if censored == reps {
        return Err(Error::AllCensored);
    }
    let largest = trajectories.iter().filter_map(|t| t.t).max().unwrap_or(0);
    let mut points = Vec::new();
    let mut n = 1u64;
    while n < largest {
        let alive = trajectories.iter().filter(|t| t.censored || t.t.is_some_and(|time| time > n)).count() as u64;
        let estimate = alive as f64 / reps as f64;
        points.push(Estimate { n, estimate, stderr: crate::numerics::binomial_stderr(estimate, reps), reps, censored });
        n *= 2;
    }
    Ok(points)
}

pub fn fit(args: &FitArgs, stdout: &mut dyn Write) -> Result<FitResult> {
    let points = read_series(&args.input)?;
    let result = mc::fit_power_law(&points)?;
    let json = serde_json::to_string(&result)?;
    writeln!(stdout, "{json}")?;
    if let Some(path) = &args.out {
        write_atomic(path, |out| writeln!(out, "{json}"))?;
    }
    Ok(result)
}

fn resolve(command: &Command) -> Result<Option<ExperimentConfig>> {
    let none = Params::default();
    let (experiment, common, params) = match command {
        Command::Fit(_) => return Ok(None),
        Command::Env(a) => (Some(Experiment::Env), &a.common, none),
        Command::Walk(a) => (Some(Experiment::Walk), &a.common, Params { horizon: a.horizon, ..none }),
        Command::Branching(a) => (
            Some(Experiment::Branching),
            &a.common,
            Params { max_total: a.max_total, trajectories: a.trajectories.clone(), ..none },
        ),
        Command::Tail(a) => (Some(Experiment::Tail), &a.common, none),
        Command::Passage(a) => (
            Some(Experiment::Passage),
            &a.common,
            Params { mode: a.mode, y: a.y, horizon_factor: a.horizon_factor, barrier: a.barrier, ..none },
        ),
        Command::Events(a) => (
            Some(Experiment::Events),
            &a.common,
            Params { a: a.a, q: a.q, eps: a.eps, event: a.event, reports: a.reports.clone(), ..none },
        ),
        Command::Lemma4(a) => (Some(Experiment::Lemma4), &a.common, Params { start: a.start, ..none }),
        Command::Run(a) => {
            if a.common.config.is_none() {
                return Err(Error::invalid("run needs --config"));
            }
            (None, &a.common, none)
        }
    };
    ExperimentConfig::resolve(experiment, common, params).map(Some)
}

/// Executes a parsed command line; returns the process exit code.
pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Fit(args) => fit(args, stdout).map(|_| ()),
        command => resolve(command).and_then(|config| run(&config.expect("experiment command"), stdout)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{}", diagnostic(&e));
            exit_code(&e)
        }
    }
}

/// Process entry point.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            if code == EXIT_VALIDATION {
                let msg = e.kind().as_str().map_or_else(|| e.to_string(), str::to_string);
                eprintln!("{}", serde_json::json!({ "error": "validation", "message": msg, "exit_code": code }));
            }
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    execute(&cli, &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn geometric_grid() {
        let g = parse_grid("1024..131072x2").unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g[0], 1024);
        assert_eq!(*g.last().unwrap(), 131072);
        assert_eq!(parse_grid("8..64x2").unwrap(), vec![8, 16, 32, 64]);
        assert_eq!(parse_grid("10..1000x10").unwrap(), vec![10, 100, 1000]);
        assert_eq!(parse_grid("10..100x1.5").unwrap(), vec![10, 15, 23, 34, 51, 76]);
    }

    #[test]
    fn list_grid() {
        assert_eq!(parse_grid("16, 32,64").unwrap(), vec![16, 32, 64]);
        assert_eq!(parse_grid("5").unwrap(), vec![5]);
    }

    #[test]
    fn bad_grids() {
        for g in ["", "4,4", "8,4", "0..8x2", "1..8x1", "1..8", "a,b", "8..4x2"] {
            assert!(parse_grid(g).is_err(), "{g}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::invalid("x")), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::NotEmbeddable { eigenvalue: -1.0, max: 1.0 }), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), EXIT_IO);
        let d: serde_json::Value = serde_json::from_str(&diagnostic(&Error::invalid("boom"))).unwrap();
        assert_eq!(d["error"], "validation");
        assert_eq!(d["message"], "boom");
        assert_eq!(d["exit_code"], 2);
    }

    fn common(grid: &str) -> CommonArgs {
        CommonArgs { grid: Some(grid.into()), out: Some("series.csv".into()), ..Default::default() }
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"experiment":"tail","model":{"family":"fgn","hurst":0.75},"grid":"16..64x2",
                "reps":50,"seed":"0x10","params":{"y":2.0},"output":{"path":"a.jsonl"}}"#,
        )
        .unwrap();
        let args = CommonArgs { config: Some(path.clone()), ..Default::default() };
        let c = ExperimentConfig::resolve(None, &args, Params::default()).unwrap();
        assert_eq!(c.experiment, Experiment::Tail);
        assert_eq!(c.grid, vec![16, 32, 64]);
        assert_eq!(c.seed, 16);
        assert_eq!(c.output.format, Format::Jsonl);
        assert_eq!(c.model.hurst, 0.75);

        let args = CommonArgs { config: Some(path), hurst: Some(0.6), reps: Some(9), seed: Some(3), ..Default::default() };
        let c = ExperimentConfig::resolve(Some(Experiment::Lemma4), &args, Params { start: Some(1), ..Default::default() })
            .unwrap();
        assert_eq!(c.experiment, Experiment::Lemma4);
        assert_eq!((c.model.hurst, c.reps, c.seed, c.params.start, c.params.y), (0.6, 9, 3, Some(1), Some(2.0)));
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"experiment":"tail","gird":"16..64x2"}"#).unwrap();
        let args = CommonArgs { config: Some(path), ..Default::default() };
        assert!(matches!(ExperimentConfig::resolve(None, &args, Params::default()), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn validation_errors() {
        let bad_hurst = CommonArgs { hurst: Some(1.2), ..common("16") };
        let e = ExperimentConfig::resolve(Some(Experiment::Tail), &bad_hurst, Params::default()).unwrap_err();
        assert_eq!(e.to_string(), "hurst must lie in [0.5,1)");
        let no_y = common("8,16");
        assert!(ExperimentConfig::resolve(Some(Experiment::Passage), &no_y, Params::default()).is_err());
        let table_without_values = CommonArgs { model: Some(Family::Table), ..common("16") };
        assert!(ExperimentConfig::resolve(Some(Experiment::Tail), &table_without_values, Params::default()).is_err());
        let two_envs = common("16,32");
        assert!(ExperimentConfig::resolve(Some(Experiment::Env), &two_envs, Params::default()).is_err());
        let no_out = CommonArgs { out: None, ..common("16") };
        assert!(ExperimentConfig::resolve(Some(Experiment::Tail), &no_out, Params::default()).is_err());
    }

    #[test]
    fn config_round_trips_as_json() {
        let c = ExperimentConfig::resolve(Some(Experiment::Walk), &common("4,8"), Params { horizon: Some(7), ..Default::default() })
            .unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn trajectory_tail_counts_censored_as_alive() {
        let lines = [
            TrajectoryLine { t: Some(1), censored: false },
            TrajectoryLine { t: Some(3), censored: false },
            TrajectoryLine { t: Some(9), censored: false },
            TrajectoryLine { t: None, censored: true },
        ];
        let pts = trajectory_tail(&lines).unwrap();
        let got: Vec<(u64, f64)> = pts.iter().map(|p| (p.n, p.estimate)).collect();
        assert_eq!(got, vec![(1, 0.75), (2, 0.75), (4, 0.5), (8, 0.5)]);
    }
}
