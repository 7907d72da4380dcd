//! Monte Carlo engine and the estimators built on it.
//!
//! Replicate `i` of a run with master seed `m` is seeded with
//! [`split_seed(m, i)`](crate::seed::split_seed), and results are collected in
//! replicate order, so every estimate is a pure function of its configuration
//! and master seed no matter how many workers execute it.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::bpcge::{self, BranchingTrajectory, Caps, CensorReason, DEFAULT_MAX_TOTAL};
use crate::covariance::{CovarianceModel, Family};
use crate::envgen::{potential_from_noise, Environment, NoiseSampler};
use crate::error::{Error, Result};
use crate::numerics::{binomial_stderr, log_sum_exp, mean_and_stderr};
use crate::passage::{self, EnvEventParams, EventReport};
use crate::seed::split_seed;
use crate::walk::{self, HitKind, HitQuery};

/// Evaluates `job(i, split_seed(master_seed, i))` for `i in 0..reps`.
///
/// `workers <= 1` runs inline; larger values use a dedicated thread pool of
/// that size (when built with the `parallel` feature).
pub fn run_replicates<T, F>(reps: u64, master_seed: u64, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync + Send,
{
    let run = |i: u64| job(i, split_seed(master_seed, i));
    #[cfg(feature = "parallel")]
    if workers > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        return pool.install(|| (0..reps).into_par_iter().map(run).collect());
    }
    let _ = workers;
    (0..reps).map(run).collect()
}

/// One point of an estimate series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub n: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub reps: u64,
    pub censored: u64,
}

impl Estimate {
    fn from_values(n: u64, values: &[f64], censored: u64) -> Self {
        let (estimate, stderr) = mean_and_stderr(values);
        Self { n, estimate, stderr, reps: values.len() as u64, censored }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSeries {
    pub points: Vec<Estimate>,
    pub model: CovarianceModel,
    pub label: String,
}

pub const SERIES_HEADER: &str = "n,estimate,stderr,reps,censored";

impl EstimateSeries {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{SERIES_HEADER}")?;
        for p in &self.points {
            writeln!(out, "{},{},{},{},{}", p.n, p.estimate, p.stderr, p.reps, p.censored)?;
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.points {
            writeln!(out, "{}", serde_json::to_string(p).map_err(std::io::Error::other)?)?;
        }
        Ok(())
    }

    /// Reads the points written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<Estimate>> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != SERIES_HEADER {
            return Err(Error::invalid(format!("series CSV must start with `{SERIES_HEADER}`")));
        }
        let mut points = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || Error::invalid(format!("malformed series row {}: {line:?}", row + 2));
            if cols.len() != 5 {
                return Err(bad());
            }
            points.push(Estimate {
                n: cols[0].parse().map_err(|_| bad())?,
                estimate: cols[1].parse().map_err(|_| bad())?,
                stderr: cols[2].parse().map_err(|_| bad())?,
                reps: cols[3].parse().map_err(|_| bad())?,
                censored: cols[4].parse().map_err(|_| bad())?,
            });
        }
        Ok(points)
    }
}

/// Least-squares fit of `log(estimate)` on `log(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn fit_power_law(points: &[Estimate]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::invalid("a power-law fit needs at least 3 points"));
    }
    if let Some(p) = points.iter().find(|p| !(p.estimate > 0.0) || p.n == 0) {
        return Err(Error::NonPositiveEstimate { n: p.n, estimate: p.estimate });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.estimate.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("a power-law fit needs at least two distinct n"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let sst: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 1.0 };
    let slope_stderr = (ssr / (m - 2.0) / sxx).sqrt();
    Ok(FitResult { slope, intercept, slope_stderr, r_squared, points: points.len() })
}

/// `(sum_{l=start}^{x} e^{V(l)})^{-1}` with `start` 0 or 1.
pub fn reciprocal_exp_sum(env: &Environment, x: u64, start: u8) -> Result<f64> {
    env.v_range(0, x as i64)?;
    reciprocal_exp_sum_in(env.potential(), x, start)
}

/// [`reciprocal_exp_sum`] on a bare potential `[V(0), V(1), ...]`.
pub fn reciprocal_exp_sum_in(potential: &[f64], x: u64, start: u8) -> Result<f64> {
    if start > 1 {
        return Err(Error::invalid("start must be 0 or 1"));
    }
    if x < start as u64 {
        return Err(Error::invalid("x must be at least start"));
    }
    let end = x as usize;
    if end >= potential.len() {
        return Err(Error::IndexOutOfEnvironment { index: x as i64, low: 0, high: potential.len() as i64 - 1 });
    }
    Ok((-log_sum_exp(&potential[start as usize..=end])).exp())
}

fn sampled_values<F>(model: &CovarianceModel, n: u64, reps: u64, seed: u64, workers: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let sampler = NoiseSampler::new(model, n as usize)?;
    Ok(run_replicates(reps, seed, workers, |_, s| f(&potential_from_noise(&sampler.sample(s)))))
}

/// `P[T > N] = E[(sum_{k=0}^{N} e^{V(k)})^{-1}]`, averaged over fresh
/// environments. No walk or branching simulation is involved.
pub fn extinction_tail_estimate(
    model: &CovarianceModel,
    big_n: u64,
    reps: u64,
    seed: u64,
    workers: usize,
) -> Result<Estimate> {
    if big_n < 1 || reps < 2 {
        return Err(Error::invalid("extinction tail needs N >= 1 and reps >= 2"));
    }
    let values = sampled_values(model, big_n, reps, seed, workers, |v| {
        (-log_sum_exp(&v[..=big_n as usize])).exp()
    })?;
    Ok(Estimate::from_values(big_n, &values, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Estimate {
    pub x: u64,
    pub start: u8,
    /// Monte Carlo mean of the reciprocal sum.
    pub mean: f64,
    pub mean_stderr: f64,
    /// `x^{1-H}` times the mean.
    pub value: f64,
    pub stderr: f64,
    /// Whether `sigma_n^2 = n^{2H}` holds exactly, so that no slowly varying
    /// correction is owed.
    pub exact_scaling: bool,
}

/// `x^{1-H} E[(sum_{l=start}^{x} e^{V(l)})^{-1}]`.
pub fn lemma4_functional(
    model: &CovarianceModel,
    x: u64,
    reps: u64,
    seed: u64,
    start: u8,
    workers: usize,
) -> Result<Lemma4Estimate> {
    if x < 2 {
        return Err(Error::invalid("x must be at least 2"));
    }
    if start > 1 {
        return Err(Error::invalid("start must be 0 or 1"));
    }
    let values = sampled_values(model, x, reps, seed, workers, |v| {
        (-log_sum_exp(&v[start as usize..=x as usize])).exp()
    })?;
    let (mean, mean_stderr) = mean_and_stderr(&values);
    let scale = (x as f64).powf(1.0 - model.hurst);
    Ok(Lemma4Estimate {
        x,
        start,
        mean,
        mean_stderr,
        value: scale * mean,
        stderr: scale * mean_stderr,
        exact_scaling: matches!(model.family, Family::Fgn | Family::Iid | Family::Flat),
    })
}

/// Direct branching-process estimate of `P[T > N]`.
///
/// A trajectory stopped by the population cap at generation `c < N` with
/// `Z_c` individuals contributes its exact conditional survival probability
/// given the environment, `1 - (1 - p_c)^{Z_c}`; such trajectories are
/// reported in `censored`.
pub fn branching_tail_frequency(
    model: &CovarianceModel,
    big_n: u64,
    reps: u64,
    seed: u64,
    max_total: u64,
    workers: usize,
) -> Result<Estimate> {
    Ok(branching_tail_with_trajectories(model, big_n, reps, seed, max_total, workers)?.0)
}

/// [`branching_tail_frequency`] together with the simulated trajectories,
/// in replicate order.
pub fn branching_tail_with_trajectories(
    model: &CovarianceModel,
    big_n: u64,
    reps: u64,
    seed: u64,
    max_total: u64,
    workers: usize,
) -> Result<(Estimate, Vec<BranchingTrajectory>)> {
    if big_n < 1 || reps < 2 {
        return Err(Error::invalid("branching tail needs N >= 1 and reps >= 2"));
    }
    let sampler = NoiseSampler::new(model, big_n as usize)?;
    let caps = Caps { max_generations: big_n, max_total };
    let outcomes = run_replicates(reps, seed, workers, |_, s| -> Result<(f64, BranchingTrajectory)> {
        let env = Environment::from_noise(model.clone(), sampler.sample(split_seed(s, 0)), s);
        let traj = bpcge::simulate(&env, caps, split_seed(s, 1));
        let value = match (traj.extinction_time, traj.censored) {
            (Some(t), _) => (t > big_n) as u8 as f64,
            (None, Some(CensorReason::Population)) => {
                let c = traj.last_generation();
                bpcge::survival_from_generation(&env, c, traj.z[c as usize], big_n)?
            }
            // reached generation N alive
            (None, _) => 1.0,
        };
        Ok((value, traj))
    });
    let mut values = Vec::with_capacity(reps as usize);
    let mut trajectories = Vec::with_capacity(reps as usize);
    let mut censored = 0;
    for o in outcomes {
        let (v, traj) = o?;
        censored += (traj.censored == Some(CensorReason::Population)) as u64;
        values.push(v);
        trajectories.push(traj);
    }
    Ok((Estimate::from_values(big_n, &values, censored), trajectories))
}

/// Walk estimate of `P[tau(N) < tau(-1)]`; walks still running after
/// `horizon` steps count as failures and are reported in `censored`.
pub fn walk_survival_frequency(
    model: &CovarianceModel,
    big_n: u64,
    reps: u64,
    seed: u64,
    horizon: u64,
    workers: usize,
) -> Result<Estimate> {
    if big_n < 1 || reps < 2 {
        return Err(Error::invalid("walk survival needs N >= 1 and reps >= 2"));
    }
    let sampler = NoiseSampler::new(model, big_n as usize)?;
    let query = HitQuery::new(-1, 0, big_n as i64)?;
    let outcomes = run_replicates(reps, seed, workers, |_, s| {
        let env = Environment::from_noise(model.clone(), sampler.sample(split_seed(s, 0)), s);
        walk::simulate_walk(&env, &query, horizon, split_seed(s, 1)).map(|o| o.kind)
    });
    let mut values = Vec::with_capacity(reps as usize);
    let mut censored = 0;
    for o in outcomes {
        let kind = o?;
        censored += (kind == HitKind::Censored) as u64;
        values.push((kind == HitKind::HitHigh) as u8 as f64);
    }
    let hits = values.iter().sum::<f64>();
    let estimate = hits / reps as f64;
    Ok(Estimate { n: big_n, estimate, stderr: binomial_stderr(estimate, reps), reps, censored })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// `P(B_N^c)`
    #[default]
    BadComplement,
    /// `P(G_N)`
    Good,
}

/// Frequency of the chosen event among `reports`.
pub fn event_estimate(n: u64, reports: &[EventReport], kind: EventKind) -> Estimate {
    let hits = reports
        .iter()
        .filter(|r| match kind {
            EventKind::BadComplement => !r.bad.as_ref().is_some_and(|b| b.bad),
            EventKind::Good => r.good.as_ref().is_some_and(|g| g.good),
        })
        .count() as u64;
    let reps = reports.len() as u64;
    let estimate = if reps == 0 { 0.0 } else { hits as f64 / reps as f64 };
    Estimate { n, estimate, stderr: binomial_stderr(estimate, reps), reps, censored: 0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Task {
    Tail { model: CovarianceModel, grid: Vec<u64>, reps: u64 },
    Branching { model: CovarianceModel, grid: Vec<u64>, reps: u64, max_total: u64 },
    Walk { model: CovarianceModel, grid: Vec<u64>, reps: u64, horizon: u64 },
    HitOrder { model: CovarianceModel, grid: Vec<u64>, reps: u64, y: f64, horizon_factor: f64 },
    Persistence { model: CovarianceModel, grid: Vec<u64>, reps: u64, barrier: f64 },
    Events { model: CovarianceModel, grid: Vec<u64>, reps: u64, params: EnvEventParams, kind: EventKind },
    Lemma4 { model: CovarianceModel, grid: Vec<u64>, reps: u64, start: u8 },
}

impl Task {
    pub fn model(&self) -> &CovarianceModel {
        match self {
            Task::Tail { model, .. }
            | Task::Branching { model, .. }
            | Task::Walk { model, .. }
            | Task::HitOrder { model, .. }
            | Task::Persistence { model, .. }
            | Task::Events { model, .. }
            | Task::Lemma4 { model, .. } => model,
        }
    }

    pub fn grid(&self) -> &[u64] {
        match self {
            Task::Tail { grid, .. }
            | Task::Branching { grid, .. }
            | Task::Walk { grid, .. }
            | Task::HitOrder { grid, .. }
            | Task::Persistence { grid, .. }
            | Task::Events { grid, .. }
            | Task::Lemma4 { grid, .. } => grid,
        }
    }

    fn reps(&self) -> u64 {
        match self {
            Task::Tail { reps, .. }
            | Task::Branching { reps, .. }
            | Task::Walk { reps, .. }
            | Task::HitOrder { reps, .. }
            | Task::Persistence { reps, .. }
            | Task::Events { reps, .. }
            | Task::Lemma4 { reps, .. } => *reps,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Task::Tail { .. } => "P[T > N] via E[1/sum e^V]",
            Task::Branching { .. } => "P[T > N] via branching simulation",
            Task::Walk { .. } => "P[tau(N) < tau(-1)] via walk simulation",
            Task::HitOrder { .. } => "P[T(-x) < T(y)]",
            Task::Persistence { .. } => "P[max V(k) <= barrier]",
            Task::Events { kind: EventKind::BadComplement, .. } => "P(B_N^c)",
            Task::Events { kind: EventKind::Good, .. } => "P(G_N)",
            Task::Lemma4 { .. } => "x^{1-H} E[1/sum e^V]",
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model().validate()?;
        let grid = self.grid();
        if grid.is_empty() {
            return Err(Error::invalid("grid must not be empty"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        if self.reps() < 1 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        match self {
            Task::Events { params, grid, .. } => {
                params.validate()?;
                if grid[0] < 16 {
                    return Err(Error::BigNTooSmall(grid[0]));
                }
            }
            Task::HitOrder { y, grid, horizon_factor, .. } => {
                if !(*y > 0.0) || grid[0] as f64 <= *y {
                    return Err(Error::invalid("hit order needs every x > y > 0"));
                }
                if !(*horizon_factor > 0.0) {
                    return Err(Error::invalid("horizon factor must be positive"));
                }
            }
            Task::Lemma4 { grid, start, .. } => {
                if grid[0] < 2 {
                    return Err(Error::invalid("x must be at least 2"));
                }
                if *start > 1 {
                    return Err(Error::invalid("start must be 0 or 1"));
                }
            }
            Task::Tail { grid, reps, .. } | Task::Branching { grid, reps, .. } | Task::Walk { grid, reps, .. } => {
                if grid[0] < 1 || *reps < 2 {
                    return Err(Error::invalid("N must be positive and reps at least 2"));
                }
            }
            Task::Persistence { grid, .. } => {
                if grid[0] < 1 {
                    return Err(Error::invalid("n must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Estimate at one grid point, using `seed` as that point's master seed.
    pub fn point(&self, n: u64, seed: u64, workers: usize) -> Result<Estimate> {
        match self {
            Task::Tail { model, reps, .. } => extinction_tail_estimate(model, n, *reps, seed, workers),
            Task::Branching { model, reps, max_total, .. } => {
                branching_tail_frequency(model, n, *reps, seed, *max_total, workers)
            }
            Task::Walk { model, reps, horizon, .. } => walk_survival_frequency(model, n, *reps, seed, *horizon, workers),
            Task::HitOrder { model, reps, y, horizon_factor, .. } => {
                let e = passage::hit_order_mc(model, n as f64, *y, *reps, *horizon_factor, seed, workers)?;
                Ok(Estimate { n, estimate: e.estimate, stderr: e.stderr, reps: e.reps, censored: e.censored })
            }
            Task::Persistence { model, reps, barrier, .. } => {
                passage::potential_persistence_mc(model, n, *reps, seed, *barrier, workers)
            }
            Task::Events { model, reps, params, kind, .. } => {
                let reports = passage::sample_events(model, n, params, *reps, seed, workers)?;
                Ok(event_estimate(n, &reports, *kind))
            }
            Task::Lemma4 { model, reps, start, .. } => {
                let e = lemma4_functional(model, n, *reps, seed, *start, workers)?;
                Ok(Estimate { n, estimate: e.value, stderr: e.stderr, reps: *reps, censored: 0 })
            }
        }
    }
}

/// Master seed of grid point `index`.
pub fn grid_point_seed(master_seed: u64, index: usize) -> u64 {
    split_seed(master_seed, index as u64)
}

/// Runs a task over its whole grid.
pub fn mc_run(task: &Task, master_seed: u64, workers: usize) -> Result<EstimateSeries> {
    mc_run_with(task, master_seed, workers, |_| {})
}

/// [`mc_run`] with a callback after each grid point.
pub fn mc_run_with<F: FnMut(&Estimate)>(
    task: &Task,
    master_seed: u64,
    workers: usize,
    mut on_point: F,
) -> Result<EstimateSeries> {
    task.validate()?;
    let mut points = Vec::with_capacity(task.grid().len());
    for (g, &n) in task.grid().iter().enumerate() {
        let p = task.point(n, grid_point_seed(master_seed, g), workers)?;
        on_point(&p);
        points.push(p);
    }
    Ok(EstimateSeries { points, model: task.model().clone(), label: task.label().to_string() })
}

/// Default population cap for branching tasks.
pub const fn default_max_total() -> u64 {
    DEFAULT_MAX_TOTAL
}
