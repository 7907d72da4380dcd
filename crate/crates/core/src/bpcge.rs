//! Branching process with geometric offspring in the correlated environment.
//!
//! Generation `n` reproduces with `P(O = m) = (1 - omega_n) omega_n^m`, whose
//! mean is `e^{-X_n}`. The same generation sizes arise from the walk by
//! counting up-steps `n - 1 -> n` before the first visit to `-1`.

use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::envgen::Environment;
use crate::error::{Error, Result};
use crate::numerics::{binomial_stderr, log_sum_exp};
use crate::seed::{self, Rng};

/// Generations up to this size draw one geometric per individual; larger ones
/// draw the generation total from its negative binomial law.
pub const DIRECT_SUM_LIMIT: u64 = 4096;

pub const DEFAULT_MAX_TOTAL: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub max_generations: u64,
    #[serde(default = "default_max_total")]
    pub max_total: u64,
}

fn default_max_total() -> u64 {
    DEFAULT_MAX_TOTAL
}

impl Caps {
    pub fn generations(max_generations: u64) -> Self {
        Self { max_generations, max_total: DEFAULT_MAX_TOTAL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensorReason {
    Generations,
    Population,
    Environment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchingTrajectory {
    /// `Z_0, Z_1, ...`; ends with 0 when the population died out.
    pub z: Vec<u64>,
    pub extinction_time: Option<u64>,
    pub total: u64,
    pub max_pop: u64,
    pub censored: Option<CensorReason>,
    pub seed: u64,
}

impl BranchingTrajectory {
    fn from_sizes(z: Vec<u64>, censored: Option<CensorReason>, seed: u64) -> Self {
        let total = z.iter().fold(0u64, |a, &b| a.saturating_add(b));
        let max_pop = z.iter().copied().max().unwrap_or(0);
        let extinction_time = if censored.is_some() {
            None
        } else {
            z.iter().skip(1).position(|&zn| zn == 0).map(|p| p as u64 + 1)
        };
        Self { z, extinction_time, total, max_pop, censored, seed }
    }

    pub fn is_censored(&self) -> bool {
        self.censored.is_some()
    }

    /// Last generation whose size is recorded.
    pub fn last_generation(&self) -> u64 {
        self.z.len() as u64 - 1
    }

    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line {
            seed: u64,
            #[serde(rename = "T")]
            t: Option<u64>,
            total: u64,
            max: u64,
            censored: bool,
        }
        serde_json::to_string(&Line {
            seed: self.seed,
            t: self.extinction_time,
            total: self.total,
            max: self.max_pop,
            censored: self.is_censored(),
        })
        .expect("trajectory line serializes")
    }
}

/// Geometric draw on `{0, 1, ...}` with `P(O = m) = (1 - omega) omega^m`, by
/// inversion `floor(log U / log omega)`.
pub fn sample_offspring(omega: f64, rng: &mut Rng) -> u64 {
    // U in (0, 1]
    let u = 1.0 - rng.random::<f64>();
    let draw = (u.ln() / omega.ln()).floor();
    if draw >= u64::MAX as f64 {
        u64::MAX
    } else {
        draw as u64
    }
}

/// Total offspring of `parents` individuals sharing parameter `omega`.
fn generation_total(parents: u64, omega: f64, rng: &mut Rng) -> u64 {
    if parents <= DIRECT_SUM_LIMIT {
        let mut sum = 0u64;
        for _ in 0..parents {
            sum = sum.saturating_add(sample_offspring(omega, rng));
        }
        return sum;
    }
    // NegBin(parents, 1 - omega) = Poisson(Gamma(parents, omega / (1 - omega)))
    let scale = omega / (1.0 - omega);
    let Ok(gamma) = Gamma::new(parents as f64, scale) else {
        return 0;
    };
    let lambda: f64 = gamma.sample(rng);
    if !(lambda > 0.0) {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(p) => {
            let k: f64 = p.sample(rng);
            k as u64
        }
        // beyond Poisson's supported range the draw is lambda to relative 1e-9
        Err(_) => lambda.round() as u64,
    }
}

/// Runs `Z_{n+1} = sum_{k=1}^{Z_n} O_{n,k}` from `Z_0 = 1`.
pub fn simulate(env: &Environment, caps: Caps, seed: u64) -> BranchingTrajectory {
    let mut rng = seed::rng(seed);
    let omega = env.omegas();
    let mut z = vec![1u64];
    let mut total = 1u64;
    let mut generation = 0usize;
    loop {
        let current = z[generation];
        if current == 0 {
            return BranchingTrajectory::from_sizes(z, None, seed);
        }
        if generation as u64 >= caps.max_generations {
            return BranchingTrajectory::from_sizes(z, Some(CensorReason::Generations), seed);
        }
        if generation >= omega.len() {
            return BranchingTrajectory::from_sizes(z, Some(CensorReason::Environment), seed);
        }
        let next = generation_total(current, omega[generation], &mut rng);
        z.push(next);
        total = total.saturating_add(next);
        generation += 1;
        if total > caps.max_total {
            return BranchingTrajectory::from_sizes(z, Some(CensorReason::Population), seed);
        }
    }
}

/// Generation sizes read off a walk path `0 = S_0, ..., S_tau = -1`.
pub fn from_walk(env: &Environment, path: &[i64]) -> Result<BranchingTrajectory> {
    let Some((&last, body)) = path.split_last() else {
        return Err(Error::PathCensored);
    };
    if path[0] != 0 {
        return Err(Error::invalid("walk path must start at 0"));
    }
    if last != -1 || body.iter().any(|&s| s < 0) {
        return Err(Error::PathCensored);
    }
    if path.windows(2).any(|w| (w[1] - w[0]).abs() != 1) {
        return Err(Error::invalid("walk path must move by one site per step"));
    }
    let top = body.iter().copied().max().unwrap_or(0);
    if top > env.n() as i64 {
        return Err(Error::IndexOutOfEnvironment { index: top, low: -1, high: env.n() as i64 });
    }
    // z[n] for n >= 1 counts steps n-1 -> n; one slot past the top stays 0.
    let mut z = vec![0u64; top as usize + 2];
    z[0] = 1;
    for w in path.windows(2) {
        if w[1] == w[0] + 1 {
            z[w[1] as usize] += 1;
        }
    }
    Ok(BranchingTrajectory::from_sizes(z, None, env.seed))
}

/// Probability that at least one of `population` individuals alive at
/// generation `generation` has descendants at generation `big_n`.
///
/// One individual at generation `c` corresponds to a walk excursion from `c`
/// that reaches `N` before `c - 1`, with probability
/// `e^{V(c-1)} / sum_{k=c-1}^{N-1} e^{V(k)}`.
pub fn survival_from_generation(env: &Environment, generation: u64, population: u64, big_n: u64) -> Result<f64> {
    if population == 0 {
        return Ok(0.0);
    }
    if generation >= big_n {
        return Ok(1.0);
    }
    let c = generation as i64;
    let den = log_sum_exp(env.v_range(c - 1, big_n as i64 - 1)?);
    let p = (env.v(c - 1)? - den).exp();
    Ok(-(population as f64 * (-p).ln_1p()).exp_m1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub n: u64,
    /// Censored trajectories with unknown status counted as not exceeding.
    pub estimate: f64,
    /// Same with unknown status counted as exceeding.
    pub upper: f64,
    pub stderr: f64,
    /// Trajectories whose status at this `n` is unknown.
    pub unknown: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailStatistics {
    pub trajectories: u64,
    pub censored: u64,
    /// `P[T > n]`
    pub extinction: Vec<SurvivalPoint>,
    /// `P[sum Z > n]`
    pub total: Vec<SurvivalPoint>,
    /// `P[sup Z > n]`
    pub max_pop: Vec<SurvivalPoint>,
}

/// Empirical survival curves on the dyadic grid `1, 2, 4, ...` up to the
/// largest observed value.
pub fn tail_statistics(trajectories: &[BranchingTrajectory]) -> Result<TailStatistics> {
    let largest = trajectories
        .iter()
        .map(|t| t.total.max(t.last_generation()))
        .max()
        .unwrap_or(1)
        .max(1);
    let mut grid = Vec::new();
    let mut n = 1u64;
    while n <= largest {
        grid.push(n);
        n = match n.checked_mul(2) {
            Some(m) => m,
            None => break,
        };
    }
    tail_statistics_on(trajectories, &grid)
}

/// Known(true/false) or unknown status of one event for one trajectory.
fn status(known_exceeds: bool, known_not: bool) -> Option<bool> {
    if known_exceeds {
        Some(true)
    } else if known_not {
        Some(false)
    } else {
        None
    }
}

pub fn tail_statistics_on(trajectories: &[BranchingTrajectory], grid: &[u64]) -> Result<TailStatistics> {
    if trajectories.is_empty() {
        return Err(Error::invalid("tail statistics need at least one trajectory"));
    }
    let censored = trajectories.iter().filter(|t| t.is_censored()).count() as u64;
    if censored == trajectories.len() as u64 {
        return Err(Error::AllCensored);
    }
    let curve = |event: &dyn Fn(&BranchingTrajectory, u64) -> Option<bool>| -> Vec<SurvivalPoint> {
        grid.iter()
            .map(|&n| {
                let (mut yes, mut unknown) = (0u64, 0u64);
                for t in trajectories {
                    match event(t, n) {
                        Some(true) => yes += 1,
                        Some(false) => {}
                        None => unknown += 1,
                    }
                }
                let reps = trajectories.len() as u64;
                let estimate = yes as f64 / reps as f64;
                SurvivalPoint {
                    n,
                    estimate,
                    upper: (yes + unknown) as f64 / reps as f64,
                    stderr: binomial_stderr(estimate, reps),
                    unknown,
                }
            })
            .collect()
    };
    let extinction = curve(&|t, n| match t.extinction_time {
        Some(time) => Some(time > n),
        None => status(n <= t.last_generation(), false),
    });
    let total = curve(&|t, n| status(t.total > n, !t.is_censored() && t.total <= n));
    let max_pop = curve(&|t, n| status(t.max_pop > n, !t.is_censored() && t.max_pop <= n));
    Ok(TailStatistics { trajectories: trajectories.len() as u64, censored, extinction, total, max_pop })
}

pub fn write_trajectories_jsonl<W: Write>(trajectories: &[BranchingTrajectory], mut out: W) -> std::io::Result<()> {
    for t in trajectories {
        writeln!(out, "{}", t.to_json_line())?;
    }
    Ok(())
}
