//! Quenched dynamics of the nearest-neighbour walk in a fixed environment.
//!
//! From site `i` the walk steps to `i + 1` with probability `omega_i` and to
//! `i - 1` otherwise. Hitting probabilities are ratios of sums of `e^{V(k)}`
//! and are always evaluated in log space.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::envgen::Environment;
use crate::error::{Error, Result};
use crate::numerics::log_sum_exp;
use crate::seed;

/// Walk started at `start`, stopped on reaching `low` or `high`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitQuery {
    pub low: i64,
    pub start: i64,
    pub high: i64,
}

impl HitQuery {
    pub fn new(low: i64, start: i64, high: i64) -> Result<Self> {
        if !(low < start && start < high) {
            return Err(Error::invalid(format!(
                "hit query needs low < start < high, got ({low}, {start}, {high})"
            )));
        }
        Ok(Self { low, start, high })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HitKind {
    HitLow,
    HitHigh,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitOutcome {
    pub kind: HitKind,
    /// Steps taken.
    pub time: u64,
}

/// `P^q[tau(r) < tau(p)] = sum_{k=p}^{q-1} e^{V(k)} / sum_{k=p}^{r-1} e^{V(k)}`.
pub fn hit_prob(env: &Environment, query: &HitQuery) -> Result<f64> {
    env.v_range(query.low, query.high - 1)?;
    Ok(exp_sum_ratio(env.v_range(-1, env.n() as i64)?, query.low, query.start - 1, query.high - 1))
}

/// `sum_{k=lo}^{num_hi} e^{V(k)} / sum_{k=lo}^{den_hi} e^{V(k)}` where
/// `potential[k + 1] = V(k)`.
pub(crate) fn exp_sum_ratio(potential: &[f64], lo: i64, num_hi: i64, den_hi: i64) -> f64 {
    let at = |k: i64| (k + 1) as usize;
    let num = log_sum_exp(&potential[at(lo)..=at(num_hi)]);
    let den = log_sum_exp(&potential[at(lo)..=at(den_hi)]);
    (num - den).exp()
}

/// `P^q[tau(p) < tau(r)]` from its own ratio `sum_{k=q}^{r-1} / sum_{k=p}^{r-1}`.
pub fn hit_prob_reflected(env: &Environment, query: &HitQuery) -> Result<f64> {
    let num = log_sum_exp(env.v_range(query.start, query.high - 1)?);
    let den = log_sum_exp(env.v_range(query.low, query.high - 1)?);
    Ok((num - den).exp())
}

/// `P[tau(N) < tau(-1)] = e^{V(-1)} / sum_{k=-1}^{N-1} e^{V(k)}`.
pub fn survival_prob(env: &Environment, big_n: u64) -> Result<f64> {
    if big_n == 0 {
        return Err(Error::invalid("N must be positive"));
    }
    env.v_range(-1, big_n as i64 - 1)?;
    Ok(exp_sum_ratio(env.v_range(-1, env.n() as i64)?, -1, -1, big_n as i64 - 1))
}

/// Upper bound on `E^h[tau(g) ^ tau(i)]`:
/// `sum_{k=h}^{i-1} sum_{l=g}^{k} (1 + e^{X_l}) e^{V(k) - V(l)}`.
pub fn exit_time_bound(env: &Environment, g: i64, h: i64, i: i64) -> Result<f64> {
    Ok(log_exit_time_bound(env, g, h, i)?.exp())
}

/// Natural log of [`exit_time_bound`].
pub fn log_exit_time_bound(env: &Environment, g: i64, h: i64, i: i64) -> Result<f64> {
    if !(g < h && h < i) {
        return Err(Error::invalid(format!("exit bound needs g < h < i, got ({g}, {h}, {i})")));
    }
    // inner[l] = log(1 + e^{X_l}) - V(l); prefix log-sums over l = g..=k.
    let mut prefix = f64::NEG_INFINITY;
    let mut outer = Vec::with_capacity((i - h) as usize);
    for l in g..i {
        let x = env.x(l)?;
        let log_weight = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
        let term = log_weight - env.v(l)?;
        prefix = log_add(prefix, term);
        if l >= h {
            outer.push(env.v(l)? + prefix);
        }
    }
    Ok(log_sum_exp(&outer))
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn check_walk_sites(env: &Environment, query: &HitQuery) -> Result<()> {
    env.omega(query.low + 1)?;
    env.omega(query.high - 1)?;
    Ok(())
}

/// Runs the walk for at most `horizon` steps.
pub fn simulate_walk(env: &Environment, query: &HitQuery, horizon: u64, seed: u64) -> Result<HitOutcome> {
    check_walk_sites(env, query)?;
    let omega = env.omegas();
    let mut rng = seed::rng(seed);
    let mut pos = query.start;
    let mut time = 0u64;
    loop {
        if pos == query.low {
            return Ok(HitOutcome { kind: HitKind::HitLow, time });
        }
        if pos == query.high {
            return Ok(HitOutcome { kind: HitKind::HitHigh, time });
        }
        if time == horizon {
            return Ok(HitOutcome { kind: HitKind::Censored, time });
        }
        let u: f64 = rng.random();
        pos += if u < omega[pos as usize] { 1 } else { -1 };
        time += 1;
    }
}

/// Same dynamics as [`simulate_walk`] but also returns the visited sites
/// `S_0, S_1, ..., S_time`.
pub fn simulate_walk_path(
    env: &Environment,
    query: &HitQuery,
    horizon: u64,
    seed: u64,
) -> Result<(HitOutcome, Vec<i64>)> {
    check_walk_sites(env, query)?;
    let omega = env.omegas();
    let mut rng = seed::rng(seed);
    let mut pos = query.start;
    let mut path = vec![pos];
    loop {
        let time = path.len() as u64 - 1;
        if pos == query.low {
            return Ok((HitOutcome { kind: HitKind::HitLow, time }, path));
        }
        if pos == query.high {
            return Ok((HitOutcome { kind: HitKind::HitHigh, time }, path));
        }
        if time == horizon {
            return Ok((HitOutcome { kind: HitKind::Censored, time }, path));
        }
        let u: f64 = rng.random();
        pos += if u < omega[pos as usize] { 1 } else { -1 };
        path.push(pos);
    }
}

/// Probability mass after an `N`-step forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistenceMass {
    /// `P[min_{k<=N} S_k > -1]`.
    pub surviving: f64,
    /// `P[tau(-1) <= N]`.
    pub absorbed: f64,
}

/// `P[min_{k=1..N} S_k > -1]` by exact forward propagation over sites `0..=N`.
pub fn persistence_dp(env: &Environment, big_n: u64) -> Result<f64> {
    Ok(persistence_mass(env, big_n)?.surviving)
}

pub fn persistence_mass(env: &Environment, big_n: u64) -> Result<PersistenceMass> {
    if big_n == 0 {
        return Err(Error::invalid("N must be positive"));
    }
    let n = big_n as usize;
    env.omega(n as i64)?;
    let omega = env.omegas();
    // At step t only sites with the parity of t carry mass, so moving mass to
    // s +- 1 never touches a value still to be read in the same sweep.
    let mut mass = vec![0.0_f64; n + 1];
    mass[0] = 1.0;
    let mut absorbed = 0.0;
    for t in 0..n {
        let top = t.min(n);
        let mut s = t % 2;
        while s <= top {
            let m = mass[s];
            if m != 0.0 {
                mass[s] = 0.0;
                let up = omega[s];
                mass[s + 1] += m * up;
                if s == 0 {
                    absorbed += m * (1.0 - up);
                } else {
                    mass[s - 1] += m * (1.0 - up);
                }
            }
            s += 2;
        }
    }
    let surviving = crate::numerics::pairwise_sum(&mass);
    Ok(PersistenceMass { surviving, absorbed })
}
