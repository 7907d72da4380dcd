//! First-passage functionals of the potential and the environment events
//! built from them.
//!
//! `T(x)` is the first index `k >= 0` with `V(k) >= x` when `x > 0`, or
//! `V(k) <= x` when `x < 0`. A passage that does not happen inside the
//! sampled range is reported as `None` and compares as `+inf`.

use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::envgen::{potential_from_noise, Environment, NoiseSampler};
use crate::error::{Error, Result};
use crate::mc::{self, Estimate};
use crate::numerics::{binomial_stderr, log_sum_exp};
use crate::seed;

/// First `k <= horizon` at which the potential crosses `level`.
pub fn first_passage(env: &Environment, level: f64, horizon: u64) -> Result<Option<u64>> {
    if level == 0.0 {
        return Err(Error::LevelZero);
    }
    if horizon > env.n() as u64 {
        return Err(Error::EnvironmentTooShort { needed: horizon as usize, available: env.n() });
    }
    Ok(first_passage_in(&env.potential()[..=horizon as usize], level))
}

/// Crossing index within `potential = [V(0), V(1), ...]`.
pub fn first_passage_in(potential: &[f64], level: f64) -> Option<u64> {
    if level > 0.0 {
        potential.iter().position(|&v| v >= level).map(|k| k as u64)
    } else {
        potential.iter().position(|&v| v <= level).map(|k| k as u64)
    }
}

/// Whether `x > y > e` and the side condition `log x <= (log(x / y))^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitOrderConditions {
    pub y_exceeds_e: bool,
    /// Smallest `alpha` with `log x <= (log(x/y))^alpha`; `None` when
    /// `log(x/y) <= 1`, where no `alpha > 1` helps.
    pub min_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitOrderEstimate {
    pub x: f64,
    pub y: f64,
    pub horizon: u64,
    pub reps: u64,
    /// Fraction of environments with `T(-x) < T(y)`; censored replicates count
    /// as not hitting `-x` first.
    pub estimate: f64,
    pub stderr: f64,
    pub low_first: u64,
    pub high_first: u64,
    pub censored: u64,
    pub conditions: HitOrderConditions,
}

/// `ceil(factor * x^{1/H} (log x)^2)`.
pub fn hit_order_horizon(x: f64, hurst: f64, horizon_factor: f64) -> u64 {
    (horizon_factor * x.powf(1.0 / hurst) * x.ln().powi(2)).ceil() as u64
}

/// Outcome of one potential path for the hit-order race.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Race {
    LowFirst,
    HighFirst,
    Neither,
}

pub fn race(potential: &[f64], low: f64, high: f64) -> Race {
    for &v in potential {
        if v <= low {
            return Race::LowFirst;
        }
        if v >= high {
            return Race::HighFirst;
        }
    }
    Race::Neither
}

/// Monte Carlo estimate of `P[T(-x) < T(y)]` over fresh potentials.
pub fn hit_order_mc(
    model: &CovarianceModel,
    x: f64,
    y: f64,
    reps: u64,
    horizon_factor: f64,
    seed: u64,
    workers: usize,
) -> Result<HitOrderEstimate> {
    if !(y > 0.0 && x > y) {
        return Err(Error::invalid(format!("hit order needs x > y > 0, got x = {x}, y = {y}")));
    }
    if reps == 0 || !(horizon_factor > 0.0) {
        return Err(Error::invalid("hit order needs reps >= 1 and a positive horizon factor"));
    }
    let horizon = hit_order_horizon(x, model.hurst, horizon_factor).max(1);
    let sampler = NoiseSampler::new(model, horizon as usize)?;
    let outcomes = mc::run_replicates(reps, seed, workers, |_, s| {
        let v = potential_from_noise(&sampler.sample(s));
        race(&v[1..], -x, y)
    });
    let count = |r: Race| outcomes.iter().filter(|&&o| o == r).count() as u64;
    let (low_first, high_first, censored) = (count(Race::LowFirst), count(Race::HighFirst), count(Race::Neither));
    let estimate = low_first as f64 / reps as f64;
    let log_ratio = (x / y).ln();
    let min_alpha = (log_ratio > 1.0).then(|| x.ln().ln() / log_ratio.ln());
    Ok(HitOrderEstimate {
        x,
        y,
        horizon,
        reps,
        estimate,
        stderr: binomial_stderr(estimate, reps),
        low_first,
        high_first,
        censored,
        conditions: HitOrderConditions { y_exceeds_e: y > std::f64::consts::E, min_alpha },
    })
}

/// Monte Carlo estimate of `P[max_{k=1..n} V(k) <= barrier]`.
pub fn potential_persistence_mc(
    model: &CovarianceModel,
    n: u64,
    reps: u64,
    seed: u64,
    barrier: f64,
    workers: usize,
) -> Result<Estimate> {
    if n < 1 || reps == 0 {
        return Err(Error::invalid("persistence needs n >= 1 and reps >= 1"));
    }
    let sampler = NoiseSampler::new(model, n as usize)?;
    let stays = mc::run_replicates(reps, seed, workers, |_, s| {
        let v = potential_from_noise(&sampler.sample(s));
        v[1..].iter().all(|&vk| vk <= barrier)
    });
    let hits = stays.iter().filter(|&&b| b).count() as u64;
    let estimate = hits as f64 / reps as f64;
    Ok(Estimate { n, estimate, stderr: binomial_stderr(estimate, reps), reps, censored: 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvEventParams {
    pub a: f64,
    pub q: f64,
    pub eps: f64,
}

impl Default for EnvEventParams {
    fn default() -> Self {
        Self { a: 1.5, q: 2.0, eps: 0.5 }
    }
}

impl EnvEventParams {
    pub fn new(a: f64, q: f64, eps: f64) -> Result<Self> {
        let p = Self { a, q, eps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 1.0) {
            return Err(Error::invalid("a must exceed 1"));
        }
        if !(self.q > 1.0) {
            return Err(Error::invalid("q must exceed 1"));
        }
        check_eps(self.eps)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps must lie in (0,1)"));
    }
    Ok(())
}

fn check_big_n(big_n: u64) -> Result<()> {
    if big_n < 16 {
        return Err(Error::BigNTooSmall(big_n));
    }
    Ok(())
}

/// Indicators of the "bad environment" event and its witnesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadEvents {
    pub b_n: u64,
    /// `a log log N`
    pub level_up: f64,
    /// `-(1 - eps)/2 log N`
    pub level_down: f64,
    pub t_up: Option<u64>,
    pub t_down: Option<u64>,
    /// `T(level_up) <= b_N <= T(level_down)`
    pub b1: bool,
    /// `1/2 log log N`
    pub step_threshold: f64,
    /// First `i` checked in `|V(i) - V(i-1)| <= threshold`: -1 when the
    /// environment carries `X_{-1}`, otherwise 0.
    pub step_first_index: i64,
    pub b2: bool,
    pub bad: bool,
}

/// Indicators of the "good environment" event and its witnesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodEvents {
    /// `T(1)`
    pub gamma: Option<u64>,
    /// `T(-2 log N)`
    pub beta_n: Option<u64>,
    /// `(log N)^{(1 + eps)/H}`
    pub window: f64,
    /// `sqrt((4 - 2H)(1 + eps)/H log log N)`
    pub noise_threshold: f64,
    pub max_abs_noise: f64,
    /// `5 (2/H)^2`
    pub kappa: f64,
    /// `1 / (kappa (log log N)^2)`
    pub f_n: f64,
    /// `(sum_{k=0}^{beta_N - 1} e^{V(k)})^{-1}`, when `beta_N` is finite.
    pub reciprocal_sum: Option<f64>,
    /// The window is checked over `k = 0..=floor(window)` only.
    pub one_sided_window: bool,
    pub g1: bool,
    pub g2: bool,
    pub g3: bool,
    pub g4: bool,
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub big_n: u64,
    pub log_log_n: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bad: Option<BadEvents>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub good: Option<GoodEvents>,
}

fn lt_inf(a: Option<u64>, b: Option<u64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

fn le_inf(a: Option<u64>, b: Option<u64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a <= b,
        (_, None) => true,
        (None, Some(_)) => false,
    }
}

/// Last site needed by [`event_bad`].
pub fn bad_event_span(model: &CovarianceModel, big_n: u64, params: &EnvEventParams) -> Result<u64> {
    check_big_n(big_n)?;
    model.b_index(big_n, params.q)
}

/// Last site needed by [`event_good`].
pub fn good_event_span(hurst: f64, big_n: u64, eps: f64) -> Result<u64> {
    check_big_n(big_n)?;
    Ok(good_window(hurst, big_n, eps).ceil() as u64)
}

fn good_window(hurst: f64, big_n: u64, eps: f64) -> f64 {
    (big_n as f64).ln().powf((1.0 + eps) / hurst)
}

fn require(env: &Environment, needed: u64) -> Result<()> {
    if needed > env.n() as u64 {
        return Err(Error::EnvironmentTooShort { needed: needed as usize, available: env.n() });
    }
    Ok(())
}

pub fn event_bad(env: &Environment, big_n: u64, params: &EnvEventParams) -> Result<EventReport> {
    params.validate()?;
    let b_n = bad_event_span(&env.model, big_n, params)?;
    require(env, b_n)?;
    let ln = (big_n as f64).ln();
    let lln = ln.ln();
    let level_up = params.a * lln;
    let level_down = -(1.0 - params.eps) / 2.0 * ln;
    let v = env.potential();
    let t_up = first_passage_in(v, level_up);
    let t_down = first_passage_in(v, level_down);
    let b1 = le_inf(t_up, Some(b_n)) && le_inf(Some(b_n), t_down);
    let step_threshold = 0.5 * lln;
    let before = env.x(-1).ok();
    let step_first_index = if before.is_some() { -1 } else { 0 };
    let b2 = before.iter().chain(&env.noise()[..=b_n as usize]).all(|x| x.abs() <= step_threshold);
    Ok(EventReport {
        big_n,
        log_log_n: lln,
        seed: env.seed,
        bad: Some(BadEvents {
            b_n,
            level_up,
            level_down,
            t_up,
            t_down,
            b1,
            step_threshold,
            step_first_index,
            b2,
            bad: b1 && b2,
        }),
        good: None,
    })
}

pub fn event_good(env: &Environment, big_n: u64, eps: f64) -> Result<EventReport> {
    check_eps(eps)?;
    let hurst = env.model.hurst;
    let span = good_event_span(hurst, big_n, eps)?;
    require(env, span)?;
    let ln = (big_n as f64).ln();
    let lln = ln.ln();
    let v = env.potential();
    let gamma = first_passage_in(v, 1.0);
    let beta_n = first_passage_in(v, -2.0 * ln);
    let window = good_window(hurst, big_n, eps);
    let noise_threshold = ((4.0 - 2.0 * hurst) * (1.0 + eps) / hurst * lln).sqrt();
    let max_abs_noise = env.noise()[..=window.floor() as usize].iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let kappa = 5.0 * (2.0 / hurst).powi(2);
    let f_n = 1.0 / (kappa * lln * lln);
    let reciprocal_sum = beta_n.map(|b| (-log_sum_exp(&v[..b as usize])).exp());

    let g1 = lt_inf(beta_n, gamma);
    let g2 = gamma.is_some_and(|g| (g as f64) < window);
    let g3 = max_abs_noise <= noise_threshold;
    let g4 = reciprocal_sum.is_some_and(|r| r >= f_n);
    Ok(EventReport {
        big_n,
        log_log_n: lln,
        seed: env.seed,
        bad: None,
        good: Some(GoodEvents {
            gamma,
            beta_n,
            window,
            noise_threshold,
            max_abs_noise,
            kappa,
            f_n,
            reciprocal_sum,
            one_sided_window: true,
            g1,
            g2,
            g3,
            g4,
            good: g1 && g2 && g3 && g4,
        }),
    })
}

/// Both reports on one environment.
pub fn events(env: &Environment, big_n: u64, params: &EnvEventParams) -> Result<EventReport> {
    let mut report = event_bad(env, big_n, params)?;
    report.good = event_good(env, big_n, params.eps)?.good;
    Ok(report)
}

/// Environment length that covers both event families.
pub fn event_span(model: &CovarianceModel, big_n: u64, params: &EnvEventParams) -> Result<u64> {
    Ok(bad_event_span(model, big_n, params)?.max(good_event_span(model.hurst, big_n, params.eps)?).max(1))
}

/// Event reports for `reps` fresh environments.
pub fn sample_events(
    model: &CovarianceModel,
    big_n: u64,
    params: &EnvEventParams,
    reps: u64,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<EventReport>> {
    params.validate()?;
    let span = event_span(model, big_n, params)?;
    // one extra leading value becomes X_{-1}
    let sampler = NoiseSampler::new(model, span as usize + 1)?;
    let reports = mc::run_replicates(reps, master_seed, workers, |_, s| {
        let env = Environment::sample(&sampler, seed::split_seed(s, 0));
        events(&env, big_n, params)
    });
    reports.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::build_environment;
    use proptest::prelude::*;

    fn env_from(x: Vec<f64>) -> Environment {
        Environment::from_noise(CovarianceModel::fgn(0.7).unwrap(), x, 0)
    }

    #[test]
    fn unit_staircase() {
        let env = env_from(vec![1.0; 10]);
        assert_eq!(first_passage(&env, 3.0, 9).unwrap(), Some(3));
        assert_eq!(first_passage(&env, -1.0, 9).unwrap(), None);
    }

    #[test]
    fn flat_potential_never_reaches_one() {
        let env = Environment::from_noise(CovarianceModel::flat(), vec![0.0; 64], 0);
        for h in [1, 10, 63] {
            assert_eq!(first_passage(&env, 1.0, h).unwrap(), None);
        }
    }

    #[test]
    fn level_zero_and_short_env() {
        let env = env_from(vec![0.0; 5]);
        assert!(matches!(first_passage(&env, 0.0, 3), Err(Error::LevelZero)));
        assert!(matches!(first_passage(&env, 1.0, 5), Err(Error::EnvironmentTooShort { .. })));
    }

    fn scan(v: &[f64], level: f64, horizon: usize) -> Option<u64> {
        for k in 0..=horizon {
            let hit = if level > 0.0 { v[k] >= level } else { v[k] <= level };
            if hit {
                return Some(k as u64);
            }
        }
        None
    }

    #[test]
    fn first_passage_exhaustive_against_scan() {
        let model = CovarianceModel::fgn(0.75).unwrap();
        for s in 0..20 {
            let env = build_environment(&model, 64, s).unwrap();
            for horizon in 0..=64u64 {
                for level in [-3.0, -1.0, -0.2, 0.2, 1.0, 2.5] {
                    assert_eq!(
                        first_passage(&env, level, horizon).unwrap(),
                        scan(env.potential(), level, horizon as usize)
                    );
                }
            }
        }
    }

    #[test]
    fn hit_order_rejects_x_not_above_y() {
        let m = CovarianceModel::fgn(0.75).unwrap();
        assert!(hit_order_mc(&m, 2.0, 2.0, 10, 4.0, 1, 1).is_err());
    }

    #[test]
    fn hit_order_counts_partition() {
        let m = CovarianceModel::fgn(0.75).unwrap();
        let est = hit_order_mc(&m, 8.0, 2.0, 2000, 0.05, 3, 1).unwrap();
        assert_eq!(est.low_first + est.high_first + est.censored, est.reps);
        assert!(est.censored > 0, "tiny horizon should censor some paths");
        assert!(!est.conditions.y_exceeds_e);
    }

    #[test]
    fn hit_order_brownian_band() {
        // H = 1/2: driftless Gaussian walk, continuous-time ruin value y/(x+y)
        let m = CovarianceModel::fgn(0.5).unwrap();
        let (x, y) = (20.0, 5.0);
        let est = hit_order_mc(&m, x, y, 20_000, 4.0, 17, 1).unwrap();
        let target = y / (x + y);
        assert!((est.estimate / target - 1.0).abs() < 0.3, "{} vs {target}", est.estimate);
    }

    #[test]
    fn persistence_one_step_is_half() {
        let m = CovarianceModel::fgn(0.7).unwrap();
        let est = potential_persistence_mc(&m, 1, 40_000, 5, 0.0, 1).unwrap();
        assert!((est.estimate - 0.5).abs() < 4.0 * est.stderr);
    }

    /// `P[S_1 <= 0, ..., S_n <= 0]` for a standard Gaussian walk by recursive
    /// quadrature of the killed density on a grid.
    fn gaussian_stay_negative(n: usize) -> f64 {
        let (lo, h) = (-14.0_f64, 0.005_f64);
        let m = (-lo / h) as usize + 1;
        let xs: Vec<f64> = (0..m).map(|i| lo + i as f64 * h).collect();
        let phi = |d: f64| (-0.5 * d * d).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let trap = |f: &[f64]| -> f64 {
            let inner: f64 = f[1..f.len() - 1].iter().sum();
            h * (inner + 0.5 * (f[0] + f[f.len() - 1]))
        };
        let mut dens: Vec<f64> = xs.iter().map(|&x| phi(x)).collect();
        for _ in 1..n {
            let next: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    let integrand: Vec<f64> = xs.iter().zip(&dens).map(|(&u, &d)| d * phi(x - u)).collect();
                    trap(&integrand)
                })
                .collect();
            dens = next;
        }
        trap(&dens)
    }

    #[test]
    fn iid_persistence_matches_quadrature() {
        let m = CovarianceModel::iid();
        for n in [1u64, 2, 4, 10] {
            let oracle = gaussian_stay_negative(n as usize);
            // Sparre Andersen: C(2n, n) / 4^n for symmetric continuous steps
            let mut sa = 1.0;
            for k in 1..=n {
                sa *= (2 * k - 1) as f64 / (2 * k) as f64;
            }
            assert!((oracle - sa).abs() < 2e-3, "n={n}: quadrature {oracle} vs {sa}");
            let est = potential_persistence_mc(&m, n, 100_000, 40 + n, 0.0, 1).unwrap();
            assert!((est.estimate - oracle).abs() < 3.0 * est.stderr + 2e-3, "n={n}: {} vs {oracle}", est.estimate);
        }
    }

    #[test]
    fn bad_step_event_on_small_noise() {
        let big_n = 1_000_000;
        let lln = (big_n as f64).ln().ln();
        let env = env_from(vec![0.4 * lln; 64]);
        let rep = event_bad(&env, big_n, &EnvEventParams::default()).unwrap();
        assert!(rep.bad.unwrap().b2);
    }

    #[test]
    fn staircase_b1_with_censored_descent() {
        let big_n = 1_000_000u64;
        let params = EnvEventParams::default();
        let lln = (big_n as f64).ln().ln();
        // X_1 pushes V over a log log N at step 1 and V never decreases.
        let mut x = vec![0.0; 64];
        x[1] = params.a * lln + 0.1;
        let env = env_from(x);
        let bad = event_bad(&env, big_n, &params).unwrap().bad.unwrap();
        assert!(bad.b_n >= 1);
        assert_eq!(bad.t_up, Some(1));
        assert_eq!(bad.t_down, None);
        assert!(bad.b1);
    }

    #[test]
    fn good_g1_fails_when_potential_rises_first() {
        let big_n = 1_000_000u64;
        let ln = (big_n as f64).ln();
        let mut x = vec![0.0; 600];
        x[1] = 1.5;
        x[2] = -3.0 * ln;
        let env = env_from(x);
        let good = event_good(&env, big_n, 0.5).unwrap().good.unwrap();
        assert_eq!(good.gamma, Some(1));
        assert_eq!(good.beta_n, Some(2));
        assert!(!good.g1);
        assert!(!good.good);
    }

    #[test]
    fn good_g3_true_on_quiet_noise() {
        let big_n = 1_000_000u64;
        let env = env_from(vec![0.5; 600]);
        let good = event_good(&env, big_n, 0.5).unwrap().good.unwrap();
        assert!(good.g3);
        assert!(good.one_sided_window);
        assert_eq!(good.kappa, 5.0 * (2.0f64 / 0.7).powi(2));
    }

    #[test]
    fn good_environment_example() {
        // drop to -2 log N in two steps, then climb to 1 inside the window
        let big_n = 10_000u64;
        let ln = (big_n as f64).ln();
        let mut x = vec![0.0; 400];
        x[1] = -ln - 0.01;
        x[2] = -ln - 0.01;
        for xi in x.iter_mut().skip(3).take(20) {
            *xi = (2.0 * ln + 1.1) / 20.0;
        }
        let env = env_from(x);
        let g = event_good(&env, big_n, 0.5).unwrap().good.unwrap();
        assert_eq!(g.beta_n, Some(2));
        assert!(g.gamma.unwrap() > 2);
        // sum_{k=0}^{1} e^{V(k)} = 1 + e^{V(1)}
        let expected = 1.0 / (1.0 + env.v(1).unwrap().exp());
        assert!((g.reciprocal_sum.unwrap() - expected).abs() < 1e-12);
        assert!(g.g1 && g.g2 && g.g4);
        assert_eq!(g.good, g.g3);
    }

    #[test]
    fn event_env_too_short() {
        let env = env_from(vec![0.0; 4]);
        assert!(matches!(event_good(&env, 1_000_000, 0.5), Err(Error::EnvironmentTooShort { .. })));
        assert!(matches!(event_bad(&env, 10, &EnvEventParams::default()), Err(Error::BigNTooSmall(10))));
    }

    #[test]
    fn event_report_json_has_witnesses() {
        let model = CovarianceModel::fgn(0.7).unwrap();
        let reports = sample_events(&model, 10_000, &EnvEventParams::default(), 3, 1, 1).unwrap();
        let json = serde_json::to_string(&reports[0]).unwrap();
        for key in ["\"b_n\"", "\"beta_n\"", "\"gamma\"", "\"f_n\"", "\"step_first_index\":-1"] {
            assert!(json.contains(key), "{json}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn g3_window_and_threshold_grow_with_eps(seed in any::<u64>(), e1 in 0.05f64..0.95, e2 in 0.05f64..0.95) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let model = CovarianceModel::fgn(0.7).unwrap();
            let big_n = 1_000_000u64;
            let span = good_event_span(0.7, big_n, hi).unwrap();
            let env = build_environment(&model, span as usize, seed).unwrap();
            let g_lo = event_good(&env, big_n, lo).unwrap().good.unwrap();
            let g_hi = event_good(&env, big_n, hi).unwrap().good.unwrap();
            prop_assert!(g_lo.window <= g_hi.window);
            prop_assert!(g_lo.noise_threshold <= g_hi.noise_threshold);
            prop_assert!(g_lo.max_abs_noise <= g_hi.max_abs_noise);
            // over a common window a smaller eps only removes environments
            if g_hi.max_abs_noise <= g_lo.noise_threshold {
                prop_assert!(g_lo.g3 && g_hi.g3);
            }
            if !g_hi.g3 && g_lo.max_abs_noise == g_hi.max_abs_noise {
                prop_assert!(!g_lo.g3);
            }
        }

        #[test]
        fn bad_is_conjunction(seed in any::<u64>()) {
            let model = CovarianceModel::fgn(0.7).unwrap();
            let params = EnvEventParams::default();
            let big_n = 100_000_000u64;
            let span = event_span(&model, big_n, &params).unwrap();
            let env = build_environment(&model, span as usize, seed).unwrap();
            let r = events(&env, big_n, &params).unwrap();
            let b = r.bad.unwrap();
            let g = r.good.unwrap();
            prop_assert_eq!(b.bad, b.b1 && b.b2);
            prop_assert_eq!(g.good, g.g1 && g.g2 && g.g3 && g.g4);
        }
    }
}
