//! WebAssembly bindings for the browser demo.
//!
//! Each operation has a plain Rust form returning `Result<_, String>` (usable
//! and testable natively) and a `#[wasm_bindgen]` wrapper that hands the page
//! a typed array or a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use corrwalk::bpcge::{self, Caps};
use corrwalk::mc;
use corrwalk::seed::{parse_seed, split_seed};
use corrwalk::walk;
use corrwalk::{build_environment, CovarianceModel, Family};

/// Largest environment the page may request.
pub const MAX_SITES: u32 = 1 << 16;
/// Largest replicate count per tail point.
pub const MAX_REPS: u32 = 20_000;

fn model(family: &str, hurst: f64) -> Result<CovarianceModel, String> {
    let family: Family =
        serde_json::from_value(serde_json::Value::String(family.to_lowercase())).map_err(|_| {
            format!("unknown model {family:?}; expected fgn, power or iid")
        })?;
    let model = match family {
        Family::Iid => CovarianceModel::iid(),
        Family::Fgn | Family::Power => CovarianceModel { family, hurst, values: None },
        Family::Table | Family::Flat => return Err(format!("model {family:?} is not offered in the demo")),
    };
    model.validate().map_err(|e| e.to_string())?;
    Ok(model)
}

fn seed(text: &str) -> Result<u64, String> {
    parse_seed(text)
}

fn sites(n: u32) -> Result<usize, String> {
    if n < 2 || n > MAX_SITES {
        return Err(format!("n must lie in [2, {MAX_SITES}]"));
    }
    Ok(n as usize)
}

/// Potential `V(0..=n)` of one sampled environment.
pub fn potential_path(family: &str, hurst: f64, n: u32, seed_text: &str) -> Result<Vec<f64>, String> {
    let env = build_environment(&model(family, hurst)?, sites(n)?, seed(seed_text)?).map_err(|e| e.to_string())?;
    Ok(env.potential().to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailPoint {
    pub n: u64,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub points: Vec<TailPoint>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    /// `-(1 - H)`
    pub expected_slope: f64,
}

/// `P[T > N]` on the dyadic grid `16..=n_max` with a fitted log-log slope.
pub fn tail_curve(family: &str, hurst: f64, n_max: u32, reps: u32, seed_text: &str) -> Result<TailCurve, String> {
    let model = model(family, hurst)?;
    let n_max = sites(n_max)? as u64;
    if !(2..=MAX_REPS).contains(&reps) {
        return Err(format!("reps must lie in [2, {MAX_REPS}]"));
    }
    let grid: Vec<u64> = std::iter::successors(Some(16u64), |n| Some(n * 2)).take_while(|&n| n <= n_max).collect();
    if grid.len() < 3 {
        return Err("n_max must be at least 64 for a three-point fit".into());
    }
    let expected_slope = -(1.0 - model.hurst);
    let task = mc::Task::Tail { model, grid, reps: reps as u64 };
    let series = mc::mc_run(&task, seed(seed_text)?, 1).map_err(|e| e.to_string())?;
    let fit = mc::fit_power_law(&series.points).map_err(|e| e.to_string())?;
    Ok(TailCurve {
        points: series.points.iter().map(|p| TailPoint { n: p.n, estimate: p.estimate, stderr: p.stderr }).collect(),
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        intercept: fit.intercept,
        expected_slope,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchingRun {
    /// Generation sizes `Z_0, Z_1, ...`.
    pub z: Vec<u64>,
    pub extinction_time: Option<u64>,
    pub censored: bool,
    pub total: u64,
    pub max_pop: u64,
    /// `V(0..=n)` of the environment driving the process.
    pub potential: Vec<f64>,
    /// Quenched `P[T > k]` for `k = 1..=n` in that environment.
    pub survival: Vec<f64>,
}

/// One branching trajectory over `n` generations together with its
/// environment and the exact quenched survival curve.
pub fn branching_run(family: &str, hurst: f64, n: u32, seed_text: &str) -> Result<BranchingRun, String> {
    let n = sites(n)?;
    let seed = seed(seed_text)?;
    let env = build_environment(&model(family, hurst)?, n, split_seed(seed, 0)).map_err(|e| e.to_string())?;
    let traj = bpcge::simulate(&env, Caps::generations(n as u64), split_seed(seed, 1));
    let survival = (1..=n as u64).map(|k| walk::survival_prob(&env, k)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    Ok(BranchingRun {
        extinction_time: traj.extinction_time,
        censored: traj.is_censored(),
        total: traj.total,
        max_pop: traj.max_pop,
        z: traj.z,
        potential: env.potential().to_vec(),
        survival,
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

/// `V(0..=n)` as a `Float64Array`.
#[wasm_bindgen(js_name = samplePotential)]
pub fn sample_potential_js(family: &str, hurst: f64, n: u32, seed: &str) -> Result<Vec<f64>, JsError> {
    potential_path(family, hurst, n, seed).map_err(|e| JsError::new(&e))
}

/// JSON-encoded [`TailCurve`].
#[wasm_bindgen(js_name = tailCurve)]
pub fn tail_curve_js(family: &str, hurst: f64, n_max: u32, reps: u32, seed: &str) -> Result<String, JsError> {
    to_json(&tail_curve(family, hurst, n_max, reps, seed).map_err(|e| JsError::new(&e))?)
}

/// JSON-encoded [`BranchingRun`].
#[wasm_bindgen(js_name = branchingRun)]
pub fn branching_run_js(family: &str, hurst: f64, n: u32, seed: &str) -> Result<String, JsError> {
    to_json(&branching_run(family, hurst, n, seed).map_err(|e| JsError::new(&e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_starts_at_zero() {
        let v = potential_path("fgn", 0.75, 100, "7").unwrap();
        assert_eq!(v.len(), 101);
        assert_eq!(v[0], 0.0);
        assert_eq!(v, potential_path("FGN", 0.75, 100, "0x7").unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(potential_path("fgn", 1.2, 100, "7").unwrap_err().contains("hurst"));
        assert!(potential_path("table", 0.7, 100, "7").is_err());
        assert!(potential_path("nope", 0.7, 100, "7").is_err());
        assert!(potential_path("fgn", 0.7, MAX_SITES + 1, "7").is_err());
        assert!(potential_path("fgn", 0.7, 100, "x").is_err());
        assert!(tail_curve("fgn", 0.7, 32, 100, "1").is_err());
        assert!(tail_curve("fgn", 0.7, 256, MAX_REPS + 1, "1").is_err());
    }

    #[test]
    fn survival_curve_is_nonincreasing() {
        let run = branching_run("fgn", 0.7, 64, "3").unwrap();
        assert_eq!(run.survival.len(), 64);
        assert!(run.survival.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(run.z[0], 1);
        assert_eq!(run.potential.len(), 65);
    }
}
