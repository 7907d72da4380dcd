//! Stationary covariance families for the Gaussian noise `X`.
//!
//! A [`CovarianceModel`] fixes `r(n) = E[X_0 X_n]` together with the Hurst
//! index `H` that governs the growth of `Var V(n) = sum_{i,j<=n} r(i - j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

/// Above this many terms `sigma2` switches to compensated summation.
const COMPENSATED_THRESHOLD: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "cli", derive(clap::ValueEnum))]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Fractional Gaussian noise: increments of fractional Brownian motion.
    Fgn,
    /// `r(n) = (1 + n)^(2H - 2)` for `n >= 1`.
    Power,
    /// Independent standard Gaussians.
    Iid,
    /// Explicit finite table `r(0), r(1), ...`.
    Table,
    /// Zero noise. Only useful as a deterministic test hook.
    Flat,
}

fn default_hurst() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub family: Family,
    #[serde(default = "default_hurst")]
    pub hurst: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

fn check_hurst(hurst: f64) -> Result<()> {
    if !(0.5..1.0).contains(&hurst) {
        return Err(Error::invalid("hurst must lie in [0.5,1)"));
    }
    Ok(())
}

impl CovarianceModel {
    pub fn fgn(hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        Ok(Self { family: Family::Fgn, hurst, values: None })
    }

    pub fn power(hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        Ok(Self { family: Family::Power, hurst, values: None })
    }

    pub fn iid() -> Self {
        Self { family: Family::Iid, hurst: 0.5, values: None }
    }

    pub fn flat() -> Self {
        Self { family: Family::Flat, hurst: 0.5, values: None }
    }

    pub fn table(hurst: f64, values: Vec<f64>) -> Result<Self> {
        let model = Self { family: Family::Table, hurst, values: Some(values) };
        model.validate()?;
        Ok(model)
    }

    /// Checks the invariants that deserialization cannot enforce.
    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        match self.family {
            Family::Iid | Family::Flat => {
                if self.hurst != 0.5 {
                    return Err(Error::invalid("iid and flat models have hurst 0.5"));
                }
            }
            Family::Table => {
                let values = self
                    .values
                    .as_ref()
                    .ok_or_else(|| Error::invalid("table model needs \"values\""))?;
                match values.first() {
                    Some(r0) if (r0 - 1.0).abs() <= 1e-12 => {}
                    _ => return Err(Error::invalid("table must start with r(0) = 1")),
                }
                if values.iter().any(|r| !r.is_finite() || *r < 0.0) {
                    return Err(Error::invalid("table entries must be finite and nonnegative"));
                }
            }
            Family::Fgn | Family::Power => {}
        }
        Ok(())
    }

    /// True when every lag beyond zero has zero covariance.
    pub fn is_white(&self) -> bool {
        match self.family {
            Family::Iid | Family::Flat => true,
            Family::Fgn => self.hurst == 0.5,
            Family::Power | Family::Table => false,
        }
    }

    /// Covariance `r(lag)`.
    pub fn cov(&self, lag: u64) -> Result<f64> {
        let h2 = 2.0 * self.hurst;
        Ok(match self.family {
            Family::Flat => 0.0,
            _ if lag == 0 => 1.0,
            Family::Iid => 0.0,
            Family::Fgn => {
                if self.hurst == 0.5 {
                    0.0
                } else {
                    let n = lag as f64;
                    0.5 * ((n + 1.0).powf(h2) - 2.0 * n.powf(h2) + (n - 1.0).powf(h2))
                }
            }
            Family::Power => (1.0 + lag as f64).powf(h2 - 2.0),
            Family::Table => {
                let values = self.values.as_deref().unwrap_or(&[]);
                *values
                    .get(lag as usize)
                    .ok_or(Error::LagOutOfRange { lag: lag as usize, len: values.len() })?
            }
        })
    }

    /// Covariance used to fill the padding region of a circulant embedding.
    /// Tables are extended by zero beyond their last entry.
    pub(crate) fn cov_padded(&self, lag: u64) -> f64 {
        match self.cov(lag) {
            Ok(r) => r,
            Err(_) => 0.0,
        }
    }

    /// `Var V(n) = n r(0) + 2 sum_{m=1}^{n-1} (n - m) r(m)`.
    pub fn sigma2(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        let r0 = self.cov(0)?;
        if self.is_white() {
            return Ok(n as f64 * r0);
        }
        let nf = n as f64;
        if n <= COMPENSATED_THRESHOLD {
            let mut acc = 0.0;
            for m in 1..n {
                acc += (nf - m as f64) * self.cov(m)?;
            }
            Ok(nf * r0 + 2.0 * acc)
        } else {
            let mut acc = CompensatedSum::default();
            for m in 1..n {
                acc.add((nf - m as f64) * self.cov(m)?);
            }
            Ok(nf * r0 + 2.0 * acc.value())
        }
    }

    /// Empirical `sigma_n^2 / n^(2H)`; identically 1 for fractional Gaussian noise.
    pub fn ell_ratio(&self, n: u64) -> Result<f64> {
        Ok(self.sigma2(n)? / (n as f64).powf(2.0 * self.hurst))
    }

    /// Largest `k` with `sigma_k <= log N (log log N)^(-q/2)`, or 0 if none.
    pub fn b_index(&self, big_n: u64, q: f64) -> Result<u64> {
        if big_n < 16 {
            return Err(Error::BigNTooSmall(big_n));
        }
        if q <= 1.0 {
            return Err(Error::invalid("q must exceed 1"));
        }
        if self.family == Family::Flat {
            return Err(Error::invalid("b_index is undefined for the flat model"));
        }
        let threshold = b_threshold(big_n, q);
        let t2 = threshold * threshold;
        let within = |k: u64| -> Result<bool> { Ok(self.sigma2(k)? <= t2) };
        if !within(1)? {
            return Ok(0);
        }
        // sigma2 is strictly increasing, so bracket then bisect.
        let mut lo = 1u64;
        let mut hi = 2u64;
        while within(hi)? {
            lo = hi;
            hi *= 2;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if within(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }
}

/// `log N (log log N)^(-q/2)`.
pub fn b_threshold(big_n: u64, q: f64) -> f64 {
    let ln = (big_n as f64).ln();
    ln * ln.ln().powf(-q / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn r0_is_one() {
        for h in [0.5, 0.6, 0.75, 0.99] {
            assert_eq!(CovarianceModel::fgn(h).unwrap().cov(0).unwrap(), 1.0);
            assert_eq!(CovarianceModel::power(h).unwrap().cov(0).unwrap(), 1.0);
        }
        assert_eq!(CovarianceModel::iid().cov(0).unwrap(), 1.0);
    }

    #[test]
    fn fgn_half_is_white() {
        let m = CovarianceModel::fgn(0.5).unwrap();
        for lag in 1..50 {
            assert_eq!(m.cov(lag).unwrap(), 0.0);
        }
    }

    #[test]
    fn fgn_lag_one_matches_second_difference() {
        let m = CovarianceModel::fgn(0.75).unwrap();
        let expected = 0.5 * (2f64.powf(1.5) - 2.0);
        assert_relative_eq!(m.cov(1).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(m.cov(1).unwrap(), 0.414_213_6, epsilon = 1e-7);
        // finite second difference of t -> t^{2H}/2 computed independently
        let f = |t: f64| t.abs().powf(1.5) / 2.0;
        for lag in 1..20 {
            let t = lag as f64;
            let fd = f(t + 1.0) - 2.0 * f(t) + f(t - 1.0);
            assert_relative_eq!(m.cov(lag).unwrap(), fd, epsilon = 1e-12);
        }
    }

    #[test]
    fn table_lookup_and_range() {
        let m = CovarianceModel::table(0.75, vec![1.0, 0.4, 0.1]).unwrap();
        assert_eq!(m.cov(1).unwrap(), 0.4);
        assert!(matches!(m.cov(3), Err(Error::LagOutOfRange { lag: 3, len: 3 })));
        assert!(CovarianceModel::table(0.75, vec![0.9, 0.1]).is_err());
        assert!(CovarianceModel::table(0.75, vec![1.0, -0.1]).is_err());
    }

    #[test]
    fn invalid_hurst_rejected() {
        let err = CovarianceModel::fgn(1.2).unwrap_err();
        assert_eq!(err.to_string(), "hurst must lie in [0.5,1)");
        assert!(CovarianceModel::fgn(0.49).is_err());
        assert!(CovarianceModel::fgn(1.0).is_err());
    }

    #[test]
    fn sigma2_examples() {
        assert_eq!(CovarianceModel::iid().sigma2(1).unwrap(), 1.0);
        assert_eq!(CovarianceModel::iid().sigma2(100).unwrap(), 100.0);
        let m = CovarianceModel::fgn(0.8).unwrap();
        assert_eq!(m.sigma2(1).unwrap(), 1.0);
        assert_relative_eq!(m.sigma2(64).unwrap(), 64f64.powf(1.6), max_relative = 1e-12);
        assert_relative_eq!(m.sigma2(64).unwrap(), 776.05, epsilon = 0.01);
    }

    #[test]
    fn sigma2_matches_direct_double_sum() {
        let m = CovarianceModel::power(0.7).unwrap();
        let n = 40u64;
        let mut direct = 0.0;
        for i in 1..=n {
            for j in 1..=n {
                direct += m.cov(i.abs_diff(j)).unwrap();
            }
        }
        assert_relative_eq!(m.sigma2(n).unwrap(), direct, max_relative = 1e-12);
    }

    #[test]
    fn fgn_sigma2_is_exact_power() {
        for h in [0.5, 0.6, 0.7, 0.8, 0.9] {
            let m = CovarianceModel::fgn(h).unwrap();
            for n in [1u64, 2, 3, 10, 100, 1000, 5000, 10_000] {
                let exact = (n as f64).powf(2.0 * h);
                let got = m.sigma2(n).unwrap();
                assert!((got - exact).abs() <= 1e-9 * exact, "H={h} n={n}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn compensated_branch_is_consistent() {
        let m = CovarianceModel::fgn(0.7).unwrap();
        let n = 200_000u64;
        let exact = (n as f64).powf(1.4);
        assert!((m.sigma2(n).unwrap() - exact).abs() <= 1e-9 * exact);
    }

    #[test]
    fn b_index_iid_example() {
        let b = CovarianceModel::iid().b_index(1_000_000, 2.0).unwrap();
        assert_eq!(b, 27);
    }

    #[test]
    fn b_index_small_n_rejected() {
        assert!(matches!(
            CovarianceModel::iid().b_index(15, 2.0),
            Err(Error::BigNTooSmall(15))
        ));
    }

    #[test]
    fn b_index_zero_when_threshold_below_one() {
        // log log 16 is barely above 1, so q must be large for the threshold to drop below 1.
        assert!(b_threshold(16, 20.0) > 1.0);
        let t = b_threshold(16, 120.0);
        assert!(t < 1.0);
        assert_eq!(CovarianceModel::iid().b_index(16, 120.0).unwrap(), 0);
    }

    fn linear_scan_b(model: &CovarianceModel, big_n: u64, q: f64) -> u64 {
        let t = b_threshold(big_n, q);
        let mut k = 0;
        loop {
            let next = k + 1;
            if model.sigma2(next).unwrap().sqrt() <= t {
                k = next;
            } else {
                return k;
            }
        }
    }

    #[test]
    fn b_index_fgn_matches_linear_scan() {
        let m = CovarianceModel::fgn(0.75).unwrap();
        assert_eq!(m.b_index(1_000_000, 2.0).unwrap(), linear_scan_b(&m, 1_000_000, 2.0));
    }

    #[test]
    fn json_shape() {
        let m = CovarianceModel::fgn(0.75).unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"family":"fgn","hurst":0.75}"#);
        let t: CovarianceModel =
            serde_json::from_str(r#"{"family":"table","hurst":0.75,"values":[1.0,0.41]}"#).unwrap();
        t.validate().unwrap();
        assert_eq!(t.cov(1).unwrap(), 0.41);
        let iid: CovarianceModel = serde_json::from_str(r#"{"family":"iid"}"#).unwrap();
        assert_eq!(iid.hurst, 0.5);
    }

    fn any_model() -> impl Strategy<Value = CovarianceModel> {
        prop_oneof![
            (0.5f64..0.95).prop_map(|h| CovarianceModel::fgn(h).unwrap()),
            (0.5f64..0.95).prop_map(|h| CovarianceModel::power(h).unwrap()),
            Just(CovarianceModel::iid()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn b_index_equals_linear_scan(model in any_model(), exp in 1.3f64..12.0, q in 1.05f64..4.0) {
            let big_n = 10f64.powf(exp) as u64;
            prop_assume!(big_n >= 16);
            prop_assert_eq!(model.b_index(big_n, q).unwrap(), linear_scan_b(&model, big_n, q));
        }

        #[test]
        fn sigma2_strictly_increasing(model in any_model(), n in 1u64..500) {
            prop_assert!(model.sigma2(n + 1).unwrap() > model.sigma2(n).unwrap());
        }

        #[test]
        fn covariance_nonnegative(model in any_model(), lag in 0u64..100_000) {
            prop_assert!(model.cov(lag).unwrap() >= 0.0);
        }
    }
}
