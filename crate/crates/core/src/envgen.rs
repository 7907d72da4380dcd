//! Exact sampling of the stationary noise and the environment built from it.
//!
//! The noise `X_0..X_n` is drawn by circulant embedding: the covariance is
//! wrapped onto a circle of size `M` (a power of two, `M >= 2n`), the
//! circulant is diagonalised with one FFT, and each sample costs one
//! Hermitian-to-real FFT of `M` Gaussian weights. The first `n + 1` coordinates have covariance
//! `r(|i - j|)` exactly.

use std::io::Write;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner};

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Relative tolerance below which negative eigenvalues are clamped to zero.
pub const EIGEN_TOL_REL: f64 = 1e-10;

enum Kernel {
    /// White or zero noise: no FFT needed.
    Direct { scale: f64 },
    /// `amplitude[k]` for `k = 0..=M/2`; the other half of the spectrum is
    /// fixed by Hermitian symmetry.
    Circulant { size: usize, amplitude: Vec<f64>, fft: Arc<dyn ComplexToReal<f64>> },
}

/// Precomputed sampler for `n + 1` consecutive noise values of one model.
pub struct NoiseSampler {
    model: CovarianceModel,
    len: usize,
    kernel: Kernel,
    clamped: usize,
}

impl std::fmt::Debug for NoiseSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseSampler")
            .field("model", &self.model)
            .field("len", &self.len)
            .field("circulant_size", &self.circulant_size())
            .field("clamped", &self.clamped)
            .finish()
    }
}

impl NoiseSampler {
    /// Builds the embedding for `X_0..X_n`.
    pub fn new(model: &CovarianceModel, n: usize) -> Result<Self> {
        model.validate()?;
        if n < 1 {
            return Err(Error::invalid("noise length n must be at least 1"));
        }
        let len = n + 1;
        if model.is_white() {
            let scale = model.cov(0)?.sqrt();
            return Ok(Self { model: model.clone(), len, kernel: Kernel::Direct { scale }, clamped: 0 });
        }
        if let Some(values) = &model.values {
            if values.len() < len {
                return Err(Error::LagOutOfRange { lag: len - 1, len: values.len() });
            }
        }

        let size = (2 * n).next_power_of_two().max(2);
        let half = size / 2;
        let mut planner = RealFftPlanner::<f64>::new();
        // The circulant's first row is symmetric, so its spectrum is real and
        // symmetric and only bins 0..=M/2 are needed.
        let mut row: Vec<f64> = (0..size)
            .map(|j| {
                let lag = if j <= half { j } else { size - j };
                model.cov_padded(lag as u64)
            })
            .collect();
        let forward = planner.plan_fft_forward(size);
        let mut spectrum = forward.make_output_vec();
        forward.process(&mut row, &mut spectrum).expect("buffer sizes match the plan");

        let max = spectrum.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        let mut clamped = 0;
        let mut eig = Vec::with_capacity(half + 1);
        for (k, c) in spectrum.iter().enumerate() {
            let lambda = c.re;
            // interior bins stand for two eigenvalues each
            let multiplicity = if k == 0 || k == half { 1 } else { 2 };
            if lambda < 0.0 {
                if lambda < -EIGEN_TOL_REL * max {
                    return Err(Error::NotEmbeddable { eigenvalue: lambda, max });
                }
                clamped += multiplicity;
                eig.push(0.0);
            } else {
                eig.push(lambda);
            }
        }

        // Hermitian-symmetric weights: real at 0 and M/2, complex pairs elsewhere.
        let m = size as f64;
        let amplitude = eig
            .iter()
            .enumerate()
            .map(|(k, &lambda)| {
                if k == 0 || k == half {
                    (lambda / m).sqrt()
                } else {
                    (lambda / (2.0 * m)).sqrt()
                }
            })
            .collect();
        let fft = planner.plan_fft_inverse(size);

        Ok(Self {
            model: model.clone(),
            len,
            kernel: Kernel::Circulant { size, amplitude, fft },
            clamped,
        })
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    /// Number of noise values per sample (`n + 1`).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Eigenvalues in `[-tol, 0)` that were set to zero.
    pub fn clamped_eigenvalues(&self) -> usize {
        self.clamped
    }

    pub fn circulant_size(&self) -> Option<usize> {
        match &self.kernel {
            Kernel::Direct { .. } => None,
            Kernel::Circulant { size, .. } => Some(*size),
        }
    }

    /// Draws `X_0..X_n` from `rng`.
    pub fn sample_with(&self, rng: &mut Rng) -> Vec<f64> {
        match &self.kernel {
            Kernel::Direct { scale } => {
                if *scale == 0.0 {
                    return vec![0.0; self.len];
                }
                (0..self.len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
            }
            Kernel::Circulant { size, amplitude, fft } => {
                let half = size / 2;
                let mut weights = fft.make_input_vec();
                weights[0] = Complex::new(amplitude[0] * rng.sample::<f64, _>(StandardNormal), 0.0);
                weights[half] = Complex::new(amplitude[half] * rng.sample::<f64, _>(StandardNormal), 0.0);
                for k in 1..half {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    // the inverse transform of conj(w) equals the forward transform of w
                    weights[k] = Complex::new(amplitude[k] * re, -amplitude[k] * im);
                }
                let mut out = fft.make_output_vec();
                fft.process(&mut weights, &mut out).expect("buffer sizes match the plan");
                out.truncate(self.len);
                out
            }
        }
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        self.sample_with(&mut seed::rng(seed))
    }
}

/// Samples `X_0..X_n`; a deterministic function of `(model, n, seed)`.
pub fn sample_noise(model: &CovarianceModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(NoiseSampler::new(model, n)?.sample(seed))
}

/// `1 / (1 + e^x)` without overflow.
pub fn omega_from_noise(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// `log((1 - omega) / omega)`.
pub fn noise_from_omega(omega: f64) -> f64 {
    ((1.0 - omega) / omega).ln()
}

/// Potential `V(0..n)` from noise `X_0..X_n`: `V(0) = 0`, `V(k) = X_1 + ... + X_k`.
pub fn potential_from_noise(x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    v.push(0.0);
    for &xi in x.iter().skip(1) {
        acc += xi;
        v.push(acc);
    }
    v
}

/// One realization of the environment on sites `0..=n`.
#[derive(Debug, Clone)]
pub struct Environment {
    pub model: CovarianceModel,
    pub seed: u64,
    x: Vec<f64>,
    /// `X_{-1}`, present when the environment was sampled with one extra
    /// leading noise value.
    x_before: Option<f64>,
    /// `v[k + 1] = V(k)` for `k = -1..=n`.
    v: Vec<f64>,
    omega: Vec<f64>,
}

impl Environment {
    /// Builds the environment from explicit noise `X_0..X_n`.
    pub fn from_noise(model: CovarianceModel, x: Vec<f64>, seed: u64) -> Self {
        assert!(!x.is_empty(), "environment needs at least X_0");
        let mut v = Vec::with_capacity(x.len() + 1);
        v.push(-x[0]);
        v.extend(potential_from_noise(&x));
        let omega = x.iter().map(|&xi| omega_from_noise(xi)).collect();
        Self { model, seed, x, x_before: None, v, omega }
    }

    /// Sets `X_{-1}`, the noise value left of site 0.
    pub fn with_x_before(mut self, x_before: f64) -> Self {
        self.x_before = Some(x_before);
        self
    }

    /// Overrides the jump probabilities while keeping `x` and `v` untouched.
    /// Test hook for degenerate walks such as `omega = 1`.
    pub fn with_omega(mut self, omega: Vec<f64>) -> Self {
        assert_eq!(omega.len(), self.x.len());
        self.omega = omega;
        self
    }

    /// Samples with a sampler of length `n + 2`; the first value becomes
    /// `X_{-1}` and the remaining `n + 1` are `X_0..X_n`.
    pub fn sample(sampler: &NoiseSampler, seed: u64) -> Self {
        let mut noise = sampler.sample(seed);
        let x_before = noise.remove(0);
        Self::from_noise(sampler.model().clone(), noise, seed).with_x_before(x_before)
    }

    /// Last site index `n`.
    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    pub fn noise(&self) -> &[f64] {
        &self.x
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omega
    }

    /// `V(0..=n)`.
    pub fn potential(&self) -> &[f64] {
        &self.v[1..]
    }

    /// `V(k)` for `k = -1..=n`.
    pub fn v(&self, k: i64) -> Result<f64> {
        self.check(k, -1)?;
        Ok(self.v[(k + 1) as usize])
    }

    /// `V(lo..=hi)` as a slice.
    pub fn v_range(&self, lo: i64, hi: i64) -> Result<&[f64]> {
        self.check(lo, -1)?;
        self.check(hi, -1)?;
        Ok(&self.v[(lo + 1) as usize..=(hi + 1) as usize])
    }

    /// `X_i` for `i = 0..=n`, and `i = -1` when `X_{-1}` is known.
    pub fn x(&self, i: i64) -> Result<f64> {
        if i == -1 {
            if let Some(x) = self.x_before {
                return Ok(x);
            }
        }
        self.check(i, 0)?;
        Ok(self.x[i as usize])
    }

    pub fn omega(&self, i: i64) -> Result<f64> {
        self.check(i, 0)?;
        Ok(self.omega[i as usize])
    }

    fn check(&self, index: i64, low: i64) -> Result<()> {
        let high = self.n() as i64;
        if index < low || index > high {
            return Err(Error::IndexOutOfEnvironment { index, low, high });
        }
        Ok(())
    }

    /// Debug dump with columns `index,x,v,omega`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,x,v,omega")?;
        match self.x_before {
            Some(x) => writeln!(out, "-1,{},{},{}", x, self.v[0], omega_from_noise(x))?,
            None => writeln!(out, "-1,,{},", self.v[0])?,
        }
        for i in 0..self.x.len() {
            writeln!(out, "{},{},{},{}", i, self.x[i], self.v[i + 1], self.omega[i])?;
        }
        Ok(())
    }
}

/// Samples a fresh environment on sites `0..=n`.
pub fn build_environment(model: &CovarianceModel, n: usize, seed: u64) -> Result<Environment> {
    let sampler = NoiseSampler::new(model, n + 1)?;
    Ok(Environment::sample(&sampler, seed))
}
