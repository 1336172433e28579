//! Gaussian-process regression with a squared-exponential ARD kernel.
//!
//! The posterior is exact: the Gram matrix plus noise is Cholesky-factored
//! once per fit and every query reuses the factor. Hyperparameters are
//! chosen by minimizing the negative log marginal likelihood with
//! multi-start Nelder-Mead in log space.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{cholesky, solve_lower, solve_lower_transpose, Matrix};
use crate::nelder_mead::{minimize, NelderMeadOptions};
use crate::{Error, Result};

/// Smallest admissible noise standard deviation.
pub const NOISE_FLOOR: f64 = 1e-8;
/// Largest diagonal jitter (relative to `sigma_f^2`) tried before giving up.
pub const MAX_JITTER: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GpHyperparams {
    /// Signal standard deviation `sigma_f`; the prior variance is its square.
    pub sigma_f: f64,
    /// Per-dimension lengthscales `l_i` (the kernel divides by `l_i^2`).
    pub lengthscales: Vec<f64>,
    /// Observation noise standard deviation `sigma_w`.
    pub sigma_w: f64,
}

impl GpHyperparams {
    pub fn isotropic(sigma_f: f64, lengthscale: f64, sigma_w: f64, dim: usize) -> Self {
        GpHyperparams {
            sigma_f,
            lengthscales: vec![lengthscale; dim],
            sigma_w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f.is_finite() && self.sigma_f > 0.0) {
            return Err(Error::param("sigma_f", "must be finite and > 0"));
        }
        if self.lengthscales.is_empty() || self.lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::param("lengthscales", "must be non-empty, finite and > 0"));
        }
        if !(self.sigma_w.is_finite() && self.sigma_w >= NOISE_FLOOR) {
            return Err(Error::param("sigma_w", format!("must be finite and >= {NOISE_FLOOR:e}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.sigma_f.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.sigma_w.ln());
        v
    }

    fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        GpHyperparams {
            sigma_f: theta[0].exp(),
            lengthscales: theta[1..=d].iter().map(|t| t.exp()).collect(),
            sigma_w: theta[d + 1].exp().max(NOISE_FLOOR),
        }
    }
}

/// Training inputs and targets.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if let Some(first) = inputs.first() {
            let d = first.len();
            if d == 0 {
                return Err(Error::param("inputs", "zero-dimensional inputs"));
            }
            if let Some(bad) = inputs.iter().find(|x| x.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
            }
        }
        if inputs.iter().flatten().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::param("dataset", "entries must be finite"));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.len())
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

#[inline]
fn kernel_unchecked(x: &[f64], y: &[f64], h: &GpHyperparams) -> f64 {
    let mut q = 0.0;
    for ((a, b), l) in x.iter().zip(y).zip(&h.lengthscales) {
        let d = (a - b) / l;
        q += d * d;
    }
    h.sigma_f * h.sigma_f * (-0.5 * q).exp()
}

/// `sigma_f^2 exp(-(x - x')^T L^{-1} (x - x') / 2)` with `L = diag(l_i^2)`.
pub fn kernel(x: &[f64], y: &[f64], h: &GpHyperparams) -> Result<f64> {
    if x.len() != y.len() || x.len() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: if x.len() != h.dim() { x.len() } else { y.len() },
        });
    }
    Ok(kernel_unchecked(x, y, h))
}

/// Gram matrix `K(X, X)` without noise.
pub fn gram(inputs: &[Vec<f64>], h: &GpHyperparams) -> Matrix {
    let m = inputs.len();
    let mut k = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = kernel_unchecked(&inputs[i], &inputs[j], h);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Posterior conditioned on a dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GpPosterior {
    data: Dataset,
    hyper: GpHyperparams,
    /// Lower factor of `K + (sigma_w^2 + jitter) I`.
    chol: Matrix,
    /// `(K + sigma_w^2 I)^{-1} y`.
    alpha: Vec<f64>,
    /// Extra diagonal term that was needed, relative to `sigma_f^2`.
    jitter: f64,
}

/// Conditions the prior on `data`, escalating diagonal jitter by factors
/// of ten (from `1e-10 sigma_f^2` up to `1e-4 sigma_f^2`) if the plain
/// factorization fails.
pub fn fit(data: &Dataset, h: &GpHyperparams) -> Result<GpPosterior> {
    h.validate()?;
    if data.is_empty() {
        return Err(Error::param("dataset", "needs at least one point"));
    }
    if data.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: data.dim(),
        });
    }
    let k = gram(data.inputs(), h);
    let m = data.len();
    let sf2 = h.sigma_f * h.sigma_f;
    let mut jitter = 0.0;
    loop {
        let mut a = k.clone();
        for i in 0..m {
            a[(i, i)] += h.sigma_w * h.sigma_w + jitter * sf2;
        }
        if let Some(l) = cholesky(&a) {
            let alpha = solve_lower_transpose(&l, &solve_lower(&l, data.targets()));
            return Ok(GpPosterior {
                data: data.clone(),
                hyper: h.clone(),
                chol: l,
                alpha,
                jitter,
            });
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > MAX_JITTER * (1.0 + 1e-9) {
            return Err(Error::NotPositiveDefinite { jitter: MAX_JITTER });
        }
    }
}

impl GpPosterior {
    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn factor(&self) -> &Matrix {
        &self.chol
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.hyper.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.hyper.dim(),
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> (f64, f64) {
        let kx: Vec<f64> = self.data.inputs().iter().map(|xi| kernel_unchecked(x, xi, &self.hyper)).collect();
        let mu = kx.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = solve_lower(&self.chol, &kx);
        let prior = self.hyper.sigma_f * self.hyper.sigma_f;
        let var = prior - v.iter().map(|t| t * t).sum::<f64>();
        (mu, var.max(0.0))
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Negative log marginal likelihood of the training targets.
    pub fn nlml(&self) -> f64 {
        let y = self.data.targets();
        let m = y.len() as f64;
        let fit: f64 = y.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let logdet_half: f64 = (0..self.chol.rows()).map(|i| self.chol[(i, i)].ln()).sum();
        0.5 * fit + logdet_half + 0.5 * m * (2.0 * core::f64::consts::PI).ln()
    }
}

/// Negative log marginal likelihood of `data` under `h`.
pub fn nlml(data: &Dataset, h: &GpHyperparams) -> Result<f64> {
    Ok(fit(data, h)?.nlml())
}

/// Box bounds on the hyperparameters (natural scale).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HyperBounds {
    pub sigma_f: (f64, f64),
    pub lengthscale: (f64, f64),
    pub sigma_w: (f64, f64),
}

impl Default for HyperBounds {
    /// Suited to unit-box inputs and standardized targets.
    fn default() -> Self {
        HyperBounds {
            sigma_f: (1e-2, 1e2),
            lengthscale: (1e-2, 1e1),
            sigma_w: (1e-6, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub local: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 8,
            local: NelderMeadOptions {
                max_evals: 300,
                f_tol: 1e-8,
                x_tol: 1e-5,
                initial_step: 0.1,
            },
        }
    }
}

/// `k`-th element of the van der Corput sequence in base `b`.
fn radical_inverse(mut k: usize, b: usize) -> f64 {
    let mut inv = 1.0 / b as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % b) as f64 * inv;
        k /= b;
        inv /= b as f64;
    }
    out
}

const PRIMES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Minimizes the NLML over `bounds`, starting from `init` and from
/// `opts.starts - 1` Halton points of the log-box. The result never has a
/// larger NLML than `init`.
pub fn fit_hyperparams_with(
    data: &Dataset,
    init: &GpHyperparams,
    bounds: &HyperBounds,
    opts: &FitOptions,
) -> Result<GpHyperparams> {
    init.validate()?;
    if data.len() < 3 {
        return Err(Error::param("dataset", "hyperparameter fitting needs at least 3 points"));
    }
    let d = data.dim();
    if d != init.dim() {
        return Err(Error::DimensionMismatch {
            expected: init.dim(),
            got: d,
        });
    }
    let check = |(lo, hi): (f64, f64), name| {
        if lo > 0.0 && hi >= lo && hi.is_finite() {
            Ok(())
        } else {
            Err(Error::param(name, "bounds must satisfy 0 < lo <= hi < inf"))
        }
    };
    check(bounds.sigma_f, "sigma_f bounds")?;
    check(bounds.lengthscale, "lengthscale bounds")?;
    check(bounds.sigma_w, "sigma_w bounds")?;

    let mut lo = vec![bounds.sigma_f.0.ln()];
    let mut hi = vec![bounds.sigma_f.1.ln()];
    lo.extend(core::iter::repeat(bounds.lengthscale.0.ln()).take(d));
    hi.extend(core::iter::repeat(bounds.lengthscale.1.ln()).take(d));
    lo.push(bounds.sigma_w.0.max(NOISE_FLOOR).ln());
    hi.push(bounds.sigma_w.1.max(NOISE_FLOOR).ln());

    let objective = |theta: &[f64]| match nlml(data, &GpHyperparams::from_log(theta)) {
        Ok(v) => v,
        Err(_) => f64::INFINITY,
    };

    let mut best_h = init.clone();
    let mut best_f = nlml(data, init).unwrap_or(f64::INFINITY);
    let dims = lo.len();
    for s in 0..opts.starts.max(1) {
        let x0: Vec<f64> = if s == 0 {
            init.to_log()
        } else {
            (0..dims)
                .map(|j| lo[j] + (hi[j] - lo[j]) * radical_inverse(s, PRIMES[j % PRIMES.len()]))
                .collect()
        };
        let m = minimize(objective, &x0, &lo, &hi, &opts.local);
        if m.f < best_f {
            best_f = m.f;
            best_h = GpHyperparams::from_log(&m.x);
        }
    }
    if !best_f.is_finite() {
        return Err(Error::HyperparameterFit("no start produced a positive-definite Gram matrix".into()));
    }
    Ok(best_h)
}

/// [`fit_hyperparams_with`] using default options.
pub fn fit_hyperparams(data: &Dataset, init: &GpHyperparams, bounds: &HyperBounds) -> Result<GpHyperparams> {
    fit_hyperparams_with(data, init, bounds, &FitOptions::default())
}

/// Affine map of a box onto `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InputScaler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputScaler {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(h > l)) {
            return Err(Error::param("bounds", "need lo < hi on every axis"));
        }
        Ok(InputScaler { lo, hi })
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| (v - l) / (h - l))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| l + v * (h - l))
            .collect()
    }
}

/// Centering and scaling of targets.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    /// Sample mean and standard deviation; a degenerate spread falls back
    /// to a unit scale so constant data stays finite.
    pub fn fit(y: &[f64]) -> Self {
        if y.is_empty() {
            return TargetScaler { mean: 0.0, std: 1.0 };
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let tiny = 1e-12 * mean.abs().max(f64::MIN_POSITIVE);
        TargetScaler {
            mean,
            std: if std > tiny { std } else { 1.0 },
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}
