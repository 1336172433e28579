//! Real polynomials in the Laplace variable.
//!
//! Coefficients are stored in ascending powers (`c[k]` multiplies `s^k`).
//! Transfer functions expose descending vectors at their API boundary, the
//! usual convention in control toolboxes.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    /// Builds from ascending coefficients. Trailing zeros are trimmed.
    pub fn from_ascending(coeffs: &[f64]) -> Self {
        let mut p = Poly {
            coeffs: coeffs.to_vec(),
        };
        p.trim();
        p
    }

    /// Builds from descending coefficients (`[a_n, ..., a_0]`).
    pub fn from_descending(coeffs: &[f64]) -> Self {
        let mut c = coeffs.to_vec();
        c.reverse();
        Self::from_ascending(&c)
    }

    pub fn constant(c: f64) -> Self {
        Self::from_ascending(&[c])
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    /// The polynomial `s`.
    pub fn s() -> Self {
        Self::from_ascending(&[0.0, 1.0])
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(&c) if c == 0.0) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn ascending(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn descending(&self) -> Vec<f64> {
        if self.coeffs.is_empty() {
            return vec![0.0];
        }
        let mut c = self.coeffs.clone();
        c.reverse();
        c
    }

    /// Coefficient of `s^k` (zero beyond the degree).
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::from_ascending(&self.coeffs.iter().map(|c| c * k).collect::<Vec<_>>())
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn derivative(&self) -> Self {
        let c: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        Self::from_ascending(&c)
    }

    /// Divides by `s`, which must be a root (zero constant term).
    pub fn div_s(&self) -> Option<Self> {
        match self.coeffs.first() {
            None => Some(Poly::zero()),
            Some(&c0) if c0 == 0.0 => Some(Self::from_ascending(&self.coeffs[1..])),
            _ => None,
        }
    }

    /// Largest absolute coefficient, used as a scale for tolerances.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Complex roots by Aberth-Ehrlich iteration.
    ///
    /// Intended for low-degree analysis polynomials (degree <= ~10). Roots
    /// spread over many decades are handled by running the iteration on a
    /// monic polynomial and polishing each root with Newton steps.
    pub fn roots(&self) -> Vec<Complex64> {
        let n = self.degree();
        if self.is_zero() || n == 0 {
            return Vec::new();
        }
        // Zero roots are split off exactly.
        let zeros = self.coeffs.iter().take_while(|&&c| c == 0.0).count();
        let reduced = Poly::from_ascending(&self.coeffs[zeros..]);
        let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
        let m = reduced.degree();
        if m == 0 {
            return roots;
        }
        let lead = reduced.leading();
        let monic: Vec<f64> = reduced.coeffs.iter().map(|c| c / lead).collect();
        let p = Poly { coeffs: monic };
        let dp = p.derivative();

        // Initial guesses spread over the annulus given by the coefficient
        // magnitudes, slightly rotated to avoid symmetric stalls.
        let lower = {
            let c0 = p.coeffs[0].abs();
            let mut b: f64 = 0.0;
            for k in 1..=m {
                b = b.max((p.coeffs[k].abs() / c0).powf(1.0 / k as f64));
            }
            1.0 / (2.0 * b)
        };
        let upper = {
            let mut b: f64 = 0.0;
            for k in 0..m {
                b = b.max(p.coeffs[k].abs().powf(1.0 / (m - k) as f64));
            }
            2.0 * b
        };
        let mut z: Vec<Complex64> = (0..m)
            .map(|k| {
                let frac = if m == 1 { 0.5 } else { k as f64 / (m - 1) as f64 };
                let r = lower * (upper / lower).powf(frac);
                let ang = 0.4 + 2.0 * core::f64::consts::PI * k as f64 / m as f64;
                Complex64::from_polar(r, ang)
            })
            .collect();

        for _ in 0..2000 {
            let mut max_step: f64 = 0.0;
            for i in 0..m {
                let pz = p.eval_complex(z[i]);
                let dpz = dp.eval_complex(z[i]);
                if pz.norm() == 0.0 {
                    continue;
                }
                let ratio = pz / dpz;
                let mut sum = Complex64::new(0.0, 0.0);
                for j in 0..m {
                    if j != i {
                        sum += (z[i] - z[j]).inv();
                    }
                }
                let step = ratio / (Complex64::new(1.0, 0.0) - ratio * sum);
                if step.is_finite() {
                    z[i] -= step;
                    max_step = max_step.max(step.norm() / z[i].norm().max(1e-300));
                }
            }
            if max_step < 1e-15 {
                break;
            }
        }
        for zi in z.iter_mut() {
            for _ in 0..5 {
                let d = dp.eval_complex(*zi);
                if d.norm() == 0.0 {
                    break;
                }
                let step = p.eval_complex(*zi) / d;
                if !step.is_finite() {
                    break;
                }
                *zi -= step;
            }
        }
        roots.extend(z);
        roots
    }

    /// Routh-Hurwitz test: true when every root lies strictly in the open
    /// left half plane.
    pub fn is_hurwitz(&self) -> bool {
        let n = self.degree();
        if self.is_zero() {
            return false;
        }
        if n == 0 {
            return true;
        }
        let desc = self.descending();
        let sign = desc[0].signum();
        if desc.iter().any(|&c| c * sign <= 0.0) {
            return false;
        }
        let cols = n / 2 + 1;
        let mut row0: Vec<f64> = (0..cols).map(|j| desc.get(2 * j).copied().unwrap_or(0.0)).collect();
        let mut row1: Vec<f64> = (0..cols).map(|j| desc.get(2 * j + 1).copied().unwrap_or(0.0)).collect();
        for _ in 0..n {
            if row1[0] * sign <= 0.0 {
                return false;
            }
            let mut next = vec![0.0; cols];
            for j in 0..cols - 1 {
                next[j] = (row1[0] * row0[j + 1] - row0[0] * row1[j + 1]) / row1[0];
            }
            row0 = row1;
            row1 = next;
            if row1.iter().all(|&c| c == 0.0) {
                // Only the final row may vanish entirely.
                return row0.iter().skip(1).all(|&c| c == 0.0);
            }
        }
        true
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let c: Vec<f64> = (0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect();
        Poly::from_ascending(&c)
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let c: Vec<f64> = (0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect();
        Poly::from_ascending(&c)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::from_ascending(&c)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}
