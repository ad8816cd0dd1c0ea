//! The log-Pareto-tailed error density
//!
//! ```text
//! f(z) = (γ/2) / (1 + |z|) · {1 + log(1 + |z|)}^-(1+γ)
//! ```
//!
//! Its tails decay like `|z|^-1` up to logarithmic factors, which is what
//! makes regression posteriors built on it reject gross outliers. Every
//! quantity is evaluated through `L = log(1 + |z|)`, so the density, its
//! distribution function and its quantiles stay finite far beyond the
//! range where `z` itself is representable.

use rand::distr::{Distribution, Open01};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDensity")]
pub struct LptnDensity {
    gamma: f64,
}

#[derive(Deserialize)]
struct RawDensity {
    gamma: f64,
}

impl TryFrom<RawDensity> for LptnDensity {
    type Error = Error;

    fn try_from(raw: RawDensity) -> Result<Self> {
        LptnDensity::new(raw.gamma)
    }
}

impl LptnDensity {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be finite and > 0, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Log-density at `z`. NaN in, NaN out; `±inf` gives `-inf`.
    #[inline]
    pub fn ln_pdf(&self, z: f64) -> f64 {
        self.ln_pdf_log1p(z.abs().ln_1p())
    }

    /// Log-density written in terms of `l = log(1 + |z|)`.
    #[inline]
    pub fn ln_pdf_log1p(&self, l: f64) -> f64 {
        (0.5 * self.gamma).ln() - l - (1.0 + self.gamma) * l.ln_1p()
    }

    #[inline]
    pub fn pdf(&self, z: f64) -> f64 {
        self.ln_pdf(z).exp()
    }

    /// `log{f(r/σ)/σ}`: the log-likelihood of a residual `r` at scale `σ`.
    #[inline]
    pub fn ln_scaled(&self, residual: f64, sigma: f64) -> f64 {
        self.ln_pdf(residual / sigma) - sigma.ln()
    }

    /// Upper-tail probability `P(Z > z)` for `z >= 0`, `1 - cdf(z)` in general.
    pub fn sf(&self, z: f64) -> f64 {
        if z >= 0.0 {
            0.5 * (-self.gamma * z.ln_1p().ln_1p()).exp()
        } else {
            1.0 - self.sf(-z)
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        self.cdf_log1p(z.signum(), z.abs().ln_1p())
    }

    /// Distribution function at the point given as `(sign, log(1 + |z|))`,
    /// the form returned by [`quantile_log1p`](Self::quantile_log1p).
    pub fn cdf_log1p(&self, sign: f64, l: f64) -> f64 {
        let tail = 0.5 * (-self.gamma * l.ln_1p()).exp();
        if sign >= 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }

    /// Quantile in log form: returns `(sign, log(1 + |z|))` for the `u`-quantile.
    ///
    /// This is exact for every `u` in `(0, 1)`, including the ones whose
    /// quantile overflows `f64`.
    pub fn quantile_log1p(&self, u: f64) -> Result<(f64, f64)> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::invalid(format!("quantile level must lie in (0, 1), got {u}")));
        }
        if u == 0.5 {
            return Ok((1.0, 0.0));
        }
        let (sign, tail) = if u > 0.5 { (1.0, 1.0 - u) } else { (-1.0, u) };
        // 2·tail = {1 + L}^-γ
        let l = (2.0 * tail).powf(-1.0 / self.gamma) - 1.0;
        Ok((sign, l.max(0.0)))
    }

    /// Inverse of [`cdf`](Self::cdf). Quantiles beyond the `f64` range
    /// saturate at `±f64::MAX`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        let (sign, l) = self.quantile_log1p(u)?;
        let z = l.exp_m1();
        Ok(sign * z.min(f64::MAX))
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

impl Distribution<f64> for LptnDensity {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = Open01.sample(rng);
        self.quantile(u).expect("Open01 draws lie in (0, 1)")
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {v}")))
    }
}

pub fn lptn_pdf(z: f64, d: &LptnDensity) -> Result<f64> {
    check_finite("z", z)?;
    Ok(d.pdf(z))
}

pub fn lptn_ln_pdf(z: f64, d: &LptnDensity) -> Result<f64> {
    check_finite("z", z)?;
    Ok(d.ln_pdf(z))
}

pub fn lptn_cdf(z: f64, d: &LptnDensity) -> f64 {
    d.cdf(z)
}

pub fn lptn_quantile(u: f64, d: &LptnDensity) -> Result<f64> {
    d.quantile(u)
}

/// `n` i.i.d. draws by inverse-cdf transform, reproducible from `seed`.
pub fn lptn_sample(n: usize, d: &LptnDensity, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let mut rng = crate::rng::seeded(seed);
    Ok(d.sample_n(n, &mut rng))
}

/// `log[{f((y-μ)/σ)/σ} / f(y)]`.
#[inline]
pub fn ln_tail_ratio(y: f64, mu: f64, sigma: f64, d: &LptnDensity) -> f64 {
    d.ln_scaled(y - mu, sigma) - d.ln_pdf(y)
}

/// `{f((y-μ)/σ)/σ} / f(y)`, computed in log space.
pub fn tail_ratio(y: f64, mu: f64, sigma: f64, d: &LptnDensity) -> Result<f64> {
    check_finite("y", y)?;
    check_finite("mu", mu)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be finite and > 0, got {sigma}")));
    }
    Ok(ln_tail_ratio(y, mu, sigma, d).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn d(g: f64) -> LptnDensity {
        LptnDensity::new(g).unwrap()
    }

    #[test]
    fn pdf_at_origin_is_half_gamma() {
        assert_eq!(lptn_pdf(0.0, &d(1.0)).unwrap(), 0.5);
        assert!((lptn_pdf(0.0, &d(3.0)).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn pdf_hand_value() {
        // log(1 + z) = 1 → f = (1/2)(1/e)(1/2)^2
        let v = lptn_pdf(E - 1.0, &d(1.0)).unwrap();
        assert!((v - 1.0 / (8.0 * E)).abs() < 1e-15);
        assert!((v - 0.045_985).abs() < 1e-6);
    }

    #[test]
    fn pdf_symmetric() {
        let g = d(2.0);
        assert_eq!(g.pdf(-5.0), g.pdf(5.0));
    }

    #[test]
    fn pdf_rejects_non_finite() {
        assert!(lptn_pdf(f64::NAN, &d(1.0)).is_err());
        assert!(lptn_pdf(f64::INFINITY, &d(1.0)).is_err());
    }

    #[test]
    fn gamma_must_be_positive() {
        assert!(LptnDensity::new(0.0).is_err());
        assert!(LptnDensity::new(-1.0).is_err());
        assert!(LptnDensity::new(f64::NAN).is_err());
    }

    #[test]
    fn log_pdf_finite_at_extreme_arguments() {
        let g = d(1.0);
        let v = g.ln_pdf(1e300);
        assert!(v.is_finite());
        assert!(v < -690.0);
    }

    #[test]
    fn cdf_values() {
        assert_eq!(lptn_cdf(0.0, &d(0.7)), 0.5);
        assert!((lptn_cdf(E - 1.0, &d(1.0)) - 0.75).abs() < 1e-15);
        assert!((lptn_cdf(1.0 - E, &d(1.0)) - 0.25).abs() < 1e-15);
        assert!(lptn_cdf(1e300, &d(1.0)) > 0.99);
        assert_eq!(lptn_cdf(f64::INFINITY, &d(1.0)), 1.0);
        assert_eq!(lptn_cdf(f64::NEG_INFINITY, &d(1.0)), 0.0);
    }

    #[test]
    fn quantile_values() {
        let g = d(1.0);
        assert_eq!(lptn_quantile(0.5, &g).unwrap(), 0.0);
        assert!((lptn_quantile(0.75, &g).unwrap() - (E - 1.0)).abs() < 1e-13);
        assert!((lptn_quantile(0.25, &g).unwrap() + (E - 1.0)).abs() < 1e-13);
        assert!((1.718_28 - lptn_quantile(0.75, &g).unwrap()).abs() < 1e-5);
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        let g = d(1.0);
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(lptn_quantile(u, &g).is_err(), "u = {u}");
        }
    }

    #[test]
    fn quantile_saturates_instead_of_overflowing() {
        let g = d(0.5);
        let q = g.quantile(0.999).unwrap();
        assert_eq!(q, f64::MAX);
        let (sign, l) = g.quantile_log1p(0.999).unwrap();
        assert!((g.cdf_log1p(sign, l) - 0.999).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = d(1.0);
        let a = lptn_sample(100, &g, 7).unwrap();
        let b = lptn_sample(100, &g, 7).unwrap();
        assert_eq!(a, b);
        let one = lptn_sample(1, &g, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].is_finite());
        assert!(lptn_sample(0, &g, 3).is_err());
    }

    #[test]
    fn tail_ratio_identity_scale() {
        let g = d(1.0);
        for y in [-1e6, -3.0, 0.0, 2.5, 1e9] {
            assert!((tail_ratio(y, 0.0, 1.0, &g).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tail_ratio_at_large_y() {
        let g = d(1.0);
        let r12 = tail_ratio(1e12, 3.0, 2.0, &g).unwrap();
        let r6 = tail_ratio(1e6, 3.0, 2.0, &g).unwrap();
        assert!((r12 - 1.0).abs() < 0.15, "{r12}");
        assert!((r12 - 1.0).abs() < (r6 - 1.0).abs());
    }

    #[test]
    fn tail_ratio_rejects_bad_sigma() {
        assert!(tail_ratio(1.0, 0.0, 0.0, &d(1.0)).is_err());
        assert!(tail_ratio(1.0, 0.0, -1.0, &d(1.0)).is_err());
    }
}
