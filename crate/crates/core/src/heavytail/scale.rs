//! Priors on the scale parameter and the moment condition
//! `∫ (1 + σ^ρ) π(σ) dσ < ∞`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ScalePrior {
    HalfCauchy { scale: f64 },
    InverseGamma { shape: f64, rate: f64 },
    LogNormal { mu: f64, s: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl ScalePrior {
    pub fn half_cauchy(scale: f64) -> Result<Self> {
        positive("half-Cauchy scale", scale)?;
        Ok(Self::HalfCauchy { scale })
    }

    pub fn inverse_gamma(shape: f64, rate: f64) -> Result<Self> {
        positive("inverse-gamma shape", shape)?;
        positive("inverse-gamma rate", rate)?;
        Ok(Self::InverseGamma { shape, rate })
    }

    pub fn log_normal(mu: f64, s: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::invalid(format!("log-normal location must be finite, got {mu}")));
        }
        positive("log-normal scale", s)?;
        Ok(Self::LogNormal { mu, s })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::HalfCauchy { scale } => Self::half_cauchy(scale).map(|_| ()),
            Self::InverseGamma { shape, rate } => Self::inverse_gamma(shape, rate).map(|_| ()),
            Self::LogNormal { mu, s } => Self::log_normal(mu, s).map(|_| ()),
        }
    }

    /// Log-density on `(0, ∞)`; `-inf` for `σ <= 0`.
    pub fn ln_pdf(&self, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            Self::HalfCauchy { scale } => {
                let t = sigma / scale;
                (2.0 / std::f64::consts::PI).ln() - scale.ln() - (t * t).ln_1p()
            }
            Self::InverseGamma { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * sigma.ln() - rate / sigma
            }
            Self::LogNormal { mu, s } => {
                let z = (sigma.ln() - mu) / s;
                -0.5 * z * z - sigma.ln() - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    /// Closed-form answer to whether `E[σ^ρ]` is finite.
    pub fn moment_is_finite(&self, rho: f64) -> bool {
        match *self {
            Self::HalfCauchy { .. } => rho < 1.0,
            Self::InverseGamma { shape, .. } => rho < shape,
            Self::LogNormal { .. } => true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentCheck {
    pub rho: f64,
    pub analytic_finite: bool,
    pub numeric_finite: bool,
    /// `∫(1 + σ^ρ)π(σ)dσ` with the geometric tail extrapolated, or `inf`.
    pub estimate: f64,
    /// log10 of the ratio between the last two per-decade increments.
    pub tail_slope: f64,
    pub agree: bool,
}

const LAST_DECADE: i32 = 60;

/// Decides the moment condition by the closed-form rule and cross-checks it
/// by integrating decade by decade in `log σ`: a convergent integral has
/// per-decade increments that shrink geometrically.
pub fn scale_moment_check(sp: &ScalePrior, rho: f64) -> Result<MomentCheck> {
    sp.validate()?;
    positive("rho", rho)?;
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-12,
        max_intervals: 400,
    };
    let ln10 = std::f64::consts::LN_10;
    // Integrand in τ = log σ, including the Jacobian σ.
    let g = |tau: f64| {
        let v = sp.ln_pdf(tau.exp()) + tau + (rho * tau).exp().ln_1p();
        if v.is_finite() {
            v.exp()
        } else {
            0.0
        }
    };
    let lower = integrate(g, -60.0 * ln10, 0.0, &opts).value;
    let mut increments = Vec::with_capacity(LAST_DECADE as usize);
    for k in 0..LAST_DECADE {
        let a = k as f64 * ln10;
        increments.push(integrate(g, a, a + ln10, &opts).value);
    }
    let partial: f64 = lower + increments.iter().sum::<f64>();
    let n = increments.len();
    let (prev, last) = (increments[n - 2], increments[n - 1]);
    let tail_slope = if last > 0.0 && prev > 0.0 {
        (last / prev).log10()
    } else {
        f64::NEG_INFINITY
    };
    let numeric_finite = tail_slope < -0.01;
    let estimate = if numeric_finite {
        let r = 10f64.powf(tail_slope);
        partial + last * r / (1.0 - r)
    } else {
        f64::INFINITY
    };
    let analytic_finite = sp.moment_is_finite(rho);
    Ok(MomentCheck {
        rho,
        analytic_finite,
        numeric_finite,
        estimate,
        tail_slope,
        agree: analytic_finite == numeric_finite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mass(sp: &ScalePrior) -> f64 {
        let opts = QuadOptions::default();
        integrate(|t: f64| (sp.ln_pdf(t.exp()) + t).exp(), -80.0, 80.0, &opts).value
    }

    #[test]
    fn densities_are_proper() {
        for sp in [
            ScalePrior::half_cauchy(1.0).unwrap(),
            ScalePrior::half_cauchy(3.5).unwrap(),
            ScalePrior::inverse_gamma(2.0, 1.0).unwrap(),
            ScalePrior::inverse_gamma(0.5, 3.0).unwrap(),
            ScalePrior::log_normal(0.0, 1.0).unwrap(),
            ScalePrior::log_normal(-2.0, 0.3).unwrap(),
        ] {
            let m = mass(&sp);
            assert!((m - 1.0).abs() < 1e-8, "{sp:?}: {m}");
        }
    }

    #[test]
    fn half_cauchy_moments() {
        let sp = ScalePrior::half_cauchy(1.0).unwrap();
        let ok = scale_moment_check(&sp, 0.5).unwrap();
        assert!(ok.analytic_finite && ok.numeric_finite && ok.agree);
        // ∫ (1 + σ^½) 2/{π(1+σ²)} dσ = 1 + 1/cos(π/4) · ... = 1 + sec(π/4)
        let exact = 1.0 + 1.0 / (std::f64::consts::FRAC_PI_4).cos();
        assert!((ok.estimate - exact).abs() < 1e-6, "{}", ok.estimate);
        let bad = scale_moment_check(&sp, 1.5).unwrap();
        assert!(!bad.analytic_finite && !bad.numeric_finite && bad.agree);
        assert!(bad.estimate.is_infinite());
    }

    #[test]
    fn inverse_gamma_moments() {
        let sp = ScalePrior::inverse_gamma(2.0, 1.0).unwrap();
        let ok = scale_moment_check(&sp, 1.0).unwrap();
        // E[σ] = rate / (shape - 1) = 1
        assert!(ok.agree && ok.analytic_finite);
        assert!((ok.estimate - 2.0).abs() < 1e-6, "{}", ok.estimate);
        let bad = scale_moment_check(&sp, 2.5).unwrap();
        assert!(bad.agree && !bad.analytic_finite);
    }

    #[test]
    fn log_normal_moments_all_finite() {
        let sp = ScalePrior::log_normal(0.0, 1.0).unwrap();
        let c = scale_moment_check(&sp, 3.0).unwrap();
        assert!(c.analytic_finite && c.numeric_finite);
        // 1 + E[σ^3] = 1 + exp(9/2)
        assert!((c.estimate - (1.0 + 4.5f64.exp())).abs() < 1e-6 * 4.5f64.exp());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ScalePrior::half_cauchy(0.0).is_err());
        assert!(ScalePrior::inverse_gamma(1.0, -1.0).is_err());
        assert!(ScalePrior::log_normal(f64::NAN, 1.0).is_err());
        let sp = ScalePrior::half_cauchy(1.0).unwrap();
        assert!(scale_moment_check(&sp, 0.0).is_err());
    }
}
