//! Inequalities satisfied by the error density, checked pointwise.
//!
//! For residual location `μ`, scale `σ` and observation `y`:
//!
//! * tail bound: if `|y - μ| >= |y|/2` and `|y| >= 1`, the tail ratio is at
//!   most `4 (1 + log 3)^(1+γ) {1 + log(1 + σ)}^(1+γ)`;
//! * envelope: `f((y-μ)/σ)/σ <= (γ/2)(1/σ)(1 + |y-μ|/σ)^-1` everywhere;
//! * lower tail: if `|y| >= 2e`, `f(y) >= γ / 2^(3+γ) / {|y| (log|y|)^(1+γ)}`.
//!
//! All comparisons happen in log space with a relative slack of `1e-12` to
//! absorb rounding when a bound is attained with equality.

use rand::Rng;
use serde::Serialize;

use super::density::{ln_tail_ratio, LptnDensity};
use crate::error::{Error, Result};

const LOG_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// One inequality, reported on the natural scale. Upper bounds read
/// `lhs <= bound`; the lower-tail check reads `lhs >= bound`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub bound: f64,
    pub status: CheckStatus,
}

impl BoundCheck {
    fn skipped() -> Self {
        Self {
            lhs: f64::NAN,
            bound: f64::NAN,
            status: CheckStatus::Skipped,
        }
    }

    fn from_logs(ln_lhs: f64, ln_bound: f64) -> Self {
        let holds = ln_lhs <= ln_bound + LOG_SLACK * (1.0 + ln_bound.abs());
        Self {
            lhs: ln_lhs.exp(),
            bound: ln_bound.exp(),
            status: if holds { CheckStatus::Pass } else { CheckStatus::Fail },
        }
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailBoundRecord {
    pub y: f64,
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub tail_bound: BoundCheck,
    pub envelope: BoundCheck,
    pub lower_tail: BoundCheck,
}

impl TailBoundRecord {
    pub fn any_failed(&self) -> bool {
        self.tail_bound.failed() || self.envelope.failed() || self.lower_tail.failed()
    }

    pub fn checks(&self) -> [&BoundCheck; 3] {
        [&self.tail_bound, &self.envelope, &self.lower_tail]
    }
}

pub fn tail_bounds(y: f64, mu: f64, sigma: f64, d: &LptnDensity) -> Result<TailBoundRecord> {
    if !(y.is_finite() && mu.is_finite()) {
        return Err(Error::invalid("y and mu must be finite"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be finite and > 0, got {sigma}")));
    }
    let g = d.gamma();
    let resid = y - mu;

    let tail_bound = if resid.abs() >= 0.5 * y.abs() && y.abs() >= 1.0 {
        let ln_lhs = ln_tail_ratio(y, mu, sigma, d);
        let ln_bound = 4.0f64.ln() + (1.0 + g) * (1.0 + 3.0f64.ln()).ln() + (1.0 + g) * sigma.ln_1p().ln_1p();
        BoundCheck::from_logs(ln_lhs, ln_bound)
    } else {
        BoundCheck::skipped()
    };

    let envelope = {
        let ln_lhs = d.ln_scaled(resid, sigma);
        let ln_bound = (0.5 * g).ln() - sigma.ln() - (resid.abs() / sigma).ln_1p();
        BoundCheck::from_logs(ln_lhs, ln_bound)
    };

    let lower_tail = if y.abs() >= 2.0 * std::f64::consts::E {
        // f(y) >= bound, i.e. bound <= f(y)
        let ln_f = d.ln_pdf(y);
        let ay = y.abs();
        let ln_bound = g.ln() - (3.0 + g) * std::f64::consts::LN_2 - ay.ln() - (1.0 + g) * ay.ln().ln();
        let mut c = BoundCheck::from_logs(ln_bound, ln_f);
        // report with lhs = f(y) and bound = the lower bound
        std::mem::swap(&mut c.lhs, &mut c.bound);
        c
    } else {
        BoundCheck::skipped()
    };

    Ok(TailBoundRecord {
        y,
        mu,
        sigma,
        gamma: g,
        tail_bound,
        envelope,
        lower_tail,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FuzzSummary {
    pub tuples: usize,
    pub checked: [usize; 3],
    pub failures: [usize; 3],
    pub first_failure: Option<TailBoundRecord>,
}

impl FuzzSummary {
    pub fn total_failures(&self) -> usize {
        self.failures.iter().sum()
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn signed_magnitude<R: Rng>(rng: &mut R, max: f64) -> f64 {
    // Half log-uniform over [1e-3, max], half uniform over [-max, max].
    if rng.random_bool(0.5) {
        let m = log_uniform(rng, 1e-3, max);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    } else {
        rng.random_range(-max..max)
    }
}

/// Checks all three inequalities on `n` random `(y, μ, σ, γ)` tuples with
/// `y, μ ∈ [-1e8, 1e8]`, `σ ∈ [1e-3, 1e3]` and `γ ∈ [0.05, 20]`.
pub fn fuzz_tail_bounds(n: usize, seed: u64) -> FuzzSummary {
    let mut rng = crate::rng::seeded(seed);
    let mut checked = [0usize; 3];
    let mut failures = [0usize; 3];
    let mut first_failure = None;
    for _ in 0..n {
        let y = signed_magnitude(&mut rng, 1e8);
        // Bias μ towards the region where the tail bound applies.
        let mu = if rng.random_bool(0.5) {
            y * rng.random_range(-1.0..0.5)
        } else {
            signed_magnitude(&mut rng, 1e8)
        };
        let sigma = log_uniform(&mut rng, 1e-3, 1e3);
        let gamma = log_uniform(&mut rng, 0.05, 20.0);
        let d = LptnDensity::new(gamma).expect("gamma drawn positive");
        let rec = tail_bounds(y, mu, sigma, &d).expect("finite inputs");
        for (k, c) in rec.checks().iter().enumerate() {
            if c.status != CheckStatus::Skipped {
                checked[k] += 1;
            }
            if c.failed() {
                failures[k] += 1;
            }
        }
        if rec.any_failed() && first_failure.is_none() {
            first_failure = Some(rec);
        }
    }
    FuzzSummary {
        tuples: n,
        checked,
        failures,
        first_failure,
    }
}
