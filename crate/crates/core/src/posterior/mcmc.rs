//! Adaptive random-walk Metropolis on `(β, log σ)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::diagnostics::ess;
use super::fit::clean_fit;
use crate::error::{Error, Result};
use crate::model::{Kernel, RegressionProblem, Subset};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McmcOptions {
    pub draws: usize,
    /// Discarded adaptation phase; defaults to half of `draws`, at least 2000.
    pub warmup: Option<usize>,
    pub seed: u64,
    pub target_accept: f64,
    /// Below this effective sample size on any coordinate the chain is flagged.
    pub min_ess: f64,
}

impl McmcOptions {
    pub fn new(draws: usize, seed: u64) -> Self {
        Self {
            draws,
            warmup: None,
            seed,
            target_accept: 0.3,
            min_ess: 400.0,
        }
    }

    fn warmup_len(&self) -> usize {
        self.warmup.unwrap_or((self.draws / 2).max(2000))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Draw {
    pub beta: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcChain {
    pub draws: Vec<Draw>,
    pub acceptance_rate: f64,
    /// Effective sample size per coordinate: the coefficients, then `σ`.
    pub ess: Vec<f64>,
    pub seed: u64,
    pub low_ess: bool,
    /// Frozen proposal standard deviations on `(β, log σ)`.
    pub proposal_sd: Vec<f64>,
}

/// Summary without the draws, for reports.
#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub n_draws: usize,
    pub acceptance_rate: f64,
    pub ess: Vec<f64>,
    pub seed: u64,
    pub low_ess: bool,
    pub beta_mean: Vec<f64>,
    pub sigma_mean: f64,
}

impl McmcChain {
    pub fn beta(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.beta[k]).collect()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.sigma).collect()
    }

    pub fn summary(&self) -> ChainSummary {
        let n = self.draws.len() as f64;
        let p = self.draws.first().map_or(0, |d| d.beta.len());
        ChainSummary {
            n_draws: self.draws.len(),
            acceptance_rate: self.acceptance_rate,
            ess: self.ess.clone(),
            seed: self.seed,
            low_ess: self.low_ess,
            beta_mean: (0..p).map(|k| self.beta(k).iter().sum::<f64>() / n).collect(),
            sigma_mean: self.sigma().iter().sum::<f64>() / n,
        }
    }

    /// Draws as CSV with columns `beta1, …, betap, sigma`.
    pub fn to_csv(&self) -> String {
        let p = self.draws.first().map_or(0, |d| d.beta.len());
        let mut s: String = (1..=p).map(|k| format!("beta{k},")).collect();
        s.push_str("sigma\n");
        for d in &self.draws {
            for b in &d.beta {
                s.push_str(&format!("{b},"));
            }
            s.push_str(&format!("{}\n", d.sigma));
        }
        s
    }
}

pub const START_ATTEMPTS: usize = 1000;

/// `log` of the target on `(β, τ = log σ)`, Jacobian included.
fn ln_target(kernel: &Kernel<'_>, theta: &[f64]) -> f64 {
    let p = theta.len() - 1;
    let tau = theta[p];
    let v = kernel.ln_eval(&theta[..p], tau.exp()) + tau;
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

pub fn mcmc_posterior(prob: &RegressionProblem, omega: f64, subset: &Subset, n_draws: usize, seed: u64) -> Result<McmcChain> {
    mcmc_posterior_with(prob, omega, subset, &McmcOptions::new(n_draws, seed))
}

pub fn mcmc_posterior_with(prob: &RegressionProblem, omega: f64, subset: &Subset, opts: &McmcOptions) -> Result<McmcChain> {
    if opts.draws < 1000 {
        return Err(Error::invalid(format!("at least 1000 draws required, got {}", opts.draws)));
    }
    if !(opts.target_accept > 0.0 && opts.target_accept < 1.0) {
        return Err(Error::invalid("target acceptance must lie in (0, 1)"));
    }
    let kernel = Kernel::new(prob, omega, subset)?;
    let p = prob.p();
    let d = p + 1;
    let mut rng = crate::rng::seeded(opts.seed);
    let fit = clean_fit(prob);

    // Start point: least squares on the clean rows, perturbed until finite.
    let mut theta: Vec<f64> = fit.beta.iter().copied().chain([fit.scale.ln()]).collect();
    let mut lp = ln_target(&kernel, &theta);
    let mut attempts = 0;
    while !lp.is_finite() {
        attempts += 1;
        if attempts >= START_ATTEMPTS {
            return Err(Error::StartPoint(attempts));
        }
        let spread = 1.0 + attempts as f64 / 100.0;
        for (j, t) in theta.iter_mut().enumerate() {
            let base = if j < p { fit.beta[j] } else { fit.scale.ln() };
            let s = if j < p { fit.coef_scale[j] } else { 1.0 };
            let z: f64 = rng.sample(StandardNormal);
            *t = base + spread * s * z;
        }
        lp = ln_target(&kernel, &theta);
    }

    let mut sd: Vec<f64> = fit.coef_scale.iter().map(|s| 0.5 * s).chain([0.5]).collect();
    let mut ln_lambda = (2.38 / (d as f64).sqrt()).ln();
    let warmup = opts.warmup_len();
    let (mut wn, mut wmean, mut wm2) = (0usize, vec![0.0; d], vec![0.0; d]);
    let mut prop = vec![0.0; d];
    let mut draws = Vec::with_capacity(opts.draws);
    let mut accepted = 0usize;

    for it in 0..warmup + opts.draws {
        let lambda = ln_lambda.exp();
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            prop[j] = theta[j] + lambda * sd[j] * z;
        }
        let lq = ln_target(&kernel, &prop);
        let log_alpha = (lq - lp).min(0.0);
        let accept = rng.random::<f64>().ln() < log_alpha;
        if accept {
            theta.copy_from_slice(&prop);
            lp = lq;
        }
        if it < warmup {
            let alpha = if log_alpha.is_finite() { log_alpha.exp() } else { 0.0 };
            ln_lambda += (alpha - opts.target_accept) / ((it + 1) as f64).powf(0.6);
            // Welford running variance of the warmup states.
            wn += 1;
            for j in 0..d {
                let delta = theta[j] - wmean[j];
                wmean[j] += delta / wn as f64;
                wm2[j] += delta * (theta[j] - wmean[j]);
            }
            if it >= 500 && it % 100 == 0 {
                for j in 0..d {
                    let v = wm2[j] / (wn - 1) as f64;
                    if v.is_finite() && v > 0.0 {
                        sd[j] = v.sqrt();
                    }
                }
            }
        } else {
            if accept {
                accepted += 1;
            }
            draws.push(Draw {
                beta: theta[..p].to_vec(),
                sigma: theta[p].exp(),
            });
        }
    }

    let lambda = ln_lambda.exp();
    let mut chain = McmcChain {
        draws,
        acceptance_rate: accepted as f64 / opts.draws as f64,
        ess: Vec::new(),
        seed: opts.seed,
        low_ess: false,
        proposal_sd: sd.iter().map(|s| lambda * s).collect(),
    };
    chain.ess = (0..p)
        .map(|k| ess(&chain.beta(k)))
        .chain([ess(&chain.sigma().iter().map(|s| s.ln()).collect::<Vec<_>>())])
        .collect();
    chain.low_ess = chain.ess.iter().any(|e| *e < opts.min_ess);
    Ok(chain)
}
