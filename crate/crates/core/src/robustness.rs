//! ω-sweeps comparing the contaminated posterior with the leave-outliers-out
//! posterior, and numerical checks of the individual steps behind the
//! convergence argument: per-outlier likelihood ratios, the near/far split of
//! the integrand, and the decay envelope of the far part.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heavytail::tail_ratio;
use crate::model::{robustness_condition, Kernel, RegressionProblem, Subset};
use crate::posterior::diagnostics::{batch_means_se, quantile_sorted};
use crate::posterior::{
    grid_posterior, local_mode, ln_normalizer, mcmc_posterior_with, GridOptions, McmcChain, McmcOptions,
    NestedOptions, Region,
};
use crate::posterior::quadrature::MAX_QUADRATURE_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Normalizing constants by nested quadrature; requires `p <= 2`.
    Grid,
    /// Normalizing-constant ratios by reweighting draws from the
    /// leave-outliers-out posterior.
    Mcmc,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "grid" => Ok(Method::Grid),
            "mcmc" => Ok(Method::Mcmc),
            other => Err(Error::invalid(format!("unknown method `{other}` (expected grid or mcmc)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub beta: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub method: Method,
    /// Draws per chain for the Monte-Carlo method.
    pub draws: usize,
    pub chains: usize,
    pub seed: u64,
    /// Quadrature settings; `None` picks [`NestedOptions::for_dim`].
    pub nested: Option<NestedOptions>,
}

impl SweepOptions {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            draws: 20_000,
            chains: 2,
            seed: 1,
            nested: None,
        }
    }

    fn nested_for(&self, p: usize) -> NestedOptions {
        self.nested.unwrap_or_else(|| NestedOptions::for_dim(p))
    }
}

/// `{10², 10³, …, 10¹²}`.
pub fn default_omegas() -> Vec<f64> {
    (2..=12).map(|k| 10f64.powi(k)).collect()
}

/// `log` of `ω^|L| (log ω)^{|L|(1+γ)} / ω^{|K|-p+1}`; NaN for `ω <= 1`.
pub fn ln_envelope(outliers: usize, clean: usize, p: usize, gamma: f64, omega: f64) -> f64 {
    if !(omega > 1.0) {
        return f64::NAN;
    }
    let lw = omega.ln();
    let l = outliers as f64;
    l * lw + l * (1.0 + gamma) * lw.ln() - (clean as f64 - p as f64 + 1.0) * lw
}

/// The `ω` beyond which [`ln_envelope`] decreases strictly, or `None` when
/// `|K| - p + 1 <= |L|` and it eventually increases.
pub fn envelope_threshold(outliers: usize, clean: usize, p: usize, gamma: f64) -> Option<f64> {
    let gap = clean as f64 - p as f64 + 1.0 - outliers as f64;
    if gap <= 0.0 {
        return None;
    }
    Some((outliers as f64 * (1.0 + gamma) / gap).exp())
}

fn problem_envelope(prob: &RegressionProblem, omega: f64) -> f64 {
    let l = prob.outlier_indices().len();
    ln_envelope(l, prob.n() - l, prob.p(), prob.error().gamma(), omega)
}

/// `{f((y_i(ω) - x_iᵀβ)/σ)/σ} / f(y_i(ω))` for each outlying row, in row order.
pub fn outlier_ratio_check(prob: &RegressionProblem, omega: f64, beta: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let kernel = Kernel::full(prob, omega)?;
    kernel
        .outlier_rows()
        .iter()
        .map(|&i| tail_ratio(kernel.observations()[i], prob.fitted(i, beta), sigma, prob.error()))
        .collect()
}

fn run_clean_chains(prob: &RegressionProblem, opts: &SweepOptions) -> Result<Vec<McmcChain>> {
    (0..opts.chains.max(1))
        .into_par_iter()
        .map(|c| {
            let mut mo = McmcOptions::new(opts.draws, opts.seed.wrapping_add(c as u64));
            mo.warmup = None;
            mcmc_posterior_with(prob, 0.0, &Subset::Clean, &mo)
        })
        .collect()
}

/// Nine points: the leave-outliers-out posterior's centre and offsets of two
/// robust scales in each coefficient (jointly) and in `log σ`.
///
/// The quantiles come from the grid posterior whenever the dimension allows,
/// whatever the sweep method, so runs with different seeds share their
/// points; above that they come from the pooled clean chains.
pub fn default_eval_points(prob: &RegressionProblem, opts: &SweepOptions) -> Result<Vec<EvalPoint>> {
    let p = prob.p();
    let q = |lo: f64, mid: f64, hi: f64| (mid, 0.5 * (hi - lo));
    let source = if p <= MAX_QUADRATURE_DIM { Method::Grid } else { opts.method };
    let (beta_loc, log_sigma_loc) = match source {
        Method::Grid => {
            let g = grid_posterior(prob, 0.0, &Subset::Clean, &GridOptions::for_dim(p))?;
            let b = (0..p)
                .map(|k| q(g.beta_quantile(k, 0.1587), g.beta_quantile(k, 0.5), g.beta_quantile(k, 0.8413)))
                .collect::<Vec<_>>();
            let s = q(g.log_sigma_quantile(0.1587), g.log_sigma_quantile(0.5), g.log_sigma_quantile(0.8413));
            (b, s)
        }
        Method::Mcmc => {
            let chains = run_clean_chains(prob, opts)?;
            let sorted = |v: Vec<f64>| {
                let mut v = v;
                v.sort_by(f64::total_cmp);
                q(quantile_sorted(&v, 0.1587), quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.8413))
            };
            let b = (0..p).map(|k| sorted(chains.iter().flat_map(|c| c.beta(k)).collect())).collect();
            let s = sorted(chains.iter().flat_map(|c| c.sigma()).map(f64::ln).collect());
            (b, s)
        }
    };
    let offsets = [-2.0, 0.0, 2.0];
    let mut points = Vec::with_capacity(9);
    for ob in offsets {
        for os in offsets {
            points.push(EvalPoint {
                beta: beta_loc.iter().map(|(c, s)| c + ob * s).collect(),
                sigma: (log_sigma_loc.0 + os * log_sigma_loc.1).exp(),
            });
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessReport {
    pub method: Method,
    pub omegas: Vec<f64>,
    /// Per `ω`: largest peak-normalized `|p(β,σ|y) - p(β,σ|y_K)|` over the eval points.
    pub pointwise_sup_dist: Vec<f64>,
    /// Monte-Carlo standard error of each sup distance (zero for quadrature).
    pub pointwise_sup_se: Vec<f64>,
    /// Per `ω` and eval point, the normalized distance.
    pub point_dist: Vec<Vec<f64>>,
    /// Per `ω`: largest `|ratio - 1|` over outliers and eval points.
    pub ratio_dist: Vec<f64>,
    /// Per `ω`: `log ∫h - log ∫k_K` (quadrature) or its Monte-Carlo estimate.
    pub marginal_ratio: Vec<f64>,
    /// Per `ω`: log of the decay envelope.
    pub ln_envelope: Vec<f64>,
    /// `|K| - |L| - p`.
    pub condition_margin: i64,
    /// The size condition fails: results are descriptive only.
    pub outside_theorem: bool,
    /// Run with the outlier shifts zeroed.
    pub control: bool,
    pub eval_points: Vec<EvalPoint>,
    /// Highest point of the leave-outliers-out density on the box spanned by
    /// the eval points; its density normalizes all distances.
    pub peak: EvalPoint,
    pub ln_peak_kernel: f64,
}

impl RobustnessReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.pointwise_sup_dist.windows(2).all(|w| w[1] < w[0])
    }

    /// Strictly decreasing sup distance ending below `tol`.
    pub fn converges(&self, tol: f64) -> bool {
        self.strictly_decreasing() && self.pointwise_sup_dist.last().is_some_and(|d| *d < tol)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per `ω`: `omega,sup_dist,sup_dist_se,ratio_dist,log_marginal_ratio,ln_envelope`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("omega,sup_dist,sup_dist_se,ratio_dist,log_marginal_ratio,ln_envelope\n");
        for (i, w) in self.omegas.iter().enumerate() {
            s.push_str(&format!(
                "{w:e},{:e},{:e},{:e},{:e},{:e}\n",
                self.pointwise_sup_dist[i],
                self.pointwise_sup_se[i],
                self.ratio_dist[i],
                self.marginal_ratio[i],
                self.ln_envelope[i]
            ));
        }
        s
    }
}

fn check_ladder(omegas: &[f64]) -> Result<()> {
    if omegas.is_empty() {
        return Err(Error::invalid("empty ω ladder"));
    }
    if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::invalid("ω values must be positive and finite"));
    }
    if omegas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("ω ladder must be strictly increasing"));
    }
    Ok(())
}

/// [`sweep_with`] under default options for `method`.
pub fn sweep(prob: &RegressionProblem, omegas: &[f64], eval_points: &[EvalPoint], method: Method) -> Result<RobustnessReport> {
    sweep_with(prob, omegas, eval_points, &SweepOptions::new(method))
}

/// Compares the two posteriors at every eval point for every `ω`.
///
/// Requires at least one outlier; see [`control_sweep`] for the
/// outlier-free reference run.
pub fn sweep_with(prob: &RegressionProblem, omegas: &[f64], eval_points: &[EvalPoint], opts: &SweepOptions) -> Result<RobustnessReport> {
    if prob.outlier_indices().is_empty() {
        return Err(Error::invalid("no outlying observations: every b_i is zero"));
    }
    sweep_inner(prob, omegas, eval_points, opts, false)
}

/// The sweep with every `b_i` set to zero, so that both posteriors coincide.
pub fn control_sweep(prob: &RegressionProblem, omegas: &[f64], eval_points: &[EvalPoint], opts: &SweepOptions) -> Result<RobustnessReport> {
    let zeroed = prob.without_outliers();
    sweep_inner(&zeroed, omegas, eval_points, opts, true)
}

fn sweep_inner(
    prob: &RegressionProblem,
    omegas: &[f64],
    eval_points: &[EvalPoint],
    opts: &SweepOptions,
    control: bool,
) -> Result<RobustnessReport> {
    check_ladder(omegas)?;
    if eval_points.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let p = prob.p();
    for e in eval_points {
        if e.beta.len() != p || !(e.sigma > 0.0) || e.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid(format!("bad evaluation point {e:?}")));
        }
    }
    let cond = robustness_condition(prob);
    let clean = Kernel::clean(prob);
    let ln_k: Vec<f64> = eval_points.iter().map(|e| clean.ln_eval(&e.beta, e.sigma)).collect();

    // The kernel is unbounded near some kinks as σ -> 0, so the peak is
    // taken over the box spanned by the eval points.
    let mut lower = vec![f64::INFINITY; p + 1];
    let mut upper = vec![f64::NEG_INFINITY; p + 1];
    for e in eval_points {
        for (j, v) in e.beta.iter().copied().chain([e.sigma.ln()]).enumerate() {
            lower[j] = lower[j].min(v);
            upper[j] = upper[j].max(v);
        }
    }
    let (mode_beta, mode_sigma, mode_ln) = local_mode(&clean, &lower, &upper);
    let (peak, ln_peak) = ln_k
        .iter()
        .zip(eval_points)
        .filter(|(v, _)| **v > mode_ln)
        .max_by(|a, b| a.0.total_cmp(b.0))
        .map(|(v, e)| (e.clone(), *v))
        .unwrap_or((
            EvalPoint {
                beta: mode_beta,
                sigma: mode_sigma,
            },
            mode_ln,
        ));

    struct Row {
        dist: Vec<f64>,
        se: Vec<f64>,
        ratio: f64,
        lmr: f64,
    }

    let rows: Vec<Row> = match opts.method {
        Method::Grid => {
            let nested = opts.nested_for(p);
            let ln_zk = ln_normalizer(&clean, Region::All, &nested)?;
            omegas
                .par_iter()
                .map(|&w| -> Result<Row> {
                    let full = Kernel::full(prob, w)?;
                    let ln_zf = ln_normalizer(&full, Region::All, &nested)?;
                    let mut ratio: f64 = 0.0;
                    let dist = eval_points
                        .iter()
                        .zip(&ln_k)
                        .map(|(e, lk)| {
                            for r in full.outlier_log_ratios(&e.beta, e.sigma) {
                                ratio = ratio.max(r.exp_m1().abs());
                            }
                            let lf = full.ln_eval(&e.beta, e.sigma);
                            let a = (lf - ln_zf - ln_peak + ln_zk).exp();
                            let b = (lk - ln_peak).exp();
                            (a - b).abs()
                        })
                        .collect::<Vec<_>>();
                    Ok(Row {
                        se: vec![0.0; dist.len()],
                        dist,
                        ratio,
                        lmr: ln_zf - ln_zk,
                    })
                })
                .collect::<Result<_>>()?
        }
        Method::Mcmc => {
            let chains = run_clean_chains(prob, opts)?;
            omegas
                .par_iter()
                .map(|&w| -> Result<Row> {
                    let full = Kernel::full(prob, w)?;
                    let (e_hat, se_hat) = reweight(&full, &chains, |_| true);
                    let mut ratio: f64 = 0.0;
                    let mut dist = Vec::with_capacity(eval_points.len());
                    let mut se = Vec::with_capacity(eval_points.len());
                    for (e, lk) in eval_points.iter().zip(&ln_k) {
                        let lr = full.outlier_log_ratios(&e.beta, e.sigma);
                        for r in &lr {
                            ratio = ratio.max(r.exp_m1().abs());
                        }
                        let weight = (lk - ln_peak).exp();
                        let prod = lr.iter().sum::<f64>().exp();
                        dist.push(weight * (prod / e_hat - 1.0).abs());
                        se.push(weight * prod / (e_hat * e_hat) * se_hat);
                    }
                    Ok(Row {
                        dist,
                        se,
                        ratio,
                        lmr: e_hat.ln(),
                    })
                })
                .collect::<Result<_>>()?
        }
    };

    let mut sup = Vec::with_capacity(rows.len());
    let mut sup_se = Vec::with_capacity(rows.len());
    for r in &rows {
        let (i, d) = r
            .dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty evaluation set");
        sup.push(*d);
        sup_se.push(r.se[i]);
    }
    Ok(RobustnessReport {
        method: opts.method,
        omegas: omegas.to_vec(),
        pointwise_sup_dist: sup,
        pointwise_sup_se: sup_se,
        ratio_dist: rows.iter().map(|r| r.ratio).collect(),
        marginal_ratio: rows.iter().map(|r| r.lmr).collect(),
        point_dist: rows.into_iter().map(|r| r.dist).collect(),
        ln_envelope: omegas.iter().map(|&w| problem_envelope(prob, w)).collect(),
        condition_margin: cond.margin,
        outside_theorem: !cond.holds,
        control,
        eval_points: eval_points.to_vec(),
        peak,
        ln_peak_kernel: ln_peak,
    })
}

/// Mean over pooled draws of `Π_L ratio × 1(keep)`, and its standard error
/// from per-chain batch means.
fn reweight<F: Fn(&[f64]) -> bool>(full: &Kernel<'_>, chains: &[McmcChain], keep: F) -> (f64, f64) {
    let per_chain: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            c.draws
                .iter()
                .map(|d| {
                    if keep(&d.beta) {
                        full.outlier_log_ratios(&d.beta, d.sigma).iter().sum::<f64>().exp()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let total: usize = per_chain.iter().map(Vec::len).sum();
    let mean = per_chain.iter().flatten().sum::<f64>() / total as f64;
    let m = per_chain.len() as f64;
    let se = (per_chain.iter().map(|v| batch_means_se(v).powi(2)).sum::<f64>()).sqrt() / m;
    (mean, se)
}

/// The integrand split by whether every outlying residual satisfies
/// `|y_i - x_iᵀβ| >= |y_i|/2`, each part relative to the
/// leave-outliers-out marginal.
#[derive(Debug, Clone, Serialize)]
pub struct SplitMass {
    pub omega: f64,
    pub near: f64,
    pub far: f64,
    pub ln_near: f64,
    pub ln_far: f64,
    /// `exp(log_marginal_ratio)` computed over the whole space.
    pub total: f64,
    /// `|near + far - total|`.
    pub partition_error: f64,
    /// Monte-Carlo standard errors of `(near, far)`; zero for quadrature.
    pub se: (f64, f64),
}

pub fn indicator_split_mass(prob: &RegressionProblem, omega: f64, method: Method) -> Result<SplitMass> {
    indicator_split_mass_with(prob, omega, &SweepOptions::new(method))
}

pub fn indicator_split_mass_with(prob: &RegressionProblem, omega: f64, opts: &SweepOptions) -> Result<SplitMass> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::invalid(format!("ω must be finite and nonnegative, got {omega}")));
    }
    let full = Kernel::full(prob, omega)?;
    let clean = Kernel::clean(prob);
    match opts.method {
        Method::Grid => {
            let nested = opts.nested_for(prob.p());
            let ln_zk = ln_normalizer(&clean, Region::All, &nested)?;
            let ln_near = ln_normalizer(&full, Region::Near, &nested)? - ln_zk;
            let ln_far = ln_normalizer(&full, Region::Far, &nested)? - ln_zk;
            let total = (ln_normalizer(&full, Region::All, &nested)? - ln_zk).exp();
            let (near, far) = (ln_near.exp(), ln_far.exp());
            Ok(SplitMass {
                omega,
                near,
                far,
                ln_near,
                ln_far,
                total,
                partition_error: (near + far - total).abs(),
                se: (0.0, 0.0),
            })
        }
        Method::Mcmc => {
            let chains = run_clean_chains(prob, opts)?;
            let (near, se_near) = reweight(&full, &chains, |b| full.in_near_region(b));
            let (far, se_far) = reweight(&full, &chains, |b| !full.in_near_region(b));
            let (total, _) = reweight(&full, &chains, |_| true);
            Ok(SplitMass {
                omega,
                near,
                far,
                ln_near: near.ln(),
                ln_far: far.ln(),
                total,
                partition_error: (near + far - total).abs(),
                se: (se_near, se_far),
            })
        }
    }
}

/// Far mass against the decay envelope along an increasing `ω` ladder.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeFit {
    pub omegas: Vec<f64>,
    pub ln_far: Vec<f64>,
    pub ln_envelope: Vec<f64>,
    /// `far / envelope` at each `ω`.
    pub raw_ratio: Vec<f64>,
    /// Smallest constant bounding `far <= C × envelope` on the ladder up to each `ω`.
    pub fitted_constant: Vec<f64>,
    /// max/min of the fitted constant over the top three `ω`.
    pub stability: f64,
    /// `far <= C × envelope` at every `ω` with the final constant.
    pub bounded: bool,
}

pub fn fit_envelope(prob: &RegressionProblem, splits: &[SplitMass]) -> Result<EnvelopeFit> {
    let omegas: Vec<f64> = splits.iter().map(|s| s.omega).collect();
    check_ladder(&omegas)?;
    if omegas.len() < 3 {
        return Err(Error::invalid("envelope fit needs at least three ω values"));
    }
    if omegas[0] <= 1.0 {
        return Err(Error::invalid("envelope is defined for ω > 1 only"));
    }
    let ln_env: Vec<f64> = omegas.iter().map(|&w| problem_envelope(prob, w)).collect();
    let ln_far: Vec<f64> = splits.iter().map(|s| s.ln_far).collect();
    let ln_raw: Vec<f64> = ln_far.iter().zip(&ln_env).map(|(f, e)| f - e).collect();
    let mut running = f64::NEG_INFINITY;
    let ln_c: Vec<f64> = ln_raw
        .iter()
        .map(|r| {
            running = running.max(*r);
            running
        })
        .collect();
    let top = &ln_c[ln_c.len() - 3..];
    let hi = top.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = top.iter().copied().fold(f64::INFINITY, f64::min);
    let c_final = *ln_c.last().expect("non-empty");
    Ok(EnvelopeFit {
        bounded: ln_far.iter().zip(&ln_env).all(|(f, e)| *f <= c_final + e),
        stability: (hi - lo).exp(),
        raw_ratio: ln_raw.iter().map(|r| r.exp()).collect(),
        fitted_constant: ln_c.iter().map(|c| c.exp()).collect(),
        omegas,
        ln_far,
        ln_envelope: ln_env,
    })
}
