//! Nested adaptive quadrature of posterior kernels over `(β, σ)` for `p <= 2`.
//!
//! The outer integral runs over `τ = log σ`. Each inner line integral over a
//! coefficient is split at the points where the integrand has a kink (zero
//! residuals, the prior's kink at zero) and at the boundaries of the region
//! of interest, and every piece is mapped logarithmically away from its
//! anchoring breakpoint so that peaks of width `σ` stay resolved for tiny `σ`.
//! All values are carried as logarithms with a per-line shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Kernel, RegressionProblem};
use crate::quad::{integrate, integrate_partitioned, QuadOptions};

/// Part of the coefficient space to integrate over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    All,
    /// Every outlying residual satisfies `|y_i - x_iᵀβ| >= |y_i|/2`.
    Near,
    /// The complement of `Near`.
    Far,
}

#[derive(Debug, Clone, Copy)]
pub struct NestedOptions {
    /// Relative tolerance of every line integral.
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Initial scan range for `log σ`, widened up to `tau_limit` if needed.
    pub tau_scan: f64,
    pub tau_limit: f64,
    /// Parts of the `log σ` profile more than this far below its maximum are dropped.
    pub log_drop: f64,
}

impl Default for NestedOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_intervals: 400,
            tau_scan: 40.0,
            tau_limit: 120.0,
            log_drop: 50.0,
        }
    }
}

impl NestedOptions {
    /// Looser settings for the doubly nested `p = 2` case.
    pub fn for_dim(p: usize) -> Self {
        if p >= 2 {
            Self {
                rel_tol: 1e-6,
                max_intervals: 200,
                ..Self::default()
            }
        } else {
            Self::default()
        }
    }
}

pub const MAX_QUADRATURE_DIM: usize = 2;

enum Piece {
    /// From `anchor` towards `other`, both finite.
    Half { anchor: f64, other: f64 },
    /// From `anchor` to `±∞`.
    Tail { anchor: f64, dir: f64 },
}

fn sorted_breaks(mut v: Vec<f64>) -> Vec<f64> {
    v.retain(|x| x.is_finite());
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `log ∫ exp(g(t)) dt` over the parts of the line where `keep` holds.
///
/// `keep` must be constant between consecutive breakpoints.
fn ln_line_integral<G, K>(g: G, breaks: &[f64], scale: f64, keep: K, opts: &NestedOptions) -> f64
where
    G: Fn(f64) -> f64,
    K: Fn(f64) -> bool,
{
    debug_assert!(!breaks.is_empty());
    let first = breaks[0];
    let last = *breaks.last().expect("non-empty");
    let mut pieces = Vec::with_capacity(2 * breaks.len());
    let mut shift = f64::NEG_INFINITY;
    if keep(first - first.abs().max(1.0)) {
        pieces.push(Piece::Tail { anchor: first, dir: -1.0 });
        shift = shift.max(g(first));
    }
    for w in breaks.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if mid <= w[0] || mid >= w[1] || !keep(mid) {
            continue;
        }
        pieces.push(Piece::Half { anchor: w[0], other: mid });
        pieces.push(Piece::Half { anchor: w[1], other: mid });
        shift = shift.max(g(w[0])).max(g(w[1])).max(g(mid));
    }
    if keep(last + last.abs().max(1.0)) {
        pieces.push(Piece::Tail { anchor: last, dir: 1.0 });
        shift = shift.max(g(last));
    }
    if pieces.is_empty() || shift == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if shift.is_nan() {
        return f64::NAN;
    }

    let ln_s = scale.ln();
    let spread = (last - first).max(1.0);
    let c_tail = (spread / scale).ln_1p().max(1.0);

    let eval_piece = |piece: &Piece, q: &QuadOptions| -> f64 {
        match *piece {
            Piece::Half { anchor, other } => {
                let dir = (other - anchor).signum();
                let upper = ((other - anchor).abs() / scale).ln_1p();
                let h = |u: f64| {
                    let t = anchor + dir * scale * u.exp_m1();
                    let v = g(t) - shift + ln_s + u;
                    if v.is_finite() {
                        v.exp()
                    } else {
                        0.0
                    }
                };
                integrate(h, 0.0, upper, q).value
            }
            Piece::Tail { anchor, dir } => {
                let h = |v: f64| {
                    if v >= 1.0 {
                        return 0.0;
                    }
                    let u = c_tail * v / (1.0 - v);
                    if u > 700.0 {
                        return 0.0;
                    }
                    let t = anchor + dir * scale * u.exp_m1();
                    let w = g(t) - shift + ln_s + u + (c_tail / ((1.0 - v) * (1.0 - v))).ln();
                    if w.is_finite() {
                        w.exp()
                    } else {
                        0.0
                    }
                };
                integrate_partitioned(h, &[0.0, 0.5, 0.9, 1.0], q).value
            }
        }
    };

    // Coarse pass sets an absolute tolerance shared across the pieces.
    let coarse = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 0.0,
        max_intervals: 1,
    };
    let rough: f64 = pieces.iter().map(|pc| eval_piece(pc, &coarse)).sum();
    let fine = QuadOptions {
        abs_tol: opts.rel_tol * rough.abs() / pieces.len() as f64,
        rel_tol: opts.rel_tol,
        max_intervals: opts.max_intervals,
    };
    let total: f64 = pieces.iter().map(|pc| eval_piece(pc, &fine)).sum();
    if total > 0.0 {
        shift + total.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `log ∫ exp(prof(τ)) dτ` for a `log σ` profile.
fn ln_outer<F: Fn(f64) -> f64>(prof: F, opts: &NestedOptions) -> Result<f64> {
    let step = 1.0;
    let mut taus: Vec<f64> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    let mut t = -opts.tau_scan;
    while t <= opts.tau_scan + 1e-9 {
        taus.push(t);
        vals.push(prof(t));
        t += step;
    }
    if let Some(bad) = vals.iter().position(|v| v.is_nan()) {
        return Err(Error::Numerical(format!("kernel integral is NaN at sigma = {:e}", taus[bad].exp())));
    }
    let max_of = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut gmax = max_of(&vals);
    if gmax == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    // Widen while the profile is still significant at an end of the scan.
    while vals[0] > gmax - opts.log_drop && taus[0] - step >= -opts.tau_limit {
        let t = taus[0] - step;
        taus.insert(0, t);
        vals.insert(0, prof(t));
        gmax = gmax.max(vals[0]);
    }
    while *vals.last().expect("non-empty") > gmax - opts.log_drop
        && taus.last().expect("non-empty") + step <= opts.tau_limit
    {
        let t = taus.last().expect("non-empty") + step;
        taus.push(t);
        vals.push(prof(t));
        gmax = gmax.max(*vals.last().expect("non-empty"));
    }
    if gmax.is_infinite() || vals.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("kernel integral over log sigma is not finite".into()));
    }
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > gmax - opts.log_drop).collect();
    let lo = keep[0].saturating_sub(1);
    let hi = (keep[keep.len() - 1] + 1).min(vals.len() - 1);
    // Initial partition: unit steps around the bulk, coarser elsewhere.
    let mut points = vec![taus[lo]];
    for i in lo + 1..=hi {
        if vals[i] > gmax - 15.0 || vals[i - 1] > gmax - 15.0 || i == hi || (i - lo).is_multiple_of(4) {
            points.push(taus[i]);
        }
    }
    let q = QuadOptions {
        abs_tol: 0.0,
        rel_tol: opts.rel_tol,
        max_intervals: opts.max_intervals,
    };
    let h = |t: f64| {
        let v = prof(t) - gmax;
        if v.is_finite() {
            v.exp()
        } else {
            0.0
        }
    };
    let r = integrate_partitioned(h, &points, &q);
    if !r.value.is_finite() {
        return Err(Error::Numerical("kernel integral over log sigma is not finite".into()));
    }
    Ok(if r.value > 0.0 { gmax + r.value.ln() } else { f64::NEG_INFINITY })
}

fn keep_fn<'k>(kernel: &'k Kernel<'_>, region: Region) -> impl Fn(&[f64]) -> bool + 'k {
    move |beta: &[f64]| match region {
        Region::All => true,
        Region::Near => kernel.in_near_region(beta),
        Region::Far => !kernel.in_near_region(beta),
    }
}

/// Breakpoints of the last coefficient when the others are fixed at `head`.
fn line_breaks(kernel: &Kernel<'_>, head: &[f64], with_region: bool) -> Vec<f64> {
    let prob = kernel.problem();
    let j = head.len();
    let y = kernel.observations();
    let mut v = vec![0.0];
    let mut add_row = |i: usize, outlier: bool| {
        let row = prob.row(i);
        let xj = row[j];
        if xj == 0.0 || row[j + 1..].iter().any(|&x| x != 0.0) {
            return;
        }
        let partial: f64 = row[..j].iter().zip(head).map(|(x, b)| x * b).sum();
        let r = y[i] - partial;
        v.push(r / xj);
        if outlier && with_region {
            let half = 0.5 * y[i].abs();
            v.push((r - half) / xj);
            v.push((r + half) / xj);
        }
    };
    for &i in kernel.clean_rows() {
        add_row(i, false);
    }
    for &i in kernel.outlier_rows() {
        add_row(i, true);
    }
    v
}

/// Extra breakpoints for the first coefficient when `p = 2`: intersections
/// of the zero-residual lines with each other and with `β_2 = 0`.
fn crossing_breaks(kernel: &Kernel<'_>) -> Vec<f64> {
    let prob = kernel.problem();
    let y = kernel.observations();
    let rows: Vec<usize> = kernel.clean_rows().iter().chain(kernel.outlier_rows()).copied().collect();
    let mut v = Vec::new();
    for (ai, &i) in rows.iter().enumerate() {
        let (xi, yi) = (prob.row(i), y[i]);
        if xi[0] != 0.0 {
            v.push(yi / xi[0]);
        }
        for &k in &rows[ai + 1..] {
            let xk = prob.row(k);
            let det = xi[0] * xk[1] - xi[1] * xk[0];
            if det.abs() > 1e-12 * (xi[0].abs() + xi[1].abs()) * (xk[0].abs() + xk[1].abs()) {
                v.push((yi * xk[1] - y[k] * xi[1]) / det);
            }
        }
    }
    v
}

/// `log ∫ exp(kernel.ln_eval(β, σ)) dβ` at fixed `σ`, restricted to `region`.
pub fn ln_beta_integral(kernel: &Kernel<'_>, sigma: f64, region: Region, opts: &NestedOptions) -> f64 {
    let p = kernel.problem().p();
    let keep = keep_fn(kernel, region);
    match p {
        1 => {
            let breaks = sorted_breaks(line_breaks(kernel, &[], true));
            ln_line_integral(|b| kernel.ln_eval(&[b], sigma), &breaks, sigma, |b| keep(&[b]), opts)
        }
        2 => {
            let mut outer_breaks = line_breaks(kernel, &[], false);
            outer_breaks.extend(crossing_breaks(kernel));
            let outer_breaks = sorted_breaks(outer_breaks);
            let inner = |b1: f64| {
                let breaks = sorted_breaks(line_breaks(kernel, &[b1], true));
                ln_line_integral(
                    |b2| kernel.ln_eval(&[b1, b2], sigma),
                    &breaks,
                    sigma,
                    |b2| keep(&[b1, b2]),
                    opts,
                )
            };
            ln_line_integral(inner, &outer_breaks, sigma, |_| true, opts)
        }
        _ => f64::NAN,
    }
}

/// `log ∫∫ exp(kernel.ln_eval(β, σ)) dβ dσ` over `region × (0, ∞)`.
pub fn ln_normalizer(kernel: &Kernel<'_>, region: Region, opts: &NestedOptions) -> Result<f64> {
    let p = kernel.problem().p();
    if p > MAX_QUADRATURE_DIM {
        return Err(Error::UnsupportedDimension {
            p,
            max: MAX_QUADRATURE_DIM,
        });
    }
    ln_outer(|tau| ln_beta_integral(kernel, tau.exp(), region, opts) + tau, opts)
}

/// `log ∫ h - log ∫ k_K`, where `h` is the full kernel with every outlier
/// term divided by `f(y_i)` and `k_K` is the leave-outliers-out kernel.
pub fn log_marginal_ratio(prob: &RegressionProblem, omega: f64) -> Result<f64> {
    log_marginal_ratio_with(prob, omega, &NestedOptions::for_dim(prob.p()))
}

pub fn log_marginal_ratio_with(prob: &RegressionProblem, omega: f64, opts: &NestedOptions) -> Result<f64> {
    let full = Kernel::full(prob, omega)?;
    if full.outlier_rows().is_empty() {
        return Ok(0.0);
    }
    let clean = Kernel::clean(prob);
    Ok(ln_normalizer(&full, Region::All, opts)? - ln_normalizer(&clean, Region::All, opts)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heavytail::{CoefficientPrior, LptnDensity, ScalePrior};

    fn normal_like(p: usize) -> RegressionProblem {
        let x = if p == 1 {
            vec![vec![1.0]; 4]
        } else {
            vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, -1.0], vec![1.0, 2.0], vec![1.0, 0.5]]
        };
        let n = x.len();
        RegressionProblem::new(
            x,
            (0..n).map(|i| 0.3 * i as f64 - 0.4).collect(),
            vec![0.0; n],
            LptnDensity::new(1.0).unwrap(),
            CoefficientPrior::per_coordinate_t(vec![1.0; p]).unwrap(),
            ScalePrior::half_cauchy(1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn line_integral_of_known_density() {
        // ∫ (1/2) e^{-|t-1|} dt = 1, kink at 1.
        let g = |t: f64| -(t - 1.0).abs() - std::f64::consts::LN_2;
        let v = ln_line_integral(g, &[0.0, 1.0], 1.0, |_| true, &NestedOptions::default());
        assert!(v.abs() < 1e-10, "{v}");
        // Restricted to t > 1 gives one half.
        let v = ln_line_integral(g, &[0.0, 1.0], 1.0, |t| t > 1.0, &NestedOptions::default());
        assert!((v - 0.5f64.ln()).abs() < 1e-10, "{v}");
    }

    #[test]
    fn line_integral_resolves_narrow_peak() {
        // Laplace density of scale 1e-9 centred on a breakpoint.
        let s = 1e-9f64;
        let g = |t: f64| -(t - 0.25).abs() / s - (2.0 * s).ln();
        let v = ln_line_integral(g, &[0.0, 0.25], s, |_| true, &NestedOptions::default());
        assert!(v.abs() < 1e-9, "{v}");
    }

    #[test]
    fn outer_integral_of_gaussian_profile() {
        let prof = |t: f64| -0.5 * (t - 3.0) * (t - 3.0);
        let v = ln_outer(prof, &NestedOptions::default()).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt().ln()).abs() < 1e-10, "{v}");
    }

    #[test]
    fn no_outliers_gives_zero_ratio() {
        let prob = normal_like(1);
        assert_eq!(log_marginal_ratio(&prob, 1e6).unwrap(), 0.0);
    }

    #[test]
    fn regions_partition_the_integral() {
        let prob = RegressionProblem::canonical();
        let opts = NestedOptions::default();
        for omega in [1.0, 30.0, 1e4] {
            let k = Kernel::full(&prob, omega).unwrap();
            let all = ln_normalizer(&k, Region::All, &opts).unwrap();
            let near = ln_normalizer(&k, Region::Near, &opts).unwrap();
            let far = ln_normalizer(&k, Region::Far, &opts).unwrap();
            let sum = near.exp() + far.exp();
            assert!((sum / all.exp() - 1.0).abs() < 1e-8, "omega {omega}: {sum} vs {}", all.exp());
        }
    }

    #[test]
    fn rejects_high_dimension() {
        let prob = RegressionProblem::new(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![0.0; 3],
            vec![0.0, 0.0, 1.0],
            LptnDensity::new(1.0).unwrap(),
            CoefficientPrior::per_coordinate_t(vec![1.0; 3]).unwrap(),
            ScalePrior::half_cauchy(1.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(log_marginal_ratio(&prob, 10.0), Err(Error::UnsupportedDimension { p: 3, .. })));
    }

    #[test]
    fn two_dimensional_normalizer_matches_dimension_one_product() {
        // With x = (1, 0) rows only, β_2 only meets its prior, which integrates to one.
        let base = normal_like(1);
        let x2: Vec<Vec<f64>> = base.rows().map(|r| vec![r[0], 0.0]).collect();
        let prob2 = RegressionProblem::new(
            x2,
            base.a().to_vec(),
            base.b().to_vec(),
            *base.error(),
            CoefficientPrior::per_coordinate_t(vec![1.0, 2.0]).unwrap(),
            *base.scale_prior(),
        )
        .unwrap();
        let z1 = ln_normalizer(&Kernel::clean(&base), Region::All, &NestedOptions::default()).unwrap();
        let z2 = ln_normalizer(&Kernel::clean(&prob2), Region::All, &NestedOptions::for_dim(2)).unwrap();
        assert!((z1 - z2).abs() < 1e-5, "{z1} vs {z2}");
    }
}
