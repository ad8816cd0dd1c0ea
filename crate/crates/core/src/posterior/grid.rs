//! Dense tensor grids over `(β, σ)` normalized by the trapezoid rule in
//! `(β, log σ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::clean_fit;
use super::quadrature::MAX_QUADRATURE_DIM;
use crate::error::{Error, Result};
use crate::model::{Kernel, RegressionProblem, Subset};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridOptions {
    /// Uniform nodes per coefficient axis, before kink refinement.
    pub beta_points: usize,
    pub sigma_points: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Initial half-width of each coefficient axis in robust residual scales.
    pub beta_scales: f64,
    pub boundary_tol: f64,
    pub max_expansions: usize,
    /// Geometric node clusters around kinks of the kernel, from a tenth of
    /// `sigma_min` outwards with this spacing ratio, until they reach the
    /// uniform spacing. `None` disables them.
    pub kink_ratio: Option<f64>,
}

impl GridOptions {
    pub fn for_dim(p: usize) -> Self {
        let (beta_points, sigma_points, kink_ratio) = if p == 1 { (401, 241, 1.015) } else { (81, 81, 2.0) };
        Self {
            beta_points,
            sigma_points,
            sigma_min: 1e-4,
            sigma_max: 1e4,
            beta_scales: 20.0,
            boundary_tol: 1e-3,
            max_expansions: 4,
            kink_ratio: Some(kink_ratio),
        }
    }

    /// Twice the resolution on every axis.
    pub fn doubled(&self) -> Self {
        Self {
            beta_points: 2 * self.beta_points - 1,
            sigma_points: 2 * self.sigma_points - 1,
            kink_ratio: self.kink_ratio.map(f64::sqrt),
            ..*self
        }
    }
}

/// A normalized posterior on a tensor grid.
///
/// `values` holds the density with respect to `dβ dσ`; the `σ` index runs
/// fastest, then the last coefficient, and so on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorGrid {
    pub beta_axes: Vec<Vec<f64>>,
    pub sigma_axis: Vec<f64>,
    pub values: Vec<f64>,
    /// Log of the posterior normalizing constant `∫ π(β, σ) Π_I f(..)/σ`.
    pub log_marginal: f64,
    pub boundary_mass: f64,
    pub expansions: usize,
    pub omega: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridMoments {
    pub beta_mean: Vec<f64>,
    pub beta_sd: Vec<f64>,
    pub sigma_mean: f64,
    pub sigma_sd: f64,
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
            let right = if i + 1 < n { x[i + 1] - x[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

fn cumulative_trapezoid(x: &[f64], f: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; x.len()];
    for i in 1..x.len() {
        c[i] = c[i - 1] + 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
    }
    let total = *c.last().unwrap_or(&1.0);
    if total > 0.0 {
        c.iter_mut().for_each(|v| *v /= total);
    }
    c
}

fn interpolate(x: &[f64], y: &[f64], at: f64) -> f64 {
    if at <= x[0] {
        return y[0];
    }
    if at >= x[x.len() - 1] {
        return y[y.len() - 1];
    }
    let j = x.partition_point(|&v| v <= at);
    let (x0, x1) = (x[j - 1], x[j]);
    let t = (at - x0) / (x1 - x0);
    y[j - 1] + t * (y[j] - y[j - 1])
}

fn inverse_interpolate(x: &[f64], c: &[f64], q: f64) -> f64 {
    let j = c.partition_point(|&v| v < q);
    if j == 0 {
        return x[0];
    }
    if j >= c.len() {
        return x[x.len() - 1];
    }
    let (c0, c1) = (c[j - 1], c[j]);
    let t = if c1 > c0 { (q - c0) / (c1 - c0) } else { 0.0 };
    x[j - 1] + t * (x[j] - x[j - 1])
}

/// Uniform axis on `[lo, hi]` with geometric clusters around `kinks`.
fn build_axis(lo: f64, hi: f64, n: usize, kinks: &[f64], finest: f64, ratio: Option<f64>) -> Vec<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
    let Some(ratio) = ratio.filter(|r| *r > 1.0) else {
        return v;
    };
    let reach = h / (ratio - 1.0);
    for &k in kinks {
        if !(k > lo && k < hi) {
            continue;
        }
        v.push(k);
        let mut d = finest;
        while d < reach {
            for s in [k - d, k + d] {
                if s > lo && s < hi {
                    v.push(s);
                }
            }
            d *= ratio;
        }
    }
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + a.abs()));
    v
}

struct Layout {
    axes: Vec<Vec<f64>>,
    sigma: Vec<f64>,
}

impl Layout {
    fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product::<usize>() * self.sigma.len()
    }

    /// Multi-index of a flat position: coefficient indices, then the σ index.
    fn unflatten(&self, mut flat: usize, idx: &mut [usize]) -> usize {
        let s = flat % self.sigma.len();
        flat /= self.sigma.len();
        for k in (0..self.axes.len()).rev() {
            idx[k] = flat % self.axes[k].len();
            flat /= self.axes[k].len();
        }
        s
    }
}

fn kernel_kinks(kernel: &Kernel<'_>, axis: usize) -> Vec<f64> {
    let prob = kernel.problem();
    let y = kernel.observations();
    let mut v = vec![0.0];
    for &i in kernel.clean_rows().iter().chain(kernel.outlier_rows()) {
        let row = prob.row(i);
        let single = row.iter().enumerate().all(|(j, &x)| j == axis || x == 0.0);
        if single && row[axis] != 0.0 {
            v.push(y[i] / row[axis]);
        }
    }
    v
}

pub fn grid_posterior(prob: &RegressionProblem, omega: f64, subset: &Subset, opts: &GridOptions) -> Result<PosteriorGrid> {
    let p = prob.p();
    if p > MAX_QUADRATURE_DIM {
        return Err(Error::UnsupportedDimension {
            p,
            max: MAX_QUADRATURE_DIM,
        });
    }
    if opts.beta_points < 3 || opts.sigma_points < 3 {
        return Err(Error::invalid("grid needs at least three nodes per axis"));
    }
    if !(opts.sigma_min > 0.0 && opts.sigma_max > opts.sigma_min) {
        return Err(Error::invalid("sigma range must satisfy 0 < min < max"));
    }
    let kernel = Kernel::new(prob, omega, subset)?;
    let fit = clean_fit(prob);
    let mut half: Vec<f64> = fit.coef_scale.iter().map(|s| opts.beta_scales * s).collect();
    let (mut smin, mut smax) = (opts.sigma_min, opts.sigma_max);
    let kink_axes: Vec<Vec<f64>> = if p == 1 {
        vec![kernel_kinks(&kernel, 0)]
    } else {
        (0..p).map(|_| vec![0.0]).collect()
    };

    let mut expansions = 0;
    loop {
        let axes: Vec<Vec<f64>> = (0..p)
            .map(|k| {
                let (lo, hi) = (fit.beta[k] - half[k], fit.beta[k] + half[k]);
                build_axis(lo, hi, opts.beta_points, &kink_axes[k], 0.1 * smin, opts.kink_ratio)
            })
            .collect();
        let (tlo, thi) = (smin.ln(), smax.ln());
        let sigma: Vec<f64> = (0..opts.sigma_points)
            .map(|i| (tlo + (thi - tlo) * i as f64 / (opts.sigma_points - 1) as f64).exp())
            .collect();
        let layout = Layout { axes, sigma };
        let grid = evaluate(&kernel, &layout, omega)?;
        let bands = grid.band_masses();
        let boundary = grid.boundary_mass;
        if boundary < opts.boundary_tol {
            return Ok(PosteriorGrid { expansions, ..grid });
        }
        if expansions >= opts.max_expansions {
            return Err(Error::GridCoverage {
                boundary_mass: boundary,
                expansions,
            });
        }
        expansions += 1;
        let share = opts.boundary_tol / (2 * (p + 1)) as f64;
        let mut widened = false;
        for k in 0..p {
            if bands.beta[k].0 + bands.beta[k].1 >= share {
                half[k] *= 2.0;
                widened = true;
            }
        }
        if bands.sigma.0 >= share {
            smin /= 100.0;
            widened = true;
        }
        if bands.sigma.1 >= share {
            smax *= 100.0;
            widened = true;
        }
        if !widened {
            half.iter_mut().for_each(|h| *h *= 2.0);
            smin /= 100.0;
            smax *= 100.0;
        }
    }
}

fn evaluate(kernel: &Kernel<'_>, layout: &Layout, omega: f64) -> Result<PosteriorGrid> {
    let p = layout.axes.len();
    let ln_k: Vec<f64> = (0..layout.len())
        .into_par_iter()
        .map_init(
            || (vec![0usize; p], vec![0.0; p]),
            |(idx, beta), flat| {
                let s = layout.unflatten(flat, idx);
                for k in 0..p {
                    beta[k] = layout.axes[k][idx[k]];
                }
                kernel.ln_eval(beta, layout.sigma[s])
            },
        )
        .collect();
    if let Some(bad) = ln_k.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
        let mut idx = vec![0usize; p];
        let s = layout.unflatten(bad, &mut idx);
        let beta: Vec<f64> = (0..p).map(|k| layout.axes[k][idx[k]]).collect();
        return Err(Error::Numerical(format!(
            "non-finite kernel value at beta = {beta:?}, sigma = {:e}",
            layout.sigma[s]
        )));
    }
    let gmax = ln_k.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if gmax == f64::NEG_INFINITY {
        return Err(Error::Numerical("kernel vanishes on the whole grid".into()));
    }
    let mut grid = PosteriorGrid {
        beta_axes: layout.axes.clone(),
        sigma_axis: layout.sigma.clone(),
        values: ln_k.iter().map(|v| (v - gmax).exp()).collect(),
        log_marginal: 0.0,
        boundary_mass: 0.0,
        expansions: 0,
        omega,
    };
    let z = grid.total_mass();
    let ln_z = gmax + z.ln();
    grid.values.iter_mut().for_each(|v| *v /= z);
    grid.log_marginal = ln_z + kernel.ln_offset();
    grid.boundary_mass = grid.band_masses().union;
    Ok(grid)
}

struct Bands {
    beta: Vec<(f64, f64)>,
    sigma: (f64, f64),
    union: f64,
}

impl PosteriorGrid {
    pub fn dim(&self) -> usize {
        self.beta_axes.len()
    }

    fn layout_len(&self) -> usize {
        self.values.len()
    }

    fn index(&self, flat: usize, idx: &mut [usize]) -> usize {
        let ns = self.sigma_axis.len();
        let s = flat % ns;
        let mut rest = flat / ns;
        for k in (0..self.dim()).rev() {
            idx[k] = rest % self.beta_axes[k].len();
            rest /= self.beta_axes[k].len();
        }
        s
    }

    /// Trapezoid weights for `dβ dτ` with the Jacobian `σ` folded in, so
    /// that `Σ weight × value` integrates a density in `(β, σ)`.
    fn node_weights(&self) -> Vec<f64> {
        let wb: Vec<Vec<f64>> = self.beta_axes.iter().map(|a| trapezoid_weights(a)).collect();
        let taus: Vec<f64> = self.sigma_axis.iter().map(|s| s.ln()).collect();
        let wt = trapezoid_weights(&taus);
        let mut idx = vec![0usize; self.dim()];
        (0..self.layout_len())
            .map(|flat| {
                let s = self.index(flat, &mut idx);
                let mut w = wt[s] * self.sigma_axis[s];
                for (k, &i) in idx.iter().enumerate() {
                    w *= wb[k][i];
                }
                w
            })
            .collect()
    }

    /// Trapezoid integral of the stored density; 1 after normalization.
    pub fn total_mass(&self) -> f64 {
        self.node_weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    fn band_masses(&self) -> Bands {
        let p = self.dim();
        let w = self.node_weights();
        let in_band = |axis: &[f64], i: usize| -> (bool, bool) {
            let (lo, hi) = (axis[0], axis[axis.len() - 1]);
            let span = hi - lo;
            (axis[i] < lo + 0.05 * span, axis[i] > hi - 0.05 * span)
        };
        let taus: Vec<f64> = self.sigma_axis.iter().map(|s| s.ln()).collect();
        let mut beta = vec![(0.0, 0.0); p];
        let mut sigma = (0.0, 0.0);
        let mut union = 0.0;
        let mut idx = vec![0usize; p];
        for flat in 0..self.layout_len() {
            let s = self.index(flat, &mut idx);
            let m = w[flat] * self.values[flat];
            let mut any = false;
            for k in 0..p {
                let (l, h) = in_band(&self.beta_axes[k], idx[k]);
                if l {
                    beta[k].0 += m;
                }
                if h {
                    beta[k].1 += m;
                }
                any |= l || h;
            }
            let (l, h) = in_band(&taus, s);
            if l {
                sigma.0 += m;
            }
            if h {
                sigma.1 += m;
            }
            if any || l || h {
                union += m;
            }
        }
        Bands { beta, sigma, union }
    }

    /// Marginal density of coefficient `k` at its axis nodes.
    pub fn beta_marginal(&self, k: usize) -> Vec<f64> {
        let wb: Vec<Vec<f64>> = self.beta_axes.iter().map(|a| trapezoid_weights(a)).collect();
        let taus: Vec<f64> = self.sigma_axis.iter().map(|s| s.ln()).collect();
        let wt = trapezoid_weights(&taus);
        let mut out = vec![0.0; self.beta_axes[k].len()];
        let mut idx = vec![0usize; self.dim()];
        for flat in 0..self.layout_len() {
            let s = self.index(flat, &mut idx);
            let mut w = wt[s] * self.sigma_axis[s];
            for (j, &i) in idx.iter().enumerate() {
                if j != k {
                    w *= wb[j][i];
                }
            }
            out[idx[k]] += w * self.values[flat];
        }
        out
    }

    /// Marginal density of `σ` at the nodes of `sigma_axis`.
    pub fn sigma_marginal(&self) -> Vec<f64> {
        let wb: Vec<Vec<f64>> = self.beta_axes.iter().map(|a| trapezoid_weights(a)).collect();
        let mut out = vec![0.0; self.sigma_axis.len()];
        let mut idx = vec![0usize; self.dim()];
        for flat in 0..self.layout_len() {
            let s = self.index(flat, &mut idx);
            let w: f64 = idx.iter().enumerate().map(|(j, &i)| wb[j][i]).product();
            out[s] += w * self.values[flat];
        }
        out
    }

    fn beta_cdf_nodes(&self, k: usize) -> Vec<f64> {
        cumulative_trapezoid(&self.beta_axes[k], &self.beta_marginal(k))
    }

    fn log_sigma_cdf_nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let taus: Vec<f64> = self.sigma_axis.iter().map(|s| s.ln()).collect();
        let dens: Vec<f64> = self.sigma_marginal().iter().zip(&self.sigma_axis).map(|(m, s)| m * s).collect();
        let c = cumulative_trapezoid(&taus, &dens);
        (taus, c)
    }

    /// Marginal distribution function of coefficient `k`, linear between nodes.
    pub fn beta_cdf(&self, k: usize) -> impl Fn(f64) -> f64 + '_ {
        let c = self.beta_cdf_nodes(k);
        let x = &self.beta_axes[k];
        move |at| interpolate(x, &c, at)
    }

    pub fn sigma_cdf(&self) -> impl Fn(f64) -> f64 {
        let (taus, c) = self.log_sigma_cdf_nodes();
        move |at: f64| if at <= 0.0 { 0.0 } else { interpolate(&taus, &c, at.ln()) }
    }

    pub fn beta_quantile(&self, k: usize, q: f64) -> f64 {
        inverse_interpolate(&self.beta_axes[k], &self.beta_cdf_nodes(k), q)
    }

    pub fn log_sigma_quantile(&self, q: f64) -> f64 {
        let (taus, c) = self.log_sigma_cdf_nodes();
        inverse_interpolate(&taus, &c, q)
    }

    pub fn moments(&self) -> GridMoments {
        let w = self.node_weights();
        let p = self.dim();
        let mut m1 = vec![0.0; p];
        let mut m2 = vec![0.0; p];
        let (mut s1, mut s2) = (0.0, 0.0);
        let mut idx = vec![0usize; p];
        for flat in 0..self.layout_len() {
            let s = self.index(flat, &mut idx);
            let m = w[flat] * self.values[flat];
            for k in 0..p {
                let b = self.beta_axes[k][idx[k]];
                m1[k] += m * b;
                m2[k] += m * b * b;
            }
            let sg = self.sigma_axis[s];
            s1 += m * sg;
            s2 += m * sg * sg;
        }
        GridMoments {
            beta_sd: (0..p).map(|k| (m2[k] - m1[k] * m1[k]).max(0.0).sqrt()).collect(),
            beta_mean: m1,
            sigma_sd: (s2 - s1 * s1).max(0.0).sqrt(),
            sigma_mean: s1,
        }
    }

    /// Node with the largest density in `(β, log σ)` coordinates.
    pub fn best_node(&self) -> (Vec<f64>, f64) {
        let mut idx = vec![0usize; self.dim()];
        let best = (0..self.layout_len())
            .max_by(|&i, &j| {
                let si = self.index(i, &mut idx);
                let vi = self.values[i] * self.sigma_axis[si];
                let sj = self.index(j, &mut idx);
                let vj = self.values[j] * self.sigma_axis[sj];
                vi.total_cmp(&vj)
            })
            .expect("non-empty grid");
        let s = self.index(best, &mut idx);
        ((0..self.dim()).map(|k| self.beta_axes[k][idx[k]]).collect(), self.sigma_axis[s])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heavytail::{CoefficientPrior, LptnDensity, ScalePrior};

    #[test]
    fn normalized_and_covering() {
        let prob = RegressionProblem::canonical();
        let g = grid_posterior(&prob, 1e3, &Subset::All, &GridOptions::for_dim(1)).unwrap();
        assert!((g.total_mass() - 1.0).abs() < 1e-12);
        assert!(g.boundary_mass < 1e-3);
        assert!(g.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn clean_subset_equals_full_without_outliers() {
        let prob = RegressionProblem::canonical().without_outliers();
        let opts = GridOptions::for_dim(1);
        let a = grid_posterior(&prob, 50.0, &Subset::All, &opts).unwrap();
        let b = grid_posterior(&prob, 50.0, &Subset::Clean, &opts).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.log_marginal, b.log_marginal);
    }

    #[test]
    fn symmetric_problem_has_centred_coefficient() {
        let prob = RegressionProblem::new(
            vec![vec![1.0]; 4],
            vec![-1.5, -0.5, 0.5, 1.5],
            vec![0.0; 4],
            LptnDensity::new(1.0).unwrap(),
            CoefficientPrior::per_coordinate_t(vec![1.0]).unwrap(),
            ScalePrior::half_cauchy(1.0).unwrap(),
        )
        .unwrap();
        let g = grid_posterior(&prob, 0.0, &Subset::All, &GridOptions::for_dim(1)).unwrap();
        assert!(g.moments().beta_mean[0].abs() < 1e-3);
    }

    #[test]
    fn three_dimensional_design_is_rejected() {
        let prob = RegressionProblem::new(
            vec![vec![1.0, 0.0, 0.0]; 4],
            vec![0.0; 4],
            vec![0.0; 4],
            LptnDensity::new(1.0).unwrap(),
            CoefficientPrior::per_coordinate_t(vec![1.0; 3]).unwrap(),
            ScalePrior::half_cauchy(1.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            grid_posterior(&prob, 0.0, &Subset::All, &GridOptions::for_dim(3)),
            Err(Error::UnsupportedDimension { .. })
        ));
    }

    #[test]
    fn cdf_and_quantile_are_inverse() {
        let prob = RegressionProblem::canonical();
        let g = grid_posterior(&prob, 0.0, &Subset::Clean, &GridOptions::for_dim(1)).unwrap();
        let cdf = g.beta_cdf(0);
        for q in [0.1, 0.5, 0.9] {
            let x = g.beta_quantile(0, q);
            assert!((cdf(x) - q).abs() < 1e-9);
        }
    }
}
