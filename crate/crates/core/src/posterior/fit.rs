//! Least-squares localization on the non-outlying rows and a small
//! Nelder–Mead optimizer.

use nalgebra::{DMatrix, DVector};

use crate::model::{Kernel, RegressionProblem};

/// Rough location and scale of the leave-outliers-out posterior.
#[derive(Debug, Clone)]
pub struct CleanFit {
    pub beta: Vec<f64>,
    /// `1.4826 × MAD` of the residuals, or 1 when that is zero.
    pub scale: f64,
    /// Per-coefficient scale: `scale · sqrt(|K| [(X_KᵀX_K)^-1]_kk)`.
    pub coef_scale: Vec<f64>,
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub(crate) fn mad_scale(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut w = v.to_vec();
    let m = median(&mut w);
    let mut dev: Vec<f64> = v.iter().map(|x| (x - m).abs()).collect();
    1.4826 * median(&mut dev)
}

pub fn clean_fit(prob: &RegressionProblem) -> CleanFit {
    let rows = prob.clean_indices();
    let p = prob.p();
    let y: Vec<f64> = rows.iter().map(|&i| prob.a()[i]).collect();
    let fallback_scale = {
        let s = mad_scale(&y);
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    };
    if rows.len() < p {
        return CleanFit {
            beta: vec![0.0; p],
            scale: fallback_scale,
            coef_scale: vec![fallback_scale; p],
        };
    }
    let x = DMatrix::from_fn(rows.len(), p, |r, c| prob.row(rows[r])[c]);
    let yv = DVector::from_vec(y);
    let xtx = x.transpose() * &x;
    let Some(inv) = xtx.clone().try_inverse() else {
        return CleanFit {
            beta: vec![0.0; p],
            scale: fallback_scale,
            coef_scale: vec![fallback_scale; p],
        };
    };
    let beta = &inv * x.transpose() * &yv;
    let resid: Vec<f64> = (&yv - &x * &beta).iter().copied().collect();
    let mut scale = mad_scale(&resid);
    if !(scale > 0.0 && scale.is_finite()) {
        scale = fallback_scale;
    }
    let k = rows.len() as f64;
    let coef_scale = (0..p).map(|j| scale * (k * inv[(j, j)]).sqrt().max(1e-8)).collect();
    CleanFit {
        beta: beta.iter().copied().collect(),
        scale,
        coef_scale,
    }
}

/// Minimizes `f` from `x0` with initial simplex steps `step`. Non-finite
/// values count as `+inf`.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: &[f64], max_iter: usize, ftol: f64) -> (Vec<f64>, f64) {
    let d = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for j in 0..d {
        let mut x = x0.to_vec();
        x[j] += step[j];
        simplex.push(x);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&i, &j| fv[i].total_cmp(&fv[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();
        if (fv[d] - fv[0]).abs() <= ftol * (fv[0].abs() + ftol) {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|j| simplex[..d].iter().map(|x| x[j]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|j| centroid[j] + t * (simplex[d][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < fv[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[d] = xe;
                fv[d] = fe;
            } else {
                simplex[d] = xr;
                fv[d] = fr;
            }
        } else if fr < fv[d - 1] {
            simplex[d] = xr;
            fv[d] = fr;
        } else {
            let (xc, fc) = if fr < fv[d] {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < fv[d].min(fr) {
                simplex[d] = xc;
                fv[d] = fc;
            } else {
                for i in 1..=d {
                    let x: Vec<f64> = (0..d).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    fv[i] = eval(&x);
                    simplex[i] = x;
                }
            }
        }
    }
    let best = (0..=d).min_by(|&i, &j| fv[i].total_cmp(&fv[j])).expect("non-empty simplex");
    (simplex[best].clone(), fv[best])
}

/// Largest value of a log-kernel on the box `lower <= (β, log σ) <= upper`,
/// searched by Nelder–Mead from the clean fit with coordinates clamped into
/// the box.
///
/// Returns `(β, σ, ln k(β, σ))`. The kernel may be unbounded near kinks as
/// `σ -> 0`, so an unbounded search can run off to such a corner; the box
/// keeps it on the bulk.
pub fn local_mode(kernel: &Kernel<'_>, lower: &[f64], upper: &[f64]) -> (Vec<f64>, f64, f64) {
    let fit = clean_fit(kernel.problem());
    let p = fit.beta.len();
    let clamp = |t: &[f64]| -> Vec<f64> { t.iter().enumerate().map(|(j, v)| v.clamp(lower[j], upper[j])).collect() };
    let x0 = clamp(&fit.beta.iter().copied().chain([fit.scale.ln()]).collect::<Vec<_>>());
    let step: Vec<f64> = (0..=p).map(|j| 0.25 * (upper[j] - lower[j]).max(1e-12)).collect();
    let neg = |t: &[f64]| {
        let c = clamp(t);
        -kernel.ln_eval(&c[..p], c[p].exp())
    };
    let (mut x, mut v) = nelder_mead(neg, &x0, &step, 4000, 1e-12);
    // One restart guards against a collapsed simplex.
    let small: Vec<f64> = step.iter().map(|s| 0.1 * s).collect();
    let (x2, v2) = nelder_mead(neg, &x, &small, 4000, 1e-12);
    if v2 < v {
        x = x2;
        v = v2;
    }
    let x = clamp(&x);
    (x[..p].to_vec(), x[p].exp(), -v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2);
        let (x, v) = nelder_mead(f, &[0.0, 0.0], &[0.5, 0.5], 2000, 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 2.0).abs() < 1e-5, "{x:?}");
        assert!(v < 1e-9);
    }

    #[test]
    fn clean_fit_on_canonical_rows() {
        let fit = clean_fit(&RegressionProblem::canonical());
        assert!((fit.beta[0] + 0.25).abs() < 1e-12);
        // residuals ±0.25, ±0.75 around -0.25: MAD 0.5
        assert!((fit.scale - 1.4826 * 0.5).abs() < 1e-12);
        assert!((fit.coef_scale[0] - fit.scale).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
