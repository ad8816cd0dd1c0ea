//! Convergence and accuracy diagnostics for Markov chain output.

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size from Geyer's initial positive sequence estimator.
pub fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let c0 = autocovariance(x, m, 0);
    if c0 <= 0.0 {
        return n as f64;
    }
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = (autocovariance(x, m, 2 * k) + autocovariance(x, m, 2 * k + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        // Initial monotone sequence.
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

/// Split potential scale reduction over several chains of equal length.
pub fn rhat(chains: &[&[f64]]) -> f64 {
    let half = chains.iter().map(|c| c.len()).min().unwrap_or(0) / 2;
    if half < 2 {
        return f64::NAN;
    }
    let parts: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[half..2 * half]]).collect();
    let m = parts.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|v| (v - grand) * (v - grand)).sum::<f64>();
    let w = parts.iter().map(|c| variance(c)).sum::<f64>() / m;
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Monte-Carlo standard error of the mean by non-overlapping batch means
/// with `⌊√n⌋` batches.
pub fn batch_means_se(x: &[f64]) -> f64 {
    let n = x.len();
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        return f64::NAN;
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&x[b * size..(b + 1) * size])).collect();
    (variance(&means) / batches as f64).sqrt()
}

/// Standard error of the sample standard deviation, by batch means on the
/// squared deviations and the delta method.
pub fn sd_se(x: &[f64]) -> f64 {
    let m = mean(x);
    let sq: Vec<f64> = x.iter().map(|v| (v - m) * (v - m)).collect();
    let var = mean(&sq);
    batch_means_se(&sq) / (2.0 * var.sqrt())
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `sample` and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `(q84 - q16) / 2`, a scale estimate that exists for heavy tails.
pub fn robust_scale(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    0.5 * (quantile_sorted(&s, 0.8413) - quantile_sorted(&s, 0.1587))
}

pub fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::seeded(seed);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                x = phi * x + e;
                x
            })
            .collect()
    }

    #[test]
    fn ess_of_ar1_matches_theory() {
        // integrated autocorrelation time (1 + φ)/(1 - φ) = 3 for φ = 0.5
        let x = ar1(100_000, 0.5, 1);
        let r = x.len() as f64 / ess(&x);
        assert!((r - 3.0).abs() < 0.3, "{r}");
        let iid = ar1(20_000, 0.0, 2);
        let r = iid.len() as f64 / ess(&iid);
        assert!((r - 1.0).abs() < 0.15, "{r}");
    }

    #[test]
    fn rhat_detects_disagreement() {
        let a = ar1(5000, 0.3, 3);
        let b = ar1(5000, 0.3, 4);
        assert!(rhat(&[&a, &b]) < 1.01);
        let shifted: Vec<f64> = b.iter().map(|v| v + 3.0).collect();
        assert!(rhat(&[&a, &shifted]) > 1.2);
    }

    #[test]
    fn batch_means_close_to_iid_se() {
        let x = ar1(40_000, 0.0, 5);
        let se = batch_means_se(&x);
        let want = 1.0 / (x.len() as f64).sqrt();
        assert!((se / want - 1.0).abs() < 0.3, "{se} vs {want}");
    }

    #[test]
    fn ks_of_exact_uniform_grid() {
        let s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_distance(&s, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.005).abs() < 1e-12);
    }
}
