use proptest::prelude::*;

use robreg_core::heavytail::{coefficient_prior_pdf, tail_bounds, tail_ratio, CoefficientPrior, LptnDensity, ScalePrior};
use robreg_core::lemmalab::{verify_covering, verify_covering_sampled, LemmaInstance, SamplePlan};
use robreg_core::model::{general_position_of, log_kernel, log_likelihood, observations_at, DEFAULT_RANK_TOL};
use robreg_core::quad::{integrate, QuadOptions};
use robreg_core::robustness::{envelope_threshold, ln_envelope};
use robreg_core::{RegressionProblem, Subset};

fn gamma() -> impl Strategy<Value = f64> {
    0.3f64..3.0
}

fn problem(n: usize, p: usize, seed: u64, outliers: &[bool]) -> RegressionProblem {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = outliers.iter().map(|&o| if o { rng.random_range(0.5..2.0) } else { 0.0 }).collect();
    RegressionProblem::new(
        x,
        a,
        b,
        LptnDensity::new(1.0).unwrap(),
        CoefficientPrior::per_coordinate_t(vec![1.0; p]).unwrap(),
        ScalePrior::half_cauchy(1.0).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn density_is_symmetric(z in -1e6f64..1e6, g in gamma()) {
        let d = LptnDensity::new(g).unwrap();
        prop_assert_eq!(d.pdf(z), d.pdf(-z));
    }

    #[test]
    fn log_density_matches_density(z in -1e12f64..1e12, g in gamma()) {
        let d = LptnDensity::new(g).unwrap();
        let f = d.pdf(z);
        prop_assume!(f > 1e-300);
        prop_assert!((d.ln_pdf(z).exp() - f).abs() <= 1e-12 * f);
    }

    #[test]
    fn cdf_inverts_quantile(u in 0.001f64..0.999, g in 0.5f64..2.0) {
        let d = LptnDensity::new(g).unwrap();
        let (sign, l) = d.quantile_log1p(u).unwrap();
        prop_assert!((d.cdf_log1p(sign, l) - u).abs() < 1e-10);
        let z = d.quantile(u).unwrap();
        if z.abs() < f64::MAX {
            prop_assert!((d.cdf(z) - u).abs() < 1e-10);
        }
    }

    #[test]
    fn cdf_is_monotone_and_complements_sf(z1 in -1e4f64..1e4, dz in 0.0f64..1e3, g in gamma()) {
        let d = LptnDensity::new(g).unwrap();
        prop_assert!(d.cdf(z1) <= d.cdf(z1 + dz));
        prop_assert!((d.cdf(z1) + d.sf(z1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tail_bounds_hold(
        y in prop_oneof![-1e3f64..1e3, -1e12f64..1e12],
        mu in -50.0f64..50.0,
        ln_sigma in -4.0f64..4.0,
        g in gamma(),
    ) {
        let d = LptnDensity::new(g).unwrap();
        let rec = tail_bounds(y, mu, ln_sigma.exp(), &d).unwrap();
        prop_assert!(!rec.any_failed(), "{rec:?}");
    }

    #[test]
    fn tail_ratio_approaches_one(mu in -5.0f64..5.0, sigma in 0.25f64..4.0, g in 0.5f64..2.0) {
        let d = LptnDensity::new(g).unwrap();
        let gap = |k: i32| (tail_ratio(10f64.powi(k), mu, sigma, &d).unwrap() - 1.0).abs();
        for k in 4..12 {
            prop_assert!(gap(k + 1) < gap(k), "k = {k}: {} !< {}", gap(k + 1), gap(k));
        }
    }

    #[test]
    fn per_coordinate_prior_factorizes(
        beta in prop::collection::vec(-50.0f64..50.0, 1..=3),
        nus in prop::collection::vec(0.2f64..10.0, 3),
        ln_sigma in -3.0f64..3.0,
    ) {
        let sigma = ln_sigma.exp();
        let p = beta.len();
        let joint = CoefficientPrior::per_coordinate_t(nus[..p].to_vec()).unwrap();
        let product: f64 = beta
            .iter()
            .zip(&nus)
            .map(|(b, nu)| coefficient_prior_pdf(&[*b], sigma, &CoefficientPrior::per_coordinate_t(vec![*nu]).unwrap()).unwrap())
            .product();
        let j = coefficient_prior_pdf(&beta, sigma, &joint).unwrap();
        prop_assert!((j - product).abs() <= 1e-12 * product);
    }

    #[test]
    fn multivariate_prior_is_isotropic(r in 0.0f64..100.0, angle in 0.0f64..std::f64::consts::TAU, nu in 0.2f64..10.0) {
        let cp = CoefficientPrior::multivariate_t(nu, 2).unwrap();
        let on_axis = coefficient_prior_pdf(&[r, 0.0], 1.3, &cp).unwrap();
        let rotated = coefficient_prior_pdf(&[r * angle.cos(), r * angle.sin()], 1.3, &cp).unwrap();
        prop_assert!((on_axis - rotated).abs() <= 1e-12 * on_axis);
    }
}

/// `∫ g(β) dβ` over the real line via `β = tan θ`.
fn whole_line<F: Fn(f64) -> f64>(g: F) -> f64 {
    let opts = QuadOptions {
        rel_tol: 1e-12,
        max_intervals: 5000,
        ..QuadOptions::default()
    };
    let h = std::f64::consts::FRAC_PI_2;
    integrate(|t| g(t.tan()) / t.cos().powi(2), -h, h, &opts).value
}

fn half_line<F: Fn(f64) -> f64>(g: F) -> f64 {
    whole_line(|r| if r >= 0.0 { g(r) } else { 0.0 })
}

#[test]
fn coefficient_priors_integrate_to_one() {
    for nu in [0.5, 1.0, 3.0] {
        for sigma in [0.1, 1.0, 7.0] {
            let one = CoefficientPrior::per_coordinate_t(vec![nu]).unwrap();
            let z = whole_line(|b| coefficient_prior_pdf(&[b], sigma, &one).unwrap());
            assert!((z - 1.0).abs() < 1e-6, "per-coordinate nu={nu} sigma={sigma}: {z}");

            // Isotropic, so the radial integral with the sphere area gives the total mass.
            for (p, area) in [(1usize, 2.0), (2, std::f64::consts::TAU), (3, 4.0 * std::f64::consts::PI)] {
                let cp = CoefficientPrior::multivariate_t(nu, p).unwrap();
                let z = half_line(|r| {
                    let mut beta = vec![0.0; p];
                    beta[0] = r;
                    area * r.powi(p as i32 - 1) * coefficient_prior_pdf(&beta, sigma, &cp).unwrap()
                });
                assert!((z - 1.0).abs() < 1e-6, "multivariate p={p} nu={nu} sigma={sigma}: {z}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clean_and_outlier_rows_partition(flags in prop::collection::vec(any::<bool>(), 2..9), seed in any::<u64>()) {
        let prob = problem(flags.len(), 1, seed, &flags);
        let mut all: Vec<usize> = prob.clean_indices();
        all.extend(prob.outlier_indices());
        all.sort_unstable();
        prop_assert_eq!(all, (0..flags.len()).collect::<Vec<_>>());
        for i in prob.outlier_indices() {
            prop_assert!(flags[i]);
        }
        prop_assert_eq!(observations_at(&prob, 0.0).unwrap(), prob.a().to_vec());
    }

    #[test]
    fn kernel_splits_over_rows(
        flags in prop::collection::vec(any::<bool>(), 2..7),
        seed in any::<u64>(),
        beta in prop::collection::vec(-3.0f64..3.0, 2),
        ln_sigma in -2.0f64..2.0,
        ln_omega in 0.0f64..20.0,
    ) {
        let prob = problem(flags.len(), 2, seed, &flags);
        let (sigma, omega) = (ln_sigma.exp(), ln_omega.exp());
        let full = log_kernel(&prob, &beta, sigma, omega, &Subset::All).unwrap();
        let clean = log_kernel(&prob, &beta, sigma, omega, &Subset::Clean).unwrap();
        let rest = log_likelihood(&prob, &beta, sigma, omega, &Subset::Indices(prob.outlier_indices())).unwrap();
        prop_assert!((full - clean - rest).abs() <= 1e-9 * (1.0 + full.abs()));
    }

    #[test]
    fn general_position_ignores_row_order(seed in any::<u64>(), n in 3usize..8, p in 1usize..3, perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let flags: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let prob = problem(n, p, seed, &flags);
        let z: Vec<Vec<f64>> = prob.rows().map(<[f64]>::to_vec).collect();
        // A duplicated row forces some violations to exist.
        let mut z_dup = z.clone();
        z_dup[n - 1] = z_dup[0].clone();
        for z in [z, z_dup] {
            let base = general_position_of(&z, prob.a(), prob.b(), DEFAULT_RANK_TOL).unwrap();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
            let pz: Vec<Vec<f64>> = order.iter().map(|&i| z[i].clone()).collect();
            let pa: Vec<f64> = order.iter().map(|&i| prob.a()[i]).collect();
            let pb: Vec<f64> = order.iter().map(|&i| prob.b()[i]).collect();
            let shuffled = general_position_of(&pz, &pa, &pb, DEFAULT_RANK_TOL).unwrap();
            prop_assert_eq!(
                (base.cond_i, base.cond_ii, base.cond_iii, base.violations),
                (shuffled.cond_i, shuffled.cond_ii, shuffled.cond_iii, shuffled.violations)
            );
        }
    }

    #[test]
    fn random_designs_are_in_general_position(seed in any::<u64>(), n in 2usize..=8, p in 1usize..=3) {
        let flags: Vec<bool> = (0..n).map(|i| i % 2 == 1).collect();
        let prob = problem(n, p, seed, &flags);
        let z: Vec<Vec<f64>> = prob.rows().map(<[f64]>::to_vec).collect();
        let gp = general_position_of(&z, prob.a(), prob.b(), DEFAULT_RANK_TOL).unwrap();
        prop_assert!(gp.holds(), "{gp:?}");
    }

    #[test]
    fn envelope_decays_past_threshold(
        outliers in 1usize..4,
        extra in 1usize..5,
        p in 1usize..4,
        g in gamma(),
        steps in prop::collection::vec(0.01f64..5.0, 1..6),
    ) {
        // margin = clean - outliers - p >= 1
        let clean = outliers + p + extra;
        let start = envelope_threshold(outliers, clean, p, g).expect("margin is positive");
        let mut ln_w = start.ln().max(0.0) + 1e-6;
        let mut prev = ln_envelope(outliers, clean, p, g, ln_w.exp());
        for s in steps {
            ln_w += s;
            let next = ln_envelope(outliers, clean, p, g, ln_w.exp());
            prop_assert!(next < prev);
            prev = next;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn exact_and_sampled_covering_agree(seed in 0u64..1_000_000, m in 2usize..=5, eps_k in 0usize..5, ln_omega in 0.0f64..12.0) {
        let inst = LemmaInstance::gaussian("fuzz", 1, m, seed).unwrap();
        let eps = 10f64.powf(-(eps_k as f64) / 2.0);
        let omega = ln_omega.exp();
        let plan = SamplePlan { budget: 20_000, seed };
        let exact = verify_covering(&inst, eps, omega, &plan).unwrap();
        let sampled = verify_covering_sampled(&inst, eps, omega, &plan).unwrap();
        prop_assert!(exact.exact && !sampled.exact);
        prop_assert_eq!(exact.pass, sampled.pass);
        if let Some(w) = sampled.witness {
            // Re-check the witness directly.
            let c: Vec<f64> = inst.a.iter().zip(&inst.b).map(|(a, b)| a + b * omega).collect();
            let close = inst.z.iter().zip(&c).filter(|(z, c)| (*c - z[0] * w[0]).abs() <= eps).count();
            prop_assert!(close > inst.p);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn covering_is_monotone_in_epsilon(seed in 0u64..1_000_000, p in 1usize..=2, ln_omega in 0.0f64..8.0) {
        let inst = LemmaInstance::gaussian("mono", p, p + 3, seed).unwrap();
        let plan = SamplePlan { budget: 5_000, seed };
        let omega = ln_omega.exp();
        let mut failed = false;
        for eps in [1e-3, 1e-2, 1e-1, 1.0] {
            let v = verify_covering(&inst, eps, omega, &plan).unwrap();
            prop_assert!(!(failed && v.pass), "passes at eps={eps} after failing at a smaller eps");
            failed |= !v.pass;
        }
    }
}
