//! Property tests of the monotone steps and the filtered loop on the benchmarks.

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use filtered_hjb::filter::{filtered_step, run_filtered, EpsRule, FilterConfig, RunOptions};
use filtered_hjb::harness::{benchmark_discretization, ProblemParams};
use filtered_hjb::howard::HowardConfig;
use filtered_hjb::monotone::monotone_step;
use filtered_hjb::problem::Benchmark;
use filtered_hjb::scheme::{build_scheme, Discretization, SchemeKind};

fn disc(b: Benchmark, k: u32) -> Arc<Discretization> {
    benchmark_discretization(b, k, &ProblemParams::default()).unwrap()
}

fn perturbed(base: &[f64], amp: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    base.iter().map(|v| v + amp * rng.gen_range(-1.0..1.0)).collect()
}

fn benchmark_strategy() -> impl Strategy<Value = (Benchmark, SchemeKind)> {
    prop_oneof![
        Just((Benchmark::MeanVariance, SchemeKind::Ie)),
        Just((Benchmark::UncertainVol, SchemeKind::Ie)),
        Just((Benchmark::MeanVariance, SchemeKind::Sl)),
        Just((Benchmark::Diffusion2d, SchemeKind::Sl)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn monotone_steps_preserve_order((b, kind) in benchmark_strategy(), seed in any::<u64>(), amp in 0.01f64..1.0) {
        let d = disc(b, 0);
        let s = build_scheme(kind, d.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = perturbed(&d.initial_values(), amp, &mut rng);
        let psi: Vec<f64> = phi.iter().map(|v| v + amp * rng.gen_range(0.0..1.0)).collect();
        let cfg = HowardConfig::default();
        let sp = monotone_step(s.as_ref(), 1, &phi, &cfg).unwrap();
        let sq = monotone_step(s.as_ref(), 1, &psi, &cfg).unwrap();
        for (a, c) in sp.iter().zip(&sq) {
            prop_assert!(*a <= *c + 1e-9 * (1.0 + c.abs()), "{a} > {c}");
        }
    }

    #[test]
    fn monotone_steps_do_not_expand((b, kind) in benchmark_strategy(), seed in any::<u64>(), amp in 0.01f64..1.0) {
        let d = disc(b, 0);
        let s = build_scheme(kind, d.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = perturbed(&d.initial_values(), amp, &mut rng);
        let psi = perturbed(&phi, amp, &mut rng);
        let cfg = HowardConfig::default();
        let sp = monotone_step(s.as_ref(), 1, &phi, &cfg).unwrap();
        let sq = monotone_step(s.as_ref(), 1, &psi, &cfg).unwrap();
        let before = phi.iter().zip(&psi).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        let after = sp.iter().zip(&sq).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        prop_assert!(after <= before * (1.0 + 1e-9) + 1e-12, "{after} > {before}");
    }

    #[test]
    fn filtered_runs_stay_within_eps_tau(c0 in 1e-3f64..100.0, uv in any::<bool>()) {
        let (b, rule) = if uv {
            (Benchmark::UncertainVol, EpsRule::DxMin)
        } else {
            (Benchmark::MeanVariance, EpsRule::MaxTauDx)
        };
        let d = disc(b, 0);
        let ie = build_scheme(SchemeKind::Ie, d.clone()).unwrap();
        let bdf2 = build_scheme(SchemeKind::Bdf2, d).unwrap();
        let f = FilterConfig::new(c0, rule).unwrap();
        let out = run_filtered(ie.as_ref(), bdf2.as_ref(), &f, &HowardConfig::default(), RunOptions::default()).unwrap();
        prop_assert!(out.max_proximity <= 1.0 + 1e-12, "{}", out.max_proximity);
        prop_assert!(out.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn filtered_step_bounds(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..50),
        eps in 1e-3f64..10.0,
        tau in 1e-3f64..1.0,
    ) {
        let (sm, sh): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (u, mask) = filtered_step(&sm, &sh, eps, tau).unwrap();
        for i in 0..u.len() {
            prop_assert!((u[i] - sm[i]).abs() <= eps * tau * (1.0 + 1e-12));
            if mask[i] {
                prop_assert_eq!(u[i], sm[i]);
            } else {
                prop_assert!((u[i] - sh[i]).abs() <= 1e-12 * (1.0 + sh[i].abs()));
            }
        }
    }
}
