//! Property tests over random parameter draws.

use degenpde_core::profiles::Profile;
use degenpde_core::tridiag::thomas_solve;
use degenpde_core::{derive, run, Diffusion, ProblemParams, SolverConfig, Termination};
use proptest::prelude::*;

fn slow_params() -> impl Strategy<Value = ProblemParams> {
    (1.2f64..3.0, 0.5f64..2.0, 2.0f64..3.5, 0.0f64..0.5, 1u32..=3).prop_map(|(m, k, p, q, dim)| {
        ProblemParams {
            m,
            k,
            p,
            q,
            dim,
            source: false,
            ..ProblemParams::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diffusion_class_follows_kappa(m in 0.2f64..3.0, k in 0.2f64..3.0, p in 1.5f64..4.0, q in 0.0f64..0.9) {
        let pr = ProblemParams { m, k, p, q, ..ProblemParams::default() };
        if let Ok(d) = derive(&pr) {
            let expect = if d.kappa > 0.0 {
                Diffusion::Slow
            } else if d.kappa < 0.0 {
                Diffusion::Fast
            } else {
                Diffusion::Critical
            };
            prop_assert_eq!(d.diffusion(), expect);
            let m2 = m / (1.0 - q);
            let k2 = k / (1.0 - q);
            prop_assert!((d.kappa - (m2 + k2 * (p - 2.0) - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zkb_profile_is_monotone_and_compact(pr in slow_params(), a in 0.1f64..2.0) {
        let d = derive(&pr).unwrap();
        let prof = Profile::for_regime(&d, a).unwrap();
        let xb = prof.xi_b();
        prop_assert!(xb.is_finite() && xb > 0.0);
        let mut last = f64::INFINITY;
        for i in 0..=200 {
            let v = prof.value(1.2 * xb * i as f64 / 200.0);
            prop_assert!(v >= 0.0 && v <= last);
            last = v;
        }
        prop_assert_eq!(prof.value(1.0001 * xb), 0.0);
    }

    #[test]
    fn params_text_round_trip(pr in slow_params(), a in 0.1f64..2.0, beta in 0.0f64..9.0) {
        let pr = ProblemParams { a, beta, source: true, ..pr };
        prop_assert_eq!(ProblemParams::from_kv_text(&pr.to_string()).unwrap(), pr);
    }

    #[test]
    fn thomas_residual_is_tiny(n in 1usize..60, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let upper: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.5 + lower[i].abs() + upper[i].abs()).collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let x = thomas_solve(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..n {
            let mut r = diag[i] * x[i] - rhs[i];
            if i > 0 { r += lower[i] * x[i - 1]; }
            if i + 1 < n { r += upper[i] * x[i + 1]; }
            prop_assert!(r.abs() <= 1e-12 * (1.0 + rhs[i].abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solver_keeps_solution_nonnegative_and_mass_free_of_blowup(pr in slow_params(), a in 0.2f64..1.5) {
        let pr = ProblemParams { a, ..pr };
        let d = derive(&pr).unwrap();
        let cfg = SolverConfig { nodes: 80, dt: 2e-3, t_end: 1.2, snapshot_times: vec![1.1], ..SolverConfig::default() };
        let rep = run(&d, cfg).unwrap();
        prop_assert_eq!(rep.termination, Termination::Completed);
        for s in &rep.snapshots {
            prop_assert!(s.v.iter().all(|&v| v >= 0.0 && v.is_finite()));
        }
        // source-free data only spreads: the maximum cannot grow
        let first = rep.snapshots.first().unwrap().max();
        let last = rep.final_state().max();
        prop_assert!(last <= first * (1.0 + 1e-6), "{} -> {}", first, last);
    }
}
