use cashband::*;
use proptest::prelude::*;

fn feasible_abm() -> impl Strategy<Value = ModelParams> {
    (
        0.05..0.2f64,
        -2.0..2.0f64,
        1.0..10.0f64,
        0.0..1.0f64,
        (0.5..2.0f64, 0.5..2.0f64),
        (0.5..5.0f64, 0.5..5.0f64),
    )
        .prop_map(
            |(rho, alpha, sigma, kappa, (c_neg, c_pos), (l, u))| ModelParams {
                rho,
                diffusion: Diffusion::Abm { alpha },
                sigma,
                kappa,
                c_neg,
                c_pos,
                l_cost: l,
                u_cost: u,
            },
        )
        .prop_filter("feasible", |p| feasibility_check(p).passed())
}

fn symmetric() -> impl Strategy<Value = ModelParams> {
    (1.0..10.0f64, 0.0..1.0f64).prop_map(|(sigma, kappa)| ModelParams::abm(0.0, sigma, kappa))
}

fn sign() -> impl Strategy<Value = DriftSign> {
    prop_oneof![Just(DriftSign::Minus), Just(DriftSign::Plus)]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roots_solve_the_quadratic(p in feasible_abm(), s in sign()) {
        let (beta, gamma) = quadratic_roots(&p, s).unwrap();
        prop_assert!(beta > 0.0 && gamma < 0.0);
        let mu = p.effective_drift(s, 0.0);
        for r in [beta, gamma] {
            let terms = [0.5 * p.sigma * p.sigma * r * r, mu * r, -p.rho];
            let scale: f64 = terms.iter().map(|t| t.abs()).sum();
            prop_assert!(terms.iter().sum::<f64>().abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn fundamental_pair_solves_homogeneous_ode(p in feasible_abm(), s in sign(), t in 0.0..1.0f64) {
        let cost = perpetual_cost(&p, s).unwrap();
        let pair = cost.pair();
        let (lo, hi) = pair.interval();
        let x = lo + t * (hi - lo);
        for phi in [pair.increasing(x), pair.decreasing(x)] {
            prop_assert!(pair.relative_residual(phi, x) < 1e-10);
        }
    }

    #[test]
    fn perpetual_cost_solves_inhomogeneous_ode(p in feasible_abm(), s in sign(), x in -30.0..30.0f64) {
        prop_assume!(x.abs() > 1e-6);
        let r = perpetual_cost(&p, s).unwrap().eval(x);
        let terms = [
            0.5 * p.sigma * p.sigma * r.d2,
            p.effective_drift(s, x) * r.d1,
            -p.rho * r.value,
            holding_cost(x, &p),
        ];
        let scale: f64 = terms.iter().map(|t| t.abs()).sum();
        prop_assert!(terms.iter().sum::<f64>().abs() <= 1e-8 * scale.max(1.0));
    }

    #[test]
    fn zero_kappa_merges_signs(p in feasible_abm(), x in -30.0..30.0f64) {
        let p = p.with_kappa(0.0);
        let lo = perpetual_cost(&p, DriftSign::Minus).unwrap().eval(x);
        let hi = perpetual_cost(&p, DriftSign::Plus).unwrap().eval(x);
        prop_assert_eq!(lo, hi);
    }

    #[test]
    fn perpetual_cost_mirrors(p in feasible_abm(), s in sign(), x in -30.0..30.0f64) {
        let r = perpetual_cost(&p, s).unwrap().eval(x);
        let m = perpetual_cost(&p.mirrored(), s.opposite()).unwrap().eval(-x);
        prop_assert!(close(r.value, m.value, 1e-10), "{r:?} vs {m:?}");
        prop_assert!(close(r.d1, -m.d1, 1e-10));
        prop_assert!(close(r.d2, m.d2, 1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn band_mirrors(p in feasible_abm()) {
        let cfg = SolverConfig::default();
        let s = solve_band(&p, &cfg).unwrap();
        let m = solve_band(&p.mirrored(), &cfg).unwrap();
        let [l, x, u] = s.barriers();
        let [ml, mx, mu] = m.barriers();
        prop_assert!(close(l, -mu, 1e-7) && close(x, -mx, 1e-7) && close(u, -ml, 1e-7),
            "{:?} vs {:?}", s.barriers(), m.barriers());
        for k in 0..=20 {
            let y = l - 1.0 + (u - l + 2.0) * k as f64 / 20.0;
            prop_assert!(close(s.evaluate(y).value, m.evaluate(-y).value, 1e-7));
        }
    }

    #[test]
    fn barriers_tighten_with_kappa(sigma in 1.0..10.0f64) {
        let cfg = SolverConfig::default();
        let bands: Vec<[f64; 3]> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&k| solve_band(&ModelParams::abm(0.0, sigma, k), &cfg).unwrap().barriers())
            .collect();
        for w in bands.windows(2) {
            prop_assert!(w[1][2] <= w[0][2] + 1e-9, "{bands:?}");
            prop_assert!(w[1][0] >= w[0][0] - 1e-9, "{bands:?}");
        }
    }

    #[test]
    fn width_grows_with_sigma(kappa in 0.0..1.0f64, s0 in 1.0..9.0f64, ds in 0.01..1.0f64) {
        let cfg = SolverConfig::default();
        let width = |sigma: f64| {
            let [l, _, u] = solve_band(&ModelParams::abm(0.0, sigma, kappa), &cfg).unwrap().barriers();
            u - l
        };
        prop_assert!(width(s0 + ds) >= width(s0) - 1e-9);
    }

    #[test]
    fn cost_grows_with_kappa(p in symmetric()) {
        let cfg = SolverConfig::default();
        let sols: Vec<BandSolution> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&k| solve_band(&p.with_kappa(k), &cfg).unwrap())
            .collect();
        let [l, _, u] = sols[0].barriers();
        for k in 0..=100 {
            let x = l - 2.0 + (u - l + 4.0) * k as f64 / 100.0;
            let j: Vec<f64> = sols.iter().map(|s| s.evaluate(x).value).collect();
            prop_assert!(j[1] >= j[0] - 1e-9 && j[2] >= j[1] - 1e-9, "x = {x}: {j:?}");
        }
    }

    #[test]
    fn cost_is_convex(p in feasible_abm()) {
        let s = solve_band(&p, &SolverConfig::default()).unwrap();
        let [l, _, u] = s.barriers();
        for k in 1..1000 {
            let x = l + (u - l) * k as f64 / 1000.0;
            prop_assert!(s.evaluate(x).d2 >= -1e-8, "x = {x}");
        }
    }

    #[test]
    fn worst_case_follows_slope(p in feasible_abm()) {
        let s = solve_band(&p, &SolverConfig::default()).unwrap();
        let [l, x_star, u] = s.barriers();
        for k in 0..1000 {
            let x = l + (u - l) * k as f64 / 999.0;
            if (x - x_star).abs() < 1e-9 {
                continue;
            }
            prop_assert_eq!(worst_case_generator(&s, x), generator_from_slope(s.evaluate(x).d1));
        }
    }

    #[test]
    fn verifier_catches_moved_barriers(p in feasible_abm(), which in 0usize..3, up in any::<bool>()) {
        let s = solve_band(&p, &SolverConfig::default()).unwrap();
        prop_assert!(verify(&s, 400, &Tolerances::uniform(1e-5)).passed);
        let shift = if up { 1e-3 } else { -1e-3 };
        let mut moved = s.clone();
        match which {
            0 => moved.x_lower += shift,
            1 => moved.x_star += shift,
            _ => moved.x_upper += shift,
        }
        prop_assert!(!verify(&moved, 400, &Tolerances::uniform(1e-5)).passed);
    }

    #[test]
    fn controls_act_only_at_barriers(p in feasible_abm(), seed in any::<u64>()) {
        let s = solve_band(&p, &SolverConfig::default()).unwrap();
        let cfg = SimConfig { n_paths: 1, dt: 1e-2, horizon: 10.0 / p.rho, seed, ..SimConfig::default() };
        let rec = simulate_path(&s, &cfg, 0).unwrap();
        let [l, _, u] = s.barriers();
        for i in 0..rec.x.len() {
            prop_assert!(rec.x[i] >= l && rec.x[i] <= u);
            prop_assert!(rec.d_l[i] >= 0.0 && rec.d_u[i] >= 0.0);
            if rec.d_l[i] > 0.0 {
                prop_assert_eq!(rec.x[i], l);
            }
            if rec.d_u[i] > 0.0 {
                prop_assert_eq!(rec.x[i], u);
            }
        }
    }
}
