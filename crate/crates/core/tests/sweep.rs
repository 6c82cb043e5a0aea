use cashband::*;

fn figure_sweep(warm_start: bool) -> (SweepSpec, Vec<SweepRow>) {
    let mut spec = SweepSpec::new(
        ModelParams::abm(0.0, 1.0, 0.0),
        SweepParam::Sigma,
        SweepSpec::linspace(1.0, 10.0, 25),
    )
    .with_overlays(SweepParam::Kappa, &[0.0, 0.5, 1.0]);
    spec.warm_start = warm_start;
    let rows = run_sweep(&spec, &SolverConfig::default()).unwrap();
    (spec, rows)
}

#[test]
fn warm_and_cold_sweeps_agree() {
    let (_, warm) = figure_sweep(true);
    let (_, cold) = figure_sweep(false);
    assert_eq!(warm.len(), cold.len());
    for (w, c) in warm.iter().zip(&cold) {
        assert!(w.converged && c.converged);
        assert_eq!(w.axis_value, c.axis_value);
        for (a, b) in [
            (w.x_lower, c.x_lower),
            (w.x_star, c.x_star),
            (w.x_upper, c.x_upper),
        ] {
            assert!((a - b).abs() < 1e-7, "{a} vs {b} at sigma {}", w.axis_value);
        }
    }
}

#[test]
fn converged_rows_verify() {
    let (_, rows) = figure_sweep(true);
    for r in rows.iter().filter(|r| r.converged) {
        let s = solve_band_from(
            &r.params,
            &SolverConfig::default(),
            [r.x_lower, r.x_star, r.x_upper],
        )
        .unwrap();
        assert!((s.x_upper - r.x_upper).abs() < 1e-9);
        let report = verify(&s, 501, &Tolerances::uniform(1e-6));
        assert!(report.passed, "sigma {}: {report}", r.axis_value);
    }
}

#[test]
fn rows_follow_the_grid() {
    let (spec, rows) = figure_sweep(true);
    for (i, chunk) in rows.chunks(3).enumerate() {
        for (k, r) in chunk.iter().enumerate() {
            assert_eq!(r.axis_value, spec.grid[i]);
            assert_eq!(r.overlay.unwrap().value, [0.0, 0.5, 1.0][k]);
        }
    }
}

#[test]
fn csv_is_reproducible() {
    let (spec, rows) = figure_sweep(true);
    let (_, again) = figure_sweep(true);
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_csv(&spec, &rows, &mut a).unwrap();
    write_csv(&spec, &again, &mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), rows.len() + 1);
}

#[test]
fn drift_moves_the_band_down() {
    let spec = SweepSpec::new(
        ModelParams::abm(0.0, 3.0, 0.0),
        SweepParam::Alpha,
        SweepSpec::linspace(-1.0, 1.0, 21),
    );
    let rows = run_sweep(&spec, &SolverConfig::default()).unwrap();
    for w in rows.windows(2) {
        assert!(w[0].converged && w[1].converged);
        assert!(w[1].x_upper < w[0].x_upper);
        assert!(w[1].x_lower < w[0].x_lower);
    }
}

#[test]
fn kappa_rotates_the_band_when_u_exceeds_l() {
    let spec = SweepSpec::new(
        ModelParams::abm(0.0, 5.4, 0.0).with_costs(1.0, 1.0, 2.0, 4.0),
        SweepParam::Kappa,
        SweepSpec::linspace(0.0, 1.0, 21),
    );
    let rows = run_sweep(&spec, &SolverConfig::default()).unwrap();
    assert!(rows.iter().all(|r| r.converged));
    let both_fall = rows
        .windows(2)
        .any(|w| w[1].x_lower < w[0].x_lower && w[1].x_upper < w[0].x_upper);
    assert!(both_fall);
}
