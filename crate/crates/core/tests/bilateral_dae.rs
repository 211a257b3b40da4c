use nonsmooth_ggl::*;

fn bilateral() -> BilateralSliderCrank {
    BilateralSliderCrank::new(SliderCrankParams::default()).unwrap()
}

fn cfg(level: BilateralScheme) -> SolverConfig {
    SolverConfig::new(Scheme::Dae(level), 1e-4)
}

#[test]
fn enforced_equation_holds_after_one_step() {
    let m = bilateral();
    let s = m.initial_state();
    for level in [BilateralScheme::Position, BilateralScheme::Ggl] {
        let out = bilateral_step(&m, &s, level, &cfg(level)).unwrap();
        assert!(m.gaps(&out.state.q)[0].abs() <= 1e-10, "{level:?}");
    }
    let out = bilateral_step(&m, &s, BilateralScheme::Velocity, &cfg(BilateralScheme::Velocity)).unwrap();
    let q = &out.state.q;
    assert!((m.gap_jacobian(q) * &out.state.v)[0].abs() <= 1e-10);
    assert!(m.gaps(q)[0] != 0.0);
}

#[test]
fn schemes_agree_on_first_step_velocity() {
    let m = bilateral();
    let s = m.initial_state();
    let dt = 1e-4;
    let levels = [
        BilateralScheme::Position,
        BilateralScheme::Velocity,
        BilateralScheme::Acceleration,
        BilateralScheme::Ggl,
    ];
    let vs: Vec<Vector> = levels
        .iter()
        .map(|l| bilateral_step(&m, &s, *l, &cfg(*l)).unwrap().state.v)
        .collect();
    // The constraint level only changes the O(dt²) part of the update.
    for v in &vs[1..] {
        assert!((v - &vs[0]).amax() < 1e4 * dt * dt * 150.0, "{v} vs {}", vs[0]);
    }
}

#[test]
fn ggl_holds_both_levels_over_many_steps() {
    let m = bilateral();
    let c = cfg(BilateralScheme::Ggl);
    let mut s = m.initial_state();
    let e0 = m.energy(&s.q, &s.v);
    let mut max_psi = 0.0f64;
    for n in 0..10_000 {
        let out = bilateral_step(&m, &s, BilateralScheme::Ggl, &c).unwrap();
        assert!(out.converged());
        let g = m.gaps(&out.state.q)[0];
        let gd = (m.gap_jacobian(&out.state.q) * &out.state.v)[0];
        assert!(g.abs() <= 100.0 * c.newton_tol && gd.abs() <= 100.0 * c.newton_tol);
        max_psi = max_psi.max(out.psi[0].abs());
        let e = m.energy(&out.state.q, &out.state.v);
        assert!(e <= 1.01 * e0, "step {n}: {e} vs {e0}");
        s = out.state;
    }
    assert!(max_psi <= 1e-6, "{max_psi}");
}

#[test]
fn drift_series_shapes() {
    let m = bilateral();
    let s = m.initial_state();
    let ggl = drift_series(&m, &s, BilateralScheme::Ggl, &cfg(BilateralScheme::Ggl), 1.0).unwrap();
    assert_eq!(ggl.len(), 10_001);
    assert!(ggl.iter().all(|(_, g)| g.abs() <= 100.0 * 1e-10));
    assert!((ggl.last().unwrap().0 - 1.0).abs() < 1e-12);

    let vel = drift_series(&m, &s, BilateralScheme::Velocity, &cfg(BilateralScheme::Velocity), 5.0).unwrap();
    let (t, g): (Vec<f64>, Vec<f64>) = vel.into_iter().unzip();
    let fit = drift_fit(&t, &g, FitDegree::Linear).unwrap();
    assert!(fit.slope().abs() > 10.0 * fit.slope_std_error());
}

#[test]
fn models_without_constraints_are_rejected() {
    let free = ContactFree(bilateral());
    let s = free.0.initial_state();
    assert!(matches!(
        bilateral_step(&free, &s, BilateralScheme::Velocity, &cfg(BilateralScheme::Velocity)),
        Err(Error::IncompatibleScheme { .. })
    ));
}
