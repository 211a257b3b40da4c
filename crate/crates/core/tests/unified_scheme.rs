mod common;

use nonsmooth_ggl::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ball() -> BouncingBall {
    BouncingBall::new(BouncingBallParams::default()).unwrap()
}

fn slider() -> UnilateralSliderCrank {
    UnilateralSliderCrank::new(SliderCrankParams::default(), &[0.1]).unwrap()
}

fn vec(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

#[test]
fn empty_active_set_reduces_to_implicit_midpoint() {
    // For the ball the implicit midpoint rule is exact.
    let b = ball();
    let dt = 1e-3;
    let cfg = SolverConfig::new(Scheme::GglUnified, dt);
    let prev = GeneralizedState::from_slices(0.0, &[1.0], &[0.5]);
    let x = UnifiedUnknowns {
        q_next: vec(&[1.0 + 0.5 * dt - 0.5 * 9.81 * dt * dt]),
        v_next: vec(&[0.5 - 9.81 * dt]),
        lambda_red: vec(&[]),
        psi_red: vec(&[]),
    };
    let r = assemble_residual(&b, &prev, &x, &[], &cfg).unwrap();
    assert_eq!(r.len(), 2);
    assert!(r.amax() <= cfg.newton_tol);
    let out = unified_step(&b, &prev, &cfg).unwrap();
    assert!((out.state.q[0] - x.q_next[0]).abs() < 1e-14);
    assert!((out.state.v[0] - x.v_next[0]).abs() < 1e-14);
}

#[test]
fn moreau_solution_nearly_solves_the_free_unified_system() {
    let sc = ContactFree(slider());
    let prev = sc.0.initial_state();
    for dt in [1e-4, 5e-5] {
        let cfg = SolverConfig::new(Scheme::GglUnified, dt);
        let m = moreau_step(&sc, &prev, &SolverConfig::new(Scheme::Moreau, dt)).unwrap();
        let x = UnifiedUnknowns {
            q_next: m.state.q.clone(),
            v_next: m.state.v.clone(),
            lambda_red: vec(&[]),
            psi_red: vec(&[]),
        };
        let r = assemble_residual(&sc, &prev, &x, &[], &cfg).unwrap();
        // Only the h evaluation point differs: O(dt²) in velocity units.
        let bound = 50.0 * dt * dt * 150.0f64.powi(3);
        assert!(r.amax() < bound, "dt {dt}: {} vs {bound}", r.amax());
    }
}

#[test]
fn resting_ball_is_an_exact_equilibrium() {
    let b = ball();
    let dt = 1e-4;
    let cfg = SolverConfig::new(Scheme::GglUnified, dt);
    let prev = GeneralizedState::from_slices(0.0, &[0.0], &[0.0]);
    let x = UnifiedUnknowns {
        q_next: vec(&[0.0]),
        v_next: vec(&[0.0]),
        lambda_red: vec(&[9.81 * dt]),
        psi_red: vec(&[0.0]),
    };
    let r = assemble_residual(&b, &prev, &x, &[0], &cfg).unwrap();
    assert!(r.amax() < 1e-15, "{r}");

    let mut s = prev;
    for _ in 0..1000 {
        let out = unified_step(&b, &s, &cfg).unwrap();
        assert!(out.converged());
        assert!(out.state.q[0].abs() < 1e-12);
        assert!((out.lambda[0] - 9.81 * dt).abs() < 1e-12);
        assert!(out.psi[0].abs() < 1e-12);
        s = out.state;
    }
}

#[test]
fn reference_variant_lets_a_resting_ball_sink() {
    let b = BouncingBall::new(BouncingBallParams {
        eps: 0.0,
        ..Default::default()
    })
    .unwrap();
    let cfg = SolverConfig::new(Scheme::GglReference, 1e-4);
    // Start slightly penetrated with a downward velocity: the impact law
    // stops the motion but nothing restores the position.
    let mut s = GeneralizedState::from_slices(0.0, &[-1e-6], &[-1e-3]);
    for _ in 0..100 {
        let out = reference_step(&b, &s, &cfg).unwrap();
        assert!(out.state.q[0] <= s.q[0] + 1e-15);
        s = out.state;
    }
    assert!(s.q[0] < 0.0);
    let u = unified_step(&b, &s, &SolverConfig::new(Scheme::GglUnified, 1e-4)).unwrap();
    assert!(u.state.q[0].abs() < 1e-12);
}

#[test]
fn gap_linearization_examples() {
    let b = ball();
    let dt = 1e-3;
    let cfg = SolverConfig::new(Scheme::GglUnified, dt);
    let prev = GeneralizedState::from_slices(0.0, &[0.2], &[-0.4]);
    let x = UnifiedUnknowns {
        q_next: vec(&[0.1998]),
        v_next: vec(&[-0.3]),
        lambda_red: vec(&[0.0]),
        psi_red: vec(&[2e-5]),
    };
    let (g, _) = gap_linearization(&b, &prev, &x, &[0], &cfg).unwrap();
    assert!((g[0] - (0.2 + (-0.3 - 0.4) * 0.5 * dt + 2e-5)).abs() < 1e-16);

    // Zero multipliers, constant velocity: pure drift prediction.
    let sc = slider();
    let prev = GeneralizedState::from_slices(0.0, &[0.1, -0.05, 0.0], &[10.0, -5.0, 0.0]);
    let x = UnifiedUnknowns {
        q_next: &prev.q + &prev.v * dt,
        v_next: prev.v.clone(),
        lambda_red: Vector::zeros(4),
        psi_red: Vector::zeros(4),
    };
    let all = [0, 1, 2, 3];
    let (g, _) = gap_linearization(&sc, &prev, &x, &all, &cfg).unwrap();
    let q_mid = (&x.q_next + &prev.q) * 0.5;
    let expect = sc.gaps(&prev.q) + sc.gap_jacobian(&q_mid) * (&prev.v * dt);
    assert!((g - expect).amax() < 1e-16);
}

#[test]
fn gap_linearization_is_second_order_accurate() {
    let sc = slider();
    let all = [0, 1, 2, 3];
    let mut errs = Vec::new();
    for dt in [1e-4, 5e-5] {
        let cfg = SolverConfig::new(Scheme::GglUnified, dt);
        let mut worst = 0.0f64;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let q = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.2..0.2), rng.gen_range(-0.02..0.02)];
            let v = [rng.gen_range(-20.0..20.0), rng.gen_range(-10.0..10.0), rng.gen_range(-1.0..1.0)];
            let prev = GeneralizedState::from_slices(0.0, &q, &v);
            // A consistent free step, then compare against the exact gaps.
            let out = unified_step(&ContactFree(slider()), &prev, &cfg).unwrap();
            let x = UnifiedUnknowns {
                q_next: out.state.q.clone(),
                v_next: out.state.v.clone(),
                lambda_red: Vector::zeros(4),
                psi_red: Vector::zeros(4),
            };
            let (g, _) = gap_linearization(&sc, &prev, &x, &all, &cfg).unwrap();
            worst = worst.max((g - sc.gaps(&out.state.q)).amax());
        }
        errs.push(worst);
    }
    assert!(errs[0] < 1e-6, "{errs:?}");
    // Local error O(dt³) per step for the midpoint chord.
    assert!(errs[0] / errs[1] > 6.0, "{errs:?}");
}

struct Sample {
    prev: GeneralizedState,
    x: UnifiedUnknowns,
    active: Vec<usize>,
}

fn sample(model: &dyn MechanicalModel, rng: &mut ChaCha8Rng, dt: f64) -> Sample {
    let n = model.dof();
    let nc = model.n_contacts();
    let (q, v): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![rng.gen_range(-1e-3..1e-3)], vec![rng.gen_range(-2.0..2.0)]),
        2 => (
            vec![rng.gen_range(-3.0..3.0), rng.gen_range(-0.5..0.5)],
            vec![rng.gen_range(-200.0..200.0), rng.gen_range(-100.0..100.0)],
        ),
        _ => (
            vec![rng.gen_range(-3.0..3.0), rng.gen_range(-0.5..0.5), rng.gen_range(-0.05..0.05)],
            vec![rng.gen_range(-200.0..200.0), rng.gen_range(-100.0..100.0), rng.gen_range(-10.0..10.0)],
        ),
    };
    let prev = GeneralizedState::from_slices(0.0, &q, &v);
    let mut active: Vec<usize> = (0..nc).filter(|_| rng.gen_bool(0.6)).collect();
    if active.is_empty() {
        active.push(rng.gen_range(0..nc));
    }
    let m = active.len();
    let q_next = Vector::from_fn(n, |i, _| q[i] + v[i] * dt + rng.gen_range(-1e-6..1e-6));
    let v_next = Vector::from_fn(n, |i, _| v[i] + rng.gen_range(-1.0..1.0));
    let lambda_red = Vector::from_fn(m, |_, _| rng.gen_range(0.0..1e-3));
    let psi_red = Vector::from_fn(m, |_, _| rng.gen_range(0.0..1e-5));
    Sample {
        prev,
        x: UnifiedUnknowns {
            q_next,
            v_next,
            lambda_red,
            psi_red,
        },
        active,
    }
}

fn jacobian_oracle(model: &dyn MechanicalModel, seed: u64, r_mode: RMode) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = SolverConfig::new(Scheme::GglUnified, 1e-5);
    cfg.r_mode = r_mode;
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 50 {
        let s = sample(model, &mut rng, cfg.dt);
        let c = check_jacobian(model, &s.prev, &s.x, &s.active, &cfg).unwrap();
        if c.crosses_kink {
            continue;
        }
        worst = worst.max(c.max_rel_error);
        checked += 1;
    }
    assert!(worst <= 1e-5, "{}: {worst}", model.name());
}

#[test]
fn analytic_jacobian_matches_finite_differences() {
    jacobian_oracle(&slider(), 1, RMode::Delassus);
    jacobian_oracle(&BilateralSliderCrank::new(SliderCrankParams::default()).unwrap(), 2, RMode::Delassus);
    jacobian_oracle(&ball(), 3, RMode::Delassus);
    jacobian_oracle(&slider(), 4, RMode::Unit);
}

#[test]
fn jacobian_limit_cases() {
    let sc = slider();
    let prev = sc.initial_state();
    let dt = 1e-9;
    let cfg = SolverConfig::new(Scheme::GglUnified, dt);
    let x = UnifiedUnknowns::initial_guess(&prev, dt, 0);
    let j = assemble_jacobian(&sc, &prev, &x, &[], &cfg).unwrap();
    assert_eq!(j.nrows(), 6);
    assert!((j - Matrix::identity(6, 6)).amax() < 1e-3);

    // Strongly separating candidate: every prox argument is negative.
    let cfg = SolverConfig::new(Scheme::GglUnified, 1e-5);
    let active = [0, 1];
    let mut state = prev.clone();
    state.q[0] = -0.01; // moves the slider up, both lower gaps widen
    state.v[0] = -100.0;
    let x = UnifiedUnknowns {
        q_next: &state.q + &state.v * 1e-5,
        v_next: state.v.clone(),
        lambda_red: Vector::zeros(2),
        psi_red: Vector::zeros(2),
    };
    let j = assemble_jacobian(&sc, &state, &x, &active, &cfg).unwrap();
    let n = 3;
    for r in 0..4 {
        let row = 2 * n + r;
        for c in 0..j.ncols() {
            let expect = if c == row { 1.0 } else { 0.0 };
            assert_eq!(j[(row, c)], expect, "row {row} col {c}");
        }
    }
}

#[test]
fn unified_slider_steps_respect_both_laws() {
    let sc = slider();
    let cfg = SolverConfig::new(Scheme::GglUnified, 1e-5);
    let mut s = sc.initial_state();
    let mut closed = 0;
    for _ in 0..20_000 {
        let out = unified_step(&sc, &s, &cfg).unwrap();
        assert!(out.converged());
        let g = sc.gaps(&out.state.q);
        for &i in &out.active {
            assert!(g[i] >= -10.0 * cfg.newton_tol, "g[{i}] = {}", g[i]);
            assert!(out.lambda[i] >= 0.0 && out.psi[i] >= 0.0);
        }
        for i in 0..4 {
            if !out.active.contains(&i) {
                assert_eq!((out.lambda[i], out.psi[i]), (0.0, 0.0));
            }
        }
        closed += usize::from(!out.active.is_empty());
        s = out.state;
    }
    assert!(closed > 0);
}

#[test]
fn frozen_active_set_can_penetrate() {
    let b = ball();
    let mut cfg = SolverConfig::new(Scheme::GglUnified, 1e-3);
    cfg.end_of_step_activation = false;
    // Midpoint gap positive, end-of-step gap negative.
    let prev = GeneralizedState::from_slices(0.0, &[6e-4], &[-1.0]);
    let frozen = unified_step(&b, &prev, &cfg).unwrap();
    assert!(frozen.active.is_empty());
    assert!(frozen.state.q[0] < 0.0);
    cfg.end_of_step_activation = true;
    let late = unified_step(&b, &prev, &cfg).unwrap();
    assert_eq!(late.active, vec![0]);
    assert!(late.state.q[0] >= -1e-12);
}

#[test]
fn contact_free_unified_step_conserves_energy() {
    let sc = ContactFree(slider());
    let prev = sc.0.initial_state();
    let cfg = SolverConfig::new(Scheme::GglUnified, 1e-6);
    let out = unified_step(&sc, &prev, &cfg).unwrap();
    let e0 = sc.energy(&prev.q, &prev.v);
    let e1 = sc.energy(&out.state.q, &out.state.v);
    assert!((e1 - e0).abs() <= 1e-10 * e0, "{}", (e1 - e0).abs() / e0);
}

#[test]
fn unified_ball_first_bounce() {
    let b = ball();
    let cfg = SolverConfig::new(Scheme::GglUnified, 1e-4);
    let mut s = b.initial_state();
    let mut pre = None;
    for _ in 0..3000 {
        let out = unified_step(&b, &s, &cfg).unwrap();
        if s.v[0] < 0.0 && out.state.v[0] > 0.0 {
            pre = Some((s.v[0], out.state.v[0]));
            break;
        }
        s = out.state;
    }
    let (v_in, v_out) = pre.expect("no bounce");
    assert!((-v_in / (2.0f64 * 9.81 * 0.1).sqrt() - 1.0).abs() < 0.01);
    assert!((v_out / -v_in - 0.5).abs() < 0.01);
}

#[test]
fn unknowns_round_trip_and_dimension_checks() {
    let u = UnifiedUnknowns {
        q_next: vec(&[1.0, 2.0]),
        v_next: vec(&[3.0, 4.0]),
        lambda_red: vec(&[5.0]),
        psi_red: vec(&[6.0]),
    };
    let x = u.to_vector();
    assert_eq!(x.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    assert_eq!(UnifiedUnknowns::from_vector(&x, 2, 1).unwrap(), u);
    assert!(UnifiedUnknowns::from_vector(&x, 2, 3).is_err());
    let b = ball();
    let cfg = SolverConfig::default();
    let prev = b.initial_state();
    let bad = UnifiedUnknowns::initial_guess(&prev, 1e-5, 1);
    assert!(assemble_residual(&b, &prev, &bad, &[1], &cfg).is_err());
    assert!(assemble_residual(&b, &prev, &bad, &[], &cfg).is_err());
}
