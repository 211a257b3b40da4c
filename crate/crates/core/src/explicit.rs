//! Moreau's midpoint rule and its decoupled GGL extension.
//!
//! Both schemes evaluate `M`, `h` and the gap Jacobian once per step at the
//! explicit midpoint `q_n + dt/2 v_n`. The impact law is solved on velocity
//! level for the contacts whose midpoint gap is negative; the decoupled
//! variant then projects the position forecast back onto `g >= 0` along
//! `J_Mᵀ`.

use crate::error::Result;
use crate::model::{GeneralizedState, Matrix, MechanicalModel, Vector};
use crate::prox::{prox_branch_open, prox_nonneg};
use crate::step::{
    newton_solve, scatter, select, select_rows, Midpoint, NewtonReport, NewtonSystem,
    SolverConfig, StepOutcome,
};

/// Contacts whose gap at the explicit midpoint is below `active_tol`.
pub fn predict_active_set(
    model: &dyn MechanicalModel,
    state: &GeneralizedState,
    dt: f64,
    active_tol: f64,
) -> Vec<usize> {
    let q_mid = &state.q + &state.v * (0.5 * dt);
    active_below(&model.gaps(&q_mid), active_tol)
}

pub(crate) fn active_below(gaps: &Vector, tol: f64) -> Vec<usize> {
    gaps.iter()
        .enumerate()
        .filter(|(_, g)| **g < tol)
        .map(|(i, _)| i)
        .collect()
}

/// `Λ - prox(Λ - r (b + G Λ))` for a fixed Delassus matrix `G`.
struct ImpactLcp<'a> {
    delassus: &'a Matrix,
    offset: &'a Vector,
    r: &'a Vector,
}

impl ImpactLcp<'_> {
    fn arg(&self, lambda: &Vector) -> Vector {
        let y = self.offset + self.delassus * lambda;
        lambda - self.r.component_mul(&y)
    }
}

impl NewtonSystem for ImpactLcp<'_> {
    fn residual(&self, x: &Vector) -> Result<Vector> {
        Ok(x - self.arg(x).map(prox_nonneg))
    }

    fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        let arg = self.arg(x);
        let n = x.len();
        Ok(Matrix::from_fn(n, n, |i, j| {
            if prox_branch_open(arg[i]) {
                self.r[i] * self.delassus[(i, j)]
            } else if i == j {
                1.0
            } else {
                0.0
            }
        }))
    }
}

/// Velocity stage shared by Moreau's rule and the decoupled scheme.
struct VelocityStage {
    mid: Midpoint,
    active: Vec<usize>,
    v_next: Vector,
    lambda: Vector,
    report: NewtonReport,
}

fn velocity_stage(
    model: &dyn MechanicalModel,
    state: &GeneralizedState,
    cfg: &SolverConfig,
) -> Result<VelocityStage> {
    cfg.validate()?;
    state.validate(model)?;
    let dt = cfg.dt;
    let mid = Midpoint::new(model, state, dt)?;
    let active = active_below(&mid.gaps, cfg.active_tol);
    let v_free = &state.v + &mid.minv * (&mid.h * dt);
    let nc = model.n_contacts();
    if active.is_empty() {
        return Ok(VelocityStage {
            mid,
            active,
            v_next: v_free,
            lambda: Vector::zeros(nc),
            report: NewtonReport::closed_form(),
        });
    }
    let jac = select_rows(&mid.jac, &active);
    let jt = jac.transpose();
    let delassus = &jac * &mid.minv * &jt;
    let eps = select(&Vector::from_column_slice(model.restitution()), &active);
    // Both gap velocities use the midpoint Jacobian, so ġ_{n+1} is affine in Λ.
    let gd_now = &jac * &state.v;
    let offset = &jac * &v_free + eps.component_mul(&gd_now);
    let r = cfg.impact_weights(&delassus);
    let lcp = ImpactLcp {
        delassus: &delassus,
        offset: &offset,
        r: &r,
    };
    let (lambda_red, report) =
        newton_solve(&lcp, Vector::zeros(active.len()), cfg.newton_tol, cfg.max_iter, false)?;
    let v_next = v_free + &mid.minv * (&jt * &lambda_red);
    Ok(VelocityStage {
        lambda: scatter(&lambda_red, &active, nc),
        mid,
        active,
        v_next,
        report,
    })
}

/// One step of Moreau's midpoint rule.
pub fn moreau_step(
    model: &dyn MechanicalModel,
    state: &GeneralizedState,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    let stage = velocity_stage(model, state, cfg)?;
    let q_next = &state.q + (&stage.v_next + &state.v) * (0.5 * cfg.dt);
    Ok(StepOutcome {
        state: GeneralizedState::new(state.t + cfg.dt, q_next, stage.v_next),
        lambda: stage.lambda,
        psi: Vector::zeros(model.n_contacts()),
        active: stage.active,
        newton: stage.report,
    })
}

/// `Ψ - prox(Ψ - r g(q̄ + J_Mᵀ Ψ))` on the active contacts.
struct PositionProjection<'a> {
    model: &'a dyn MechanicalModel,
    forecast: &'a Vector,
    jt_mid: &'a Matrix,
    active: &'a [usize],
    r: &'a Vector,
}

impl PositionProjection<'_> {
    fn position(&self, psi: &Vector) -> Vector {
        self.forecast + self.jt_mid * psi
    }
}

impl NewtonSystem for PositionProjection<'_> {
    fn residual(&self, x: &Vector) -> Result<Vector> {
        let g = select(&self.model.gaps(&self.position(x)), self.active);
        Ok(x - (x - self.r.component_mul(&g)).map(prox_nonneg))
    }

    fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        let q = self.position(x);
        let g = select(&self.model.gaps(&q), self.active);
        let dg = select_rows(&self.model.gap_jacobian(&q), self.active) * self.jt_mid;
        let n = x.len();
        Ok(Matrix::from_fn(n, n, |i, j| {
            if prox_branch_open(x[i] - self.r[i] * g[i]) {
                self.r[i] * dg[(i, j)]
            } else if i == j {
                1.0
            } else {
                0.0
            }
        }))
    }
}

/// Moreau's velocity update followed by a projection of the explicit
/// position forecast onto the non-penetration constraint.
pub fn decoupled_ggl_step(
    model: &dyn MechanicalModel,
    state: &GeneralizedState,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    let stage = velocity_stage(model, state, cfg)?;
    let forecast = &state.q + (&stage.v_next + &state.v) * (0.5 * cfg.dt);
    let nc = model.n_contacts();
    if stage.active.is_empty() {
        return Ok(StepOutcome {
            state: GeneralizedState::new(state.t + cfg.dt, forecast, stage.v_next),
            lambda: stage.lambda,
            psi: Vector::zeros(nc),
            active: stage.active,
            newton: stage.report,
        });
    }
    let jt_mid = select_rows(&stage.mid.jac, &stage.active).transpose();
    let r = cfg.position_weights(stage.active.len());
    let proj = PositionProjection {
        model,
        forecast: &forecast,
        jt_mid: &jt_mid,
        active: &stage.active,
        r: &r,
    };
    let (psi, report) = newton_solve(
        &proj,
        Vector::zeros(stage.active.len()),
        cfg.newton_tol,
        cfg.max_iter,
        false,
    )?;
    let q_next = proj.position(&psi);
    Ok(StepOutcome {
        state: GeneralizedState::new(state.t + cfg.dt, q_next, stage.v_next),
        lambda: stage.lambda,
        psi: scatter(&psi, &stage.active, nc),
        active: stage.active,
        newton: stage.report.merge(report),
    })
}
