//! Bilateral constraints enforced at position, velocity or acceleration
//! level, or with the GGL pair of multipliers.
//!
//! All four schemes share the explicit-midpoint skeleton of Moreau's rule;
//! only the constraint equation appended to the step differs, so the
//! drift-off behaviour of each index formulation can be compared directly.

use crate::error::{Error, Result};
use crate::model::{GeneralizedState, Matrix, MechanicalModel, Vector};
use crate::step::{
    newton_solve, BilateralScheme, Midpoint, NewtonReport, NewtonSystem, SolverConfig,
    StepOutcome,
};

struct Skeleton<'a> {
    model: &'a dyn MechanicalModel,
    prev: &'a GeneralizedState,
    dt: f64,
    v_free: Vector,
    /// `M_M⁻¹ J_Mᵀ`.
    minv_jt: Matrix,
    jt: Matrix,
    with_psi: bool,
    scheme: BilateralScheme,
}

impl Skeleton<'_> {
    fn nc(&self) -> usize {
        self.jt.ncols()
    }

    fn split(&self, x: &Vector) -> (Vector, Vector) {
        let nc = self.nc();
        let lambda = x.rows(0, nc).into_owned();
        let psi = if self.with_psi {
            x.rows(nc, nc).into_owned()
        } else {
            Vector::zeros(nc)
        };
        (lambda, psi)
    }

    fn advance(&self, lambda: &Vector, psi: &Vector) -> (Vector, Vector) {
        let v = &self.v_free + &self.minv_jt * lambda;
        let q = &self.prev.q + (&v + &self.prev.v) * (0.5 * self.dt) + &self.jt * psi;
        (q, v)
    }
}

impl NewtonSystem for Skeleton<'_> {
    fn residual(&self, x: &Vector) -> Result<Vector> {
        let (lambda, psi) = self.split(x);
        let (q, v) = self.advance(&lambda, &psi);
        Ok(match self.scheme {
            BilateralScheme::Position => self.model.gaps(&q),
            BilateralScheme::Velocity => self.model.gap_jacobian(&q) * v,
            _ => {
                let mut r = Vector::zeros(2 * self.nc());
                r.rows_mut(0, self.nc())
                    .copy_from(&(self.model.gap_jacobian(&q) * &v));
                r.rows_mut(self.nc(), self.nc()).copy_from(&self.model.gaps(&q));
                r
            }
        })
    }

    fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        let nc = self.nc();
        let (lambda, psi) = self.split(x);
        let (q, v) = self.advance(&lambda, &psi);
        let jac = self.model.gap_jacobian(&q);
        let dq_dl = &self.minv_jt * (0.5 * self.dt);
        let dv_dl = &self.minv_jt;
        let jv_q = self.model.gap_jacobian_dq(&q, &v);
        Ok(match self.scheme {
            BilateralScheme::Position => &jac * dq_dl,
            BilateralScheme::Velocity => &jac * dv_dl + &jv_q * dq_dl,
            _ => {
                let mut out = Matrix::zeros(2 * nc, 2 * nc);
                out.view_mut((0, 0), (nc, nc))
                    .copy_from(&(&jac * dv_dl + &jv_q * &dq_dl));
                out.view_mut((0, nc), (nc, nc)).copy_from(&(&jv_q * &self.jt));
                out.view_mut((nc, 0), (nc, nc)).copy_from(&(&jac * &dq_dl));
                out.view_mut((nc, nc), (nc, nc)).copy_from(&(&jac * &self.jt));
                out
            }
        })
    }
}

/// One step of the bilateral slider-crank (or any model whose contacts are
/// read as equality constraints) under the chosen constraint level.
///
/// `lambda` holds the velocity-level impulse (for the acceleration scheme
/// the force times `dt`), `psi` the GGL position multiplier. Both are
/// signed.
pub fn bilateral_step(
    model: &dyn MechanicalModel,
    prev: &GeneralizedState,
    scheme: BilateralScheme,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    cfg.validate()?;
    prev.validate(model)?;
    let nc = model.n_contacts();
    if nc == 0 {
        return Err(Error::IncompatibleScheme {
            scheme: "dae",
            reason: "model has no constraints".into(),
        });
    }
    let dt = cfg.dt;
    let mid = Midpoint::new(model, prev, dt)?;
    let jt = mid.jac.transpose();
    let minv_jt = &mid.minv * &jt;
    let delassus = &mid.jac * &minv_jt;
    if delassus.clone().cholesky().is_none() {
        return Err(Error::SingularConstraint);
    }
    let v_free = &prev.v + &mid.minv * (&mid.h * dt);
    let all: Vec<usize> = (0..nc).collect();

    if scheme == BilateralScheme::Acceleration {
        // (J M⁻¹ Jᵀ) λ = -(J M⁻¹ h + J̇ v) at the explicit midpoint.
        let jdot_v = model.gap_jacobian_dq(&mid.q, &prev.v) * &prev.v;
        let rhs = -(&mid.jac * (&mid.minv * &mid.h) + jdot_v);
        let force = delassus.lu().solve(&rhs).ok_or(Error::SingularConstraint)?;
        let v = &v_free + &minv_jt * (&force * dt);
        let q = &prev.q + (&v + &prev.v) * (0.5 * dt);
        return Ok(StepOutcome {
            state: GeneralizedState::new(prev.t + dt, q, v),
            lambda: force * dt,
            psi: Vector::zeros(nc),
            active: all,
            newton: NewtonReport::closed_form(),
        });
    }

    let with_psi = scheme == BilateralScheme::Ggl;
    let sys = Skeleton {
        model,
        prev,
        dt,
        v_free,
        minv_jt,
        jt,
        with_psi,
        scheme,
    };
    let x0 = Vector::zeros(if with_psi { 2 * nc } else { nc });
    let (x, report) = newton_solve(&sys, x0, cfg.newton_tol, cfg.max_iter, false)?;
    let (lambda, psi) = sys.split(&x);
    let (q, v) = sys.advance(&lambda, &psi);
    Ok(StepOutcome {
        state: GeneralizedState::new(prev.t + dt, q, v),
        lambda,
        psi,
        active: all,
        newton: report,
    })
}

/// Constraint value `g(q_n)` over a run of `horizon / dt` steps, including
/// the initial state.
pub fn drift_series(
    model: &dyn MechanicalModel,
    initial: &GeneralizedState,
    scheme: BilateralScheme,
    cfg: &SolverConfig,
    horizon: f64,
) -> Result<Vec<(f64, f64)>> {
    let steps = crate::simulate::step_count(horizon, cfg.dt)?;
    let mut state = initial.clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push((state.t, model.gaps(&state.q)[0]));
    for n in 1..=steps {
        let mut next = bilateral_step(model, &state, scheme, cfg)?.state;
        next.t = initial.t + n as f64 * cfg.dt;
        out.push((next.t, model.gaps(&next.q)[0]));
        state = next;
    }
    Ok(out)
}
