//! Unified implicit GGL timestepping.
//!
//! Per step the unknowns `x = (q_{n+1}, v_{n+1}, Λ_red, Ψ_red)` solve
//!
//! ```text
//! q⁺ - q - (v⁺ + v)/2 dt - J̃ᵀ Ψ                       = 0
//! v⁺ - v - M_M⁻¹ (h̃ dt + J̃ᵀ Λ)                        = 0
//! Λ - prox(Λ - r_v (ġ⁺ + ε ġ))                        = 0
//! Ψ - prox(Ψ - r_p g⁺)                                = 0
//! ```
//!
//! with `J̃ = J((q⁺ + q)/2)`, `h̃ = h((q⁺ + q)/2, (v⁺ + v)/2)`, the mass
//! matrix frozen at the explicit midpoint, and the linearized end-of-step
//! gaps
//!
//! ```text
//! g⁺ = g + J̃ (v⁺ + v)/2 dt + J̃ J̃ᵀ Ψ
//! ġ⁺ = ġ + J̃ M_M⁻¹ (h̃ dt + J̃ᵀ Λ)
//! ```
//!
//! The reference variant drops the last row and the `J̃ᵀΨ` term, keeping
//! only the impact law.

use crate::error::{check_dim, Error, Result};
use crate::explicit::active_below;
use crate::model::{GeneralizedState, Matrix, MechanicalModel, Vector};
use crate::prox::{prox_branch_open, prox_nonneg};
use crate::step::{
    newton_solve, scatter, select, select_rows, Midpoint, NewtonReport, NewtonSystem,
    SolverConfig, StepOutcome,
};

/// Unknowns of one unified step, stacked as `(q, v, Λ_red, Ψ_red)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedUnknowns {
    pub q_next: Vector,
    pub v_next: Vector,
    pub lambda_red: Vector,
    pub psi_red: Vector,
}

impl UnifiedUnknowns {
    /// Initial Newton guess `q = q_n + v_n dt`, `v = v_n`, zero multipliers.
    pub fn initial_guess(prev: &GeneralizedState, dt: f64, n_active: usize) -> Self {
        Self {
            q_next: &prev.q + &prev.v * dt,
            v_next: prev.v.clone(),
            lambda_red: Vector::zeros(n_active),
            psi_red: Vector::zeros(n_active),
        }
    }

    pub fn to_vector(&self) -> Vector {
        let parts = [&self.q_next, &self.v_next, &self.lambda_red, &self.psi_red];
        let n = parts.iter().map(|p| p.len()).sum();
        let mut x = Vector::zeros(n);
        let mut k = 0;
        for p in parts {
            x.rows_mut(k, p.len()).copy_from(p);
            k += p.len();
        }
        x
    }

    /// Splits a stacked vector; `psi_red` is empty when the vector has no
    /// position rows.
    pub fn from_vector(x: &Vector, dof: usize, n_active: usize) -> Result<Self> {
        let with_pos = 2 * dof + 2 * n_active;
        let without = 2 * dof + n_active;
        let n_psi = if x.len() == with_pos {
            n_active
        } else if x.len() == without {
            0
        } else {
            return Err(Error::Dimension {
                what: "unified unknowns",
                expected: with_pos,
                got: x.len(),
            });
        };
        Ok(Self {
            q_next: x.rows(0, dof).into_owned(),
            v_next: x.rows(dof, dof).into_owned(),
            lambda_red: x.rows(2 * dof, n_active).into_owned(),
            psi_red: x.rows(2 * dof + n_active, n_psi).into_owned(),
        })
    }
}

/// Quantities fixed during one step.
struct UnifiedProblem<'a> {
    model: &'a dyn MechanicalModel,
    prev: &'a GeneralizedState,
    dt: f64,
    active: Vec<usize>,
    minv: Matrix,
    eps: Vector,
    r_imp: Vector,
    r_pos: Vector,
    gap_now: Vector,
    gapdot_now: Vector,
    with_position: bool,
}

/// Model evaluations at the implicit midpoint of the current iterate.
struct Implicit {
    q_mid: Vector,
    v_mid: Vector,
    /// Reduced gap Jacobian `J̃_A`.
    jac: Matrix,
    /// `h̃ dt + J̃ᵀ Λ`.
    impulse: Vector,
    g_next: Vector,
    gd_next: Vector,
}

impl<'a> UnifiedProblem<'a> {
    fn new(
        model: &'a dyn MechanicalModel,
        prev: &'a GeneralizedState,
        mid: &Midpoint,
        active: Vec<usize>,
        cfg: &SolverConfig,
        with_position: bool,
    ) -> Self {
        let jac_now = select_rows(&model.gap_jacobian(&prev.q), &active);
        let jac_mid = select_rows(&mid.jac, &active);
        let delassus = &jac_mid * &mid.minv * jac_mid.transpose();
        Self {
            model,
            prev,
            dt: cfg.dt,
            eps: select(&Vector::from_column_slice(model.restitution()), &active),
            r_imp: cfg.impact_weights(&delassus),
            r_pos: cfg.position_weights(active.len()),
            gap_now: select(&model.gaps(&prev.q), &active),
            gapdot_now: jac_now * &prev.v,
            minv: mid.minv.clone(),
            active,
            with_position,
        }
    }

    fn dof(&self) -> usize {
        self.prev.q.len()
    }

    fn n_active(&self) -> usize {
        self.active.len()
    }

    fn size(&self) -> usize {
        2 * self.dof() + if self.with_position { 2 } else { 1 } * self.n_active()
    }

    fn unpack(&self, x: &Vector) -> Result<UnifiedUnknowns> {
        check_dim("unified unknowns", self.size(), x.len())?;
        let mut u = UnifiedUnknowns::from_vector(x, self.dof(), self.n_active())?;
        if !self.with_position {
            u.psi_red = Vector::zeros(self.n_active());
        }
        Ok(u)
    }

    fn implicit(&self, u: &UnifiedUnknowns) -> Result<Implicit> {
        let q_mid = (&u.q_next + &self.prev.q) * 0.5;
        let v_mid = (&u.v_next + &self.prev.v) * 0.5;
        let jac = select_rows(&self.model.gap_jacobian(&q_mid), &self.active);
        let h = self.model.forces(&q_mid, &v_mid);
        if h.iter().chain(jac.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("implicit midpoint model evaluation"));
        }
        let jt = jac.transpose();
        let impulse = &h * self.dt + &jt * &u.lambda_red;
        let g_next = &self.gap_now + &jac * (&v_mid * self.dt) + &jac * (&jt * &u.psi_red);
        let gd_next = &self.gapdot_now + &jac * (&self.minv * &impulse);
        Ok(Implicit {
            q_mid,
            v_mid,
            jac,
            impulse,
            g_next,
            gd_next,
        })
    }

    fn impact_arg(&self, u: &UnifiedUnknowns, im: &Implicit) -> Vector {
        let y = &im.gd_next + self.eps.component_mul(&self.gapdot_now);
        &u.lambda_red - self.r_imp.component_mul(&y)
    }

    fn position_arg(&self, u: &UnifiedUnknowns, im: &Implicit) -> Vector {
        &u.psi_red - self.r_pos.component_mul(&im.g_next)
    }

    fn residual_of(&self, u: &UnifiedUnknowns, im: &Implicit) -> Vector {
        let (n, m) = (self.dof(), self.n_active());
        let jt = im.jac.transpose();
        let mut row1 = &u.q_next - &self.prev.q - &im.v_mid * self.dt;
        if self.with_position {
            row1 -= &jt * &u.psi_red;
        }
        let row2 = &u.v_next - &self.prev.v - &self.minv * &im.impulse;
        let row3 = &u.lambda_red - self.impact_arg(u, im).map(prox_nonneg);
        let mut res = Vector::zeros(self.size());
        res.rows_mut(0, n).copy_from(&row1);
        res.rows_mut(n, n).copy_from(&row2);
        res.rows_mut(2 * n, m).copy_from(&row3);
        if self.with_position {
            let row4 = &u.psi_red - self.position_arg(u, im).map(prox_nonneg);
            res.rows_mut(2 * n + m, m).copy_from(&row4);
        }
        res
    }

    fn jacobian_of(&self, u: &UnifiedUnknowns, im: &Implicit) -> Matrix {
        let (n, m) = (self.dof(), self.n_active());
        let nc = self.model.n_contacts();
        let dt = self.dt;
        let jac = &im.jac;
        let jt = jac.transpose();
        let (dh_dq, dh_dv) = self.model.force_derivatives(&im.q_mid, &im.v_mid);
        let lambda_full = scatter(&u.lambda_red, &self.active, nc);
        let psi_full = scatter(&u.psi_red, &self.active, nc);
        // Midpoint chain rule: ∂(·)(q̄)/∂q⁺ = ½ ∂(·)/∂q̄, likewise for v.
        let curv_lambda = self.model.weighted_gap_hessian(&im.q_mid, &lambda_full) * 0.5;
        let curv_psi = self.model.weighted_gap_hessian(&im.q_mid, &psi_full) * 0.5;
        let dimpulse_dq = &dh_dq * (0.5 * dt) + &curv_lambda;
        let dimpulse_dv = &dh_dv * (0.5 * dt);
        let minv_jt = &self.minv * &jt;

        let (iq, iv, il, ip) = (0, n, 2 * n, 2 * n + m);
        let mut out = Matrix::zeros(self.size(), self.size());
        let eye = Matrix::identity(n, n);

        // Row 1: position update.
        let mut b = eye.clone();
        if self.with_position {
            b -= &curv_psi;
            out.view_mut((iq, ip), (n, m)).copy_from(&(-&jt));
        }
        out.view_mut((iq, iq), (n, n)).copy_from(&b);
        out.view_mut((iq, iv), (n, n)).copy_from(&(&eye * (-0.5 * dt)));

        // Row 2: velocity update.
        out.view_mut((iv, iq), (n, n))
            .copy_from(&(-(&self.minv * &dimpulse_dq)));
        out.view_mut((iv, iv), (n, n))
            .copy_from(&(&eye - &self.minv * &dimpulse_dv));
        out.view_mut((iv, il), (n, m)).copy_from(&(-&minv_jt));

        if m == 0 {
            return out;
        }

        // Row 3: impact law.
        let w = &self.minv * &im.impulse;
        let dgd_dq = select_rows(&self.model.gap_jacobian_dq(&im.q_mid, &w), &self.active) * 0.5
            + jac * (&self.minv * &dimpulse_dq);
        let dgd_dv = jac * (&self.minv * &dimpulse_dv);
        let dgd_dl = jac * &minv_jt;
        let arg3 = self.impact_arg(u, im);
        for i in 0..m {
            let row = il + i;
            if prox_branch_open(arg3[i]) {
                let r = self.r_imp[i];
                for j in 0..n {
                    out[(row, iq + j)] = r * dgd_dq[(i, j)];
                    out[(row, iv + j)] = r * dgd_dv[(i, j)];
                }
                for j in 0..m {
                    out[(row, il + j)] = r * dgd_dl[(i, j)];
                }
            } else {
                out[(row, il + i)] = 1.0;
            }
        }

        if !self.with_position {
            return out;
        }

        // Row 4: non-penetration.
        let disp = &im.v_mid * dt + &jt * &u.psi_red;
        let dg_dq = select_rows(&self.model.gap_jacobian_dq(&im.q_mid, &disp), &self.active) * 0.5
            + jac * &curv_psi;
        let dg_dv = jac * (0.5 * dt);
        let dg_dp = jac * &jt;
        let arg4 = self.position_arg(u, im);
        for i in 0..m {
            let row = ip + i;
            if prox_branch_open(arg4[i]) {
                let r = self.r_pos[i];
                for j in 0..n {
                    out[(row, iq + j)] = r * dg_dq[(i, j)];
                    out[(row, iv + j)] = r * dg_dv[(i, j)];
                }
                for j in 0..m {
                    out[(row, ip + j)] = r * dg_dp[(i, j)];
                }
            } else {
                out[(row, ip + i)] = 1.0;
            }
        }
        out
    }
}

impl NewtonSystem for UnifiedProblem<'_> {
    fn residual(&self, x: &Vector) -> Result<Vector> {
        let u = self.unpack(x)?;
        let im = self.implicit(&u)?;
        Ok(self.residual_of(&u, &im))
    }

    fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        let u = self.unpack(x)?;
        let im = self.implicit(&u)?;
        Ok(self.jacobian_of(&u, &im))
    }
}

fn prepare(
    model: &dyn MechanicalModel,
    prev: &GeneralizedState,
    cfg: &SolverConfig,
) -> Result<Midpoint> {
    cfg.validate()?;
    prev.validate(model)?;
    Midpoint::new(model, prev, cfg.dt)
}

fn check_active(model: &dyn MechanicalModel, active: &[usize]) -> Result<()> {
    let nc = model.n_contacts();
    if active.iter().any(|&i| i >= nc) || active.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            name: "active",
            reason: format!("active set {active:?} must be sorted indices below {nc}"),
        });
    }
    Ok(())
}

fn vector_of(x: &UnifiedUnknowns, with_position: bool) -> Vector {
    if with_position {
        x.to_vector()
    } else {
        UnifiedUnknowns {
            psi_red: Vector::zeros(0),
            ..x.clone()
        }
        .to_vector()
    }
}

/// Stacked residual of the unified system for a fixed active set.
pub fn assemble_residual(
    model: &dyn MechanicalModel,
    prev: &GeneralizedState,
    x: &UnifiedUnknowns,
    active: &[usize],
    cfg: &SolverConfig,
) -> Result<Vector> {
    let mid = prepare(model, prev, cfg)?;
    check_active(model, active)?;
    let p = UnifiedProblem::new(model, prev, &mid, active.to_vec(), cfg, true);
    p.residual(&vector_of(x, true))
}

/// Analytic Jacobian of [`assemble_residual`] with respect to the stacked
/// unknowns.
pub fn assemble_jacobian(
    model: &dyn MechanicalModel,
    prev: &GeneralizedState,
    x: &UnifiedUnknowns,
    active: &[usize],
    cfg: &SolverConfig,
) -> Result<Matrix> {
    let mid = prepare(model, prev, cfg)?;
    check_active(model, active)?;
    let p = UnifiedProblem::new(model, prev, &mid, active.to_vec(), cfg, true);
    let jac = p.jacobian(&vector_of(x, true))?;
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("unified Jacobian"));
    }
    Ok(jac)
}

/// Reduced-residual and Jacobian of the reference variant (no position
/// row, no `J̃ᵀΨ` term). `x.psi_red` is ignored.
pub fn assemble_reference_residual(
    model: &dyn MechanicalModel,
    prev: &GeneralizedState,
    x: &UnifiedUnknowns,
    active: &[usize],
    cfg: &SolverConfig,
) -> Result<(Vector, Matrix)> {
    let mid = prepare(model, prev, cfg)?;
    check_active(model, active)?;
    let p = UnifiedProblem::new(model, prev, &mid, active.to_vec(), cfg, false);
    let xv = vector_of(x, false);
    Ok((p.residual(&xv)?, p.jacobian(&xv)?))
}

/// Linearized end-of-step gaps and gap velocities on the active set.
pub fn gap_linearization(
    model: &dyn MechanicalModel,
    prev: &GeneralizedState,
    x: &UnifiedUnknowns,
    active: &[usize],
    cfg: &SolverConfig,
) -> Result<(Vector, Vector)> {
    let mid = prepare(model, prev, cfg)?;
    check_active(model, active)?;
    let p = UnifiedProblem::new(model, prev, &mid, active.to_vec(), cfg, true);
    let u = p.unpack(&x.to_vector())?;
    let im = p.implicit(&u)?;
    Ok((im.g_next, im.gd_next))
}

/// Comparison of the analytic Jacobian with central differences of the
/// residual.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianCheck {
    pub analytic: Matrix,
    pub finite_difference: Matrix,
    /// Largest entry error relative to `max(|F_ij|, 1e-4 · max_k |F_ik|)`;
    /// the floor keeps rounding noise on near-zero entries out of the ratio.
    pub max_rel_error: f64,
    /// Some prox argument changed sign within the difference stencil, so the
    /// finite-difference column straddles a kink and is not comparable.
    pub crosses_kink: bool,
}

/// Checks [`assemble_jacobian`] against central differences with step
/// `1e-6 · max(1, |x_j|)` per column.
pub fn check_jacobian(
    model: &dyn MechanicalModel,
    prev: &GeneralizedState,
    x: &UnifiedUnknowns,
    active: &[usize],
    cfg: &SolverConfig,
) -> Result<JacobianCheck> {
    let mid = prepare(model, prev, cfg)?;
    check_active(model, active)?;
    let p = UnifiedProblem::new(model, prev, &mid, active.to_vec(), cfg, true);
    let x0 = x.to_vector();
    let analytic = p.jacobian(&x0)?;
    let signs = |xv: &Vector| -> Result<Vec<bool>> {
        let u = p.unpack(xv)?;
        let im = p.implicit(&u)?;
        Ok(p.impact_arg(&u, &im)
            .iter()
            .chain(p.position_arg(&u, &im).iter())
            .map(|a| prox_branch_open(*a))
            .collect())
    };
    let base = signs(&x0)?;
    let n = x0.len();
    let mut fd = Matrix::zeros(n, n);
    let mut crosses_kink = false;
    for j in 0..n {
        let h = 1e-6 * x0[j].abs().max(1.0);
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += h;
        xm[j] -= h;
        crosses_kink |= signs(&xp)? != base || signs(&xm)? != base;
        let col = (p.residual(&xp)? - p.residual(&xm)?) / (2.0 * h);
        fd.set_column(j, &col);
    }
    let mut max_rel_error = 0.0f64;
    for i in 0..n {
        let row_scale = fd.row(i).amax();
        for j in 0..n {
            let denom = fd[(i, j)].abs().max(1e-4 * row_scale).max(f64::MIN_POSITIVE);
            max_rel_error = max_rel_error.max((analytic[(i, j)] - fd[(i, j)]).abs() / denom);
        }
    }
    Ok(JacobianCheck {
        analytic,
        finite_difference: fd,
        max_rel_error,
        crosses_kink,
    })
}

fn solve_variant(
    model: &dyn MechanicalModel,
    prev: &GeneralizedState,
    cfg: &SolverConfig,
    with_position: bool,
) -> Result<StepOutcome> {
    let mid = prepare(model, prev, cfg)?;
    let nc = model.n_contacts();
    let mut active = active_below(&mid.gaps, cfg.active_tol);
    let mut total: Option<NewtonReport> = None;
    loop {
        let p = UnifiedProblem::new(model, prev, &mid, active.clone(), cfg, with_position);
        let x0 = vector_of(
            &UnifiedUnknowns::initial_guess(prev, cfg.dt, active.len()),
            with_position,
        );
        let (x, report) = newton_solve(&p, x0, cfg.newton_tol, cfg.max_iter, true)?;
        let report = match total {
            Some(t) => NewtonReport {
                iterations: t.iterations + report.iterations,
                ..report
            },
            None => report,
        };
        total = Some(report);
        let u = p.unpack(&x)?;
        if with_position && cfg.end_of_step_activation && report.converged {
            let gaps = model.gaps(&u.q_next);
            let late: Vec<usize> = (0..nc)
                .filter(|i| !active.contains(i) && gaps[*i] < 0.0)
                .collect();
            if !late.is_empty() {
                active.extend(late);
                active.sort_unstable();
                continue;
            }
        }
        return Ok(StepOutcome {
            state: GeneralizedState::new(prev.t + cfg.dt, u.q_next, u.v_next),
            lambda: scatter(&u.lambda_red, &active, nc),
            psi: scatter(&u.psi_red, &active, nc),
            active,
            newton: report,
        });
    }
}

/// One step of the unified implicit GGL scheme.
pub fn unified_step(
    model: &dyn MechanicalModel,
    prev: &GeneralizedState,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    solve_variant(model, prev, cfg, true)
}

/// One step of the unified scheme restricted to the impact law.
pub fn reference_step(
    model: &dyn MechanicalModel,
    prev: &GeneralizedState,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    solve_variant(model, prev, cfg, false)
}
