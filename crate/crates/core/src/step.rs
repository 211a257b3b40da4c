//! Configuration, results and the semismooth Newton driver shared by all
//! timestepping schemes.

use crate::error::{Error, Result};
use crate::model::{central_difference, GeneralizedState, Matrix, MechanicalModel, Vector};

/// Constraint level enforced by the bilateral schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BilateralScheme {
    /// `g(q_{n+1}) = 0` (index 3).
    Position,
    /// `ġ_{n+1} = 0` (index 2).
    Velocity,
    /// `g̈ = 0` (index 1).
    Acceleration,
    /// Position and velocity level together, two multipliers.
    Ggl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Moreau,
    GglDecoupled,
    GglUnified,
    /// Unified scheme without the position-level row.
    GglReference,
    Dae(BilateralScheme),
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Moreau,
        Scheme::GglDecoupled,
        Scheme::GglUnified,
        Scheme::GglReference,
        Scheme::Dae(BilateralScheme::Position),
        Scheme::Dae(BilateralScheme::Velocity),
        Scheme::Dae(BilateralScheme::Acceleration),
        Scheme::Dae(BilateralScheme::Ggl),
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Moreau => "moreau",
            Scheme::GglDecoupled => "ggl_decoupled",
            Scheme::GglUnified => "ggl_unified",
            Scheme::GglReference => "ggl_reference",
            Scheme::Dae(BilateralScheme::Position) => "dae_pos",
            Scheme::Dae(BilateralScheme::Velocity) => "dae_vel",
            Scheme::Dae(BilateralScheme::Acceleration) => "dae_acc",
            Scheme::Dae(BilateralScheme::Ggl) => "dae_ggl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.as_str() == s)
    }

    pub fn is_bilateral(&self) -> bool {
        matches!(self, Scheme::Dae(_))
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the prox weights `r` are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RMode {
    /// `r_i = 1 / G_ii` on impact rows with `G = J M⁻¹ Jᵀ`; 1 on position rows.
    Delassus,
    /// `r_i = 1` everywhere.
    Unit,
    /// The same positive value everywhere.
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    /// Step size in seconds.
    pub dt: f64,
    /// Residual ∞-norm at which Newton stops.
    pub newton_tol: f64,
    pub max_iter: usize,
    /// A contact joins the active set when its predicted gap is below this.
    pub active_tol: f64,
    pub r_mode: RMode,
    /// Unified scheme only: after convergence, contacts outside the active
    /// set whose exact end-of-step gap is negative are activated and the
    /// step is solved again.
    pub end_of_step_activation: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::GglUnified,
            dt: 1e-5,
            newton_tol: 1e-10,
            max_iter: 50,
            active_tol: 0.0,
            r_mode: RMode::Delassus,
            end_of_step_activation: true,
        }
    }
}

impl SolverConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Self {
        Self {
            scheme,
            dt,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be positive");
        }
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol", "must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter", "must be at least 1");
        }
        if !self.active_tol.is_finite() {
            return bad("active_tol", "must be finite");
        }
        if let RMode::Scalar(r) = self.r_mode {
            if !(r > 0.0 && r.is_finite()) {
                return bad("r", "must be positive");
            }
        }
        Ok(())
    }

    /// Prox weights for impact rows given the reduced Delassus matrix.
    pub(crate) fn impact_weights(&self, delassus: &Matrix) -> Vector {
        let n = delassus.nrows();
        match self.r_mode {
            RMode::Delassus => Vector::from_fn(n, |i, _| 1.0 / delassus[(i, i)]),
            RMode::Unit => Vector::from_element(n, 1.0),
            RMode::Scalar(r) => Vector::from_element(n, r),
        }
    }

    pub(crate) fn position_weights(&self, n: usize) -> Vector {
        match self.r_mode {
            RMode::Delassus | RMode::Unit => Vector::from_element(n, 1.0),
            RMode::Scalar(r) => Vector::from_element(n, r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub jacobian_mode: JacobianMode,
}

impl NewtonReport {
    /// Report for a step solved in closed form.
    pub fn closed_form() -> Self {
        Self {
            iterations: 0,
            final_residual: 0.0,
            converged: true,
            jacobian_mode: JacobianMode::Analytic,
        }
    }

    /// Combines the reports of consecutive subproblems of one step.
    pub fn merge(self, other: Self) -> Self {
        Self {
            iterations: self.iterations + other.iterations,
            final_residual: self.final_residual.max(other.final_residual),
            converged: self.converged && other.converged,
            jacobian_mode: if other.jacobian_mode == JacobianMode::FiniteDifference {
                other.jacobian_mode
            } else {
                self.jacobian_mode
            },
        }
    }
}

/// Result of one time step.
///
/// `lambda` and `psi` use the full contact layout with zeros outside
/// `active`. For contact schemes both are nonnegative; bilateral schemes
/// report signed multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: GeneralizedState,
    pub lambda: Vector,
    pub psi: Vector,
    pub active: Vec<usize>,
    pub newton: NewtonReport,
}

impl StepOutcome {
    pub fn iterations(&self) -> usize {
        self.newton.iterations
    }

    pub fn converged(&self) -> bool {
        self.newton.converged
    }
}

/// Square nonlinear system for the Newton driver.
pub(crate) trait NewtonSystem {
    fn residual(&self, x: &Vector) -> Result<Vector>;
    fn jacobian(&self, x: &Vector) -> Result<Matrix>;
}

pub(crate) fn fd_jacobian(sys: &dyn NewtonSystem, x: &Vector) -> Result<Matrix> {
    let step = 1e-7 * x.amax().max(1.0);
    let mut err = None;
    let jac = central_difference(x, step, |xx| match sys.residual(xx) {
        Ok(r) => r,
        Err(e) => {
            err = Some(e);
            Vector::zeros(x.len())
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(jac),
    }
}

/// Plain (undamped) semismooth Newton iteration.
///
/// Stops when the residual ∞-norm drops to `tol` or after `max_iter`
/// updates. A singular analytic Jacobian switches to finite differences for
/// the rest of the solve when `fd_fallback` is set; a second singular
/// matrix ends the solve unconverged.
pub(crate) fn newton_solve(
    sys: &dyn NewtonSystem,
    mut x: Vector,
    tol: f64,
    max_iter: usize,
    fd_fallback: bool,
) -> Result<(Vector, NewtonReport)> {
    let mut mode = JacobianMode::Analytic;
    let mut iterations = 0;
    loop {
        let res = sys.residual(&x)?;
        let norm = res.amax();
        if !norm.is_finite() {
            return Err(Error::NonFinite("Newton residual"));
        }
        let report = |converged| NewtonReport {
            iterations,
            final_residual: norm,
            converged,
            jacobian_mode: mode,
        };
        if norm <= tol {
            return Ok((x, report(true)));
        }
        if iterations >= max_iter {
            return Ok((x, report(false)));
        }
        let jac = match mode {
            JacobianMode::Analytic => sys.jacobian(&x)?,
            JacobianMode::FiniteDifference => fd_jacobian(sys, &x)?,
        };
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Newton Jacobian"));
        }
        match jac.lu().solve(&res) {
            Some(dx) => {
                x -= dx;
                iterations += 1;
            }
            None if fd_fallback && mode == JacobianMode::Analytic => {
                mode = JacobianMode::FiniteDifference;
            }
            None => return Ok((x, report(false))),
        }
    }
}

/// Explicit midpoint data `M_M`, `h_M`, `J_M` at `q_n + dt/2 v_n`.
pub(crate) struct Midpoint {
    pub q: Vector,
    pub minv: Matrix,
    pub h: Vector,
    pub jac: Matrix,
    pub gaps: Vector,
}

impl Midpoint {
    pub fn new(model: &dyn MechanicalModel, state: &GeneralizedState, dt: f64) -> Result<Self> {
        let q = &state.q + &state.v * (0.5 * dt);
        let mass = model.mass(&q);
        let chol = mass
            .cholesky()
            .ok_or_else(|| Error::SingularMass { q: q.iter().copied().collect() })?;
        let minv = chol.inverse();
        let h = model.forces(&q, &state.v);
        let jac = model.gap_jacobian(&q);
        let gaps = model.gaps(&q);
        if h.iter().chain(jac.iter()).chain(gaps.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("midpoint model evaluation"));
        }
        Ok(Self {
            q,
            minv,
            h,
            jac,
            gaps,
        })
    }
}

pub(crate) fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub(crate) fn select(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_fn(idx.len(), |i, _| v[idx[i]])
}

pub(crate) fn scatter(reduced: &Vector, idx: &[usize], n: usize) -> Vector {
    let mut full = Vector::zeros(n);
    for (k, &i) in idx.iter().enumerate() {
        full[i] = reduced[k];
    }
    full
}
