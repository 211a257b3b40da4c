//! Mechanical models with unilateral (or bilateral) scleronomic constraints.
//!
//! A model provides the ingredients of the measure differential inclusion
//!
//! ```text
//! q' = v,   M(q) dv = h(q, v) dt + Wᵀ(q) dΛ,   0 <= g(q) ⊥ λ >= 0
//! ```
//!
//! together with Newton's impact law parameterised by the restitution
//! coefficients ε. Throughout this crate the constraint matrix is stored as
//! the gap Jacobian `J = ∂g/∂q` with one row per contact, so gap velocities
//! are `ġ = J v` and generalized contact forces are `Jᵀ λ`.
//!
//! Derivative hooks (`force_derivatives`, `weighted_gap_hessian`,
//! `gap_jacobian_dq`) default to central finite differences; the concrete
//! models here override them with closed forms.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Snapshot `(t, q, v)` of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState {
    pub t: f64,
    pub q: Vector,
    pub v: Vector,
}

impl GeneralizedState {
    pub fn new(t: f64, q: Vector, v: Vector) -> Self {
        Self { t, q, v }
    }

    pub fn from_slices(t: f64, q: &[f64], v: &[f64]) -> Self {
        Self::new(t, Vector::from_column_slice(q), Vector::from_column_slice(v))
    }

    /// Checks dimensions against `model` and finiteness of every entry.
    pub fn validate(&self, model: &dyn MechanicalModel) -> Result<()> {
        check_dim("state q", model.dof(), self.q.len())?;
        check_dim("state v", model.dof(), self.v.len())?;
        if !self.t.is_finite() || self.q.iter().chain(self.v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        Ok(())
    }
}

/// Evaluation interface of an impacting mechanical system.
///
/// Implementations must be pure: evaluation never mutates the model, so a
/// single model may be shared read-only between simulation threads. The
/// raw hooks assume correctly sized arguments; the checked `eval_*` free
/// functions validate dimensions first.
pub trait MechanicalModel: Send + Sync {
    fn name(&self) -> &str;

    /// Number of generalized coordinates.
    fn dof(&self) -> usize;

    fn n_contacts(&self) -> usize;

    /// Restitution coefficient per contact.
    fn restitution(&self) -> &[f64];

    fn mass(&self, q: &Vector) -> Matrix;

    /// Generalized forces `h(q, v)` (gyroscopic and gravity terms).
    fn forces(&self, q: &Vector, v: &Vector) -> Vector;

    fn gaps(&self, q: &Vector) -> Vector;

    /// `∂g/∂q`, shape `n_contacts × dof`.
    fn gap_jacobian(&self, q: &Vector) -> Matrix;

    /// Potential whose negative gradient is the conservative part of `h`.
    fn potential(&self, q: &Vector) -> f64;

    fn energy(&self, q: &Vector, v: &Vector) -> f64 {
        0.5 * v.dot(&(self.mass(q) * v)) + self.potential(q)
    }

    /// `(∂h/∂q, ∂h/∂v)`.
    fn force_derivatives(&self, q: &Vector, v: &Vector) -> (Matrix, Matrix) {
        let dq = central_difference(q, fd_step(q), |qq| self.forces(qq, v));
        let dv = central_difference(v, fd_step(q), |vv| self.forces(q, vv));
        (dq, dv)
    }

    /// `∂(Jᵀ(q) a)/∂q` for a fixed contact-space vector `a` (`dof × dof`).
    fn weighted_gap_hessian(&self, q: &Vector, a: &Vector) -> Matrix {
        central_difference(q, fd_step(q), |qq| self.gap_jacobian(qq).transpose() * a)
    }

    /// `∂(J(q) b)/∂q` for a fixed velocity-space vector `b`
    /// (`n_contacts × dof`).
    fn gap_jacobian_dq(&self, q: &Vector, b: &Vector) -> Matrix {
        central_difference(q, fd_step(q), |qq| self.gap_jacobian(qq) * b)
    }

    /// Whether the derivative hooks above are closed-form.
    fn analytic_derivatives(&self) -> bool {
        false
    }
}

/// Finite-difference step used by the derivative fallbacks.
pub fn fd_step(q: &Vector) -> f64 {
    1e-7 * q.amax().max(1.0)
}

/// Central-difference Jacobian of `f` at `x`, one column per entry of `x`.
pub fn central_difference(x: &Vector, step: f64, mut f: impl FnMut(&Vector) -> Vector) -> Matrix {
    let mut cols = Vec::with_capacity(x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        xp[j] = x[j] + step;
        let fp = f(&xp);
        xp[j] = x[j] - step;
        let fm = f(&xp);
        xp[j] = x[j];
        cols.push((fp - fm) / (2.0 * step));
    }
    let rows = cols.first().map_or(0, |c| c.len());
    Matrix::from_fn(rows, x.len(), |i, j| cols[j][i])
}

pub fn eval_mass(model: &dyn MechanicalModel, q: &Vector) -> Result<Matrix> {
    check_dim("q", model.dof(), q.len())?;
    Ok(model.mass(q))
}

pub fn eval_h(model: &dyn MechanicalModel, q: &Vector, v: &Vector) -> Result<Vector> {
    check_dim("q", model.dof(), q.len())?;
    check_dim("v", model.dof(), v.len())?;
    Ok(model.forces(q, v))
}

pub fn eval_gaps(model: &dyn MechanicalModel, q: &Vector) -> Result<Vector> {
    check_dim("q", model.dof(), q.len())?;
    Ok(model.gaps(q))
}

/// Gap Jacobian `∂g/∂q` (the transpose of the force-direction matrix).
pub fn eval_constraint_matrix(model: &dyn MechanicalModel, q: &Vector) -> Result<Matrix> {
    check_dim("q", model.dof(), q.len())?;
    Ok(model.gap_jacobian(q))
}

pub fn eval_energy(model: &dyn MechanicalModel, q: &Vector, v: &Vector) -> Result<f64> {
    check_dim("q", model.dof(), q.len())?;
    check_dim("v", model.dof(), v.len())?;
    Ok(model.energy(q, v))
}

fn check_restitution(eps: &[f64]) -> Result<()> {
    match eps.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        Some(e) => Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("restitution {e} outside [0, 1]"),
        }),
        None => Ok(()),
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive, got {value}"),
        })
    }
}

/// Geometry, inertia and initial conditions of the slider-crank mechanism.
///
/// Defaults reproduce the classic benchmark data set: a crank of 0.153 m,
/// a connecting rod of 0.306 m, and a slider of height `2b` and length `2a`
/// moving in a notch of height `d = 2b + c` (clearance `c`).
#[derive(Debug, Clone, PartialEq)]
pub struct SliderCrankParams {
    pub l1: f64,
    pub l2: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub grav: f64,
    pub theta0: [f64; 3],
    pub omega0: [f64; 3],
    /// Slider in a notch with clearance (four contacts) when true; slider
    /// held on a fixed line (one bilateral constraint) otherwise.
    pub unilateral: bool,
}

impl Default for SliderCrankParams {
    fn default() -> Self {
        let b = 0.025;
        let c = 0.001;
        Self {
            l1: 0.1530,
            l2: 0.3060,
            a: 0.0500,
            b,
            c,
            d: 2.0 * b + c,
            m1: 0.0380,
            m2: 0.0380,
            m3: 0.0760,
            j1: 7.4e-5,
            j2: 5.9e-4,
            j3: 2.7e-6,
            grav: 9.81,
            theta0: [0.0, 0.0, 0.0],
            omega0: [150.0, -75.0, 0.0],
            unilateral: true,
        }
    }
}

impl SliderCrankParams {
    pub fn validate(&self) -> Result<()> {
        positive("l1", self.l1)?;
        positive("l2", self.l2)?;
        positive("a", self.a)?;
        positive("b", self.b)?;
        positive("c", self.c)?;
        positive("d", self.d)?;
        positive("m1", self.m1)?;
        positive("m2", self.m2)?;
        positive("m3", self.m3)?;
        positive("J1", self.j1)?;
        positive("J2", self.j2)?;
        positive("J3", self.j3)?;
        positive("grav", self.grav)?;
        let d = 2.0 * self.b + self.c;
        if (self.d - d).abs() > 1e-12 * d {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: format!("notch height must equal 2b + c = {d}, got {}", self.d),
            });
        }
        Ok(())
    }

    /// Builds the unilateral or bilateral variant according to `unilateral`.
    /// `eps` is ignored for the bilateral variant.
    pub fn build(&self, eps: &[f64]) -> Result<Box<dyn MechanicalModel>> {
        if self.unilateral {
            Ok(Box::new(UnilateralSliderCrank::new(self.clone(), eps)?))
        } else {
            Ok(Box::new(BilateralSliderCrank::new(self.clone())?))
        }
    }

    fn coupling(&self) -> f64 {
        self.l1 * self.l2 * (0.5 * self.m2 + self.m3)
    }

    fn m11(&self) -> f64 {
        self.j1 + self.l1 * self.l1 * (0.25 * self.m1 + self.m2 + self.m3)
    }

    fn m22(&self) -> f64 {
        self.j2 + self.l2 * self.l2 * (0.25 * self.m2 + self.m3)
    }

    fn grav1(&self) -> f64 {
        self.grav * self.l1 * (0.5 * self.m1 + self.m2 + self.m3)
    }

    fn grav2(&self) -> f64 {
        self.grav * self.l2 * (0.5 * self.m2 + self.m3)
    }

    /// Height of the slider's center of gravity, `l1 sinθ1 + l2 sinθ2`.
    pub fn slider_height(&self, theta1: f64, theta2: f64) -> f64 {
        self.l1 * theta1.sin() + self.l2 * theta2.sin()
    }

    /// Crank/rod block shared by both variants: `(M, h, ∂h/∂q, ∂h/∂v)` in
    /// the first two coordinates.
    fn crank_rod(&self, th: [f64; 2], om: [f64; 2]) -> CrankRod {
        let k = self.coupling();
        let (s12, c12) = (th[0] - th[1]).sin_cos();
        let (g1, g2) = (self.grav1(), self.grav2());
        CrankRod {
            mass: [[self.m11(), k * c12], [k * c12, self.m22()]],
            h: [
                -k * s12 * om[1] * om[1] - g1 * th[0].cos(),
                k * s12 * om[0] * om[0] - g2 * th[1].cos(),
            ],
            dh_dq: [
                [-k * c12 * om[1] * om[1] + g1 * th[0].sin(), k * c12 * om[1] * om[1]],
                [k * c12 * om[0] * om[0], -k * c12 * om[0] * om[0] + g2 * th[1].sin()],
            ],
            dh_dv: [[0.0, -2.0 * k * s12 * om[1]], [2.0 * k * s12 * om[0], 0.0]],
        }
    }

    fn crank_rod_potential(&self, th1: f64, th2: f64) -> f64 {
        self.grav1() * th1.sin() + self.grav2() * th2.sin()
    }
}

struct CrankRod {
    mass: [[f64; 2]; 2],
    h: [f64; 2],
    dh_dq: [[f64; 2]; 2],
    dh_dv: [[f64; 2]; 2],
}

/// Planar slider-crank whose slider moves with clearance inside a notch.
///
/// Coordinates are the absolute angles `(θ1, θ2, θ3)` of crank, rod and
/// slider. The four contacts are the slider corners against the upper
/// (`g1`, `g2`) and lower (`g3`, `g4`) notch walls.
#[derive(Debug, Clone)]
pub struct UnilateralSliderCrank {
    params: SliderCrankParams,
    eps: Vec<f64>,
}

// Sign of the slider height and of `a sinθ3` in each gap function.
const HEIGHT_SIGN: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
const TILT_SIGN: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

impl UnilateralSliderCrank {
    /// `eps` is either one value for all four contacts or one per contact.
    pub fn new(params: SliderCrankParams, eps: &[f64]) -> Result<Self> {
        params.validate()?;
        let eps = match eps.len() {
            1 => vec![eps[0]; 4],
            4 => eps.to_vec(),
            n => {
                return Err(Error::Dimension {
                    what: "restitution",
                    expected: 4,
                    got: n,
                })
            }
        };
        check_restitution(&eps)?;
        Ok(Self { params, eps })
    }

    pub fn params(&self) -> &SliderCrankParams {
        &self.params
    }

    pub fn initial_state(&self) -> GeneralizedState {
        GeneralizedState::from_slices(0.0, &self.params.theta0, &self.params.omega0)
    }

    fn gap_hessian_diag(&self, q: &Vector, i: usize) -> [f64; 3] {
        let p = &self.params;
        let s = HEIGHT_SIGN[i];
        [
            -s * p.l1 * q[0].sin(),
            -s * p.l2 * q[1].sin(),
            -TILT_SIGN[i] * p.a * q[2].sin() + p.b * q[2].cos(),
        ]
    }
}

impl MechanicalModel for UnilateralSliderCrank {
    fn name(&self) -> &str {
        "slider_unilateral"
    }

    fn dof(&self) -> usize {
        3
    }

    fn n_contacts(&self) -> usize {
        4
    }

    fn restitution(&self) -> &[f64] {
        &self.eps
    }

    fn mass(&self, q: &Vector) -> Matrix {
        let cr = self.params.crank_rod([q[0], q[1]], [0.0, 0.0]);
        let mut m = Matrix::zeros(3, 3);
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = cr.mass[i][j];
            }
        }
        m[(2, 2)] = self.params.j3;
        m
    }

    fn forces(&self, q: &Vector, v: &Vector) -> Vector {
        let cr = self.params.crank_rod([q[0], q[1]], [v[0], v[1]]);
        Vector::from_column_slice(&[cr.h[0], cr.h[1], 0.0])
    }

    fn gaps(&self, q: &Vector) -> Vector {
        let p = &self.params;
        let y = p.slider_height(q[0], q[1]);
        let (s3, c3) = q[2].sin_cos();
        Vector::from_fn(4, |i, _| {
            0.5 * p.d + HEIGHT_SIGN[i] * y + TILT_SIGN[i] * p.a * s3 - p.b * c3
        })
    }

    fn gap_jacobian(&self, q: &Vector) -> Matrix {
        let p = &self.params;
        let (s3, c3) = q[2].sin_cos();
        let (c1, c2) = (q[0].cos(), q[1].cos());
        Matrix::from_fn(4, 3, |i, j| match j {
            0 => HEIGHT_SIGN[i] * p.l1 * c1,
            1 => HEIGHT_SIGN[i] * p.l2 * c2,
            _ => TILT_SIGN[i] * p.a * c3 + p.b * s3,
        })
    }

    fn potential(&self, q: &Vector) -> f64 {
        self.params.crank_rod_potential(q[0], q[1])
    }

    fn force_derivatives(&self, q: &Vector, v: &Vector) -> (Matrix, Matrix) {
        let cr = self.params.crank_rod([q[0], q[1]], [v[0], v[1]]);
        let mut dq = Matrix::zeros(3, 3);
        let mut dv = Matrix::zeros(3, 3);
        for i in 0..2 {
            for j in 0..2 {
                dq[(i, j)] = cr.dh_dq[i][j];
                dv[(i, j)] = cr.dh_dv[i][j];
            }
        }
        (dq, dv)
    }

    fn weighted_gap_hessian(&self, q: &Vector, a: &Vector) -> Matrix {
        let mut diag = [0.0; 3];
        for (i, ai) in a.iter().enumerate() {
            let hd = self.gap_hessian_diag(q, i);
            for k in 0..3 {
                diag[k] += ai * hd[k];
            }
        }
        Matrix::from_diagonal(&Vector::from_column_slice(&diag))
    }

    fn gap_jacobian_dq(&self, q: &Vector, b: &Vector) -> Matrix {
        Matrix::from_fn(4, 3, |i, k| self.gap_hessian_diag(q, i)[k] * b[k])
    }

    fn analytic_derivatives(&self) -> bool {
        true
    }
}

/// Slider-crank with the slider held on the line `y3 = 0` by one bilateral
/// constraint `g = l1 sinθ1 + l2 sinθ2 = 0`. Coordinates `(θ1, θ2)`.
#[derive(Debug, Clone)]
pub struct BilateralSliderCrank {
    params: SliderCrankParams,
    eps: [f64; 1],
}

impl BilateralSliderCrank {
    pub fn new(params: SliderCrankParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            eps: [0.0],
        })
    }

    pub fn params(&self) -> &SliderCrankParams {
        &self.params
    }

    pub fn initial_state(&self) -> GeneralizedState {
        let p = &self.params;
        GeneralizedState::from_slices(0.0, &p.theta0[..2], &p.omega0[..2])
    }
}

impl MechanicalModel for BilateralSliderCrank {
    fn name(&self) -> &str {
        "slider_bilateral"
    }

    fn dof(&self) -> usize {
        2
    }

    fn n_contacts(&self) -> usize {
        1
    }

    fn restitution(&self) -> &[f64] {
        &self.eps
    }

    fn mass(&self, q: &Vector) -> Matrix {
        let m = self.params.crank_rod([q[0], q[1]], [0.0, 0.0]).mass;
        Matrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])
    }

    fn forces(&self, q: &Vector, v: &Vector) -> Vector {
        let h = self.params.crank_rod([q[0], q[1]], [v[0], v[1]]).h;
        Vector::from_column_slice(&h)
    }

    fn gaps(&self, q: &Vector) -> Vector {
        Vector::from_element(1, self.params.slider_height(q[0], q[1]))
    }

    fn gap_jacobian(&self, q: &Vector) -> Matrix {
        let p = &self.params;
        Matrix::from_row_slice(1, 2, &[p.l1 * q[0].cos(), p.l2 * q[1].cos()])
    }

    fn potential(&self, q: &Vector) -> f64 {
        self.params.crank_rod_potential(q[0], q[1])
    }

    fn force_derivatives(&self, q: &Vector, v: &Vector) -> (Matrix, Matrix) {
        let cr = self.params.crank_rod([q[0], q[1]], [v[0], v[1]]);
        let dq = Matrix::from_fn(2, 2, |i, j| cr.dh_dq[i][j]);
        let dv = Matrix::from_fn(2, 2, |i, j| cr.dh_dv[i][j]);
        (dq, dv)
    }

    fn weighted_gap_hessian(&self, q: &Vector, a: &Vector) -> Matrix {
        let p = &self.params;
        Matrix::from_diagonal(&Vector::from_column_slice(&[
            -a[0] * p.l1 * q[0].sin(),
            -a[0] * p.l2 * q[1].sin(),
        ]))
    }

    fn gap_jacobian_dq(&self, q: &Vector, b: &Vector) -> Matrix {
        let p = &self.params;
        Matrix::from_row_slice(1, 2, &[-p.l1 * q[0].sin() * b[0], -p.l2 * q[1].sin() * b[1]])
    }

    fn analytic_derivatives(&self) -> bool {
        true
    }
}

/// Point mass above a rigid floor; the gap is the height itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BouncingBallParams {
    pub mass: f64,
    pub grav: f64,
    pub height: f64,
    pub eps: f64,
}

impl Default for BouncingBallParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            grav: 9.81,
            height: 0.1,
            eps: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BouncingBall {
    params: BouncingBallParams,
    eps: [f64; 1],
}

impl BouncingBall {
    pub fn new(params: BouncingBallParams) -> Result<Self> {
        positive("mass", params.mass)?;
        positive("grav", params.grav)?;
        if !(params.height >= 0.0 && params.height.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "height",
                reason: format!("must be non-negative, got {}", params.height),
            });
        }
        check_restitution(&[params.eps])?;
        Ok(Self {
            params,
            eps: [params.eps],
        })
    }

    pub fn params(&self) -> &BouncingBallParams {
        &self.params
    }

    /// Released from rest at the drop height.
    pub fn initial_state(&self) -> GeneralizedState {
        GeneralizedState::from_slices(0.0, &[self.params.height], &[0.0])
    }
}

impl MechanicalModel for BouncingBall {
    fn name(&self) -> &str {
        "ball"
    }

    fn dof(&self) -> usize {
        1
    }

    fn n_contacts(&self) -> usize {
        1
    }

    fn restitution(&self) -> &[f64] {
        &self.eps
    }

    fn mass(&self, _q: &Vector) -> Matrix {
        Matrix::from_element(1, 1, self.params.mass)
    }

    fn forces(&self, _q: &Vector, _v: &Vector) -> Vector {
        Vector::from_element(1, -self.params.mass * self.params.grav)
    }

    fn gaps(&self, q: &Vector) -> Vector {
        q.clone()
    }

    fn gap_jacobian(&self, _q: &Vector) -> Matrix {
        Matrix::identity(1, 1)
    }

    fn potential(&self, q: &Vector) -> f64 {
        self.params.mass * self.params.grav * q[0]
    }

    fn force_derivatives(&self, _q: &Vector, _v: &Vector) -> (Matrix, Matrix) {
        (Matrix::zeros(1, 1), Matrix::zeros(1, 1))
    }

    fn weighted_gap_hessian(&self, _q: &Vector, _a: &Vector) -> Matrix {
        Matrix::zeros(1, 1)
    }

    fn gap_jacobian_dq(&self, _q: &Vector, _b: &Vector) -> Matrix {
        Matrix::zeros(1, 1)
    }

    fn analytic_derivatives(&self) -> bool {
        true
    }
}

/// Wraps a model and removes all of its contacts.
#[derive(Debug, Clone)]
pub struct ContactFree<M>(pub M);

impl<M: MechanicalModel> MechanicalModel for ContactFree<M> {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn dof(&self) -> usize {
        self.0.dof()
    }

    fn n_contacts(&self) -> usize {
        0
    }

    fn restitution(&self) -> &[f64] {
        &[]
    }

    fn mass(&self, q: &Vector) -> Matrix {
        self.0.mass(q)
    }

    fn forces(&self, q: &Vector, v: &Vector) -> Vector {
        self.0.forces(q, v)
    }

    fn gaps(&self, _q: &Vector) -> Vector {
        Vector::zeros(0)
    }

    fn gap_jacobian(&self, _q: &Vector) -> Matrix {
        Matrix::zeros(0, self.0.dof())
    }

    fn potential(&self, q: &Vector) -> f64 {
        self.0.potential(q)
    }

    fn force_derivatives(&self, q: &Vector, v: &Vector) -> (Matrix, Matrix) {
        self.0.force_derivatives(q, v)
    }

    fn weighted_gap_hessian(&self, _q: &Vector, _a: &Vector) -> Matrix {
        Matrix::zeros(self.0.dof(), self.0.dof())
    }

    fn gap_jacobian_dq(&self, _q: &Vector, _b: &Vector) -> Matrix {
        Matrix::zeros(0, self.0.dof())
    }

    fn analytic_derivatives(&self) -> bool {
        self.0.analytic_derivatives()
    }
}
