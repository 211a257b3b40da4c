//! Post-processing of trajectories: penetration statistics, drift
//! regression and energy bookkeeping.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::model::{GeneralizedState, MechanicalModel, Vector};
use crate::step::StepOutcome;

/// Per-step time series of a simulation. Entry 0 is the initial state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<GeneralizedState>,
    pub gaps: Vec<Vector>,
    pub gap_velocities: Vec<Vector>,
    pub lambdas: Vec<Vector>,
    pub psis: Vec<Vector>,
    pub energies: Vec<f64>,
    pub active_sets: Vec<Vec<usize>>,
    pub iterations: Vec<usize>,
    /// Final Newton residual ∞-norm per step.
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
}

impl TrajectoryRecord {
    pub fn with_capacity(dt: f64, n: usize) -> Self {
        Self {
            dt,
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            gaps: Vec::with_capacity(n),
            gap_velocities: Vec::with_capacity(n),
            lambdas: Vec::with_capacity(n),
            psis: Vec::with_capacity(n),
            energies: Vec::with_capacity(n),
            active_sets: Vec::with_capacity(n),
            iterations: Vec::with_capacity(n),
            residuals: Vec::with_capacity(n),
            converged: Vec::with_capacity(n),
        }
    }

    fn push_state(&mut self, model: &dyn MechanicalModel, state: GeneralizedState) {
        self.times.push(state.t);
        self.gaps.push(model.gaps(&state.q));
        self.gap_velocities.push(model.gap_jacobian(&state.q) * &state.v);
        self.energies.push(model.energy(&state.q, &state.v));
        self.states.push(state);
    }

    pub fn push_initial(&mut self, model: &dyn MechanicalModel, state: GeneralizedState) {
        let nc = model.n_contacts();
        self.push_state(model, state);
        self.lambdas.push(Vector::zeros(nc));
        self.psis.push(Vector::zeros(nc));
        self.active_sets.push(Vec::new());
        self.iterations.push(0);
        self.residuals.push(0.0);
        self.converged.push(true);
    }

    pub fn push(&mut self, model: &dyn MechanicalModel, out: StepOutcome) {
        self.push_state(model, out.state);
        self.lambdas.push(out.lambda);
        self.psis.push(out.psi);
        self.active_sets.push(out.active);
        self.iterations.push(out.newton.iterations);
        self.residuals.push(out.newton.final_residual);
        self.converged.push(out.newton.converged);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Smallest gap over all contacts at step `n`.
    pub fn min_gap_at(&self, n: usize) -> f64 {
        self.gaps[n].iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenetrationStats {
    /// Minimum gap over time and contacts (m).
    pub min_gap: f64,
    /// Total time with at least one negative gap, counted in whole steps (s).
    pub violation_time: f64,
    pub per_contact_min: Vec<f64>,
}

pub fn penetration_stats(rec: &TrajectoryRecord) -> Result<PenetrationStats> {
    if rec.is_empty() {
        return Err(Error::Empty("penetration_stats"));
    }
    let nc = rec.gaps[0].len();
    let mut per_contact_min = vec![f64::INFINITY; nc];
    let mut violating = 0usize;
    for g in &rec.gaps {
        check_dim("record gaps", nc, g.len())?;
        for (m, gi) in per_contact_min.iter_mut().zip(g.iter()) {
            *m = m.min(*gi);
        }
        if g.iter().any(|x| *x < 0.0) {
            violating += 1;
        }
    }
    Ok(PenetrationStats {
        min_gap: per_contact_min.iter().copied().fold(f64::INFINITY, f64::min),
        violation_time: violating as f64 * rec.dt,
        per_contact_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitDegree {
    Constant,
    Linear,
    Quadratic,
}

impl FitDegree {
    fn order(self) -> usize {
        match self {
            FitDegree::Constant => 0,
            FitDegree::Linear => 1,
            FitDegree::Quadratic => 2,
        }
    }
}

/// Least-squares polynomial fit `g ≈ Σ c_k t^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftFit {
    /// Coefficients in ascending powers of `t`.
    pub coefficients: Vec<f64>,
    /// Standard errors of the coefficients (NaN with no residual degrees of
    /// freedom).
    pub std_errors: Vec<f64>,
    /// Root-mean-square residual.
    pub rms: f64,
}

impl DriftFit {
    /// Linear coefficient, zero for a constant fit.
    pub fn slope(&self) -> f64 {
        self.coefficients.get(1).copied().unwrap_or(0.0)
    }

    pub fn slope_std_error(&self) -> f64 {
        self.std_errors.get(1).copied().unwrap_or(f64::NAN)
    }
}

/// Ordinary least squares on `(t, g)` pairs.
///
/// The fit runs in centered, scaled time for conditioning and the
/// coefficients are re-expanded in powers of the raw `t`.
pub fn drift_fit(t: &[f64], g: &[f64], degree: FitDegree) -> Result<DriftFit> {
    check_dim("drift_fit samples", t.len(), g.len())?;
    let n = t.len();
    if n < 3 {
        return Err(Error::Degenerate("at least three points are required"));
    }
    let p = degree.order() + 1;
    let center = t.iter().sum::<f64>() / n as f64;
    let scale = t.iter().map(|x| (x - center).abs()).fold(0.0, f64::max);
    if degree.order() > 0 && scale == 0.0 {
        return Err(Error::Degenerate("all sample times are equal"));
    }
    let scale = if scale == 0.0 { 1.0 } else { scale };
    let design = DMatrix::from_fn(n, p, |i, k| ((t[i] - center) / scale).powi(k as i32));
    let y = DVector::from_column_slice(g);
    let gram = design.transpose() * &design;
    let gram_inv = gram
        .clone()
        .cholesky()
        .ok_or(Error::Degenerate("rank-deficient design matrix"))?
        .inverse();
    let qr = design.clone().qr();
    let qty = qr.q().transpose() * &y;
    let coeffs_s = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(Error::Degenerate("rank-deficient design matrix"))?;
    let resid = &y - &design * &coeffs_s;
    let ssr = resid.norm_squared();
    let dof = n as isize - p as isize;
    let sigma2 = if dof > 0 { ssr / dof as f64 } else { f64::NAN };
    let cov_s = gram_inv * sigma2;

    // c_raw = T c_s with s = (t - center) / scale expanded binomially.
    let mut transform = DMatrix::zeros(p, p);
    for k in 0..p {
        let sk = scale.powi(-(k as i32));
        for j in 0..=k {
            transform[(j, k)] = sk * binomial(k, j) as f64 * (-center).powi((k - j) as i32);
        }
    }
    let coeffs = &transform * coeffs_s;
    let cov = &transform * cov_s * transform.transpose();
    Ok(DriftFit {
        coefficients: coeffs.iter().copied().collect(),
        std_errors: (0..p).map(|k| cov[(k, k)].sqrt()).collect(),
        rms: (ssr / n as f64).sqrt(),
    })
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i as u64 + 1))
}

/// Maximal run of steps over which the active set is constant and
/// non-empty. `end` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactWindow {
    pub start: usize,
    pub end: usize,
    pub active: Vec<usize>,
}

impl ContactWindow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Windows of at least `min_len` steps with a constant, non-empty active
/// set.
pub fn contact_windows(rec: &TrajectoryRecord, min_len: usize) -> Vec<ContactWindow> {
    let mut out = Vec::new();
    let sets = &rec.active_sets;
    let mut start = 0;
    while start < sets.len() {
        let mut end = start + 1;
        while end < sets.len() && sets[end] == sets[start] {
            end += 1;
        }
        if !sets[start].is_empty() && end - start >= min_len {
            out.push(ContactWindow {
                start,
                end,
                active: sets[start].clone(),
            });
        }
        start = end;
    }
    out
}

/// Linear drift fit of contact `contact`'s gap over a window.
pub fn window_drift(rec: &TrajectoryRecord, window: &ContactWindow, contact: usize) -> Result<DriftFit> {
    let range = window.start..window.end;
    let g: Vec<f64> = rec.gaps[range.clone()].iter().map(|g| g[contact]).collect();
    drift_fit(&rec.times[range], &g, FitDegree::Linear)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries {
    pub energies: Vec<f64>,
    /// Largest single-step energy gain, zero if energy never increases.
    pub max_increase: f64,
    /// Step index (into `energies`) at which that gain ends.
    pub max_increase_step: Option<usize>,
}

/// Recomputes `E(q_n, v_n)` for every recorded state.
pub fn energy_series(model: &dyn MechanicalModel, rec: &TrajectoryRecord) -> Result<EnergySeries> {
    let mut energies = Vec::with_capacity(rec.len());
    for s in &rec.states {
        check_dim("record q", model.dof(), s.q.len())?;
        check_dim("record v", model.dof(), s.v.len())?;
        energies.push(model.energy(&s.q, &s.v));
    }
    let mut max_increase = 0.0;
    let mut max_increase_step = None;
    for (n, w) in energies.windows(2).enumerate() {
        let de = w[1] - w[0];
        if de > max_increase {
            max_increase = de;
            max_increase_step = Some(n + 1);
        }
    }
    Ok(EnergySeries {
        energies,
        max_increase,
        max_increase_step,
    })
}
