//! Fixed-step simulation loop.

use std::time::{Duration, Instant};

use crate::bilateral::bilateral_step;
use crate::diagnostics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::explicit::{decoupled_ggl_step, moreau_step};
use crate::model::{GeneralizedState, MechanicalModel};
use crate::step::{Scheme, SolverConfig, StepOutcome};
use crate::unified::{reference_step, unified_step};

/// Advances `state` by one step of `cfg.scheme`.
pub fn step(
    model: &dyn MechanicalModel,
    state: &GeneralizedState,
    cfg: &SolverConfig,
) -> Result<StepOutcome> {
    match cfg.scheme {
        Scheme::Moreau => moreau_step(model, state, cfg),
        Scheme::GglDecoupled => decoupled_ggl_step(model, state, cfg),
        Scheme::GglUnified => unified_step(model, state, cfg),
        Scheme::GglReference => reference_step(model, state, cfg),
        Scheme::Dae(level) => bilateral_step(model, state, level, cfg),
    }
}

/// Number of steps of size `dt` covering `horizon`; `dt` must divide it.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon >= 0.0 && horizon.is_finite()) || !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: format!("horizon {horizon} with dt {dt}"),
        });
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: format!("dt = {dt} does not divide t_end = {horizon}"),
        });
    }
    Ok(n as usize)
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub record: TrajectoryRecord,
    pub non_converged: usize,
    pub wall_time: Duration,
}

/// Runs `horizon / dt` steps from `initial`, recording every state.
///
/// Non-converged steps are kept (and counted) so long runs can report
/// failure statistics instead of aborting.
pub fn simulate(
    model: &dyn MechanicalModel,
    initial: &GeneralizedState,
    cfg: &SolverConfig,
    horizon: f64,
) -> Result<Simulation> {
    cfg.validate()?;
    initial.validate(model)?;
    let steps = step_count(horizon, cfg.dt)?;
    let start = Instant::now();
    let mut record = TrajectoryRecord::with_capacity(cfg.dt, steps + 1);
    record.push_initial(model, initial.clone());
    let mut state = initial.clone();
    let mut non_converged = 0;
    for n in 1..=steps {
        let mut out = step(model, &state, cfg)?;
        out.state.t = initial.t + n as f64 * cfg.dt;
        if !out.converged() {
            non_converged += 1;
        }
        state = out.state.clone();
        record.push(model, out);
    }
    Ok(Simulation {
        record,
        non_converged,
        wall_time: start.elapsed(),
    })
}
