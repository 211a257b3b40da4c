//! Timestepping schemes for impacting mechanical systems with unilateral
//! constraints.
//!
//! Three contact schemes share one explicit-midpoint skeleton:
//!
//! - [`moreau_step`]: Moreau's midpoint rule, impact law on velocity level;
//! - [`decoupled_ggl_step`]: Moreau's rule followed by a projection of the
//!   positions onto `g >= 0`;
//! - [`unified_step`]: velocity-level impact law and position-level
//!   non-penetration solved together with implicit midpoint evaluations of
//!   `W` and `h`, by semismooth Newton on a prox formulation.
//!
//! [`bilateral_step`] integrates equality-constrained systems at position,
//! velocity or acceleration level, or with the GGL stabilization, to expose
//! the drift-off effect of index reduction.

pub mod bilateral;
pub mod diagnostics;
pub mod error;
pub mod explicit;
pub mod model;
pub mod prox;
pub mod simulate;
pub mod step;
pub mod unified;

pub use bilateral::{bilateral_step, drift_series};
pub use diagnostics::{
    contact_windows, drift_fit, energy_series, penetration_stats, window_drift, ContactWindow,
    DriftFit, EnergySeries, FitDegree, PenetrationStats, TrajectoryRecord,
};
pub use error::{Error, Result};
pub use explicit::{decoupled_ggl_step, moreau_step, predict_active_set};
pub use model::{
    eval_constraint_matrix, eval_energy, eval_gaps, eval_h, eval_mass, BilateralSliderCrank,
    BouncingBall, BouncingBallParams, ContactFree, GeneralizedState, Matrix, MechanicalModel,
    SliderCrankParams, UnilateralSliderCrank, Vector,
};
pub use prox::{impact_residual, position_residual, prox_nonneg, ProxParams};
pub use simulate::{simulate, step, step_count, Simulation};
pub use step::{
    BilateralScheme, JacobianMode, NewtonReport, RMode, Scheme, SolverConfig, StepOutcome,
};
pub use unified::{
    assemble_jacobian, assemble_reference_residual, assemble_residual, check_jacobian,
    gap_linearization, reference_step, unified_step, JacobianCheck, UnifiedUnknowns,
};
