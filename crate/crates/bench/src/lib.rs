//! Fixtures shared by the benchmarks.

use nonsmooth_ggl::{
    predict_active_set, step, GeneralizedState, Scheme, SliderCrankParams, SolverConfig,
    UnilateralSliderCrank,
};

pub const DT: f64 = 1e-5;

pub fn slider() -> UnilateralSliderCrank {
    UnilateralSliderCrank::new(SliderCrankParams::default(), &[0.1; 4]).expect("default slider")
}

/// First Moreau state whose predicted active set is non-empty, so every
/// scheme has contact rows to solve.
pub fn contact_state(model: &UnilateralSliderCrank) -> GeneralizedState {
    let cfg = SolverConfig::new(Scheme::Moreau, DT);
    let mut state = model.initial_state();
    for _ in 0..200_000 {
        if !predict_active_set(model, &state, DT, cfg.active_tol).is_empty() {
            return state;
        }
        state = step(model, &state, &cfg).expect("moreau step").state;
    }
    panic!("slider never reached a contact");
}
