//! Named experiment presets and parallel sweeps.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nonsmooth_ggl::{BilateralScheme, Scheme};
use serde::Serialize;

use crate::config::{ModelKind, RunConfig};
use crate::run::{run_experiment, write_json, RunReport, Summary};
use crate::RunError;

pub const PRESETS: [(&str, &str); 14] = [
    ("fig3_eps01", "slider, Moreau, restitution 0.1"),
    ("fig3_eps04", "slider, Moreau, restitution 0.4"),
    ("fig3_eps06", "slider, Moreau, restitution 0.6"),
    ("fig3_eps09", "slider, Moreau, restitution 0.9"),
    (
        "fig5_gaps",
        "slider gap drift under Moreau at restitution 0.1, every step written",
    ),
    (
        "fig6_drift",
        "bilateral slider, velocity/acceleration/GGL drift over 5 s",
    ),
    ("fig9_eps01", "slider, unified GGL, restitution 0.1"),
    ("fig9_eps04", "slider, unified GGL, restitution 0.4"),
    ("fig9_eps06", "slider, unified GGL, restitution 0.6"),
    ("fig9_eps09", "slider, unified GGL, restitution 0.9"),
    (
        "fig10_energy",
        "slider energy under Moreau, unified GGL and the reference variant",
    ),
    (
        "decoupled_energy",
        "slider energy, decoupled vs unified GGL, 0.2 s",
    ),
    ("ball_drop", "bouncing ball, unified GGL, 1 s"),
    (
        "ball_schemes",
        "bouncing ball under all three contact schemes, 1 s",
    ),
];

/// Desk-scale horizon for the slider presets and the long one behind `--full`.
pub const DESK_HORIZON: f64 = 0.5;
pub const FULL_HORIZON: f64 = 4.0;

/// The runs of one preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub name: String,
    pub runs: Vec<RunConfig>,
}

fn slider(scheme: Scheme, eps: f64, t_end: f64) -> RunConfig {
    let mut c = RunConfig::new(ModelKind::SliderUnilateral, scheme);
    c.epsilon = vec![eps; 4];
    c.t_end = t_end;
    c
}

fn with_time(mut c: RunConfig, t_end: f64) -> RunConfig {
    c.t_end = t_end;
    c
}

fn eps_suffix(name: &str, prefix: &str) -> Option<f64> {
    match name.strip_prefix(prefix)? {
        "01" => Some(0.1),
        "04" => Some(0.4),
        "06" => Some(0.6),
        "09" => Some(0.9),
        _ => None,
    }
}

/// Builds the named preset. `full` stretches the slider horizons to 4 s.
/// Output paths are `<out>/<preset>_<scheme>.csv`.
pub fn preset(name: &str, full: bool, out: &Path) -> Result<Sweep, RunError> {
    let t = if full { FULL_HORIZON } else { DESK_HORIZON };
    let contact = [Scheme::Moreau, Scheme::GglDecoupled, Scheme::GglUnified];
    let mut runs = if let Some(eps) = eps_suffix(name, "fig3_eps") {
        vec![slider(Scheme::Moreau, eps, t)]
    } else if let Some(eps) = eps_suffix(name, "fig9_eps") {
        vec![slider(Scheme::GglUnified, eps, t)]
    } else {
        match name {
            "fig5_gaps" => {
                let mut c = slider(Scheme::Moreau, 0.1, t);
                c.record_stride = 1;
                vec![c]
            }
            "fig6_drift" => [
                BilateralScheme::Velocity,
                BilateralScheme::Acceleration,
                BilateralScheme::Ggl,
            ]
            .into_iter()
            .map(|b| {
                with_time(
                    RunConfig::new(ModelKind::SliderBilateral, Scheme::Dae(b)),
                    5.0,
                )
            })
            .collect(),
            "fig10_energy" => [Scheme::Moreau, Scheme::GglUnified, Scheme::GglReference]
                .into_iter()
                .map(|s| slider(s, 0.1, t))
                .collect(),
            "decoupled_energy" => [Scheme::GglDecoupled, Scheme::GglUnified]
                .into_iter()
                .map(|s| slider(s, 0.1, if full { t } else { 0.2 }))
                .collect(),
            "ball_drop" => vec![with_time(
                RunConfig::new(ModelKind::Ball, Scheme::GglUnified),
                1.0,
            )],
            "ball_schemes" => contact
                .into_iter()
                .map(|s| with_time(RunConfig::new(ModelKind::Ball, s), 1.0))
                .collect(),
            _ => return Err(RunError::UnknownPreset(name.to_string())),
        }
    };
    for r in &mut runs {
        r.output = out.join(format!("{name}_{}.{}", r.scheme, r.format.extension()));
    }
    Ok(Sweep {
        name: name.to_string(),
        runs,
    })
}

/// Worker cap from `NONSMOOTH_GGL_THREADS`, else the machine's parallelism.
pub fn worker_count(runs: usize) -> usize {
    let cap = std::env::var("NONSMOOTH_GGL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(runs).max(1)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub preset: String,
    pub runs: Vec<Summary>,
    /// Unified over Moreau wall time per simulated second, when both ran.
    pub unified_moreau_time_ratio: Option<f64>,
}

/// Wall-time ratio of the unified scheme to Moreau, per simulated second.
pub fn time_ratio(summaries: &[Summary]) -> Option<f64> {
    let rate = |scheme: &str| {
        summaries
            .iter()
            .find(|s| s.scheme == scheme && s.t_end > 0.0)
            .map(|s| s.wall_time_s / s.t_end)
    };
    Some(rate("ggl_unified")? / rate("moreau")?)
}

/// Runs every member with at most `workers` threads. Reports come back in
/// preset order; each run writes only its own files.
pub fn run_sweep(sweep: &Sweep, workers: usize) -> Result<Vec<RunReport>, RunError> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunReport, RunError>>>> =
        sweep.runs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, sweep.runs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = sweep.runs.get(i) else { break };
                let res = run_experiment(cfg);
                *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(res);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap_or_else(|p| p.into_inner())
                .expect("every run index is claimed by a worker")
        })
        .collect()
}

/// Writes `<out>/<preset>.summary.json` for sweeps with more than one run.
pub fn write_sweep_summary(
    sweep: &Sweep,
    reports: &[RunReport],
    out: &Path,
) -> Result<Option<SweepSummary>, RunError> {
    if reports.len() < 2 {
        return Ok(None);
    }
    let runs: Vec<Summary> = reports.iter().map(|r| r.summary.clone()).collect();
    let summary = SweepSummary {
        preset: sweep.name.clone(),
        unified_moreau_time_ratio: time_ratio(&runs),
        runs,
    };
    write_json(&out.join(format!("{}.summary.json", sweep.name)), &summary)?;
    Ok(Some(summary))
}
