//! Runs one configuration, streaming rows to disk and accumulating the
//! summary statistics over every step (not only the written rows).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{columns, Row, TrajectoryWriter};
use crate::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub scheme: String,
    pub dt: f64,
    pub t_end: f64,
    pub steps: usize,
    pub rows: usize,
    /// Smallest gap over all steps and contacts (m).
    pub min_gap: f64,
    /// Time with at least one negative gap, in whole steps (s).
    pub violation_time: f64,
    pub per_contact_min: Vec<f64>,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "E_end")]
    pub e_end: f64,
    /// Largest single-step energy gain (J); zero if energy never rises.
    pub max_energy_jump: f64,
    /// Newton iterations per step mapped to the number of steps.
    pub newton_histogram: BTreeMap<usize, usize>,
    pub non_converged: usize,
    pub wall_time_s: f64,
}

impl Summary {
    pub fn exit_code(&self) -> i32 {
        if self.non_converged > 0 {
            2
        } else {
            0
        }
    }
}

/// Where a run's files went.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: Summary,
    pub trajectory: PathBuf,
    pub summary_path: PathBuf,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.summary.exit_code()
    }
}

/// `run.csv` → `run.summary.json`.
pub fn summary_path(trajectory: &Path) -> PathBuf {
    trajectory.with_extension("summary.json")
}

fn create(path: &Path) -> Result<File, RunError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    }
    File::create(path).map_err(|e| RunError::io(path, e))
}

struct Stats {
    min_gap: f64,
    per_contact_min: Vec<f64>,
    violation_steps: usize,
    e_prev: f64,
    max_jump: f64,
    histogram: BTreeMap<usize, usize>,
    non_converged: usize,
}

impl Stats {
    fn observe(&mut self, gaps: &nonsmooth_ggl::Vector, energy: f64, step: bool) {
        let mut violated = false;
        for (m, g) in self.per_contact_min.iter_mut().zip(gaps.iter()) {
            *m = m.min(*g);
            violated |= *g < 0.0;
        }
        self.min_gap = self
            .per_contact_min
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if step {
            self.violation_steps += violated as usize;
            self.max_jump = self.max_jump.max(energy - self.e_prev);
        }
        self.e_prev = energy;
    }
}

/// Simulates `cfg`, writes the trajectory to `cfg.output` and the summary
/// next to it. Non-converged steps are kept; they only change the exit code.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let (model, x0) = cfg.build_model()?;
    let model = model.as_ref();
    let solver = cfg.solver();
    solver.validate()?;
    let steps = nonsmooth_ggl::step_count(cfg.t_end, cfg.dt)?;
    let stride = cfg.record_stride.max(1);

    let file = create(&cfg.output)?;
    let cols = columns(cfg.model);
    let mut writer = TrajectoryWriter::new(BufWriter::new(file), cfg.format, &cols)
        .map_err(|e| RunError::io(&cfg.output, e))?;

    let start = Instant::now();
    let gaps = model.gaps(&x0.q);
    let e0 = model.energy(&x0.q, &x0.v);
    let gd = model.gap_jacobian(&x0.q) * &x0.v;
    writer
        .write_row(&Row::new(cfg.model, &x0, &gaps, &gd, e0, None))
        .map_err(|e| RunError::io(&cfg.output, e))?;
    let mut stats = Stats {
        min_gap: f64::INFINITY,
        per_contact_min: vec![f64::INFINITY; model.n_contacts()],
        violation_steps: 0,
        e_prev: e0,
        max_jump: 0.0,
        histogram: BTreeMap::new(),
        non_converged: 0,
    };
    stats.observe(&gaps, e0, false);

    let mut state = x0.clone();
    for n in 1..=steps {
        let mut out = nonsmooth_ggl::step(model, &state, &solver)?;
        out.state.t = x0.t + n as f64 * cfg.dt;
        let gaps = model.gaps(&out.state.q);
        let energy = model.energy(&out.state.q, &out.state.v);
        stats.observe(&gaps, energy, true);
        *stats.histogram.entry(out.iterations()).or_default() += 1;
        if !out.converged() {
            stats.non_converged += 1;
        }
        if n % stride == 0 {
            let gd = model.gap_jacobian(&out.state.q) * &out.state.v;
            writer
                .write_row(&Row::new(
                    cfg.model,
                    &out.state,
                    &gaps,
                    &gd,
                    energy,
                    Some(&out),
                ))
                .map_err(|e| RunError::io(&cfg.output, e))?;
        }
        state = out.state;
    }
    let rows = writer.rows();
    writer.finish().map_err(|e| RunError::io(&cfg.output, e))?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let summary = Summary {
        model: cfg.model.as_str().into(),
        scheme: cfg.scheme.as_str().into(),
        dt: cfg.dt,
        t_end: cfg.t_end,
        steps,
        rows,
        min_gap: stats.min_gap,
        violation_time: stats.violation_steps as f64 * cfg.dt,
        per_contact_min: stats.per_contact_min,
        e0,
        e_end: stats.e_prev,
        max_energy_jump: stats.max_jump,
        newton_histogram: stats.histogram,
        non_converged: stats.non_converged,
        wall_time_s,
    };
    let path = summary_path(&cfg.output);
    write_json(&path, &summary)?;
    Ok(RunReport {
        summary,
        trajectory: cfg.output.clone(),
        summary_path: path,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let file = create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| RunError::io(path, e.into()))?;
    std::io::Write::write_all(&mut w, b"\n").map_err(|e| RunError::io(path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| RunError::io(path, e))
}
