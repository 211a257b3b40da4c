//! Flat `key=value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use nonsmooth_ggl::{
    step_count, BilateralSliderCrank, BouncingBall, BouncingBallParams, GeneralizedState,
    MechanicalModel, RMode, Scheme, SliderCrankParams, SolverConfig, UnilateralSliderCrank,
};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    SliderUnilateral,
    SliderBilateral,
    Ball,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::SliderUnilateral,
        ModelKind::SliderBilateral,
        ModelKind::Ball,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::SliderUnilateral => "slider_unilateral",
            ModelKind::SliderBilateral => "slider_bilateral",
            ModelKind::Ball => "ball",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn n_contacts(&self) -> usize {
        match self {
            ModelKind::SliderUnilateral => 4,
            ModelKind::SliderBilateral => 1,
            ModelKind::Ball => 1,
        }
    }

    /// Restitution used when the config gives none.
    pub fn default_epsilon(&self) -> Vec<f64> {
        match self {
            ModelKind::SliderUnilateral => vec![0.1; 4],
            ModelKind::SliderBilateral => Vec::new(),
            ModelKind::Ball => vec![BouncingBallParams::default().eps],
        }
    }

    pub fn default_dt(&self) -> f64 {
        match self {
            ModelKind::SliderUnilateral => 1e-5,
            ModelKind::SliderBilateral | ModelKind::Ball => 1e-4,
        }
    }

    /// Which models a scheme can run on, as the error text names them.
    fn compatible(&self, scheme: Scheme) -> Result<(), &'static str> {
        match (scheme.is_bilateral(), self) {
            (true, ModelKind::SliderBilateral) => Ok(()),
            (true, _) => Err("slider_bilateral"),
            (false, ModelKind::SliderBilateral) => Err("slider_unilateral or ball"),
            (false, _) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn as_str(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn extension(&self) -> &'static str {
        self.as_str()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    /// One entry per contact; empty for the bilateral model.
    pub epsilon: Vec<f64>,
    pub r_mode: RMode,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub active_tol: f64,
    pub end_of_step_activation: bool,
    /// Trajectory file; the summary goes next to it.
    pub output: PathBuf,
    pub format: Format,
    pub record_stride: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    Value {
        line: usize,
        key: &'static str,
        message: String,
    },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("line {line}: scheme {scheme} requires model {requires}")]
    Incompatible {
        line: usize,
        scheme: &'static str,
        requires: &'static str,
    },
}

const KEYS: [&str; 13] = [
    "model",
    "scheme",
    "dt",
    "t_end",
    "epsilon",
    "r_mode",
    "newton_tol",
    "max_iter",
    "active_tol",
    "end_of_step_activation",
    "output",
    "format",
    "record_stride",
];

/// Rows written per step: one row per 1e-4 s of simulated time.
pub fn default_stride(dt: f64) -> usize {
    ((1e-4 / dt).round() as usize).max(1)
}

fn default_output(model: ModelKind, scheme: Scheme, format: Format) -> PathBuf {
    PathBuf::from(format!(
        "{}_{}.{}",
        model.as_str(),
        scheme,
        format.extension()
    ))
}

impl RunConfig {
    /// A fully defaulted configuration.
    pub fn new(model: ModelKind, scheme: Scheme) -> Self {
        let dt = model.default_dt();
        let solver = SolverConfig::default();
        Self {
            model,
            scheme,
            dt,
            t_end: 0.5,
            epsilon: model.default_epsilon(),
            r_mode: solver.r_mode,
            newton_tol: solver.newton_tol,
            max_iter: solver.max_iter,
            active_tol: solver.active_tol,
            end_of_step_activation: solver.end_of_step_activation,
            output: default_output(model, scheme, Format::Csv),
            format: Format::Csv,
            record_stride: default_stride(dt),
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            scheme: self.scheme,
            dt: self.dt,
            newton_tol: self.newton_tol,
            max_iter: self.max_iter,
            active_tol: self.active_tol,
            r_mode: self.r_mode,
            end_of_step_activation: self.end_of_step_activation,
        }
    }

    pub fn steps(&self) -> usize {
        step_count(self.t_end, self.dt).unwrap_or(0)
    }

    /// The configured model and its initial state.
    pub fn build_model(
        &self,
    ) -> nonsmooth_ggl::Result<(Box<dyn MechanicalModel>, GeneralizedState)> {
        Ok(match self.model {
            ModelKind::SliderUnilateral => {
                let m = UnilateralSliderCrank::new(SliderCrankParams::default(), &self.epsilon)?;
                let x0 = m.initial_state();
                (Box::new(m), x0)
            }
            ModelKind::SliderBilateral => {
                let m = BilateralSliderCrank::new(SliderCrankParams {
                    unilateral: false,
                    ..Default::default()
                })?;
                let x0 = m.initial_state();
                (Box::new(m), x0)
            }
            ModelKind::Ball => {
                let m = BouncingBall::new(BouncingBallParams {
                    eps: self.epsilon[0],
                    ..Default::default()
                })?;
                let x0 = m.initial_state();
                (Box::new(m), x0)
            }
        })
    }

    /// Canonical text form; [`parse_config`] reads it back unchanged.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("model", self.model.as_str().into());
        put("scheme", self.scheme.as_str().into());
        put("dt", format!("{:?}", self.dt));
        put("t_end", format!("{:?}", self.t_end));
        if !self.epsilon.is_empty() {
            let eps: Vec<String> = self.epsilon.iter().map(|e| format!("{e:?}")).collect();
            put("epsilon", eps.join(","));
        }
        put(
            "r_mode",
            match self.r_mode {
                RMode::Delassus => "delassus".into(),
                RMode::Unit => "unit".into(),
                RMode::Scalar(r) => format!("{r:?}"),
            },
        );
        put("newton_tol", format!("{:?}", self.newton_tol));
        put("max_iter", self.max_iter.to_string());
        put("active_tol", format!("{:?}", self.active_tol));
        put(
            "end_of_step_activation",
            self.end_of_step_activation.to_string(),
        );
        put("output", self.output.display().to_string());
        put("format", self.format.as_str().into());
        put("record_stride", self.record_stride.to_string());
        s
    }
}

fn value_err(line: usize, key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        line,
        key,
        message: message.into(),
    }
}

fn parse_f64(line: usize, key: &'static str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v
        .parse()
        .map_err(|_| value_err(line, key, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(value_err(line, key, "must be finite"));
    }
    Ok(x)
}

fn positive(line: usize, key: &'static str, v: &str) -> Result<f64, ConfigError> {
    let x = parse_f64(line, key, v)?;
    if x <= 0.0 {
        return Err(value_err(line, key, "must be positive"));
    }
    Ok(x)
}

fn parse_usize(line: usize, key: &'static str, v: &str) -> Result<usize, ConfigError> {
    match v.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(value_err(
            line,
            key,
            format!("`{v}` is not a positive integer"),
        )),
    }
}

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// ignored; `model` and `scheme` are required, everything else defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: Vec<(usize, &'static str, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (k, v) = trimmed.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            text: trimmed.to_string(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        let key = KEYS
            .iter()
            .copied()
            .find(|known| *known == k)
            .ok_or_else(|| ConfigError::UnknownKey {
                line,
                key: k.to_string(),
            })?;
        if entries.iter().any(|(_, seen, _)| *seen == key) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        entries.push((line, key, v));
    }
    let get = |key: &str| {
        entries
            .iter()
            .find(|(_, k, _)| *k == key)
            .map(|(l, _, v)| (*l, *v))
    };

    let (model_line, model) = get("model").ok_or(ConfigError::Missing("model"))?;
    let model = ModelKind::parse(model)
        .ok_or_else(|| value_err(model_line, "model", format!("unknown model `{model}`")))?;
    let (scheme_line, scheme) = get("scheme").ok_or(ConfigError::Missing("scheme"))?;
    let scheme = Scheme::parse(scheme)
        .ok_or_else(|| value_err(scheme_line, "scheme", format!("unknown scheme `{scheme}`")))?;
    model
        .compatible(scheme)
        .map_err(|requires| ConfigError::Incompatible {
            line: scheme_line,
            scheme: scheme.as_str(),
            requires,
        })?;

    let mut cfg = RunConfig::new(model, scheme);
    let mut output_given = false;
    let mut stride_given = false;
    for &(line, key, v) in &entries {
        match key {
            "model" | "scheme" => {}
            "dt" => cfg.dt = positive(line, key, v)?,
            "t_end" => {
                cfg.t_end = parse_f64(line, key, v)?;
                if cfg.t_end < 0.0 {
                    return Err(value_err(line, key, "must be non-negative"));
                }
            }
            "epsilon" => {
                let n = model.n_contacts();
                if model == ModelKind::SliderBilateral {
                    return Err(value_err(line, key, "not used by model slider_bilateral"));
                }
                if v.is_empty() {
                    continue;
                }
                let vals = v
                    .split(',')
                    .map(|p| parse_f64(line, key, p.trim()))
                    .collect::<Result<Vec<_>, _>>()?;
                if vals.iter().any(|e| !(0.0..=1.0).contains(e)) {
                    return Err(value_err(line, key, "must lie in [0, 1]"));
                }
                cfg.epsilon = match vals.len() {
                    1 => vec![vals[0]; n],
                    k if k == n => vals,
                    k => {
                        return Err(value_err(
                            line,
                            key,
                            format!("expected 1 or {n} values, got {k}"),
                        ))
                    }
                };
            }
            "r_mode" => {
                cfg.r_mode = match v {
                    "delassus" => RMode::Delassus,
                    "unit" => RMode::Unit,
                    other => RMode::Scalar(positive(line, key, other)?),
                }
            }
            "newton_tol" => cfg.newton_tol = positive(line, key, v)?,
            "max_iter" => cfg.max_iter = parse_usize(line, key, v)?,
            "active_tol" => cfg.active_tol = parse_f64(line, key, v)?,
            "end_of_step_activation" => {
                cfg.end_of_step_activation = v
                    .parse()
                    .map_err(|_| value_err(line, key, "expected true or false"))?
            }
            "output" => {
                if v.is_empty() {
                    return Err(value_err(line, key, "empty path"));
                }
                cfg.output = PathBuf::from(v);
                output_given = true;
            }
            "format" => {
                cfg.format = match v {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(value_err(line, key, "expected csv or json")),
                }
            }
            "record_stride" => {
                cfg.record_stride = parse_usize(line, key, v)?;
                stride_given = true;
            }
            _ => unreachable!("key list and match arms disagree"),
        }
    }
    if !stride_given {
        cfg.record_stride = default_stride(cfg.dt);
    }
    if !output_given {
        cfg.output = default_output(model, scheme, cfg.format);
    }
    if let Some((line, _)) = get("t_end").or(get("dt")) {
        step_count(cfg.t_end, cfg.dt).map_err(|e| value_err(line, "t_end", e.to_string()))?;
    } else {
        step_count(cfg.t_end, cfg.dt).map_err(|e| value_err(0, "t_end", e.to_string()))?;
    }
    Ok(cfg)
}
