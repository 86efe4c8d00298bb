//! Config-document parsing and validation.
//!
//! Experiments are declared in a TOML document:
//!
//! ```toml
//! x0 = [0.0]            # initial state, length n
//! t  = 1.0              # horizon
//!
//! [system]
//! n = 1                 # state dimension
//! m = 1                 # control dimension
//! drift = ["0"]         # f0, n expressions in x0…x{n-1}
//! f1 = ["1"]            # controlled fields f1…fm, n expressions each
//!
//! [omega]
//! kind = "box"          # box | ball | hull
//! lower = [-1.0]
//! upper = [1.0]
//!
//! [spec]                # sampling plan (defaults shown in --help)
//! N = 2                 # switching pieces
//! k = 4                 # control-net resolution
//! h = 0.01              # integration step
//! r = 0.005             # cloud dedup resolution
//!
//! [experiment]
//! deltas = [0.4, 0.2, 0.1, 0.05]
//! functional = "x0"
//! ```
//!
//! Unknown keys are rejected so typos surface immediately; duplicate keys are
//! rejected by the TOML parser itself. Dimensions are cross-checked before
//! any computation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::{parse_expression, state_vars, Expr};
use crate::omega::OmegaSet;
use crate::reach::{ReachSpec, SampleMode, DEFAULT_BUDGET};
use crate::system::ControlAffineSystem;

pub const DEFAULT_SWITCHES: usize = 2;
pub const DEFAULT_VALUES: usize = 4;
pub const DEFAULT_STEP: f64 = 0.01;
pub const DEFAULT_DEDUP: f64 = 0.005;
pub const DEFAULT_SAMPLES: usize = 2000;
pub const DEFAULT_PROBES: usize = 8;
pub const DEFAULT_DICT_DEPTH: usize = 4;
pub const DEFAULT_LEVELS: usize = 4;
pub const DEFAULT_CHATTER: [usize; 4] = [4, 8, 16, 32];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: RawSystem,
    omega: RawOmega,
    x0: Vec<f64>,
    t: f64,
    #[serde(default)]
    spec: RawSpec,
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    output_dir: Option<String>,
}

// `deny_unknown_fields` cannot be combined with the flattened field map that
// collects f1…fm, so unknown keys in this block are caught by hand below.
#[derive(Debug, Deserialize)]
struct RawSystem {
    n: usize,
    m: usize,
    drift: Vec<String>,
    #[serde(flatten)]
    fields: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOmega {
    kind: String,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    center: Option<Vec<f64>>,
    radius: Option<f64>,
    vertices: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(rename = "N", default = "default_switches")]
    switches: usize,
    #[serde(default = "default_values")]
    k: usize,
    #[serde(default = "default_step")]
    h: f64,
    #[serde(default = "default_dedup")]
    r: f64,
    #[serde(default = "default_mode")]
    mode: String,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default = "default_budget")]
    budget: u64,
}

fn default_switches() -> usize {
    DEFAULT_SWITCHES
}
fn default_values() -> usize {
    DEFAULT_VALUES
}
fn default_step() -> f64 {
    DEFAULT_STEP
}
fn default_dedup() -> f64 {
    DEFAULT_DEDUP
}
fn default_mode() -> String {
    "exhaustive".into()
}
fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

impl Default for RawSpec {
    fn default() -> Self {
        Self {
            switches: DEFAULT_SWITCHES,
            k: DEFAULT_VALUES,
            h: DEFAULT_STEP,
            r: DEFAULT_DEDUP,
            mode: default_mode(),
            seed: 0,
            samples: DEFAULT_SAMPLES,
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    kind: Option<String>,
    deltas: Option<Vec<f64>>,
    probes: Option<usize>,
    functional: Option<String>,
    dictionary_depth: Option<usize>,
    chatter_switches: Option<Vec<usize>>,
    levels: Option<usize>,
}

/// Experiment-block settings with defaults resolved.
#[derive(Debug, Clone)]
pub struct ExperimentSettings {
    /// Informational label of the intended experiment; the CLI subcommand
    /// decides what actually runs.
    pub kind: Option<String>,
    pub deltas: Vec<f64>,
    pub probes: usize,
    pub functional_src: Option<String>,
    pub functional: Option<Expr>,
    pub dictionary_depth: usize,
    pub chatter_switches: Vec<usize>,
    pub levels: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: ControlAffineSystem,
    pub omega: OmegaSet,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub spec: ReachSpec,
    pub experiment: ExperimentSettings,
    pub output_dir: Option<PathBuf>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn build_omega(raw: &RawOmega) -> Result<OmegaSet> {
    let forbid = |field: &str, present: bool| -> Result<()> {
        if present {
            Err(cfg_err(format!(
                "omega kind `{}` does not take field `{}`",
                raw.kind, field
            )))
        } else {
            Ok(())
        }
    };
    match raw.kind.as_str() {
        "box" => {
            forbid("center", raw.center.is_some())?;
            forbid("radius", raw.radius.is_some())?;
            forbid("vertices", raw.vertices.is_some())?;
            let lower = raw
                .lower
                .clone()
                .ok_or_else(|| cfg_err("omega box requires `lower`"))?;
            let upper = raw
                .upper
                .clone()
                .ok_or_else(|| cfg_err("omega box requires `upper`"))?;
            OmegaSet::box_set(lower, upper).map_err(|e| cfg_err(format!("omega: {e}")))
        }
        "ball" => {
            forbid("lower", raw.lower.is_some())?;
            forbid("upper", raw.upper.is_some())?;
            forbid("vertices", raw.vertices.is_some())?;
            let center = raw
                .center
                .clone()
                .ok_or_else(|| cfg_err("omega ball requires `center`"))?;
            let radius = raw
                .radius
                .ok_or_else(|| cfg_err("omega ball requires `radius`"))?;
            OmegaSet::ball(center, radius).map_err(|e| cfg_err(format!("omega: {e}")))
        }
        "hull" => {
            forbid("lower", raw.lower.is_some())?;
            forbid("upper", raw.upper.is_some())?;
            forbid("center", raw.center.is_some())?;
            forbid("radius", raw.radius.is_some())?;
            let vertices = raw
                .vertices
                .clone()
                .ok_or_else(|| cfg_err("omega hull requires `vertices`"))?;
            OmegaSet::hull(vertices).map_err(|e| cfg_err(format!("omega: {e}")))
        }
        other => Err(cfg_err(format!(
            "unknown omega kind `{other}` (expected box, ball or hull)"
        ))),
    }
}

fn build_system(raw: &RawSystem) -> Result<ControlAffineSystem> {
    if raw.n == 0 || raw.m == 0 {
        return Err(cfg_err("system.n and system.m must be positive"));
    }
    if raw.drift.len() != raw.n {
        return Err(cfg_err(format!(
            "system.drift has {} expressions, expected n = {}",
            raw.drift.len(),
            raw.n
        )));
    }
    // the flattened map must hold exactly f1…fm
    let mut fields: Vec<Vec<String>> = Vec::with_capacity(raw.m);
    for j in 1..=raw.m {
        let key = format!("f{j}");
        let value = raw
            .fields
            .get(&key)
            .ok_or_else(|| cfg_err(format!("m = {} but controlled field `{key}` is missing", raw.m)))?;
        let exprs: Vec<String> = value
            .clone()
            .try_into()
            .map_err(|_| cfg_err(format!("system.{key} must be an array of expression strings")))?;
        if exprs.len() != raw.n {
            return Err(cfg_err(format!(
                "system.{key} has {} expressions, expected n = {}",
                exprs.len(),
                raw.n
            )));
        }
        fields.push(exprs);
    }
    for key in raw.fields.keys() {
        let recognized = key
            .strip_prefix('f')
            .and_then(|s| s.parse::<usize>().ok())
            .map(|j| j >= 1 && j <= raw.m)
            .unwrap_or(false);
        if !recognized {
            return Err(cfg_err(format!("unknown key `{key}` in [system]")));
        }
    }
    let vars = state_vars(raw.n);
    let parse_all = |label: &str, exprs: &[String]| -> Result<Vec<Expr>> {
        exprs
            .iter()
            .enumerate()
            .map(|(i, src)| {
                parse_expression(src, &vars)
                    .map_err(|e| cfg_err(format!("system.{label}[{i}]: {e}")))
            })
            .collect()
    };
    let drift = parse_all("drift", &raw.drift)?;
    let controlled = fields
        .iter()
        .enumerate()
        .map(|(j, f)| parse_all(&format!("f{}", j + 1), f))
        .collect::<Result<Vec<_>>>()?;
    ControlAffineSystem::new(raw.n, raw.m, drift, controlled)
        .map_err(|e| cfg_err(format!("system: {e}")))
}

fn build_spec(raw: &RawSpec) -> Result<ReachSpec> {
    let mode = match raw.mode.as_str() {
        "exhaustive" => SampleMode::Exhaustive,
        "random" => SampleMode::Random {
            seed: raw.seed,
            samples: raw.samples,
        },
        other => {
            return Err(cfg_err(format!(
                "spec.mode must be `exhaustive` or `random`, got `{other}`"
            )))
        }
    };
    let spec = ReachSpec {
        switch_count: raw.switches,
        value_resolution: raw.k,
        step: raw.h,
        dedup_resolution: raw.r,
        mode,
        budget: raw.budget,
    };
    spec.validate().map_err(|e| cfg_err(format!("spec: {e}")))?;
    Ok(spec)
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;

    let system = build_system(&raw.system)?;
    let omega = build_omega(&raw.omega)?;
    if omega.dim() != system.control_dim() {
        return Err(cfg_err(format!(
            "omega has dimension {}, expected m = {}",
            omega.dim(),
            system.control_dim()
        )));
    }
    if raw.x0.len() != system.state_dim() {
        return Err(cfg_err(format!(
            "x0 has length {}, expected n = {}",
            raw.x0.len(),
            system.state_dim()
        )));
    }
    if raw.x0.iter().any(|v| !v.is_finite()) {
        return Err(cfg_err("x0 must be finite"));
    }
    if !(raw.t > 0.0) || !raw.t.is_finite() {
        return Err(cfg_err("t must be a positive finite horizon"));
    }
    let spec = build_spec(&raw.spec)?;
    if spec.step > raw.t {
        return Err(cfg_err(format!(
            "spec.h = {} exceeds the horizon t = {}",
            spec.step, raw.t
        )));
    }

    let exp = &raw.experiment;
    if let Some(deltas) = &exp.deltas {
        if deltas.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(cfg_err("experiment.deltas must be positive"));
        }
    }
    let functional = match &exp.functional {
        Some(src) => Some(
            parse_expression(src, &state_vars(system.state_dim()))
                .map_err(|e| cfg_err(format!("experiment.functional: {e}")))?,
        ),
        None => None,
    };
    let probes = exp.probes.unwrap_or(DEFAULT_PROBES);
    if probes == 0 {
        return Err(cfg_err("experiment.probes must be >= 1"));
    }
    let dictionary_depth = exp.dictionary_depth.unwrap_or(DEFAULT_DICT_DEPTH);
    if dictionary_depth > 16 {
        return Err(cfg_err("experiment.dictionary_depth must be <= 16"));
    }
    let chatter = exp
        .chatter_switches
        .clone()
        .unwrap_or_else(|| DEFAULT_CHATTER.to_vec());
    if chatter.is_empty() || chatter.contains(&0) {
        return Err(cfg_err("experiment.chatter_switches must be positive"));
    }
    let levels = exp.levels.unwrap_or(DEFAULT_LEVELS);
    if levels == 0 {
        return Err(cfg_err("experiment.levels must be >= 1"));
    }

    Ok(ExperimentConfig {
        system,
        omega,
        x0: raw.x0,
        horizon: raw.t,
        spec,
        experiment: ExperimentSettings {
            kind: exp.kind.clone(),
            deltas: exp.deltas.clone().unwrap_or_default(),
            probes,
            functional_src: exp.functional.clone(),
            functional,
            dictionary_depth,
            chatter_switches: chatter,
            levels,
        },
        output_dir: raw.output_dir.clone().map(PathBuf::from),
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Built-in demo configs, also shipped as files under `configs/`.
pub const DEMO_NAMES: [&str; 5] = [
    "single_integrator",
    "double_integrator",
    "linear2d",
    "vanderpol",
    "bilinear",
];

pub fn demo_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "single_integrator" => include_str!("../configs/single_integrator.toml"),
        "double_integrator" => include_str!("../configs/double_integrator.toml"),
        // the double integrator again, tuned for the convergence study
        "double_integrator_converge" => {
            include_str!("../configs/double_integrator_converge.toml")
        }
        "linear2d" => include_str!("../configs/linear2d.toml"),
        "vanderpol" => include_str!("../configs/vanderpol.toml"),
        "bilinear" => include_str!("../configs/bilinear.toml"),
        _ => return None,
    })
}

/// Resolve a `--config` argument: an existing file path, or a demo name.
pub fn resolve_config(arg: &str) -> Result<ExperimentConfig> {
    let path = Path::new(arg);
    if path.exists() {
        return load_config(path);
    }
    if let Some(src) = demo_source(arg) {
        return parse_config(src);
    }
    Err(cfg_err(format!(
        "config `{arg}` is neither a file nor a demo name (demos: {})",
        DEMO_NAMES.join(", ")
    )))
}
