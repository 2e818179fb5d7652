//! Plain-text run configuration: `key = value` sections, parsed as TOML.
//! Configs are the reproducibility artifact; every field is validated
//! against the module preconditions before any compute starts.

use serde::Deserialize;
use transwave::grid::TorusGrid;
use transwave::timejets::{CoefficientModel, ModelKind, ScalingParams};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub grid: GridSection,
    pub model: ModelSection,
    pub run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub resolution: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub id: String,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub h_amplitude: f64,
    #[serde(default)]
    pub level: f64,
    #[serde(default)]
    pub strength: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub s: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_horizon")]
    pub t_horizon: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub suites: Vec<String>,
}

fn default_delta() -> f64 {
    0.5
}
fn default_horizon() -> f64 {
    0.25
}
fn default_tol() -> f64 {
    1e-9
}

/// Built-in model identifiers with their parameter hints.
pub const MODEL_IDS: [(&str, &str); 5] = [
    ("flat", "A = diag(-1, 1, ..), no sources"),
    ("constant_source", "flat principal part, interior source `level`"),
    (
        "quasilinear",
        "A varies with U^2 (`amplitude`), interior source `h_amplitude` U^2",
    ),
    (
        "cubic_focusing",
        "flat principal part, focusing force `strength` U^3, interior `h_amplitude` U",
    ),
    (
        "gradient_coupled",
        "fully quasi-linear: A varies with |DU|^2 (`amplitude`)",
    ),
];

pub const SUITE_NAMES: [&str; 6] = [
    "norms",
    "smoothing",
    "elliptic",
    "timejets",
    "waves",
    "quasilinear",
];

#[derive(Debug)]
pub struct ValidConfig {
    pub grid: TorusGrid,
    pub model: CoefficientModel,
    pub model_id: String,
    pub s: usize,
    pub params: ScalingParams,
    pub t_horizon: f64,
    pub tol: f64,
    pub suites: Vec<String>,
}

/// Parse and validate; errors name the first failing constraint (parse
/// errors from the TOML layer carry the offending line).
pub fn load(text: &str) -> Result<ValidConfig, String> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
    let grid = TorusGrid::new(raw.grid.n, raw.grid.resolution)
        .map_err(|e| format!("grid section: {e}"))?;
    let kind = match raw.model.id.as_str() {
        "flat" => ModelKind::Flat,
        "constant_source" => ModelKind::ConstantSource {
            level: raw.model.level,
        },
        "quasilinear" => ModelKind::Quasilinear {
            amplitude: raw.model.amplitude,
            h_amplitude: raw.model.h_amplitude,
        },
        "cubic_focusing" => ModelKind::CubicFocusing {
            strength: raw.model.strength,
            h_amplitude: raw.model.h_amplitude,
        },
        "gradient_coupled" => ModelKind::GradientCoupled {
            amplitude: raw.model.amplitude,
        },
        other => {
            return Err(format!(
                "model section: unknown id '{other}' (see `transwave list-models`)"
            ))
        }
    };
    if raw.run.s > 3 {
        return Err(format!(
            "run section: s = {} exceeds the stencil cap (s <= 3)",
            raw.run.s
        ));
    }
    let params = ScalingParams::new(raw.run.delta, raw.run.s, raw.grid.n)
        .map_err(|e| format!("run section: {e}"))?;
    if !(raw.run.t_horizon > 0.0) {
        return Err("run section: t_horizon must be positive".into());
    }
    if !(raw.run.tol > 0.0) {
        return Err("run section: tol must be positive".into());
    }
    for s in &raw.run.suites {
        if !SUITE_NAMES.contains(&s.as_str()) {
            return Err(format!(
                "run section: unknown suite '{s}' (available: {})",
                SUITE_NAMES.join(", ")
            ));
        }
    }
    Ok(ValidConfig {
        grid,
        model: CoefficientModel::new(kind),
        model_id: raw.model.id,
        s: raw.run.s,
        params,
        t_horizon: raw.run.t_horizon,
        tol: raw.run.tol,
        suites: raw.run.suites.clone(),
    })
}
