//! Run files: a model config plus optional sweep axes, seeds and solver
//! settings. A bare model config is accepted as a run file without sweeps.

use serde::Deserialize;
use serde_json::Value;

use dualview::amp::AmpOptions;
use dualview::linamp::LinampOptions;
use dualview::model::ModelConfig;
use dualview::se::SeOptions;
use dualview::thresholds::Axis;

use crate::error::{CliError, Result};

const MODEL_KEYS: [&str; 5] = ["d", "seed", "x", "y", "latent"];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param_path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmpSection {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub damping: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinampSection {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeSection {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub damping: Option<f64>,
    pub perturbation: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub axis: Option<Axis>,
    pub range: Option<(f64, f64)>,
    pub tol: Option<f64>,
    pub scan_points: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    CorrelationVsSnr {
        c_hat: Vec<f64>,
        snr: Vec<f64>,
    },
    SnrPair {
        c_hat: f64,
        snr_x: Vec<f64>,
        snr_y: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSection {
    pub grid: GridSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFileJson {
    model: Value,
    #[serde(default)]
    sweep: Vec<SweepAxis>,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    amp: AmpSection,
    #[serde(default)]
    linamp: LinampSection,
    #[serde(default)]
    se: SeSection,
    #[serde(default)]
    threshold: ThresholdSection,
    #[serde(default)]
    phase_diagram: Option<PhaseSection>,
}

#[derive(Debug, Clone)]
pub struct RunFile {
    pub model: Value,
    pub sweep: Vec<SweepAxis>,
    pub seeds: Option<Vec<u64>>,
    pub amp: AmpSection,
    pub linamp: LinampSection,
    pub se: SeSection,
    pub threshold: ThresholdSection,
    pub phase_diagram: Option<PhaseSection>,
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let raw: RunFileJson = if v.get("model").is_some() {
            serde_json::from_value(v)?
        } else {
            RunFileJson {
                model: v,
                sweep: Vec::new(),
                seeds: None,
                amp: AmpSection::default(),
                linamp: LinampSection::default(),
                se: SeSection::default(),
                threshold: ThresholdSection::default(),
                phase_diagram: None,
            }
        };
        let rf = RunFile {
            model: raw.model,
            sweep: raw.sweep,
            seeds: raw.seeds,
            amp: raw.amp,
            linamp: raw.linamp,
            se: raw.se,
            threshold: raw.threshold,
            phase_diagram: raw.phase_diagram,
        };
        // fail early on a broken base model
        rf.base_config()?;
        for ax in &rf.sweep {
            if ax.values.is_empty() {
                return Err(CliError::Config(format!(
                    "sweep axis `{}` has no values",
                    ax.param_path
                )));
            }
        }
        Ok(rf)
    }

    pub fn base_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig::from_json_value(self.model.clone())?)
    }

    /// Seeds to run: `count` consecutive seeds from the model seed if given,
    /// else the file's list, else the model seed alone.
    pub fn seeds(&self, count: Option<usize>) -> Result<Vec<u64>> {
        let base = self.base_config()?.seed;
        Ok(match (count, &self.seeds) {
            (Some(0), _) => return Err(CliError::Config("--seeds must be at least 1".into())),
            (Some(n), _) => (0..n as u64).map(|k| base + k).collect(),
            (None, Some(list)) if !list.is_empty() => list.clone(),
            (None, _) => vec![base],
        })
    }

    /// Cartesian product of the sweep axes in declaration order (last axis
    /// fastest). A file without sweeps yields one empty point.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new()];
        for ax in &self.sweep {
            out = out
                .into_iter()
                .flat_map(|p| {
                    ax.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn axis_names(&self) -> Vec<String> {
        self.sweep.iter().map(|a| a.param_path.clone()).collect()
    }

    /// Model config at one grid point with the given seed.
    pub fn config_at(&self, point: &[f64], seed: u64) -> Result<ModelConfig> {
        let mut model = self.model.clone();
        for (ax, &v) in self.sweep.iter().zip(point) {
            set_param(&mut model, &ax.param_path, v)?;
        }
        model["seed"] = Value::from(seed);
        Ok(ModelConfig::from_json_value(model)?)
    }

    pub fn amp_options(&self) -> AmpOptions {
        let d = AmpOptions::default();
        AmpOptions {
            max_iters: self.amp.max_iters.unwrap_or(d.max_iters),
            tol: self.amp.tol.unwrap_or(d.tol),
            damping: self.amp.damping.unwrap_or(d.damping),
        }
    }

    pub fn linamp_options(&self) -> LinampOptions {
        let d = LinampOptions::default();
        LinampOptions {
            max_iters: self.linamp.max_iters.unwrap_or(d.max_iters),
            tol: self.linamp.tol.unwrap_or(d.tol),
        }
    }

    pub fn se_options(&self) -> SeOptions {
        let d = SeOptions::default();
        SeOptions {
            damping: self.se.damping.unwrap_or(d.damping),
            tol: self.se.tol.unwrap_or(d.tol),
            max_iters: self.se.max_iters.unwrap_or(d.max_iters),
            perturbation: self.se.perturbation.unwrap_or(d.perturbation),
        }
    }
}

/// Writes `value` at a dotted path of the model JSON. Paths not rooted at a
/// model key (`sigma_xi`, `lambda`, `w_prior.param`, ...) apply to both
/// views; `alpha` sets `n = round(d/alpha)` in both views.
pub fn set_param(model: &mut Value, path: &str, value: f64) -> Result<()> {
    if path == "alpha" {
        if !(value > 0.0 && value.is_finite()) {
            return Err(CliError::Config(format!("alpha must be positive, got {value}")));
        }
        let d = model["d"]
            .as_u64()
            .ok_or_else(|| CliError::Config("model has no integer `d`".into()))?;
        let n = ((d as f64 / value).round() as u64).max(1);
        for view in ["x", "y"] {
            set_path(model, &format!("{view}.n"), Value::from(n))?;
        }
        return Ok(());
    }
    let head = path.split('.').next().unwrap_or_default();
    let json = number(path, value)?;
    if MODEL_KEYS.contains(&head) {
        set_path(model, path, json)
    } else {
        for view in ["x", "y"] {
            set_path(model, &format!("{view}.{path}"), json.clone())?;
        }
        Ok(())
    }
}

fn number(path: &str, value: f64) -> Result<Value> {
    let integral = matches!(path.rsplit('.').next(), Some("d" | "n" | "seed"));
    if integral {
        if value < 0.0 || value.fract() != 0.0 {
            return Err(CliError::Config(format!(
                "`{path}` needs a non-negative integer, got {value}"
            )));
        }
        Ok(Value::from(value as u64))
    } else {
        serde_json::Number::from_f64(value)
            .map(Value::Number)
            .ok_or_else(|| CliError::Config(format!("`{path}` must be finite, got {value}")))
    }
}

fn set_path(model: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = model;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{path}`: `{key}` is not inside an object")))?;
        if !obj.contains_key(*key) {
            return Err(CliError::Config(format!(
                "unknown parameter path `{path}` (no key `{key}`)"
            )));
        }
        if i + 1 == parts.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        cur = obj.get_mut(*key).expect("checked above");
    }
    Err(CliError::Config("empty parameter path".into()))
}
