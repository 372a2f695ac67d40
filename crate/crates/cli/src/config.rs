//! Experiment config files and run manifests.
//!
//! A config is TOML with one table per module:
//!
//! ```toml
//! [train]
//! experiment = "xor"
//! alpha_d = 1.0
//!
//! [noise]
//! preset = "off"
//!
//! [ansatz]
//! real_mode = "inject"
//! ```
//!
//! Keys missing from `[train]` fall back to the experiment's preset.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use qgan_forge::ansatz::{Experiment, RealMode};
use qgan_forge::noise::{NoiseModel, QubitNoise};
use qgan_forge::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    train: Option<toml::Table>,
    noise: Option<NoiseSection>,
    ansatz: Option<AnsatzSection>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub preset: Option<String>,
    pub dd_protected_idle: Option<bool>,
    pub depolarizing: Option<f64>,
    pub t1_us: Option<Vec<f64>>,
    pub t2star_us: Option<Vec<f64>>,
    pub f0: Option<Vec<f64>>,
    pub f1: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnsatzSection {
    real_mode: Option<RealMode>,
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub train: TrainConfig,
    pub noise: NoiseModel,
}

pub fn parse_config(text: &str, origin: &str) -> Result<Resolved> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| anyhow!("{origin}: {e}"))?;
    let table = file.train.ok_or_else(|| anyhow!("{origin}: missing [train] section"))?;
    let experiment: Experiment = match table.get("experiment") {
        Some(toml::Value::String(s)) => s.parse().map_err(|e| anyhow!("{origin}: [train] experiment: {e}"))?,
        Some(_) => bail!("{origin}: [train] experiment must be a string"),
        None => bail!("{origin}: [train] is missing the 'experiment' key"),
    };
    let mut merged = toml::Table::try_from(TrainConfig::preset(experiment)).context("serializing preset")?;
    for (k, v) in table {
        merged.insert(k, v);
    }
    let mut train: TrainConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| anyhow!("{origin}: [train] {}", e.message()))?;
    if let Some(mode) = file.ansatz.and_then(|a| a.real_mode) {
        train.real_mode = mode;
    }
    train.validate().map_err(|e| anyhow!("{origin}: [train] {e}"))?;
    let noise = resolve_noise(&file.noise.unwrap_or_default()).map_err(|e| anyhow!("{origin}: [noise] {e}"))?;
    Ok(Resolved { train, noise })
}

pub fn load_config(path: &Path) -> Result<Resolved> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text, &path.display().to_string())
}

pub fn resolve_noise(section: &NoiseSection) -> Result<NoiseModel> {
    let mut model = NoiseModel::preset(section.preset.as_deref().unwrap_or("off"))?;
    if let Some(dd) = section.dd_protected_idle {
        model.dd_protected_idle = dd;
    }
    if let Some(p) = section.depolarizing {
        model.depolarizing = p;
    }
    let overrides: [(&str, &Option<Vec<f64>>, fn(&mut QubitNoise, f64)); 4] = [
        ("t1_us", &section.t1_us, |q, v| q.t1_us = v),
        ("t2star_us", &section.t2star_us, |q, v| q.t2star_us = v),
        ("f0", &section.f0, |q, v| q.f0 = v),
        ("f1", &section.f1, |q, v| q.f1 = v),
    ];
    for (name, values, set) in overrides {
        if let Some(values) = values {
            if values.len() != model.qubits.len() {
                bail!("{name} needs {} entries, got {}", model.qubits.len(), values.len());
            }
            for (q, &v) in model.qubits.iter_mut().zip(values) {
                set(q, v);
            }
        }
    }
    model.validate()?;
    Ok(model)
}

/// `--noise off|table-s1|PATH`. A path names a TOML file holding a noise
/// section, either bare or under `[noise]`.
pub fn noise_from_flag(flag: &str) -> Result<NoiseModel> {
    match flag {
        "off" | "table-s1" => Ok(NoiseModel::preset(flag)?),
        path => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading noise file {path}"))?;
            let value: toml::Table = toml::from_str(&text).map_err(|e| anyhow!("{path}: {e}"))?;
            let table = match value.get("noise") {
                Some(toml::Value::Table(t)) => t.clone(),
                _ => value,
            };
            let section: NoiseSection = table.try_into().map_err(|e: toml::de::Error| anyhow!("{path}: {}", e.message()))?;
            resolve_noise(&section).map_err(|e| anyhow!("{path}: {e}"))
        }
    }
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    pub train: TrainConfig,
    pub noise: NoiseModel,
    pub seed: u64,
    pub artifact_version: String,
    pub output_dir: PathBuf,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        m.train.validate()?;
        m.noise.validate()?;
        Ok(m)
    }
}
