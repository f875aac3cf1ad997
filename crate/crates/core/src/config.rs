//! Experiment configuration: one TOML file, overridable key by key.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::TsneConfig;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::waveform::{range_resolution, ChirpSpec};
use crate::xai::LrpConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// rad/s.
    pub rotation_rate: f64,
    pub standoff_range: f64,
    pub scene_radius: f64,
    /// Overall span of the target archetypes, m.
    pub target_scale: f64,
    pub n_pulses: usize,
    /// `None` synthesizes noise-free echoes.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Back-projection grid is `size × size`.
    pub size: usize,
    pub pixel_spacing: f64,
    pub upsample: usize,
    pub exact_range: bool,
    pub hamming: bool,
    /// Side of the stored (and network input) image.
    pub image_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub per_class: usize,
    pub train_per_class: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleConfig {
    /// Archetype name used for the library and the test captures.
    pub target: String,
    pub n_images: usize,
    pub snr_db: Option<f64>,
    /// Half-open `[lo, hi)` ranges in degrees.
    pub ranges: Vec<[f64; 2]>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub radar: ChirpSpec,
    pub scene: SceneConfig,
    pub grid: GridConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub lrp: LrpConfig,
    pub tsne: TsneConfig,
    pub angle: AngleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::band_8ghz()
    }
}

impl ExperimentConfig {
    /// 32–40 GHz with 100 captures per class (50 for training).
    ///
    /// A 0.1 µs pulse and 100 µs PRI keep simulation cheap; 84 pulses at
    /// 4π rad/s span about 6° of rotation.
    pub fn band_8ghz() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("out"),
            radar: ChirpSpec {
                f_start: 32e9,
                f_stop: 40e9,
                pulse_width: 0.1e-6,
                pri: 100e-6,
                sample_rate: 10e9,
            },
            scene: SceneConfig {
                rotation_rate: 4.0 * PI,
                standoff_range: 5.0,
                scene_radius: 0.3,
                target_scale: 0.4,
                n_pulses: 84,
                snr_db: Some(20.0),
            },
            grid: GridConfig {
                size: 128,
                pixel_spacing: SPACING_8GHZ,
                upsample: 8,
                exact_range: false,
                hamming: false,
                image_size: 128,
            },
            dataset: DatasetConfig {
                per_class: 100,
                train_per_class: 50,
                seed: 1,
            },
            train: TrainConfig::default(),
            lrp: LrpConfig::default(),
            tsne: TsneConfig::default(),
            angle: AngleConfig {
                target: "UAV".into(),
                n_images: 100,
                snr_db: Some(20.0),
                ranges: (0..12).map(|i| [30.0 * i as f64, 30.0 * (i + 1) as f64]).collect(),
                seed: 2,
            },
        }
    }

    /// 36–40 GHz on the same image grid, 80 captures per class.
    pub fn band_4ghz() -> Self {
        let mut cfg = Self::band_8ghz();
        cfg.radar.f_start = 36e9;
        cfg.dataset.per_class = 80;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.train.validate()?;
        self.lrp.validate()?;
        let s = &self.scene;
        if !(s.target_scale > 0.0) || s.n_pulses == 0 {
            return Err(Error::config("scene needs a positive target scale and at least one pulse"));
        }
        let g = &self.grid;
        if g.image_size == 0 || g.image_size % 32 != 0 {
            return Err(Error::config("image_size must be a positive multiple of 32"));
        }
        if g.upsample == 0 {
            return Err(Error::config("upsample must be at least 1"));
        }
        let d = &self.dataset;
        if d.train_per_class == 0 || d.train_per_class >= d.per_class {
            return Err(Error::config(format!(
                "train_per_class ({}) must be in 1..per_class ({})",
                d.train_per_class, d.per_class
            )));
        }
        Ok(())
    }

    /// Default tree with `file` merged over it and then each `key=value` override.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        Self::load_with_preset(None, file, overrides)
    }

    /// As [`load`](Self::load), starting from a named preset; a `preset` key in the file wins.
    pub fn load_with_preset(preset: Option<&str>, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base = match preset {
            Some(name) => Self::preset(name)?,
            None => Self::default(),
        };
        let mut tree = toml::Value::try_from(base).map_err(|e| Error::config(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let user: toml::Value = text.parse::<toml::Table>().map(toml::Value::Table).map_err(|e| Error::format(path, e.to_string()))?;
            if let Some(preset) = user.get("preset").and_then(|v| v.as_str()) {
                tree = toml::Value::try_from(Self::preset(preset)?).map_err(|e| Error::config(e.to_string()))?;
            }
            merge(&mut tree, user);
            if let toml::Value::Table(t) = &mut tree {
                t.remove("preset");
            }
        }
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override `{item}` is not key=value")))?;
            set_path(&mut tree, key.trim(), parse_value(raw.trim()))?;
        }
        let cfg: ExperimentConfig = tree.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "8ghz" => Ok(Self::band_8ghz()),
            "4ghz" => Ok(Self::band_4ghz()),
            other => Err(Error::config(format!("unknown preset `{other}` (expected 8ghz or 4ghz)"))),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }
}

/// Half the range resolution of an 8 GHz chirp.
const SPACING_8GHZ: f64 = 299_792_458.0 / (4.0 * 8e9);

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

fn set_path(tree: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("`{key}`: `{}` is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert((*part).to_owned(), value);
            return Ok(());
        }
        node = table
            .entry((*part).to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(Error::config("empty override key"))
}

/// Pixel spacing that keeps `bandwidth_hz` Nyquist-sampled.
pub fn nyquist_spacing(bandwidth_hz: f64) -> Result<f64> {
    Ok(range_resolution(bandwidth_hz)? / 2.0)
}
