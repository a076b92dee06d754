//! Run configuration: one TOML file with every pipeline knob.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::evaluation::{Protocol, DEFAULT_KS};
use crate::losses::AblationPreset;
use crate::model::ModelSizes;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Raw item metadata, `item_id,category,price`.
    pub items: PathBuf,
    /// Raw feature file for `items`.
    pub features: PathBuf,
    /// Raw `item_id,recommended_id` rows.
    pub recommendations: PathBuf,
    /// Where prepared data, checkpoints, logs and metrics go.
    pub work_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            items: "data/items.csv".into(),
            features: "data/features.bin".into(),
            recommendations: "data/recommendations.csv".into(),
            work_dir: "work".into(),
        }
    }
}

impl PathsConfig {
    pub fn work(&self, name: &str) -> PathBuf {
        self.work_dir.join(name)
    }

    pub fn prepared_items(&self) -> PathBuf {
        self.work("items.csv")
    }

    pub fn prepared_features(&self) -> PathBuf {
        self.work("features.bin")
    }

    pub fn pairs(&self) -> PathBuf {
        self.work("pairs.csv")
    }

    pub fn category_map(&self) -> PathBuf {
        self.work("category_map.csv")
    }

    pub fn split(&self) -> PathBuf {
        self.work("split.csv")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.work("model.toml")
    }

    pub fn training_log(&self) -> PathBuf {
        self.work("training_log.csv")
    }

    /// Ground truth written next to the raw recommendations by `synth`.
    pub fn ground_truth(&self) -> PathBuf {
        let stem = self
            .recommendations
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("recommendations");
        self.recommendations.with_file_name(format!("{stem}_ground_truth.csv"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub min_items: usize,
    pub price_bins: usize,
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            min_items: 5,
            price_bins: 20,
            train_fraction: 0.8,
            split_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalModel {
    #[default]
    Alcir,
    Popularity,
}

impl std::str::FromStr for EvalModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alcir" => Ok(EvalModel::Alcir),
            "popularity" => Ok(EvalModel::Popularity),
            _ => Err(Error::Config(format!("unknown model `{s}` (expected alcir or popularity)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub model: EvalModel,
    pub protocol: Protocol,
    pub ks: Vec<usize>,
    /// Label-count bins for the rare-pair report.
    pub bins: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            model: EvalModel::Alcir,
            protocol: Protocol::CategoryAware,
            ks: DEFAULT_KS.to_vec(),
            bins: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, overrides every component seed.
    pub seed: Option<u64>,
    pub preset: AblationPreset,
    pub paths: PathsConfig,
    pub prepare: PrepareConfig,
    pub synthetic: SyntheticConfig,
    pub model: ModelSizes,
    pub train: TrainConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            preset: AblationPreset::Full,
            paths: PathsConfig::default(),
            prepare: PrepareConfig::default(),
            synthetic: SyntheticConfig::default(),
            model: ModelSizes::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolved()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets `key` (dotted, e.g. `train.epochs`) to `value`, parsed as a TOML
    /// value when possible and as a string otherwise.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{key}`: `{}` is not a section", parts[..i].join("."))))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), parsed);
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        let updated: RunConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("`{key}`: {e}")))?;
        *self = updated.resolved()?;
        Ok(())
    }

    /// Propagates `seed` and validates.
    pub fn resolved(mut self) -> Result<Self> {
        if let Some(seed) = self.seed {
            self.prepare.split_seed = seed;
            self.synthetic.seed = seed;
            self.train.rng_seed = seed;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.preset.apply(&self.train.loss_weights)?;
        let p = &self.prepare;
        if p.price_bins == 0 {
            return Err(Error::Config("prepare.price_bins must be positive".into()));
        }
        if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "prepare.train_fraction must be in (0, 1), got {}",
                p.train_fraction
            )));
        }
        if self.evaluate.bins == 0 || self.evaluate.ks.is_empty() || self.evaluate.ks.contains(&0) {
            return Err(Error::Config("evaluate.bins and evaluate.ks must be positive".into()));
        }
        Ok(())
    }

    /// Training settings with the preset applied.
    pub fn train_config(&self) -> Result<TrainConfig> {
        self.train.clone().with_preset(self.preset)
    }
}
