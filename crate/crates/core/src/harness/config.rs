//! Experiment configuration: TOML text, strict keys, every field defaulted.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::adversary::{LaplaceParams, NoiseInterpretation, Scenario};
use crate::data::{CsvOptions, PartitionMode, PartitionSpec, Proportions};
use crate::defense::DefenseConfig;
use crate::error::{Error, Result};
use crate::model::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Determines every random stream of the run.
    pub master_seed: u64,
    pub n_clients: usize,
    pub max_rounds: usize,
    pub data: DataConfig,
    pub partition: PartitionConfig,
    pub train: TrainConfig,
    pub adversary: AdversaryConfig,
    pub defense: DefenseConfig,
    pub convergence: ConvergenceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 42,
            n_clients: 10,
            max_rounds: 100,
            data: DataConfig::default(),
            partition: PartitionConfig::default(),
            train: TrainConfig::default(),
            adversary: AdversaryConfig::default(),
            defense: DefenseConfig::default(),
            convergence: ConvergenceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Share of samples held out for global evaluation.
    pub test_fraction: f64,
    pub synthetic: SyntheticConfig,
    pub csv: CsvConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            test_fraction: 0.2,
            synthetic: SyntheticConfig::default(),
            csv: CsvConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_tags: usize,
    pub separation: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            n_features: 20,
            n_tags: 20,
            separation: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvConfig {
    pub path: Option<PathBuf>,
    pub label_column: String,
    pub benign_label: String,
    pub tag_column: Option<String>,
    pub one_hot: Vec<String>,
    pub drop: Vec<String>,
    pub normalize: bool,
}

impl Default for CsvConfig {
    fn default() -> Self {
        let o = CsvOptions::new("label");
        Self {
            path: None,
            label_column: o.label_column,
            benign_label: o.benign_label,
            tag_column: Some("label".into()),
            one_hot: o.one_hot,
            drop: o.drop,
            normalize: o.normalize,
        }
    }
}

impl CsvConfig {
    pub fn options(&self) -> CsvOptions {
        CsvOptions {
            label_column: self.label_column.clone(),
            benign_label: self.benign_label.clone(),
            tag_column: self.tag_column.clone(),
            one_hot: self.one_hot.clone(),
            drop: self.drop.clone(),
            normalize: self.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub mode: PartitionMode,
    pub proportions: Option<Proportions>,
    pub tag_groups: Option<Vec<Vec<String>>>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            mode: PartitionMode::ByTag,
            proportions: None,
            tag_groups: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryConfig {
    pub fraction: f64,
    pub scenario: Scenario,
    pub b: f64,
    pub interpretation: NoiseInterpretation,
    pub sensitivity: f64,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        let noise = LaplaceParams::default();
        Self {
            fraction: 0.0,
            scenario: Scenario::ControlledClients,
            b: noise.b,
            interpretation: noise.interpretation,
            sensitivity: noise.sensitivity,
        }
    }
}

impl AdversaryConfig {
    pub fn noise(&self) -> LaplaceParams {
        LaplaceParams {
            b: self.b,
            interpretation: self.interpretation,
            sensitivity: self.sensitivity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub tol: f64,
    pub patience: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            patience: 5,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be > 0, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn partition_spec(&self) -> PartitionSpec {
        PartitionSpec {
            n_clients: self.n_clients,
            mode: self.partition.mode,
            proportions: self.partition.proportions.clone(),
            tag_groups: self.partition.tag_groups.clone(),
        }
    }

    /// Range checks; errors name the offending field by its dotted path.
    pub fn validate(&self) -> Result<()> {
        if self.master_seed > i64::MAX as u64 {
            return Err(Error::config(
                "master_seed",
                "must fit in a signed 64-bit integer",
            ));
        }
        if self.n_clients < 1 {
            return Err(Error::config("n_clients", "must be >= 1"));
        }
        let tf = self.data.test_fraction;
        if !(tf > 0.0 && tf < 1.0) {
            return Err(Error::config(
                "data.test_fraction",
                format!("must be in (0, 1), got {tf}"),
            ));
        }
        match self.data.source {
            DataSource::Synthetic => {
                let s = &self.data.synthetic;
                if s.n_samples < 2 {
                    return Err(Error::config("data.synthetic.n_samples", "must be >= 2"));
                }
                if s.n_features < 1 {
                    return Err(Error::config("data.synthetic.n_features", "must be >= 1"));
                }
                if s.n_tags < 1 {
                    return Err(Error::config("data.synthetic.n_tags", "must be >= 1"));
                }
                positive("data.synthetic.separation", s.separation)?;
            }
            DataSource::Csv => {
                if self.data.csv.path.is_none() {
                    return Err(Error::config(
                        "data.csv.path",
                        "required when data.source = \"csv\"",
                    ));
                }
            }
        }
        if let Some(p) = &self.partition.proportions {
            let len = match p {
                Proportions::Counts(c) => c.len(),
                Proportions::Fractions(f) => f.len(),
            };
            if len != self.n_clients {
                return Err(Error::config(
                    "partition.proportions",
                    format!("{len} entries for {} clients", self.n_clients),
                ));
            }
        }
        if let Some(g) = &self.partition.tag_groups {
            if g.len() != self.n_clients {
                return Err(Error::config(
                    "partition.tag_groups",
                    format!("{} groups for {} clients", g.len(), self.n_clients),
                ));
            }
        }
        positive("train.learning_rate", self.train.learning_rate)?;
        if self.train.batch_size < 1 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        let f = self.adversary.fraction;
        if !(0.0..1.0).contains(&f) {
            return Err(Error::config(
                "adversary.fraction",
                format!("must be in [0, 1), got {f}"),
            ));
        }
        positive("adversary.b", self.adversary.b)?;
        positive("adversary.sensitivity", self.adversary.sensitivity)?;
        if self.defense.threshold < 1 {
            return Err(Error::config("defense.threshold", "must be >= 1"));
        }
        if self.defense.k_max < 1 {
            return Err(Error::config("defense.k_max", "must be >= 1"));
        }
        let r = self.defense.elbow_ratio;
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::config(
                "defense.elbow_ratio",
                format!("must be in (0, 1), got {r}"),
            ));
        }
        if self.convergence.tol.is_nan() || self.convergence.tol < 0.0 {
            return Err(Error::config("convergence.tol", "must be >= 0"));
        }
        if self.convergence.patience < 1 {
            return Err(Error::config("convergence.patience", "must be >= 1"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Output(e.to_string()))
    }
}

/// Parses config text strictly (unknown keys rejected), fills defaults and
/// range-checks the result.
pub fn validate_config(text: &str) -> Result<ExperimentConfig> {
    let value: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<root>", e.message().to_string()))?;
    from_table(value)
}

fn from_table(table: toml::Table) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
        .map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." {
                    "<root>".to_string()
                } else {
                    path
                },
                e.into_inner().to_string(),
            )
        })?;
    cfg.validate()?;
    Ok(cfg)
}

pub const PRESETS: [&str; 3] = ["clean", "attack20", "attack40"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "clean" => Some(include_str!("../../presets/clean.toml")),
        "attack20" => Some(include_str!("../../presets/attack20.toml")),
        "attack40" => Some(include_str!("../../presets/attack40.toml")),
        _ => None,
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let text = preset_text(name).ok_or_else(|| {
        Error::config(
            "preset",
            format!("unknown preset `{name}`; expected one of {PRESETS:?}"),
        )
    })?;
    validate_config(text)
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Layers an optional config file over an optional preset. Keys in the
/// file win; tables merge key by key.
pub fn resolve(preset_name: Option<&str>, config_text: Option<&str>) -> Result<ExperimentConfig> {
    let mut table = toml::Table::new();
    if let Some(name) = preset_name {
        let text = preset_text(name).ok_or_else(|| {
            Error::config(
                "preset",
                format!("unknown preset `{name}`; expected one of {PRESETS:?}"),
            )
        })?;
        table = text.parse().expect("shipped presets parse");
    }
    if let Some(text) = config_text {
        let overlay: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<root>", e.message().to_string()))?;
        merge(&mut table, overlay);
    }
    from_table(table)
}
