//! Experiment configuration, seed governance and the end-to-end driver.

mod config;
mod export;
mod seed;

use std::path::Path;

pub use config::{
    preset, preset_text, resolve, validate_config, AdversaryConfig, ConvergenceConfig, CsvConfig,
    DataConfig, DataSource, ExperimentConfig, PartitionConfig, SyntheticConfig, PRESETS,
};
pub use export::{
    metrics_header, metrics_row, write_summary, MetricsWriter, Summary, METRICS_SCHEMA_VERSION,
    WCSS_COLUMNS,
};
pub use seed::derive_seed;

use crate::adversary::{build_plan, AdversaryPlan};
use crate::data::{generate_synthetic, load_csv, partition, ClientShard, Dataset};
use crate::error::{Error, Result};
use crate::federation::{run_training_with, ExperimentTrace};
use crate::model::{init_params, ParameterVector};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config_resolved.toml";

/// Everything a run needs before round 1.
#[derive(Debug, Clone)]
pub struct Setup {
    pub train: Dataset,
    pub test: Dataset,
    pub shards: Vec<ClientShard>,
    pub plan: AdversaryPlan,
    pub initial_params: ParameterVector,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match cfg.data.source {
        DataSource::Synthetic => {
            let s = cfg.data.synthetic;
            generate_synthetic(
                s.n_samples,
                s.n_features,
                s.n_tags,
                s.separation,
                derive_seed(cfg.master_seed, "dataset", 0),
            )
        }
        DataSource::Csv => {
            let path = cfg
                .data
                .csv
                .path
                .as_deref()
                .ok_or_else(|| Error::config("data.csv.path", "missing"))?;
            load_csv(path, &cfg.data.csv.options())
        }
    }
}

/// Loads data, holds out the test split, partitions the rest, picks the
/// adversaries and draws the initial weights.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Setup> {
    let data = load_dataset(cfg)?;
    let (train, test) = data.train_test_split(
        cfg.data.test_fraction,
        derive_seed(cfg.master_seed, "split", 0),
    )?;
    train.ensure_trainable()?;
    if test.is_empty() {
        return Err(Error::config("data.test_fraction", "test split is empty"));
    }
    let shards = partition(
        &train,
        &cfg.partition_spec(),
        derive_seed(cfg.master_seed, "partition", 0),
    )?;
    let plan = build_plan(
        cfg.n_clients,
        cfg.adversary.fraction,
        cfg.adversary.scenario,
        cfg.adversary.noise(),
        derive_seed(cfg.master_seed, "adversary_plan", 0),
    )?;
    let initial_params = init_params(
        train.n_features() + 1,
        derive_seed(cfg.master_seed, "init", 0),
    )?;
    Ok(Setup {
        train,
        test,
        shards,
        plan,
        initial_params,
    })
}

/// Runs the experiment and writes `metrics.csv` (one flushed row per
/// round), `summary.json` and `config_resolved.toml` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentTrace> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Output(format!("{}: {e}", out_dir.display())))?;
    std::fs::write(out_dir.join(CONFIG_FILE), cfg.to_toml()?)
        .map_err(|e| Error::Output(e.to_string()))?;
    let mut metrics = MetricsWriter::create(&out_dir.join(METRICS_FILE))?;
    let trace = run_training_with(cfg, |row| metrics.append(row))?;
    write_summary(
        &out_dir.join(SUMMARY_FILE),
        &Summary::new(&trace, cfg.master_seed),
    )?;
    Ok(trace)
}
