//! Run outputs: `metrics.csv`, `summary.json` and `config_resolved.toml`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::defense::ScoreLedger;
use crate::error::{Error, Result};
use crate::federation::{ExperimentTrace, RoundRecord};
use crate::model::Metrics;

/// Bumped whenever the metrics.csv columns change.
pub const METRICS_SCHEMA_VERSION: u32 = 1;
/// WCSS columns always cover k = 1..=5; missing values are left empty.
pub const WCSS_COLUMNS: usize = 5;

pub fn metrics_header() -> Vec<String> {
    let mut h: Vec<String> = ["round", "accuracy", "loss", "cluster_count"]
        .map(String::from)
        .to_vec();
    h.extend((1..=WCSS_COLUMNS).map(|k| format!("wcss_k{k}")));
    h.extend(["n_flagged", "flagged_ids", "n_eliminated_total", "n_active"].map(String::from));
    h
}

fn join_ids(ids: &BTreeSet<usize>) -> String {
    ids.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

pub fn metrics_row(r: &RoundRecord) -> Vec<String> {
    let mut row = vec![
        r.round.to_string(),
        r.accuracy.to_string(),
        r.loss.to_string(),
        r.cluster_count.to_string(),
    ];
    row.extend((0..WCSS_COLUMNS).map(|k| r.wcss.get(k).map(f64::to_string).unwrap_or_default()));
    row.extend([
        r.flagged.len().to_string(),
        join_ids(&r.flagged),
        r.n_eliminated_total.to_string(),
        r.n_active.to_string(),
    ]);
    row
}

/// Appends one CSV row per round and flushes it immediately.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

fn out_err(e: impl std::fmt::Display) -> Error {
    Error::Output(e.to_string())
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).map_err(out_err)?;
        inner.write_record(metrics_header()).map_err(out_err)?;
        inner.flush().map_err(out_err)?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, record: &RoundRecord) -> Result<()> {
        self.inner
            .write_record(metrics_row(record))
            .map_err(out_err)?;
        self.inner.flush().map_err(out_err)
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub metrics_schema: u32,
    pub master_seed: u64,
    pub rounds_executed: usize,
    pub converged: bool,
    pub initial: Metrics,
    #[serde(rename = "final")]
    pub final_metrics: Metrics,
    pub adversaries: &'a BTreeSet<usize>,
    pub elimination_rounds: BTreeMap<usize, usize>,
    pub ledger: Option<&'a ScoreLedger>,
}

impl<'a> Summary<'a> {
    pub fn new(trace: &'a ExperimentTrace, master_seed: u64) -> Self {
        Self {
            metrics_schema: METRICS_SCHEMA_VERSION,
            master_seed,
            rounds_executed: trace.rows.len(),
            converged: trace.converged,
            initial: trace.initial,
            final_metrics: trace.final_metrics(),
            adversaries: &trace.adversaries,
            elimination_rounds: trace
                .ledger
                .as_ref()
                .map(|l| l.elimination_round.clone())
                .unwrap_or_default(),
            ledger: trace.ledger.as_ref(),
        }
    }
}

pub fn write_summary(path: &Path, summary: &Summary<'_>) -> Result<()> {
    let mut f = File::create(path).map_err(out_err)?;
    serde_json::to_writer_pretty(&mut f, summary).map_err(out_err)?;
    f.write_all(b"\n").map_err(out_err)
}
