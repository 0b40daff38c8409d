//! Experiment reports.
//!
//! A [`CloakReport`] holds one [`ReportRow`] per (experiment, method, source,
//! victim, poison rate, seed) and one [`AggregateRow`] per group of seeds.
//! Accuracies are percentages. `emit_report` writes `report.csv` and/or
//! `report.json`; both carry the same numbers. In the CSV, per-seed rows
//! have `kind = seed` and aggregates `kind = mean` with the sample standard
//! deviations in the `*_std` columns.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub cloak_secs: f64,
    pub train_secs: f64,
    pub eval_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub experiment: String,
    pub method: String,
    /// Surrogate architecture, `-` for surrogate-free methods.
    pub source: String,
    pub victim: String,
    pub poison_rate: f64,
    pub seed: u64,
    pub clean_acc: f64,
    pub cloaked_acc: f64,
    /// `clean_acc - cloaked_acc`.
    pub drop: f64,
    pub delta_edges_pct: f64,
    pub delta_density_pct: f64,
    pub poisoned: usize,
    pub budget_used: usize,
    pub budget_total: usize,
    /// Poisoned-graph count per amount of budget used.
    pub usage_histogram: BTreeMap<usize, usize>,
    pub timings: PhaseTimings,
    pub cloaked_dataset: PathBuf,
    pub victim_checkpoint: PathBuf,
}

impl ReportRow {
    fn group_key(&self) -> (&str, &str, &str, &str, &str, u64) {
        (
            &self.dataset,
            &self.experiment,
            &self.method,
            &self.source,
            &self.victim,
            self.poison_rate.to_bits(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; `None` for a single seed.
    pub std: Option<f64>,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub experiment: String,
    pub method: String,
    pub source: String,
    pub victim: String,
    pub poison_rate: f64,
    pub seeds: Vec<u64>,
    pub clean_acc: MeanStd,
    pub cloaked_acc: MeanStd,
    pub drop: MeanStd,
    pub delta_edges_pct: MeanStd,
    pub delta_density_pct: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloakReport {
    pub schema_version: u32,
    pub config_hash: String,
    /// Digest of the clean dataset every row was derived from.
    pub dataset_digest: String,
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl CloakReport {
    pub fn new(config_hash: impl Into<String>, dataset_digest: impl Into<String>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            config_hash: config_hash.into(),
            dataset_digest: dataset_digest.into(),
            rows: Vec::new(),
            aggregates: Vec::new(),
        }
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    /// Appends another report's rows (same config) and re-aggregates.
    pub fn extend(&mut self, other: CloakReport) {
        self.rows.extend(other.rows);
        self.finalize();
    }

    /// Sorts rows into their canonical order and recomputes the aggregates.
    pub fn finalize(&mut self) {
        self.rows.sort_by(|a, b| a.group_key().cmp(&b.group_key()).then(a.seed.cmp(&b.seed)));
        self.aggregates.clear();
        let mut start = 0;
        while start < self.rows.len() {
            let key = self.rows[start].group_key();
            let end = start + self.rows[start..].iter().take_while(|r| r.group_key() == key).count();
            self.aggregates.push(aggregate(&self.rows[start..end]));
            start = end;
        }
    }

    /// Rows of one experiment and method.
    pub fn select<'a>(&'a self, experiment: &'a str, method: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.experiment == experiment && r.method == method)
    }

    pub fn aggregate_for(&self, experiment: &str, method: &str, victim: &str) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.experiment == experiment && a.method == method && a.victim == victim)
    }

    /// A copy with all wall-clock fields zeroed, for comparing reruns.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.timings = PhaseTimings::default();
        }
        r
    }
}

fn aggregate(rows: &[ReportRow]) -> AggregateRow {
    let col = |f: fn(&ReportRow) -> f64| MeanStd::of(&rows.iter().map(f).collect::<Vec<_>>());
    let first = &rows[0];
    AggregateRow {
        dataset: first.dataset.clone(),
        experiment: first.experiment.clone(),
        method: first.method.clone(),
        source: first.source.clone(),
        victim: first.victim.clone(),
        poison_rate: first.poison_rate,
        seeds: rows.iter().map(|r| r.seed).collect(),
        clean_acc: col(|r| r.clean_acc),
        cloaked_acc: col(|r| r.cloaked_acc),
        drop: col(|r| r.drop),
        delta_edges_pct: col(|r| r.delta_edges_pct),
        delta_density_pct: col(|r| r.delta_density_pct),
    }
}

/// One CSV line; shared by per-seed and aggregate rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub schema_version: u32,
    pub kind: String,
    pub dataset: String,
    pub experiment: String,
    pub method: String,
    pub source: String,
    pub victim: String,
    pub poison_rate: f64,
    /// Seed for `seed` rows; `;`-joined seed list for `mean` rows.
    pub seed: String,
    pub clean_acc: f64,
    pub clean_acc_std: Option<f64>,
    pub cloaked_acc: f64,
    pub cloaked_acc_std: Option<f64>,
    pub drop: f64,
    pub drop_std: Option<f64>,
    pub delta_edges_pct: f64,
    pub delta_edges_pct_std: Option<f64>,
    pub delta_density_pct: f64,
    pub delta_density_pct_std: Option<f64>,
    pub poisoned: Option<usize>,
    pub budget_used: Option<usize>,
    pub budget_total: Option<usize>,
    /// `used:count` pairs joined by `;`.
    pub usage_histogram: String,
    pub cloak_secs: Option<f64>,
    pub train_secs: Option<f64>,
    pub eval_secs: Option<f64>,
    pub cloaked_dataset: String,
    pub victim_checkpoint: String,
    pub config_hash: String,
}

pub const CSV_HEADER: [&str; 29] = [
    "schema_version",
    "kind",
    "dataset",
    "experiment",
    "method",
    "source",
    "victim",
    "poison_rate",
    "seed",
    "clean_acc",
    "clean_acc_std",
    "cloaked_acc",
    "cloaked_acc_std",
    "drop",
    "drop_std",
    "delta_edges_pct",
    "delta_edges_pct_std",
    "delta_density_pct",
    "delta_density_pct_std",
    "poisoned",
    "budget_used",
    "budget_total",
    "usage_histogram",
    "cloak_secs",
    "train_secs",
    "eval_secs",
    "cloaked_dataset",
    "victim_checkpoint",
    "config_hash",
];

impl CsvRecord {
    fn from_row(r: &ReportRow, config_hash: &str) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: "seed".into(),
            dataset: r.dataset.clone(),
            experiment: r.experiment.clone(),
            method: r.method.clone(),
            source: r.source.clone(),
            victim: r.victim.clone(),
            poison_rate: r.poison_rate,
            seed: r.seed.to_string(),
            clean_acc: r.clean_acc,
            clean_acc_std: None,
            cloaked_acc: r.cloaked_acc,
            cloaked_acc_std: None,
            drop: r.drop,
            drop_std: None,
            delta_edges_pct: r.delta_edges_pct,
            delta_edges_pct_std: None,
            delta_density_pct: r.delta_density_pct,
            delta_density_pct_std: None,
            poisoned: Some(r.poisoned),
            budget_used: Some(r.budget_used),
            budget_total: Some(r.budget_total),
            usage_histogram: r
                .usage_histogram
                .iter()
                .map(|(k, v)| format!("{k}:{v}"))
                .collect::<Vec<_>>()
                .join(";"),
            cloak_secs: Some(r.timings.cloak_secs),
            train_secs: Some(r.timings.train_secs),
            eval_secs: Some(r.timings.eval_secs),
            cloaked_dataset: r.cloaked_dataset.display().to_string(),
            victim_checkpoint: r.victim_checkpoint.display().to_string(),
            config_hash: config_hash.into(),
        }
    }

    fn from_aggregate(a: &AggregateRow, config_hash: &str) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: "mean".into(),
            dataset: a.dataset.clone(),
            experiment: a.experiment.clone(),
            method: a.method.clone(),
            source: a.source.clone(),
            victim: a.victim.clone(),
            poison_rate: a.poison_rate,
            seed: a.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
            clean_acc: a.clean_acc.mean,
            clean_acc_std: a.clean_acc.std,
            cloaked_acc: a.cloaked_acc.mean,
            cloaked_acc_std: a.cloaked_acc.std,
            drop: a.drop.mean,
            drop_std: a.drop.std,
            delta_edges_pct: a.delta_edges_pct.mean,
            delta_edges_pct_std: a.delta_edges_pct.std,
            delta_density_pct: a.delta_density_pct.mean,
            delta_density_pct_std: a.delta_density_pct.std,
            poisoned: None,
            budget_used: None,
            budget_total: None,
            usage_histogram: String::new(),
            cloak_secs: None,
            train_secs: None,
            eval_secs: None,
            cloaked_dataset: String::new(),
            victim_checkpoint: String::new(),
            config_hash: config_hash.into(),
        }
    }
}

/// Per-seed rows followed by aggregates, in canonical order.
pub fn csv_records(report: &CloakReport) -> Vec<CsvRecord> {
    let seeds = report.rows.iter().map(|r| CsvRecord::from_row(r, &report.config_hash));
    let means = report.aggregates.iter().map(|a| CsvRecord::from_aggregate(a, &report.config_hash));
    seeds.chain(means).collect()
}

pub fn write_csv(report: &CloakReport, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(CSV_HEADER)?;
    for rec in csv_records(report) {
        w.serialize(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Format {
            what: "report CSV",
            message: format!("unexpected header {header:?}"),
        });
    }
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

pub fn write_json(report: &CloakReport, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json(path: &Path) -> Result<CloakReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: CloakReport = serde_json::from_str(&text)?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Format {
            what: "report JSON",
            message: format!("schema version {}", report.schema_version),
        });
    }
    Ok(report)
}

/// Writes `dir/<stem>.csv` and/or `dir/<stem>.json`.
pub fn emit_report(report: &CloakReport, dir: &Path, stem: &str, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for f in formats {
        let path = match f {
            ReportFormat::Csv => dir.join(format!("{stem}.csv")),
            ReportFormat::Json => dir.join(format!("{stem}.json")),
        };
        match f {
            ReportFormat::Csv => write_csv(report, &path)?,
            ReportFormat::Json => write_json(report, &path)?,
        }
        out.push(path);
    }
    Ok(out)
}
