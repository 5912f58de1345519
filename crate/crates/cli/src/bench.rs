//! Repeated-trial runner: generate, cluster and score once per seed.

use std::collections::BTreeMap;
use std::path::Path;

use grassnet::pipeline::{cluster_states, detect_communities, track_sequences, Mode, PipelineConfig, Segment};
use grassnet::synth::{generate, presets, ScenarioSpec};
use grassnet::StatePartition;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::io::{read_text, write_json, write_text};
use crate::scoring::{community_scores, sequence_scores, state_scores};

/// Preset scenario names accepted in bench configs.
pub const PRESETS: [&str; 3] = ["d1_analog", "planted_communities", "shared_driver"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub datasets: Vec<Dataset>,
}

/// One row of the scenario matrix. Exactly one of `preset` and `scenario`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    pub pipeline: PipelineConfig,
    /// Hand the generator's partition to the pipeline instead of estimating it.
    #[serde(default)]
    pub known_states: bool,
}

impl Dataset {
    pub fn scenario(&self, seed: u64) -> CliResult<ScenarioSpec> {
        match (&self.preset, &self.scenario) {
            (Some(name), None) => preset(name, seed),
            (None, Some(spec)) => Ok(spec.reseeded(seed)),
            _ => Err(CliError::Validation(format!(
                "dataset {:?}: give exactly one of preset and scenario",
                self.name
            ))),
        }
    }

    fn validate(&self) -> CliResult<()> {
        self.scenario(0)?.validate()?;
        let mut cfg = self.pipeline.clone();
        if self.known_states {
            // content is checked per trial; only the shape matters here
            cfg.known_states = Some(StatePartition { segments: vec![Segment { start: 0, end: 1, state: 0 }] });
        }
        cfg.validate()?;
        Ok(())
    }
}

pub fn preset(name: &str, seed: u64) -> CliResult<ScenarioSpec> {
    match name {
        "d1_analog" => Ok(presets::d1_analog(seed)),
        "planted_communities" => Ok(presets::planted_communities(seed)),
        "shared_driver" => Ok(presets::shared_driver(seed)),
        other => Err(CliError::Validation(format!(
            "unknown preset {other:?}; expected one of {}",
            PRESETS.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub dataset: String,
    pub seed: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    /// States: one sample labeling. Communities: node labels per state.
    /// Sequences: one feature labeling.
    pub labels: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<StatePartition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub dataset: String,
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation over successful trials.
    pub std: f64,
    pub count: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub trials: Vec<TrialRecord>,
    pub aggregate: Vec<Aggregate>,
}

pub fn config_hash(config: &BenchConfig) -> String {
    let canonical = serde_json::to_string(config).expect("bench config serializes");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Generate, cluster and score one seed of one dataset.
pub fn run_trial(dataset: &Dataset, seed: u64) -> TrialRecord {
    let mut record = TrialRecord {
        dataset: dataset.name.clone(),
        seed,
        ok: false,
        error: None,
        metrics: BTreeMap::new(),
        labels: Vec::new(),
        partition: None,
    };
    match trial_body(dataset, seed, &mut record) {
        Ok(()) => record.ok = true,
        Err(e) => {
            warn!("dataset {} seed {seed} failed: {e}", dataset.name);
            record.error = Some(e.to_string());
            record.metrics.clear();
            record.labels.clear();
            record.partition = None;
        }
    }
    record
}

fn trial_body(dataset: &Dataset, seed: u64, record: &mut TrialRecord) -> CliResult<()> {
    let (panel, truth) = generate(&dataset.scenario(seed)?)?;
    let mut cfg = dataset.pipeline.clone();
    if dataset.known_states {
        cfg.known_states = Some(truth.partition.clone());
    }
    match cfg.mode {
        Mode::States => {
            let out = cluster_states(&panel, &cfg)?;
            let (acc, nmi) = state_scores(&out.partition, &truth)?;
            record.metrics.insert("accuracy".into(), acc);
            record.metrics.insert("nmi".into(), nmi);
            record.labels.push(out.partition.sample_labels());
            record.partition = Some(out.partition);
        }
        Mode::Communities => {
            let out = detect_communities(&panel, &cfg)?;
            let scores = community_scores(&out, &truth)?;
            let mean = scores.iter().map(|s| s.1).sum::<f64>() / scores.len() as f64;
            record.metrics.insert("node_accuracy".into(), mean);
            if !dataset.known_states {
                let (acc, nmi) = state_scores(&out.partition, &truth)?;
                record.metrics.insert("accuracy".into(), acc);
                record.metrics.insert("nmi".into(), nmi);
            }
            record.labels = out.states.iter().map(|s| s.node_labels.clone()).collect();
            record.partition = Some(out.partition);
        }
        Mode::Sequences => {
            let out = track_sequences(&panel, &cfg)?;
            let (acc, nmi) = sequence_scores(&out, &truth)?;
            record.metrics.insert("sequence_accuracy".into(), acc);
            record.metrics.insert("sequence_nmi".into(), nmi);
            record.labels.push(out.features.iter().map(|f| f.label).collect());
            record.partition = Some(out.partition);
        }
    }
    Ok(())
}

/// Mean and population std per (dataset, metric) over successful trials,
/// datasets in first-seen order.
pub fn aggregate(trials: &[TrialRecord]) -> Vec<Aggregate> {
    let mut order: Vec<&str> = Vec::new();
    for t in trials {
        if !order.contains(&t.dataset.as_str()) {
            order.push(&t.dataset);
        }
    }
    let mut rows = Vec::new();
    for name in order {
        let mine: Vec<&TrialRecord> = trials.iter().filter(|t| t.dataset == name).collect();
        let failures = mine.iter().filter(|t| !t.ok).count();
        let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for t in mine.iter().filter(|t| t.ok) {
            for (k, v) in &t.metrics {
                values.entry(k).or_default().push(*v);
            }
        }
        for (metric, xs) in values {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            rows.push(Aggregate {
                dataset: name.to_string(),
                metric: metric.to_string(),
                mean,
                std: var.sqrt(),
                count: xs.len(),
                failures,
            });
        }
    }
    rows
}

/// Plot-ready summary: one line per (dataset, metric).
pub fn summary_csv(rows: &[Aggregate]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "metric", "mean", "std", "count", "failures"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.metric.clone(),
            r.mean.to_string(),
            r.std.to_string(),
            r.count.to_string(),
            r.failures.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Run every dataset for seeds `first_seed .. first_seed + trials` and write
/// `manifest.json` and `summary.csv` into `out_dir`.
pub fn cmd_bench(
    config_path: &Path,
    trials: usize,
    first_seed: u64,
    threads: Option<usize>,
    out_dir: &Path,
) -> CliResult<RunManifest> {
    if trials == 0 {
        return Err(CliError::Validation("trials must be at least 1".into()));
    }
    let text = read_text(config_path)?;
    let config: BenchConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", config_path.display())))?;
    if config.datasets.is_empty() {
        return Err(CliError::Validation("bench config lists no datasets".into()));
    }
    for d in &config.datasets {
        d.validate()?;
    }
    let seeds: Vec<u64> = (0..trials as u64).map(|i| first_seed + i).collect();
    let jobs: Vec<(&Dataset, u64)> = config
        .datasets
        .iter()
        .flat_map(|d| seeds.iter().map(move |&s| (d, s)))
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    info!("running {} trials on {} threads", jobs.len(), pool.current_num_threads());
    let records: Vec<TrialRecord> = pool.install(|| jobs.par_iter().map(|(d, s)| run_trial(d, *s)).collect());

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(&config),
        seeds,
        aggregate: aggregate(&records),
        trials: records,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    write_text(&out_dir.join("summary.csv"), &summary_csv(&manifest.aggregate))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(dataset: &str, ok: bool, acc: f64) -> TrialRecord {
        TrialRecord {
            dataset: dataset.into(),
            seed: 0,
            ok,
            error: (!ok).then(|| "boom".into()),
            metrics: if ok { BTreeMap::from([("accuracy".to_string(), acc)]) } else { BTreeMap::new() },
            labels: vec![],
            partition: None,
        }
    }

    #[test]
    fn aggregate_skips_failures() {
        let trials = vec![
            record("a", true, 1.0),
            record("a", false, 0.0),
            record("a", true, 0.5),
            record("a", true, 0.5),
            record("a", true, 1.0),
        ];
        let rows = aggregate(&trials);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].count, rows[0].failures), (4, 1));
        assert!((rows[0].mean - 0.75).abs() < 1e-15);
        assert!((rows[0].std - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_trial_has_zero_std() {
        let rows = aggregate(&[record("x", true, 0.3)]);
        assert_eq!(rows[0].std, 0.0);
    }

    #[test]
    fn summary_has_header_and_rows() {
        let rows = aggregate(&[record("x", true, 0.5), record("y", true, 1.0)]);
        let csv = summary_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "dataset,metric,mean,std,count,failures");
        assert_eq!(lines[1], "x,accuracy,0.5,0,1,0");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(matches!(preset("d9", 0), Err(CliError::Validation(_))));
    }
}
