//! The five subcommands.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use grassnet::features::extract_all;
use grassnet::metrics::evaluate;
use grassnet::pipeline::{cluster_states, detect_communities, track_sequences, Mode, PipelineConfig};
use grassnet::synth::{generate, ScenarioSpec};
use grassnet::{Horizon, Scope, StatePartition};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bench::{cmd_bench, preset};
use crate::error::{CliError, CliResult};
use crate::io::{read_json, read_labels, read_panel, write_json, write_panel, write_text};
use crate::scoring::cross_state_labels;

/// Command line. Every flag can also come from a `GRASSNET_<FLAG>`
/// environment variable (for example `GRASSNET_THREADS=4`); an explicit
/// flag wins over the environment.
#[derive(Debug, Parser)]
#[command(name = "grassnet", version, about = "Grassmannian state and community clustering for network time series")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GRASSNET_THREADS")]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true, env = "GRASSNET_VERBOSE")]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario; writes panel.csv and truth.json into --out.
    Synth {
        /// Scenario JSON, or {"preset": "<name>"}.
        #[arg(long, env = "GRASSNET_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "GRASSNET_OUT")]
        out: PathBuf,
        /// Reseed the scenario.
        #[arg(long, env = "GRASSNET_SEED")]
        seed: Option<u64>,
    },
    /// Dump Grassmann features as JSON lines.
    Extract {
        #[arg(long)]
        panel: PathBuf,
        /// Pipeline config; its `window` and `kernel` are used.
        #[arg(long, env = "GRASSNET_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "GRASSNET_OUT")]
        out: PathBuf,
    },
    /// Run the pipeline and write labels and partition as JSON.
    Cluster {
        #[arg(long, env = "GRASSNET_MODE")]
        mode: Option<Mode>,
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, env = "GRASSNET_CONFIG")]
        config: PathBuf,
        /// Partition JSON (or a truth bundle) used instead of estimated states.
        #[arg(long)]
        known_states: Option<PathBuf>,
        #[arg(long, env = "GRASSNET_OUT")]
        out: PathBuf,
    },
    /// Score predicted labels against truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, env = "GRASSNET_OUT")]
        out: PathBuf,
    },
    /// Repeated trials over a scenario matrix.
    Bench {
        #[arg(long, env = "GRASSNET_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "GRASSNET_TRIALS", default_value_t = 20)]
        trials: usize,
        /// First seed; trials use seed, seed+1, …
        #[arg(long, env = "GRASSNET_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "GRASSNET_OUT")]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { config, out, seed } => cmd_synth(&config, &out, seed),
        Command::Extract { panel, config, out } => with_threads(cli.threads, || cmd_extract(&panel, &config, &out)),
        Command::Cluster { mode, panel, config, known_states, out } => {
            with_threads(cli.threads, || cmd_cluster(mode, &panel, &config, known_states.as_deref(), &out))
        }
        Command::Eval { pred, truth, out } => cmd_eval(&pred, &truth, &out),
        Command::Bench { config, trials, seed, out } => cmd_bench(&config, trials, seed, cli.threads, &out).map(|_| ()),
    }
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T>
where
    T: Send,
{
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?
            .install(f),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    preset: String,
    #[serde(default)]
    seed: u64,
}

pub fn cmd_synth(config: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    // dispatch on the key rather than an untagged enum so schema errors
    // point at the offending field
    let value: serde_json::Value = read_json(config)?;
    let invalid = |e: serde_json::Error| CliError::Validation(format!("{}: {e}", config.display()));
    let scenario = if value.get("preset").is_some() {
        let p: PresetFile = serde_json::from_value(value).map_err(invalid)?;
        preset(&p.preset, seed.unwrap_or(p.seed))?
    } else {
        let spec: ScenarioSpec = serde_json::from_value(value).map_err(invalid)?;
        match seed {
            Some(s) => spec.reseeded(s),
            None => spec,
        }
    };
    let (panel, truth) = generate(&scenario)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_panel(&out.join("panel.csv"), &panel)?;
    write_json(&out.join("truth.json"), &truth)
}

/// One line of the feature dump.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FeatureRecord {
    pub scope: Scope,
    pub node: String,
    pub anchor: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<usize>,
    pub rows: usize,
    pub cols: usize,
    /// Orthonormal basis, row-major.
    pub basis: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub ambiguous_cutoff: bool,
}

pub fn cmd_extract(panel: &Path, config: &Path, out: &Path) -> CliResult<()> {
    let panel = read_panel(panel)?;
    let cfg: PipelineConfig = read_json(config)?;
    let features = extract_all(&panel, &cfg.window, &cfg.kernel, &Horizon::All)?;
    let mut text = String::new();
    for f in &features {
        let p = f.provenance();
        let b = f.point.basis();
        let record = FeatureRecord {
            scope: p.scope,
            node: p.node.clone(),
            anchor: p.anchor,
            state: p.state,
            rows: b.nrows(),
            cols: b.ncols(),
            basis: (0..b.nrows()).flat_map(|r| (0..b.ncols()).map(move |c| b[(r, c)])).collect(),
            singular_values: f.singular_values.clone(),
            ambiguous_cutoff: f.ambiguous_cutoff,
        };
        text.push_str(&serde_json::to_string(&record).expect("record serializes"));
        text.push('\n');
    }
    write_text(out, &text)
}

/// Accepts a bare partition or an object carrying one under `partition`.
fn read_partition(path: &Path) -> CliResult<StatePartition> {
    let value: serde_json::Value = read_json(path)?;
    let inner = value.get("partition").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn cmd_cluster(
    mode: Option<Mode>,
    panel: &Path,
    config: &Path,
    known_states: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let panel = read_panel(panel)?;
    let mut cfg: PipelineConfig = read_json(config)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(path) = known_states {
        cfg.known_states = Some(read_partition(path)?);
    }
    cfg.validate()?;
    let doc = match cfg.mode {
        Mode::States => {
            let o = cluster_states(&panel, &cfg)?;
            json!({
                "mode": "states",
                "sample_labels": o.partition.sample_labels(),
                "partition": o.partition,
                "window_labels": o.window_labels,
                "anchors": o.anchors,
                "extracted": o.extracted,
                "diagnostics": o.diagnostics,
            })
        }
        Mode::Communities => {
            let o = detect_communities(&panel, &cfg)?;
            json!({
                "mode": "communities",
                "partition": o.partition,
                "states": o.states,
                "extracted": o.extracted,
            })
        }
        Mode::Sequences => {
            let o = track_sequences(&panel, &cfg)?;
            json!({
                "mode": "sequences",
                "partition": o.partition,
                "labels": o.features.iter().map(|f| f.label).collect::<Vec<_>>(),
                "cross_state_labels": cross_state_labels(&o),
                "features": o.features,
                "extracted": o.extracted,
            })
        }
    };
    write_json(out, &doc)
}

pub fn cmd_eval(pred: &Path, truth: &Path, out: &Path) -> CliResult<()> {
    let p = read_labels(pred)?;
    let t = read_labels(truth)?;
    if p.len() != t.len() {
        return Err(CliError::Validation(format!(
            "prediction has {} labels, truth has {}",
            p.len(),
            t.len()
        )));
    }
    write_json(out, &evaluate(&p, &t)?)
}
