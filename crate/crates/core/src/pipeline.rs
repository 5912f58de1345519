//! End-to-end clustering: network states, per-state communities and
//! subnetwork state sequences.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_all, Feature, Horizon, TimeSeriesPanel, WindowConfig};
use crate::gct::{canonical_labels, gct, GctDiagnostics, GctParams, Labeling};
use crate::grassmann::{GrassmannPoint, Scope};
use crate::kernels::KernelSpec;

/// Samples `[start, end)` generated by / assigned to one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub state: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Ordered, gap-free cover of the time horizon by state segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePartition {
    pub segments: Vec<Segment>,
}

impl StatePartition {
    /// Check that the segments tile `[0, len)` exactly.
    pub fn validate(&self, len: usize) -> Result<()> {
        let mut t = 0;
        for (k, s) in self.segments.iter().enumerate() {
            if s.start != t || s.end <= s.start {
                return Err(Error::validation(format!(
                    "segment {k} [{}, {}) does not continue the cover at {t}",
                    s.start, s.end
                )));
            }
            t = s.end;
        }
        if t != len {
            return Err(Error::validation(format!(
                "partition covers [0, {t}) but the horizon has {len} samples"
            )));
        }
        Ok(())
    }

    /// Group consecutive equal labels into segments.
    pub fn from_sample_labels(labels: &[usize]) -> Self {
        let mut segments: Vec<Segment> = Vec::new();
        for (t, &l) in labels.iter().enumerate() {
            match segments.last_mut() {
                Some(s) if s.state == l => s.end = t + 1,
                _ => segments.push(Segment {
                    start: t,
                    end: t + 1,
                    state: l,
                }),
            }
        }
        Self { segments }
    }

    pub fn sample_labels(&self) -> Vec<usize> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat(s.state).take(s.len()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Distinct state ids in order of first appearance.
    pub fn states(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for s in &self.segments {
            if !out.contains(&s.state) {
                out.push(s.state);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    States,
    Communities,
    Sequences,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "states" => Ok(Mode::States),
            "communities" => Ok(Mode::Communities),
            "sequences" => Ok(Mode::Sequences),
            other => Err(Error::validation(format!(
                "unknown mode `{other}` (expected states, communities or sequences)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Window for state clustering (network-wide scope). A per-node window
    /// here doubles as `node_window` and then requires `known_states`.
    pub window: WindowConfig,
    pub kernel: KernelSpec,
    pub gct: GctParams,
    /// Per-node window for community and sequence clustering.
    #[serde(default)]
    pub node_window: Option<WindowConfig>,
    /// Kernel for the per-node stage; defaults to `kernel`.
    #[serde(default)]
    pub node_kernel: Option<KernelSpec>,
    /// GCT parameters for the per-node stage; default to `gct`.
    #[serde(default)]
    pub node_gct: Option<GctParams>,
    #[serde(default)]
    pub mode: Mode,
    /// Shortest run kept in the state partition; defaults to the window span.
    #[serde(default)]
    pub min_segment_len: Option<usize>,
    #[serde(default)]
    pub known_states: Option<StatePartition>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.kernel.validate()?;
        self.gct.validate()?;
        if let Some(w) = &self.node_window {
            w.validate()?;
            if w.scope != Scope::PerNode {
                return Err(Error::validation("node_window must have per_node scope"));
            }
        }
        if let Some(k) = &self.node_kernel {
            k.validate()?;
        }
        if let Some(g) = &self.node_gct {
            g.validate()?;
        }
        if self.min_segment_len == Some(0) {
            return Err(Error::validation("min_segment_len must be positive"));
        }
        if self.mode != Mode::States {
            self.node_stage_window()?;
        }
        if self.known_states.is_none() {
            self.state_window()?;
        }
        Ok(())
    }

    fn state_window(&self) -> Result<&WindowConfig> {
        match self.window.scope {
            Scope::NetworkWide => Ok(&self.window),
            Scope::PerNode => Err(Error::validation(
                "state clustering needs a network_wide window; supply known_states otherwise",
            )),
        }
    }

    fn node_stage_window(&self) -> Result<&WindowConfig> {
        match (&self.node_window, self.window.scope) {
            (Some(w), _) => Ok(w),
            (None, Scope::PerNode) => Ok(&self.window),
            (None, Scope::NetworkWide) => Err(Error::validation(
                "community and sequence modes need a per_node window (node_window)",
            )),
        }
    }

    pub fn min_segment_len(&self) -> usize {
        self.min_segment_len.unwrap_or_else(|| self.window.span())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatesOutput {
    /// GCT label per network-wide window; empty when states were supplied.
    pub window_labels: Labeling,
    /// Panel-global anchor of each labelled window.
    pub anchors: Vec<usize>,
    pub partition: StatePartition,
    /// Number of features extracted.
    pub extracted: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostics: Option<GctDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCommunities {
    pub state: usize,
    /// Community per node.
    pub node_labels: Labeling,
    /// Feature-level labels, node-major.
    pub feature_labels: Labeling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitiesOutput {
    pub partition: StatePartition,
    pub states: Vec<StateCommunities>,
    pub extracted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFeature {
    pub node: usize,
    pub state: usize,
    pub segment: usize,
    pub anchor: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencesOutput {
    pub partition: StatePartition,
    pub features: Vec<SequenceFeature>,
    pub extracted: usize,
}

/// Sample labels from window labels by majority vote over covering
/// windows; a tie goes to the label of the earliest covering window.
/// Samples no window covers take the label of the nearest covered sample.
pub fn vote_samples(len: usize, coverage: &[(usize, usize)], labels: &[usize]) -> Vec<usize> {
    // votes[t] maps label -> (count, first window index)
    let mut votes: Vec<BTreeMap<usize, (usize, usize)>> = vec![BTreeMap::new(); len];
    for (w, (&(first, last), &label)) in coverage.iter().zip(labels).enumerate() {
        for slot in votes.iter_mut().take(last.min(len - 1) + 1).skip(first) {
            let e = slot.entry(label).or_insert((0, w));
            e.0 += 1;
        }
    }
    let winner: Vec<Option<usize>> = votes
        .iter()
        .map(|v| {
            v.iter()
                .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
                .map(|(l, _)| *l)
        })
        .collect();
    let covered: Vec<usize> = (0..len).filter(|&t| winner[t].is_some()).collect();
    if covered.is_empty() {
        return vec![0; len];
    }
    (0..len)
        .map(|t| match winner[t] {
            Some(l) => l,
            None => {
                let pos = covered.partition_point(|&c| c < t);
                let after = covered.get(pos).copied();
                let before = pos.checked_sub(1).map(|p| covered[p]);
                let pick = match (before, after) {
                    (Some(b), Some(a)) => {
                        if t - b <= a - t {
                            b
                        } else {
                            a
                        }
                    }
                    (Some(b), None) => b,
                    (None, Some(a)) => a,
                    (None, None) => unreachable!("covered is non-empty"),
                };
                winner[pick].expect("covered sample")
            }
        })
        .collect()
}

/// Absorb runs shorter than `min_len` into a neighbor: the shortest run goes
/// first (earliest on ties) and joins its longer neighbor (earlier on ties).
pub fn smooth_runs(labels: &[usize], min_len: usize) -> Vec<usize> {
    let mut runs: Vec<(usize, usize)> = StatePartition::from_sample_labels(labels)
        .segments
        .iter()
        .map(|s| (s.state, s.len()))
        .collect();
    loop {
        if runs.len() <= 1 {
            break;
        }
        let short = runs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.1 < min_len)
            .min_by(|a, b| a.1 .1.cmp(&b.1 .1).then(a.0.cmp(&b.0)))
            .map(|(k, _)| k);
        let Some(k) = short else { break };
        let left = k.checked_sub(1);
        let right = (k + 1 < runs.len()).then_some(k + 1);
        let target = match (left, right) {
            (Some(l), Some(r)) => {
                if runs[r].1 > runs[l].1 {
                    r
                } else {
                    l
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!("more than one run"),
        };
        runs[target].1 += runs[k].1;
        runs.remove(k);
        // merge neighbors that now carry the same label
        let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
        for r in runs {
            match merged.last_mut() {
                Some(last) if last.0 == r.0 => last.1 += r.1,
                _ => merged.push(r),
            }
        }
        runs = merged;
    }
    runs.iter()
        .flat_map(|&(l, n)| std::iter::repeat(l).take(n))
        .collect()
}

fn points(features: &[Feature]) -> Vec<GrassmannPoint> {
    features.iter().map(|f| f.point.clone()).collect()
}

/// Network-wide state clustering, or the supplied partition verbatim.
pub fn cluster_states(panel: &TimeSeriesPanel, config: &PipelineConfig) -> Result<StatesOutput> {
    if let Some(known) = &config.known_states {
        known.validate(panel.len())?;
        return Ok(StatesOutput {
            window_labels: Vec::new(),
            anchors: Vec::new(),
            partition: known.clone(),
            extracted: 0,
            diagnostics: None,
        });
    }
    config.validate()?;
    let window = config.state_window()?;
    let features = extract_all(panel, window, &config.kernel, &Horizon::All)?;
    let result = gct(&points(&features), &config.gct)?;
    let anchors: Vec<usize> = features.iter().map(|f| f.provenance().anchor).collect();
    let coverage: Vec<(usize, usize)> = anchors
        .iter()
        .map(|&a| window.coverage(a - panel.origin()))
        .collect();
    let votes = vote_samples(panel.len(), &coverage, &result.labels);
    let smoothed = smooth_runs(&votes, config.min_segment_len());
    let partition = StatePartition::from_sample_labels(&canonical_labels(&smoothed));
    Ok(StatesOutput {
        window_labels: result.labels,
        anchors,
        partition,
        extracted: features.len(),
        diagnostics: Some(result.diagnostics),
    })
}

fn check_segments(partition: &StatePartition, window: &WindowConfig) -> Result<()> {
    let required = window.sample_span();
    for (index, s) in partition.segments.iter().enumerate() {
        if s.len() < required {
            return Err(Error::SegmentTooShort {
                index,
                start: s.start,
                end: s.end,
                available: s.len(),
                required,
            });
        }
    }
    Ok(())
}

/// Per-node features of one segment, node-major.
fn segment_features(
    panel: &TimeSeriesPanel,
    segment: &Segment,
    window: &WindowConfig,
    kernel: &KernelSpec,
) -> Result<Vec<Feature>> {
    let slice = panel.slice(segment.start, segment.end)?;
    let mut features = extract_all(&slice, window, kernel, &Horizon::All)?;
    for f in &mut features {
        if let Some(p) = f.point.provenance.as_mut() {
            p.state = Some(segment.state);
        }
    }
    Ok(features)
}

fn node_index(panel: &TimeSeriesPanel, id: &str) -> usize {
    panel
        .node_ids()
        .iter()
        .position(|n| n == id)
        .expect("feature provenance names a panel node")
}

/// Most frequent label, lowest label on ties.
fn majority(labels: impl Iterator<Item = usize>) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(l, _)| *l)
        .unwrap_or(0)
}

fn node_config(config: &PipelineConfig) -> Result<(&WindowConfig, &KernelSpec, &GctParams)> {
    let window = config.node_stage_window()?;
    let kernel = config.node_kernel.as_ref().unwrap_or(&config.kernel);
    let params = config.node_gct.as_ref().unwrap_or(&config.gct);
    Ok((window, kernel, params))
}

/// States first, then per-state node communities.
///
/// Features of all segments of a state are clustered together; each node
/// takes the majority label of its features.
pub fn detect_communities(panel: &TimeSeriesPanel, config: &PipelineConfig) -> Result<CommunitiesOutput> {
    let (window, kernel, params) = node_config(config)?;
    let states = cluster_states(panel, config)?;
    let partition = states.partition;
    check_segments(&partition, window)?;

    let per_state: Vec<(StateCommunities, usize)> = partition
        .states()
        .into_par_iter()
        .map(|state| {
            let mut features = Vec::new();
            for seg in partition.segments.iter().filter(|s| s.state == state) {
                features.extend(segment_features(panel, seg, window, kernel)?);
            }
            let result = gct(&points(&features), params)?;
            let node_of: Vec<usize> = features
                .iter()
                .map(|f| node_index(panel, &f.provenance().node))
                .collect();
            let node_labels: Vec<usize> = (0..panel.node_count())
                .map(|v| {
                    majority(
                        node_of
                            .iter()
                            .zip(&result.labels)
                            .filter(|(n, _)| **n == v)
                            .map(|(_, l)| *l),
                    )
                })
                .collect();
            Ok((
                StateCommunities {
                    state,
                    node_labels: canonical_labels(&node_labels),
                    feature_labels: result.labels,
                },
                features.len(),
            ))
        })
        .collect::<Result<_>>()?;

    let extracted = states.extracted + per_state.iter().map(|(_, n)| n).sum::<usize>();
    Ok(CommunitiesOutput {
        partition,
        states: per_state.into_iter().map(|(s, _)| s).collect(),
        extracted,
    })
}

/// Per-node features of every segment pooled into one GCT pass.
pub fn track_sequences(panel: &TimeSeriesPanel, config: &PipelineConfig) -> Result<SequencesOutput> {
    let (window, kernel, params) = node_config(config)?;
    let states = cluster_states(panel, config)?;
    let partition = states.partition;
    check_segments(&partition, window)?;

    let per_segment: Vec<Vec<Feature>> = partition
        .segments
        .par_iter()
        .map(|seg| segment_features(panel, seg, window, kernel))
        .collect::<Result<_>>()?;
    let mut meta = Vec::new();
    let mut pooled = Vec::new();
    for (k, feats) in per_segment.into_iter().enumerate() {
        for f in feats {
            let p = f.provenance();
            meta.push((node_index(panel, &p.node), partition.segments[k].state, k, p.anchor));
            pooled.push(f.point);
        }
    }
    let result = gct(&pooled, params)?;
    let features = meta
        .into_iter()
        .zip(&result.labels)
        .map(|((node, state, segment, anchor), &label)| SequenceFeature {
            node,
            state,
            segment,
            anchor,
            label,
        })
        .collect();
    Ok(SequencesOutput {
        partition,
        features,
        extracted: states.extracted + pooled.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_round_trip_and_validation() {
        let labels = [0, 0, 1, 1, 1, 0];
        let p = StatePartition::from_sample_labels(&labels);
        assert_eq!(p.segments.len(), 3);
        assert_eq!(p.sample_labels(), labels);
        p.validate(6).unwrap();
        assert!(p.validate(7).is_err());
        let gap = StatePartition {
            segments: vec![Segment { start: 0, end: 2, state: 0 }, Segment { start: 3, end: 6, state: 1 }],
        };
        assert!(gap.validate(6).is_err());
        assert_eq!(p.states(), vec![0, 1]);
    }

    #[test]
    fn vote_majority_and_ties() {
        // two windows over [0,3] labelled 5 and 7: the tie goes to the earlier one
        let v = vote_samples(6, &[(0, 3), (0, 3), (2, 5)], &[5, 7, 7]);
        assert_eq!(v, vec![5, 5, 7, 7, 7, 7]);
        // uncovered tail takes the nearest covered label
        let v = vote_samples(5, &[(0, 1), (1, 2)], &[1, 2]);
        assert_eq!(v, vec![1, 1, 2, 2, 2]);
        let v = vote_samples(5, &[(2, 2)], &[4]);
        assert_eq!(v, vec![4; 5]);
    }

    #[test]
    fn smoothing_absorbs_short_runs() {
        let labels = [0, 0, 0, 0, 1, 0, 0, 0, 2, 2, 2, 2, 2];
        assert_eq!(smooth_runs(&labels, 3), vec![0, 0, 0, 0, 0, 0, 0, 0, 2, 2, 2, 2, 2]);
        // short run between equal-length neighbors goes to the earlier one
        let labels = [0, 0, 0, 1, 2, 2, 2];
        assert_eq!(smooth_runs(&labels, 2), vec![0, 0, 0, 0, 2, 2, 2]);
        // a lone short run survives
        assert_eq!(smooth_runs(&[3, 3], 5), vec![3, 3]);
        // longer neighbor wins
        let labels = [0, 0, 1, 2, 2, 2];
        assert_eq!(smooth_runs(&labels, 2), vec![0, 0, 2, 2, 2, 2]);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("sequences".parse::<Mode>().unwrap(), Mode::Sequences);
        assert!("graph".parse::<Mode>().unwrap_err().is_validation());
    }
}
