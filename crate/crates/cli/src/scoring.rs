//! Scores for pipeline outputs against generator truth.

use std::collections::BTreeMap;

use grassnet::metrics::{accuracy, nmi};
use grassnet::pipeline::{CommunitiesOutput, SequencesOutput};
use grassnet::synth::GroundTruth;
use grassnet::{Result, StatePartition};

/// Per-sample accuracy and NMI of an estimated partition.
pub fn state_scores(partition: &StatePartition, truth: &GroundTruth) -> Result<(f64, f64)> {
    let pred = partition.sample_labels();
    Ok((accuracy(&pred, &truth.sample_states)?, nmi(&pred, &truth.sample_states)?))
}

/// True state overlapping most samples of estimated state `state`, lowest
/// on ties.
pub fn dominant_true_state(partition: &StatePartition, state: usize, truth: &GroundTruth) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for seg in partition.segments.iter().filter(|s| s.state == state) {
        for t in seg.start..seg.end {
            *counts.entry(truth.sample_states[t]).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(s, _)| s)
        .unwrap_or(0)
}

/// Node accuracy per estimated state, against the blocks of its dominant
/// true state.
pub fn community_scores(out: &CommunitiesOutput, truth: &GroundTruth) -> Result<Vec<(usize, f64)>> {
    out.states
        .iter()
        .map(|s| {
            let t = dominant_true_state(&out.partition, s.state, truth);
            Ok((t, accuracy(&s.node_labels, &truth.state_blocks[t])?))
        })
        .collect()
}

/// Accuracy and NMI of pooled sequence labels. Each feature's truth is the
/// sequence label of its node in the state that generated its anchor
/// sample.
pub fn sequence_scores(out: &SequencesOutput, truth: &GroundTruth) -> Result<(f64, f64)> {
    let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut target = Vec::with_capacity(out.features.len());
    for f in &out.features {
        let key = truth.sequence_label(f.node, truth.sample_states[f.anchor]);
        let next = ids.len();
        target.push(*ids.entry(key).or_insert(next));
    }
    let pred: Vec<usize> = out.features.iter().map(|f| f.label).collect();
    Ok((accuracy(&pred, &target)?, nmi(&pred, &target)?))
}

/// Label groups whose features come from more than one state.
pub fn cross_state_labels(out: &SequencesOutput) -> Vec<usize> {
    let mut states: BTreeMap<usize, std::collections::BTreeSet<usize>> = BTreeMap::new();
    for f in &out.features {
        states.entry(f.label).or_default().insert(f.state);
    }
    states
        .into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(l, _)| l)
        .collect()
}
