//! Clustering scores: matched accuracy, NMI and binary confusion rates.

use std::collections::BTreeMap;

use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tpr: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub tnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub nmi: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confusion: Option<Confusion>,
    /// Points per label, keyed by label.
    pub pred_counts: BTreeMap<usize, usize>,
    pub truth_counts: BTreeMap<usize, usize>,
}

/// Contingency table with rows = predicted labels, columns = true labels,
/// both in ascending label order.
struct Table {
    pred_labels: Vec<usize>,
    truth_labels: Vec<usize>,
    counts: Vec<Vec<usize>>,
    n: usize,
}

fn table(pred: &[usize], truth: &[usize]) -> Result<Table> {
    if pred.len() != truth.len() {
        return Err(Error::input(format!(
            "labelings differ in length ({} vs {})",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::input("labelings are empty"));
    }
    let index = |labels: &[usize]| {
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        distinct
    };
    let pred_labels = index(pred);
    let truth_labels = index(truth);
    let mut counts = vec![vec![0; truth_labels.len()]; pred_labels.len()];
    for (p, t) in pred.iter().zip(truth) {
        let r = pred_labels.binary_search(p).expect("label indexed");
        let c = truth_labels.binary_search(t).expect("label indexed");
        counts[r][c] += 1;
    }
    Ok(Table {
        pred_labels,
        truth_labels,
        counts,
        n: pred.len(),
    })
}

/// Optimal one-to-one matching; returns for each predicted row its truth
/// column, or None when the row is left unmatched.
fn matching(t: &Table) -> (Vec<Option<usize>>, usize) {
    let rows = t.pred_labels.len();
    let cols = t.truth_labels.len();
    let side = rows.max(cols);
    let mut weights = Matrix::new(side, side, 0i64);
    for r in 0..rows {
        for c in 0..cols {
            weights[(r, c)] = t.counts[r][c] as i64;
        }
    }
    let (total, assign) = kuhn_munkres(&weights);
    let map = (0..rows)
        .map(|r| (assign[r] < cols).then_some(assign[r]))
        .collect();
    (map, total as usize)
}

/// Fraction of points agreeing after the best one-to-one relabeling.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = table(pred, truth)?;
    let (_, matched) = matching(&t);
    Ok(matched as f64 / t.n as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = table(pred, truth)?;
    let n = t.n as f64;
    let row_sums: Vec<usize> = t.counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..t.truth_labels.len())
        .map(|c| t.counts.iter().map(|r| r[c]).sum())
        .collect();
    let hp = entropy(row_sums.iter().copied(), n);
    let ht = entropy(col_sums.iter().copied(), n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (r, row) in t.counts.iter().enumerate() {
        for (c, &nrc) in row.iter().enumerate() {
            if nrc == 0 {
                continue;
            }
            let pij = nrc as f64 / n;
            mi += pij * (nrc as f64 * n / (row_sums[r] as f64 * col_sums[c] as f64)).ln();
        }
    }
    Ok((mi / ((hp + ht) / 2.0)).clamp(0.0, 1.0))
}

/// Binary rates after optimal matching; the lower truth label is positive.
///
/// Points whose predicted cluster is left unmatched count as misclassified:
/// a positive point there is a false negative, a negative one a false positive.
pub fn confusion(pred: &[usize], truth: &[usize]) -> Result<Confusion> {
    let t = table(pred, truth)?;
    if t.truth_labels.len() != 2 {
        return Err(Error::input(format!(
            "confusion rates need exactly 2 truth labels, found {}",
            t.truth_labels.len()
        )));
    }
    let (map, _) = matching(&t);
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (r, row) in t.counts.iter().enumerate() {
        let says_positive = map[r] == Some(0);
        let says_negative = map[r] == Some(1);
        let (pos, neg) = (row[0], row[1]);
        if says_positive {
            tp += pos;
            fp += neg;
        } else if says_negative {
            fn_ += pos;
            tn += neg;
        } else {
            fn_ += pos;
            fp += neg;
        }
    }
    let positives = (tp + fn_) as f64;
    let negatives = (fp + tn) as f64;
    Ok(Confusion {
        tpr: tp as f64 / positives,
        fpr: fp as f64 / negatives,
        fnr: fn_ as f64 / positives,
        tnr: tn as f64 / negatives,
    })
}

fn histogram(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &l in labels {
        *h.entry(l).or_insert(0) += 1;
    }
    h
}

/// Accuracy, NMI, and confusion rates when the truth is binary.
pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<EvalReport> {
    let accuracy = accuracy(pred, truth)?;
    let nmi = nmi(pred, truth)?;
    let truth_counts = histogram(truth);
    let confusion = if truth_counts.len() == 2 {
        Some(confusion(pred, truth)?)
    } else {
        None
    };
    Ok(EvalReport {
        accuracy,
        nmi,
        confusion,
        pred_counts: histogram(pred),
        truth_counts,
    })
}
