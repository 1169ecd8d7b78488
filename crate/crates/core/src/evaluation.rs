//! Scoring of inferred structure against ground truth: influence errors,
//! parameter error totals, attribution accuracy, edge-recovery AUC and
//! convergence traces.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::model::{MultiplexAdjacency, ParentAssignment, ParentLabel};

/// All metrics for one recovered run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Mean of |W - What| / W over true edges.
    pub mae_influence: f64,
    /// Mean of (W - What) / W over true edges; can cancel, kept as a
    /// secondary diagnostic.
    pub mae_influence_signed: f64,
    /// Sum of estimated influence mass on true non-edges.
    pub false_edge_mass: f64,
    pub tae_lambda: f64,
    pub tae_authoritative: f64,
    pub tae_susceptible: f64,
    pub parent_accuracy: f64,
    pub parent_channel_accuracy: f64,
    pub edge_auc: f64,
    /// Per-iteration parent-and-channel accuracy over the raw chain trace.
    pub convergence: Vec<f64>,
}

impl EvalReport {
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("mae_influence", self.mae_influence),
            ("mae_influence_signed", self.mae_influence_signed),
            ("false_edge_mass", self.false_edge_mass),
            ("tae_lambda", self.tae_lambda),
            ("tae_authoritative", self.tae_authoritative),
            ("tae_susceptible", self.tae_susceptible),
            ("parent_accuracy", self.parent_accuracy),
            ("parent_channel_accuracy", self.parent_channel_accuracy),
            ("edge_auc", self.edge_auc),
        ]
    }
}

fn check_shape3(truth: &Array3<f64>, est: &Array3<f64>) -> Result<()> {
    if truth.dim() != est.dim() {
        return Err(Error::ShapeMismatch(format!(
            "truth {:?} vs estimate {:?}",
            truth.dim(),
            est.dim()
        )));
    }
    Ok(())
}

/// Mean relative influence error over entries with positive true weight.
/// Returns the (absolute, signed) pair.
pub fn mae_influence(true_w: &Array3<f64>, est_w: &Array3<f64>) -> Result<(f64, f64)> {
    check_shape3(true_w, est_w)?;
    let mut abs = 0.0;
    let mut signed = 0.0;
    let mut edges = 0usize;
    for (t, e) in true_w.iter().zip(est_w.iter()) {
        if *t > 0.0 {
            let rel = (t - e) / t;
            abs += rel.abs();
            signed += rel;
            edges += 1;
        }
    }
    if edges == 0 {
        return Err(Error::EmptySupport);
    }
    Ok((abs / edges as f64, signed / edges as f64))
}

/// Estimated influence mass placed on true non-edges.
pub fn false_edge_mass(true_w: &Array3<f64>, est_w: &Array3<f64>) -> Result<f64> {
    check_shape3(true_w, est_w)?;
    Ok(true_w
        .iter()
        .zip(est_w.iter())
        .filter(|(t, _)| **t == 0.0)
        .map(|(_, e)| e)
        .sum())
}

/// Sum of absolute componentwise differences.
pub fn tae(truth: &Array2<f64>, est: &Array2<f64>) -> Result<f64> {
    if truth.dim() != est.dim() {
        return Err(Error::ShapeMismatch(format!(
            "truth {:?} vs estimate {:?}",
            truth.dim(),
            est.dim()
        )));
    }
    Ok(truth.iter().zip(est.iter()).map(|(t, e)| (t - e).abs()).sum())
}

fn check_lengths(truth: &ParentAssignment, inferred: &ParentAssignment) -> Result<()> {
    if truth.labels.len() != inferred.labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "truth has {} labels, inferred has {}",
            truth.labels.len(),
            inferred.labels.len()
        )));
    }
    Ok(())
}

fn parent_matches(truth: &ParentLabel, inferred: &ParentLabel) -> bool {
    // Spontaneous events count as their own parent, so any spontaneous
    // label matches any other regardless of layer.
    match (truth, inferred) {
        (ParentLabel::Spontaneous { .. }, ParentLabel::Spontaneous { .. }) => true,
        (ParentLabel::Triggered { parent: a, .. }, ParentLabel::Triggered { parent: b, .. }) => a == b,
        _ => false,
    }
}

/// Fraction of events whose parent matches the truth.
pub fn parent_accuracy(truth: &ParentAssignment, inferred: &ParentAssignment) -> Result<f64> {
    check_lengths(truth, inferred)?;
    if truth.labels.is_empty() {
        return Ok(1.0);
    }
    let hits = truth
        .labels
        .iter()
        .zip(&inferred.labels)
        .filter(|(t, i)| parent_matches(t, i))
        .count();
    Ok(hits as f64 / truth.labels.len() as f64)
}

/// Fraction of events whose parent and diffusion channel both match.
pub fn parent_channel_accuracy(truth: &ParentAssignment, inferred: &ParentAssignment) -> Result<f64> {
    check_lengths(truth, inferred)?;
    if truth.labels.is_empty() {
        return Ok(1.0);
    }
    let hits = truth
        .labels
        .iter()
        .zip(&inferred.labels)
        .filter(|(t, i)| parent_matches(t, i) && t.layer() == i.layer())
        .count();
    Ok(hits as f64 / truth.labels.len() as f64)
}

/// Ranking quality of the posterior edge probabilities against the true
/// adjacency over off-diagonal cells, as the midrank Mann-Whitney AUC.
pub fn edge_auc(truth: &MultiplexAdjacency, probs: &Array3<f64>) -> Result<f64> {
    let (n, k) = (truth.n_nodes(), truth.n_layers());
    if probs.dim() != (n, n, k) {
        return Err(Error::ShapeMismatch(format!(
            "adjacency ({n}, {n}, {k}) vs probabilities {:?}",
            probs.dim()
        )));
    }
    let mut scored: Vec<(f64, bool)> = Vec::with_capacity(n * (n - 1) * k);
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            for l in 0..k {
                scored.push((probs[(u, v, l)], truth.get(u, v, l)));
            }
        }
    }
    let positives = scored.iter().filter(|(_, t)| *t).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Midranks over tied scores, then the rank-sum form of the statistic.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &scored[i..j] {
            if item.1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let p = positives as f64;
    let q = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q))
}

/// Per-iteration parent-and-channel accuracy across a raw assignment trace.
pub fn convergence_trace(assignments: &[ParentAssignment], truth: &ParentAssignment) -> Result<Vec<f64>> {
    assignments
        .iter()
        .map(|a| parent_channel_accuracy(truth, a))
        .collect()
}
