//! Accuracy, confusion and NIST-style average detection cost.
//!
//! Each language has a detector that accepts a trial when the likelihood
//! ratio of that language against the average of the others exceeds the
//! Bayes threshold `(1 - p_target) / p_target`. Posteriors are treated as
//! likelihoods under flat priors. A score exactly at the threshold is a
//! rejection. Costs are fractions in `[0, 1]`; reports multiply by 100.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::haus::{argmax, HausModel};

pub const DEFAULT_P_TARGETS: [f64; 2] = [0.5, 0.1];

/// Detector decision for language `l` on one posterior vector.
pub fn accepts(scores: &[f64], l: usize, p_target: f64) -> bool {
    let k = scores.len();
    let others: f64 = scores
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != l)
        .map(|(_, &s)| s)
        .sum();
    let mean_other = others / (k - 1) as f64;
    scores[l] * p_target > (1.0 - p_target) * mean_other
}

fn validate_scores(scores: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "score labels",
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let k = scores.first().map(Vec::len).ok_or(Error::Empty("trials"))?;
    if k < 2 {
        return Err(Error::InvalidArgument("detection cost needs at least two languages".into()));
    }
    for s in scores {
        if s.len() != k {
            return Err(Error::DimensionMismatch {
                context: "score vector",
                expected: k,
                got: s.len(),
            });
        }
        if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("scores must be finite and non-negative".into()));
        }
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::IndexOutOfRange {
            what: "trial label",
            index: y,
            bound: k,
        });
    }
    Ok(k)
}

/// Combines per-language miss counts and per-pair false-accept counts.
/// Languages without trials are left out of the average.
pub fn cost_from_counts(
    trials: &[usize],
    misses: &[usize],
    false_accepts: &[Vec<usize>],
    p_target: f64,
) -> f64 {
    let k = trials.len();
    let mut total = 0.0;
    let mut n_targets = 0usize;
    for l in 0..k {
        if trials[l] == 0 {
            log::warn!("language {l} has no trials; excluded from the average cost");
            continue;
        }
        let p_miss = misses[l] as f64 / trials[l] as f64;
        let mut fa_sum = 0.0;
        let mut n_non = 0usize;
        for m in 0..k {
            if m != l && trials[m] > 0 {
                fa_sum += false_accepts[l][m] as f64 / trials[m] as f64;
                n_non += 1;
            }
        }
        let fa_term = if n_non > 0 {
            (1.0 - p_target) / n_non as f64 * fa_sum
        } else {
            0.0
        };
        total += p_target * p_miss + fa_term;
        n_targets += 1;
    }
    if n_targets == 0 {
        0.0
    } else {
        total / n_targets as f64
    }
}

/// Average detection cost at one target prior.
pub fn detection_cost(scores: &[Vec<f64>], labels: &[usize], p_target: f64) -> Result<f64> {
    if !(p_target > 0.0 && p_target <= 1.0) {
        return Err(Error::InvalidArgument(format!("p_target {p_target} outside (0, 1]")));
    }
    let k = validate_scores(scores, labels)?;
    let mut trials = vec![0usize; k];
    let mut misses = vec![0usize; k];
    let mut fa = vec![vec![0usize; k]; k];
    for (s, &y) in scores.iter().zip(labels) {
        trials[y] += 1;
        for l in 0..k {
            let acc = accepts(s, l, p_target);
            if l == y && !acc {
                misses[l] += 1;
            } else if l != y && acc {
                fa[l][y] += 1;
            }
        }
    }
    Ok(cost_from_counts(&trials, &misses, &fa, p_target))
}

/// Mean of the detection costs over the operating points.
pub fn c_primary_at(scores: &[Vec<f64>], labels: &[usize], p_targets: &[f64]) -> Result<f64> {
    if p_targets.is_empty() {
        return Err(Error::Empty("p_targets"));
    }
    let mut s = 0.0;
    for &p in p_targets {
        s += detection_cost(scores, labels, p)?;
    }
    Ok(s / p_targets.len() as f64)
}

/// `(Cavg(0.5) + Cavg(0.1)) / 2`.
pub fn c_primary(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    c_primary_at(scores, labels, &DEFAULT_P_TARGETS)
}

/// Hard-decision Cavg: a language "accepts" exactly the trials predicted as
/// it, `p_target = 0.5`.
pub fn c_avg_simple(predictions: &[usize], labels: &[usize], n_languages: usize) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "predictions",
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("trials"));
    }
    if let Some(&y) = predictions.iter().chain(labels).find(|&&y| y >= n_languages) {
        return Err(Error::IndexOutOfRange {
            what: "language",
            index: y,
            bound: n_languages,
        });
    }
    let mut trials = vec![0usize; n_languages];
    let mut misses = vec![0usize; n_languages];
    let mut fa = vec![vec![0usize; n_languages]; n_languages];
    for (&p, &y) in predictions.iter().zip(labels) {
        trials[y] += 1;
        if p != y {
            misses[y] += 1;
            fa[p][y] += 1;
        }
    }
    Ok(cost_from_counts(&trials, &misses, &fa, 0.5))
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// `confusion[true][predicted]`.
pub fn confusion(predictions: &[usize], labels: &[usize], n: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0usize; n]; n];
    for (&p, &y) in predictions.iter().zip(labels) {
        m[y][p] += 1;
    }
    m
}

/// Metrics on one set of trials.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSummary {
    pub trials: usize,
    pub accuracy: f64,
    pub cavg_by_ptarget: Vec<(f64, f64)>,
    pub c_primary: f64,
    /// Hard-decision Cavg.
    pub c_avg_hard: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    /// Pooled over every trial.
    pub pooled: CostSummary,
    pub confusion: Vec<Vec<usize>>,
    /// `(encoding index, summary)` for every encoding with trials.
    pub per_encoding: Vec<(usize, CostSummary)>,
}

fn summarize(scores: &[Vec<f64>], labels: &[usize], p_targets: &[f64]) -> Result<CostSummary> {
    let k = validate_scores(scores, labels)?;
    let preds: Vec<usize> = scores.iter().map(|s| argmax(s.iter().copied())).collect();
    let mut cavg = Vec::with_capacity(p_targets.len());
    for &p in p_targets {
        cavg.push((p, detection_cost(scores, labels, p)?));
    }
    let c_primary = cavg.iter().map(|(_, c)| c).sum::<f64>() / cavg.len().max(1) as f64;
    Ok(CostSummary {
        trials: labels.len(),
        accuracy: accuracy(&preds, labels),
        cavg_by_ptarget: cavg,
        c_primary,
        c_avg_hard: c_avg_simple(&preds, labels, k)?,
    })
}

/// Pooled metrics plus one summary per encoding subset. The pooled cost is
/// computed on all trials together, not averaged over subsets.
pub fn per_encoding_report(
    scores: &[Vec<f64>],
    labels: &[usize],
    encodings: &[usize],
    n_encodings: usize,
    p_targets: &[f64],
) -> Result<CostReport> {
    if encodings.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "encoding labels",
            expected: labels.len(),
            got: encodings.len(),
        });
    }
    if p_targets.is_empty() {
        return Err(Error::Empty("p_targets"));
    }
    let pooled = summarize(scores, labels, p_targets)?;
    let k = scores[0].len();
    let preds: Vec<usize> = scores.iter().map(|s| argmax(s.iter().copied())).collect();
    let mut per_encoding = Vec::new();
    for e in 0..n_encodings {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| encodings[i] == e).collect();
        if idx.is_empty() {
            log::warn!("encoding {e} has no trials; omitted from the report");
            continue;
        }
        let s: Vec<Vec<f64>> = idx.iter().map(|&i| scores[i].clone()).collect();
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        per_encoding.push((e, summarize(&s, &y, p_targets)?));
    }
    Ok(CostReport {
        pooled,
        confusion: confusion(&preds, labels, k),
        per_encoding,
    })
}

/// Language posteriors of a model, one vector per sample.
pub fn model_scores(model: &HausModel, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    let out = model.forward(&ds.features())?;
    Ok(out
        .language_post
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect())
}

/// Runs a model over a labelled dataset and reports costs per encoding.
pub fn evaluate_model(model: &HausModel, ds: &Dataset, p_targets: &[f64]) -> Result<CostReport> {
    let scores = model_scores(model, ds)?;
    per_encoding_report(
        &scores,
        &ds.language_labels(),
        &ds.encoding_labels(),
        ds.taxonomy().n_encodings(),
        p_targets,
    )
}
