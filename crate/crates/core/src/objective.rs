//! Prior-derived example weights for the class- and channel-imbalance
//! aware training objective.
//!
//! Pipeline per label axis: class priors, then inverse-ratio weights
//! `max(Pr) / Pr_i`, then min-max rescaling into `[x_min, x_max]`. The task
//! weight of an example adds its encoding weight to its family (or
//! language) weight.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

pub const DEFAULT_BOUNDS: (f64, f64) = (0.1, 8.0);

/// Where class priors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorMode {
    /// Whole training set, computed once.
    Global,
    /// Recomputed from every mini-batch over the classes it contains.
    MiniBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub w_encoding: Vec<f64>,
    pub w_cluster: Vec<f64>,
    pub w_language: Vec<f64>,
    pub bounds: (f64, f64),
}

/// `Pr_i = n_i / sum_j n_j`.
pub fn estimate_priors(labels: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    if n_classes == 0 {
        return Err(Error::InvalidArgument("need at least one class".into()));
    }
    if labels.is_empty() {
        return Err(Error::Empty("prior estimation labels"));
    }
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        *counts.get_mut(y).ok_or(Error::IndexOutOfRange {
            what: "class label",
            index: y,
            bound: n_classes,
        })? += 1;
    }
    let total = labels.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

/// `w_i = max_j Pr_j / Pr_i`. A zero prior is an error: the class was never
/// observed.
pub fn inverse_ratio_weights(priors: &[f64]) -> Result<Vec<f64>> {
    if priors.is_empty() {
        return Err(Error::Empty("priors"));
    }
    if let Some(i) = priors.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::AbsentClass {
            axis: "class",
            class: i,
        });
    }
    let max = priors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(priors.iter().map(|&p| max / p).collect())
}

fn check_bounds(x_min: f64, x_max: f64) -> Result<()> {
    if !(x_min > 0.0 && x_max >= x_min && x_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "weight bounds must satisfy 0 < x_min <= x_max, got [{x_min}, {x_max}]"
        )));
    }
    Ok(())
}

/// Min-max rescaling onto exactly `[x_min, x_max]`; all-equal input maps
/// to all `1.0`.
pub fn rescale_weights(w: &[f64], x_min: f64, x_max: f64) -> Result<Vec<f64>> {
    check_bounds(x_min, x_max)?;
    if w.is_empty() {
        return Ok(Vec::new());
    }
    let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![1.0; w.len()]);
    }
    Ok(w
        .iter()
        .map(|&v| (x_max - x_min) * (v - lo) / (hi - lo) + x_min)
        .collect())
}

fn axis_weights(labels: &[usize], n: usize, axis: &'static str, bounds: (f64, f64)) -> Result<Vec<f64>> {
    let priors = estimate_priors(labels, n)?;
    let inv = inverse_ratio_weights(&priors).map_err(|e| match e {
        Error::AbsentClass { class, .. } => Error::AbsentClass { axis, class },
        other => other,
    })?;
    rescale_weights(&inv, bounds.0, bounds.1)
}

impl WeightTable {
    /// Every weight 1.0 (the unweighted objective).
    pub fn uniform(taxonomy: &Taxonomy) -> Self {
        Self {
            w_encoding: vec![1.0; taxonomy.n_encodings()],
            w_cluster: vec![1.0; taxonomy.n_families()],
            w_language: vec![1.0; taxonomy.n_languages()],
            bounds: DEFAULT_BOUNDS,
        }
    }

    /// Example weights `(w_family, w_language)` for each sample:
    /// encoding weight plus family weight, encoding weight plus language
    /// weight.
    pub fn example_weights(&self, taxonomy: &Taxonomy, batch: &[Sample]) -> (Vec<f64>, Vec<f64>) {
        let map = taxonomy.family_map();
        batch
            .iter()
            .map(|s| {
                let we = self.w_encoding[s.encoding];
                (we + self.w_cluster[map[s.language]], we + self.w_language[s.language])
            })
            .unzip()
    }
}

/// Runs priors → inverse ratio → rescale independently on the encoding,
/// family and language axes of the dataset.
pub fn build_weight_table(ds: &Dataset, bounds: (f64, f64)) -> Result<WeightTable> {
    check_bounds(bounds.0, bounds.1)?;
    let t = ds.taxonomy();
    Ok(WeightTable {
        w_encoding: axis_weights(&ds.encoding_labels(), t.n_encodings(), "encoding", bounds)?,
        w_cluster: axis_weights(&ds.family_labels(), t.n_families(), "family", bounds)?,
        w_language: axis_weights(&ds.language_labels(), t.n_languages(), "language", bounds)?,
        bounds,
    })
}

/// Free-function form of [`WeightTable::example_weights`].
pub fn example_weights(table: &WeightTable, taxonomy: &Taxonomy, batch: &[Sample]) -> (Vec<f64>, Vec<f64>) {
    table.example_weights(taxonomy, batch)
}

/// Priors over the classes present in `labels`, indexed by class (absent
/// classes get 0).
pub fn batch_priors(labels: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    estimate_priors(labels, n_classes)
}

/// Inverse-ratio plus rescale over the classes present; absent classes are
/// left at 0 and never looked up.
fn present_class_weights(labels: &[usize], n: usize, bounds: (f64, f64)) -> Result<Vec<f64>> {
    let priors = batch_priors(labels, n)?;
    let present: Vec<usize> = (0..n).filter(|&c| priors[c] > 0.0).collect();
    let p: Vec<f64> = present.iter().map(|&c| priors[c]).collect();
    let w = rescale_weights(&inverse_ratio_weights(&p)?, bounds.0, bounds.1)?;
    let mut out = vec![0.0; n];
    for (c, v) in present.into_iter().zip(w) {
        out[c] = v;
    }
    Ok(out)
}

/// Per-example `(w_family, w_language)` for a batch. `MiniBatch` recomputes
/// every table from the batch alone; `Global` reads `table`.
pub fn batch_weights(
    mode: PriorMode,
    table: &WeightTable,
    taxonomy: &Taxonomy,
    batch: &[Sample],
) -> Result<(Vec<f64>, Vec<f64>)> {
    match mode {
        PriorMode::Global => Ok(table.example_weights(taxonomy, batch)),
        PriorMode::MiniBatch => {
            if batch.is_empty() {
                return Err(Error::Empty("mini-batch"));
            }
            let map = taxonomy.family_map();
            let enc: Vec<usize> = batch.iter().map(|s| s.encoding).collect();
            let lang: Vec<usize> = batch.iter().map(|s| s.language).collect();
            let fam: Vec<usize> = lang.iter().map(|&l| map[l]).collect();
            let local = WeightTable {
                w_encoding: present_class_weights(&enc, taxonomy.n_encodings(), table.bounds)?,
                w_cluster: present_class_weights(&fam, taxonomy.n_families(), table.bounds)?,
                w_language: present_class_weights(&lang, taxonomy.n_languages(), table.bounds)?,
                bounds: table.bounds,
            };
            Ok(local.example_weights(taxonomy, batch))
        }
    }
}

/// Prior-divided cross-entropy `-(1 / (K n)) sum_i log p_i[y_i] / Pr(y_i)`.
/// `probs` holds one probability vector per example.
pub fn bce_loss(probs: &[Vec<f64>], labels: &[usize], priors: &[f64], n_classes: usize) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "bce labels",
            expected: probs.len(),
            got: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::Empty("bce batch"));
    }
    let mut acc = 0.0;
    for (p, &y) in probs.iter().zip(labels) {
        let py = *p.get(y).ok_or(Error::IndexOutOfRange {
            what: "class label",
            index: y,
            bound: p.len(),
        })?;
        let prior = *priors.get(y).ok_or(Error::IndexOutOfRange {
            what: "prior",
            index: y,
            bound: priors.len(),
        })?;
        if !(prior > 0.0) {
            return Err(Error::AbsentClass {
                axis: "class",
                class: y,
            });
        }
        acc += libm::log(py) / prior;
    }
    Ok(-acc / (n_classes as f64 * probs.len() as f64))
}
