//! Baseline classifiers and linear preprocessing.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::haus::{argmax, Architecture, Coupling, HausModel};
use crate::taxonomy::Taxonomy;

/// `<a, b> / (|a| |b|)`.
pub fn cosine_score(test: &[f64], target: &[f64]) -> Result<f64> {
    if test.len() != target.len() {
        return Err(Error::DimensionMismatch {
            context: "cosine operands",
            expected: target.len(),
            got: test.len(),
        });
    }
    let dot: f64 = test.iter().zip(target).map(|(a, b)| a * b).sum();
    let na2: f64 = test.iter().map(|a| a * a).sum();
    let nb2: f64 = target.iter().map(|b| b * b).sum();
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::InvalidArgument("cosine score of a zero-norm vector".into()));
    }
    Ok((dot / libm::sqrt(na2 * nb2)).clamp(-1.0, 1.0))
}

/// One mean vector per language.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    /// `n_languages x d`
    pub centroids: DMatrix<f64>,
}

pub fn fit_centroids(ds: &Dataset) -> Result<CentroidModel> {
    let t = ds.taxonomy();
    let (means, counts) = class_means(&ds.features(), &ds.language_labels(), t.n_languages());
    if let Some(l) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!(
            "language {:?} has no training sample",
            t.languages()[l]
        )));
    }
    Ok(CentroidModel { centroids: means })
}

impl CentroidModel {
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.centroids
            .row_iter()
            .map(|c| {
                let c: Vec<f64> = c.iter().copied().collect();
                cosine_score(x, &c)
            })
            .collect()
    }

    /// Language with the highest cosine score, ties to the lowest index.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(self.scores(x)?))
    }
}

pub fn classify_cosine(m: &CentroidModel, x: &[f64]) -> Result<usize> {
    m.classify(x)
}

/// `x -> M (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTransform {
    /// `out_dim x in_dim`
    pub matrix: DMatrix<f64>,
    pub mean: Option<DVector<f64>>,
}

impl LinearTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            mean: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Applies the transform to every row of `x`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                context: "transform input",
                expected: self.in_dim(),
                got: x.ncols(),
            });
        }
        let mut centred = x.clone();
        if let Some(mu) = &self.mean {
            for mut row in centred.row_iter_mut() {
                row -= mu.transpose();
            }
        }
        Ok(centred * self.matrix.transpose())
    }

    pub fn apply_dataset(&self, ds: &Dataset) -> Result<Dataset> {
        ds.with_features(&self.apply(&ds.features())?)
    }
}

/// Applies a chain of transforms in order.
pub fn apply_chain(transforms: &[LinearTransform], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = x.clone();
    for t in transforms {
        out = t.apply(&out)?;
    }
    Ok(out)
}

/// Diagonal loading added to covariance-type matrices before inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `c * trace / d`, or `c` itself when the trace is zero.
    TraceScaled(f64),
    Absolute(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::TraceScaled(1e-6)
    }
}

impl Ridge {
    fn amount(self, m: &DMatrix<f64>) -> f64 {
        match self {
            Ridge::Absolute(v) => v,
            Ridge::TraceScaled(c) => {
                let tr = m.trace();
                if tr > 0.0 {
                    c * tr / m.nrows() as f64
                } else {
                    c
                }
            }
        }
    }
}

fn class_means(x: &DMatrix<f64>, labels: &[usize], n_classes: usize) -> (DMatrix<f64>, Vec<usize>) {
    let mut sums = DMatrix::zeros(n_classes, x.ncols());
    let mut counts = alloc::vec![0usize; n_classes];
    for (i, &y) in labels.iter().enumerate() {
        let mut r = sums.row_mut(y);
        r += x.row(i);
        counts[y] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            let mut r = sums.row_mut(c);
            r /= n as f64;
        }
    }
    (sums, counts)
}

/// Within-class scatter `sum_c sum_i (x - mu_c)(x - mu_c)^T`, per-class
/// scatters and counts.
fn within_scatter(x: &DMatrix<f64>, labels: &[usize], n_classes: usize) -> (Vec<DMatrix<f64>>, Vec<usize>, DMatrix<f64>) {
    let d = x.ncols();
    let (means, counts) = class_means(x, labels, n_classes);
    let mut per_class = alloc::vec![DMatrix::zeros(d, d); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        let diff = (x.row(i) - means.row(y)).transpose();
        per_class[y] += &diff * diff.transpose();
    }
    (per_class, counts, means)
}

fn check_labels(x: &DMatrix<f64>, labels: &[usize], n_classes: usize) -> Result<()> {
    if x.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "labels",
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::Empty("fit data"));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::IndexOutOfRange {
            what: "class label",
            index: y,
            bound: n_classes,
        });
    }
    Ok(())
}

fn cholesky_or_diagnose(m: DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let diag_min = m.diagonal().min();
    let trace = m.trace();
    m.cholesky().ok_or_else(|| {
        Error::NotPositiveDefinite(format!(
            "{what}: trace {trace:e}, smallest diagonal entry {diag_min:e}"
        ))
    })
}

/// Within-class covariance normalization on language labels.
///
/// `W` is the mean of the per-language (maximum-likelihood) covariances;
/// the transform is `x -> B^T x` with `B B^T = (W + ridge I)^-1`.
pub fn fit_wccn(ds: &Dataset, ridge: Ridge) -> Result<LinearTransform> {
    let x = ds.features();
    let labels = ds.language_labels();
    let n_classes = ds.taxonomy().n_languages();
    check_labels(&x, &labels, n_classes)?;
    let d = x.ncols();
    let (scatters, counts, _) = within_scatter(&x, &labels, n_classes);
    let mut w = DMatrix::zeros(d, d);
    let mut present = 0usize;
    for (s, &n) in scatters.iter().zip(&counts) {
        if n > 0 {
            w += s / n as f64;
            present += 1;
        }
    }
    w /= present as f64;
    let lambda = ridge.amount(&w);
    w += DMatrix::identity(d, d) * lambda;
    let inv = cholesky_or_diagnose(w, "regularized within-class covariance")?.inverse();
    let inv = (&inv + inv.transpose()) * 0.5;
    let l = cholesky_or_diagnose(inv, "inverse within-class covariance")?.unpack();
    Ok(LinearTransform {
        matrix: l.transpose(),
        mean: None,
    })
}

/// Sorted (descending) eigenpairs of a symmetric matrix, each eigenvector
/// signed so its largest-magnitude entry is positive.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m.nrows(), idx.len());
    for (k, &i) in idx.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v = -v;
        }
        vectors.set_column(k, &v);
    }
    (values, vectors)
}

/// Linear discriminant analysis: the top generalized eigenvectors of
/// `(S_w + ridge I)^-1 S_b`, computed by Cholesky whitening of `S_w`
/// followed by a symmetric eigensolve. Directions are scaled to unit
/// within-class variance (`w^T (S_w + ridge I) w = 1`).
pub fn fit_lda(
    x: &DMatrix<f64>,
    labels: &[usize],
    n_classes: usize,
    out_dim: usize,
    ridge: Ridge,
) -> Result<LinearTransform> {
    check_labels(x, labels, n_classes)?;
    let d = x.ncols();
    let (scatters, counts, means) = within_scatter(x, labels, n_classes);
    let present: Vec<usize> = (0..n_classes).filter(|&c| counts[c] > 0).collect();
    if present.len() < 2 {
        return Err(Error::InvalidArgument("LDA needs at least two classes".into()));
    }
    if out_dim == 0 || out_dim > present.len() - 1 || out_dim > d {
        return Err(Error::InvalidArgument(format!(
            "LDA output dimension {out_dim} must be in 1..={} (classes - 1, at most {d})",
            (present.len() - 1).min(d)
        )));
    }
    let n = x.nrows() as f64;
    let global = DVector::from_iterator(d, x.column_iter().map(|c| c.sum() / n));
    let mut sw = DMatrix::zeros(d, d);
    for s in &scatters {
        sw += s;
    }
    let mut sb = DMatrix::zeros(d, d);
    for &c in &present {
        let diff = means.row(c).transpose() - &global;
        sb += (&diff * diff.transpose()) * counts[c] as f64;
    }
    let lambda = ridge.amount(&sw);
    sw += DMatrix::identity(d, d) * lambda;
    let chol = cholesky_or_diagnose(sw, "regularized within-class scatter")?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite("within-class Cholesky factor is singular".into()))?;
    let whitened = &l_inv * sb * l_inv.transpose();
    let (_, vecs) = sorted_eigen(whitened);
    let directions = l_inv.transpose() * vecs.columns(0, out_dim);
    Ok(LinearTransform {
        matrix: directions.transpose(),
        mean: Some(global),
    })
}

/// LDA on a dataset's language labels.
pub fn fit_lda_dataset(ds: &Dataset, out_dim: usize, ridge: Ridge) -> Result<LinearTransform> {
    fit_lda(
        &ds.features(),
        &ds.language_labels(),
        ds.taxonomy().n_languages(),
        out_dim,
        ridge,
    )
}

/// Principal component projection onto the `out_dim` directions of largest
/// variance; rows of the matrix are orthonormal.
pub fn fit_pca(x: &DMatrix<f64>, out_dim: usize) -> Result<LinearTransform> {
    let d = x.ncols();
    if out_dim == 0 || out_dim > d {
        return Err(Error::InvalidArgument(format!(
            "PCA output dimension {out_dim} must be in 1..={d}"
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Empty("PCA data"));
    }
    let n = x.nrows() as f64;
    let mean = DVector::from_iterator(d, x.column_iter().map(|c| c.sum() / n));
    let mut centred = x.clone();
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centred.transpose() * &centred / n;
    let (_, vecs) = sorted_eigen(cov);
    Ok(LinearTransform {
        matrix: vecs.columns(0, out_dim).transpose(),
        mean: Some(mean),
    })
}

/// Multi-class logistic regression: a single linear layer with softmax,
/// expressed as a language-only model so it trains with the same loop.
pub fn mclr_build(taxonomy: Taxonomy, dim: usize, seed: u64) -> Result<HausModel> {
    let arch = Architecture {
        input_dim: dim,
        trunk_hidden: Vec::new(),
        family_hidden: None,
        language_hidden: Vec::new(),
        coupling: Coupling::Independent,
        eta: 0.0,
        staircase: false,
    };
    HausModel::new(taxonomy, &arch, seed)
}
