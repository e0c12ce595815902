//! Two-head hierarchical classifier.
//!
//! A shared trunk feeds a shallow family branch and a deeper language
//! branch. With additive coupling every family logit is added to the logits
//! of that family's member languages before the language softmax, so the
//! language head attends to the family the model itself predicts. Family
//! labels are only consumed by the training loss.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::{log_softmax_rows, softmax_rows, Activations, GradientBundle, Mlp};
use crate::taxonomy::Taxonomy;

/// How family logits reach the language head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// Family logit added to each member language's logit.
    Additive,
    /// Heads share only the trunk.
    Independent,
}

pub const DEFAULT_ETA: f64 = 0.6;

/// Layer sizes of a model. Hidden-size lists exclude the input and output
/// layers; an empty trunk is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_dim: usize,
    pub trunk_hidden: Vec<usize>,
    /// `None` builds a language-only model.
    pub family_hidden: Option<Vec<usize>>,
    pub language_hidden: Vec<usize>,
    pub coupling: Coupling,
    pub eta: f64,
    /// Require the family branch to be no deeper than the language branch.
    pub staircase: bool,
}

impl Architecture {
    /// Default depth profile: one linear layer for families, a hidden layer
    /// plus output layer for languages.
    pub fn staircase(input_dim: usize, trunk_hidden: Vec<usize>, language_hidden: usize) -> Self {
        Self {
            input_dim,
            trunk_hidden,
            family_hidden: Some(Vec::new()),
            language_hidden: alloc::vec![language_hidden],
            coupling: Coupling::Additive,
            eta: DEFAULT_ETA,
            staircase: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HausModel {
    taxonomy: Taxonomy,
    trunk: Mlp,
    family_branch: Option<Mlp>,
    language_branch: Mlp,
    coupling: Coupling,
    eta: f64,
}

/// Batch outputs of both heads (one row per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct HausOutput {
    pub family_logits: Option<DMatrix<f64>>,
    pub language_logits: DMatrix<f64>,
    pub combined_logits: DMatrix<f64>,
    pub family_post: Option<DMatrix<f64>>,
    pub language_post: DMatrix<f64>,
    pub family_log_post: Option<DMatrix<f64>>,
    pub language_log_post: DMatrix<f64>,
}

impl HausOutput {
    /// Output assembled directly from posteriors (logit fields hold the log
    /// posteriors). Useful for evaluating the loss on hand-set values.
    pub fn from_posteriors(family_post: Option<DMatrix<f64>>, language_post: DMatrix<f64>) -> Self {
        let ln = |m: &DMatrix<f64>| m.map(libm::log);
        let language_log_post = ln(&language_post);
        let family_log_post = family_post.as_ref().map(ln);
        Self {
            family_logits: family_log_post.clone(),
            language_logits: language_log_post.clone(),
            combined_logits: language_log_post.clone(),
            family_post,
            language_post,
            family_log_post,
            language_log_post,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.language_post.nrows()
    }
}

/// Labels and per-example weights for one batch.
#[derive(Debug, Clone, Copy)]
pub struct Targets<'a> {
    pub language: &'a [usize],
    pub family: &'a [usize],
    pub w_family: &'a [f64],
    pub w_language: &'a [f64],
}

/// Gradients in model parameter order: trunk, family branch, language branch.
#[derive(Debug, Clone, PartialEq)]
pub struct HausGradients {
    pub trunk: GradientBundle,
    pub family: Option<GradientBundle>,
    pub language: GradientBundle,
}

impl HausGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.trunk.flatten_into(&mut v);
        if let Some(f) = &self.family {
            f.flatten_into(&mut v);
        }
        self.language.flatten_into(&mut v);
        v
    }
}

/// `out[i] = lang[i] + fam[family_of(i)]` for every language `i`.
pub fn combine_logits(lang: &[f64], fam: &[f64], taxonomy: &Taxonomy) -> Result<Vec<f64>> {
    if lang.len() != taxonomy.n_languages() {
        return Err(Error::DimensionMismatch {
            context: "language logits",
            expected: taxonomy.n_languages(),
            got: lang.len(),
        });
    }
    if fam.len() != taxonomy.n_families() {
        return Err(Error::DimensionMismatch {
            context: "family logits",
            expected: taxonomy.n_families(),
            got: fam.len(),
        });
    }
    let map = taxonomy.family_map();
    Ok(lang.iter().zip(map).map(|(l, &f)| l + fam[f]).collect())
}

fn combine_rows(lang: &DMatrix<f64>, fam: &DMatrix<f64>, map: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(lang.nrows(), lang.ncols(), |i, l| lang[(i, l)] + fam[(i, map[l])])
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("eta {eta} outside [0, 1]")));
    }
    Ok(())
}

/// Weighted mean negative log-likelihood `sum w_i (-log p_i[y_i]) / sum w_i`.
fn weighted_nll(log_post: &DMatrix<f64>, labels: &[usize], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let s: f64 = labels
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(i, (&y, &w))| -w * log_post[(i, y)])
        .sum();
    s / total
}

fn check_targets(out: &HausOutput, t: &Targets<'_>, n_fam_classes: Option<usize>) -> Result<()> {
    let n = out.n_samples();
    for (ctx, len) in [
        ("language labels", t.language.len()),
        ("family labels", t.family.len()),
        ("family weights", t.w_family.len()),
        ("language weights", t.w_language.len()),
    ] {
        if len != n {
            return Err(Error::DimensionMismatch {
                context: ctx,
                expected: n,
                got: len,
            });
        }
    }
    if n == 0 {
        return Err(Error::Empty("batch"));
    }
    if t
        .w_family
        .iter()
        .chain(t.w_language)
        .any(|w| !(w.is_finite() && *w > 0.0))
    {
        return Err(Error::InvalidArgument("example weights must be positive".into()));
    }
    let n_lang = out.language_post.ncols();
    if let Some(&y) = t.language.iter().find(|&&y| y >= n_lang) {
        return Err(Error::IndexOutOfRange {
            what: "language label",
            index: y,
            bound: n_lang,
        });
    }
    if let Some(nf) = n_fam_classes {
        if let Some(&z) = t.family.iter().find(|&&z| z >= nf) {
            return Err(Error::IndexOutOfRange {
                what: "family label",
                index: z,
                bound: nf,
            });
        }
    }
    Ok(())
}

fn check_family_consistency(taxonomy: &Taxonomy, t: &Targets<'_>) -> Result<()> {
    let map = taxonomy.family_map();
    for (i, (&y, &z)) in t.language.iter().zip(t.family).enumerate() {
        let expected = *map.get(y).ok_or(Error::IndexOutOfRange {
            what: "language label",
            index: y,
            bound: map.len(),
        })?;
        if expected != z {
            return Err(Error::InconsistentFamily {
                example: i,
                language: y,
                expected,
                got: z,
            });
        }
    }
    Ok(())
}

/// Joint cost `eta * D_family + (1 - eta) * D_language`, each term a
/// weighted-mean cross-entropy. Family labels must agree with the taxonomy.
pub fn joint_loss(out: &HausOutput, taxonomy: &Taxonomy, t: &Targets<'_>, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    check_targets(out, t, out.family_post.as_ref().map(|m| m.ncols()))?;
    check_family_consistency(taxonomy, t)?;
    let lang_term = weighted_nll(&out.language_log_post, t.language, t.w_language);
    let fam_term = match &out.family_log_post {
        Some(lp) => weighted_nll(lp, t.family, t.w_family),
        None if eta == 0.0 => 0.0,
        None => {
            return Err(Error::InvalidArgument(
                "eta > 0 requires a family head".into(),
            ))
        }
    };
    Ok(eta * fam_term + (1.0 - eta) * lang_term)
}

struct ForwardCache {
    trunk: Activations,
    family: Option<Activations>,
    language: Activations,
    out: HausOutput,
}

impl HausModel {
    pub fn new(taxonomy: Taxonomy, arch: &Architecture, seed: u64) -> Result<Self> {
        check_eta(arch.eta)?;
        if arch.input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        if let Some(fh) = &arch.family_hidden {
            if arch.staircase && fh.len() > arch.language_hidden.len() {
                return Err(Error::InvalidArgument(format!(
                    "staircase profile needs the family branch ({} layers) no deeper than the language branch ({} layers)",
                    fh.len() + 1,
                    arch.language_hidden.len() + 1
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = alloc::vec![arch.input_dim];
        dims.extend(&arch.trunk_hidden);
        let trunk = if dims.len() >= 2 {
            Mlp::random(&dims, true, &mut rng)?
        } else {
            Mlp::identity(arch.input_dim)
        };
        let width = trunk.output_dim();
        let branch = |hidden: &[usize], out: usize, rng: &mut ChaCha8Rng| {
            let mut d = alloc::vec![width];
            d.extend(hidden);
            d.push(out);
            Mlp::random(&d, false, rng)
        };
        let family_branch = match &arch.family_hidden {
            Some(h) => Some(branch(h, taxonomy.n_families(), &mut rng)?),
            None => None,
        };
        let language_branch = branch(&arch.language_hidden, taxonomy.n_languages(), &mut rng)?;
        Self::from_parts(taxonomy, trunk, family_branch, language_branch, arch.coupling, arch.eta)
    }

    /// Assembles a model from existing networks, checking every dimension.
    pub fn from_parts(
        taxonomy: Taxonomy,
        trunk: Mlp,
        family_branch: Option<Mlp>,
        language_branch: Mlp,
        coupling: Coupling,
        eta: f64,
    ) -> Result<Self> {
        check_eta(eta)?;
        let width = trunk.output_dim();
        if language_branch.input_dim() != width {
            return Err(Error::DimensionMismatch {
                context: "language branch input",
                expected: width,
                got: language_branch.input_dim(),
            });
        }
        if language_branch.output_dim() != taxonomy.n_languages() {
            return Err(Error::DimensionMismatch {
                context: "language branch output",
                expected: taxonomy.n_languages(),
                got: language_branch.output_dim(),
            });
        }
        match &family_branch {
            Some(f) => {
                if f.input_dim() != width {
                    return Err(Error::DimensionMismatch {
                        context: "family branch input",
                        expected: width,
                        got: f.input_dim(),
                    });
                }
                if f.output_dim() != taxonomy.n_families() {
                    return Err(Error::DimensionMismatch {
                        context: "family branch output",
                        expected: taxonomy.n_families(),
                        got: f.output_dim(),
                    });
                }
                if eta < 0.5 && eta > 0.0 {
                    log::warn!("eta = {eta} puts less weight on the family task than on languages");
                }
            }
            None => {
                if coupling == Coupling::Additive {
                    return Err(Error::InvalidArgument(
                        "additive coupling requires a family branch".into(),
                    ));
                }
                if eta != 0.0 {
                    return Err(Error::InvalidArgument(
                        "eta must be 0 without a family branch".into(),
                    ));
                }
            }
        }
        Ok(Self {
            taxonomy,
            trunk,
            family_branch,
            language_branch,
            coupling,
            eta,
        })
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn family_branch(&self) -> Option<&Mlp> {
        self.family_branch.as_ref()
    }

    pub fn language_branch(&self) -> &Mlp {
        &self.language_branch
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn set_eta(&mut self, eta: f64) -> Result<()> {
        check_eta(eta)?;
        if self.family_branch.is_none() && eta != 0.0 {
            return Err(Error::InvalidArgument("eta must be 0 without a family branch".into()));
        }
        self.eta = eta;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn n_params(&self) -> usize {
        self.trunk.n_params()
            + self.family_branch.as_ref().map_or(0, Mlp::n_params)
            + self.language_branch.n_params()
    }

    /// Flat parameters: trunk, family branch, language branch.
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        self.trunk.flatten_into(&mut v);
        if let Some(f) = &self.family_branch {
            f.flatten_into(&mut v);
        }
        self.language_branch.flatten_into(&mut v);
        v
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.n_params(),
                got: p.len(),
            });
        }
        let mut k = self.trunk.load_from(p)?;
        if let Some(f) = &mut self.family_branch {
            k += f.load_from(&p[k..])?;
        }
        self.language_branch.load_from(&p[k..])?;
        Ok(())
    }

    /// Layer-size signature used to check snapshots and checkpoints.
    pub fn shape(&self) -> Vec<Vec<usize>> {
        alloc::vec![
            self.trunk.dims(),
            self.family_branch.as_ref().map_or_else(Vec::new, Mlp::dims),
            self.language_branch.dims(),
        ]
    }

    fn forward_cached(&self, x: &DMatrix<f64>) -> Result<ForwardCache> {
        let trunk = self.trunk.forward(x)?;
        let h = &trunk.output;
        let language = self.language_branch.forward(h)?;
        let family = match &self.family_branch {
            Some(f) => Some(f.forward(h)?),
            None => None,
        };
        let combined = match (&family, self.coupling) {
            (Some(f), Coupling::Additive) => {
                combine_rows(&language.output, &f.output, self.taxonomy.family_map())
            }
            _ => language.output.clone(),
        };
        let out = HausOutput {
            family_post: family.as_ref().map(|f| softmax_rows(&f.output)).transpose()?,
            family_log_post: family.as_ref().map(|f| log_softmax_rows(&f.output)).transpose()?,
            family_logits: family.as_ref().map(|f| f.output.clone()),
            language_post: softmax_rows(&combined)?,
            language_log_post: log_softmax_rows(&combined)?,
            language_logits: language.output.clone(),
            combined_logits: combined,
        };
        Ok(ForwardCache {
            trunk,
            family,
            language,
            out,
        })
    }

    /// Posteriors of both heads for a batch. Never reads family labels.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<HausOutput> {
        Ok(self.forward_cached(x)?.out)
    }

    pub fn joint_loss(&self, x: &DMatrix<f64>, t: &Targets<'_>) -> Result<f64> {
        joint_loss(&self.forward(x)?, &self.taxonomy, t, self.eta)
    }

    /// Loss and exact gradients. The family branch receives its own loss
    /// gradient plus, under additive coupling, the summed combined-logit
    /// gradients of its member languages.
    pub fn backward(&self, x: &DMatrix<f64>, t: &Targets<'_>) -> Result<(f64, HausGradients)> {
        let cache = self.forward_cached(x)?;
        let loss = joint_loss(&cache.out, &self.taxonomy, t, self.eta)?;
        let eta = self.eta;
        let n = x.nrows();
        let wl_total: f64 = t.w_language.iter().sum();
        let wf_total: f64 = t.w_family.iter().sum();

        let mut d_combined = cache.out.language_post.clone();
        for i in 0..n {
            d_combined[(i, t.language[i])] -= 1.0;
            let s = (1.0 - eta) * t.w_language[i] / wl_total;
            for v in d_combined.row_mut(i).iter_mut() {
                *v *= s;
            }
        }

        let d_family = match (&cache.out.family_post, &self.family_branch) {
            (Some(fp), Some(_)) => {
                let mut d = fp.clone();
                for i in 0..n {
                    d[(i, t.family[i])] -= 1.0;
                    let s = eta * t.w_family[i] / wf_total;
                    for v in d.row_mut(i).iter_mut() {
                        *v *= s;
                    }
                }
                if self.coupling == Coupling::Additive {
                    let map = self.taxonomy.family_map();
                    for i in 0..n {
                        for (l, &f) in map.iter().enumerate() {
                            d[(i, f)] += d_combined[(i, l)];
                        }
                    }
                }
                Some(d)
            }
            _ => None,
        };

        let (g_lang, mut d_hidden) = self.language_branch.backward(&cache.language, &d_combined)?;
        let g_fam = match (&self.family_branch, &cache.family, d_family) {
            (Some(branch), Some(act), Some(d)) => {
                let (g, dh) = branch.backward(act, &d)?;
                d_hidden += dh;
                Some(g)
            }
            _ => None,
        };
        let (g_trunk, _) = self.trunk.backward(&cache.trunk, &d_hidden)?;
        Ok((
            loss,
            HausGradients {
                trunk: g_trunk,
                family: g_fam,
                language: g_lang,
            },
        ))
    }

    /// `(language, family)` argmax per sample, ties to the lowest index.
    /// Without a family head the family is that of the predicted language.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<(usize, usize)>> {
        let out = self.forward(x)?;
        let map = self.taxonomy.family_map();
        Ok((0..out.n_samples())
            .map(|i| {
                let l = argmax(out.language_post.row(i).iter().copied());
                let f = match &out.family_post {
                    Some(fp) => argmax(fp.row(i).iter().copied()),
                    None => map[l],
                };
                (l, f)
            })
            .collect())
    }

    /// Last hidden representation on the language path (the input to the
    /// language output layer).
    pub fn embed(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let h = self.trunk.forward(x)?.output;
        let act = self.language_branch.forward(&h)?;
        Ok(act.inputs.last().cloned().unwrap_or(h))
    }
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
