//! Labelled feature-vector datasets, split strategies and the synthetic
//! hierarchical corpus generator.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub language: usize,
    pub encoding: usize,
    pub speaker: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    taxonomy: Taxonomy,
    dim: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    /// Validates every sample against `dim` and the taxonomy.
    pub fn new(taxonomy: Taxonomy, dim: usize, samples: Vec<Sample>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        for s in &samples {
            validate_sample(&taxonomy, dim, s)?;
        }
        Ok(Self {
            taxonomy,
            dim,
            samples,
        })
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            taxonomy: self.taxonomy.clone(),
            dim: self.dim,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Keeps samples matching the predicate.
    pub fn filter(&self, mut keep: impl FnMut(&Sample) -> bool) -> Dataset {
        Dataset {
            taxonomy: self.taxonomy.clone(),
            dim: self.dim,
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    /// Row-per-sample feature matrix.
    pub fn features(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.samples.len(), self.dim, |i, j| self.samples[i].features[j])
    }

    pub fn language_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.language).collect()
    }

    pub fn family_labels(&self) -> Vec<usize> {
        let map = self.taxonomy.family_map();
        self.samples.iter().map(|s| map[s.language]).collect()
    }

    pub fn encoding_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.encoding).collect()
    }

    /// Replaces the features (same labels), e.g. after a projection.
    pub fn with_features(&self, features: &DMatrix<f64>) -> Result<Dataset> {
        if features.nrows() != self.samples.len() {
            return Err(Error::DimensionMismatch {
                context: "with_features rows",
                expected: self.samples.len(),
                got: features.nrows(),
            });
        }
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| Sample {
                features: features.row(i).iter().copied().collect(),
                ..s.clone()
            })
            .collect();
        Dataset::new(self.taxonomy.clone(), features.ncols(), samples)
    }
}

fn validate_sample(t: &Taxonomy, dim: usize, s: &Sample) -> Result<()> {
    if s.features.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "sample features",
            expected: dim,
            got: s.features.len(),
        });
    }
    if s.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample features"));
    }
    if s.language >= t.n_languages() {
        return Err(Error::IndexOutOfRange {
            what: "language",
            index: s.language,
            bound: t.n_languages(),
        });
    }
    if s.encoding >= t.n_encodings() {
        return Err(Error::IndexOutOfRange {
            what: "encoding",
            index: s.encoding,
            bound: t.n_encodings(),
        });
    }
    if let Some(sp) = s.speaker {
        if sp >= t.n_speakers() {
            return Err(Error::IndexOutOfRange {
                what: "speaker",
                index: sp,
                bound: t.n_speakers(),
            });
        }
    }
    Ok(())
}

/// Random (unstratified) split. The first part holds `round(fraction * N)`
/// samples; both parts keep the original sample order.
pub fn random_split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} outside [0, 1]"
        )));
    }
    let n = ds.len();
    let k = libm::round(fraction * n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut first = order[..k].to_vec();
    let mut second = order[k..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    Ok((ds.subset(&first), ds.subset(&second)))
}

/// One leave-one-speaker-out partition.
#[derive(Debug, Clone, PartialEq)]
pub struct LosoFold {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Held-out validation speaker per language.
    pub val_speakers: Vec<usize>,
    /// Held-out test speaker per language.
    pub test_speakers: Vec<usize>,
}

/// For each language one speaker goes to validation, a different one to
/// test, the rest to training.
pub fn loso_split(ds: &Dataset, seed: u64) -> Result<LosoFold> {
    let mut folds = loso_folds(ds, 1, seed)?;
    Ok(folds.remove(0))
}

/// `repetitions` leave-one-speaker-out folds. Speakers of each language are
/// shuffled once; repetition `r` holds out positions `2r` and `2r + 1`
/// (modulo the speaker count), so held-out speakers do not repeat across
/// repetitions while the language has at least `2 * repetitions` speakers.
pub fn loso_folds(ds: &Dataset, repetitions: usize, seed: u64) -> Result<Vec<LosoFold>> {
    let t = ds.taxonomy();
    let mut by_lang: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); t.n_languages()];
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, s) in ds.samples().iter().enumerate() {
        let sp = s.speaker.ok_or_else(|| {
            Error::InvalidArgument(format!("sample {i} has no speaker label"))
        })?;
        if let Some(&prev) = owner.get(&sp) {
            if prev != s.language {
                return Err(Error::InvalidArgument(format!(
                    "speaker {:?} appears under two languages",
                    t.speakers()[sp]
                )));
            }
        }
        owner.insert(sp, s.language);
        by_lang[s.language].insert(sp);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled: Vec<Vec<usize>> = Vec::with_capacity(by_lang.len());
    for (l, set) in by_lang.iter().enumerate() {
        if set.len() < 3 {
            return Err(Error::NotEnoughSpeakers {
                language: t.languages()[l].clone(),
                found: set.len(),
                required: 3,
            });
        }
        let mut v: Vec<usize> = set.iter().copied().collect();
        v.shuffle(&mut rng);
        shuffled.push(v);
    }
    let mut folds = Vec::with_capacity(repetitions);
    for r in 0..repetitions {
        let val_speakers: Vec<usize> = shuffled.iter().map(|v| v[(2 * r) % v.len()]).collect();
        let test_speakers: Vec<usize> =
            shuffled.iter().map(|v| v[(2 * r + 1) % v.len()]).collect();
        let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
        for (i, s) in ds.samples().iter().enumerate() {
            let sp = s.speaker.unwrap_or(usize::MAX);
            if val_speakers[s.language] == sp {
                va.push(i);
            } else if test_speakers[s.language] == sp {
                te.push(i);
            } else {
                tr.push(i);
            }
        }
        folds.push(LosoFold {
            train: ds.subset(&tr),
            val: ds.subset(&va),
            test: ds.subset(&te),
            val_speakers,
            test_speakers,
        });
    }
    Ok(folds)
}

/// Parameters of the synthetic hierarchical corpus.
///
/// Class `(language, encoding)` has index `language * n_encodings + encoding`
/// in `counts_per_class`. Languages of family `f` are `f * langs_per_family ..`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_families: usize,
    pub langs_per_family: usize,
    pub n_encodings: usize,
    pub dim: usize,
    pub family_spread: f64,
    pub language_spread: f64,
    pub encoding_shift: f64,
    pub noise_sd: f64,
    pub counts_per_class: Vec<usize>,
    /// 0 disables speaker labels.
    pub speakers_per_language: usize,
    pub speaker_spread: f64,
    /// Standard deviation of a per-(language, encoding) offset applied to
    /// every encoding but the first, which acts as the clean reference
    /// channel. The other channels move each language differently, so they
    /// cannot be handled by learning one global shift.
    pub channel_spread: f64,
    pub seed: u64,
}

/// The default corpus: 4 families of 3 languages, 200 samples per language
/// split 85/15 between two encodings, 8 speakers per language.
impl Default for SynthSpec {
    fn default() -> Self {
        let (n_families, langs_per_family) = (4, 3);
        Self {
            n_families,
            langs_per_family,
            n_encodings: 2,
            dim: 16,
            family_spread: 2.0,
            language_spread: 1.0,
            encoding_shift: 1.5,
            noise_sd: 2.0,
            counts_per_class: Self::counts_from_mix(n_families * langs_per_family, 200, &[0.85, 0.15]),
            speakers_per_language: 8,
            speaker_spread: 0.3,
            channel_spread: 4.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn n_languages(&self) -> usize {
        self.n_families * self.langs_per_family
    }

    /// Per-class counts from a per-language total and an encoding mixture
    /// (fractions, rounded; the last encoding takes the remainder).
    pub fn counts_from_mix(n_languages: usize, per_language: usize, mix: &[f64]) -> Vec<usize> {
        let mut counts = Vec::with_capacity(n_languages * mix.len());
        for _ in 0..n_languages {
            let mut left = per_language;
            for (k, &m) in mix.iter().enumerate() {
                let c = if k + 1 == mix.len() {
                    left
                } else {
                    (libm::round(m * per_language as f64) as usize).min(left)
                };
                left -= c;
                counts.push(c);
            }
        }
        counts
    }

    fn validate(&self) -> Result<()> {
        if self.n_families == 0 || self.langs_per_family == 0 || self.n_encodings == 0 {
            return Err(Error::InvalidArgument(
                "synthetic corpus needs at least one family, language and encoding".into(),
            ));
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("synthetic dim must be positive".into()));
        }
        for (name, v) in [
            ("family_spread", self.family_spread),
            ("language_spread", self.language_spread),
            ("encoding_shift", self.encoding_shift),
            ("channel_spread", self.channel_spread),
            ("noise_sd", self.noise_sd),
            ("speaker_spread", self.speaker_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0")));
            }
        }
        let expected = self.n_languages() * self.n_encodings;
        if self.counts_per_class.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "counts_per_class",
                expected,
                got: self.counts_per_class.len(),
            });
        }
        Ok(())
    }

    pub fn taxonomy(&self) -> Result<Taxonomy> {
        let families: Vec<String> = (0..self.n_families).map(|f| format!("f{f}")).collect();
        let mut languages = Vec::new();
        let mut map = Vec::new();
        for f in 0..self.n_families {
            for l in 0..self.langs_per_family {
                languages.push(format!("f{f}l{l}"));
                map.push(f);
            }
        }
        let encodings = (0..self.n_encodings).map(|e| format!("enc{e}")).collect();
        let mut speakers = Vec::new();
        for lang in &languages {
            for s in 0..self.speakers_per_language {
                speakers.push(format!("{lang}s{s}"));
            }
        }
        Taxonomy::new(languages, families, encodings, map, speakers)
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Draws the synthetic corpus: family centres, language offsets, one fixed
/// shift direction per encoding (shared by all languages), per-language
/// channel offsets for non-reference encodings, optional speaker offsets,
/// then isotropic Gaussian noise. Samples come out grouped by class
/// in class-index order; speakers are assigned round-robin within a class.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let taxonomy = spec.taxonomy()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let family_centres: Vec<Vec<f64>> = (0..spec.n_families)
        .map(|_| gaussian_vec(&mut rng, d, spec.family_spread))
        .collect();
    let language_means: Vec<Vec<f64>> = (0..spec.n_languages())
        .map(|l| {
            let off = gaussian_vec(&mut rng, d, spec.language_spread);
            let c = &family_centres[l / spec.langs_per_family];
            c.iter().zip(&off).map(|(a, b)| a + b).collect()
        })
        .collect();
    let encoding_shifts: Vec<Vec<f64>> = (0..spec.n_encodings)
        .map(|_| {
            let v = gaussian_vec(&mut rng, d, 1.0);
            let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
            v.iter()
                .map(|x| if norm > 0.0 { spec.encoding_shift * x / norm } else { 0.0 })
                .collect()
        })
        .collect();
    let n_spk = spec.speakers_per_language;
    let speaker_offsets: Vec<Vec<f64>> = (0..spec.n_languages() * n_spk)
        .map(|_| gaussian_vec(&mut rng, d, spec.speaker_spread))
        .collect();

    // Separate stream so the other draws do not depend on channel_spread.
    let mut channel_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    channel_rng.set_stream(1);
    let n_dist = spec.n_encodings - 1;
    let channel_offsets: Vec<Vec<f64>> = (0..spec.n_languages() * n_dist)
        .map(|_| gaussian_vec(&mut channel_rng, d, spec.channel_spread))
        .collect();

    let mut samples = Vec::with_capacity(spec.counts_per_class.iter().sum());
    for l in 0..spec.n_languages() {
        for e in 0..spec.n_encodings {
            let count = spec.counts_per_class[l * spec.n_encodings + e];
            for i in 0..count {
                let speaker = (n_spk > 0).then(|| l * n_spk + i % n_spk);
                let features = (0..d)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let spk = speaker.map_or(0.0, |s| speaker_offsets[s][j]);
                        let ch = if e == 0 { 0.0 } else { channel_offsets[l * n_dist + e - 1][j] };
                        language_means[l][j] + encoding_shifts[e][j] + ch + spk + spec.noise_sd * z
                    })
                    .collect();
                samples.push(Sample {
                    features,
                    language: l,
                    encoding: e,
                    speaker,
                });
            }
        }
    }
    Dataset::new(taxonomy, d, samples)
}

/// Splits every `(language, encoding)` class positionally: the first
/// `sizes[0]` samples of each class go to part 0, the next `sizes[1]` to
/// part 1, and so on. Classes shorter than the requested total fill the
/// earlier parts first.
pub fn partition_by_class(ds: &Dataset, sizes: &[usize]) -> Vec<Dataset> {
    let n_classes = ds.taxonomy().n_languages() * ds.taxonomy().n_encodings();
    let per_class: Vec<Vec<usize>> = sizes.iter().map(|&s| vec![s; n_classes]).collect();
    partition_by_class_counts(ds, &per_class)
}

/// Like [`partition_by_class`] with a size per part and class:
/// `counts[part][language * n_encodings + encoding]`. Samples beyond the
/// requested totals are dropped.
pub fn partition_by_class_counts(ds: &Dataset, counts: &[Vec<usize>]) -> Vec<Dataset> {
    let n_enc = ds.taxonomy().n_encodings();
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (i, s) in ds.samples().iter().enumerate() {
        let class = s.language * n_enc + s.encoding;
        let pos = seen.entry(class).or_insert(0);
        let mut acc = 0;
        for (p, sizes) in counts.iter().enumerate() {
            let sz = sizes.get(class).copied().unwrap_or(0);
            if *pos < acc + sz {
                parts[p].push(i);
                break;
            }
            acc += sz;
        }
        *pos += 1;
    }
    parts.iter().map(|idx| ds.subset(idx)).collect()
}
