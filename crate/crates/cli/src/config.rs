//! Flat `key = value` configuration.
//!
//! Values come from built-in defaults, then an optional config file, then
//! `--key=value` command-line overrides, each layer replacing the previous.
//! Unknown keys are rejected. Lists are comma-separated; an empty value is
//! an empty list.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use staircase_core::data::SynthSpec;
use staircase_core::haus::Coupling;
use staircase_core::metrics::DEFAULT_P_TARGETS;
use staircase_core::seeds::{sub_seed, Stream};
use staircase_core::{Architecture, PriorMode, TrainConfig, Weighting};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Multitask {
    /// Language head only.
    Single,
    /// Shared trunk, two heads of equal depth, no logit coupling.
    Hard,
    /// Staircase heads; coupling follows the `haus` switch.
    Haus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectSource {
    Raw,
    /// The input to the language output layer of a trained checkpoint.
    Hidden,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub train_data: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,

    pub n_families: usize,
    pub langs_per_family: usize,
    pub n_encodings: usize,
    pub dim: usize,
    pub family_spread: f64,
    pub language_spread: f64,
    pub encoding_shift: f64,
    pub noise_sd: f64,
    pub speakers_per_language: usize,
    pub speaker_spread: f64,
    pub channel_spread: f64,
    pub encoding_mix: Vec<f64>,
    pub train_per_language: usize,
    pub val_per_language: usize,
    pub eval_per_language: usize,

    pub trunk_hidden: Vec<usize>,
    pub family_hidden: Vec<usize>,
    pub language_hidden: Vec<usize>,
    pub multitask: Multitask,
    pub haus: bool,
    pub eta: f64,

    pub bce: bool,
    pub prior_mode: PriorMode,
    pub weight_min: f64,
    pub weight_max: f64,

    pub batch_size: usize,
    pub max_epochs: usize,
    pub decay: f64,
    pub gl_threshold: f64,
    pub rho: f64,
    pub epsilon: f64,

    pub p_targets: Vec<f64>,
    pub sweep_etas: Vec<f64>,
    pub project_source: ProjectSource,
    pub pca_dim: usize,

    pub suite_seeds: usize,
    pub suite_variants: Vec<String>,
    pub loso_repetitions: usize,
}

pub const VARIANTS: [&str; 5] = ["single", "hard", "no-haus", "no-bce", "haus"];

impl Default for Config {
    fn default() -> Self {
        let synth = SynthSpec::default();
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            train_data: None,
            val_data: None,
            eval_data: None,
            checkpoint: None,
            n_families: synth.n_families,
            langs_per_family: synth.langs_per_family,
            n_encodings: synth.n_encodings,
            dim: synth.dim,
            family_spread: synth.family_spread,
            language_spread: synth.language_spread,
            encoding_shift: synth.encoding_shift,
            noise_sd: synth.noise_sd,
            speakers_per_language: synth.speakers_per_language,
            speaker_spread: synth.speaker_spread,
            channel_spread: synth.channel_spread,
            encoding_mix: vec![0.85, 0.15],
            train_per_language: 140,
            val_per_language: 30,
            eval_per_language: 30,
            trunk_hidden: vec![64],
            family_hidden: vec![],
            language_hidden: vec![32],
            multitask: Multitask::Haus,
            haus: true,
            eta: staircase_core::haus::DEFAULT_ETA,
            bce: true,
            prior_mode: PriorMode::Global,
            weight_min: 0.1,
            weight_max: 8.0,
            batch_size: 64,
            max_epochs: 100,
            decay: 0.96,
            gl_threshold: 5.0,
            rho: 0.95,
            epsilon: 1e-6,
            p_targets: DEFAULT_P_TARGETS.to_vec(),
            sweep_etas: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            project_source: ProjectSource::Raw,
            pca_dim: 30,
            suite_seeds: 5,
            suite_variants: VARIANTS.iter().map(|s| s.to_string()).collect(),
            loso_repetitions: 3,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("invalid value `{v}` for `{key}`"))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_switch(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{key}` takes on|off, got `{v}`")),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn path_or(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl Config {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        let r: std::result::Result<(), String> = (|| {
            match key {
                "seed" => self.seed = parse(key, v)?,
                "out_dir" => self.out_dir = PathBuf::from(v),
                "train_data" => self.train_data = path(v),
                "val_data" => self.val_data = path(v),
                "eval_data" => self.eval_data = path(v),
                "checkpoint" => self.checkpoint = path(v),
                "n_families" => self.n_families = parse(key, v)?,
                "langs_per_family" => self.langs_per_family = parse(key, v)?,
                "n_encodings" => self.n_encodings = parse(key, v)?,
                "dim" => self.dim = parse(key, v)?,
                "family_spread" => self.family_spread = parse(key, v)?,
                "language_spread" => self.language_spread = parse(key, v)?,
                "encoding_shift" => self.encoding_shift = parse(key, v)?,
                "noise_sd" => self.noise_sd = parse(key, v)?,
                "speakers_per_language" => self.speakers_per_language = parse(key, v)?,
                "speaker_spread" => self.speaker_spread = parse(key, v)?,
                "channel_spread" => self.channel_spread = parse(key, v)?,
                "encoding_mix" => self.encoding_mix = parse_list(key, v)?,
                "train_per_language" => self.train_per_language = parse(key, v)?,
                "val_per_language" => self.val_per_language = parse(key, v)?,
                "eval_per_language" => self.eval_per_language = parse(key, v)?,
                "trunk_hidden" => self.trunk_hidden = parse_list(key, v)?,
                "family_hidden" => self.family_hidden = parse_list(key, v)?,
                "language_hidden" => self.language_hidden = parse_list(key, v)?,
                "multitask" => {
                    self.multitask = match v {
                        "single" => Multitask::Single,
                        "hard" => Multitask::Hard,
                        "haus" => Multitask::Haus,
                        _ => return Err(format!("`multitask` takes single|hard|haus, got `{v}`")),
                    }
                }
                "haus" => self.haus = parse_switch(key, v)?,
                "eta" => self.eta = parse(key, v)?,
                "bce" => self.bce = parse_switch(key, v)?,
                "prior_mode" => {
                    self.prior_mode = match v {
                        "global" => PriorMode::Global,
                        "minibatch" => PriorMode::MiniBatch,
                        _ => return Err(format!("`prior_mode` takes global|minibatch, got `{v}`")),
                    }
                }
                "weight_min" => self.weight_min = parse(key, v)?,
                "weight_max" => self.weight_max = parse(key, v)?,
                "batch_size" => self.batch_size = parse(key, v)?,
                "max_epochs" => self.max_epochs = parse(key, v)?,
                "decay" => self.decay = parse(key, v)?,
                "gl_threshold" => self.gl_threshold = parse(key, v)?,
                "rho" => self.rho = parse(key, v)?,
                "epsilon" => self.epsilon = parse(key, v)?,
                "p_targets" => self.p_targets = parse_list(key, v)?,
                "sweep_etas" => self.sweep_etas = parse_list(key, v)?,
                "project_source" => {
                    self.project_source = match v {
                        "raw" => ProjectSource::Raw,
                        "hidden" => ProjectSource::Hidden,
                        _ => return Err(format!("`project_source` takes raw|hidden, got `{v}`")),
                    }
                }
                "pca_dim" => self.pca_dim = parse(key, v)?,
                "suite_seeds" => self.suite_seeds = parse(key, v)?,
                "suite_variants" => self.suite_variants = parse_list(key, v)?,
                "loso_repetitions" => self.loso_repetitions = parse(key, v)?,
                _ => return Err(format!("unknown config key `{key}`")),
            }
            Ok(())
        })();
        r.map_err(CliError::Usage)
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("expected key = value, got `{line}`"),
            })?;
            self.set(k.trim(), v).map_err(|e| match e {
                CliError::Usage(msg) => CliError::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    /// Parses `--key=value` arguments.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, args: &[S]) -> Result<()> {
        for a in args {
            let a = a.as_ref();
            let body = a
                .strip_prefix("--")
                .ok_or_else(|| CliError::Usage(format!("expected --key=value, got `{a}`")))?;
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("expected --key=value, got `{a}`")))?;
            self.set(&k.replace('-', "_"), v)?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then `overrides`; validated.
    pub fn load<S: AsRef<str>>(file: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut c = Config::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            c.apply_text(&text, path)?;
        }
        c.apply_overrides(overrides)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.encoding_mix.len() != self.n_encodings {
            return bad(format!(
                "encoding_mix has {} entries for {} encodings",
                self.encoding_mix.len(),
                self.n_encodings
            ));
        }
        if self.encoding_mix.iter().any(|m| !(*m >= 0.0)) {
            return bad("encoding_mix entries must be >= 0".into());
        }
        if !(self.weight_min > 0.0 && self.weight_max >= self.weight_min) {
            return bad("weights need 0 < weight_min <= weight_max".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta {} outside [0, 1]", self.eta));
        }
        if self.p_targets.is_empty() || self.p_targets.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return bad("p_targets must be non-empty and in (0, 1]".into());
        }
        if self.sweep_etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return bad("sweep_etas must lie in [0, 1]".into());
        }
        if self.language_hidden.is_empty() && self.multitask == Multitask::Haus {
            return bad("the staircase profile needs at least one language hidden layer".into());
        }
        for v in &self.suite_variants {
            if !VARIANTS.contains(&v.as_str()) {
                return bad(format!("unknown variant `{v}` (known: {})", VARIANTS.join(", ")));
            }
        }
        if self.pca_dim == 0 {
            return bad("pca_dim must be positive".into());
        }
        self.train_config().validate()?;
        Ok(())
    }

    /// Effective configuration in the file syntax; loading it back gives the
    /// same config.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("train_data", path_or(&self.train_data));
        kv("val_data", path_or(&self.val_data));
        kv("eval_data", path_or(&self.eval_data));
        kv("checkpoint", path_or(&self.checkpoint));
        kv("n_families", self.n_families.to_string());
        kv("langs_per_family", self.langs_per_family.to_string());
        kv("n_encodings", self.n_encodings.to_string());
        kv("dim", self.dim.to_string());
        kv("family_spread", self.family_spread.to_string());
        kv("language_spread", self.language_spread.to_string());
        kv("encoding_shift", self.encoding_shift.to_string());
        kv("noise_sd", self.noise_sd.to_string());
        kv("speakers_per_language", self.speakers_per_language.to_string());
        kv("speaker_spread", self.speaker_spread.to_string());
        kv("channel_spread", self.channel_spread.to_string());
        kv("encoding_mix", join(&self.encoding_mix));
        kv("train_per_language", self.train_per_language.to_string());
        kv("val_per_language", self.val_per_language.to_string());
        kv("eval_per_language", self.eval_per_language.to_string());
        kv("trunk_hidden", join(&self.trunk_hidden));
        kv("family_hidden", join(&self.family_hidden));
        kv("language_hidden", join(&self.language_hidden));
        kv(
            "multitask",
            match self.multitask {
                Multitask::Single => "single",
                Multitask::Hard => "hard",
                Multitask::Haus => "haus",
            }
            .into(),
        );
        kv("haus", if self.haus { "on" } else { "off" }.into());
        kv("eta", self.eta.to_string());
        kv("bce", if self.bce { "on" } else { "off" }.into());
        kv(
            "prior_mode",
            match self.prior_mode {
                PriorMode::Global => "global",
                PriorMode::MiniBatch => "minibatch",
            }
            .into(),
        );
        kv("weight_min", self.weight_min.to_string());
        kv("weight_max", self.weight_max.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("decay", self.decay.to_string());
        kv("gl_threshold", self.gl_threshold.to_string());
        kv("rho", self.rho.to_string());
        kv("epsilon", self.epsilon.to_string());
        kv("p_targets", join(&self.p_targets));
        kv("sweep_etas", join(&self.sweep_etas));
        kv(
            "project_source",
            match self.project_source {
                ProjectSource::Raw => "raw",
                ProjectSource::Hidden => "hidden",
            }
            .into(),
        );
        kv("pca_dim", self.pca_dim.to_string());
        kv("suite_seeds", self.suite_seeds.to_string());
        kv("suite_variants", self.suite_variants.join(","));
        kv("loso_repetitions", self.loso_repetitions.to_string());
        s
    }

    pub fn train_path(&self) -> PathBuf {
        self.train_data.clone().unwrap_or_else(|| self.out_dir.join("train.txt"))
    }

    pub fn val_path(&self) -> PathBuf {
        self.val_data.clone().unwrap_or_else(|| self.out_dir.join("val.txt"))
    }

    pub fn eval_path(&self) -> PathBuf {
        self.eval_data.clone().unwrap_or_else(|| self.out_dir.join("eval.txt"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("model.ckpt"))
    }

    pub fn n_languages(&self) -> usize {
        self.n_families * self.langs_per_family
    }

    /// Per-class counts of one split.
    pub fn split_counts(&self, per_language: usize) -> Vec<usize> {
        SynthSpec::counts_from_mix(self.n_languages(), per_language, &self.encoding_mix)
    }

    /// The corpus holding train, validation and evaluation samples of every
    /// class, drawn once so all three splits share class means.
    pub fn synth_spec(&self) -> SynthSpec {
        let parts = [
            self.split_counts(self.train_per_language),
            self.split_counts(self.val_per_language),
            self.split_counts(self.eval_per_language),
        ];
        let counts = (0..parts[0].len()).map(|c| parts.iter().map(|p| p[c]).sum()).collect();
        SynthSpec {
            n_families: self.n_families,
            langs_per_family: self.langs_per_family,
            n_encodings: self.n_encodings,
            dim: self.dim,
            family_spread: self.family_spread,
            language_spread: self.language_spread,
            encoding_shift: self.encoding_shift,
            noise_sd: self.noise_sd,
            counts_per_class: counts,
            speakers_per_language: self.speakers_per_language,
            speaker_spread: self.speaker_spread,
            channel_spread: self.channel_spread,
            seed: sub_seed(self.seed, Stream::Data),
        }
    }

    pub fn architecture(&self, input_dim: usize) -> Architecture {
        let (family_hidden, coupling, eta, staircase) = match self.multitask {
            Multitask::Single => (None, Coupling::Independent, 0.0, false),
            Multitask::Hard => (
                Some(self.language_hidden.clone()),
                Coupling::Independent,
                self.eta,
                false,
            ),
            Multitask::Haus => (
                Some(self.family_hidden.clone()),
                if self.haus {
                    Coupling::Additive
                } else {
                    Coupling::Independent
                },
                self.eta,
                true,
            ),
        };
        Architecture {
            input_dim,
            trunk_hidden: self.trunk_hidden.clone(),
            family_hidden,
            language_hidden: self.language_hidden.clone(),
            coupling,
            eta,
            staircase,
        }
    }

    pub fn weighting(&self) -> Weighting {
        if self.bce {
            Weighting::Prior(self.prior_mode)
        } else {
            Weighting::Uniform
        }
    }

    pub fn init_seed(&self) -> u64 {
        sub_seed(self.seed, Stream::Init)
    }

    /// Training settings. η lives on the model built from
    /// [`Config::architecture`], so it is not overridden here.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            eta: None,
            weighting: self.weighting(),
            decay: self.decay,
            gl_threshold: self.gl_threshold,
            rho: self.rho,
            epsilon: self.epsilon,
            seed: sub_seed(self.seed, Stream::Shuffle),
        }
    }

    /// A copy configured as one of the named ablation variants.
    pub fn variant(&self, name: &str) -> Result<Config> {
        let mut c = self.clone();
        match name {
            "single" => {
                c.multitask = Multitask::Single;
                c.bce = false;
            }
            "hard" => {
                c.multitask = Multitask::Hard;
                c.bce = false;
            }
            "no-haus" => {
                c.multitask = Multitask::Haus;
                c.haus = false;
                c.bce = true;
            }
            "no-bce" => {
                c.multitask = Multitask::Haus;
                c.haus = true;
                c.bce = false;
            }
            "haus" => {
                c.multitask = Multitask::Haus;
                c.haus = true;
                c.bce = true;
            }
            _ => return Err(CliError::Usage(format!("unknown variant `{name}`"))),
        }
        Ok(c)
    }
}
