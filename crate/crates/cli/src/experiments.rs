//! Paired multi-seed comparisons, the backend table and the
//! leave-one-speaker-out protocol.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use staircase_core::backends::{fit_centroids, fit_lda_dataset, fit_wccn, mclr_build, Ridge};
use staircase_core::data::{gen_synthetic, loso_folds};
use staircase_core::metrics::{per_encoding_report, CostReport};
use staircase_core::optim::train;
use staircase_core::seeds::{sub_seed, Stream};
use staircase_core::{Dataset, WeightTable};

use crate::commands::{evaluate, fit, generate, print_table};
use crate::config::Config;
use crate::error::{CliError, Result};
use crate::format::{write_dataset, write_tsv};

/// `(set, subset)` column keys: every encoding then `avg`, for validation
/// and evaluation data.
pub fn columns(encodings: &[String]) -> Vec<String> {
    let mut cols = Vec::new();
    for set in ["val", "eval"] {
        for e in encodings.iter().map(String::as_str).chain(["avg"]) {
            cols.push(format!("{set}_{e}"));
        }
    }
    cols
}

/// C_primary per column, in `columns` order. Encodings without trials give
/// NaN.
fn cells(val: &CostReport, eval: &CostReport, n_encodings: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for r in [val, eval] {
        for e in 0..n_encodings {
            let c = r.per_encoding.iter().find(|(i, _)| *i == e).map(|(_, s)| s.c_primary);
            out.push(c.unwrap_or(f64::NAN));
        }
        out.push(r.pooled.c_primary);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub variant: String,
    /// C_primary (fraction, not x100) per column.
    pub cells: Vec<f64>,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub columns: Vec<String>,
    pub variants: Vec<String>,
    pub runs: Vec<RunResult>,
    /// Index of the least frequent encoding in the training data.
    pub minority_encoding: usize,
}

impl SuiteResult {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Per-seed values of one cell for one variant, in seed order.
    pub fn values(&self, variant: &str, column: usize) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| r.cells[column])
            .collect()
    }

    pub fn mean(&self, variant: &str, column: usize) -> f64 {
        mean_sd(&self.values(variant, column)).0
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn pm(v: &[f64]) -> String {
    let (m, s) = mean_sd(v);
    format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * s)
}

fn append_line(f: &mut File, path: &Path, fields: &[String]) -> Result<()> {
    writeln!(f, "{}", fields.join("\t")).map_err(|e| CliError::io(path, e))?;
    f.flush().map_err(|e| CliError::io(path, e))
}

fn minority(ds: &Dataset) -> usize {
    let mut counts = vec![0usize; ds.taxonomy().n_encodings()];
    for s in ds.samples() {
        counts[s.encoding] += 1;
    }
    (0..counts.len()).min_by_key(|&e| counts[e]).unwrap_or(0)
}

/// Runs every variant on `suite_seeds` corpora. Seed `k` uses master seed
/// `seed + k` for data, initialization and shuffling, shared by all
/// variants. Runs are appended to `suite_runs.tsv` as they finish; the
/// summary `suite.tsv` holds `mean ± sd` of C_primary x100.
pub fn run_suite(cfg: &Config) -> Result<SuiteResult> {
    if cfg.suite_seeds == 0 || cfg.suite_variants.is_empty() {
        return Err(CliError::Usage("suite needs at least one seed and one variant".into()));
    }
    let variant_cfgs = cfg
        .suite_variants
        .iter()
        .map(|v| cfg.variant(v).map(|c| (v.clone(), c)))
        .collect::<Result<Vec<_>>>()?;
    let dir = cfg.out_dir.join("suite");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let runs_path = cfg.out_dir.join("suite_runs.tsv");
    let mut runs_file = File::create(&runs_path).map_err(|e| CliError::io(&runs_path, e))?;

    let mut result = SuiteResult {
        columns: Vec::new(),
        variants: cfg.suite_variants.clone(),
        runs: Vec::new(),
        minority_encoding: 0,
    };
    for k in 0..cfg.suite_seeds as u64 {
        let seed = cfg.seed.wrapping_add(k);
        let mut data_cfg = cfg.clone();
        data_cfg.seed = seed;
        let (train_set, val_set, eval_set) = generate(&data_cfg)?;
        let seed_dir = dir.join(format!("seed-{k}"));
        for (name, ds) in [("train", &train_set), ("val", &val_set), ("eval", &eval_set)] {
            write_dataset(ds, &seed_dir.join(format!("{name}.txt")))?;
        }
        let encodings = train_set.taxonomy().encodings().to_vec();
        if k == 0 {
            result.columns = columns(&encodings);
            result.minority_encoding = minority(&train_set);
            let mut header = vec!["seed".to_string(), "variant".into(), "epochs".into()];
            header.extend(result.columns.iter().cloned());
            append_line(&mut runs_file, &runs_path, &header)?;
        }
        for (name, vc) in &variant_cfgs {
            let mut vc = vc.clone();
            vc.seed = seed;
            let (model, history) = fit(&vc, &train_set, &val_set)?;
            let v = evaluate(&vc, &model, &val_set)?;
            let e = evaluate(&vc, &model, &eval_set)?;
            let run = RunResult {
                seed,
                variant: name.clone(),
                cells: cells(&v, &e, encodings.len()),
                epochs: history.epochs.len(),
            };
            log::info!(
                "seed {seed} {name}: eval C_primary {:.2} after {} epochs",
                100.0 * e.pooled.c_primary,
                run.epochs
            );
            let mut line = vec![seed.to_string(), name.clone(), run.epochs.to_string()];
            line.extend(run.cells.iter().map(|c| format!("{:.4}", 100.0 * c)));
            append_line(&mut runs_file, &runs_path, &line)?;
            result.runs.push(run);
        }
    }

    let mut header = vec!["variant".to_string()];
    header.extend(result.columns.iter().cloned());
    let rows: Vec<Vec<String>> = result
        .variants
        .iter()
        .map(|v| {
            let mut row = vec![v.clone()];
            row.extend((0..result.columns.len()).map(|c| pm(&result.values(v, c))));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_tsv(&cfg.out_dir.join("suite.tsv"), &header, &rows)?;
    print_table(&header, &rows);
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosoRow {
    pub repetition: usize,
    pub val_speakers: Vec<String>,
    pub test_speakers: Vec<String>,
    /// Hard-decision Cavg on the held-out speaker.
    pub c_avg: f64,
    pub c_primary: f64,
}

/// Trains on all but two speakers per language, validates on one and tests
/// on the other, `loso_repetitions` times with fresh speakers.
pub fn run_loso(cfg: &Config) -> Result<Vec<LosoRow>> {
    let ds = gen_synthetic(&cfg.synth_spec())?;
    let folds = loso_folds(&ds, cfg.loso_repetitions, sub_seed(cfg.seed, Stream::Split))?;
    let names = ds.taxonomy().speakers().to_vec();
    let label = |ids: &[usize]| ids.iter().map(|&i| names[i].clone()).collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (r, fold) in folds.iter().enumerate() {
        let (model, _) = fit(cfg, &fold.train, &fold.val)?;
        let report = evaluate(cfg, &model, &fold.test)?;
        let row = LosoRow {
            repetition: r + 1,
            val_speakers: label(&fold.val_speakers),
            test_speakers: label(&fold.test_speakers),
            c_avg: report.pooled.c_avg_hard,
            c_primary: report.pooled.c_primary,
        };
        log::info!("repetition {}: Cavg {:.2}", r + 1, 100.0 * row.c_avg);
        rows.push(row);
    }
    let mut table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.repetition.to_string(),
                r.val_speakers.join(";"),
                r.test_speakers.join(";"),
                format!("{:.2}", 100.0 * r.c_avg),
                format!("{:.2}", 100.0 * r.c_primary),
            ]
        })
        .collect();
    let c_avg: Vec<f64> = rows.iter().map(|r| r.c_avg).collect();
    let c_primary: Vec<f64> = rows.iter().map(|r| r.c_primary).collect();
    table.push(vec![
        "mean".into(),
        String::new(),
        String::new(),
        pm(&c_avg),
        pm(&c_primary),
    ]);
    let header = ["repetition", "val_speakers", "test_speakers", "cavg", "c_primary"];
    write_tsv(&cfg.out_dir.join("loso.tsv"), &header, &table)?;
    print_table(&header, &table);
    Ok(rows)
}

/// Cosine scores mapped to `[0, 1]` so they can be thresholded like
/// posteriors; the map is monotone, so decisions keep their order.
fn cosine_report(cfg: &Config, train: &Dataset, ds: &Dataset) -> Result<CostReport> {
    let m = fit_centroids(train)?;
    let scores = ds
        .samples()
        .iter()
        .map(|s| m.scores(&s.features).map(|v| v.iter().map(|c| 0.5 * (1.0 + c)).collect()))
        .collect::<staircase_core::Result<Vec<Vec<f64>>>>()?;
    Ok(per_encoding_report(
        &scores,
        &ds.language_labels(),
        &ds.encoding_labels(),
        ds.taxonomy().n_encodings(),
        &cfg.p_targets,
    )?)
}

/// One row per backend: cosine scoring and logistic regression on
/// WCCN+LDA-projected inputs, then the single-task network and HAUs on raw
/// inputs.
pub fn run_backends(cfg: &Config) -> Result<Vec<(String, Vec<f64>)>> {
    let (train_set, val_set, eval_set) = generate(cfg)?;
    let n_enc = train_set.taxonomy().n_encodings();
    let wccn = fit_wccn(&train_set, Ridge::default())?;
    let w_train = wccn.apply_dataset(&train_set)?;
    let out_dim = (train_set.taxonomy().n_languages() - 1).min(train_set.dim());
    let lda = fit_lda_dataset(&w_train, out_dim, Ridge::default())?;
    let project = |ds: &Dataset| -> Result<Dataset> { Ok(lda.apply_dataset(&wccn.apply_dataset(ds)?)?) };
    let (p_train, p_val, p_eval) = (project(&train_set)?, project(&val_set)?, project(&eval_set)?);

    let mut rows = Vec::new();
    rows.push((
        "cosine".to_string(),
        cells(
            &cosine_report(cfg, &p_train, &p_val)?,
            &cosine_report(cfg, &p_train, &p_eval)?,
            n_enc,
        ),
    ));

    let mclr = mclr_build(p_train.taxonomy().clone(), p_train.dim(), cfg.init_seed())?;
    let table = WeightTable::uniform(p_train.taxonomy());
    let (mclr, _) = train(&mclr, &p_train, &p_val, &table, &cfg.train_config(), |_| {})?;
    rows.push((
        "mclr".to_string(),
        cells(&evaluate(cfg, &mclr, &p_val)?, &evaluate(cfg, &mclr, &p_eval)?, n_enc),
    ));

    for name in ["single", "haus"] {
        let vc = cfg.variant(name)?;
        let (model, _) = fit(&vc, &train_set, &val_set)?;
        rows.push((
            name.to_string(),
            cells(&evaluate(&vc, &model, &val_set)?, &evaluate(&vc, &model, &eval_set)?, n_enc),
        ));
    }

    let cols = columns(train_set.taxonomy().encodings());
    let mut header = vec!["backend"];
    header.extend(cols.iter().map(String::as_str));
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|(n, c)| {
            let mut r = vec![n.clone()];
            r.extend(c.iter().map(|v| format!("{:.2}", 100.0 * v)));
            r
        })
        .collect();
    write_tsv(&cfg.out_dir.join("backends.tsv"), &header, &table)?;
    print_table(&header, &table);
    Ok(rows)
}

/// Output paths written by each experiment, for reproducibility checks.
pub fn suite_outputs(cfg: &Config) -> Vec<PathBuf> {
    vec![cfg.out_dir.join("suite_runs.tsv"), cfg.out_dir.join("suite.tsv")]
}
