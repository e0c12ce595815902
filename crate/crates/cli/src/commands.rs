//! One function per subcommand. Each returns the files it wrote; all
//! output is a deterministic function of the configuration.

use std::path::PathBuf;

use staircase_core::backends::{apply_chain, fit_lda_dataset, fit_pca, Ridge};
use staircase_core::data::{gen_synthetic, partition_by_class_counts};
use staircase_core::metrics::{evaluate_model, CostReport, CostSummary};
use staircase_core::objective::{build_weight_table, estimate_priors};
use staircase_core::optim::train;
use staircase_core::{Dataset, HausModel, TrainHistory, WeightTable};

use crate::config::{Config, ProjectSource};
use crate::error::{CliError, Result};
use crate::format::{load_checkpoint, load_dataset, write_checkpoint, write_dataset, write_tsv};

/// Generates the synthetic corpus and writes train, validation and
/// evaluation files. The three splits are cut per class from one draw.
pub fn cmd_gen(cfg: &Config) -> Result<Vec<PathBuf>> {
    let (train, val, eval) = generate(cfg)?;
    let paths = [cfg.train_path(), cfg.val_path(), cfg.eval_path()];
    for (ds, p) in [&train, &val, &eval].into_iter().zip(&paths) {
        write_dataset(ds, p)?;
        log::info!("wrote {} samples to {}", ds.len(), p.display());
    }
    Ok(paths.to_vec())
}

pub fn generate(cfg: &Config) -> Result<(Dataset, Dataset, Dataset)> {
    let ds = gen_synthetic(&cfg.synth_spec())?;
    let counts = [
        cfg.split_counts(cfg.train_per_language),
        cfg.split_counts(cfg.val_per_language),
        cfg.split_counts(cfg.eval_per_language),
    ];
    let mut parts = partition_by_class_counts(&ds, &counts).into_iter();
    let mut next = || parts.next().expect("three parts");
    Ok((next(), next(), next()))
}

/// The weight table the configuration trains with: prior-derived when BCE is
/// on, all ones otherwise.
pub fn weight_table(cfg: &Config, train: &Dataset) -> Result<WeightTable> {
    if cfg.bce {
        Ok(build_weight_table(train, (cfg.weight_min, cfg.weight_max))?)
    } else {
        Ok(WeightTable::uniform(train.taxonomy()))
    }
}

fn check_same_taxonomy(a: &Dataset, b: &Dataset, what: &str) -> Result<()> {
    if !a.taxonomy().same_labels(b.taxonomy()) || a.dim() != b.dim() {
        return Err(CliError::Usage(format!(
            "{what} does not share the training set's taxonomy and dimension"
        )));
    }
    Ok(())
}

/// Builds the configured model and trains it.
pub fn fit(cfg: &Config, train_set: &Dataset, val_set: &Dataset) -> Result<(HausModel, TrainHistory)> {
    check_same_taxonomy(train_set, val_set, "validation set")?;
    let arch = cfg.architecture(train_set.dim());
    let model = HausModel::new(train_set.taxonomy().clone(), &arch, cfg.init_seed())?;
    let table = weight_table(cfg, train_set)?;
    let (model, history) = train(&model, train_set, val_set, &table, &cfg.train_config(), |r| {
        log::info!(
            "epoch {:>3}  train {:.5}  val {:.5}  gl {:.3}  scale {:.4}{}",
            r.epoch,
            r.train_loss,
            r.val_loss,
            r.gl,
            r.scale,
            if r.rollback { "  rollback" } else { "" }
        )
    })?;
    Ok((model, history))
}

fn history_rows(h: &TrainHistory) -> Vec<Vec<String>> {
    let mut rows = vec![vec![
        "0".into(),
        String::new(),
        format!("{}", h.initial_val_loss),
        String::new(),
        "0".into(),
        "1".into(),
        "0".into(),
    ]];
    for e in &h.epochs {
        rows.push(vec![
            e.epoch.to_string(),
            format!("{}", e.train_loss),
            format!("{}", e.val_loss),
            e.val_cost.map(|c| format!("{:.4}", 100.0 * c)).unwrap_or_default(),
            format!("{}", e.gl),
            format!("{}", e.scale),
            u8::from(e.rollback).to_string(),
        ]);
    }
    rows
}

pub const HISTORY_HEADER: [&str; 7] = [
    "epoch",
    "train_loss",
    "val_loss",
    "val_c_primary",
    "gl",
    "scale",
    "rollback",
];

pub fn cmd_train(cfg: &Config) -> Result<Vec<PathBuf>> {
    let train_set = load_dataset(&cfg.train_path())?;
    let val_set = load_dataset(&cfg.val_path())?;
    let (model, history) = fit(cfg, &train_set, &val_set)?;
    let ckpt = cfg.checkpoint_path();
    write_checkpoint(&model, &ckpt)?;
    let hist = cfg.out_dir.join("history.tsv");
    write_tsv(&hist, &HISTORY_HEADER, &history_rows(&history))?;
    log::info!(
        "best epoch {} (val loss {:.5}), {} rollbacks",
        history.best_epoch,
        history.best_val_loss,
        history.rollbacks()
    );
    Ok(vec![ckpt, hist])
}

/// Header of the evaluation report: one row per (set, subset).
pub fn report_header(p_targets: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = vec!["set".into(), "subset".into(), "trials".into(), "accuracy".into()];
    for p in p_targets {
        h.push(format!("cavg_{p}"));
    }
    h.push("c_primary".into());
    h.push("cavg_hard".into());
    h
}

fn summary_row(set: &str, subset: &str, s: &CostSummary) -> Vec<String> {
    let mut r = vec![
        set.to_string(),
        subset.to_string(),
        s.trials.to_string(),
        format!("{:.2}", 100.0 * s.accuracy),
    ];
    for (_, c) in &s.cavg_by_ptarget {
        r.push(format!("{:.2}", 100.0 * c));
    }
    r.push(format!("{:.2}", 100.0 * s.c_primary));
    r.push(format!("{:.2}", 100.0 * s.c_avg_hard));
    r
}

/// Report rows in the per-encoding layout: each encoding, then `avg` over
/// the pooled trials.
pub fn report_rows(set: &str, report: &CostReport, ds: &Dataset) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = report
        .per_encoding
        .iter()
        .map(|(e, s)| summary_row(set, &ds.taxonomy().encodings()[*e], s))
        .collect();
    rows.push(summary_row(set, "avg", &report.pooled));
    rows
}

pub fn evaluate(cfg: &Config, model: &HausModel, ds: &Dataset) -> Result<CostReport> {
    if !ds.taxonomy().same_labels(model.taxonomy()) || ds.dim() != model.input_dim() {
        return Err(CliError::Usage(
            "evaluation data does not match the checkpoint's taxonomy or dimension".into(),
        ));
    }
    Ok(evaluate_model(model, ds, &cfg.p_targets)?)
}

pub fn cmd_eval(cfg: &Config) -> Result<Vec<PathBuf>> {
    let model = load_checkpoint(&cfg.checkpoint_path())?;
    let mut rows = Vec::new();
    let mut confusion = None;
    for (name, path) in [("val", cfg.val_path()), ("eval", cfg.eval_path())] {
        let ds = load_dataset(&path)?;
        let report = evaluate(cfg, &model, &ds)?;
        rows.extend(report_rows(name, &report, &ds));
        if name == "eval" {
            confusion = Some((report.confusion, ds.taxonomy().languages().to_vec()));
        }
    }
    let header = report_header(&cfg.p_targets);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let report_path = cfg.out_dir.join("report.tsv");
    write_tsv(&report_path, &header, &rows)?;
    print_table(&header, &rows);

    let (matrix, names) = confusion.expect("eval set evaluated");
    let mut ch: Vec<&str> = vec!["true\\pred"];
    ch.extend(names.iter().map(String::as_str));
    let crow = matrix
        .iter()
        .zip(&names)
        .map(|(r, n)| {
            let mut row = vec![n.clone()];
            row.extend(r.iter().map(usize::to_string));
            row
        })
        .collect::<Vec<_>>();
    let conf_path = cfg.out_dir.join("confusion.tsv");
    write_tsv(&conf_path, &ch, &crow)?;
    Ok(vec![report_path, conf_path])
}

/// Prints rows as an aligned table on stdout.
pub fn print_table(header: &[&str], rows: &[Vec<String>]) {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut text = line(header.to_vec());
    text.push('\n');
    for r in rows {
        text.push_str(&line(r.iter().map(String::as_str).collect()));
        text.push('\n');
    }
    print_stdout(&text);
}

/// Writes to stdout, ignoring a closed pipe (`staircase eval | head`).
pub fn print_stdout(text: &str) {
    use std::io::Write as _;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

/// Trains one HAUs model per η (same data and initialization) and tabulates
/// C_primary on validation and evaluation data.
pub fn cmd_sweep_eta(cfg: &Config) -> Result<Vec<PathBuf>> {
    let train_set = load_dataset(&cfg.train_path())?;
    let val_set = load_dataset(&cfg.val_path())?;
    let eval_set = load_dataset(&cfg.eval_path())?;
    let rows = sweep_eta(cfg, &train_set, &val_set, &eval_set)?;
    let header = ["eta", "val_c_primary", "eval_c_primary"];
    let path = cfg.out_dir.join("sweep_eta.tsv");
    write_tsv(&path, &header, &rows)?;
    print_table(&header, &rows);
    Ok(vec![path])
}

pub fn sweep_eta(
    cfg: &Config,
    train_set: &Dataset,
    val_set: &Dataset,
    eval_set: &Dataset,
) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for &eta in &cfg.sweep_etas {
        let mut c = cfg.clone();
        c.eta = eta;
        c.multitask = crate::config::Multitask::Haus;
        let (model, _) = fit(&c, train_set, val_set)?;
        let v = evaluate(&c, &model, val_set)?;
        let e = evaluate(&c, &model, eval_set)?;
        log::info!("eta {eta}: eval C_primary {:.2}", 100.0 * e.pooled.c_primary);
        rows.push(vec![
            format!("{eta}"),
            format!("{:.2}", 100.0 * v.pooled.c_primary),
            format!("{:.2}", 100.0 * e.pooled.c_primary),
        ]);
    }
    Ok(rows)
}

/// PCA followed by a 2-D LDA on language labels, fitted on the training set
/// and applied to training and evaluation data. With `project_source =
/// hidden` the inputs are the checkpoint's language-branch embeddings.
pub fn cmd_project(cfg: &Config) -> Result<Vec<PathBuf>> {
    let train_set = load_dataset(&cfg.train_path())?;
    let eval_set = load_dataset(&cfg.eval_path())?;
    check_same_taxonomy(&train_set, &eval_set, "evaluation set")?;
    let (train_x, eval_x) = match cfg.project_source {
        ProjectSource::Raw => (train_set.clone(), eval_set.clone()),
        ProjectSource::Hidden => {
            let model = load_checkpoint(&cfg.checkpoint_path())?;
            let embed = |ds: &Dataset| -> Result<Dataset> {
                if ds.dim() != model.input_dim() {
                    return Err(CliError::Usage("data does not match the checkpoint".into()));
                }
                Ok(ds.with_features(&model.embed(&ds.features())?)?)
            };
            (embed(&train_set)?, embed(&eval_set)?)
        }
    };
    let rows = project(cfg, &train_x, &[("train", &train_x), ("eval", &eval_x)])?;
    let path = cfg.out_dir.join("projection.tsv");
    write_tsv(&path, &PROJECTION_HEADER, &rows)?;
    Ok(vec![path])
}

pub const PROJECTION_HEADER: [&str; 6] = ["set", "x", "y", "language", "family", "encoding"];

pub fn project(cfg: &Config, fit_on: &Dataset, sets: &[(&str, &Dataset)]) -> Result<Vec<Vec<String>>> {
    let pca_dim = cfg.pca_dim.min(fit_on.dim());
    let pca = fit_pca(&fit_on.features(), pca_dim)?;
    let reduced = fit_on.with_features(&pca.apply(&fit_on.features())?)?;
    let lda = fit_lda_dataset(&reduced, 2, Ridge::default())?;
    let chain = [pca, lda];
    let mut rows = Vec::new();
    for (name, ds) in sets {
        let y = apply_chain(&chain, &ds.features())?;
        let t = ds.taxonomy();
        for (i, s) in ds.samples().iter().enumerate() {
            rows.push(vec![
                name.to_string(),
                format!("{}", y[(i, 0)]),
                format!("{}", y[(i, 1)]),
                t.languages()[s.language].clone(),
                t.families()[t.family_map()[s.language]].clone(),
                t.encodings()[s.encoding].clone(),
            ]);
        }
    }
    Ok(rows)
}

/// Prior and rescaled weight of every class on the three axes.
pub fn cmd_weights(cfg: &Config) -> Result<Vec<PathBuf>> {
    let train_set = load_dataset(&cfg.train_path())?;
    let table = build_weight_table(&train_set, (cfg.weight_min, cfg.weight_max))?;
    let t = train_set.taxonomy();
    let axes: [(&str, Vec<usize>, &[String], &[f64]); 3] = [
        ("encoding", train_set.encoding_labels(), t.encodings(), &table.w_encoding),
        ("family", train_set.family_labels(), t.families(), &table.w_cluster),
        ("language", train_set.language_labels(), t.languages(), &table.w_language),
    ];
    let mut rows = Vec::new();
    for (axis, labels, names, weights) in axes {
        let priors = estimate_priors(&labels, names.len())?;
        for ((name, p), w) in names.iter().zip(priors).zip(weights) {
            rows.push(vec![axis.to_string(), name.clone(), format!("{p:.6}"), format!("{w:.6}")]);
        }
    }
    let header = ["axis", "class", "prior", "weight"];
    let path = cfg.out_dir.join("weights.tsv");
    write_tsv(&path, &header, &rows)?;
    print_table(&header, &rows);
    Ok(vec![path])
}
