//! Acceptance run: every criterion prints one PASS/FAIL line; the process
//! fails if any criterion does.
//!
//! `cargo test -p staircase --test acceptance`

use std::cell::RefCell;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use staircase::experiments::run_suite;
use staircase::Config;
use staircase_core::backends::{cosine_score, fit_lda, fit_pca, fit_wccn, Ridge};
use staircase_core::data::{gen_synthetic, SynthSpec};
use staircase_core::haus::{combine_logits, Architecture, HausModel};
use staircase_core::metrics::{c_primary, detection_cost};
use staircase_core::net::softmax;
use staircase_core::objective::{
    batch_priors, batch_weights, bce_loss, build_weight_table, estimate_priors,
    inverse_ratio_weights, rescale_weights, DEFAULT_BOUNDS,
};
use staircase_core::optim::{
    adadelta_step, checkpoint, rollback, train_with_validator, AdadeltaState, Validation,
};
use staircase_core::{PriorMode, Taxonomy, TrainConfig, WeightTable, Weighting};

#[path = "../../core/tests/common/mod.rs"]
mod common;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Ctx {
    tmp: tempfile::TempDir,
    suite_dir: Option<PathBuf>,
}

fn main() {
    let mut ctx = Ctx {
        tmp: tempfile::tempdir().expect("temp dir"),
        suite_dir: None,
    };
    let criteria: [(u8, &str, fn(&mut Ctx) -> Outcome); 9] = [
        (1, "gradient correctness", gradients),
        (2, "logit combination equivalence", combination),
        (3, "within-family ratio invariance", ratio_invariance),
        (4, "objective pipeline", objective),
        (5, "optimizer and early stopping", optimizer),
        (6, "backends", backends),
        (7, "metrics", metrics),
        (8, "end-to-end orderings on the synthetic corpus", orderings),
        (9, "reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut ctx)))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id} {tag}  {name}: {detail} [{secs:.1} s]");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    if t > limit {
        return Err(format!("{what} took {:.1} s, limit {} s", t.as_secs_f64(), limit.as_secs()));
    }
    Ok(())
}

fn gradients(_: &mut Ctx) -> Outcome {
    // Central differences carry ~1e-11 absolute noise, so relative errors use
    // max(|a|, |n|, 1e-4) as denominator.
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut largest = (0, 0, 0);
    for seed in 0..20 {
        for eta in [0.0, 0.3, 0.6, 1.0] {
            let p = common::random_problem(seed, eta);
            let (_, g) = p.model.backward(&p.x, &p.targets()).map_err(|e| e.to_string())?;
            let fd = common::finite_difference_gradient(&p, 1e-5);
            let err = common::max_relative_error(&g.flatten(), &fd, 1e-4);
            ensure!(err < 1e-6, "seed {seed} eta {eta}: relative error {err:e}");
            worst = worst.max(err);
            let t = p.model.taxonomy();
            largest.0 = largest.0.max(t.n_families());
            largest.1 = largest.1.max(t.n_languages());
            largest.2 = largest.2.max(p.model.trunk().depth());
        }
    }
    within(start, Duration::from_secs(30), "gradient check")?;
    Ok(format!(
        "80 models (up to {} families, {} languages, {} trunk layers), max relative error {worst:.1e}",
        largest.0, largest.1, largest.2
    ))
}

fn random_taxonomy(seed: u64) -> Taxonomy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_fam = rng.random_range(1..=6);
    let n_lang = rng.random_range(n_fam..=14);
    common::random_taxonomy(&mut rng, n_fam, n_lang)
}

/// One block per family (member logits plus the family logit), blocks
/// concatenated, then scattered back to language order.
fn grouped_concat(lang: &[f64], fam: &[f64], tax: &Taxonomy) -> Vec<f64> {
    let mut blocks = Vec::new();
    for f in 0..tax.n_families() {
        for l in 0..tax.n_languages() {
            if tax.family_of(l).unwrap() == f {
                blocks.push((l, lang[l] + fam[f]));
            }
        }
    }
    let mut out = vec![f64::NAN; lang.len()];
    for (l, v) in blocks {
        out[l] = v;
    }
    out
}

fn combination(_: &mut Ctx) -> Outcome {
    let start = Instant::now();
    for seed in 0..100u64 {
        let tax = random_taxonomy(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let lang: Vec<f64> = (0..tax.n_languages()).map(|_| rng.random_range(-20.0..20.0)).collect();
        let fam: Vec<f64> = (0..tax.n_families()).map(|_| rng.random_range(-20.0..20.0)).collect();
        let got = combine_logits(&lang, &fam, &tax).map_err(|e| e.to_string())?;
        ensure!(got == grouped_concat(&lang, &fam, &tax), "taxonomy {seed} differs");
    }
    within(start, Duration::from_secs(5), "combination check")?;
    Ok("100 taxonomies, exact equality".into())
}

fn ratio_invariance(_: &mut Ctx) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut check = |p: &[f64], q: &[f64], tax: &Taxonomy| -> Result<(), String> {
        for (_, members) in tax.family_blocks() {
            for &a in &members {
                for &b in &members {
                    let (r0, r1) = (p[a] / p[b], q[a] / q[b]);
                    let d = ((r0 - r1) / r0).abs();
                    worst = worst.max(d);
                    ensure!(d < 1e-10, "ratio {r0} became {r1}");
                }
            }
        }
        Ok(())
    };
    for seed in 0..200u64 {
        let tax = random_taxonomy(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
        let lang: Vec<f64> = (0..tax.n_languages()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fam: Vec<f64> = (0..tax.n_families()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let moved: Vec<f64> = fam.iter().map(|f| f + rng.random_range(-50.0..50.0)).collect();
        let p = softmax(&combine_logits(&lang, &fam, &tax).unwrap()).unwrap();
        let q = softmax(&combine_logits(&lang, &moved, &tax).unwrap()).unwrap();
        check(&p, &q, &tax)?;

        // the same through a model: move every family output bias
        let arch = Architecture::staircase(3, vec![5], 4);
        let model = HausModel::new(tax.clone(), &arch, seed).unwrap();
        let x = DMatrix::from_fn(4, 3, |_, _| rng.random_range(-2.0..2.0));
        let mut perturbed = model.clone();
        let mut params = perturbed.parameters();
        let end = model.trunk().n_params() + model.family_branch().unwrap().n_params();
        for i in end - tax.n_families()..end {
            params[i] += rng.random_range(-10.0..10.0);
        }
        perturbed.set_parameters(&params).unwrap();
        let p = model.forward(&x).unwrap().language_post;
        let q = perturbed.forward(&x).unwrap().language_post;
        for i in 0..x.nrows() {
            let pr: Vec<f64> = p.row(i).iter().copied().collect();
            let qr: Vec<f64> = q.row(i).iter().copied().collect();
            check(&pr, &qr, &tax)?;
        }
    }
    Ok(format!("200 logit vectors and 200 models, max relative change {worst:.1e}"))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn objective(_: &mut Ctx) -> Outcome {
    let labels: Vec<usize> = [(0, 10), (1, 20), (2, 40)]
        .iter()
        .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
        .collect();
    let priors = estimate_priors(&labels, 3).map_err(|e| e.to_string())?;
    ensure!(close(&priors, &[1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0], 1e-12), "priors {priors:?}");
    let w = inverse_ratio_weights(&priors).map_err(|e| e.to_string())?;
    ensure!(close(&w, &[4.0, 2.0, 1.0], 1e-12), "weights {w:?}");
    let r = rescale_weights(&w, 0.1, 8.0).map_err(|e| e.to_string())?;
    ensure!(close(&r, &[8.0, 0.1 + 7.9 / 3.0, 0.1], 1e-12), "rescaled {r:?}");

    let uniform: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let u = rescale_weights(&inverse_ratio_weights(&estimate_priors(&uniform, 4).unwrap()).unwrap(), 0.1, 8.0)
        .unwrap();
    ensure!(u == vec![1.0; 4], "uniform counts gave {u:?}");

    let probs: Vec<Vec<f64>> = vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.2, 0.6], vec![0.1, 0.8, 0.1], vec![0.3, 0.3, 0.4]];
    let y = [0, 2, 1, 1];
    let ce = -y.iter().zip(&probs).map(|(&c, p)| p[c].ln()).sum::<f64>() / 4.0;
    let bce = bce_loss(&probs, &y, &[1.0 / 3.0; 3], 3).map_err(|e| e.to_string())?;
    ensure!((bce - ce).abs() < 1e-12, "BCE {bce} vs CE {ce}");

    let ds = gen_synthetic(&SynthSpec::default()).map_err(|e| e.to_string())?;
    let global = estimate_priors(&ds.language_labels(), 12).unwrap();
    let batch = batch_priors(&ds.language_labels(), 12).unwrap();
    ensure!(close(&global, &batch, 1e-12), "mini-batch priors differ");
    let table = build_weight_table(&ds, DEFAULT_BOUNDS).unwrap();
    let (gf, gl) = table.example_weights(ds.taxonomy(), ds.samples());
    let (bf, bl) = batch_weights(PriorMode::MiniBatch, &table, ds.taxonomy(), ds.samples()).unwrap();
    ensure!(close(&gf, &bf, 1e-12) && close(&gl, &bl, 1e-12), "mini-batch weights differ");
    Ok("priors, weights, rescale, uniform, BCE = CE and full-batch priors all within 1e-12".into())
}

fn optimizer(_: &mut Ctx) -> Outcome {
    let g = [0.5, -2.0, 3e-3, 0.0];
    let p0 = [0.1, -0.2, 0.3, 0.4];
    let mut p = p0;
    let (rho, eps) = (0.95, 1e-6);
    let mut st = AdadeltaState::new(4, rho, eps);
    adadelta_step(&mut p, &g, &mut st).map_err(|e| e.to_string())?;
    for i in 0..4 {
        let e_g2 = (1.0 - rho) * g[i] * g[i];
        let dx = -(eps.sqrt() / (e_g2 + eps).sqrt()) * g[i];
        ensure!((p[i] - (p0[i] + dx)).abs() < 1e-12, "coordinate {i}: {} vs {}", p[i], p0[i] + dx);
    }

    let spec = SynthSpec {
        counts_per_class: SynthSpec::counts_from_mix(12, 20, &[0.5, 0.5]),
        ..SynthSpec::default()
    };
    let ds = gen_synthetic(&spec).map_err(|e| e.to_string())?;
    let model = HausModel::new(
        ds.taxonomy().clone(),
        &Architecture::staircase(ds.dim(), vec![8], 8),
        3,
    )
    .unwrap();
    let mut m = model.clone();
    let snap = checkpoint(&m);
    let junk: Vec<f64> = m.parameters().iter().map(|v| v * -3.0 + 1.0).collect();
    m.set_parameters(&junk).unwrap();
    rollback(&mut m, &snap).unwrap();
    let same = model.parameters().iter().zip(m.parameters()).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure!(same, "rollback is not bit-exact");

    // initial loss, then one per epoch; regressions at epochs 2 and 5, stop
    // at epoch 6 where GL = 100 (0.7 / 0.6 - 1) > 5
    let script = [2.0, 1.0, 1.01, 0.8, 0.6, 0.61, 0.7, 0.1];
    let seen = RefCell::new(Vec::new());
    let mut k = 0;
    let cfg = TrainConfig {
        batch_size: 16,
        max_epochs: 50,
        weighting: Weighting::Uniform,
        ..TrainConfig::default()
    };
    let (best, h) = train_with_validator(
        &model,
        &ds,
        &WeightTable::uniform(ds.taxonomy()),
        &cfg,
        |m| {
            seen.borrow_mut().push(m.parameters());
            k += 1;
            Ok(Validation::from(script[k - 1]))
        },
        |_| {},
    )
    .map_err(|e| e.to_string())?;
    ensure!(h.epochs.len() == 6 && h.stopped_early, "stopped after {} epochs", h.epochs.len());
    let regressions: Vec<usize> = h.epochs.iter().filter(|e| e.rollback).map(|e| e.epoch).collect();
    ensure!(regressions == [2, 5, 6], "regressions at {regressions:?}");
    let mut n = 0;
    for e in &h.epochs {
        n += usize::from(e.rollback);
        let want = 0.96f64.powi(n as i32);
        ensure!((e.scale - want).abs() <= 1e-15, "epoch {} scale {} vs {want}", e.epoch, e.scale);
    }
    ensure!(h.best_epoch == 4, "best epoch {}", h.best_epoch);
    let at_best = &seen.borrow()[4];
    let exact = at_best.iter().zip(best.parameters()).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure!(exact, "returned model is not the epoch-4 checkpoint");
    Ok("hand step within 1e-12, bit-exact rollback, scale 0.96^3, best checkpoint returned".into())
}

fn backends(_: &mut Ctx) -> Outcome {
    // WCCN: full-rank data with large within-class spread and ridge 1e-6
    let spec = SynthSpec {
        dim: 8,
        noise_sd: 3.0,
        speaker_spread: 0.0,
        channel_spread: 0.0,
        counts_per_class: SynthSpec::counts_from_mix(12, 120, &[0.5, 0.5]),
        seed: 21,
        ..SynthSpec::default()
    };
    let ds = gen_synthetic(&spec).map_err(|e| e.to_string())?;
    let t = fit_wccn(&ds, Ridge::Absolute(1e-6)).map_err(|e| e.to_string())?;
    let y = t.apply(&ds.features()).unwrap();
    let labels = ds.language_labels();
    let mut w = DMatrix::<f64>::zeros(8, 8);
    for c in 0..12 {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let n = rows.len() as f64;
        let mean = rows.iter().fold(nalgebra::RowDVector::zeros(8), |acc, &i| acc + y.row(i)) / n;
        for &i in &rows {
            let v = y.row(i) - &mean;
            w += v.transpose() * v / n;
        }
    }
    w /= 12.0;
    let wccn_err = (w - DMatrix::<f64>::identity(8, 8)).norm();
    ensure!(wccn_err < 1e-6, "WCCN Frobenius error {wccn_err:e}");

    // LDA: two isotropic Gaussians at ±1.5 on the first axis; noise drawn in
    // rotation-symmetric quadruples so the sample scatter is exactly
    // isotropic and the true direction is e1.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut rows = Vec::new();
    let mut lab = Vec::new();
    for (c, mu) in [-1.5, 1.5].into_iter().enumerate() {
        for _ in 0..250 {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            for (dx, dy) in [(a, b), (-a, -b), (-b, a), (b, -a)] {
                rows.extend([mu + dx, dy]);
                lab.push(c);
            }
        }
    }
    let x = DMatrix::from_row_slice(lab.len(), 2, &rows);
    let lda = fit_lda(&x, &lab, 2, 1, Ridge::default()).map_err(|e| e.to_string())?;
    let dir = lda.matrix.row(0);
    let angle = (dir[1].abs() / dir.norm()).asin();
    ensure!(angle < 1e-3, "LDA direction off by {angle:e} rad");

    let c1 = cosine_score(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap();
    let c2 = cosine_score(&[1.0, 0.0], &[0.0, 3.0]).unwrap();
    let c3 = cosine_score(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
    ensure!(c1 == 1.0 && c2 == 0.0 && c3 == 1.0 / 2f64.sqrt(), "cosine {c1} {c2} {c3}");

    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(2..12);
        let x = DMatrix::from_fn(50, d, |_, j| rng.random_range(-1.0..1.0) * (j + 1) as f64);
        let k = rng.random_range(1..=d);
        let p = fit_pca(&x, k).map_err(|e| e.to_string())?;
        let gram = &p.matrix * p.matrix.transpose();
        worst = worst.max((gram - DMatrix::<f64>::identity(k, k)).amax());
    }
    ensure!(worst < 1e-10, "PCA orthonormality error {worst:e}");
    Ok(format!(
        "WCCN error {wccn_err:.1e}, LDA angle {angle:.1e} rad, cosine exact, PCA error {worst:.1e}"
    ))
}

fn random_trials(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let k = rng.random_range(2..8);
    let n = rng.random_range(1..=200);
    // some runs leave languages without trials
    let used = rng.random_range(1..=k);
    let scores = (0..n)
        .map(|_| {
            let s: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let t: f64 = s.iter().sum();
            s.iter().map(|v| v / t).collect()
        })
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..used)).collect();
    (scores, labels)
}

fn metrics(_: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sets = 500;
    for i in 0..sets {
        let (s, y) = random_trials(&mut rng);
        for pt in [0.5, 0.1] {
            let got = detection_cost(&s, &y, pt).map_err(|e| e.to_string())?;
            let want = common::brute_force_cavg(&s, &y, pt);
            ensure!(got == want, "set {i} p_target {pt}: {got} vs oracle {want}");
        }
        // consistent relabelling of languages
        let k = s[0].len();
        let mut perm: Vec<usize> = (0..k).collect();
        for j in (1..k).rev() {
            perm.swap(j, rng.random_range(0..=j));
        }
        let ps: Vec<Vec<f64>> = s
            .iter()
            .map(|r| {
                let mut o = vec![0.0; k];
                for l in 0..k {
                    o[perm[l]] = r[l];
                }
                o
            })
            .collect();
        let py: Vec<usize> = y.iter().map(|&l| perm[l]).collect();
        let (a, b) = (c_primary(&s, &y).unwrap(), c_primary(&ps, &py).unwrap());
        ensure!((a - b).abs() < 1e-12, "set {i}: permutation changed {a} to {b}");

        let perfect: Vec<Vec<f64>> = y
            .iter()
            .map(|&l| (0..k).map(|j| if j == l { 1.0 } else { 0.0 }).collect())
            .collect();
        ensure!(c_primary(&perfect, &y).unwrap() == 0.0, "set {i}: perfect scores cost > 0");
    }
    Ok(format!("{sets} random trial sets: oracle equality, zero for perfect scores, permutation invariance"))
}

fn orderings(ctx: &mut Ctx) -> Outcome {
    let start = Instant::now();
    let dir = ctx.tmp.path().join("criterion8");
    let cfg = Config {
        out_dir: dir.clone(),
        ..Config::default()
    };
    let res = run_suite(&cfg).map_err(|e| e.to_string())?;
    ctx.suite_dir = Some(dir);
    within(start, Duration::from_secs(600), "suite")?;

    let avg = res.column("eval_avg").ok_or("no eval_avg column")?;
    let minority = &cfg_encoding_name(&res.columns, res.minority_encoding);
    let min_col = res.column(&format!("eval_{minority}")).ok_or("no minority column")?;
    let haus = res.mean("haus", avg);
    let single = res.mean("single", avg);
    let with_bce = res.values("haus", min_col);
    let without = res.values("no-bce", min_col);
    let wins = with_bce.iter().zip(&without).filter(|(a, b)| a < b).count();
    let detail = format!(
        "mean C_primary x100 HAUs+BCE {:.2} vs single-task CE {:.2}; BCE lowers {minority} cost in {wins}/{} paired runs",
        100.0 * haus,
        100.0 * single,
        with_bce.len()
    );
    ensure!(haus <= single, "(a) fails: {detail}");
    ensure!(wins >= 4, "(b) fails: {detail}");
    Ok(detail)
}

/// Encoding name from the `eval_<name>` columns, which list encodings in
/// index order.
fn cfg_encoding_name(columns: &[String], index: usize) -> String {
    columns
        .iter()
        .filter_map(|c| c.strip_prefix("eval_"))
        .filter(|c| *c != "avg")
        .nth(index)
        .unwrap_or_default()
        .to_string()
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_staircase"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(())
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let (fa, fb) = (files(a), files(b));
    ensure!(fa == fb, "file sets differ: {fa:?} vs {fb:?}");
    for f in &fa {
        ensure!(
            fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(),
            "{} differs between runs",
            f.display()
        );
    }
    Ok(fa.len())
}

fn reproducibility(ctx: &mut Ctx) -> Outcome {
    let commands: [&[&str]; 9] = [
        &["gen"],
        &["train"],
        &["eval"],
        &["weights"],
        &["sweep-eta"],
        &["project"],
        &["project", "--project-source=hidden", "--out-dir=OUT/hidden", "--train-data=OUT/train.txt", "--eval-data=OUT/eval.txt", "--checkpoint=OUT/model.ckpt"],
        &["loso"],
        &["backends"],
    ];
    let mut dirs = Vec::new();
    for run in ["a", "b"] {
        let out = ctx.tmp.path().join("repro").join(run);
        let out_s = out.display().to_string();
        for cmd in commands {
            let mut args: Vec<String> = cmd.iter().map(|a| a.replace("OUT", &out_s)).collect();
            if !args.iter().any(|a| a.starts_with("--out-dir")) {
                args.push(format!("--out-dir={out_s}"));
            }
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            run_cli(&refs)?;
        }
        dirs.push(out);
    }
    let n = same_tree(&dirs[0], &dirs[1])?;

    let suite = ctx.tmp.path().join("repro").join("suite");
    run_cli(&["suite", &format!("--out-dir={}", suite.display())])?;
    let reference = match &ctx.suite_dir {
        Some(d) => d.clone(),
        None => {
            let d = ctx.tmp.path().join("repro").join("suite2");
            run_cli(&["suite", &format!("--out-dir={}", d.display())])?;
            d
        }
    };
    let m = same_tree(&suite, &reference)?;
    Ok(format!(
        "{} commands plus suite, run twice: {} files bit-identical",
        commands.len(),
        n + m
    ))
}
