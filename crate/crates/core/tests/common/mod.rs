//! Test-only oracles, independent of the code paths they check.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use staircase_core::haus::{Architecture, Coupling, HausModel, Targets};
use staircase_core::Taxonomy;

/// Random taxonomy with `n_fam` families and `n_lang >= n_fam` languages,
/// languages assigned to families in shuffled order.
pub fn random_taxonomy(rng: &mut ChaCha8Rng, n_fam: usize, n_lang: usize) -> Taxonomy {
    let mut map: Vec<usize> = (0..n_fam).collect();
    while map.len() < n_lang {
        map.push(rng.random_range(0..n_fam));
    }
    // Fisher-Yates by hand keeps this independent of the library's shuffles.
    for i in (1..map.len()).rev() {
        let j = rng.random_range(0..=i);
        map.swap(i, j);
    }
    Taxonomy::new(
        (0..n_lang).map(|l| format!("l{l}")).collect(),
        (0..n_fam).map(|f| format!("f{f}")).collect(),
        vec!["e0".into(), "e1".into()],
        map,
        vec![],
    )
    .unwrap()
}

pub struct Problem {
    pub model: HausModel,
    pub x: DMatrix<f64>,
    pub lang: Vec<usize>,
    pub fam: Vec<usize>,
    pub w_fam: Vec<f64>,
    pub w_lang: Vec<f64>,
}

impl Problem {
    pub fn targets(&self) -> Targets<'_> {
        Targets {
            language: &self.lang,
            family: &self.fam,
            w_family: &self.w_fam,
            w_language: &self.w_lang,
        }
    }
}

/// Random model (up to 6 families x 14 languages, trunk up to 3 layers)
/// with a small random batch and positive weights.
pub fn random_problem(seed: u64, eta: f64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_fam = rng.random_range(1..=6);
    let n_lang = rng.random_range(n_fam.max(2)..=14);
    let tax = random_taxonomy(&mut rng, n_fam, n_lang);
    let input = rng.random_range(2..=5);
    let trunk_depth = rng.random_range(0..=3);
    let trunk_hidden: Vec<usize> = (0..trunk_depth).map(|_| rng.random_range(2..=6)).collect();
    let fam_depth = rng.random_range(0..=1);
    let lang_depth = rng.random_range(fam_depth..=2);
    let arch = Architecture {
        input_dim: input,
        trunk_hidden,
        family_hidden: Some((0..fam_depth).map(|_| rng.random_range(2..=5)).collect()),
        language_hidden: (0..lang_depth).map(|_| rng.random_range(2..=5)).collect(),
        coupling: Coupling::Additive,
        eta,
        staircase: true,
    };
    let model = HausModel::new(tax.clone(), &arch, rng.random()).unwrap();
    // non-zero biases so that no pre-activation sits on a kink by symmetry
    let mut model = model;
    let p: Vec<f64> = model
        .parameters()
        .iter()
        .map(|v| v + rng.random_range(-0.1..0.1))
        .collect();
    model.set_parameters(&p).unwrap();
    let n = rng.random_range(2..=5);
    let x = DMatrix::from_fn(n, input, |_, _| rng.random_range(-2.0..2.0));
    let lang: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_lang)).collect();
    let fam = lang.iter().map(|&l| tax.family_of(l).unwrap()).collect();
    let w_fam = (0..n).map(|_| rng.random_range(0.2..10.0)).collect();
    let w_lang = (0..n).map(|_| rng.random_range(0.2..10.0)).collect();
    Problem {
        model,
        x,
        lang,
        fam,
        w_fam,
        w_lang,
    }
}

/// Central finite differences of the joint loss with respect to every
/// parameter.
pub fn finite_difference_gradient(p: &Problem, h: f64) -> Vec<f64> {
    let base = p.model.parameters();
    let mut m = p.model.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + h;
        m.set_parameters(&params).unwrap();
        let up = m.joint_loss(&p.x, &p.targets()).unwrap();
        params[i] = base[i] - h;
        m.set_parameters(&params).unwrap();
        let down = m.joint_loss(&p.x, &p.targets()).unwrap();
        params[i] = base[i];
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Largest coordinate-wise relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Brute-force detection cost: walk every trial once per detector,
/// tallying costs with explicit per-trial decisions computed in the log
/// domain.
pub fn brute_force_cavg(scores: &[Vec<f64>], labels: &[usize], p_target: f64) -> f64 {
    let k = scores[0].len();
    let threshold = ((1.0 - p_target) / p_target).ln();
    let decide = |s: &Vec<f64>, l: usize| -> bool {
        let others: f64 = (0..k).filter(|&j| j != l).map(|j| s[j]).sum::<f64>() / (k - 1) as f64;
        if s[l] == 0.0 {
            return false;
        }
        if others == 0.0 {
            return true;
        }
        s[l].ln() - others.ln() > threshold
    };
    let mut trials = vec![0usize; k];
    let mut misses = vec![0usize; k];
    let mut fa = vec![vec![0usize; k]; k];
    for (t, s) in scores.iter().enumerate() {
        let y = labels[t];
        trials[y] += 1;
        for l in 0..k {
            let accepted = decide(s, l);
            if l == y {
                if !accepted {
                    misses[l] += 1;
                }
            } else if accepted {
                fa[l][y] += 1;
            }
        }
    }
    let mut total = 0.0;
    let mut n_targets = 0usize;
    for l in 0..k {
        if trials[l] == 0 {
            continue;
        }
        let p_miss = misses[l] as f64 / trials[l] as f64;
        let mut fa_sum = 0.0;
        let mut n_non = 0usize;
        for m in 0..k {
            if m != l && trials[m] > 0 {
                fa_sum += fa[l][m] as f64 / trials[m] as f64;
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
