mod common;

use common::{finite_difference_gradient, max_relative_error, random_problem};
use nalgebra::{DMatrix, DVector};
use staircase_core::haus::{Architecture, Coupling, HausModel};
use staircase_core::net::{init, softmax_rows, LinearLayer, Mlp};
use staircase_core::Taxonomy;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;
// Central differences carry ~eps*|J|/h ≈ 1e-11 of absolute rounding noise,
// so coordinates far below that cannot be compared relatively.
const FLOOR: f64 = 1e-4;

#[test]
fn random_models_match_finite_differences_for_all_etas() {
    for seed in 0..20 {
        for eta in [0.0, 0.3, 0.6, 1.0] {
            let p = random_problem(seed, eta);
            let (loss, g) = p.model.backward(&p.x, &p.targets()).unwrap();
            assert_eq!(loss, p.model.joint_loss(&p.x, &p.targets()).unwrap());
            let fd = finite_difference_gradient(&p, H);
            let err = max_relative_error(&g.flatten(), &fd, FLOOR);
            assert!(err < TOL, "seed {seed} eta {eta}: {err:e}");
        }
    }
}

fn toy_taxonomy() -> Taxonomy {
    Taxonomy::from_pairs(
        &[
            ("a0", "A"),
            ("a1", "A"),
            ("b0", "B"),
            ("b1", "B"),
            ("b2", "B"),
            ("c0", "C"),
            ("c1", "C"),
        ],
        &["e0", "e1"],
    )
    .unwrap()
}

fn toy_problem(eta: f64) -> common::Problem {
    let tax = toy_taxonomy();
    let arch = Architecture {
        eta,
        ..Architecture::staircase(4, vec![6], 5)
    };
    let model = HausModel::new(tax.clone(), &arch, 11).unwrap();
    let x = DMatrix::from_fn(5, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.4 - 0.8);
    let lang = vec![0, 3, 6, 2, 4];
    let fam = lang.iter().map(|&l| tax.family_of(l).unwrap()).collect();
    common::Problem {
        model,
        x,
        lang,
        fam,
        w_fam: vec![1.0, 2.0, 0.5, 3.0, 1.5],
        w_lang: vec![2.0, 0.1, 8.1, 1.0, 4.0],
    }
}

#[test]
fn toy_three_family_seven_language_model() {
    for eta in [0.0, 0.25, 0.6, 1.0] {
        let p = toy_problem(eta);
        let (_, g) = p.model.backward(&p.x, &p.targets()).unwrap();
        let fd = finite_difference_gradient(&p, H);
        assert!(max_relative_error(&g.flatten(), &fd, FLOOR) < TOL);
    }
}

#[test]
fn eta_one_leaves_language_output_layer_untouched() {
    let p = toy_problem(1.0);
    let (_, g) = p.model.backward(&p.x, &p.targets()).unwrap();
    let last = g.language.layers.last().unwrap();
    assert!(last.weights.iter().all(|&v| v == 0.0));
    assert!(last.bias.iter().all(|&v| v == 0.0));
    // The family head still learns.
    assert!(g.family.unwrap().flatten().iter().any(|&v| v != 0.0));
}

#[test]
fn eta_zero_family_gradient_is_the_coupling_path() {
    let p = toy_problem(0.0);
    let tax = p.model.taxonomy().clone();
    let (_, g) = p.model.backward(&p.x, &p.targets()).unwrap();

    // Combined-logit gradient of the weighted language loss, by hand.
    let out = p.model.forward(&p.x).unwrap();
    let post = softmax_rows(&out.combined_logits).unwrap();
    let wsum: f64 = p.w_lang.iter().sum();
    let n = p.x.nrows();
    let mut g_comb = DMatrix::zeros(n, tax.n_languages());
    for i in 0..n {
        for l in 0..tax.n_languages() {
            let onehot = if p.lang[i] == l { 1.0 } else { 0.0 };
            g_comb[(i, l)] = p.w_lang[i] / wsum * (post[(i, l)] - onehot);
        }
    }
    let mut g_fam_logits = DMatrix::zeros(n, tax.n_families());
    for i in 0..n {
        for l in 0..tax.n_languages() {
            g_fam_logits[(i, tax.family_of(l).unwrap())] += g_comb[(i, l)];
        }
    }
    let trunk_out = p.model.trunk().forward(&p.x).unwrap().output;
    let fam_in = p.model.family_branch().unwrap().forward(&trunk_out).unwrap();
    let last_input = fam_in.inputs.last().unwrap();
    let expected_w = g_fam_logits.transpose() * last_input;
    let fam_grad = g.family.as_ref().unwrap();
    let got_w = &fam_grad.layers.last().unwrap().weights;
    assert!((got_w - &expected_w).amax() < 1e-12);

    // ... and the same numbers from finite differences restricted to θ_F.
    let fd = finite_difference_gradient(&p, H);
    let trunk_n = p.model.trunk().n_params();
    let fam_n = p.model.family_branch().unwrap().n_params();
    let fam_fd = &fd[trunk_n..trunk_n + fam_n];
    assert!(max_relative_error(&fam_grad.flatten(), fam_fd, FLOOR) < TOL);
}

#[test]
fn independent_coupling_matches_finite_differences() {
    let tax = toy_taxonomy();
    let arch = Architecture {
        coupling: Coupling::Independent,
        eta: 0.4,
        ..Architecture::staircase(4, vec![6, 5], 5)
    };
    let mut p = toy_problem(0.4);
    p.model = HausModel::new(tax, &arch, 5).unwrap();
    // zero-initialised biases can sit exactly on a ReLU kink; move off it
    let jittered: Vec<f64> = p
        .model
        .parameters()
        .iter()
        .enumerate()
        .map(|(i, v)| v + 0.01 * ((i % 7) as f64 - 3.5))
        .collect();
    p.model.set_parameters(&jittered).unwrap();
    let (_, g) = p.model.backward(&p.x, &p.targets()).unwrap();
    let fd = finite_difference_gradient(&p, H);
    assert!(max_relative_error(&g.flatten(), &fd, FLOOR) < TOL);
}

#[test]
fn zero_output_gradient_gives_zero_gradients() {
    let mlp = init(&[3, 4, 2], 1).unwrap();
    let x = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.5, 0.2, 0.3, -0.7]);
    let act = mlp.forward(&x).unwrap();
    let (g, gx) = mlp.backward(&act, &DMatrix::zeros(2, 2)).unwrap();
    assert!(g.flatten().iter().all(|&v| v == 0.0));
    assert!(gx.iter().all(|&v| v == 0.0));
}

#[test]
fn single_layer_sum_of_outputs_gradient_rows_equal_input() {
    let layer = LinearLayer {
        weights: DMatrix::from_row_slice(3, 2, &[0.1, 0.2, -0.3, 0.4, 0.5, -0.6]),
        bias: DVector::from_vec(vec![0.0, 1.0, -1.0]),
    };
    let mlp = Mlp::from_layers(vec![layer], false).unwrap();
    let x = DMatrix::from_row_slice(1, 2, &[2.5, -1.5]);
    let act = mlp.forward(&x).unwrap();
    let (g, _) = mlp.backward(&act, &DMatrix::from_element(1, 3, 1.0)).unwrap();
    for r in 0..3 {
        assert_eq!(g.layers[0].weights[(r, 0)], 2.5);
        assert_eq!(g.layers[0].weights[(r, 1)], -1.5);
        assert_eq!(g.layers[0].bias[r], 1.0);
    }
}

#[test]
fn plain_mlp_matches_finite_differences_on_a_quadratic_loss() {
    let mlp = init(&[3, 5, 4, 2], 9).unwrap();
    let x = DMatrix::from_row_slice(2, 3, &[0.3, -1.2, 0.8, 1.1, 0.4, -0.2]);
    // loss = 0.5 * |y|^2  → output_grad = y
    let loss = |m: &Mlp| 0.5 * m.forward(&x).unwrap().output.norm_squared();
    let act = mlp.forward(&x).unwrap();
    let (g, _) = mlp.backward(&act, &act.output).unwrap();
    let base = mlp.parameters();
    let mut fd = Vec::new();
    let mut m = mlp.clone();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += H;
        m.load_from(&p).unwrap();
        let up = loss(&m);
        p[i] -= 2.0 * H;
        m.load_from(&p).unwrap();
        fd.push((up - loss(&m)) / (2.0 * H));
    }
    assert!(max_relative_error(&g.flatten(), &fd, FLOOR) < TOL);
}

#[test]
fn loss_is_a_convex_combination_in_eta() {
    let p = toy_problem(0.6);
    let t = p.targets();
    let at = |eta: f64| {
        let mut m = p.model.clone();
        m.set_eta(eta).unwrap();
        m.joint_loss(&p.x, &t).unwrap()
    };
    let (d_lang, d_fam) = (at(0.0), at(1.0));
    for eta in [0.1, 0.3, 0.6, 0.9] {
        let want = eta * d_fam + (1.0 - eta) * d_lang;
        assert!((at(eta) - want).abs() < 1e-12 * want.abs().max(1.0));
    }
}
