mod common;

use std::collections::HashMap;

use ndarray::Array2;
use vrmf::objective::{grad_g, Samples};
use vrmf::solvers::{sample_minibatch, vr_direction};
use vrmf::subprob::SolveOptions;
use vrmf::Formulation;

use common::{random_data, random_dictionary, rng, spec_for};

fn subsets(n: usize, b: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, b: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == b {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, b, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, b, &mut Vec::new(), &mut out);
    out
}

#[test]
fn direction_averages_to_the_full_gradient() {
    let opts = SolveOptions::new(1e-13).max_iters(100_000);
    for (f, seed) in [(Formulation::Onmf, 1), (Formulation::Ornmf, 2), (Formulation::Ossl, 3)] {
        let mut g = rng(seed);
        let (n, b) = (6, 2);
        let spec = spec_for(f, 5, 3, n);
        let data = random_data(5, n, &mut g);
        let anchor = random_dictionary(&spec, &mut g);
        let w = random_dictionary(&spec, &mut g);
        let anchor_grad = grad_g(&data, Samples::All(n), anchor.view(), &spec, opts).unwrap();
        let full = grad_g(&data, Samples::All(n), w.view(), &spec, opts).unwrap();
        let all = subsets(n, b);
        let mut mean = Array2::<f64>::zeros((5, 3));
        for s in &all {
            mean += &vr_direction(&data, s, w.view(), anchor.view(), anchor_grad.view(), &spec, opts).unwrap();
        }
        mean /= all.len() as f64;
        let gap = (&mean - &full).iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-9, "{f:?}: bias {gap}");
    }
}

#[test]
fn anchor_terms_cancel_exactly() {
    let mut g = rng(4);
    let spec = spec_for(Formulation::Orpca, 6, 2, 10);
    let data = random_data(6, 10, &mut g);
    let w = random_dictionary(&spec, &mut g);
    let anchor_grad = Array2::from_shape_fn((6, 2), |(i, j)| 0.1 * i as f64 - 0.3 * j as f64 + 1e-7);
    let opts = SolveOptions::new(1e-10);
    let v = vr_direction(&data, &[1, 4, 7], w.view(), w.view(), anchor_grad.view(), &spec, opts).unwrap();
    let bits = |a: &Array2<f64>| a.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&v), bits(&anchor_grad));
}

#[test]
fn direction_rejects_empty_batches() {
    let mut g = rng(5);
    let spec = spec_for(Formulation::Odl, 4, 2, 5);
    let data = random_data(4, 5, &mut g);
    let w = random_dictionary(&spec, &mut g);
    let zero = Array2::zeros((4, 2));
    assert!(vr_direction(&data, &[], w.view(), w.view(), zero.view(), &spec, SolveOptions::new(1e-8)).is_err());
}

#[test]
fn minibatches_are_uniform_over_subsets() {
    let (n, b, draws) = (6, 3, 40_000);
    let mut g = rng(6);
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..draws {
        *counts.entry(sample_minibatch(&mut g, n, b).unwrap()).or_default() += 1;
    }
    let cells = subsets(n, b);
    assert_eq!(counts.len(), cells.len());
    let expected = draws as f64 / cells.len() as f64;
    let chi2: f64 = cells
        .iter()
        .map(|s| {
            let o = *counts.get(s).unwrap_or(&0) as f64;
            (o - expected).powi(2) / expected
        })
        .sum();
    // 19 degrees of freedom; 43.8 is the 0.999 quantile.
    assert!(chi2 < 43.8, "chi-square {chi2}");
}
