#![allow(dead_code)]

pub mod code_oracle;
pub mod oracle;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrmf::{make_spec, Dataset, Formulation, ProblemSpec, SpecParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

/// Path-graph Laplacian on `d` nodes.
pub fn path_laplacian(d: usize) -> Array2<f64> {
    let mut l = Array2::zeros((d, d));
    for i in 0..d.saturating_sub(1) {
        l[[i, i]] += 1.0;
        l[[i + 1, i + 1]] += 1.0;
        l[[i, i + 1]] -= 1.0;
        l[[i + 1, i]] -= 1.0;
    }
    l
}

/// A spec for `f` with moderate weights, bound to `n` samples.
pub fn spec_for(f: Formulation, d: usize, k: usize, n: usize) -> ProblemSpec {
    let params = match f {
        Formulation::Odl | Formulation::Onmf => SpecParams::new().with("lambda", 0.2),
        Formulation::Ossl => {
            let half = k / 2;
            let groups = vec![(0..half.max(1)).collect(), (half.max(1)..k).collect::<Vec<_>>()]
                .into_iter()
                .filter(|g: &Vec<usize>| !g.is_empty())
                .collect::<Vec<_>>();
            let weights = vec![0.3; groups.len()];
            SpecParams::new().with_groups(groups, weights)
        }
        Formulation::Ssodl => SpecParams::new()
            .with("lambda1", 0.5)
            .with("lambda2", 0.2)
            .with_laplacian(path_laplacian(d)),
        Formulation::Orpca => SpecParams::new().with("lambda1", 0.3).with("lambda2", 0.4),
        Formulation::Omrmd => SpecParams::new().with("lambda1", 0.3).with("lambda2", 0.4),
        Formulation::Ornmf => SpecParams::new().with("lambda", 0.4).with("M", 2.0).with("M_prime", 1.5),
    };
    make_spec(f, d, k, &params).unwrap().bound_to(n)
}

pub const ALL_FORMULATIONS: [Formulation; 7] = [
    Formulation::Odl,
    Formulation::Ossl,
    Formulation::Onmf,
    Formulation::Ssodl,
    Formulation::Orpca,
    Formulation::Omrmd,
    Formulation::Ornmf,
];

/// Random feasible dictionary for `spec`.
pub fn random_dictionary(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let w = uniform(rng, spec.d, spec.k, -1.0, 1.5);
    oracle::project(&spec.dict_constraint, w.view())
}

/// Random data with a few large entries so outlier terms are active.
pub fn random_data(d: usize, n: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let mut v = uniform(rng, d, n, -1.0, 2.0);
    for x in v.iter_mut() {
        if rng.random::<f64>() < 0.1 {
            *x += rng.random_range(-6.0..6.0);
        }
    }
    Dataset::new(v, "random").unwrap()
}
