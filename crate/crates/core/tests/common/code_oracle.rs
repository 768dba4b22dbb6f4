//! Reference minimizer of the per-sample coding objective.
//!
//! Accelerated proximal gradient on the joint variable `(h, r)` with the
//! global Lipschitz constant `||W||_2^2 + 1` (computed by SVD), restarted
//! whenever the objective rises, from several starting points. The best
//! final objective wins. The proximal maps come from `vrmf::prox`, which the
//! prox oracle suite checks on its own.

#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrmf::prox::prox_composite_vec;
use vrmf::ProblemSpec;

use super::oracle::penalty_value;

pub struct OracleCode {
    pub h: Array1<f64>,
    pub r: Array1<f64>,
    pub objective: f64,
}

pub fn objective(y: ArrayView1<f64>, w: ArrayView2<f64>, h: ArrayView1<f64>, r: ArrayView1<f64>, spec: &ProblemSpec) -> f64 {
    let mut fit = 0.0;
    for i in 0..y.len() {
        let mut e = y[i] - r[i];
        for j in 0..h.len() {
            e -= w[[i, j]] * h[j];
        }
        fit += e * e;
    }
    0.5 * fit
        + penalty_value(&spec.coeff_reg, h.insert_axis(ndarray::Axis(1)))
        + penalty_value(&spec.outlier_reg, r.insert_axis(ndarray::Axis(1)))
}

fn top_singular_sq(w: ArrayView2<f64>) -> f64 {
    let m = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[[i, j]]);
    let s = m.singular_values();
    s.iter().copied().fold(0.0, f64::max).powi(2)
}

fn run_from(
    y: ArrayView1<f64>,
    w: ArrayView2<f64>,
    spec: &ProblemSpec,
    lip: f64,
    h0: Array1<f64>,
    r0: Array1<f64>,
    iters: usize,
) -> OracleCode {
    let step = 1.0 / lip;
    let robust = !matches!(spec.outlier_constraint, vrmf::prox::SetDescriptor::ZeroSet);
    let project = |h: &Array1<f64>, r: &Array1<f64>| {
        let h = prox_composite_vec(&spec.coeff_reg, &spec.coeff_constraint, step, h.view()).unwrap();
        let r = if robust {
            prox_composite_vec(&spec.outlier_reg, &spec.outlier_constraint, step, r.view()).unwrap()
        } else {
            Array1::zeros(r.len())
        };
        (h, r)
    };
    let (mut h, mut r) = project(&h0, &r0);
    let mut f = objective(y, w, h.view(), r.view(), spec);
    let (mut zh, mut zr) = (h.clone(), r.clone());
    let mut t = 1.0_f64;
    let mut stall = 0;
    for _ in 0..iters {
        // gradient of 1/2 ||y - W h - r||^2 at z
        let e = &y - &w.dot(&zh) - &zr;
        let gh = -w.t().dot(&e);
        let gr = -&e;
        let (nh, nr) = project(&(&zh - &(step * &gh)), &(&zr - &(step * &gr)));
        let nf = objective(y, w, nh.view(), nr.view(), spec);
        if nf > f {
            // restart momentum from the incumbent
            t = 1.0;
            zh.assign(&h);
            zr.assign(&r);
            stall += 1;
            if stall > 50 {
                break;
            }
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        zh = &nh + &(beta * (&nh - &h));
        zr = &nr + &(beta * (&nr - &r));
        let gain = f - nf;
        h = nh;
        r = nr;
        f = nf;
        t = t_next;
        if gain <= 1e-17 * f.abs().max(1.0) {
            stall += 1;
            if stall > 50 {
                break;
            }
        } else {
            stall = 0;
        }
    }
    OracleCode { h, r, objective: f }
}

/// Best of `restarts` accelerated runs (zeros plus random starts).
pub fn solve(y: ArrayView1<f64>, w: ArrayView2<f64>, spec: &ProblemSpec, restarts: usize, seed: u64) -> OracleCode {
    let (d, k) = w.dim();
    let lip = top_singular_sq(w) + 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<OracleCode> = None;
    for attempt in 0..restarts.max(1) {
        let (h0, r0) = if attempt == 0 {
            (Array1::zeros(k), Array1::zeros(d))
        } else {
            (
                Array1::from_shape_fn(k, |_| rng.random_range(-2.0..2.0)),
                Array1::from_shape_fn(d, |_| rng.random_range(-2.0..2.0)),
            )
        };
        let cand = run_from(y, w, spec, lip, h0, r0, 200_000);
        if best.as_ref().is_none_or(|b| cand.objective < b.objective) {
            best = Some(cand);
        }
    }
    best.unwrap()
}
