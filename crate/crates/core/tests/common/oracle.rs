//! Slow reference implementations used to check the library.
//!
//! Nothing here calls into `vrmf::prox` or `vrmf::subprob`; each routine
//! reaches its answer by a different route (scalar searches, Lagrangian
//! bisection, alternating projections, ADMM, restarted FISTA).

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use vrmf::prox::{PenaltyDescriptor, SetDescriptor};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Minimizer of a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut a = hi - GOLDEN * (hi - lo);
    let mut b = lo + GOLDEN * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - GOLDEN * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + GOLDEN * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Root of an increasing function on `[lo, hi]` by bisection.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// `argmin_x p(x) + ||x - v||^2 / (2 scale)`.
pub fn prox(p: &PenaltyDescriptor, scale: f64, v: ArrayView2<f64>) -> Array2<f64> {
    let mut out = v.to_owned();
    match p {
        PenaltyDescriptor::Zero => {}
        PenaltyDescriptor::L1 { weight } => {
            let w = *weight;
            out.mapv_inplace(|c| {
                let span = c.abs() + w * scale + 1.0;
                golden_min(|x| w * x.abs() + (x - c) * (x - c) / (2.0 * scale), -span, span)
            });
        }
        PenaltyDescriptor::SqL2 { weight } => {
            let w = *weight;
            out.mapv_inplace(|c| {
                let span = c.abs() + 1.0;
                golden_min(|x| 0.5 * w * x * x + (x - c) * (x - c) / (2.0 * scale), -span, span)
            });
        }
        PenaltyDescriptor::GroupL2 { groups, weights } => {
            for mut col in out.axis_iter_mut(Axis(1)) {
                for (g, &w) in groups.iter().zip(weights) {
                    let vg: Array1<f64> = g.iter().map(|&i| col[i]).collect();
                    let nv = norm(vg.view());
                    if nv == 0.0 {
                        continue;
                    }
                    // the minimizer is a nonnegative multiple of v_g
                    let rho = golden_min(|r| w * r + (r - nv) * (r - nv) / (2.0 * scale), 0.0, nv);
                    for (&i, &vi) in g.iter().zip(vg.iter()) {
                        col[i] = vi * rho / nv;
                    }
                }
            }
        }
        PenaltyDescriptor::MaxRowNormSq { weight } => {
            let norms: Vec<f64> = v.axis_iter(Axis(0)).map(norm).collect();
            let top = norms.iter().copied().fold(0.0, f64::max);
            // epigraph form: choose the common row-norm bound tau
            let cost = |tau: f64| {
                0.5 * weight * tau * tau
                    + norms.iter().map(|&n| (n - tau).max(0.0).powi(2)).sum::<f64>() / (2.0 * scale)
            };
            let tau = golden_min(cost, 0.0, top);
            for (mut row, &n) in out.axis_iter_mut(Axis(0)).zip(&norms) {
                if n > tau {
                    row *= tau / n;
                }
            }
        }
        PenaltyDescriptor::QuadraticForm { weight, matrix } => {
            let r = matrix.nrows();
            let a = DMatrix::from_fn(r, r, |i, j| {
                (if i == j { 1.0 } else { 0.0 }) + scale * weight * matrix[[i, j]]
            });
            let lu = a.lu();
            for mut col in out.axis_iter_mut(Axis(1)) {
                let b = DVector::from_iterator(r, col.iter().copied());
                let x = lu.solve(&b).expect("I + cL is nonsingular");
                for i in 0..r {
                    col[i] = x[i];
                }
            }
        }
    }
    out
}

/// Euclidean projection of one vector onto `{||x|| <= radius}` by Lagrangian
/// bisection on `x(mu) = v / (1 + mu)`.
fn ball(v: ArrayView1<f64>, radius: f64) -> Array1<f64> {
    let nv = norm(v);
    if nv <= radius {
        return v.to_owned();
    }
    let mu = bisect(|mu| radius - nv / (1.0 + mu), 0.0, nv / radius.max(1e-300));
    v.mapv(|x| x / (1.0 + mu))
}

/// Projection onto `{x >= 0} ∩ {||x|| <= 1}` by Dykstra's alternating projections.
fn nonneg_ball(v: ArrayView1<f64>) -> Array1<f64> {
    let mut x = v.to_owned();
    let mut p = Array1::<f64>::zeros(v.len());
    let mut q = Array1::<f64>::zeros(v.len());
    for _ in 0..10_000 {
        let y = (&x + &p).mapv(|a| a.max(0.0));
        p = &x + &p - &y;
        let next = ball((&y + &q).view(), 1.0);
        q = &y + &q - &next;
        let change = (&next - &x).iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        x = next;
        if change < 1e-16 {
            break;
        }
    }
    x
}

/// Projection onto the probability simplex by bisection on the shift `theta`
/// in `sum_i max(v_i - theta, 0) = 1`.
fn simplex(v: ArrayView1<f64>) -> Array1<f64> {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = hi - 1.0;
    let theta = bisect(|t| 1.0 - v.iter().map(|&a| (a - t).max(0.0)).sum::<f64>(), lo, hi);
    v.mapv(|a| (a - theta).max(0.0))
}

pub fn project(set: &SetDescriptor, v: ArrayView2<f64>) -> Array2<f64> {
    let mut out = v.to_owned();
    match *set {
        SetDescriptor::All => {}
        SetDescriptor::ZeroSet => out.fill(0.0),
        SetDescriptor::NonNeg => {
            out.mapv_inplace(|c| golden_min(|x| (x - c) * (x - c), 0.0, c.abs() + 1.0));
        }
        SetDescriptor::Box { lo, hi } => {
            out.mapv_inplace(|c| golden_min(|x| (x - c) * (x - c), lo, hi));
        }
        SetDescriptor::L2Ball { radius } => {
            let flat = Array1::from_iter(v.iter().copied());
            let p = ball(flat.view(), radius);
            for (o, x) in out.iter_mut().zip(p.iter()) {
                *o = *x;
            }
        }
        SetDescriptor::L2UnitColumns => {
            for mut col in out.axis_iter_mut(Axis(1)) {
                let p = ball(col.view(), 1.0);
                col.assign(&p);
            }
        }
        SetDescriptor::NonNegL2UnitColumns => {
            for mut col in out.axis_iter_mut(Axis(1)) {
                let p = nonneg_ball(col.view());
                col.assign(&p);
            }
        }
        SetDescriptor::L1SimplexColumns => {
            for mut col in out.axis_iter_mut(Axis(1)) {
                let p = simplex(col.view());
                col.assign(&p);
            }
        }
    }
    out
}

/// `argmin_x p(x) + delta_S(x) + ||x - v||^2 / (2 scale)` by ADMM on the
/// splitting `x = z`, `z in S`.
pub fn composite(p: &PenaltyDescriptor, set: &SetDescriptor, scale: f64, v: ArrayView2<f64>) -> Array2<f64> {
    // x-update: argmin p(x) + |x - v|^2/(2s) + (rho/2)|x - z + u|^2
    //         = prox_{p / (1/s + rho)}((v/s + rho (z - u)) / (1/s + rho))
    let rho = 1.0 / scale;
    let denom = 1.0 / scale + rho;
    let mut z = project(set, v);
    let mut u = Array2::<f64>::zeros(v.raw_dim());
    for _ in 0..20_000 {
        let target = (&v / scale + &((&z - &u) * rho)) / denom;
        let x = prox(p, 1.0 / denom, target.view());
        let z_next = project(set, (&x + &u).view());
        let dz = (&z_next - &z).iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        z = z_next;
        u = &u + &x - &z;
        let gap = (&x - &z).iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        if dz < 1e-14 && gap < 1e-14 {
            break;
        }
    }
    z
}

/// Value of `p` (independent of `PenaltyDescriptor::value`).
pub fn penalty_value(p: &PenaltyDescriptor, x: ArrayView2<f64>) -> f64 {
    match p {
        PenaltyDescriptor::Zero => 0.0,
        PenaltyDescriptor::L1 { weight } => weight * x.iter().map(|a| a.abs()).sum::<f64>(),
        PenaltyDescriptor::SqL2 { weight } => 0.5 * weight * x.iter().map(|a| a * a).sum::<f64>(),
        PenaltyDescriptor::GroupL2 { groups, weights } => {
            let mut total = 0.0;
            for col in x.axis_iter(Axis(1)) {
                for (g, w) in groups.iter().zip(weights) {
                    total += w * g.iter().map(|&i| col[i] * col[i]).sum::<f64>().sqrt();
                }
            }
            total
        }
        PenaltyDescriptor::MaxRowNormSq { weight } => {
            let m = x.axis_iter(Axis(0)).map(|r| r.dot(&r)).fold(0.0, f64::max);
            0.5 * weight * m
        }
        PenaltyDescriptor::QuadraticForm { weight, matrix } => {
            let mut total = 0.0;
            for col in x.axis_iter(Axis(1)) {
                total += col.dot(&matrix.dot(&col));
            }
            0.5 * weight * total
        }
    }
}
