//! Loss, objective, full gradient, gradient mapping and evaluation metrics.
//!
//! Every finite-sum quantity is accumulated by streaming over samples: codes
//! are solved in parallel in small waves and folded into the running sum in
//! sample-index order, so results do not depend on the thread count and no
//! per-sample code outlives its wave.

use std::borrow::Cow;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Zip};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{frob_sq, orthonormal_basis};
use crate::problem::ProblemSpec;
use crate::prox::prox_dictionary_in_place;
use crate::subprob::{CodeContext, CodeSolution, SolveOptions};
use crate::types::Dataset;

/// Relative rank tolerance used by [`expressed_variance`].
pub const EV_RANK_TOL: f64 = 1e-10;
/// Sup-norm slack when checking that a dictionary lies in `C`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// A set of sample indices.
#[derive(Debug, Clone, Copy)]
pub enum Samples<'a> {
    /// `0..n`.
    All(usize),
    Subset(&'a [usize]),
}

impl Samples<'_> {
    pub fn len(&self) -> usize {
        match self {
            Samples::All(n) => *n,
            Samples::Subset(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, p: usize) -> usize {
        match self {
            Samples::All(_) => p,
            Samples::Subset(s) => s[p],
        }
    }
}

fn wave_size() -> usize {
    4 * rayon::current_num_threads().max(1)
}

/// Solves `solve(i)` for every sample (in parallel, a wave at a time) and
/// feeds the results to `fold` in sample order.
pub(crate) fn for_each_solved<T, S, F>(samples: Samples<'_>, solve: S, mut fold: F) -> Result<()>
where
    T: Send,
    S: Fn(usize) -> Result<T> + Sync,
    F: FnMut(usize, T) -> Result<()>,
{
    let len = samples.len();
    if rayon::current_num_threads() <= 1 {
        for p in 0..len {
            let i = samples.get(p);
            fold(i, solve(i)?)?;
        }
        return Ok(());
    }
    let wave = wave_size();
    let mut buf: Vec<Result<T>> = Vec::with_capacity(wave);
    let mut start = 0;
    while start < len {
        let end = (start + wave).min(len);
        (start..end)
            .into_par_iter()
            .map(|p| solve(samples.get(p)))
            .collect_into_vec(&mut buf);
        for (p, res) in (start..end).zip(buf.drain(..)) {
            fold(samples.get(p), res?)?;
        }
        start = end;
    }
    Ok(())
}

/// `acc += sign * (W h + r - y) h^T`.
pub(crate) fn add_sample_gradient(
    acc: &mut ArrayViewMut2<f64>,
    w: ArrayView2<f64>,
    y: ArrayView1<f64>,
    code: &CodeSolution,
    sign: f64,
) {
    let mut e = w.dot(&code.h);
    Zip::from(&mut e)
        .and(&code.r)
        .and(&y)
        .for_each(|ei, &ri, &yi| *ei = sign * (*ei + ri - yi));
    Zip::from(acc.rows_mut())
        .and(&e)
        .for_each(|mut row, &ei| row.scaled_add(ei, &code.h));
}

/// The spec with its per-sample weights resolved for `n` samples, unless it
/// is already bound.
pub(crate) fn bind(spec: &ProblemSpec, n: usize) -> Cow<'_, ProblemSpec> {
    if spec.n_samples().is_some() {
        Cow::Borrowed(spec)
    } else {
        Cow::Owned(spec.bound_to(n))
    }
}

pub(crate) fn check_feasible(spec: &ProblemSpec, w: ArrayView2<f64>) -> Result<()> {
    if w.dim() != (spec.d, spec.k) {
        return Err(Error::Shape(format!(
            "dictionary is {:?}, spec expects ({}, {})",
            w.dim(),
            spec.d,
            spec.k
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dictionary"));
    }
    let scale = w.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let distance = spec.dict_constraint.distance(w);
    if distance > FEASIBILITY_TOL * scale {
        return Err(Error::Infeasible { distance });
    }
    Ok(())
}

fn check_data(data: &Dataset, spec: &ProblemSpec) -> Result<()> {
    if data.d() != spec.d {
        return Err(Error::Shape(format!(
            "dataset has {} features, spec expects {}",
            data.d(),
            spec.d
        )));
    }
    Ok(())
}

/// Loss of one sample: the minimal coding objective, with the code used.
pub fn eval_loss(
    y: ArrayView1<f64>,
    w: ArrayView2<f64>,
    spec: &ProblemSpec,
    opts: SolveOptions,
) -> Result<(f64, CodeSolution)> {
    let code = CodeContext::new(w, spec)?.solve(y, opts)?;
    Ok((code.objective, code))
}

/// `f(W) = (1/n) sum_i loss(y_i, W) + psi(W)`.
pub fn eval_objective(
    data: &Dataset,
    w: ArrayView2<f64>,
    spec: &ProblemSpec,
    opts: SolveOptions,
) -> Result<f64> {
    check_data(data, spec)?;
    check_feasible(spec, w)?;
    let spec = bind(spec, data.n());
    let ctx = CodeContext::new(w, &spec)?;
    let mut total = 0.0;
    for_each_solved(
        Samples::All(data.n()),
        |i| ctx.solve(data.sample(i), opts).map(|c| c.objective),
        |_, v| {
            total += v;
            Ok(())
        },
    )?;
    Ok(total / data.n() as f64 + spec.dict_penalty()?.value(w))
}

/// Average of `(W h*_j + r*_j - y_j) h*_j^T` over `samples`.
pub fn grad_g(
    data: &Dataset,
    samples: Samples<'_>,
    w: ArrayView2<f64>,
    spec: &ProblemSpec,
    opts: SolveOptions,
) -> Result<Array2<f64>> {
    let mut acc = Array2::<f64>::zeros((spec.d, spec.k));
    grad_g_into(data, samples, w, spec, opts, &mut acc)?;
    Ok(acc)
}

/// [`grad_g`] written into `out`.
pub fn grad_g_into(
    data: &Dataset,
    samples: Samples<'_>,
    w: ArrayView2<f64>,
    spec: &ProblemSpec,
    opts: SolveOptions,
    out: &mut Array2<f64>,
) -> Result<()> {
    check_data(data, spec)?;
    if samples.is_empty() {
        return Err(invalid("samples", "empty batch"));
    }
    if out.dim() != (spec.d, spec.k) {
        return Err(Error::Shape(format!("gradient buffer is {:?}", out.dim())));
    }
    let ctx = CodeContext::new(w, spec)?;
    out.fill(0.0);
    let mut view = out.view_mut();
    for_each_solved(
        samples,
        |i| ctx.solve(data.sample(i), opts),
        |i, code| {
            add_sample_gradient(&mut view, w, data.sample(i), &code, 1.0);
            Ok(())
        },
    )?;
    *out /= samples.len() as f64;
    Ok(())
}

/// `f(W)` and the full gradient `grad g(W)` from a single pass over the data.
pub fn objective_and_grad(
    data: &Dataset,
    w: ArrayView2<f64>,
    spec: &ProblemSpec,
    opts: SolveOptions,
) -> Result<(f64, Array2<f64>)> {
    check_data(data, spec)?;
    check_feasible(spec, w)?;
    let spec = bind(spec, data.n());
    let ctx = CodeContext::new(w, &spec)?;
    let mut acc = Array2::<f64>::zeros((spec.d, spec.k));
    let mut view = acc.view_mut();
    let mut total = 0.0;
    for_each_solved(
        Samples::All(data.n()),
        |i| ctx.solve(data.sample(i), opts),
        |i, code| {
            total += code.objective;
            add_sample_gradient(&mut view, w, data.sample(i), &code, 1.0);
            Ok(())
        },
    )?;
    let n = data.n() as f64;
    acc /= n;
    Ok((total / n + spec.dict_penalty()?.value(w), acc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub grad_map: Array2<f64>,
    pub norm_sq: f64,
    pub eta_used: f64,
}

/// `(1/eta) (W - prox_{eta psi + delta_C}(W - eta G))`. `spec` must be bound
/// when `psi` depends on the sample count.
pub fn grad_mapping(
    w: ArrayView2<f64>,
    g: ArrayView2<f64>,
    spec: &ProblemSpec,
    eta: f64,
) -> Result<StationarityReport> {
    if w.dim() != g.dim() {
        return Err(Error::Shape(format!("W is {:?} but G is {:?}", w.dim(), g.dim())));
    }
    if w.iter().chain(g.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient mapping input"));
    }
    let mut map = w.to_owned();
    map.scaled_add(-eta, &g);
    prox_dictionary_in_place(spec, eta, map.view_mut())?;
    Zip::from(&mut map).and(&w).for_each(|p, &wi| *p = (wi - *p) / eta);
    let norm_sq = frob_sq(map.view());
    Ok(StationarityReport {
        grad_map: map,
        norm_sq,
        eta_used: eta,
    })
}

/// Objective value and squared gradient-mapping norm at `w`.
pub fn evaluate_point(
    data: &Dataset,
    w: ArrayView2<f64>,
    spec: &ProblemSpec,
    eta: f64,
    opts: SolveOptions,
) -> Result<(f64, f64)> {
    let spec = bind(spec, data.n());
    let (f, g) = objective_and_grad(data, w, &spec, opts)?;
    let report = grad_mapping(w, g.view(), &spec, eta)?;
    Ok((f, report.norm_sq))
}

pub(crate) fn alpha_unchecked(n: usize, b: usize) -> f64 {
    (n - b) as f64 / (b as f64 * (n - 1) as f64)
}

/// Without-replacement variance factor `(n - b) / (b (n - 1))`.
pub fn alpha(n: usize, b: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid("n", format!("{n} must be >= 2")));
    }
    if b == 0 || b > n {
        return Err(invalid("b", format!("{b} not in 1..={n}")));
    }
    Ok(alpha_unchecked(n, b))
}

/// Expressed variance `||Q_est^T Q_true||_F^2 / k'`, the projector trace
/// `tr(P_est P_true) / k'`.
pub fn expressed_variance(w_est: ArrayView2<f64>, w_true: ArrayView2<f64>) -> Result<f64> {
    if w_est.nrows() != w_true.nrows() {
        return Err(Error::Shape(format!(
            "estimate has {} rows, truth has {}",
            w_est.nrows(),
            w_true.nrows()
        )));
    }
    if w_est.iter().chain(w_true.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("expressed variance input"));
    }
    let k_true = w_true.ncols();
    let q_true = orthonormal_basis(w_true, EV_RANK_TOL);
    if k_true == 0 || q_true.ncols() < k_true {
        return Err(Error::RankDeficient {
            rank: q_true.ncols(),
            cols: k_true,
        });
    }
    let q_est = orthonormal_basis(w_est, EV_RANK_TOL);
    let cross = q_est.t().dot(&q_true);
    Ok((frob_sq(cross.view()) / k_true as f64).clamp(0.0, 1.0))
}
