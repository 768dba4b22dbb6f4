use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_dims, ensure_finite_iterate, init_dictionary, sample_minibatch, solver_rng, Recorder, RunOptions, SolverOutput};
use crate::config::{FinalOption, SolverConfig};
use crate::error::{Error, Result};
use crate::objective::{bind, for_each_solved, grad_g_into, Samples};
use crate::problem::ProblemSpec;
use crate::prox::prox_dictionary_in_place;
use crate::subprob::{tolerance_schedule, CodeContext, CodeSolution, SolveOptions};
use crate::types::{Dataset, DictionaryState, TraceSink};

/// Loop state of the variance-reduced solver.
#[derive(Debug, Clone)]
pub struct VrState {
    pub dict: DictionaryState,
    pub rng: ChaCha8Rng,
    /// Option I reservoir: one inner iterate kept uniformly at random.
    pub candidate: Option<Array2<f64>>,
    pub visited: u64,
}

/// `acc += (W h + r - y) h^T - (W0 hb + rb - y) hb^T`, differenced per entry
/// so identical codes cancel exactly.
fn add_paired_gradient(
    acc: &mut Array2<f64>,
    w: ArrayView2<f64>,
    w0: ArrayView2<f64>,
    y: ndarray::ArrayView1<f64>,
    code: &CodeSolution,
    anchor: &CodeSolution,
) {
    let mut e = w.dot(&code.h);
    Zip::from(&mut e).and(&code.r).and(&y).for_each(|ei, &ri, &yi| *ei += ri - yi);
    let mut e0 = w0.dot(&anchor.h);
    Zip::from(&mut e0).and(&anchor.r).and(&y).for_each(|ei, &ri, &yi| *ei += ri - yi);
    for (i, mut row) in acc.rows_mut().into_iter().enumerate() {
        let (a, a0) = (e[i], e0[i]);
        Zip::from(&mut row)
            .and(&code.h)
            .and(&anchor.h)
            .for_each(|v, &hj, &h0j| *v += a * hj - a0 * h0j);
    }
}

fn direction_into(
    data: &Dataset,
    batch: &[usize],
    ctx: &CodeContext<'_>,
    ctx_anchor: &CodeContext<'_>,
    anchor_grad: ArrayView2<f64>,
    opts: SolveOptions,
    out: &mut Array2<f64>,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter {
            name: "batch",
            reason: "empty".into(),
        });
    }
    let (w, w0) = (ctx.dictionary(), ctx_anchor.dictionary());
    out.fill(0.0);
    for_each_solved(
        Samples::Subset(batch),
        |i| {
            let y = data.sample(i);
            Ok((ctx.solve(y, opts)?, ctx_anchor.solve(y, opts)?))
        },
        |i, (code, anchor)| {
            add_paired_gradient(out, w, w0, data.sample(i), &code, &anchor);
            Ok(())
        },
    )?;
    let b = batch.len() as f64;
    Zip::from(out).and(&anchor_grad).for_each(|v, &g| *v = *v / b + g);
    Ok(())
}

/// Variance-reduced direction
/// `V = (1/b) sum_j [(W h_j + r_j - y_j) h_j^T - (W0 hb_j + rb_j - y_j) hb_j^T] + G0`,
/// with codes at `w_t` and `anchor_w` solved to the same options.
pub fn vr_direction(
    data: &Dataset,
    batch: &[usize],
    w_t: ArrayView2<f64>,
    anchor_w: ArrayView2<f64>,
    anchor_grad: ArrayView2<f64>,
    spec: &ProblemSpec,
    opts: SolveOptions,
) -> Result<Array2<f64>> {
    if anchor_grad.dim() != (spec.d, spec.k) {
        return Err(Error::Shape(format!("anchor gradient is {:?}", anchor_grad.dim())));
    }
    let ctx = CodeContext::new(w_t, spec)?;
    let ctx_anchor = CodeContext::new(anchor_w, spec)?;
    let mut out = Array2::zeros((spec.d, spec.k));
    direction_into(data, batch, &ctx, &ctx_anchor, anchor_grad, opts, &mut out)?;
    Ok(out)
}

/// Variance-reduced stochastic proximal solver.
///
/// Every outer stage recomputes the full gradient at an anchor, then takes
/// `m` proximal steps along [`vr_direction`] with fresh mini-batches.
/// A record is emitted after every inner step; full evaluations happen at
/// the start, every `ceil(m/4)` inner steps (see [`RunOptions::eval_every`])
/// and at the end of every stage.
pub fn run_vr<S: TraceSink>(
    data: &Dataset,
    spec: &ProblemSpec,
    config: &SolverConfig,
    opts: &RunOptions,
    sink: S,
) -> Result<SolverOutput> {
    let n = data.n();
    config.validate(n)?;
    check_dims(data, spec)?;
    let spec = bind(spec, n);
    let spec: &ProblemSpec = &spec;
    let (m, b, eta) = (config.inner_iters, config.batch_size, config.step_size);
    let cadence = opts.cadence(m);

    let w = init_dictionary(spec, &opts.init, config.seed)?;
    let mut state = VrState {
        dict: DictionaryState::new(w),
        rng: solver_rng(config.seed),
        candidate: None,
        visited: 0,
    };
    let mut rec = Recorder::new(data, spec, eta, opts, sink);
    rec.record(0.0, state.dict.w.view(), true)?;

    let mut consumed: u64 = 0;
    let passes = |consumed: u64| consumed as f64 / n as f64;
    let mut buf = Array2::<f64>::zeros((spec.d, spec.k));
    for s in 0..config.outer_iters {
        let DictionaryState {
            w,
            anchor_w,
            anchor_grad,
            outer_index,
            inner_index,
        } = &mut state.dict;
        *outer_index = s;
        *inner_index = 0;
        anchor_w.assign(w);
        let anchor_opts = SolveOptions::new(tolerance_schedule(s, 0, m, config.tau, config.subprob_tol_floor))
            .max_iters(config.subprob_max_iters);
        grad_g_into(data, Samples::All(n), anchor_w.view(), spec, anchor_opts, anchor_grad)?;
        consumed += n as u64;
        let ctx_anchor = CodeContext::new(anchor_w.view(), spec)?;

        for t in 0..m {
            let batch = sample_minibatch(&mut state.rng, n, b)?;
            let step_opts = SolveOptions::new(tolerance_schedule(s, t, m, config.tau, config.subprob_tol_floor))
                .max_iters(config.subprob_max_iters);
            {
                let ctx = CodeContext::new(w.view(), spec)?;
                direction_into(data, &batch, &ctx, &ctx_anchor, anchor_grad.view(), step_opts, &mut buf)?;
            }
            Zip::from(&mut buf).and(&*w).for_each(|v, &wi| *v = wi - eta * *v);
            ensure_finite_iterate(buf.view(), "VR", passes(consumed))?;
            prox_dictionary_in_place(spec, eta, buf.view_mut())?;
            std::mem::swap(w, &mut buf);
            consumed += b as u64;
            *inner_index = t + 1;

            if config.final_option == FinalOption::OptionI {
                state.visited += 1;
                if state.rng.random_range(0..state.visited) == 0 {
                    match &mut state.candidate {
                        Some(c) => c.assign(w),
                        None => state.candidate = Some(w.clone()),
                    }
                }
            }
            let evaluate = (cadence > 0 && (t + 1) % cadence == 0) || t + 1 == m;
            rec.record(passes(consumed), w.view(), evaluate)?;
        }
    }

    let total = passes(consumed);
    match (config.final_option, state.candidate) {
        (FinalOption::OptionI, Some(c)) => rec.finish(c, total, false),
        _ => rec.finish(state.dict.w, total, true),
    }
}
