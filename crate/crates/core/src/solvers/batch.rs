use std::time::Instant;

use log::{debug, warn};
use ndarray::{Array2, Zip};

use super::{check_dims, init_dictionary, Init};
use crate::error::{invalid, Result};
use crate::prox::project_in_place;
use crate::objective::{add_sample_gradient, bind, check_feasible, for_each_solved, grad_mapping, Samples};
use crate::problem::ProblemSpec;
use crate::subprob::{CodeContext, CodeSolution, SolveOptions};
use crate::types::{Dataset, TraceRecord, TraceSink};

/// `f(W)` and `grad g(W)`, each code started from the previous iteration's.
fn warm_objective_and_grad(
    data: &Dataset,
    w: &Array2<f64>,
    spec: &ProblemSpec,
    solve: SolveOptions,
    codes: &mut Vec<Option<CodeSolution>>,
) -> Result<(f64, Array2<f64>)> {
    check_feasible(spec, w.view())?;
    let ctx = CodeContext::new(w.view(), spec)?;
    let n = data.n();
    let mut next: Vec<Option<CodeSolution>> = vec![None; n];
    let mut grad = Array2::<f64>::zeros(w.raw_dim());
    let mut view = grad.view_mut();
    let mut total = 0.0;
    let prev: &Vec<Option<CodeSolution>> = codes;
    for_each_solved(
        Samples::All(n),
        |i| match &prev[i] {
            Some(c) => ctx.solve_from(data.sample(i), c.h.view(), c.r.view(), solve),
            None => ctx.solve(data.sample(i), solve),
        },
        |i, code| {
            total += code.objective;
            add_sample_gradient(&mut view, w.view(), data.sample(i), &code, 1.0);
            next[i] = Some(code);
            Ok(())
        },
    )?;
    *codes = next;
    grad /= n as f64;
    Ok((total / n as f64 + spec.dict_penalty()?.value(w.view()), grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub w: Array2<f64>,
    pub objective: f64,
    pub grad_map_norm_sq: f64,
    /// Proximal steps taken.
    pub iters: usize,
    /// False when `max_iters` ran out; `w` is then the iterate with the
    /// smallest gradient mapping seen.
    pub converged: bool,
}

/// Settings of [`run_batch_reference`] beyond step, tolerance and budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub init: Init,
    pub seed: u64,
    /// Per-sample solve settings for every full gradient.
    pub solve: SolveOptions,
    /// Nesterov extrapolation with gradient-based restarts. Without it the
    /// loop is plain proximal gradient.
    pub momentum: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            init: Init::default(),
            seed: 0,
            solve: SolveOptions::new(1e-10).max_iters(5000),
            momentum: true,
        }
    }
}

/// Deterministic proximal gradient on the full objective, run until
/// `||Gamma(W)||^2 <= tol` at the point where the gradient was taken. Serves
/// as the stationary reference `W_hat`.
///
/// With `momentum` the gradient is taken at `P_C(U + beta (U - U_prev))`,
/// where `U` are the proximal steps; the extrapolation restarts whenever it
/// points against the last step. Every per-sample solve is warm-started from
/// that sample's code at the previous gradient point.
///
/// One record per gradient evaluation goes to `sink`; each counts as a full
/// data pass.
pub fn run_batch_reference<S: TraceSink>(
    data: &Dataset,
    spec: &ProblemSpec,
    eta: f64,
    tol: f64,
    max_iters: usize,
    opts: &BatchOptions,
    mut sink: S,
) -> Result<BatchOutput> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(invalid("eta", format!("{eta} must be > 0")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be > 0"));
    }
    check_dims(data, spec)?;
    let spec = bind(spec, data.n());
    let spec: &ProblemSpec = &spec;
    let mut z = init_dictionary(spec, &opts.init, opts.seed)?;
    let mut prev_step: Option<Array2<f64>> = None;
    let mut momentum = 1.0_f64;
    let mut best: Option<(f64, f64, Array2<f64>)> = None;
    let mut iters = 0;
    let mut codes = vec![None; data.n()];
    let start = Instant::now();
    loop {
        let (f, g) = warm_objective_and_grad(data, &z, spec, opts.solve, &mut codes)?;
        let report = grad_mapping(z.view(), g.view(), spec, eta)?;
        sink.record(TraceRecord {
            data_passes: (iters + 1) as f64,
            wall_time_s: start.elapsed().as_secs_f64(),
            objective: Some(f),
            grad_map_norm_sq: Some(report.norm_sq),
            ev: None,
        });
        debug!("batch iteration {iters}: f = {f}, |Gamma|^2 = {:e}", report.norm_sq);
        if report.norm_sq <= tol {
            return Ok(BatchOutput {
                w: z,
                objective: f,
                grad_map_norm_sq: report.norm_sq,
                iters,
                converged: true,
            });
        }
        if best.as_ref().is_none_or(|(_, gm, _)| report.norm_sq < *gm) {
            best = Some((f, report.norm_sq, z.clone()));
        }
        if iters == max_iters {
            let (objective, grad_map_norm_sq, w) = best.expect("at least one evaluation");
            warn!(
                "batch reference stopped after {iters} iterations with gradient mapping {grad_map_norm_sq:e} > {tol:e}"
            );
            return Ok(BatchOutput {
                w,
                objective,
                grad_map_norm_sq,
                iters,
                converged: false,
            });
        }
        // prox(Z - eta G) = Z - eta Gamma
        let mut step = z.clone();
        Zip::from(&mut step)
            .and(&report.grad_map)
            .for_each(|u, &gi| *u -= eta * gi);
        iters += 1;
        if !opts.momentum {
            z = step;
            continue;
        }
        let restart = match &prev_step {
            // <Z - U, U - U_prev> > 0: the extrapolation fights the step
            Some(prev) => {
                let mut dot = 0.0;
                Zip::from(&z).and(&step).and(prev).for_each(|&zi, &ui, &pi| dot += (zi - ui) * (ui - pi));
                dot > 0.0
            }
            None => true,
        };
        z.assign(&step);
        if restart {
            momentum = 1.0;
        } else if let Some(prev) = &prev_step {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            Zip::from(&mut z).and(&step).and(prev).for_each(|zi, &ui, &pi| *zi = ui + beta * (ui - pi));
            project_in_place(&spec.dict_constraint, z.view_mut());
            momentum = next;
        }
        prev_step = Some(step);
    }
}
