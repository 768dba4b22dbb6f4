use ndarray::{Array2, Zip};

use super::{check_dims, ensure_finite_iterate, init_dictionary, sample_minibatch, solver_rng, Recorder, RunOptions, SolverOutput};
use crate::config::SolverConfig;
use crate::error::{invalid, Result};
use crate::objective::{add_sample_gradient, bind, for_each_solved, Samples};
use crate::problem::ProblemSpec;
use crate::prox::prox_dictionary_in_place;
use crate::subprob::{tolerance_schedule, CodeContext, SolveOptions};
use crate::types::{Dataset, TraceSink};

/// Step-size schedule `gamma_t = beta / (b t + beta')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdParams {
    pub beta: f64,
    pub beta_prime: f64,
    pub iters: usize,
}

impl SgdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("{} must be > 0", self.beta)));
        }
        if !(self.beta_prime > 0.0 && self.beta_prime.is_finite()) {
            return Err(invalid("beta_prime", format!("{} must be > 0", self.beta_prime)));
        }
        Ok(())
    }
}

pub fn sgd_step_size(beta: f64, beta_prime: f64, b: usize, t: usize) -> f64 {
    beta / (b as f64 * t as f64 + beta_prime)
}

/// Proximal stochastic gradient baseline:
/// `W <- prox_{gamma_t psi + delta_C}(W - gamma_t V_t)` with `V_t` the plain
/// mini-batch gradient.
pub fn run_sgd<S: TraceSink>(
    data: &Dataset,
    spec: &ProblemSpec,
    config: &SolverConfig,
    params: &SgdParams,
    opts: &RunOptions,
    sink: S,
) -> Result<SolverOutput> {
    let n = data.n();
    config.validate(n)?;
    params.validate()?;
    check_dims(data, spec)?;
    let spec = bind(spec, n);
    let spec: &ProblemSpec = &spec;
    let b = config.batch_size;
    let cadence = opts.pass_cadence(n, b);

    let mut w = init_dictionary(spec, &opts.init, config.seed)?;
    let mut rng = solver_rng(config.seed);
    let mut rec = Recorder::new(data, spec, config.step_size, opts, sink);
    rec.record(0.0, w.view(), true)?;

    let mut buf = Array2::<f64>::zeros((spec.d, spec.k));
    let mut consumed: u64 = 0;
    for t in 0..params.iters {
        let batch = sample_minibatch(&mut rng, n, b)?;
        let solve = SolveOptions::new(tolerance_schedule(0, t, 1, config.tau, config.subprob_tol_floor))
            .max_iters(config.subprob_max_iters);
        buf.fill(0.0);
        {
            let ctx = CodeContext::new(w.view(), spec)?;
            let mut acc = buf.view_mut();
            let wv = w.view();
            for_each_solved(
                Samples::Subset(&batch),
                |i| ctx.solve(data.sample(i), solve),
                |i, code| {
                    add_sample_gradient(&mut acc, wv, data.sample(i), &code, 1.0);
                    Ok(())
                },
            )?;
        }
        let gamma = sgd_step_size(params.beta, params.beta_prime, b, t);
        let scale = gamma / b as f64;
        Zip::from(&mut buf).and(&w).for_each(|v, &wi| *v = wi - scale * *v);
        consumed += b as u64;
        let passes = consumed as f64 / n as f64;
        ensure_finite_iterate(buf.view(), "SGD", passes)?;
        prox_dictionary_in_place(spec, gamma, buf.view_mut())?;
        std::mem::swap(&mut w, &mut buf);
        let evaluate = (cadence > 0 && (t + 1) % cadence == 0) || t + 1 == params.iters;
        rec.record(passes, w.view(), evaluate)?;
    }
    let passes = consumed as f64 / n as f64;
    rec.finish(w, passes, true)
}
