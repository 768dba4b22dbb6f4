use ndarray::{Array1, Array2, Axis, Zip};

use super::{check_dims, ensure_finite_iterate, init_dictionary, sample_minibatch, solver_rng, Recorder, RunOptions, SolverOutput};
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::objective::{bind, for_each_solved, Samples};
use crate::problem::ProblemSpec;
use crate::prox::{project_in_place, PenaltyDescriptor, SetDescriptor};
use crate::subprob::{tolerance_schedule, CodeContext, SolveOptions};
use crate::types::{Dataset, TraceSink};

const SWEEP_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 10;

/// Sufficient statistics of the majorization-minimization baseline.
#[derive(Debug, Clone)]
pub struct SmmState {
    /// `sum h h^T` over every sample seen.
    pub a_stat: Array2<f64>,
    /// `sum (y - r) h^T` over every sample seen.
    pub b_stat: Array2<f64>,
    pub dict: Array2<f64>,
    pub step_index: usize,
    pub samples_seen: u64,
}

impl SmmState {
    pub fn new(dict: Array2<f64>) -> Self {
        let (d, k) = dict.dim();
        SmmState {
            a_stat: Array2::zeros((k, k)),
            b_stat: Array2::zeros((d, k)),
            dict,
            step_index: 0,
            samples_seen: 0,
        }
    }

    /// Minimizes the averaged surrogate
    /// `(1/N) [1/2 tr(W^T W A) - tr(W^T B)] + (mu/2) ||W||^2` over `C` by cyclic
    /// projected column updates. Columns with `A_jj = 0` are left unchanged.
    pub fn minimize_surrogate(&mut self, set: &SetDescriptor, ridge: f64) {
        let k = self.dict.ncols();
        let reg = self.samples_seen as f64 * ridge;
        let mut col = Array1::<f64>::zeros(self.dict.nrows());
        for _ in 0..MAX_SWEEPS {
            let mut change = 0.0_f64;
            for j in 0..k {
                let ajj = self.a_stat[[j, j]];
                if ajj <= 0.0 {
                    continue;
                }
                // u = B_j - W A_j + W_j A_jj
                let wa = self.dict.dot(&self.a_stat.column(j));
                let denom = ajj + reg;
                Zip::from(&mut col)
                    .and(&self.b_stat.column(j))
                    .and(&wa)
                    .and(&self.dict.column(j))
                    .for_each(|c, &bj, &waj, &wj| *c = (bj - waj + wj * ajj) / denom);
                project_in_place(set, col.view_mut().insert_axis(Axis(1)));
                let mut target = self.dict.column_mut(j);
                let diff = Zip::from(&target)
                    .and(&col)
                    .fold(0.0_f64, |acc, &a, &b| acc.max((a - b).abs()));
                change = change.max(diff);
                target.assign(&col);
            }
            if change < SWEEP_TOL {
                break;
            }
        }
    }
}

/// Ridge weight usable in the surrogate, or an error for other `psi`.
fn surrogate_ridge(spec: &ProblemSpec) -> Result<f64> {
    match spec.dict_penalty()? {
        PenaltyDescriptor::Zero => Ok(0.0),
        PenaltyDescriptor::SqL2 { weight } => Ok(weight),
        other => Err(Error::Unsupported(format!(
            "SMM surrogate for dictionary regularizer {other:?}"
        ))),
    }
}

/// Stochastic majorization-minimization baseline.
///
/// Runs `iters` mini-batch steps. Each step codes the batch at the current
/// dictionary, accumulates `A += h h^T` and `B += (y - r) h^T`, then
/// re-minimizes the quadratic surrogate over `C`.
pub fn run_smm<S: TraceSink>(
    data: &Dataset,
    spec: &ProblemSpec,
    config: &SolverConfig,
    iters: usize,
    opts: &RunOptions,
    sink: S,
) -> Result<SolverOutput> {
    let n = data.n();
    config.validate(n)?;
    check_dims(data, spec)?;
    let spec = bind(spec, n);
    let spec: &ProblemSpec = &spec;
    let ridge = surrogate_ridge(spec)?;
    let b = config.batch_size;
    let cadence = opts.pass_cadence(n, b);

    let mut state = SmmState::new(init_dictionary(spec, &opts.init, config.seed)?);
    let mut rng = solver_rng(config.seed);
    let mut rec = Recorder::new(data, spec, config.step_size, opts, sink);
    rec.record(0.0, state.dict.view(), true)?;

    let mut consumed: u64 = 0;
    for t in 0..iters {
        let batch = sample_minibatch(&mut rng, n, b)?;
        let solve = SolveOptions::new(tolerance_schedule(0, t, 1, config.tau, config.subprob_tol_floor))
            .max_iters(config.subprob_max_iters);
        {
            let ctx = CodeContext::new(state.dict.view(), spec)?;
            let (a_stat, b_stat) = (&mut state.a_stat, &mut state.b_stat);
            for_each_solved(
                Samples::Subset(&batch),
                |i| ctx.solve(data.sample(i), solve),
                |i, code| {
                    let h = &code.h;
                    Zip::from(a_stat.rows_mut())
                        .and(h)
                        .for_each(|mut row, &hi| row.scaled_add(hi, h));
                    let y = data.sample(i);
                    Zip::from(b_stat.rows_mut())
                        .and(&y)
                        .and(&code.r)
                        .for_each(|mut row, &yi, &ri| row.scaled_add(yi - ri, h));
                    Ok(())
                },
            )?;
        }
        state.samples_seen += b as u64;
        state.minimize_surrogate(&spec.dict_constraint, ridge);
        state.step_index = t + 1;
        consumed += b as u64;
        let passes = consumed as f64 / n as f64;
        ensure_finite_iterate(state.dict.view(), "SMM", passes)?;
        let evaluate = (cadence > 0 && (t + 1) % cadence == 0) || t + 1 == iters;
        rec.record(passes, state.dict.view(), evaluate)?;
    }
    let passes = consumed as f64 / n as f64;
    rec.finish(state.dict, passes, true)
}
