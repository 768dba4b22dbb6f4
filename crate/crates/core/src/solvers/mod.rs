//! Stochastic solvers (VR, SMM, SGD), the batch reference and their shared
//! plumbing: initialization, evaluation and trace timing.

mod batch;
mod sampler;
mod sgd;
mod smm;
mod vr;

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objective::{evaluate_point, expressed_variance};
use crate::problem::ProblemSpec;
use crate::prox::project_in_place;
use crate::subprob::SolveOptions;
use crate::types::{Dataset, TraceRecord, TraceSink};

pub use batch::{run_batch_reference, BatchOptions, BatchOutput};
pub use sampler::sample_minibatch;
pub use sgd::{run_sgd, sgd_step_size, SgdParams};
pub use smm::{run_smm, SmmState};
pub use vr::{run_vr, vr_direction, VrState};

/// Starting dictionary, projected onto `C` before use.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// The all-ones matrix.
    Ones,
    /// All ones plus i.i.d. uniform noise on `[-scale, scale]`.
    PerturbedOnes { scale: f64 },
    Given(Array2<f64>),
}

impl Default for Init {
    fn default() -> Self {
        Init::PerturbedOnes { scale: 0.5 }
    }
}

/// Run settings that are not part of the algorithm itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub init: Init,
    /// Full evaluation every this many iterations (plus the final one).
    /// `None` means `ceil(m / 4)` for VR and four times per data pass for the
    /// single-loop solvers; `Some(0)` evaluates only at the start, at outer
    /// boundaries and at the end.
    pub eval_every: Option<usize>,
    pub eval_tol: f64,
    pub eval_max_iters: usize,
    /// Step size of the gradient mapping; defaults to the solver's `eta`.
    pub eval_step: Option<f64>,
    /// Ground truth for expressed-variance logging.
    pub w_true: Option<Array2<f64>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            init: Init::default(),
            eval_every: None,
            eval_tol: 1e-8,
            eval_max_iters: 1000,
            eval_step: None,
            w_true: None,
        }
    }
}

impl RunOptions {
    fn eval_opts(&self) -> SolveOptions {
        SolveOptions::new(self.eval_tol).max_iters(self.eval_max_iters)
    }

    fn cadence(&self, m: usize) -> usize {
        self.eval_every.unwrap_or_else(|| m.div_ceil(4).max(1))
    }

    /// Cadence for solvers that take `b` samples per step and have no stages.
    fn pass_cadence(&self, n: usize, b: usize) -> usize {
        self.eval_every.unwrap_or_else(|| n.div_ceil(4 * b).max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub w: Array2<f64>,
    pub data_passes: f64,
    pub wall_time_s: f64,
    pub final_objective: f64,
    pub final_grad_map_norm_sq: f64,
    pub final_ev: Option<f64>,
}

/// Builds the starting dictionary for `init`, seeded from `seed`.
pub fn init_dictionary(spec: &ProblemSpec, init: &Init, seed: u64) -> Result<Array2<f64>> {
    let mut w = match init {
        Init::Ones => Array2::ones((spec.d, spec.k)),
        Init::PerturbedOnes { scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(INIT_STREAM);
            Array2::from_shape_simple_fn((spec.d, spec.k), || 1.0 + scale * rng.random_range(-1.0..=1.0))
        }
        Init::Given(w) => {
            if w.dim() != (spec.d, spec.k) {
                return Err(Error::Shape(format!(
                    "initial dictionary is {:?}, expected ({}, {})",
                    w.dim(),
                    spec.d,
                    spec.k
                )));
            }
            w.clone()
        }
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial dictionary"));
    }
    project_in_place(&spec.dict_constraint, w.view_mut());
    Ok(w)
}

const INIT_STREAM: u64 = 1;

/// Stream of the solver RNG for a given seed.
fn solver_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Wall clock that excludes time spent in evaluations.
struct RunClock {
    start: Instant,
    excluded: Duration,
}

impl RunClock {
    fn start() -> Self {
        RunClock {
            start: Instant::now(),
            excluded: Duration::ZERO,
        }
    }

    fn seconds(&self) -> f64 {
        (self.start.elapsed().saturating_sub(self.excluded)).as_secs_f64()
    }
}

/// Shared evaluation and logging for the solver loops.
struct Recorder<'a, S: TraceSink> {
    data: &'a Dataset,
    spec: &'a ProblemSpec,
    eta: f64,
    opts: &'a RunOptions,
    sink: S,
    clock: RunClock,
    last: Option<(f64, f64, Option<f64>)>,
}

impl<'a, S: TraceSink> Recorder<'a, S> {
    fn new(data: &'a Dataset, spec: &'a ProblemSpec, eta: f64, opts: &'a RunOptions, sink: S) -> Self {
        Recorder {
            data,
            spec,
            eta: opts.eval_step.unwrap_or(eta),
            opts,
            sink,
            clock: RunClock::start(),
            last: None,
        }
    }

    fn record(&mut self, passes: f64, w: ArrayView2<f64>, evaluate: bool) -> Result<()> {
        let wall = self.clock.seconds();
        let t0 = Instant::now();
        // EV only needs `w`, so it is logged on every record.
        let ev = match &self.opts.w_true {
            Some(t) => Some(expressed_variance(w, t.view())?),
            None => None,
        };
        let (objective, grad_map_norm_sq) = if evaluate {
            let (f, g) = evaluate_point(self.data, w, self.spec, self.eta, self.opts.eval_opts())?;
            self.last = Some((f, g, ev));
            (Some(f), Some(g))
        } else {
            (None, None)
        };
        self.clock.excluded += t0.elapsed();
        self.sink.record(TraceRecord {
            data_passes: passes,
            wall_time_s: wall,
            objective,
            grad_map_norm_sq,
            ev,
        });
        Ok(())
    }

    /// `evaluated` says whether the last recorded evaluation was taken at `w`.
    fn finish(self, w: Array2<f64>, passes: f64, evaluated: bool) -> Result<SolverOutput> {
        let wall = self.clock.seconds();
        let (f, g, ev) = match self.last {
            Some(v) if evaluated => v,
            _ => {
                let (f, g) = evaluate_point(self.data, w.view(), self.spec, self.eta, self.opts.eval_opts())?;
                let ev = match &self.opts.w_true {
                    Some(t) => Some(expressed_variance(w.view(), t.view())?),
                    None => None,
                };
                (f, g, ev)
            }
        };
        Ok(SolverOutput {
            w,
            data_passes: passes,
            wall_time_s: wall,
            final_objective: f,
            final_grad_map_norm_sq: g,
            final_ev: ev,
        })
    }
}

fn ensure_finite_iterate(w: ArrayView2<f64>, solver: &str, passes: f64) -> Result<()> {
    if w.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged(format!(
            "{solver} produced a non-finite dictionary after {passes:.3} data passes; reduce the step size"
        )))
    }
}

fn check_dims(data: &Dataset, spec: &ProblemSpec) -> Result<()> {
    if data.d() != spec.d {
        return Err(Error::Shape(format!(
            "dataset has {} features, spec expects {}",
            data.d(),
            spec.d
        )));
    }
    spec.validate()
}
