//! Running one configured experiment and writing its trace.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use vrmf::data::{gen_synth, load_matrix, MatrixFormat};
use vrmf::objective::eval_objective;
use vrmf::solvers::{run_batch_reference, run_sgd, run_smm, run_vr, BatchOptions, RunOptions, SgdParams};
use vrmf::subprob::SolveOptions;
use vrmf::{make_spec, Dataset, ProblemSpec, SolverConfig, SpecParams, TraceRecord};

use crate::config::{DataSource, ExperimentConfig, LaplacianSource, ProblemConfig, SolverKind, SolverSettings};
use crate::error::CliError;

const DEFAULT_BATCH_TOL: f64 = 1e-8;
const DEFAULT_BATCH_ITERS: usize = 1000;

/// Final numbers of a run, as printed in the summary line.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub objective: f64,
    pub grad_map_norm_sq: f64,
    pub passes: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub solver: SolverKind,
    pub trace: Vec<TraceRecord>,
    pub summary: Summary,
    /// `f(W_hat)` when a reference dictionary was given.
    pub reference_objective: Option<f64>,
    pub ev: bool,
}

fn runtime<E: std::fmt::Display>(context: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::runtime(format!("{context}: {e}"))
}

fn load(path: &Path, format: MatrixFormat) -> Result<Dataset, CliError> {
    load_matrix(path, format).map_err(|e| CliError::runtime(format!("loading {}: {e}", path.display())))
}

/// Loads or generates the data, with the ground-truth dictionary if known.
pub fn load_data(source: &DataSource) -> Result<(Dataset, Option<Dataset>), CliError> {
    match source {
        DataSource::Synth(spec) => {
            let synth = gen_synth(spec).map_err(runtime("generating data"))?;
            let w_true = Dataset::new(synth.w_true, "w_true").map_err(runtime("ground truth"))?;
            Ok((synth.dataset, Some(w_true)))
        }
        DataSource::File { path, format, w_true } => {
            let data = load(path, *format)?;
            let truth = match w_true {
                Some(p) => Some(load(p, MatrixFormat::from_path(p))?),
                None => None,
            };
            Ok((data, truth))
        }
    }
}

/// Laplacian of the path graph on `d` nodes.
fn path_laplacian(d: usize) -> Array2<f64> {
    Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j {
            let ends = usize::from(i == 0) + usize::from(i + 1 == d);
            2.0 - ends as f64
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        }
    })
}

pub fn build_spec(problem: &ProblemConfig, d: usize) -> Result<ProblemSpec, CliError> {
    let mut params = SpecParams::new();
    for (key, value) in &problem.weights {
        params = params.with(key, *value);
    }
    if let Some(groups) = &problem.groups {
        let weights = problem
            .group_weights
            .clone()
            .ok_or_else(|| CliError::config("problem.groups needs problem.group_weights"))?;
        params = params.with_groups(groups.clone(), weights);
    }
    if let Some(source) = &problem.laplacian {
        let l = match source {
            LaplacianSource::Path => path_laplacian(d),
            LaplacianSource::File(p) => load(p, MatrixFormat::from_path(p))?.into_values(),
        };
        params = params.with_laplacian(l);
    }
    make_spec(problem.formulation, d, problem.k, &params).map_err(|e| CliError::config(format!("problem: {e}")))
}

pub fn solver_config(settings: &SolverSettings, n: usize, seed_override: Option<u64>) -> Result<SolverConfig, CliError> {
    let mut c = SolverConfig::for_samples(n);
    if let Some(v) = settings.c1 {
        c.c1 = v;
    }
    if let Some(v) = settings.c2 {
        c.c2 = v;
    }
    if settings.c1.is_some() || settings.c2.is_some() {
        if !(c.c1 > 0.0 && c.c2 > 0.0) {
            return Err(CliError::config("solver.c1 and solver.c2 must be > 0"));
        }
        c = c.resize(n);
    }
    let s = settings;
    c.outer_iters = s.outer_iters.unwrap_or(c.outer_iters);
    c.inner_iters = s.inner_iters.unwrap_or(c.inner_iters);
    c.batch_size = s.batch_size.unwrap_or(c.batch_size);
    c.step_size = s.step_size.unwrap_or(c.step_size);
    c.theta = s.theta.unwrap_or(c.theta);
    c.tau = s.tau.unwrap_or(c.tau);
    c.seed = seed_override.or(s.seed).unwrap_or(c.seed);
    c.final_option = s.final_option.unwrap_or(c.final_option);
    c.subprob_tol_floor = s.subprob_tol_floor.unwrap_or(c.subprob_tol_floor);
    c.subprob_max_iters = s.subprob_max_iters.unwrap_or(c.subprob_max_iters);
    c.validate(n).map_err(|e| CliError::config(format!("solver: {e}")))?;
    Ok(c)
}

/// SGD/SMM steps that consume as many samples as the VR run of `c`.
pub fn equal_pass_iters(n: usize, c: &SolverConfig) -> usize {
    (c.outer_iters * (n + c.inner_iters * c.batch_size)).div_ceil(c.batch_size)
}

/// Runs the experiment described by `cfg`.
pub fn execute(cfg: &ExperimentConfig, seed_override: Option<u64>) -> Result<RunResult, CliError> {
    let (data, w_true) = load_data(&cfg.data)?;
    let n = data.n();
    let spec = build_spec(&cfg.problem, data.d())?.bound_to(n);
    let config = solver_config(&cfg.settings, n, seed_override)?;
    let s = &cfg.settings;
    let opts = RunOptions {
        eval_every: s.eval_every,
        eval_step: s.eval_step,
        w_true: if cfg.ev { w_true.map(Dataset::into_values) } else { None },
        ..Default::default()
    };
    if let Some(step) = s.eval_step {
        if step.is_nan() || step <= 0.0 {
            return Err(CliError::config("solver.eval_step must be > 0"));
        }
    }
    let reference_objective = match &cfg.reference {
        Some(p) => {
            let w = load(p, MatrixFormat::from_path(p))?.into_values();
            let f = eval_objective(&data, w.view(), &spec, SolveOptions::new(1e-10).max_iters(5000))
                .map_err(runtime("evaluating the reference dictionary"))?;
            Some(f)
        }
        None => None,
    };

    let mut trace = vec![];
    let failed = runtime("solver failed");
    let summary = match cfg.solver {
        SolverKind::Vr => run_vr(&data, &spec, &config, &opts, &mut trace).map_err(failed)?.into(),
        SolverKind::Sgd => {
            let params = SgdParams {
                beta: s.beta.unwrap_or(config.step_size * n as f64),
                beta_prime: s.beta_prime.unwrap_or(n as f64),
                iters: s.iters.unwrap_or_else(|| equal_pass_iters(n, &config)),
            };
            params.validate().map_err(|e| CliError::config(format!("solver: {e}")))?;
            run_sgd(&data, &spec, &config, &params, &opts, &mut trace).map_err(failed)?.into()
        }
        SolverKind::Smm => {
            let iters = s.iters.unwrap_or_else(|| equal_pass_iters(n, &config));
            run_smm(&data, &spec, &config, iters, &opts, &mut trace).map_err(failed)?.into()
        }
        SolverKind::Batch => {
            let tol = s.tol.unwrap_or(DEFAULT_BATCH_TOL);
            let max_iters = s.max_iters.unwrap_or(DEFAULT_BATCH_ITERS);
            let batch = BatchOptions {
                seed: config.seed,
                ..Default::default()
            };
            let out = run_batch_reference(&data, &spec, config.step_size, tol, max_iters, &batch, &mut trace)
                .map_err(failed)?;
            let last = trace.last().copied();
            Summary {
                objective: out.objective,
                grad_map_norm_sq: out.grad_map_norm_sq,
                passes: last.map_or(0.0, |r| r.data_passes),
                wall_time_s: last.map_or(0.0, |r| r.wall_time_s),
            }
        }
    };
    Ok(RunResult {
        solver: cfg.solver,
        trace,
        summary,
        reference_objective,
        ev: cfg.ev,
    })
}

impl From<vrmf::solvers::SolverOutput> for Summary {
    fn from(o: vrmf::solvers::SolverOutput) -> Self {
        Summary {
            objective: o.final_objective,
            grad_map_norm_sq: o.final_grad_map_norm_sq,
            passes: o.data_passes,
            wall_time_s: o.wall_time_s,
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Writes through a temporary file in the target directory, then renames,
/// so a failed run never leaves a partial file behind.
pub fn write_atomically(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let io = |e: std::io::Error| CliError::runtime(format!("writing {}: {e}", path.display()));
    fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    fill(tmp.as_file_mut()).map_err(io)?;
    tmp.as_file_mut().flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_trace(path: &Path, run: &RunResult) -> Result<(), CliError> {
    write_atomically(path, |out| {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["pass", "wall_time_s", "objective", "grad_map_norm_sq"];
        if run.ev {
            header.push("ev");
        }
        if run.reference_objective.is_some() {
            header.push("log_subopt");
        }
        w.write_record(&header)?;
        for r in &run.trace {
            let mut row = vec![r.data_passes.to_string(), r.wall_time_s.to_string(), cell(r.objective), cell(r.grad_map_norm_sq)];
            if run.ev {
                row.push(cell(r.ev));
            }
            if let Some(f_star) = run.reference_objective {
                let gap = r.objective.map(|f| f - f_star).filter(|g| *g > 0.0);
                row.push(cell(gap.map(f64::log10)));
            }
            w.write_record(&row)?;
        }
        w.flush()
    })
}

/// Objective of each run on the union of evaluated pass counts, carrying
/// every run's latest value forward.
pub fn aligned_objectives(runs: &[RunResult]) -> Vec<(f64, Vec<Option<f64>>)> {
    let mut passes: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.trace.iter().filter(|t| t.objective.is_some()).map(|t| t.data_passes))
        .collect();
    passes.sort_by(f64::total_cmp);
    passes.dedup();
    let mut cursor = vec![0usize; runs.len()];
    let mut latest: Vec<Option<f64>> = vec![None; runs.len()];
    passes
        .into_iter()
        .map(|p| {
            for (i, run) in runs.iter().enumerate() {
                while cursor[i] < run.trace.len() && run.trace[cursor[i]].data_passes <= p {
                    if let Some(f) = run.trace[cursor[i]].objective {
                        latest[i] = Some(f);
                    }
                    cursor[i] += 1;
                }
            }
            (p, latest.clone())
        })
        .collect()
}

/// Column labels: solver names, numbered when repeated.
pub fn labels(runs: &[RunResult]) -> Vec<String> {
    let mut out: Vec<String> = vec![];
    for r in runs {
        let base = r.solver.name();
        let seen = out.iter().filter(|l| l.split('#').next() == Some(base)).count();
        out.push(if seen == 0 { base.to_string() } else { format!("{base}#{}", seen + 1) });
    }
    out
}

pub fn write_comparison(path: &Path, runs: &[RunResult]) -> Result<(), CliError> {
    let names = labels(runs);
    let rows = aligned_objectives(runs);
    write_atomically(path, |out| {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["pass".to_string()];
        header.extend(names.iter().map(|l| format!("{l}_objective")));
        w.write_record(&header)?;
        for (p, values) in rows {
            let mut row = vec![p.to_string()];
            row.extend(values.into_iter().map(cell));
            w.write_record(&row)?;
        }
        w.flush()
    })
}
