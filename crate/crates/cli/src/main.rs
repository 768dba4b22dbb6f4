//! `vrmf`: run, generate and compare matrix-factorization experiments.

mod config;
mod error;
mod experiment;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vrmf::data::{gen_synth, save_matrix, MatrixFormat, SynthSpec};

use config::ExperimentConfig;
use error::CliError;
use experiment::{execute, labels, write_comparison, write_trace};

#[derive(Debug, Parser)]
#[command(name = "vrmf", version, about = "Variance-reduced stochastic matrix factorization experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replaces the solver seed of every config (and the seed of `synth`).
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment config and write its trace CSV.
    Run { config: PathBuf },
    /// Generate a synthetic dataset plus its `<out>.wtrue` ground truth.
    Synth {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        ktrue: usize,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        mag: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several configs on the same problem and merge their objectives.
    Compare {
        #[arg(required = true, num_args = 2..)]
        configs: Vec<PathBuf>,
        /// Merged CSV destination.
        #[arg(long, default_value = "comparison.csv")]
        out: PathBuf,
    },
    /// Run one config over a grid of step sizes and report the final objectives.
    Scan {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 1e-2, 1e-1, 1.0])]
        etas: Vec<f64>,
    },
}

fn cmd_run(path: &Path, seed_override: Option<u64>) -> Result<(), CliError> {
    let cfg = ExperimentConfig::from_file(path)?;
    let run = execute(&cfg, seed_override)?;
    if let Some(trace) = &cfg.trace {
        write_trace(trace, &run)?;
    }
    let s = &run.summary;
    println!(
        "solver={} objective={} grad_map_norm_sq={} passes={} wall_time_s={:.3}",
        run.solver.name(),
        s.objective,
        s.grad_map_norm_sq,
        s.passes,
        s.wall_time_s
    );
    Ok(())
}

fn cmd_synth(spec: SynthSpec, out: &Path) -> Result<(), CliError> {
    spec.validate().map_err(|e| CliError::config(e.to_string()))?;
    let synth = gen_synth(&spec).map_err(|e| CliError::runtime(e.to_string()))?;
    let format = MatrixFormat::from_path(out);
    let mut sidecar = out.as_os_str().to_owned();
    sidecar.push(".wtrue");
    let sidecar = PathBuf::from(sidecar);
    let write = |m: ndarray::ArrayView2<f64>, p: &Path| {
        save_matrix(m, p, format).map_err(|e| CliError::runtime(format!("writing {}: {e}", p.display())))
    };
    write(synth.dataset.values(), out)?;
    write(synth.w_true.view(), &sidecar)?;
    println!("wrote {} and {}", out.display(), sidecar.display());
    println!("zero outlier entries: {}", spec.zero_count());
    Ok(())
}

fn cmd_compare(paths: &[PathBuf], out: &Path, seed_override: Option<u64>) -> Result<(), CliError> {
    let configs = paths
        .iter()
        .map(|p| ExperimentConfig::from_file(p))
        .collect::<Result<Vec<_>, _>>()?;
    let first = &configs[0];
    for (cfg, path) in configs.iter().zip(paths).skip(1) {
        if cfg.problem != first.problem || cfg.data != first.data {
            return Err(CliError::config(format!(
                "{} does not share the problem and data sections of {}",
                path.display(),
                paths[0].display()
            )));
        }
    }
    let runs = configs
        .iter()
        .map(|c| execute(c, seed_override))
        .collect::<Result<Vec<_>, _>>()?;
    for (cfg, run) in configs.iter().zip(&runs) {
        if let Some(trace) = &cfg.trace {
            write_trace(trace, run)?;
        }
    }
    write_comparison(out, &runs)?;
    let names = labels(&runs);
    for (name, run) in names.iter().zip(&runs) {
        println!(
            "{name}: objective={} grad_map_norm_sq={} passes={}",
            run.summary.objective, run.summary.grad_map_norm_sq, run.summary.passes
        );
    }
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.summary.objective.total_cmp(&b.1.summary.objective))
        .map(|(i, _)| i)
        .expect("at least two runs");
    println!("lowest final objective: {}", names[best]);
    Ok(())
}

fn cmd_scan(path: &Path, etas: &[f64], seed_override: Option<u64>) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    let mut best: Option<(f64, f64)> = None;
    for &eta in etas {
        cfg.settings.step_size = Some(eta);
        let s = execute(&cfg, seed_override)?.summary;
        println!("step_size={eta} objective={} grad_map_norm_sq={}", s.objective, s.grad_map_norm_sq);
        if best.is_none_or(|(_, f)| s.objective < f) {
            best = Some((eta, s.objective));
        }
    }
    match best {
        Some((eta, f)) => {
            println!("best step_size: {eta} (objective {f})");
            Ok(())
        }
        None => Err(CliError::config("--etas is empty")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("--threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("cannot start thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config, cli.seed_override),
        Command::Synth {
            d,
            n,
            ktrue,
            rho,
            mag,
            seed,
            out,
        } => cmd_synth(
            SynthSpec {
                d: *d,
                n: *n,
                k_true: *ktrue,
                outlier_density: *rho,
                outlier_magnitude: *mag,
                seed: cli.seed_override.unwrap_or(*seed),
            },
            out,
        ),
        Command::Compare { configs, out } => cmd_compare(configs, out, cli.seed_override),
        Command::Scan { config, etas } => cmd_scan(config, etas, cli.seed_override),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
