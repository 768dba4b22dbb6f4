//! Experiment files: `[section]` headers followed by `key = value` lines.
//! `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vrmf::data::{MatrixFormat, SynthSpec};
use vrmf::{FinalOption, Formulation};

use crate::error::CliError;

const SECTIONS: [&str; 4] = ["problem", "solver", "data", "output"];

/// Raw key/value pairs per section, with the line each key came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut ini = Ini::default();
        let mut current: Option<String> = None;
        for (no, raw) in text.lines().enumerate() {
            let line_no = no + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::config(format!("line {line_no}: unterminated section header")))?
                    .trim()
                    .to_ascii_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(CliError::config(format!("line {line_no}: unknown section [{name}]")));
                }
                ini.sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {line_no}: expected `key = value`")))?;
            let section = current
                .as_ref()
                .ok_or_else(|| CliError::config(format!("line {line_no}: key outside any section")))?;
            let key = key.trim().to_string();
            let entries = ini.sections.get_mut(section).expect("section registered above");
            if entries.insert(key.clone(), (value.trim().to_string(), line_no)).is_some() {
                return Err(CliError::config(format!("line {line_no}: duplicate key {section}.{key}")));
            }
        }
        Ok(ini)
    }

    pub fn section(&self, name: &str) -> Option<&BTreeMap<String, (String, usize)>> {
        self.sections.get(name)
    }
}

/// Typed view of one section that tracks which keys were consumed.
struct Section {
    name: &'static str,
    entries: BTreeMap<String, (String, usize)>,
}

impl Section {
    fn new(ini: &Ini, name: &'static str) -> Self {
        Section {
            name,
            entries: ini.section(name).cloned().unwrap_or_default(),
        }
    }

    fn take_str(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take_str(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::config(format!("line {line}: {}.{key} = `{v}`: {e}", self.name))),
        }
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)?
            .ok_or_else(|| CliError::config(format!("missing required field {}.{key}", self.name)))
    }

    /// Fails on any key nobody asked for.
    fn finish(self) -> Result<(), CliError> {
        match self.entries.iter().next() {
            Some((key, (_, line))) => Err(CliError::config(format!("line {line}: unknown field {}.{key}", self.name))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Vr,
    Smm,
    Sgd,
    Batch,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Vr => "vr",
            SolverKind::Smm => "smm",
            SolverKind::Sgd => "sgd",
            SolverKind::Batch => "batch",
        }
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vr" => Ok(SolverKind::Vr),
            "smm" => Ok(SolverKind::Smm),
            "sgd" => Ok(SolverKind::Sgd),
            "batch" => Ok(SolverKind::Batch),
            other => Err(format!("unknown solver `{other}` (expected vr, smm, sgd or batch)")),
        }
    }
}

/// How the SSODL graph Laplacian is supplied.
#[derive(Debug, Clone, PartialEq)]
pub enum LaplacianSource {
    /// Laplacian of the path graph on the `d` features.
    Path,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub formulation: Formulation,
    pub k: usize,
    pub weights: BTreeMap<String, f64>,
    pub groups: Option<Vec<Vec<usize>>>,
    pub group_weights: Option<Vec<f64>>,
    pub laplacian: Option<LaplacianSource>,
}

/// Solver settings; unset fields fall back to defaults for the dataset size.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverSettings {
    pub outer_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub batch_size: Option<usize>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub step_size: Option<f64>,
    pub theta: Option<f64>,
    pub tau: Option<f64>,
    pub seed: Option<u64>,
    pub final_option: Option<FinalOption>,
    pub subprob_tol_floor: Option<f64>,
    pub subprob_max_iters: Option<usize>,
    /// SGD and SMM iteration count.
    pub iters: Option<usize>,
    pub beta: Option<f64>,
    pub beta_prime: Option<f64>,
    /// Batch stopping tolerance on the squared gradient mapping.
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub eval_every: Option<usize>,
    pub eval_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synth(SynthSpec),
    File {
        path: PathBuf,
        format: MatrixFormat,
        w_true: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub solver: SolverKind,
    pub settings: SolverSettings,
    pub data: DataSource,
    pub trace: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub ev: bool,
}

fn parse_final_option(s: &str) -> Result<FinalOption, String> {
    match s.trim().to_ascii_uppercase().as_str() {
        "I" | "1" => Ok(FinalOption::OptionI),
        "II" | "2" => Ok(FinalOption::OptionII),
        other => Err(format!("unknown final option `{other}` (expected I or II)")),
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|e| format!("`{}`: {e}", x.trim())))
        .collect()
}

/// Relative paths in a config file resolve against the file's directory.
fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let ini = Ini::parse(text)?;

        let mut p = Section::new(&ini, "problem");
        let formulation: Formulation = p.require("formulation")?;
        let k: usize = p.require("k")?;
        let mut weights = BTreeMap::new();
        for key in formulation.weight_keys() {
            if let Some(v) = p.take::<f64>(key)? {
                weights.insert(key.to_string(), v);
            }
        }
        let groups = match p.take_str("groups") {
            None => None,
            Some((v, line)) => Some(
                v.split(';')
                    .map(parse_list::<usize>)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::config(format!("line {line}: problem.groups: {e}")))?,
            ),
        };
        let group_weights = match p.take_str("group_weights") {
            None => None,
            Some((v, line)) => {
                Some(parse_list::<f64>(&v).map_err(|e| CliError::config(format!("line {line}: problem.group_weights: {e}")))?)
            }
        };
        let laplacian = p.take_str("laplacian").map(|(v, _)| {
            if v.eq_ignore_ascii_case("path") {
                LaplacianSource::Path
            } else {
                LaplacianSource::File(resolve(base, &v))
            }
        });
        p.finish()?;

        let mut s = Section::new(&ini, "solver");
        let solver: SolverKind = s.require("name")?;
        let final_option = match s.take_str("final_option") {
            None => None,
            Some((v, line)) => {
                Some(parse_final_option(&v).map_err(|e| CliError::config(format!("line {line}: solver.final_option: {e}")))?)
            }
        };
        let settings = SolverSettings {
            outer_iters: s.take("outer_iters")?,
            inner_iters: s.take("inner_iters")?,
            batch_size: s.take("batch_size")?,
            c1: s.take("c1")?,
            c2: s.take("c2")?,
            step_size: s.take("step_size")?,
            theta: s.take("theta")?,
            tau: s.take("tau")?,
            seed: s.take("seed")?,
            final_option,
            subprob_tol_floor: s.take("subprob_tol_floor")?,
            subprob_max_iters: s.take("subprob_max_iters")?,
            iters: s.take("iters")?,
            beta: s.take("beta")?,
            beta_prime: s.take("beta_prime")?,
            tol: s.take("tol")?,
            max_iters: s.take("max_iters")?,
            eval_every: s.take("eval_every")?,
            eval_step: s.take("eval_step")?,
        };
        s.finish()?;

        let mut d = Section::new(&ini, "data");
        let source: String = d.require("source")?;
        let data = match source.to_ascii_lowercase().as_str() {
            "synth" => {
                let spec = SynthSpec {
                    d: d.require("d")?,
                    n: d.require("n")?,
                    k_true: d.require("k_true")?,
                    outlier_density: d.require("rho")?,
                    outlier_magnitude: d.require("magnitude")?,
                    seed: d.take("seed")?.unwrap_or(0),
                };
                spec.validate().map_err(|e| CliError::config(format!("data: {e}")))?;
                DataSource::Synth(spec)
            }
            "file" => {
                let path = resolve(base, &d.require::<String>("path")?);
                let format = match d.take::<MatrixFormat>("format")? {
                    Some(f) => f,
                    None => MatrixFormat::from_path(&path),
                };
                let w_true = d.take::<String>("w_true")?.map(|p| resolve(base, &p));
                DataSource::File { path, format, w_true }
            }
            other => return Err(CliError::config(format!("data.source: unknown source `{other}` (expected synth or file)"))),
        };
        d.finish()?;

        let mut o = Section::new(&ini, "output");
        let trace = o.take::<String>("trace")?.map(|p| resolve(base, &p));
        let reference = o.take::<String>("reference")?.map(|p| resolve(base, &p));
        let ev = o.take::<bool>("ev")?.unwrap_or(false);
        o.finish()?;

        let has_truth = matches!(data, DataSource::Synth(_) | DataSource::File { w_true: Some(_), .. });
        if ev && !has_truth {
            return Err(CliError::config("output.ev = true needs a synthetic source or data.w_true"));
        }
        if k == 0 {
            return Err(CliError::config("problem.k must be >= 1"));
        }

        Ok(ExperimentConfig {
            problem: ProblemConfig {
                formulation,
                k,
                weights,
                groups,
                group_weights,
                laplacian,
            },
            solver,
            settings,
            data,
            trace,
            reference,
            ev,
        })
    }
}
