use crate::error::{invalid, Result};

/// Which iterate the VR solver returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FinalOption {
    /// A uniformly random inner iterate over all stages.
    OptionI,
    /// The last iterate.
    #[default]
    OptionII,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub theta: f64,
    pub tau: f64,
    pub c1: f64,
    pub c2: f64,
    pub seed: u64,
    pub final_option: FinalOption,
    pub subprob_tol_floor: f64,
    pub subprob_max_iters: usize,
}

pub const DEFAULT_OUTER_ITERS: usize = 10;
pub const DEFAULT_TAU: f64 = 1e-3;
pub const DEFAULT_C1: f64 = 0.2;
pub const DEFAULT_C2: f64 = 0.5;
pub const DEFAULT_THETA: f64 = 3.0;
pub const DEFAULT_STEP_SIZE: f64 = 0.1;
pub const DEFAULT_TOL_FLOOR: f64 = 1e-10;
pub const DEFAULT_SUBPROB_MAX_ITERS: usize = 500;

impl SolverConfig {
    /// Defaults for a dataset with `n` samples, with `b` and `m` from
    /// [`default_sizing`].
    pub fn for_samples(n: usize) -> Self {
        let (b, m) = default_sizing(n, DEFAULT_C1, DEFAULT_C2);
        SolverConfig {
            outer_iters: DEFAULT_OUTER_ITERS,
            inner_iters: m,
            batch_size: b,
            step_size: DEFAULT_STEP_SIZE,
            theta: DEFAULT_THETA,
            tau: DEFAULT_TAU,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
            seed: 0,
            final_option: FinalOption::OptionII,
            subprob_tol_floor: DEFAULT_TOL_FLOOR,
            subprob_max_iters: DEFAULT_SUBPROB_MAX_ITERS,
        }
    }

    /// Recomputes `b` and `m` from the stored sizing constants.
    pub fn resize(mut self, n: usize) -> Self {
        let (b, m) = default_sizing(n, self.c1, self.c2);
        self.batch_size = b;
        self.inner_iters = m;
        self
    }

    /// `outer_iters = 0` is accepted and means "return the initial point".
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n {
            return Err(invalid("batch_size", format!("{} not in 1..={n}", self.batch_size)));
        }
        if self.inner_iters == 0 {
            return Err(invalid("inner_iters", "must be >= 1"));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(invalid("step_size", format!("{} must be > 0", self.step_size)));
        }
        if !(self.theta > 2.0) {
            return Err(invalid("theta", format!("{} must be > 2", self.theta)));
        }
        if !(self.tau > 0.0) {
            return Err(invalid("tau", "must be > 0"));
        }
        if !(self.c1 > 0.0) || !(self.c2 > 0.0) {
            return Err(invalid("c1/c2", "must be > 0"));
        }
        if !(self.subprob_tol_floor > 0.0) {
            return Err(invalid("subprob_tol_floor", "must be > 0"));
        }
        if self.subprob_max_iters == 0 {
            return Err(invalid("subprob_max_iters", "must be >= 1"));
        }
        Ok(())
    }
}

/// `b = clamp(round(c1 n^{2/3}), 1, n)`, `m = max(1, round(c2 n^{1/3}))`.
pub fn default_sizing(n: usize, c1: f64, c2: f64) -> (usize, usize) {
    let nf = n as f64;
    let b = (c1 * nf.powf(2.0 / 3.0)).round();
    let m = (c2 * nf.cbrt()).round();
    let b = if b.is_finite() { b.max(1.0).min(nf.max(1.0)) as usize } else { 1 };
    let m = if m.is_finite() { m.max(1.0) as usize } else { 1 };
    (b, m)
}

/// Step-size condition: `theta > 2` and `theta (theta - 1) >= 2 m (m + 1) alpha(n, b)`.
pub fn check_step_condition(n: usize, b: usize, m: usize, theta: f64) -> bool {
    let alpha = if b >= n || n < 2 {
        0.0
    } else {
        crate::objective::alpha_unchecked(n, b)
    };
    let (m, theta) = (m as f64, theta);
    theta > 2.0 && theta * (theta - 1.0) >= 2.0 * m * (m + 1.0) * alpha
}
