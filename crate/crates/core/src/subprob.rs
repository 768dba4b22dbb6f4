//! Per-sample coding problem
//!
//! `min_{h in H, r in R} 1/2 ||y - W h - r||^2 + phi(h) + varphi(r)`
//!
//! solved by alternating a proximal-gradient step in `h` (step `1/L'`,
//! `L' = ||W||_2^2`) with an exact proximal minimization in `r`.
//!
//! Since `r` is minimized exactly, the scheme is proximal gradient on the
//! reduced function `h -> min_r (...)`, whose gradient is `L'`-Lipschitz.
//! [`CodeMethod::Accelerated`] adds monotone momentum with restarts on that
//! reduced problem; it is the default for solver runs because the plain
//! iteration needs `O(L' / mu)` steps on ill-conditioned dictionaries.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis, Zip};

use crate::error::{invalid, Error, Result};
use crate::problem::ProblemSpec;
use crate::linalg::Cholesky;
use crate::prox::{project_in_place, prox_composite_in_place, PenaltyDescriptor, SetDescriptor};

pub const POWER_ITER_TOL: f64 = 1e-10;
pub const POWER_ITER_MAX: usize = 1000;
// keeps the h-step a majorization when the power iteration stops just short
const LIPSCHITZ_SAFETY: f64 = 1.0 + 1e-9;
const MONOTONE_SLACK: f64 = 1e-12;

/// Default per-sample iteration cap.
pub const DEFAULT_MAX_ITERS: usize = 500;
/// Accelerated solves try a Newton step every this many iterations.
const NEWTON_EVERY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CodeMethod {
    /// One `h` proximal-gradient step followed by one exact `r` step.
    Plain,
    /// Same steps taken from an extrapolated point; a step that would raise
    /// the objective is rejected and the momentum restarted.
    #[default]
    Accelerated,
}

/// Stopping parameters for a coding solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub method: CodeMethod,
}

impl SolveOptions {
    pub fn new(tol: f64) -> Self {
        SolveOptions {
            tol,
            max_iters: DEFAULT_MAX_ITERS,
            method: CodeMethod::default(),
        }
    }

    pub fn max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn method(mut self, method: CodeMethod) -> Self {
        self.method = method;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeSolution {
    pub h: Array1<f64>,
    pub r: Array1<f64>,
    /// Value of the coding objective at `(h, r)`.
    pub objective: f64,
    /// `max(L' ||h - h+||, ||r - r+||)` at the last iteration.
    pub residual: f64,
    pub iters: usize,
}

/// `W^T W`, accumulated row by row so no packed copy of `W` is made.
fn gram_matrix(w: ArrayView2<f64>) -> Array2<f64> {
    let k = w.ncols();
    let mut gram = Array2::<f64>::zeros((k, k));
    for row in w.rows() {
        for a in 0..k {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            for b in a..k {
                gram[[a, b]] += ra * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[[a, b]] = gram[[b, a]];
        }
    }
    gram
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn top_eigenvalue(gram: ArrayView2<f64>) -> f64 {
    let k = gram.nrows();
    if k == 0 || gram.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    // a fixed irregular start avoids being orthogonal to the top eigenvector
    // for structured inputs
    let mut v = Array1::from_shape_fn(k, |i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract());
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut lambda = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let gv = gram.dot(&v);
        let next = v.dot(&gv);
        let norm = gv.dot(&gv).sqrt();
        if norm == 0.0 {
            return next.max(0.0);
        }
        v = gv / norm;
        let done = (next - lambda).abs() <= POWER_ITER_TOL * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    lambda.max(0.0)
}

/// `||W||_2^2` via power iteration on `W^T W`.
pub fn spectral_norm_sq(w: ArrayView2<f64>) -> f64 {
    top_eigenvalue(gram_matrix(w).view())
}

/// Per-sample solve tolerance for outer stage `s`, inner step `t`:
/// `max(floor, (m s + t + 1)^{-(1/2 + tau)})`.
pub fn tolerance_schedule(s: usize, t: usize, m: usize, tau: f64, floor: f64) -> f64 {
    let idx = (m as f64) * (s as f64) + t as f64 + 1.0;
    idx.powf(-(0.5 + tau)).max(floor)
}

/// Coding objective `1/2 ||y - W h - r||^2 + phi(h) + varphi(r)`.
pub fn code_objective(
    y: ArrayView1<f64>,
    w: ArrayView2<f64>,
    h: ArrayView1<f64>,
    r: ArrayView1<f64>,
    spec: &ProblemSpec,
) -> f64 {
    let fit = &y - &w.dot(&h) - r;
    0.5 * fit.dot(&fit) + spec.coeff_reg.value_vec(h) + spec.outlier_reg.value_vec(r)
}

/// Dictionary-dependent quantities shared by every sample coded against the
/// same `W`: the Gram matrix and the step constant `L'`.
#[derive(Debug, Clone)]
pub struct CodeContext<'a> {
    w: ArrayView2<'a, f64>,
    spec: &'a ProblemSpec,
    gram: Array2<f64>,
    lip: f64,
}

/// Iterate produced by a successful Newton step.
struct Accepted {
    h: Array1<f64>,
    gh: Array1<f64>,
    r: Array1<f64>,
    objective: f64,
}

/// Per-sample constants and scratch space.
struct Sample<'s> {
    y: ArrayView1<'s, f64>,
    wty: Array1<f64>,
    yty: f64,
    robust: bool,
}

impl<'a> CodeContext<'a> {
    pub fn new(w: ArrayView2<'a, f64>, spec: &'a ProblemSpec) -> Result<Self> {
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
        let gram = gram_matrix(w);
        let lip = top_eigenvalue(gram.view());
        Ok(CodeContext { w, spec, gram, lip })
    }

    pub fn dictionary(&self) -> ArrayView2<'a, f64> {
        self.w
    }

    /// `||W||_2^2`.
    pub fn lipschitz(&self) -> f64 {
        self.lip
    }

    pub fn solve(&self, y: ArrayView1<f64>, opts: SolveOptions) -> Result<CodeSolution> {
        let h0 = Array1::zeros(self.spec.k);
        let r0 = Array1::zeros(self.spec.d);
        self.run(y, h0, r0, opts, None)
    }

    /// Same iteration from a caller-chosen start (projected onto `H x R`).
    pub fn solve_from(
        &self,
        y: ArrayView1<f64>,
        h0: ArrayView1<f64>,
        r0: ArrayView1<f64>,
        opts: SolveOptions,
    ) -> Result<CodeSolution> {
        if h0.len() != self.spec.k || r0.len() != self.spec.d {
            return Err(Error::Shape("start point has wrong length".into()));
        }
        if h0.iter().chain(r0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("start point"));
        }
        self.run(y, h0.to_owned(), r0.to_owned(), opts, None)
    }

    /// Also returns the coding objective at the start and after every
    /// iteration.
    pub fn solve_with_history(&self, y: ArrayView1<f64>, opts: SolveOptions) -> Result<(CodeSolution, Vec<f64>)> {
        let mut hist = Vec::new();
        let h0 = Array1::zeros(self.spec.k);
        let r0 = Array1::zeros(self.spec.d);
        let sol = self.run(y, h0, r0, opts, Some(&mut hist))?;
        Ok((sol, hist))
    }

    fn run(
        &self,
        y: ArrayView1<f64>,
        mut h: Array1<f64>,
        mut r: Array1<f64>,
        opts: SolveOptions,
        mut history: Option<&mut Vec<f64>>,
    ) -> Result<CodeSolution> {
        let spec = self.spec;
        if y.len() != spec.d {
            return Err(Error::Shape(format!("sample has length {}, expected {}", y.len(), spec.d)));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample"));
        }
        if !(opts.tol > 0.0) {
            return Err(invalid("tol", format!("{} must be > 0", opts.tol)));
        }
        project_in_place(&spec.coeff_constraint, h.view_mut().insert_axis(Axis(1)));
        project_in_place(&spec.outlier_constraint, r.view_mut().insert_axis(Axis(1)));

        if self.lip == 0.0 {
            // W = 0: the fit term no longer depends on h
            h.fill(0.0);
            project_in_place(&spec.coeff_constraint, h.view_mut().insert_axis(Axis(1)));
            let mut r = y.to_owned();
            self.outlier_prox(r.view_mut())?;
            let objective = code_objective(y, self.w, h.view(), r.view(), spec);
            if let Some(hist) = history.as_deref_mut() {
                hist.push(objective);
            }
            return Ok(CodeSolution {
                h,
                r,
                objective,
                residual: 0.0,
                iters: 0,
            });
        }

        let sample = Sample {
            y,
            wty: self.w.t().dot(&y),
            yty: y.dot(&y),
            robust: !spec.outliers_disabled(),
        };
        let mut sol = match opts.method {
            CodeMethod::Plain => self.run_plain(&sample, h, r, opts, history)?,
            CodeMethod::Accelerated => self.run_accelerated(&sample, h, r, opts, history)?,
        };
        // the Gram-form objective used inside the loop loses digits near zero
        sol.objective = code_objective(y, self.w, sol.h.view(), sol.r.view(), spec);
        Ok(sol)
    }

    fn outlier_prox(&self, r: ArrayViewMut1<f64>) -> Result<()> {
        prox_composite_in_place(
            &self.spec.outlier_reg,
            &self.spec.outlier_constraint,
            1.0,
            r.insert_axis(Axis(1)),
        )
    }

    fn coeff_prox(&self, h: ArrayViewMut1<f64>, step: f64) -> Result<()> {
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient iterate"));
        }
        prox_composite_in_place(&self.spec.coeff_reg, &self.spec.coeff_constraint, step, h.insert_axis(Axis(1)))
    }

    /// `r*(h) = prox_{varphi + delta_R}(y - W h)` given `wh = W h`.
    fn best_outlier(&self, s: &Sample<'_>, wh: &Array1<f64>, r: &mut Array1<f64>) -> Result<()> {
        Zip::from(&mut *r).and(&s.y).and(wh).for_each(|ri, &yi, &whi| *ri = yi - whi);
        self.outlier_prox(r.view_mut())
    }

    /// Objective from `W h` (robust case).
    fn objective_direct(&self, s: &Sample<'_>, wh: &Array1<f64>, h: &Array1<f64>, r: &Array1<f64>) -> f64 {
        let mut fit = 0.0;
        for i in 0..s.y.len() {
            let e = s.y[i] - wh[i] - r[i];
            fit += e * e;
        }
        0.5 * fit + self.spec.coeff_reg.value_vec(h.view()) + self.spec.outlier_reg.value_vec(r.view())
    }

    /// Objective from `G h` when `r = 0`: `1/2 (y'y - 2 h'W'y + h'Gh) + phi(h)`.
    fn objective_gram(&self, s: &Sample<'_>, gh: &Array1<f64>, h: &Array1<f64>) -> f64 {
        let fit = s.yty - 2.0 * h.dot(&s.wty) + h.dot(gh);
        0.5 * fit.max(0.0) + self.spec.coeff_reg.value_vec(h.view())
    }

    /// Gradient of the smooth part in `h`: `G h + W^T r - W^T y`.
    fn h_gradient(&self, s: &Sample<'_>, gh: &Array1<f64>, r: &Array1<f64>, out: &mut Array1<f64>) {
        out.assign(gh);
        *out -= &s.wty;
        if s.robust {
            ndarray::linalg::general_mat_vec_mul(1.0, &self.w.t(), r, 1.0, out);
        }
    }

    fn run_plain(
        &self,
        s: &Sample<'_>,
        mut h: Array1<f64>,
        mut r: Array1<f64>,
        opts: SolveOptions,
        mut history: Option<&mut Vec<f64>>,
    ) -> Result<CodeSolution> {
        let lip = self.lip * LIPSCHITZ_SAFETY;
        let step = 1.0 / lip;
        let mut gh = self.gram.dot(&h);
        let mut wh = if s.robust { self.w.dot(&h) } else { Array1::zeros(0) };
        let mut objective = if s.robust {
            self.objective_direct(s, &wh, &h, &r)
        } else {
            self.objective_gram(s, &gh, &h)
        };
        if let Some(hist) = history.as_deref_mut() {
            hist.push(objective);
        }
        let mut grad = Array1::<f64>::zeros(self.spec.k);
        let mut h_next = Array1::<f64>::zeros(self.spec.k);
        let mut r_next = Array1::<f64>::zeros(if s.robust { self.spec.d } else { 0 });
        let mut residual = f64::INFINITY;
        let mut iters = 0;
        while iters < opts.max_iters {
            iters += 1;
            // h+ = prox_{phi/L' + delta_H}(h - grad/L')
            self.h_gradient(s, &gh, &r, &mut grad);
            Zip::from(&mut h_next).and(&h).and(&grad).for_each(|n, &hi, &gi| *n = hi - step * gi);
            self.coeff_prox(h_next.view_mut(), step)?;
            residual = lip * diff_norm(h.view(), h_next.view());
            std::mem::swap(&mut h, &mut h_next);
            gh = self.gram.dot(&h);

            // r+ = prox_{varphi + delta_R}(y - W h+)
            let next_obj = if s.robust {
                wh = self.w.dot(&h);
                self.best_outlier(s, &wh, &mut r_next)?;
                residual = residual.max(diff_norm(r.view(), r_next.view()));
                std::mem::swap(&mut r, &mut r_next);
                self.objective_direct(s, &wh, &h, &r)
            } else {
                self.objective_gram(s, &gh, &h)
            };
            debug_assert!(
                next_obj <= objective + MONOTONE_SLACK * objective.abs().max(s.yty).max(1.0),
                "coding objective increased from {objective} to {next_obj}"
            );
            objective = next_obj;
            if let Some(hist) = history.as_deref_mut() {
                hist.push(objective);
            }
            if residual <= opts.tol {
                break;
            }
        }
        Ok(CodeSolution {
            h,
            r,
            objective,
            residual,
            iters,
        })
    }

    /// One safeguarded Newton step on the reduced function from `x`.
    ///
    /// The coding objective is piecewise quadratic for the supported
    /// regularizers: fixing which pieces `h` and `r*(h)` lie on gives a
    /// quadratic in the free coordinates of `h`, minimized exactly here. Returns
    /// `None` when the structure is unsupported, the system is singular, or
    /// the candidate does not lower the objective.
    fn newton_step(&self, s: &Sample<'_>, x: &Array1<f64>, obj_x: f64) -> Result<Option<Accepted>> {
        let spec = self.spec;
        let k = spec.k;
        // h side: linear term, curvature and free mask per coordinate
        let (h_curv, h_l1) = match spec.coeff_reg {
            PenaltyDescriptor::Zero => (0.0, 0.0),
            PenaltyDescriptor::SqL2 { weight } => (weight, 0.0),
            PenaltyDescriptor::L1 { weight } => (0.0, weight),
            _ => return Ok(None),
        };
        let mut free = vec![true; k];
        for j in 0..k {
            let xj = x[j];
            free[j] = match spec.coeff_constraint {
                SetDescriptor::All => true,
                SetDescriptor::NonNeg => xj > 0.0,
                SetDescriptor::Box { lo, hi } => xj > lo && xj < hi,
                SetDescriptor::L2Ball { radius } => {
                    if x.dot(x).sqrt() >= radius * (1.0 - 1e-12) {
                        return Ok(None);
                    }
                    true
                }
                _ => return Ok(None),
            } && (h_l1 == 0.0 || xj != 0.0);
        }

        // r side: residual e = y - W x - r*(x) and its curvature weight
        let mut grad;
        let mut hess;
        if s.robust {
            let (r_l1, r_sq) = match spec.outlier_reg {
                PenaltyDescriptor::Zero => (false, 0.0),
                PenaltyDescriptor::L1 { .. } => (true, 0.0),
                PenaltyDescriptor::SqL2 { weight } => (false, weight),
                _ => return Ok(None),
            };
            let (lo, hi) = match spec.outlier_constraint {
                SetDescriptor::All => (f64::NEG_INFINITY, f64::INFINITY),
                SetDescriptor::Box { lo, hi } => (lo, hi),
                SetDescriptor::NonNeg => (0.0, f64::INFINITY),
                _ => return Ok(None),
            };
            let wx = self.w.dot(x);
            let mut r = Array1::zeros(spec.d);
            self.best_outlier(s, &wx, &mut r)?;
            let d = spec.d;
            let mut e = Array1::<f64>::zeros(d);
            let mut weight = Array1::<f64>::zeros(d);
            for i in 0..d {
                e[i] = s.y[i] - wx[i] - r[i];
                let inside = r[i] > lo && r[i] < hi && !(r_l1 && r[i] == 0.0);
                weight[i] = if inside { r_sq / (1.0 + r_sq) } else { 1.0 };
            }
            grad = -self.w.t().dot(&e);
            // W^T diag(weight) W as a low-rank downdate of the Gram matrix
            hess = self.gram.clone();
            for (row, &wi) in self.w.rows().into_iter().zip(weight.iter()) {
                let cut = 1.0 - wi;
                if cut == 0.0 {
                    continue;
                }
                for a in 0..k {
                    let ra = cut * row[a];
                    for b in 0..k {
                        hess[[a, b]] -= ra * row[b];
                    }
                }
            }
        } else {
            grad = self.gram.dot(x) - &s.wty;
            hess = self.gram.clone();
        }
        for j in 0..k {
            grad[j] += h_curv * x[j] + h_l1 * x[j].signum();
            hess[[j, j]] += h_curv;
        }

        let idx: Vec<usize> = (0..k).filter(|&j| free[j]).collect();
        if idx.is_empty() {
            return Ok(None);
        }
        let sub = Array2::from_shape_fn((idx.len(), idx.len()), |(a, b)| hess[[idx[a], idx[b]]]);
        let chol = match Cholesky::factor(sub.view()) {
            Ok(c) => c,
            Err(_) => return Ok(None),
        };
        let mut step = Array1::from_shape_fn(idx.len(), |a| -grad[idx[a]]);
        chol.solve_in_place(step.view_mut());

        let mut cand = x.clone();
        for (a, &j) in idx.iter().enumerate() {
            let v = x[j] + step[a];
            // stay on the sign piece the L1 linearization assumed
            cand[j] = if h_l1 > 0.0 && v * x[j] < 0.0 { 0.0 } else { v };
        }
        if cand.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        project_in_place(&spec.coeff_constraint, cand.view_mut().insert_axis(Axis(1)));
        let g_cand = self.gram.dot(&cand);
        let (r_cand, obj) = if s.robust {
            let wc = self.w.dot(&cand);
            let mut r = Array1::zeros(spec.d);
            self.best_outlier(s, &wc, &mut r)?;
            let obj = self.objective_direct(s, &wc, &cand, &r);
            (r, obj)
        } else {
            (Array1::zeros(0), self.objective_gram(s, &g_cand, &cand))
        };
        if obj < obj_x {
            Ok(Some(Accepted {
                h: cand,
                gh: g_cand,
                r: r_cand,
                objective: obj,
            }))
        } else {
            Ok(None)
        }
    }

    fn run_accelerated(
        &self,
        s: &Sample<'_>,
        h: Array1<f64>,
        r: Array1<f64>,
        opts: SolveOptions,
        mut history: Option<&mut Vec<f64>>,
    ) -> Result<CodeSolution> {
        let (k, d) = (self.spec.k, if s.robust { self.spec.d } else { 0 });
        let lip = self.lip * LIPSCHITZ_SAFETY;
        let step = 1.0 / lip;

        let mut x = h;
        let mut gx = self.gram.dot(&x);
        let mut r_x = if s.robust { r } else { Array1::zeros(0) };
        let mut obj_x = if s.robust {
            let wx = self.w.dot(&x);
            if let Some(hist) = history.as_deref_mut() {
                hist.push(self.objective_direct(s, &wx, &x, &r_x));
            }
            // exact r-step at the start; never increases the objective
            self.best_outlier(s, &wx, &mut r_x)?;
            self.objective_direct(s, &wx, &x, &r_x)
        } else {
            self.objective_gram(s, &gx, &x)
        };
        if let Some(hist) = history.as_deref_mut() {
            hist.push(obj_x);
        }

        let mut z = x.clone();
        let mut gz = gx.clone();
        let mut r_z = r_x.clone();
        let mut u = Array1::<f64>::zeros(k);
        let mut r_u = Array1::<f64>::zeros(d);
        let mut grad = Array1::<f64>::zeros(k);
        let mut wz = Array1::<f64>::zeros(d);
        let mut momentum = 1.0_f64;
        let mut z_is_x = true;
        let mut residual = f64::INFINITY;
        let mut iters = 0;
        while iters < opts.max_iters {
            iters += 1;
            // prox-gradient step on the reduced function at z
            self.h_gradient(s, &gz, &r_z, &mut grad);
            Zip::from(&mut u).and(&z).and(&grad).for_each(|n, &zi, &gi| *n = zi - step * gi);
            self.coeff_prox(u.view_mut(), step)?;
            let gu = self.gram.dot(&u);
            residual = lip * diff_norm(z.view(), u.view());
            let obj_u = if s.robust {
                let wu = self.w.dot(&u);
                self.best_outlier(s, &wu, &mut r_u)?;
                residual = residual.max(diff_norm(r_z.view(), r_u.view()));
                self.objective_direct(s, &wu, &u, &r_u)
            } else {
                self.objective_gram(s, &gu, &u)
            };

            let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            // a step taken from x itself is a plain step, monotone up to rounding
            if obj_u <= obj_x || z_is_x {
                // z = u + (t - 1)/t' (u - x)
                let beta = (momentum - 1.0) / next_momentum;
                Zip::from(&mut z).and(&u).and(&x).for_each(|zi, &ui, &xi| *zi = ui + beta * (ui - xi));
                std::mem::swap(&mut x, &mut u);
                std::mem::swap(&mut r_x, &mut r_u);
                gx = gu;
                obj_x = obj_u.min(obj_x);
                momentum = next_momentum;
                z_is_x = beta == 0.0;
                if z_is_x {
                    gz.assign(&gx);
                    r_z.assign(&r_x);
                } else {
                    gz = self.gram.dot(&z);
                    if s.robust {
                        ndarray::linalg::general_mat_vec_mul(1.0, &self.w, &z, 0.0, &mut wz);
                        self.best_outlier(s, &wz, &mut r_z)?;
                    }
                }
            } else {
                // restart from the last accepted point
                momentum = 1.0;
                z_is_x = true;
                z.assign(&x);
                gz.assign(&gx);
                r_z.assign(&r_x);
            }
            if residual > opts.tol && iters % NEWTON_EVERY == 0 {
                if let Some(acc) = self.newton_step(s, &x, obj_x)? {
                    x = acc.h;
                    gx = acc.gh;
                    r_x = acc.r;
                    obj_x = acc.objective;
                    momentum = 1.0;
                    z_is_x = true;
                    z.assign(&x);
                    gz.assign(&gx);
                    r_z.assign(&r_x);
                }
            }
            if let Some(hist) = history.as_deref_mut() {
                hist.push(obj_x);
            }
            if residual <= opts.tol {
                break;
            }
        }
        Ok(CodeSolution {
            h: x,
            r: if s.robust { r_x } else { Array1::zeros(self.spec.d) },
            objective: obj_x,
            residual,
            iters,
        })
    }
}

fn diff_norm(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Solves the coding problem for one sample against `w` with the plain
/// alternating iteration.
pub fn solve_code(
    y: ArrayView1<f64>,
    w: ArrayView2<f64>,
    spec: &ProblemSpec,
    tol: f64,
    max_iters: usize,
) -> Result<CodeSolution> {
    let opts = SolveOptions::new(tol).max_iters(max_iters).method(CodeMethod::Plain);
    CodeContext::new(w, spec)?.solve(y, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_spec, Formulation, SpecParams};
    use ndarray::{array, Array2};

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm_sq(Array2::eye(3).view()) - 1.0).abs() < 1e-12);
        assert!((spectral_norm_sq(array![[3.0, 0.0], [0.0, 1.0]].view()) - 9.0).abs() < 1e-9);
        assert_eq!(spectral_norm_sq(Array2::zeros((4, 2)).view()), 0.0);
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(tolerance_schedule(0, 0, 10, 0.5, 1e-12), 1.0);
        assert!((tolerance_schedule(1, 0, 10, 1e-3, 1e-12) - 11f64.powf(-0.501)).abs() < 1e-15);
        assert!((tolerance_schedule(1, 0, 10, 1e-3, 1e-12) - 0.30079).abs() < 1e-5);
        assert_eq!(tolerance_schedule(1_000_000, 0, 10, 0.5, 1e-6), 1e-6);
    }

    #[test]
    fn least_squares_on_orthonormal_basis() {
        let spec = make_spec(Formulation::Odl, 3, 2, &SpecParams::new().with("lambda", 0.0)).unwrap();
        let w = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let y = array![0.7, -1.2, 0.0];
        let sol = solve_code(y.view(), w.view(), &spec, 1e-14, 500).unwrap();
        assert!((sol.h[0] - 0.7).abs() < 1e-14 && (sol.h[1] + 1.2).abs() < 1e-14);
        assert!(sol.r.iter().all(|&v| v == 0.0));
        assert!(sol.objective.abs() < 1e-28);
    }

    #[test]
    fn robust_pca_zero_sample() {
        let spec = make_spec(Formulation::Orpca, 3, 2, &SpecParams::new()).unwrap();
        let w = array![[1.0, 0.5], [0.2, 1.0], [0.3, -0.4]];
        let sol = solve_code(Array1::zeros(3).view(), w.view(), &spec, 1e-12, 500).unwrap();
        assert!(sol.h.iter().chain(sol.r.iter()).all(|&v| v == 0.0));
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn zero_dictionary_takes_degenerate_path() {
        let spec = make_spec(Formulation::Orpca, 3, 2, &SpecParams::new().with("lambda2", 0.5)).unwrap();
        let y = array![2.0, -0.1, 0.0];
        let sol = solve_code(y.view(), Array2::zeros((3, 2)).view(), &spec, 1e-8, 10).unwrap();
        assert_eq!(sol.iters, 0);
        assert_eq!(sol.h.to_vec(), vec![0.0, 0.0]);
        assert_eq!(sol.r.to_vec(), vec![1.5, 0.0, 0.0]);
    }

    #[test]
    fn history_is_monotone_and_matches_objective() {
        let spec = make_spec(Formulation::Orpca, 4, 2, &SpecParams::new()).unwrap();
        let w = array![[1.0, 0.5], [0.2, 1.0], [0.3, -0.4], [0.0, 2.0]];
        let y = array![1.0, -2.0, 3.0, 0.5];
        let ctx = CodeContext::new(w.view(), &spec).unwrap();
        for method in [CodeMethod::Plain, CodeMethod::Accelerated] {
            let opts = SolveOptions::new(1e-12).max_iters(5000).method(method);
            let (sol, hist) = ctx.solve_with_history(y.view(), opts).unwrap();
            assert!(hist.windows(2).all(|p| p[1] <= p[0] + 1e-12));
            let recomputed = code_objective(y.view(), w.view(), sol.h.view(), sol.r.view(), &spec);
            assert!((recomputed - sol.objective).abs() <= 1e-12 * recomputed.abs().max(1.0));
        }
    }

    #[test]
    fn methods_agree() {
        let spec = make_spec(Formulation::Onmf, 4, 3, &SpecParams::new().with("lambda", 0.1)).unwrap();
        let w = array![[1.0, 0.9, 0.1], [0.2, 0.3, 0.9], [0.5, 0.6, 0.0], [0.1, 0.0, 0.4]];
        let y = array![1.0, 0.5, -0.3, 2.0];
        let ctx = CodeContext::new(w.view(), &spec).unwrap();
        let plain = ctx.solve(y.view(), SolveOptions::new(1e-12).max_iters(100_000).method(CodeMethod::Plain)).unwrap();
        let fast = ctx.solve(y.view(), SolveOptions::new(1e-12).max_iters(100_000)).unwrap();
        assert!(fast.iters < plain.iters);
        assert!((plain.objective - fast.objective).abs() < 1e-12);
        assert!((&plain.h - &fast.h).iter().all(|e| e.abs() < 1e-9));
    }

    #[test]
    fn rejects_non_finite_sample() {
        let spec = make_spec(Formulation::Odl, 2, 1, &SpecParams::new()).unwrap();
        let w = array![[1.0], [0.0]];
        assert!(solve_code(array![f64::NAN, 0.0].view(), w.view(), &spec, 1e-6, 10).is_err());
    }
}
