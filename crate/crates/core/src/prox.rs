//! Proximal operators and Euclidean projections for every regularizer and
//! constraint set used by the supported formulations.
//!
//! Everything operates on 2-D arrays. A vector is handled as a single
//! column, so "column" sets (unit-norm columns, simplex columns) applied to
//! a coefficient or outlier vector act on the whole vector.
//!
//! Conventions for penalty weights:
//!
//! | kind            | value                              |
//! |-----------------|------------------------------------|
//! | `L1`            | `w * sum |x|`                      |
//! | `SqL2`          | `(w/2) * ||x||^2`                  |
//! | `GroupL2`       | `sum_j w_j * ||x_{g_j}||` per column|
//! | `MaxRowNormSq`  | `(w/2) * max_i ||X_{i,:}||^2`      |
//! | `QuadraticForm` | `(w/2) * tr(X^T L X)`              |

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};

use crate::error::{invalid, Error, Result};
use crate::linalg::Cholesky;
use crate::problem::ProblemSpec;

/// Douglas-Rachford stopping residual.
pub const SPLITTING_TOL: f64 = 1e-10;
/// Douglas-Rachford iteration cap.
pub const SPLITTING_MAX_ITERS: usize = 500;
const ROW_THRESHOLD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyDescriptor {
    Zero,
    L1 { weight: f64 },
    SqL2 { weight: f64 },
    GroupL2 { groups: Vec<Vec<usize>>, weights: Vec<f64> },
    MaxRowNormSq { weight: f64 },
    QuadraticForm { weight: f64, matrix: Array2<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SetDescriptor {
    All,
    NonNeg,
    Box { lo: f64, hi: f64 },
    /// Ball in the Euclidean (Frobenius for matrices) norm.
    L2Ball { radius: f64 },
    /// Every column has Euclidean norm at most one.
    L2UnitColumns,
    NonNegL2UnitColumns,
    /// Every column lies on the probability simplex.
    L1SimplexColumns,
    ZeroSet,
}

impl PenaltyDescriptor {
    pub fn is_zero(&self) -> bool {
        match self {
            PenaltyDescriptor::Zero => true,
            PenaltyDescriptor::L1 { weight }
            | PenaltyDescriptor::SqL2 { weight }
            | PenaltyDescriptor::MaxRowNormSq { weight }
            | PenaltyDescriptor::QuadraticForm { weight, .. } => *weight == 0.0,
            PenaltyDescriptor::GroupL2 { weights, .. } => weights.iter().all(|w| *w == 0.0),
        }
    }

    /// Checks weights and structure for inputs with `rows` rows.
    pub fn validate(&self, rows: usize) -> Result<()> {
        let check = |w: f64| {
            if w.is_finite() && w >= 0.0 {
                Ok(())
            } else {
                Err(invalid("weight", format!("{w} must be finite and >= 0")))
            }
        };
        match self {
            PenaltyDescriptor::Zero => Ok(()),
            PenaltyDescriptor::L1 { weight }
            | PenaltyDescriptor::SqL2 { weight }
            | PenaltyDescriptor::MaxRowNormSq { weight } => check(*weight),
            PenaltyDescriptor::GroupL2 { groups, weights } => {
                if groups.len() != weights.len() {
                    return Err(invalid(
                        "group_weights",
                        format!("{} weights for {} groups", weights.len(), groups.len()),
                    ));
                }
                weights.iter().try_for_each(|w| check(*w))?;
                validate_partition(groups, rows)
            }
            PenaltyDescriptor::QuadraticForm { weight, matrix } => {
                check(*weight)?;
                validate_psd(matrix.view(), rows)
            }
        }
    }

    pub fn value(&self, x: ArrayView2<f64>) -> f64 {
        match self {
            PenaltyDescriptor::Zero => 0.0,
            PenaltyDescriptor::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            PenaltyDescriptor::SqL2 { weight } => {
                0.5 * weight * x.iter().map(|v| v * v).sum::<f64>()
            }
            PenaltyDescriptor::GroupL2 { groups, weights } => x
                .axis_iter(Axis(1))
                .map(|col| {
                    groups
                        .iter()
                        .zip(weights)
                        .map(|(g, w)| w * g.iter().map(|&i| col[i] * col[i]).sum::<f64>().sqrt())
                        .sum::<f64>()
                })
                .sum(),
            PenaltyDescriptor::MaxRowNormSq { weight } => {
                let max_sq = x
                    .axis_iter(Axis(0))
                    .map(|row| row.dot(&row))
                    .fold(0.0_f64, f64::max);
                0.5 * weight * max_sq
            }
            PenaltyDescriptor::QuadraticForm { weight, matrix } => {
                let lx = matrix.dot(&x);
                0.5 * weight * Zip::from(&x).and(&lx).fold(0.0, |acc, a, b| acc + a * b)
            }
        }
    }

    pub fn value_vec(&self, x: ArrayView1<f64>) -> f64 {
        self.value(x.insert_axis(Axis(1)))
    }
}

impl SetDescriptor {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SetDescriptor::Box { lo, hi } if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() => {
                Err(invalid("box", format!("[{lo}, {hi}] is empty or unbounded")))
            }
            SetDescriptor::L2Ball { radius } if !(radius >= 0.0) || !radius.is_finite() => {
                Err(invalid("radius", format!("{radius} must be finite and >= 0")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_all(&self) -> bool {
        matches!(self, SetDescriptor::All)
    }

    /// Whether `x` equals its own projection to within `tol` (sup norm).
    pub fn contains(&self, x: ArrayView2<f64>, tol: f64) -> bool {
        self.distance(x) <= tol
    }

    /// Sup-norm distance between `x` and its projection.
    pub fn distance(&self, x: ArrayView2<f64>) -> f64 {
        let mut p = x.to_owned();
        project_in_place(self, p.view_mut());
        Zip::from(&p)
            .and(&x)
            .fold(0.0_f64, |acc, a, b| acc.max((a - b).abs()))
    }
}

fn validate_partition(groups: &[Vec<usize>], rows: usize) -> Result<()> {
    let mut seen = vec![false; rows];
    for g in groups {
        if g.is_empty() {
            return Err(invalid("groups", "empty group"));
        }
        for &i in g {
            if i >= rows {
                return Err(invalid("groups", format!("index {i} outside 0..{rows}")));
            }
            if seen[i] {
                return Err(invalid("groups", format!("index {i} appears in two groups")));
            }
            seen[i] = true;
        }
    }
    if let Some(miss) = seen.iter().position(|s| !s) {
        return Err(invalid("groups", format!("index {miss} is not covered")));
    }
    Ok(())
}

fn validate_psd(m: ArrayView2<f64>, rows: usize) -> Result<()> {
    if m.dim() != (rows, rows) {
        return Err(Error::Shape(format!(
            "quadratic-form matrix is {:?}, expected {rows}x{rows}",
            m.dim()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quadratic-form matrix"));
    }
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    for i in 0..rows {
        for j in 0..i {
            if (m[[i, j]] - m[[j, i]]).abs() > 1e-12 * scale {
                return Err(invalid("L", "matrix is not symmetric"));
            }
        }
    }
    // PSD iff L + eps*I is positive definite for every eps > 0
    let mut shifted = m.to_owned();
    for i in 0..rows {
        shifted[[i, i]] += 1e-10 * scale;
    }
    Cholesky::factor(shifted.view())
        .map(|_| ())
        .map_err(|_| invalid("L", "matrix is not positive semidefinite"))
}

fn ensure_finite(v: ArrayView2<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("proximal input"))
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// projections

/// Euclidean projection onto `set`, returning a new array.
pub fn project_set(set: &SetDescriptor, v: ArrayView2<f64>) -> Result<Array2<f64>> {
    set.validate()?;
    ensure_finite(v)?;
    let mut out = v.to_owned();
    project_in_place(set, out.view_mut());
    Ok(out)
}

pub fn project_set_vec(set: &SetDescriptor, v: ArrayView1<f64>) -> Result<Array1<f64>> {
    set.validate()?;
    ensure_finite(v.insert_axis(Axis(1)))?;
    let mut out = v.to_owned();
    project_in_place(set, out.view_mut().insert_axis(Axis(1)));
    Ok(out)
}

/// In-place projection. `set` is assumed valid and the input finite.
pub fn project_in_place(set: &SetDescriptor, mut x: ArrayViewMut2<f64>) {
    match *set {
        SetDescriptor::All => {}
        SetDescriptor::NonNeg => x.mapv_inplace(|v| v.max(0.0)),
        SetDescriptor::Box { lo, hi } => x.mapv_inplace(|v| v.clamp(lo, hi)),
        SetDescriptor::ZeroSet => x.fill(0.0),
        SetDescriptor::L2Ball { radius } => {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let s = radius / norm;
                x.mapv_inplace(|v| v * s);
            }
        }
        SetDescriptor::L2UnitColumns => {
            for col in x.axis_iter_mut(Axis(1)) {
                project_unit_ball(col);
            }
        }
        SetDescriptor::NonNegL2UnitColumns => {
            for mut col in x.axis_iter_mut(Axis(1)) {
                col.mapv_inplace(|v| v.max(0.0));
                project_unit_ball(col);
            }
        }
        SetDescriptor::L1SimplexColumns => {
            let mut buf = Vec::with_capacity(x.nrows());
            for col in x.axis_iter_mut(Axis(1)) {
                project_simplex(col, &mut buf);
            }
        }
    }
}

fn project_unit_ball(mut col: ArrayViewMut1<f64>) {
    let norm = col.dot(&col).sqrt();
    if norm > 1.0 {
        col.mapv_inplace(|v| v / norm);
    }
}

/// Sort-based projection onto `{x >= 0, sum x = 1}`.
fn project_simplex(mut col: ArrayViewMut1<f64>, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(col.iter().copied());
    buf.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in buf.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    col.mapv_inplace(|v| (v - theta).max(0.0));
}

// ---------------------------------------------------------------------------
// proximal operators

/// `argmin_x p(x) + ||x - v||^2 / (2 * scale)`.
pub fn prox_penalty(p: &PenaltyDescriptor, scale: f64, v: ArrayView2<f64>) -> Result<Array2<f64>> {
    ensure_finite(v)?;
    if !(scale > 0.0) {
        return Err(invalid("scale", format!("{scale} must be > 0")));
    }
    let mut out = v.to_owned();
    prox_in_place(p, scale, out.view_mut())?;
    Ok(out)
}

pub fn prox_penalty_vec(
    p: &PenaltyDescriptor,
    scale: f64,
    v: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let out = prox_penalty(p, scale, v.insert_axis(Axis(1)))?;
    Ok(out.remove_axis(Axis(1)))
}

/// In-place proximal step. Inputs are assumed finite and `scale > 0`.
pub fn prox_in_place(p: &PenaltyDescriptor, scale: f64, mut x: ArrayViewMut2<f64>) -> Result<()> {
    match p {
        PenaltyDescriptor::Zero => {}
        PenaltyDescriptor::L1 { weight } => {
            let t = scale * weight;
            x.mapv_inplace(|v| soft_threshold(v, t));
        }
        PenaltyDescriptor::SqL2 { weight } => {
            let s = 1.0 / (1.0 + scale * weight);
            x.mapv_inplace(|v| v * s);
        }
        PenaltyDescriptor::GroupL2 { groups, weights } => {
            for mut col in x.axis_iter_mut(Axis(1)) {
                for (g, w) in groups.iter().zip(weights) {
                    let norm = g.iter().map(|&i| col[i] * col[i]).sum::<f64>().sqrt();
                    let t = scale * w;
                    let factor = if norm > t { 1.0 - t / norm } else { 0.0 };
                    for &i in g {
                        col[i] *= factor;
                    }
                }
            }
        }
        PenaltyDescriptor::MaxRowNormSq { weight } => prox_max_row_norm_sq(scale * weight, x),
        PenaltyDescriptor::QuadraticForm { weight, matrix } => {
            let solver = QuadraticProx::new(matrix.view(), scale * weight)?;
            solver.apply(x);
        }
    }
    Ok(())
}

/// Prox of `(c/2) * max_i ||x_i||^2` (rows `x_i`): every row is clipped to a
/// common radius `t`, where `t` solves `c*t = sum_i (||v_i|| - t)_+`.
fn prox_max_row_norm_sq(c: f64, mut x: ArrayViewMut2<f64>) {
    if c == 0.0 {
        return;
    }
    let norms: Vec<f64> = x.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).collect();
    let top = norms.iter().copied().fold(0.0_f64, f64::max);
    if top == 0.0 {
        return;
    }
    let excess = |t: f64| c * t - norms.iter().map(|n| (n - t).max(0.0)).sum::<f64>();
    // excess is strictly increasing, negative at 0 and positive at `top`
    let (mut lo, mut hi) = (0.0, top);
    while hi - lo > ROW_THRESHOLD_TOL * top {
        let mid = 0.5 * (lo + hi);
        if excess(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // the root is linear on the bracketed piece; resolve it exactly
    let mid = 0.5 * (lo + hi);
    let (mut sum, mut count) = (0.0, 0usize);
    for &n in &norms {
        if n > mid {
            sum += n;
            count += 1;
        }
    }
    let mut t = sum / (c + count as f64);
    if !(t >= lo - ROW_THRESHOLD_TOL * top && t <= hi + ROW_THRESHOLD_TOL * top) {
        t = mid;
    }
    for (mut row, &n) in x.axis_iter_mut(Axis(0)).zip(&norms) {
        if n > t {
            let s = t / n;
            row.mapv_inplace(|v| v * s);
        }
    }
}

/// Solves `(I + c L) X = V` column by column.
struct QuadraticProx {
    chol: Option<Cholesky>,
}

impl QuadraticProx {
    fn new(l: ArrayView2<f64>, c: f64) -> Result<Self> {
        if c == 0.0 {
            return Ok(QuadraticProx { chol: None });
        }
        let mut a = l.to_owned() * c;
        for i in 0..a.nrows() {
            a[[i, i]] += 1.0;
        }
        Ok(QuadraticProx {
            chol: Some(Cholesky::factor(a.view())?),
        })
    }

    fn apply(&self, mut x: ArrayViewMut2<f64>) {
        if let Some(chol) = &self.chol {
            for col in x.axis_iter_mut(Axis(1)) {
                chol.solve_in_place(col);
            }
        }
    }
}

/// `argmin_x p(x) + delta_S(x) + ||x - v||^2 / (2 * scale)`.
///
/// Closed forms are used whenever the pair separates: a zero penalty is a
/// projection, an unconstrained set is a plain prox, a squared norm merges
/// with the quadratic, and coordinatewise penalties commute with
/// coordinatewise sets. Every other pair goes through Douglas-Rachford.
pub fn prox_composite(
    p: &PenaltyDescriptor,
    set: &SetDescriptor,
    scale: f64,
    v: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    ensure_finite(v)?;
    if !(scale > 0.0) {
        return Err(invalid("scale", format!("{scale} must be > 0")));
    }
    let mut out = v.to_owned();
    prox_composite_in_place(p, set, scale, out.view_mut())?;
    Ok(out)
}

pub fn prox_composite_vec(
    p: &PenaltyDescriptor,
    set: &SetDescriptor,
    scale: f64,
    v: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    Ok(prox_composite(p, set, scale, v.insert_axis(Axis(1)))?.remove_axis(Axis(1)))
}

/// Whether `prox_composite` has a closed form for this pair.
pub fn composite_is_closed_form(p: &PenaltyDescriptor, set: &SetDescriptor) -> bool {
    use PenaltyDescriptor as P;
    use SetDescriptor as S;
    if p.is_zero() || set.is_all() || matches!(set, S::ZeroSet) {
        return true;
    }
    match p {
        P::SqL2 { .. } => true,
        P::L1 { .. } => matches!(set, S::NonNeg | S::Box { .. }),
        _ => false,
    }
}

pub fn prox_composite_in_place(
    p: &PenaltyDescriptor,
    set: &SetDescriptor,
    scale: f64,
    mut x: ArrayViewMut2<f64>,
) -> Result<()> {
    if composite_is_closed_form(p, set) {
        prox_in_place(p, scale, x.view_mut())?;
        project_in_place(set, x);
        return Ok(());
    }
    let out = douglas_rachford(p, set, scale, x.view(), SPLITTING_TOL, SPLITTING_MAX_ITERS)?;
    x.assign(&out);
    Ok(())
}

/// Douglas-Rachford on `f(x) = scale*p(x) + ||x - v||^2/2` and `g = delta_S`,
/// unit step and unit relaxation. Returns the (feasible) projected iterate.
pub fn douglas_rachford(
    p: &PenaltyDescriptor,
    set: &SetDescriptor,
    scale: f64,
    v: ArrayView2<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<Array2<f64>> {
    // prox_f(z) = prox_{(scale/2) p}((v + z) / 2)
    let half = 0.5 * scale;
    let quad = match p {
        PenaltyDescriptor::QuadraticForm { weight, matrix } => {
            Some(QuadraticProx::new(matrix.view(), half * weight)?)
        }
        _ => None,
    };
    let mut z = v.to_owned();
    let mut x = Array2::<f64>::zeros(v.raw_dim());
    let mut y = Array2::<f64>::zeros(v.raw_dim());
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        Zip::from(&mut x)
            .and(&v)
            .and(&z)
            .for_each(|xi, &vi, &zi| *xi = 0.5 * (vi + zi));
        match &quad {
            Some(q) => q.apply(x.view_mut()),
            None => prox_in_place(p, half, x.view_mut())?,
        }
        Zip::from(&mut y)
            .and(&x)
            .and(&z)
            .for_each(|yi, &xi, &zi| *yi = 2.0 * xi - zi);
        project_in_place(set, y.view_mut());
        let mut sq = 0.0;
        Zip::from(&mut z)
            .and(&x)
            .and(&y)
            .for_each(|zi, &xi, &yi| {
                let d = yi - xi;
                *zi += d;
                sq += d * d;
            });
        let scale_ref = x.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
        residual = sq.sqrt() / scale_ref;
        if residual <= tol {
            return Ok(y);
        }
    }
    Err(Error::SplittingStalled {
        residual,
        iters: max_iters,
    })
}

/// `argmin_W psi(W) + delta_C(W) + ||W - v||^2 / (2 eta)` for the spec's
/// dictionary regularizer and constraint set.
pub fn prox_dictionary(spec: &ProblemSpec, eta: f64, v: ArrayView2<f64>) -> Result<Array2<f64>> {
    ensure_finite(v)?;
    let mut out = v.to_owned();
    prox_dictionary_in_place(spec, eta, out.view_mut())?;
    Ok(out)
}

/// In-place [`prox_dictionary`]; `x` is assumed finite.
pub fn prox_dictionary_in_place(spec: &ProblemSpec, eta: f64, x: ArrayViewMut2<f64>) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(invalid("eta", format!("{eta} must be > 0")));
    }
    if x.dim() != (spec.d, spec.k) {
        return Err(Error::Shape(format!(
            "dictionary is {:?}, spec expects ({}, {})",
            x.dim(),
            spec.d,
            spec.k
        )));
    }
    let psi = spec.dict_penalty()?;
    prox_composite_in_place(&psi, &spec.dict_constraint, eta, x)
}
