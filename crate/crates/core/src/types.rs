use ndarray::{Array2, ArrayView1, ArrayView2, ShapeBuilder};

use crate::error::{invalid, Error, Result};
use crate::problem::ProblemSpec;

/// `d x n` sample matrix stored column-major, so each sample is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Array2<f64>,
    name: String,
}

impl Dataset {
    pub fn new(values: Array2<f64>, name: impl Into<String>) -> Result<Self> {
        let (d, n) = values.dim();
        if d == 0 || n == 0 {
            return Err(invalid("dataset", format!("shape {d}x{n} is empty")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        let values = if values.t().is_standard_layout() {
            values
        } else {
            let mut cm = Array2::zeros((d, n).f());
            cm.assign(&values);
            cm
        };
        Ok(Dataset {
            values,
            name: name.into(),
        })
    }

    pub fn d(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn sample(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.column(i)
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Solver-owned dictionary bookkeeping: current iterate plus the outer anchor
/// and its full gradient.
#[derive(Debug, Clone)]
pub struct DictionaryState {
    pub w: Array2<f64>,
    pub anchor_w: Array2<f64>,
    pub anchor_grad: Array2<f64>,
    pub outer_index: usize,
    pub inner_index: usize,
}

impl DictionaryState {
    pub fn new(w: Array2<f64>) -> Self {
        DictionaryState {
            anchor_w: w.clone(),
            anchor_grad: Array2::zeros(w.raw_dim()),
            w,
            outer_index: 0,
            inner_index: 0,
        }
    }

    /// Both `w` and `anchor_w` are fixed points of the projection onto `C`.
    pub fn is_feasible(&self, spec: &ProblemSpec, tol: f64) -> bool {
        self.w.dim() == self.anchor_grad.dim()
            && spec.dict_constraint.contains(self.w.view(), tol)
            && spec.dict_constraint.contains(self.anchor_w.view(), tol)
    }
}

/// One logged measurement. `objective` and `grad_map_norm_sq` are only
/// present on evaluation steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub data_passes: f64,
    pub wall_time_s: f64,
    pub objective: Option<f64>,
    pub grad_map_norm_sq: Option<f64>,
    pub ev: Option<f64>,
}

/// Append-only destination for trace records.
pub trait TraceSink {
    fn record(&mut self, rec: TraceRecord);
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: TraceRecord) {
        self.push(rec);
    }
}

/// Discards every record.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _rec: TraceRecord) {}
}

impl<S: TraceSink + ?Sized> TraceSink for &mut S {
    fn record(&mut self, rec: TraceRecord) {
        (**self).record(rec);
    }
}

/// Checks the monotonicity invariants of a trace.
pub fn trace_is_monotone(trace: &[TraceRecord]) -> bool {
    trace.windows(2).all(|w| {
        w[1].data_passes >= w[0].data_passes && w[1].wall_time_s >= w[0].wall_time_s
    })
}
