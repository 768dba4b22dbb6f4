//! Formulation registry: every supported problem is a choice of the
//! dictionary set `C`, coefficient set `H`, outlier set `R` and their
//! regularizers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{invalid, Error, Result};
use crate::prox::{PenaltyDescriptor, SetDescriptor};

/// Latent dimension used when a configuration does not name one.
pub const DEFAULT_K: usize = 49;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    /// Online dictionary learning.
    Odl,
    /// Online structured sparse learning (group-sparse codes).
    Ossl,
    /// Online nonnegative matrix factorization.
    Onmf,
    /// Smooth sparse online dictionary learning.
    Ssodl,
    /// Online robust PCA.
    Orpca,
    /// Online max-norm regularized matrix decomposition.
    Omrmd,
    /// Online robust NMF.
    Ornmf,
}

impl Formulation {
    pub const ALL: [Formulation; 7] = [
        Formulation::Odl,
        Formulation::Ossl,
        Formulation::Onmf,
        Formulation::Ssodl,
        Formulation::Orpca,
        Formulation::Omrmd,
        Formulation::Ornmf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Formulation::Odl => "ODL",
            Formulation::Ossl => "OSSL",
            Formulation::Onmf => "ONMF",
            Formulation::Ssodl => "SSODL",
            Formulation::Orpca => "ORPCA",
            Formulation::Omrmd => "OMRMD",
            Formulation::Ornmf => "ORNMF",
        }
    }

    /// Whether the loss carries an outlier vector.
    pub fn is_robust(self) -> bool {
        matches!(self, Formulation::Orpca | Formulation::Omrmd | Formulation::Ornmf)
    }

    /// Scalar weights this formulation reads from [`SpecParams`].
    pub fn weight_keys(self) -> &'static [&'static str] {
        match self {
            Formulation::Odl | Formulation::Onmf => &["lambda"],
            Formulation::Ossl => &[],
            Formulation::Ssodl | Formulation::Orpca | Formulation::Omrmd => &["lambda1", "lambda2"],
            Formulation::Ornmf => &["lambda", "M", "M_prime"],
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Formulation::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownFormulation(s.to_string()))
    }
}

/// Dictionary regularizer. When `per_sample` is set the effective weight is
/// divided by the number of samples, as in `(lambda1 / 2n) ||W||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DictRegularizer {
    pub penalty: PenaltyDescriptor,
    pub per_sample: bool,
}

/// Named inputs to [`make_spec`].
#[derive(Debug, Clone, Default)]
pub struct SpecParams {
    pub weights: BTreeMap<String, f64>,
    pub groups: Option<Vec<Vec<usize>>>,
    pub group_weights: Option<Vec<f64>>,
    pub laplacian: Option<Array2<f64>>,
}

impl SpecParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.weights.insert(key.to_string(), value);
        self
    }

    pub fn with_groups(mut self, groups: Vec<Vec<usize>>, weights: Vec<f64>) -> Self {
        self.groups = Some(groups);
        self.group_weights = Some(weights);
        self
    }

    pub fn with_laplacian(mut self, l: Array2<f64>) -> Self {
        self.laplacian = Some(l);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub formulation: Formulation,
    pub d: usize,
    pub k: usize,
    pub dict_constraint: SetDescriptor,
    pub coeff_constraint: SetDescriptor,
    pub outlier_constraint: SetDescriptor,
    pub dict_reg: DictRegularizer,
    pub coeff_reg: PenaltyDescriptor,
    pub outlier_reg: PenaltyDescriptor,
    n_samples: Option<usize>,
}

fn weight(
    params: &SpecParams,
    key: &'static str,
    default: Option<f64>,
) -> Result<f64> {
    match params.weights.get(key) {
        Some(&w) if w.is_finite() && w >= 0.0 => Ok(w),
        Some(&w) => Err(invalid(key, format!("{w} must be finite and >= 0"))),
        None => default.ok_or(Error::MissingWeight(key)),
    }
}

fn positive(params: &SpecParams, key: &'static str) -> Result<f64> {
    let w = weight(params, key, None)?;
    if w > 0.0 {
        Ok(w)
    } else {
        Err(invalid(key, "must be > 0"))
    }
}

/// Builds the exact `(C, H, R, psi, phi, varphi)` tuple of a formulation.
///
/// `lambda` (and `lambda1 = lambda2` for ORPCA) default to `1/sqrt(d)`;
/// every other weight must be supplied. Keys the formulation does not use
/// are rejected.
pub fn make_spec(formulation: Formulation, d: usize, k: usize, params: &SpecParams) -> Result<ProblemSpec> {
    if d == 0 {
        return Err(invalid("d", "must be >= 1"));
    }
    if k == 0 {
        return Err(invalid("k", "must be >= 1"));
    }
    let allowed = formulation.weight_keys();
    if let Some(extra) = params.weights.keys().find(|key| !allowed.contains(&key.as_str()))
    {
        return Err(Error::InconsistentSpec {
            formulation: formulation.to_string(),
            reason: format!("weight `{extra}` is not used by this formulation"),
        });
    }
    if formulation != Formulation::Ossl && (params.groups.is_some() || params.group_weights.is_some()) {
        return Err(Error::InconsistentSpec {
            formulation: formulation.to_string(),
            reason: "group structure is only used by OSSL".into(),
        });
    }
    if formulation != Formulation::Ssodl && params.laplacian.is_some() {
        return Err(Error::InconsistentSpec {
            formulation: formulation.to_string(),
            reason: "a quadratic-form matrix is only used by SSODL".into(),
        });
    }

    let default_lambda = 1.0 / (d as f64).sqrt();
    let no_dict_reg = DictRegularizer {
        penalty: PenaltyDescriptor::Zero,
        per_sample: false,
    };
    use PenaltyDescriptor as P;
    use SetDescriptor as S;
    let spec = match formulation {
        Formulation::Odl => ProblemSpec {
            formulation,
            d,
            k,
            dict_constraint: S::L2UnitColumns,
            coeff_constraint: S::All,
            outlier_constraint: S::ZeroSet,
            dict_reg: no_dict_reg,
            coeff_reg: P::L1 {
                weight: weight(params, "lambda", Some(default_lambda))?,
            },
            outlier_reg: P::Zero,
            n_samples: None,
        },
        Formulation::Ossl => {
            let groups = params.groups.clone().ok_or(Error::MissingWeight("groups"))?;
            let weights = params
                .group_weights
                .clone()
                .ok_or(Error::MissingWeight("group_weights"))?;
            ProblemSpec {
                formulation,
                d,
                k,
                dict_constraint: S::All,
                coeff_constraint: S::All,
                outlier_constraint: S::ZeroSet,
                dict_reg: no_dict_reg,
                coeff_reg: P::GroupL2 { groups, weights },
                outlier_reg: P::Zero,
                n_samples: None,
            }
        }
        Formulation::Onmf => ProblemSpec {
            formulation,
            d,
            k,
            dict_constraint: S::L1SimplexColumns,
            coeff_constraint: S::NonNeg,
            outlier_constraint: S::ZeroSet,
            dict_reg: no_dict_reg,
            coeff_reg: P::SqL2 {
                weight: weight(params, "lambda", Some(default_lambda))?,
            },
            outlier_reg: P::Zero,
            n_samples: None,
        },
        Formulation::Ssodl => {
            let matrix = params.laplacian.clone().ok_or(Error::MissingWeight("L"))?;
            ProblemSpec {
                formulation,
                d,
                k,
                dict_constraint: S::L1SimplexColumns,
                coeff_constraint: S::NonNeg,
                outlier_constraint: S::ZeroSet,
                dict_reg: DictRegularizer {
                    penalty: P::QuadraticForm {
                        weight: weight(params, "lambda1", None)?,
                        matrix,
                    },
                    per_sample: false,
                },
                coeff_reg: P::SqL2 {
                    weight: weight(params, "lambda2", None)?,
                },
                outlier_reg: P::Zero,
                n_samples: None,
            }
        }
        Formulation::Orpca => {
            let l1 = weight(params, "lambda1", Some(default_lambda))?;
            let l2 = weight(params, "lambda2", Some(default_lambda))?;
            ProblemSpec {
                formulation,
                d,
                k,
                dict_constraint: S::All,
                coeff_constraint: S::All,
                outlier_constraint: S::All,
                dict_reg: DictRegularizer {
                    penalty: P::SqL2 { weight: l1 },
                    per_sample: true,
                },
                coeff_reg: P::SqL2 { weight: l1 },
                outlier_reg: P::L1 { weight: l2 },
                n_samples: None,
            }
        }
        Formulation::Omrmd => ProblemSpec {
            formulation,
            d,
            k,
            dict_constraint: S::All,
            coeff_constraint: S::L2Ball { radius: 1.0 },
            outlier_constraint: S::All,
            dict_reg: DictRegularizer {
                penalty: P::MaxRowNormSq {
                    weight: weight(params, "lambda1", None)?,
                },
                per_sample: true,
            },
            coeff_reg: P::Zero,
            outlier_reg: P::L1 {
                weight: weight(params, "lambda2", None)?,
            },
            n_samples: None,
        },
        Formulation::Ornmf => {
            let m = positive(params, "M")?;
            let m_prime = positive(params, "M_prime")?;
            ProblemSpec {
                formulation,
                d,
                k,
                dict_constraint: S::NonNegL2UnitColumns,
                coeff_constraint: S::Box { lo: 0.0, hi: m },
                outlier_constraint: S::Box {
                    lo: -m_prime,
                    hi: m_prime,
                },
                dict_reg: no_dict_reg,
                coeff_reg: P::Zero,
                outlier_reg: P::L1 {
                    weight: weight(params, "lambda", Some(default_lambda))?,
                },
                n_samples: None,
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}

impl ProblemSpec {
    /// Number of samples the per-sample dictionary weight is divided by.
    pub fn n_samples(&self) -> Option<usize> {
        self.n_samples
    }

    /// Returns a copy whose dictionary regularizer is resolved for `n` samples.
    pub fn bound_to(&self, n: usize) -> ProblemSpec {
        let mut out = self.clone();
        out.n_samples = Some(n);
        out
    }

    /// The effective dictionary penalty `psi`.
    pub fn dict_penalty(&self) -> Result<PenaltyDescriptor> {
        if !self.dict_reg.per_sample || self.dict_reg.penalty.is_zero() {
            return Ok(self.dict_reg.penalty.clone());
        }
        let n = self.n_samples.ok_or(Error::UnboundSampleCount)? as f64;
        Ok(match &self.dict_reg.penalty {
            PenaltyDescriptor::SqL2 { weight } => PenaltyDescriptor::SqL2 { weight: weight / n },
            PenaltyDescriptor::MaxRowNormSq { weight } => {
                PenaltyDescriptor::MaxRowNormSq { weight: weight / n }
            }
            PenaltyDescriptor::L1 { weight } => PenaltyDescriptor::L1 { weight: weight / n },
            other => {
                return Err(Error::Unsupported(format!(
                    "per-sample scaling of {other:?}"
                )))
            }
        })
    }

    /// Whether the loss is the plain (non-robust) one, i.e. `R = {0}`.
    pub fn outliers_disabled(&self) -> bool {
        matches!(self.outlier_constraint, SetDescriptor::ZeroSet)
    }

    /// Checks that the tuple is exactly the one the formulation prescribes
    /// and that every weight and structure is valid.
    pub fn validate(&self) -> Result<()> {
        use PenaltyDescriptor as P;
        use SetDescriptor as S;
        let fail = |reason: &str| Error::InconsistentSpec {
            formulation: self.formulation.to_string(),
            reason: reason.to_string(),
        };
        if self.d == 0 || self.k == 0 {
            return Err(invalid("d/k", "dimensions must be >= 1"));
        }
        let shape_ok = match self.formulation {
            Formulation::Odl => {
                self.dict_constraint == S::L2UnitColumns
                    && self.coeff_constraint == S::All
                    && self.outlier_constraint == S::ZeroSet
                    && self.dict_reg.penalty == P::Zero
                    && matches!(self.coeff_reg, P::L1 { .. })
                    && self.outlier_reg == P::Zero
            }
            Formulation::Ossl => {
                self.dict_constraint == S::All
                    && self.coeff_constraint == S::All
                    && self.outlier_constraint == S::ZeroSet
                    && self.dict_reg.penalty == P::Zero
                    && matches!(self.coeff_reg, P::GroupL2 { .. })
                    && self.outlier_reg == P::Zero
            }
            Formulation::Onmf => {
                self.dict_constraint == S::L1SimplexColumns
                    && self.coeff_constraint == S::NonNeg
                    && self.outlier_constraint == S::ZeroSet
                    && self.dict_reg.penalty == P::Zero
                    && matches!(self.coeff_reg, P::SqL2 { .. })
                    && self.outlier_reg == P::Zero
            }
            Formulation::Ssodl => {
                self.dict_constraint == S::L1SimplexColumns
                    && self.coeff_constraint == S::NonNeg
                    && self.outlier_constraint == S::ZeroSet
                    && matches!(self.dict_reg.penalty, P::QuadraticForm { .. })
                    && !self.dict_reg.per_sample
                    && matches!(self.coeff_reg, P::SqL2 { .. })
                    && self.outlier_reg == P::Zero
            }
            Formulation::Orpca => {
                let tied = match (&self.dict_reg.penalty, &self.coeff_reg) {
                    (P::SqL2 { weight: a }, P::SqL2 { weight: b }) => a == b,
                    _ => false,
                };
                self.dict_constraint == S::All
                    && self.coeff_constraint == S::All
                    && self.outlier_constraint == S::All
                    && tied
                    && self.dict_reg.per_sample
                    && matches!(self.outlier_reg, P::L1 { .. })
            }
            Formulation::Omrmd => {
                self.dict_constraint == S::All
                    && self.coeff_constraint == S::L2Ball { radius: 1.0 }
                    && self.outlier_constraint == S::All
                    && matches!(self.dict_reg.penalty, P::MaxRowNormSq { .. })
                    && self.dict_reg.per_sample
                    && self.coeff_reg == P::Zero
                    && matches!(self.outlier_reg, P::L1 { .. })
            }
            Formulation::Ornmf => {
                let boxes = match (self.coeff_constraint, self.outlier_constraint) {
                    (S::Box { lo: 0.0, hi: m }, S::Box { lo, hi }) => m > 0.0 && hi > 0.0 && lo == -hi,
                    _ => false,
                };
                self.dict_constraint == S::NonNegL2UnitColumns
                    && boxes
                    && self.dict_reg.penalty == P::Zero
                    && self.coeff_reg == P::Zero
                    && matches!(self.outlier_reg, P::L1 { .. })
            }
        };
        if !shape_ok {
            return Err(fail("constraint sets or regularizers differ from the formulation"));
        }
        for set in [&self.dict_constraint, &self.coeff_constraint, &self.outlier_constraint] {
            set.validate()?;
        }
        self.dict_reg.penalty.validate(self.d)?;
        self.coeff_reg.validate(self.k)?;
        self.outlier_reg.validate(self.d)?;
        Ok(())
    }
}
