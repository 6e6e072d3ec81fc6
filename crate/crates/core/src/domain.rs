//! Core data types, validation, and shared enumerations used by every
//! other module.

use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

/// Exclusion band for target assignment probabilities: each π_A(s) must
/// lie in (ε, 1−ε). Population theory only requires the open interval but
/// gives no number; this is the configured default.
pub const TARGET_PROB_EPS: f64 = 1e-6;

/// Floor below which an estimated variance is considered numerically
/// degenerate. Zero variance is excluded in population but not in a
/// finite sample.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Floor for the ATT/ATU normalizer Ĝ: at or below this the subpopulation
/// is empty for all practical purposes and the estimand is undefined.
pub const G_FLOOR: f64 = 1e-8;

/// Margin keeping estimated correlations strictly inside (−1, 1).
pub const RHO_CLAMP: f64 = 1e-10;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset vectors have mismatched lengths")]
    LengthMismatch,
    #[error("dataset has no observations")]
    EmptyDataset,
    #[error("outcome support is degenerate: y_low must be strictly less than y_high")]
    DegenerateSupport,
    #[error("outcome at index {0} lies outside [y_low, y_high]")]
    OutcomeOutOfSupport(usize),
    #[error("indicator at index {index} has value {value}; expected 0 or 1")]
    BadIndicator { index: usize, value: i64 },
    #[error("stratum {0:?} has every unit in the same assignment arm")]
    DegenerateStratum(String),
    #[error("target probability {value} for stratum {stratum:?} is outside ({eps:e}, 1-{eps:e})", eps = TARGET_PROB_EPS)]
    TargetProbOutOfRange { stratum: String, value: f64 },
    #[error("no target probability supplied for stratum {0:?}")]
    MissingTargetProb(String),
    #[error("this variance estimator needs a per-stratum tau map but none was supplied")]
    MissingTau,
    #[error("tau for stratum index {index} is {value}; must lie in [0, 1]")]
    TauOutOfRange { index: usize, value: f64 },
    #[error("ATT normalizer {0:e} is at or below the floor; effectively no treated units")]
    NoTakers(f64),
    #[error("ATU normalizer {0:e} is at or below the floor; effectively no untreated units")]
    NoUntreated(f64),
    #[error("no variance estimator is defined for the {0} variant")]
    UnsupportedVariant(String),
    #[error("critical-value search failed to converge: {0}")]
    NonConvergence(String),
    #[error("{which} = {value:e} is below the variance floor {floor:e}; the interval scale is unreliable", floor = VARIANCE_FLOOR)]
    DegenerateVariance { which: &'static str, value: f64 },
    #[error("alpha is {0}; must lie in (0, 0.5)")]
    InvalidAlpha(f64),
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("{failed} of {total} replications failed (more than 1%); first failure: {first}")]
    ReplicationFailures {
        failed: usize,
        total: usize,
        first: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Which treatment effect is being bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EstimandKind {
    /// Average treatment effect over the full population.
    Ate,
    /// Average effect on the treated (D = 1).
    Att,
    /// Average effect on the untreated (D = 0).
    Atu,
}

impl std::fmt::Display for EstimandKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimandKind::Ate => write!(f, "ATE"),
            EstimandKind::Att => write!(f, "ATT"),
            EstimandKind::Atu => write!(f, "ATU"),
        }
    }
}

/// Where per-stratum assignment probabilities come from when weighting
/// observations: the realized sample frequencies n_A(s)/n(s), or the
/// design targets π_A(s).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ProbSource {
    SampleFrequency,
    /// Target probabilities indexed by dense stratum id.
    Target(Vec<f64>),
}

impl ProbSource {
    /// Builds a Target source from a label-keyed map, checking coverage
    /// and the (ε, 1−ε) range against the dataset's strata.
    pub fn target_from_labels(map: &HashMap<String, f64>, dataset: &Dataset) -> Result<Self> {
        let mut probs = Vec::with_capacity(dataset.num_strata());
        for label in &dataset.stratum_labels {
            let value = *map
                .get(label)
                .ok_or_else(|| Error::MissingTargetProb(label.clone()))?;
            if !(value > TARGET_PROB_EPS && value < 1.0 - TARGET_PROB_EPS) {
                return Err(Error::TargetProbOutOfRange {
                    stratum: label.clone(),
                    value,
                });
            }
            probs.push(value);
        }
        Ok(ProbSource::Target(probs))
    }

    /// Checks that a Target source covers `num_strata` dense strata with
    /// in-range probabilities. SampleFrequency always passes.
    pub fn validate(&self, num_strata: usize, labels: &[String]) -> Result<()> {
        if let ProbSource::Target(probs) = self {
            for s in 0..num_strata {
                let label = labels
                    .get(s)
                    .cloned()
                    .unwrap_or_else(|| s.to_string());
                match probs.get(s) {
                    None => return Err(Error::MissingTargetProb(label)),
                    Some(&value) => {
                        if !(value > TARGET_PROB_EPS && value < 1.0 - TARGET_PROB_EPS) {
                            return Err(Error::TargetProbOutOfRange {
                                stratum: label,
                                value,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_target(&self) -> bool {
        matches!(self, ProbSource::Target(_))
    }

    /// Short human-readable tag used in reports and table rows.
    pub fn tag(&self) -> &'static str {
        match self {
            ProbSource::SampleFrequency => "sample",
            ProbSource::Target(_) => "target",
        }
    }
}

/// A validated experimental dataset: observed outcome, treatment
/// decision, assignment, and stratum per unit, plus the outcome support.
///
/// Stratum ids in `s` are dense indices into `stratum_labels`; construct
/// through [`Dataset::new`] / [`Dataset::from_labels`] or re-establish the
/// invariants with [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub d: Vec<u8>,
    pub a: Vec<u8>,
    pub s: Vec<usize>,
    /// Original label of each dense stratum id.
    pub stratum_labels: Vec<String>,
    pub y_low: f64,
    pub y_high: f64,
}

impl Dataset {
    /// Builds and validates a dataset whose strata are already integer
    /// ids (they are re-indexed densely in order of first appearance).
    pub fn new(
        y: Vec<f64>,
        d: Vec<u8>,
        a: Vec<u8>,
        s: Vec<usize>,
        y_low: f64,
        y_high: f64,
    ) -> Result<Self> {
        // No label map: every raw id falls back to its stringified
        // form during validation.
        validate_dataset(Dataset {
            y,
            d,
            a,
            s,
            stratum_labels: Vec::new(),
            y_low,
            y_high,
        })
    }

    /// Builds and validates a dataset from arbitrary string stratum
    /// labels.
    pub fn from_labels(
        y: Vec<f64>,
        d: Vec<u8>,
        a: Vec<u8>,
        labels: Vec<String>,
        y_low: f64,
        y_high: f64,
    ) -> Result<Self> {
        let mut label_to_id: HashMap<&str, usize> = HashMap::new();
        let mut dense_labels: Vec<String> = Vec::new();
        let mut s = Vec::with_capacity(labels.len());
        for label in &labels {
            let next = dense_labels.len();
            let id = *label_to_id.entry(label.as_str()).or_insert_with(|| {
                dense_labels.push(label.clone());
                next
            });
            s.push(id);
        }
        validate_dataset(Dataset {
            y,
            d,
            a,
            s,
            stratum_labels: dense_labels,
            y_low,
            y_high,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn num_strata(&self) -> usize {
        self.stratum_labels.len()
    }
}

/// Checks every dataset invariant and re-indexes strata to a dense
/// 0..K−1 range (first-appearance order), retaining the label map.
/// Idempotent: validating a validated dataset returns an identical value.
pub fn validate_dataset(dataset: Dataset) -> Result<Dataset> {
    let Dataset {
        y,
        d,
        a,
        s,
        stratum_labels,
        y_low,
        y_high,
    } = dataset;

    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if d.len() != y.len() || a.len() != y.len() || s.len() != y.len() {
        return Err(Error::LengthMismatch);
    }
    if !(y_low < y_high) {
        return Err(Error::DegenerateSupport);
    }
    for (i, &yi) in y.iter().enumerate() {
        if !yi.is_finite() || yi < y_low || yi > y_high {
            return Err(Error::OutcomeOutOfSupport(i));
        }
    }
    for (i, &di) in d.iter().enumerate() {
        if di > 1 {
            return Err(Error::BadIndicator {
                index: i,
                value: di as i64,
            });
        }
    }
    for (i, &ai) in a.iter().enumerate() {
        if ai > 1 {
            return Err(Error::BadIndicator {
                index: i,
                value: ai as i64,
            });
        }
    }

    // Re-index strata densely in order of first appearance. Labels fall
    // back to the stringified raw id when the provided map does not cover
    // a raw id (e.g. a hand-built struct).
    let mut raw_to_dense: HashMap<usize, usize> = HashMap::new();
    let mut dense_labels: Vec<String> = Vec::new();
    let mut dense_s = Vec::with_capacity(s.len());
    for &raw in &s {
        let next = dense_labels.len();
        let id = *raw_to_dense.entry(raw).or_insert_with(|| {
            let label = stratum_labels
                .get(raw)
                .cloned()
                .unwrap_or_else(|| raw.to_string());
            dense_labels.push(label);
            next
        });
        dense_s.push(id);
    }

    Ok(Dataset {
        y,
        d,
        a,
        s: dense_s,
        stratum_labels: dense_labels,
        y_low,
        y_high,
    })
}

/// Estimated endpoints of an identified set, together with the
/// normalizer and the probability sources that produced them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsEstimate {
    pub kind: EstimandKind,
    pub lower: f64,
    pub upper: f64,
    /// Subpopulation share normalizer: Ĝ for ATT, Ĝ_U for ATU, 1 for ATE.
    pub g_hat: f64,
    pub source_numerator: ProbSource,
    pub source_denominator: ProbSource,
    pub n: usize,
}

/// Joint asymptotic covariance of √n(lower − L, upper − H): variances of
/// the two endpoint estimators and their covariance. For ATT/ATU these
/// are already normalized by Ĝ², so interval slack is sqrt(var)·c/√n for
/// every estimand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovMatrix2 {
    pub var_low: f64,
    pub var_high: f64,
    pub cov: f64,
}

impl CovMatrix2 {
    /// Endpoint correlation, clamped strictly inside (−1, 1) for use in
    /// the bivariate-normal coverage constraints. Returns 0 when either
    /// variance is nonpositive.
    pub fn correlation(&self) -> f64 {
        let denom = (self.var_low * self.var_high).sqrt();
        if !(denom > 0.0) {
            return 0.0;
        }
        (self.cov / denom).clamp(-1.0 + RHO_CLAMP, 1.0 - RHO_CLAMP)
    }
}

/// A confidence interval for the partially identified estimand, covering
/// every point of the identified set with asymptotic probability 1−α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub c_low: f64,
    pub c_high: f64,
}

impl ConfidenceInterval {
    /// Tests H: estimand = v0 at level alpha: rejected iff v0 ∉ CI.
    pub fn rejects(&self, v0: f64) -> bool {
        v0 < self.lower || v0 > self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}
