//! Fitting a synthetic comparison path to a treated unit and measuring fit.
//!
//! Given donor weights (from [`crate::solver`]) and a validated study
//! ([`crate::panel::ValidatedStudy`]), this module produces the synthetic
//! outcome path, the per-period gaps (actual minus synthetic), and the
//! pre/post root-mean-squared-prediction-error summary used everywhere
//! downstream (placebo ranking, permutation inference, robustness checks).

use std::ops::Range;

use thiserror::Error;

use crate::panel::ValidatedStudy;
use crate::solver::WeightSolution;

/// Below this root-mean-squared error a fit is treated as numerically exact.
///
/// The post/pre RMSPE ratio degenerates when the denominator is an exact
/// (floating-point-level) zero; the floor decides when the sentinel
/// conventions of [`rmspe_ratio`] kick in.
pub const RMSPE_FLOOR: f64 = 1e-12;

/// Errors produced while fitting or summarising a synthetic path.
#[derive(Debug, Error)]
pub enum EstimatorError {
    /// The weight vector length does not match the donor pool.
    #[error("weight vector has {found} entries but the donor pool has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    /// An RMSPE was requested over a span containing no periods.
    #[error("RMSPE requested over an empty period range")]
    EmptyRange,
    /// A named comparator is not in the validated donor pool.
    #[error("unit '{unit}' is not in the donor pool")]
    UnknownDonor { unit: String },
}

/// A fitted synthetic comparison for one unit.
///
/// All paths cover every period of the study window in time order
/// (pre-intervention periods first, then post-intervention periods).
#[derive(Debug, Clone, PartialEq)]
pub struct SCFit {
    /// Unit the synthetic path is built for (the study's treated unit).
    pub unit: String,
    /// Donor weights that generated the path, with solver diagnostics.
    pub weights: WeightSolution,
    /// Synthetic outcome for every period in the study window.
    pub synthetic: Vec<f64>,
    /// Actual minus synthetic outcome for every period in the study window.
    pub gaps: Vec<f64>,
    /// Root mean squared gap over pre-intervention periods.
    pub pre_rmspe: f64,
    /// Root mean squared gap over post-intervention periods.
    pub post_rmspe: f64,
    /// Post/pre RMSPE ratio with the conventions of [`rmspe_ratio`].
    pub ratio: f64,
}

impl SCFit {
    /// Mean squared prediction error over the pre-intervention window.
    pub fn pre_mspe(&self) -> f64 {
        self.pre_rmspe * self.pre_rmspe
    }
}

/// Root mean squared value of `gaps` over `range`.
///
/// Returns [`EstimatorError::EmptyRange`] when the range selects no valid
/// entries (empty, or reaching past the end of `gaps`).
pub fn rmspe(gaps: &[f64], range: Range<usize>) -> Result<f64, EstimatorError> {
    if range.start >= range.end || range.end > gaps.len() {
        return Err(EstimatorError::EmptyRange);
    }
    let n = range.len() as f64;
    let sum_sq: f64 = gaps[range].iter().map(|g| g * g).sum();
    Ok((sum_sq / n).sqrt())
}

/// Post/pre RMSPE ratio with degenerate-fit conventions.
///
/// * Both sides at least [`RMSPE_FLOOR`]: the plain quotient `post / pre`.
/// * Pre below the floor, post at or above it: positive infinity — an exact
///   pre-period fit followed by any real post-period deviation is the most
///   extreme outcome a ratio ranking can express.
/// * Both below the floor: `1.0` — an exact fit throughout carries no
///   evidence in either direction.
pub fn rmspe_ratio(pre_rmspe: f64, post_rmspe: f64) -> f64 {
    if pre_rmspe >= RMSPE_FLOOR {
        post_rmspe / pre_rmspe
    } else if post_rmspe >= RMSPE_FLOOR {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Per-period synthetic value: the weighted sum of donor outcomes.
///
/// Terms are accumulated in sorted value order, so reordering the donor pool
/// (with weights permuted identically) reproduces the same floating-point
/// result bit for bit.
fn weighted_donor_value(
    study: &ValidatedStudy,
    donor_idx: &[usize],
    weights: &[f64],
    time_idx: usize,
) -> f64 {
    let mut terms: Vec<f64> = donor_idx
        .iter()
        .zip(weights)
        .map(|(&d, &w)| w * study.outcome(d, time_idx))
        .collect();
    terms.sort_by(|a, b| a.partial_cmp(b).expect("donor outcomes are finite"));
    terms.iter().sum()
}

fn fit_with_weight_vector(
    study: &ValidatedStudy,
    weights: WeightSolution,
) -> Result<SCFit, EstimatorError> {
    let n_donors = study.donors().len();
    if weights.w.len() != n_donors {
        return Err(EstimatorError::DimensionMismatch {
            expected: n_donors,
            found: weights.w.len(),
        });
    }
    let n_periods = study.dataset().times().len();
    let treated_idx = study.treated_idx();
    let donor_idx = study.donor_indices();
    let mut synthetic = Vec::with_capacity(n_periods);
    let mut gaps = Vec::with_capacity(n_periods);
    for t in 0..n_periods {
        let s = weighted_donor_value(study, &donor_idx, &weights.w, t);
        synthetic.push(s);
        gaps.push(study.outcome(treated_idx, t) - s);
    }
    let pre_rmspe = rmspe(&gaps, study.pre_range())?;
    let post_rmspe = rmspe(&gaps, study.post_range())?;
    let ratio = rmspe_ratio(pre_rmspe, post_rmspe);
    Ok(SCFit {
        unit: study.treated().to_owned(),
        weights,
        synthetic,
        gaps,
        pre_rmspe,
        post_rmspe,
        ratio,
    })
}

/// Build the synthetic path, gaps, and RMSPE summary for the treated unit.
///
/// `weights` must assign one weight per retained donor, in donor-pool order.
pub fn fit(study: &ValidatedStudy, weights: &WeightSolution) -> Result<SCFit, EstimatorError> {
    fit_with_weight_vector(study, weights.clone())
}

/// Fit using a single named comparator at weight one.
///
/// This is the classical one-to-one comparison expressed in the same terms
/// as a weighted fit: the "synthetic" path is the comparator's own outcome
/// path, so gap and RMSPE summaries stay directly comparable.
pub fn single_comparator_fit(
    study: &ValidatedStudy,
    comparator: &str,
) -> Result<SCFit, EstimatorError> {
    let position = study
        .donors()
        .iter()
        .position(|name| name == comparator)
        .ok_or_else(|| EstimatorError::UnknownDonor {
            unit: comparator.to_owned(),
        })?;
    let mut w = vec![0.0; study.donors().len()];
    w[position] = 1.0;
    let weights = WeightSolution {
        w,
        objective: f64::NAN,
        iterations: 0,
        converged: true,
    };
    let mut fitted = fit_with_weight_vector(study, weights)?;
    // A pinned indicator weight has no optimisation objective; report the
    // realised pre-period distance instead so the field stays meaningful.
    fitted.weights.objective = fitted.pre_rmspe * (study.n_pre() as f64).sqrt();
    Ok(fitted)
}
