//! In-time placebo and leave-one-out sensitivity harnesses.
//!
//! Two complementary checks on a fitted study: pretend the intervention
//! happened earlier than it did (a real effect should not appear before the
//! true intervention), and drop influential donors one at a time (the
//! estimated effect should not hinge on a single comparison unit).

use std::collections::HashSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::estimator::{fit, EstimatorError, SCFit};
use crate::panel::{validate, PanelError, ValidatedStudy};
use crate::solver::{solve_study, SolverError};

/// Donors at or below this weight are skipped by [`leave_one_out`].
///
/// The solver clamps weights below 1e-12 to exact zero; this threshold sits
/// far above that level so refits are only run for donors that genuinely
/// contribute to the synthetic path.
pub const LOO_WEIGHT_THRESHOLD: f64 = 1e-6;

/// Errors produced by the sensitivity harnesses.
#[derive(Debug, Error)]
pub enum RobustnessError {
    /// The placebo intervention time does not precede the actual one.
    #[error(
        "placebo intervention time {placebo_t0} is not before the actual intervention time {t0}"
    )]
    PlaceboTooLate { placebo_t0: i32, t0: i32 },
    /// Re-validating a modified study failed.
    #[error(transparent)]
    Panel(#[from] PanelError),
    /// Solving weights failed.
    #[error(transparent)]
    Solver(#[from] SolverError),
    /// Fitting a synthetic path failed.
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    /// A leave-one-out refit failed; the excluded donor is identified.
    #[error("leave-one-out refit excluding '{unit}' failed: {detail}")]
    LeaveOneOut { unit: String, detail: String },
    /// The base fit does not match the study's donor pool.
    #[error("base fit has {found} weights but the donor pool has {expected}")]
    BaseMismatch { expected: usize, found: usize },
}

/// Build the truncated study an in-time placebo runs on.
///
/// The study window is cut at the ACTUAL intervention time, so no period
/// carrying real treatment ever enters the placebo analysis; within the cut
/// window the intervention is re-dated to `placebo_t0`, making the placebo
/// post window exactly the periods in `(placebo_t0, t0]`. The result is a
/// fully validated study, so the complete inference machinery can be run on
/// it unchanged.
pub fn in_time_study(
    study: &ValidatedStudy,
    placebo_t0: i32,
) -> Result<ValidatedStudy, RobustnessError> {
    let t0 = study.spec().t0;
    if placebo_t0 >= t0 {
        return Err(RobustnessError::PlaceboTooLate { placebo_t0, t0 });
    }
    let all_units: HashSet<usize> = (0..study.dataset().units().len()).collect();
    let truncated = study.dataset().restrict(&all_units, Some(t0));
    let mut spec = study.spec().clone();
    spec.t0 = placebo_t0;
    spec.placebo_t0 = None;
    Ok(validate(&truncated, &spec)?)
}

/// Fit a synthetic path as if the intervention had happened at `placebo_t0`.
///
/// Periods after the actual intervention time are discarded entirely; see
/// [`in_time_study`] for the window layout.
pub fn in_time_placebo(study: &ValidatedStudy, placebo_t0: i32) -> Result<SCFit, RobustnessError> {
    let placebo_study = in_time_study(study, placebo_t0)?;
    let (_, solution) = solve_study(&placebo_study)?;
    Ok(fit(&placebo_study, &solution)?)
}

/// Refit the study with one donor removed from the pool.
pub fn refit_excluding(
    study: &ValidatedStudy,
    excluded: &str,
) -> Result<SCFit, RobustnessError> {
    let pool: Vec<String> = study
        .donors()
        .iter()
        .filter(|d| d.as_str() != excluded)
        .cloned()
        .collect();
    let mut spec = study.spec().clone();
    spec.donors = pool;
    let reduced = validate(study.dataset(), &spec)?;
    let (_, solution) = solve_study(&reduced)?;
    Ok(fit(&reduced, &solution)?)
}

/// Drop each positively-weighted donor in turn and refit.
///
/// `base` must be the fit obtained on the full donor pool; donors whose base
/// weight is at or below [`LOO_WEIGHT_THRESHOLD`] are skipped entirely
/// (removing a donor outside the support cannot move the optimum). Output
/// order follows donor-pool order; refits run concurrently but aggregation
/// is order-fixed, and when several refits fail the error for the earliest
/// donor is reported.
pub fn leave_one_out(
    study: &ValidatedStudy,
    base: &SCFit,
) -> Result<Vec<(String, SCFit)>, RobustnessError> {
    let donors = study.donors();
    if base.weights.w.len() != donors.len() {
        return Err(RobustnessError::BaseMismatch {
            expected: donors.len(),
            found: base.weights.w.len(),
        });
    }
    let support: Vec<&String> = donors
        .iter()
        .zip(&base.weights.w)
        .filter(|(_, &w)| w > LOO_WEIGHT_THRESHOLD)
        .map(|(d, _)| d)
        .collect();
    let results: Vec<Result<(String, SCFit), RobustnessError>> = support
        .par_iter()
        .map(|&d| {
            refit_excluding(study, d)
                .map(|f| (d.clone(), f))
                .map_err(|e| RobustnessError::LeaveOneOut {
                    unit: d.clone(),
                    detail: e.to_string(),
                })
        })
        .collect();
    results.into_iter().collect()
}
