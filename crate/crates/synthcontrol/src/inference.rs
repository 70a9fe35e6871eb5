//! In-space placebo permutation inference.
//!
//! The significance of an estimated effect is judged by permuting the
//! treatment assignment: every donor is treated as if it had received the
//! intervention, a synthetic path is fitted for it against the remaining
//! donors, and the treated unit's post/pre RMSPE ratio is ranked against the
//! placebo ratios. The permutation p-value is the fraction of units (treated
//! included) whose ratio is at least the treated unit's.

use rayon::prelude::*;
use thiserror::Error;

use crate::estimator::{fit, EstimatorError, SCFit};
use crate::panel::{validate, PanelError, ValidatedStudy};
use crate::solver::{solve_study, SolverError};

/// Errors produced while running placebo inference.
#[derive(Debug, Error)]
pub enum InferenceError {
    /// Solving or fitting the treated unit failed.
    #[error(transparent)]
    Solver(#[from] SolverError),
    /// Fitting a synthetic path failed.
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    /// A placebo refit failed; the placebo unit is identified.
    #[error("placebo refit for unit '{unit}' failed: {detail}")]
    PlaceboRefit { unit: String, detail: String },
    /// A unit was looked up in a ratio table that does not contain it.
    #[error("unit '{unit}' does not appear in the ratio table")]
    UnknownUnit { unit: String },
}

/// Whether placebo donor pools may contain the actually-treated unit.
///
/// The treated unit's post-intervention outcomes embed the treatment effect,
/// so including it can contaminate placebo counterfactuals; excluding it is
/// the default. Both behaviors are available, and reports record which one
/// was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlaceboPool {
    /// Placebo pools consist of the other donors only (default).
    #[default]
    ExcludeTreated,
    /// Placebo pools also contain the actually-treated unit.
    IncludeTreated,
}

impl std::fmt::Display for PlaceboPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlaceboPool::ExcludeTreated => write!(f, "exclude-treated"),
            PlaceboPool::IncludeTreated => write!(f, "include-treated"),
        }
    }
}

/// An exact permutation p-value: `hits` of `total` units have a post/pre
/// RMSPE ratio at least as large as the treated unit's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PValue {
    /// Number of units (treated included) with ratio ≥ the treated ratio.
    pub hits: u64,
    /// Total number of ranked units (treated + all placebos, unfiltered).
    pub total: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl PValue {
    /// The p-value as a real number.
    pub fn value(&self) -> f64 {
        self.hits as f64 / self.total as f64
    }

    /// The fraction in lowest terms.
    pub fn reduced(&self) -> (u64, u64) {
        let g = gcd(self.hits, self.total).max(1);
        (self.hits / g, self.total / g)
    }
}

impl std::fmt::Display for PValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.hits, self.total)
    }
}

/// Everything permutation inference produces for one study.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    /// The treated unit's own fit.
    pub treated_fit: SCFit,
    /// One placebo fit per donor, in donor-pool order.
    pub placebo_fits: Vec<SCFit>,
    /// Units excluded by the pre-intervention MSPE cutoff. This set affects
    /// gap-plot output only; the p-value always ranks every unit.
    pub filtered_out: Vec<String>,
    /// (unit, post/pre RMSPE ratio) for every unit, sorted descending.
    pub ratio_table: Vec<(String, f64)>,
    /// Exact permutation p-value over the unfiltered unit set.
    pub p_value: PValue,
    /// Which placebo donor-pool policy produced the placebo fits.
    pub placebo_pool: PlaceboPool,
}

fn placebo_error(unit: &str, detail: impl std::fmt::Display) -> InferenceError {
    InferenceError::PlaceboRefit {
        unit: unit.to_owned(),
        detail: detail.to_string(),
    }
}

fn run_one_placebo(
    study: &ValidatedStudy,
    placebo_unit: &str,
    policy: PlaceboPool,
) -> Result<SCFit, InferenceError> {
    let mut pool: Vec<String> = study
        .donors()
        .iter()
        .filter(|d| d.as_str() != placebo_unit)
        .cloned()
        .collect();
    if policy == PlaceboPool::IncludeTreated {
        pool.push(study.treated().to_owned());
    }
    let mut spec = study.spec().clone();
    spec.treated = placebo_unit.to_owned();
    spec.donors = pool;
    spec.placebo_t0 = None;
    let placebo_study: ValidatedStudy = validate(study.dataset(), &spec)
        .map_err(|e: PanelError| placebo_error(placebo_unit, e))?;
    let (_, solution) = solve_study(&placebo_study).map_err(|e| placebo_error(placebo_unit, e))?;
    fit(&placebo_study, &solution).map_err(|e| placebo_error(placebo_unit, e))
}

/// Refit the study once per donor, treating that donor as the treated unit.
///
/// Placebo pools follow the given policy. Output order equals donor-pool
/// order regardless of execution order; placebo solves run concurrently but
/// aggregation is order-fixed, and when several placebos fail the error for
/// the earliest donor is reported.
pub fn in_space_placebos_with_policy(
    study: &ValidatedStudy,
    policy: PlaceboPool,
) -> Result<Vec<SCFit>, InferenceError> {
    let results: Vec<Result<SCFit, InferenceError>> = study
        .donors()
        .par_iter()
        .map(|d| run_one_placebo(study, d, policy))
        .collect();
    results.into_iter().collect()
}

/// [`in_space_placebos_with_policy`] under the default pool policy.
pub fn in_space_placebos(study: &ValidatedStudy) -> Result<Vec<SCFit>, InferenceError> {
    in_space_placebos_with_policy(study, PlaceboPool::default())
}

/// Split placebo fits into kept and excluded by pre-intervention MSPE.
///
/// A fit is excluded iff its pre-intervention MSPE is at least `cutoff`
/// times the treated unit's ("at least" is inclusive: exactly `cutoff`
/// times larger is excluded). A fit for the treated unit itself is always
/// kept. An infinite cutoff excludes nothing, including when the treated
/// MSPE is zero (the threshold `∞ × 0` is indeterminate and no fit is
/// considered to reach it).
pub fn filter_by_mspe(
    fits: &[SCFit],
    treated_fit: &SCFit,
    cutoff: f64,
) -> (Vec<SCFit>, Vec<String>) {
    let threshold = cutoff * treated_fit.pre_mspe();
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for f in fits {
        // `>=` with a NaN threshold is false, so an indeterminate threshold
        // keeps everything.
        if f.unit != treated_fit.unit && f.pre_mspe() >= threshold {
            excluded.push(f.unit.clone());
        } else {
            kept.push(f.clone());
        }
    }
    (kept, excluded)
}

/// Rank every unit by post/pre RMSPE ratio, largest first.
///
/// Positive-infinity sentinels (perfect pre-fit, real post-gap) sort above
/// every finite ratio; ties are broken by unit id ascending.
pub fn rmspe_ratio_table(treated_fit: &SCFit, placebo_fits: &[SCFit]) -> Vec<(String, f64)> {
    let mut table: Vec<(String, f64)> = std::iter::once(treated_fit)
        .chain(placebo_fits)
        .map(|f| (f.unit.clone(), f.ratio))
        .collect();
    table.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("ratios are never NaN")
            .then_with(|| a.0.cmp(&b.0))
    });
    table
}

/// Exact permutation p-value of the treated unit's ratio.
///
/// `p = (#units with ratio ≥ treated ratio) / N` over every unit in the
/// table (the unfiltered set). The treated unit's own ratio matches itself,
/// so `p ≥ 1/N` always, and `p = 1/N` exactly when the treated ratio
/// strictly exceeds every other ratio.
pub fn permutation_p_value(
    ratio_table: &[(String, f64)],
    treated: &str,
) -> Result<PValue, InferenceError> {
    let treated_ratio = ratio_table
        .iter()
        .find(|(unit, _)| unit == treated)
        .map(|(_, r)| *r)
        .ok_or_else(|| InferenceError::UnknownUnit {
            unit: treated.to_owned(),
        })?;
    let hits = ratio_table
        .iter()
        .filter(|(_, r)| *r >= treated_ratio)
        .count() as u64;
    Ok(PValue {
        hits,
        total: ratio_table.len() as u64,
    })
}

impl InferenceReport {
    /// Full permutation inference under the default placebo-pool policy.
    pub fn compute(study: &ValidatedStudy) -> Result<Self, InferenceError> {
        Self::compute_with_policy(study, PlaceboPool::default())
    }

    /// Full permutation inference: treated fit, placebo fits, MSPE filter,
    /// ratio ranking, and the exact p-value (always over the unfiltered
    /// unit set).
    pub fn compute_with_policy(
        study: &ValidatedStudy,
        policy: PlaceboPool,
    ) -> Result<Self, InferenceError> {
        let (_, solution) = solve_study(study)?;
        let treated_fit = fit(study, &solution)?;
        let placebo_fits = in_space_placebos_with_policy(study, policy)?;
        let (_, filtered_out) =
            filter_by_mspe(&placebo_fits, &treated_fit, study.spec().mspe_cutoff);
        let ratio_table = rmspe_ratio_table(&treated_fit, &placebo_fits);
        let p_value = permutation_p_value(&ratio_table, study.treated())?;
        Ok(InferenceReport {
            treated_fit,
            placebo_fits,
            filtered_out,
            ratio_table,
            p_value,
            placebo_pool: policy,
        })
    }
}
