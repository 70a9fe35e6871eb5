//! Artifact text builders: CSV tables and the human-readable summary.
//!
//! Everything here is a pure function from results to a `String`, so the
//! CLI can write files atomically and golden tests can compare bytes. All
//! artifacts use LF line endings. Numeric columns carry full precision
//! (17 significant digits, enough to round-trip any double exactly);
//! columns meant for human eyes carry three decimals and are marked as
//! display columns.

use crate::estimator::SCFit;
use crate::inference::InferenceReport;
use crate::panel::{ValidatedStudy, VMode};
use crate::solver::VWeights;

/// Full-precision form: 17 significant digits, exact round-trip.
pub fn full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Three-decimal display form; infinities render as `inf`.
pub fn display3(v: f64) -> String {
    format!("{v:.3}")
}

/// `weights.csv`: one row per donor, full-precision weight plus a
/// three-decimal display column.
pub fn weights_csv(donors: &[String], weights: &[f64]) -> String {
    let mut out = String::from("unit,weight,weight_3dp\n");
    for (unit, w) in donors.iter().zip(weights) {
        out.push_str(&format!("{unit},{},{}\n", full(*w), display3(*w)));
    }
    out
}

/// `path.csv`: actual and synthetic outcome per period.
pub fn path_csv(times: &[i32], actual: &[f64], synthetic: &[f64]) -> String {
    let mut out = String::from("time,actual,synthetic\n");
    for ((t, a), s) in times.iter().zip(actual).zip(synthetic) {
        out.push_str(&format!("{t},{},{}\n", full(*a), full(*s)));
    }
    out
}

/// `gaps.csv`: treated-minus-synthetic gap per period.
pub fn gaps_csv(times: &[i32], gaps: &[f64]) -> String {
    let mut out = String::from("time,gap\n");
    for (t, g) in times.iter().zip(gaps) {
        out.push_str(&format!("{t},{}\n", full(*g)));
    }
    out
}

/// `placebo_gaps.csv`: every placebo unit's gap path, flagged with whether
/// the MSPE cutoff excludes it from gap plots (the flag never affects the
/// p-value).
pub fn placebo_gaps_csv(times: &[i32], report: &InferenceReport) -> String {
    let mut out = String::from("unit,time,gap,filtered\n");
    for fit in &report.placebo_fits {
        let filtered = report.filtered_out.contains(&fit.unit);
        for (t, g) in times.iter().zip(&fit.gaps) {
            out.push_str(&format!("{},{t},{},{filtered}\n", fit.unit, full(*g)));
        }
    }
    out
}

/// `ratios.csv`: the full RMSPE ranking, one row per unit (treated
/// included), in table order (ratio descending), with 1-based ranks.
pub fn ratios_csv(report: &InferenceReport) -> String {
    let mut out = String::from("unit,pre_rmspe,post_rmspe,ratio,rank\n");
    let fit_for = |unit: &str| -> &SCFit {
        if report.treated_fit.unit == unit {
            &report.treated_fit
        } else {
            report
                .placebo_fits
                .iter()
                .find(|f| f.unit == unit)
                .expect("ratio table units come from the fits")
        }
    };
    for (rank, (unit, ratio)) in report.ratio_table.iter().enumerate() {
        let fit = fit_for(unit);
        out.push_str(&format!(
            "{unit},{},{},{},{}\n",
            full(fit.pre_rmspe),
            full(fit.post_rmspe),
            full(*ratio),
            rank + 1
        ));
    }
    out
}

/// Inputs for [`summary_txt`] beyond the core study and inference report.
#[derive(Debug, Default)]
pub struct SummaryExtras<'a> {
    /// Solved predictor weighting (reported when the mode is not uniform).
    pub v_weights: Option<&'a VWeights>,
    /// In-time placebo result, with the placebo intervention time.
    pub in_time: Option<(i32, &'a SCFit)>,
    /// Leave-one-out refits in donor order.
    pub leave_one_out: Option<&'a [(String, SCFit)]>,
    /// Seed flag as given on the command line. The pipeline itself is
    /// deterministic and draws no random numbers; the seed is echoed so a
    /// run's provenance is recorded alongside its outputs.
    pub seed: Option<u64>,
}

fn weight_support_line(study: &ValidatedStudy, weights: &[f64]) -> String {
    let entries: Vec<String> = study
        .donors()
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 1e-6)
        .map(|(d, &w)| format!("{d} ({})", display3(w)))
        .collect();
    if entries.is_empty() {
        "none".to_string()
    } else {
        entries.join(", ")
    }
}

/// `summary.txt`: the study configuration and headline numbers in plain
/// text. Deterministic layout, LF endings.
pub fn summary_txt(
    study: &ValidatedStudy,
    report: &InferenceReport,
    extras: &SummaryExtras<'_>,
) -> String {
    let spec = study.spec();
    let times = study.dataset().times();
    let fit = &report.treated_fit;
    let mut out = String::new();

    out.push_str("synthetic control study summary\n");
    out.push_str("===============================\n\n");
    out.push_str(&format!("treated unit: {}\n", study.treated()));
    out.push_str(&format!("intervention time (t0): {}\n", spec.t0));
    out.push_str(&format!(
        "study window: {}..{} ({} pre, {} post periods)\n",
        times.first().expect("validated window is non-empty"),
        times.last().expect("validated window is non-empty"),
        study.n_pre(),
        study.n_post()
    ));
    out.push_str(&format!(
        "donor pool ({}): {}\n",
        study.donors().len(),
        study.donors().join(", ")
    ));
    let drops = study.dropped_units();
    if drops.is_empty() {
        out.push_str("dropped units: none\n");
    } else {
        let listed: Vec<String> = drops
            .iter()
            .map(|(unit, reason)| format!("{unit} ({reason})"))
            .collect();
        out.push_str(&format!("dropped units: {}\n", listed.join(", ")));
    }
    match spec.v_mode {
        VMode::Uniform => out.push_str("predictor weighting (V): uniform\n"),
        VMode::Nested => {
            out.push_str("predictor weighting (V): nested grid search\n");
            if let Some(v) = extras.v_weights {
                let diag: Vec<String> = v.diag().iter().map(|x| display3(*x)).collect();
                out.push_str(&format!("  period weights: {}\n", diag.join(", ")));
            }
        }
    }

    out.push_str("\nsolver\n");
    out.push_str(&format!("  converged: {}\n", fit.weights.converged));
    out.push_str(&format!("  iterations: {}\n", fit.weights.iterations));
    out.push_str(&format!(
        "  pre-intervention distance (objective): {}\n",
        full(fit.weights.objective)
    ));
    out.push_str(&format!(
        "  weight support: {}\n",
        weight_support_line(study, &fit.weights.w)
    ));

    out.push_str("\nfit\n");
    out.push_str(&format!("  pre-intervention RMSPE: {}\n", full(fit.pre_rmspe)));
    out.push_str(&format!("  post-intervention RMSPE: {}\n", full(fit.post_rmspe)));
    out.push_str(&format!("  post/pre RMSPE ratio: {}\n", full(fit.ratio)));

    out.push_str("\npermutation inference\n");
    out.push_str(&format!("  placebo pool policy: {}\n", report.placebo_pool));
    out.push_str(&format!("  placebo runs: {}\n", report.placebo_fits.len()));
    let p = report.p_value;
    let (rn, rd) = p.reduced();
    out.push_str(&format!("  p-value: {p} = {:.6}", p.value()));
    if (rn, rd) != (p.hits, p.total) {
        out.push_str(&format!(" (= {rn}/{rd})"));
    }
    out.push('\n');
    out.push_str(&format!("  MSPE cutoff: {}\n", spec.mspe_cutoff));
    if report.filtered_out.is_empty() {
        out.push_str("  excluded from gap plots: none\n");
    } else {
        out.push_str(&format!(
            "  excluded from gap plots: {}\n",
            report.filtered_out.join(", ")
        ));
    }

    if let Some((placebo_t0, placebo_fit)) = extras.in_time {
        out.push_str(&format!("\nin-time placebo (intervention re-dated to {placebo_t0})\n"));
        out.push_str(&format!(
            "  window truncated at the actual intervention time {}\n",
            spec.t0
        ));
        out.push_str(&format!(
            "  pre-intervention RMSPE: {}\n",
            full(placebo_fit.pre_rmspe)
        ));
        out.push_str(&format!(
            "  post-intervention RMSPE: {}\n",
            full(placebo_fit.post_rmspe)
        ));
        out.push_str(&format!(
            "  post/pre RMSPE ratio: {}\n",
            full(placebo_fit.ratio)
        ));
    }

    if let Some(loo) = extras.leave_one_out {
        out.push_str("\nleave-one-out\n");
        if loo.is_empty() {
            out.push_str("  no donor carries positive weight\n");
        }
        for (unit, refit) in loo {
            out.push_str(&format!(
                "  excluding {unit}: pre RMSPE {}, post/pre ratio {}\n",
                full(refit.pre_rmspe),
                full(refit.ratio)
            ));
        }
    }

    out.push_str("\nreproducibility\n");
    match extras.seed {
        Some(seed) => out.push_str(&format!("  seed: {seed}\n")),
        None => out.push_str("  seed: none\n"),
    }
    out.push_str(
        "  the pipeline is deterministic; the seed is recorded for provenance only\n",
    );
    out
}
