//! Command-line pipeline: load a panel, estimate, infer, and write artifacts.
//!
//! The binary runs the whole analysis in one pass and writes every artifact
//! into `--out-dir`:
//!
//! | file                | contents                                         |
//! |---------------------|--------------------------------------------------|
//! | `weights.csv`       | donor weights (full precision + display column)  |
//! | `path.csv`          | actual and synthetic outcome per period          |
//! | `gaps.csv`          | treated-minus-synthetic gap per period           |
//! | `placebo_gaps.csv`  | placebo gap paths with the filter flag           |
//! | `ratios.csv`        | RMSPE ratio ranking with ranks                   |
//! | `summary.txt`       | configuration, headline numbers, p-value         |
//! | `path.svg`          | path comparison (treated solid, synthetic dashed)|
//! | `gaps_placebo.svg`  | gap spaghetti plot (filtered placebos omitted)   |
//! | `ratios.svg`        | ratio bar chart, treated bar highlighted         |
//!
//! Exit codes: 0 on success, 1 on data or validation errors (the message
//! names the violated rule), 2 on usage errors. Files are written last and
//! atomically (temp file + rename), so a failing run leaves no partial
//! artifacts. Output bytes are identical across runs and across thread
//! counts.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use thiserror::Error;

use crate::estimator::{EstimatorError, SCFit};
use crate::inference::{InferenceError, InferenceReport, PlaceboPool};
use crate::panel::{validate, PanelDataset, PanelError, StudySpec, VMode};
use crate::report;
use crate::robustness::{in_time_placebo, leave_one_out, RobustnessError};
use crate::solver::{solve_study, SolverError};
use crate::svg::{emit_bar_svg, emit_svg, BarOptions, PlotOptions, Series, SeriesKind, SvgError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VModeArg {
    /// Every pre-intervention period weighted equally.
    Uniform,
    /// Grid-searched period weights scored by induced pre-intervention fit.
    Nested,
}

impl From<VModeArg> for VMode {
    fn from(arg: VModeArg) -> VMode {
        match arg {
            VModeArg::Uniform => VMode::Uniform,
            VModeArg::Nested => VMode::Nested,
        }
    }
}

fn positive_real(raw: &str) -> Result<f64, String> {
    let v: f64 = raw
        .parse()
        .map_err(|_| format!("`{raw}` is not a number"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {raw}"))
    }
}

/// Synthetic control estimation with permutation inference and plots.
#[derive(Parser, Debug)]
#[command(name = "synthcontrol", version)]
struct Args {
    /// Long-format panel CSV with header `unit,time,value`.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// Unit that received the intervention.
    #[arg(long, value_name = "ID")]
    treated: String,

    /// Last pre-intervention period (periods > t0 are post-intervention).
    #[arg(long, value_name = "TIME")]
    t0: i32,

    /// Comma-separated donor pool (default: every unit except the treated
    /// one).
    #[arg(long, value_delimiter = ',', value_name = "IDS", conflicts_with = "exclude")]
    donors: Option<Vec<String>>,

    /// Comma-separated units to remove from the default donor pool.
    #[arg(long, value_delimiter = ',', value_name = "IDS")]
    exclude: Option<Vec<String>>,

    /// Placebo runs whose pre-intervention MSPE is at least this many times
    /// the treated unit's are excluded from gap plots (never from the
    /// p-value).
    #[arg(long, default_value = "10", value_parser = positive_real, value_name = "RATIO")]
    mspe_cutoff: f64,

    /// How pre-intervention periods are weighted when solving.
    #[arg(long, value_enum, default_value_t = VModeArg::Uniform)]
    v_mode: VModeArg,

    /// Also run an in-time placebo with the intervention re-dated to this
    /// period (must lie before --t0).
    #[arg(long, value_name = "TIME")]
    placebo_t0: Option<i32>,

    /// Also refit once per positively weighted donor with that donor
    /// removed.
    #[arg(long)]
    leave_one_out: bool,

    /// Directory the artifact files are written to (created if missing).
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,

    /// Recorded in summary.txt for provenance; the pipeline is
    /// deterministic and draws no random numbers.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Robustness(#[from] RobustnessError),
    #[error(transparent)]
    Svg(#[from] SvgError),
    #[error("--exclude names `{unit}`, which is not a unit in the data")]
    UnknownExclude { unit: String },
    #[error("could not write `{path}`: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            // Usage problems exit 2; --help and --version exit 0.
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&args) {
        Ok(summary_line) => {
            println!("{summary_line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn resolve_donors(args: &Args, dataset: &PanelDataset) -> Result<Vec<String>, CliError> {
    if let Some(donors) = &args.donors {
        return Ok(donors.clone());
    }
    let mut pool: Vec<String> = dataset
        .units()
        .iter()
        .filter(|u| **u != args.treated)
        .cloned()
        .collect();
    if let Some(excluded) = &args.exclude {
        for unit in excluded {
            if dataset.unit_index(unit).is_none() {
                return Err(CliError::UnknownExclude { unit: unit.clone() });
            }
        }
        pool.retain(|u| !excluded.contains(u));
    }
    Ok(pool)
}

fn write_atomic(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    // Write into a temp file in the same directory, then rename into
    // place: the final path either has the old content or the new one,
    // never a truncated mix.
    let tmp = dir.join(format!(".tmp-{name}"));
    let target = dir.join(name);
    std::fs::write(&tmp, content).map_err(|source| CliError::Write {
        path: tmp.clone(),
        source,
    })?;
    std::fs::rename(&tmp, &target).map_err(|source| CliError::Write {
        path: target.clone(),
        source,
    })
}

fn times_f64(times: &[i32]) -> Vec<f64> {
    times.iter().map(|t| *t as f64).collect()
}

fn path_plot(study_times: &[f64], treated: &str, actual: &[f64], fit: &SCFit, t0: i32) -> Result<String, CliError> {
    let series = vec![
        Series {
            label: treated.to_string(),
            points: study_times.iter().copied().zip(actual.iter().copied()).collect(),
            kind: SeriesKind::Treated,
        },
        Series {
            label: format!("synthetic {treated}"),
            points: study_times
                .iter()
                .copied()
                .zip(fit.synthetic.iter().copied())
                .collect(),
            kind: SeriesKind::Synthetic,
        },
    ];
    let opts = PlotOptions {
        title: format!("{treated} vs synthetic control"),
        vline_x: Some(t0 as f64),
        ..PlotOptions::default()
    };
    Ok(emit_svg(&series, &opts)?)
}

fn gaps_plot(
    study_times: &[f64],
    treated: &str,
    report_data: &InferenceReport,
    t0: i32,
) -> Result<String, CliError> {
    let mut series = vec![Series {
        label: treated.to_string(),
        points: study_times
            .iter()
            .copied()
            .zip(report_data.treated_fit.gaps.iter().copied())
            .collect(),
        kind: SeriesKind::Treated,
    }];
    for placebo in &report_data.placebo_fits {
        if report_data.filtered_out.contains(&placebo.unit) {
            continue;
        }
        series.push(Series {
            label: placebo.unit.clone(),
            points: study_times
                .iter()
                .copied()
                .zip(placebo.gaps.iter().copied())
                .collect(),
            kind: SeriesKind::Placebo,
        });
    }
    let opts = PlotOptions {
        title: format!("gaps: {treated} and placebo runs"),
        vline_x: Some(t0 as f64),
        hline_y: Some(0.0),
        ..PlotOptions::default()
    };
    Ok(emit_svg(&series, &opts)?)
}

fn run(args: &Args) -> Result<String, CliError> {
    let dataset = PanelDataset::load_long_csv(&args.data)?;
    let donors = resolve_donors(args, &dataset)?;
    let mut spec = StudySpec::new(&args.treated, args.t0, donors);
    spec.mspe_cutoff = args.mspe_cutoff;
    spec.v_mode = args.v_mode.into();
    spec.placebo_t0 = args.placebo_t0;
    let study = validate(&dataset, &spec)?;

    // Solve once for the predictor weighting (reported in the summary);
    // the inference pass re-derives the same deterministic solution.
    let (v_weights, _) = solve_study(&study)?;
    let report_data = InferenceReport::compute_with_policy(&study, PlaceboPool::ExcludeTreated)?;
    let treated_fit = &report_data.treated_fit;

    let in_time = match args.placebo_t0 {
        Some(placebo_t0) => Some((placebo_t0, in_time_placebo(&study, placebo_t0)?)),
        None => None,
    };
    let loo = if args.leave_one_out {
        Some(leave_one_out(&study, treated_fit)?)
    } else {
        None
    };

    // Assemble every artifact before writing anything, so failures cannot
    // leave a partial artifact set behind.
    let times = study.dataset().times();
    let actual: Vec<f64> = (0..times.len())
        .map(|t| study.outcome(study.treated_idx(), t))
        .collect();
    let xs = times_f64(times);

    let extras = report::SummaryExtras {
        v_weights: Some(&v_weights),
        in_time: in_time.as_ref().map(|(t, f)| (*t, f)),
        leave_one_out: loo.as_deref(),
        seed: args.seed,
    };

    let artifacts: Vec<(&str, String)> = vec![
        ("weights.csv", report::weights_csv(study.donors(), &treated_fit.weights.w)),
        ("path.csv", report::path_csv(times, &actual, &treated_fit.synthetic)),
        ("gaps.csv", report::gaps_csv(times, &treated_fit.gaps)),
        ("placebo_gaps.csv", report::placebo_gaps_csv(times, &report_data)),
        ("ratios.csv", report::ratios_csv(&report_data)),
        ("summary.txt", report::summary_txt(&study, &report_data, &extras)),
        ("path.svg", path_plot(&xs, study.treated(), &actual, treated_fit, args.t0)?),
        ("gaps_placebo.svg", gaps_plot(&xs, study.treated(), &report_data, args.t0)?),
        (
            "ratios.svg",
            emit_bar_svg(
                &report_data.ratio_table,
                &BarOptions {
                    title: "post/pre RMSPE ratios".to_string(),
                    highlight: Some(study.treated().to_string()),
                    ..BarOptions::default()
                },
            )?,
        ),
    ];

    std::fs::create_dir_all(&args.out_dir).map_err(|source| CliError::Write {
        path: args.out_dir.clone(),
        source,
    })?;
    for (name, content) in &artifacts {
        write_atomic(&args.out_dir, name, content)?;
    }

    Ok(format!(
        "wrote {} artifacts to {} (p-value {} = {:.6})",
        artifacts.len(),
        args.out_dir.display(),
        report_data.p_value,
        report_data.p_value.value()
    ))
}
