//! Long-format panel ingestion, study specification, and validation.
//!
//! A [`PanelDataset`] is a (unit, period) grid of optionally missing outcome
//! values loaded from `unit,time,value` CSV. A [`StudySpec`] names the
//! treated unit, the donor pool, and the last untreated period `t0`;
//! [`validate`] restricts the panel to the complete units the estimator may
//! consume and freezes the pre/post period split. The study window is the
//! full dataset time range; trim the CSV upstream if a narrower window is
//! wanted.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors raised while loading, constructing, or validating panel data.
///
/// Display strings name the violated rule; the CLI forwards them verbatim
/// to stderr.
#[derive(Debug, Error)]
pub enum PanelError {
    #[error("data file not found: {path}")]
    FileNotFound { path: PathBuf },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed header: expected `unit,time,value`, found `{found}`")]
    MalformedHeader { found: String },
    #[error("duplicate cell for unit `{unit}` at period {time}")]
    DuplicateCell { unit: String, time: i32 },
    #[error("unparsable row at line {line}: {detail}")]
    UnparsableValue { line: u64, detail: String },
    #[error("invalid unit identifier `{unit}`: must be non-empty and free of commas and line breaks")]
    InvalidUnitId { unit: String },
    #[error("duplicate unit `{unit}` in dataset construction")]
    DuplicateUnit { unit: String },
    #[error("periods must be strictly increasing")]
    NonIncreasingTimes,
    #[error("value grid has {found} cells, expected units x periods = {expected}")]
    GridShapeMismatch { expected: usize, found: usize },
    #[error("non-finite value for unit `{unit}` at period {time}")]
    NonFiniteValue { unit: String, time: i32 },
    #[error("treated unit `{unit}` not present in dataset")]
    TreatedMissing { unit: String },
    #[error("treated unit `{unit}` has missing values in the study window")]
    TreatedIncomplete { unit: String },
    #[error("no post-treatment periods: t0 = {t0} is at or beyond the last observed period")]
    NoPostPeriods { t0: i32 },
    #[error("too few pre-treatment periods: need at least 2 at or before t0 = {t0}, found {found}")]
    TooFewPrePeriods { t0: i32, found: usize },
    #[error("empty donor pool: no complete donors remain")]
    EmptyDonorPool,
    #[error("treated unit `{unit}` must not appear in the donor pool")]
    TreatedInDonorPool { unit: String },
}

/// Predictor-weighting mode for the weight solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VMode {
    /// Equal weight on every pre-treatment period.
    #[default]
    Uniform,
    /// Grid search over diagonal V scored by induced pre-treatment MSPE.
    Nested,
}

impl fmt::Display for VMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VMode::Uniform => write!(f, "uniform"),
            VMode::Nested => write!(f, "nested"),
        }
    }
}

/// Why a donor was excluded during validation.
///
/// A single coarse reason keeps validation idempotent: a donor dropped for a
/// missing cell is absent entirely on revalidation and must be recorded
/// identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// Missing at least one value in the study window, or absent outright.
    Incomplete,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::Incomplete => write!(f, "missing or absent values in the study window"),
        }
    }
}

/// Records which periods a dataset's values were read from.
///
/// Attach one with [`PanelDataset::with_access_tracking`] to audit a
/// computation — for example, to prove that an in-time placebo run never
/// touches any period after the actual intervention. Thread-safe, so
/// audited computations may still run placebo solves concurrently.
#[derive(Debug, Default)]
pub struct AccessTracker {
    times: std::sync::Mutex<std::collections::BTreeSet<i32>>,
}

impl AccessTracker {
    fn record(&self, time: i32) {
        self.times.lock().expect("tracker lock").insert(time);
    }

    /// Forget everything recorded so far.
    pub fn reset(&self) {
        self.times.lock().expect("tracker lock").clear();
    }

    /// All periods read since construction or the last reset, ascending.
    pub fn times_read(&self) -> Vec<i32> {
        self.times
            .lock()
            .expect("tracker lock")
            .iter()
            .copied()
            .collect()
    }

    /// The latest period read, if any value was read at all.
    pub fn max_time_read(&self) -> Option<i32> {
        self.times
            .lock()
            .expect("tracker lock")
            .iter()
            .next_back()
            .copied()
    }
}

/// A panel of outcome values on a (unit, period) grid.
///
/// Units keep their first-appearance order from the source; periods are
/// strictly increasing integers. Cells may be missing at this stage.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    units: Vec<String>,
    times: Vec<i32>,
    /// Row-major grid: `values[u * times.len() + t]`.
    values: Vec<Option<f64>>,
    outcome_name: String,
    /// Optional read audit; every computational read goes through
    /// [`Self::value`], which reports the period here when attached.
    tracker: Option<std::sync::Arc<AccessTracker>>,
}

/// Equality covers the data (units, periods, values, outcome name) only;
/// an attached access tracker is instrumentation, not data.
impl PartialEq for PanelDataset {
    fn eq(&self, other: &Self) -> bool {
        self.units == other.units
            && self.times == other.times
            && self.values == other.values
            && self.outcome_name == other.outcome_name
    }
}

impl PanelDataset {
    /// Builds a dataset from parts, checking grid invariants.
    pub fn new(
        units: Vec<String>,
        times: Vec<i32>,
        values: Vec<Option<f64>>,
        outcome_name: impl Into<String>,
    ) -> Result<Self, PanelError> {
        let mut seen = HashSet::new();
        for unit in &units {
            check_unit_id(unit)?;
            if !seen.insert(unit.clone()) {
                return Err(PanelError::DuplicateUnit { unit: unit.clone() });
            }
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PanelError::NonIncreasingTimes);
        }
        let expected = units.len() * times.len();
        if values.len() != expected {
            return Err(PanelError::GridShapeMismatch {
                expected,
                found: values.len(),
            });
        }
        for (idx, v) in values.iter().enumerate() {
            if let Some(x) = v {
                if !x.is_finite() {
                    return Err(PanelError::NonFiniteValue {
                        unit: units[idx / times.len()].clone(),
                        time: times[idx % times.len()],
                    });
                }
            }
        }
        Ok(Self {
            units,
            times,
            values,
            outcome_name: outcome_name.into(),
            tracker: None,
        })
    }

    /// A copy of this dataset whose reads are recorded.
    ///
    /// Every value read through [`Self::value`] (and hence everything built
    /// on it: validation completeness checks, design matrices, fits) is
    /// reported to the returned tracker. Datasets derived from the tracked
    /// copy — e.g. the truncated dataset behind an in-time placebo —
    /// inherit the tracker, so a whole pipeline can be audited end to end.
    pub fn with_access_tracking(&self) -> (Self, std::sync::Arc<AccessTracker>) {
        let tracker = std::sync::Arc::new(AccessTracker::default());
        let mut copy = self.clone();
        copy.tracker = Some(tracker.clone());
        (copy, tracker)
    }

    /// Loads a long-format CSV with header `unit,time,value`.
    ///
    /// Units are ordered by first appearance, periods sorted ascending.
    /// An empty value field marks a missing cell; absent (unit, period)
    /// rows do the same. Values must parse as finite floats. UTF-8 with
    /// LF or CRLF line endings; unit identifiers must not contain commas.
    pub fn load_long_csv(path: impl AsRef<Path>) -> Result<Self, PanelError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                PanelError::FileNotFound {
                    path: path.to_path_buf(),
                }
            } else {
                PanelError::Io {
                    path: path.to_path_buf(),
                    source: e,
                }
            }
        })?;
        Self::parse_long_csv(file).map_err(|e| match e {
            // Reader-level i/o failures carry no path; attach it here.
            PanelError::Io { source, .. } => PanelError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    /// Parses the long CSV format from any reader. See [`Self::load_long_csv`].
    pub fn parse_long_csv(reader: impl Read) -> Result<Self, PanelError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);

        let headers = rdr.headers().map_err(csv_error)?.clone();
        let fields: Vec<&str> = headers.iter().collect();
        let canonical = match fields.as_slice() {
            [unit, time, value] => {
                unit.trim_start_matches('\u{feff}') == "unit"
                    && *time == "time"
                    && *value == "value"
            }
            _ => false,
        };
        if !canonical {
            return Err(PanelError::MalformedHeader {
                found: fields.join(","),
            });
        }

        let mut units: Vec<String> = Vec::new();
        let mut unit_index: HashMap<String, usize> = HashMap::new();
        let mut times: Vec<i32> = Vec::new();
        let mut cells: HashMap<(usize, i32), f64> = HashMap::new();
        let mut seen: HashSet<(usize, i32)> = HashSet::new();

        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 3 {
                return Err(PanelError::UnparsableValue {
                    line,
                    detail: format!("expected 3 fields, found {}", record.len()),
                });
            }
            let unit = record[0].to_string();
            check_unit_id(&unit)?;
            let time: i32 = record[1].trim().parse().map_err(|_| {
                PanelError::UnparsableValue {
                    line,
                    detail: format!("period `{}` is not an integer", &record[1]),
                }
            })?;
            let raw = record[2].trim();
            let value = if raw.is_empty() {
                None
            } else {
                let v: f64 = raw.parse().map_err(|_| PanelError::UnparsableValue {
                    line,
                    detail: format!("value `{raw}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(PanelError::UnparsableValue {
                        line,
                        detail: format!("value `{raw}` is not finite"),
                    });
                }
                Some(v)
            };

            let uidx = *unit_index.entry(unit.clone()).or_insert_with(|| {
                units.push(unit.clone());
                units.len() - 1
            });
            match times.binary_search(&time) {
                Ok(_) => {}
                Err(pos) => times.insert(pos, time),
            }
            // A cell may appear at most once, whether its value is present
            // or blank; track every sighting, not just stored values.
            if !seen.insert((uidx, time)) {
                return Err(PanelError::DuplicateCell { unit, time });
            }
            if let Some(value) = value {
                cells.insert((uidx, time), value);
            }
        }

        let mut values = vec![None; units.len() * times.len()];
        for ((uidx, time), value) in &cells {
            let tidx = times.binary_search(time).expect("time recorded above");
            values[uidx * times.len() + tidx] = Some(*value);
        }
        Self::new(units, times, values, "value")
    }

    /// Emits the canonical long CSV: unit-major in dataset order, periods
    /// ascending, missing cells skipped, values in shortest round-trip form.
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("unit,time,value\n");
        for (u, unit) in self.units.iter().enumerate() {
            for (t, time) in self.times.iter().enumerate() {
                if let Some(v) = self.values[u * self.times.len() + t] {
                    out.push_str(&format!("{unit},{time},{v}\n"));
                }
            }
        }
        out
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn times(&self) -> &[i32] {
        &self.times
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn unit_index(&self, unit: &str) -> Option<usize> {
        self.units.iter().position(|u| u == unit)
    }

    pub fn time_index(&self, time: i32) -> Option<usize> {
        self.times.binary_search(&time).ok()
    }

    /// Cell value by grid indices; `None` when missing.
    pub fn value(&self, unit_idx: usize, time_idx: usize) -> Option<f64> {
        if let Some(tracker) = &self.tracker {
            tracker.record(self.times[time_idx]);
        }
        self.values[unit_idx * self.times.len() + time_idx]
    }

    /// Cell value by identifiers; `None` when the cell is missing or the
    /// unit/period is unknown.
    pub fn value_by_id(&self, unit: &str, time: i32) -> Option<f64> {
        let u = self.unit_index(unit)?;
        let t = self.time_index(time)?;
        self.value(u, t)
    }

    /// True when the unit has a value in every period of the window.
    pub fn is_complete(&self, unit_idx: usize) -> bool {
        (0..self.times.len()).all(|t| self.value(unit_idx, t).is_some())
    }

    /// Copies out a dataset restricted to `keep_units` (dataset order) and
    /// periods `<= last_time`.
    pub(crate) fn restrict(&self, keep_units: &HashSet<usize>, last_time: Option<i32>) -> Self {
        let times: Vec<i32> = match last_time {
            Some(cut) => self.times.iter().copied().filter(|t| *t <= cut).collect(),
            None => self.times.clone(),
        };
        let mut units = Vec::new();
        let mut values = Vec::new();
        for (u, unit) in self.units.iter().enumerate() {
            if !keep_units.contains(&u) {
                continue;
            }
            units.push(unit.clone());
            for time in &times {
                let t = self.time_index(*time).expect("restricted to known periods");
                values.push(self.value(u, t));
            }
        }
        Self {
            units,
            times,
            values,
            outcome_name: self.outcome_name.clone(),
            // Derived datasets stay under the same audit.
            tracker: self.tracker.clone(),
        }
    }
}

fn check_unit_id(unit: &str) -> Result<(), PanelError> {
    if unit.is_empty() || unit.contains(',') || unit.contains('\n') || unit.contains('\r') {
        return Err(PanelError::InvalidUnitId {
            unit: unit.to_string(),
        });
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> PanelError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => PanelError::Io {
            path: PathBuf::new(),
            source,
        },
        other => PanelError::UnparsableValue {
            line,
            detail: format!("{other:?}"),
        },
    }
}

/// Declares a study: treated unit, donor pool, and treatment timing.
///
/// `t0` is the last untreated period; periods `<= t0` are pre-treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub treated: String,
    pub t0: i32,
    pub donors: Vec<String>,
    /// Placebos with pre-treatment MSPE at least this multiple of the
    /// treated unit's are excluded from gap displays (never from the
    /// p-value).
    pub mspe_cutoff: f64,
    /// Lattice step for the brute-force oracle.
    pub grid_step: f64,
    /// Solver tolerance on the squared objective.
    pub solver_tol: f64,
    pub v_mode: VMode,
    /// Backdated treatment period for the in-time placebo, if requested.
    pub placebo_t0: Option<i32>,
}

impl StudySpec {
    /// Spec with default diagnostics: cutoff 10, grid step 0.01,
    /// solver tolerance 1e-10, uniform V, no in-time placebo.
    pub fn new(treated: impl Into<String>, t0: i32, donors: Vec<String>) -> Self {
        Self {
            treated: treated.into(),
            t0,
            donors,
            mspe_cutoff: 10.0,
            grid_step: 0.01,
            solver_tol: 1e-10,
            v_mode: VMode::Uniform,
            placebo_t0: None,
        }
    }
}

/// A validated study: complete restricted dataset plus the frozen period
/// split. Every retained unit has a value in every period.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedStudy {
    dataset: PanelDataset,
    spec: StudySpec,
    donors: Vec<String>,
    dropped: Vec<(String, DropReason)>,
    treated_idx: usize,
    pre: std::ops::Range<usize>,
    post: std::ops::Range<usize>,
}

/// Checks a spec against a dataset and restricts to usable units.
///
/// Donors with any missing value in the window (or absent from the dataset)
/// are dropped and recorded; duplicate donor entries are collapsed. The
/// treated unit must be present and complete. Requires at least 2
/// pre-treatment periods and 1 post-treatment period. Validation is
/// idempotent: revalidating the returned study's dataset with the same spec
/// yields an identical result.
pub fn validate(dataset: &PanelDataset, spec: &StudySpec) -> Result<ValidatedStudy, PanelError> {
    let mut donor_list: Vec<&String> = Vec::new();
    let mut seen = HashSet::new();
    for donor in &spec.donors {
        if donor == &spec.treated {
            return Err(PanelError::TreatedInDonorPool {
                unit: donor.clone(),
            });
        }
        if seen.insert(donor.as_str()) {
            donor_list.push(donor);
        }
    }
    if donor_list.is_empty() {
        return Err(PanelError::EmptyDonorPool);
    }

    let treated_idx = dataset
        .unit_index(&spec.treated)
        .ok_or_else(|| PanelError::TreatedMissing {
            unit: spec.treated.clone(),
        })?;
    if !dataset.is_complete(treated_idx) {
        return Err(PanelError::TreatedIncomplete {
            unit: spec.treated.clone(),
        });
    }

    let n_pre = dataset.times.iter().filter(|t| **t <= spec.t0).count();
    let n_post = dataset.times.len() - n_pre;
    if n_post == 0 {
        return Err(PanelError::NoPostPeriods { t0: spec.t0 });
    }
    if n_pre < 2 {
        return Err(PanelError::TooFewPrePeriods {
            t0: spec.t0,
            found: n_pre,
        });
    }

    let mut dropped = Vec::new();
    let mut kept: HashSet<usize> = HashSet::new();
    kept.insert(treated_idx);
    for donor in donor_list {
        match dataset.unit_index(donor) {
            Some(u) if dataset.is_complete(u) => {
                kept.insert(u);
            }
            _ => dropped.push((donor.clone(), DropReason::Incomplete)),
        }
    }
    if kept.len() == 1 {
        return Err(PanelError::EmptyDonorPool);
    }

    let restricted = dataset.restrict(&kept, None);
    let treated_idx = restricted
        .unit_index(&spec.treated)
        .expect("treated retained");
    let donors: Vec<String> = restricted
        .units
        .iter()
        .filter(|u| **u != spec.treated)
        .cloned()
        .collect();

    Ok(ValidatedStudy {
        dataset: restricted,
        spec: spec.clone(),
        donors,
        dropped,
        treated_idx,
        pre: 0..n_pre,
        post: n_pre..n_pre + n_post,
    })
}

impl ValidatedStudy {
    pub fn dataset(&self) -> &PanelDataset {
        &self.dataset
    }

    pub fn spec(&self) -> &StudySpec {
        &self.spec
    }

    /// Retained donors in dataset unit order.
    pub fn donors(&self) -> &[String] {
        &self.donors
    }

    pub fn dropped_units(&self) -> &[(String, DropReason)] {
        &self.dropped
    }

    pub fn treated(&self) -> &str {
        &self.spec.treated
    }

    pub fn treated_idx(&self) -> usize {
        self.treated_idx
    }

    /// Pre-treatment period indices into `dataset().times()`.
    pub fn pre_range(&self) -> std::ops::Range<usize> {
        self.pre.clone()
    }

    /// Post-treatment period indices into `dataset().times()`.
    pub fn post_range(&self) -> std::ops::Range<usize> {
        self.post.clone()
    }

    pub fn n_pre(&self) -> usize {
        self.pre.len()
    }

    pub fn n_post(&self) -> usize {
        self.post.len()
    }

    /// Value of a retained unit at a period index; total by construction.
    pub fn outcome(&self, unit_idx: usize, time_idx: usize) -> f64 {
        self.dataset
            .value(unit_idx, time_idx)
            .expect("validated dataset is complete")
    }

    /// Dataset unit indices of the retained donors, in `donors()` order.
    pub fn donor_indices(&self) -> Vec<usize> {
        self.donors
            .iter()
            .map(|d| self.dataset.unit_index(d).expect("donor retained"))
            .collect()
    }

    /// Pre-treatment design matrices: treated column `X1` (length T_pre) and
    /// donor matrix `X0` (T_pre x J, columns in `donors()` order).
    pub fn design_matrices(&self) -> (DVector<f64>, DMatrix<f64>) {
        let t_pre = self.pre.len();
        let x1 = DVector::from_fn(t_pre, |t, _| self.outcome(self.treated_idx, t));
        let donor_idx = self.donor_indices();
        let x0 = DMatrix::from_fn(t_pre, donor_idx.len(), |t, j| self.outcome(donor_idx[j], t));
        (x1, x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_csv() -> &'static str {
        "unit,time,value\n\
         alpha,2000,1.5\n\
         alpha,2001,1.75\n\
         alpha,2002,2.0\n\
         alpha,2003,2.5\n\
         beta,2000,1.0\n\
         beta,2001,1.25\n\
         beta,2002,1.5\n\
         beta,2003,1.75\n\
         gamma,2000,2.0\n\
         gamma,2002,2.25\n\
         gamma,2003,2.5\n\
         delta,2000,0.5\n\
         delta,2001,0.75\n\
         delta,2002,1.0\n\
         delta,2003,1.25\n"
    }

    fn sample_dataset() -> PanelDataset {
        PanelDataset::parse_long_csv(sample_csv().as_bytes()).unwrap()
    }

    #[test]
    fn load_orders_units_by_first_appearance_and_sorts_times() {
        let ds = sample_dataset();
        assert_eq!(ds.units(), ["alpha", "beta", "gamma", "delta"]);
        assert_eq!(ds.times(), [2000, 2001, 2002, 2003]);
        assert_eq!(ds.value_by_id("beta", 2002), Some(1.5));
        // gamma has no 2001 row: the cell is missing, not an error.
        assert_eq!(ds.value_by_id("gamma", 2001), None);
    }

    #[test]
    fn load_accepts_unsorted_rows_and_crlf() {
        let csv = "unit,time,value\r\nb,2001,2.0\r\na,2000,1.0\r\nb,2000,1.5\r\na,2001,2.5\r\n";
        let ds = PanelDataset::parse_long_csv(csv.as_bytes()).unwrap();
        assert_eq!(ds.units(), ["b", "a"]);
        assert_eq!(ds.times(), [2000, 2001]);
        assert_eq!(ds.value_by_id("a", 2000), Some(1.0));
    }

    #[test]
    fn load_rejects_malformed_header() {
        let err = PanelDataset::parse_long_csv("unit,year,value\na,1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, PanelError::MalformedHeader { .. }), "{err}");
    }

    #[test]
    fn load_rejects_duplicate_cell() {
        let csv = "unit,time,value\na,2000,1.0\na,2000,1.0\n";
        let err = PanelDataset::parse_long_csv(csv.as_bytes()).unwrap_err();
        match err {
            PanelError::DuplicateCell { unit, time } => {
                assert_eq!(unit, "a");
                assert_eq!(time, 2000);
            }
            other => panic!("expected DuplicateCell, got {other}"),
        }
    }

    #[test]
    fn load_reports_unparsable_value_with_line() {
        let csv = "unit,time,value\na,2000,1.0\na,2001,not-a-number\n";
        let err = PanelDataset::parse_long_csv(csv.as_bytes()).unwrap_err();
        match err {
            PanelError::UnparsableValue { line, .. } => assert_eq!(line, 3),
            other => panic!("expected UnparsableValue, got {other}"),
        }
    }

    #[test]
    fn load_rejects_non_integer_period_and_non_finite_value() {
        let err =
            PanelDataset::parse_long_csv("unit,time,value\na,20.5,1.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, PanelError::UnparsableValue { line: 2, .. }));
        let err =
            PanelDataset::parse_long_csv("unit,time,value\na,2000,inf\n".as_bytes()).unwrap_err();
        assert!(matches!(err, PanelError::UnparsableValue { line: 2, .. }));
    }

    #[test]
    fn missing_file_error_names_path() {
        let err = PanelDataset::load_long_csv("/no/such/file.csv").unwrap_err();
        match &err {
            PanelError::FileNotFound { path } => {
                assert!(path.to_string_lossy().contains("/no/such/file.csv"))
            }
            other => panic!("expected FileNotFound, got {other}"),
        }
        assert!(err.to_string().contains("/no/such/file.csv"));
    }

    #[test]
    fn access_tracker_records_resets_and_follows_derived_datasets() {
        let ds = sample_dataset();
        let (tracked, log) = ds.with_access_tracking();
        assert_eq!(log.max_time_read(), None);
        let _ = tracked.value(0, 0);
        let _ = tracked.value(1, 2);
        assert_eq!(log.times_read(), vec![tracked.times()[0], tracked.times()[2]]);
        log.reset();
        assert!(log.times_read().is_empty());

        // Reads from a restricted copy report to the same tracker, and the
        // tracked copy still compares equal to the untracked original.
        assert_eq!(tracked, ds);
        let keep: HashSet<usize> = (0..tracked.units().len()).collect();
        let cut = tracked.times()[1];
        let shorter = tracked.restrict(&keep, Some(cut));
        log.reset();
        let _ = shorter.value(0, 1);
        assert_eq!(log.max_time_read(), Some(cut));
    }

    // Round-trip oracle: canonical serialization is a fixed point of
    // emit -> parse -> emit, and the reloaded dataset compares equal.
    #[test]
    fn csv_round_trip_is_canonical() {
        let ds = sample_dataset();
        let emitted = ds.to_long_csv();
        let reloaded = PanelDataset::parse_long_csv(emitted.as_bytes()).unwrap();
        assert_eq!(reloaded, ds);
        assert_eq!(reloaded.to_long_csv(), emitted);
    }

    #[test]
    fn csv_round_trip_preserves_awkward_floats() {
        let values = vec![
            Some(0.1),
            Some(1.0 / 3.0),
            Some(-1.2345678901234567e-8),
            Some(98765.4321),
        ];
        let ds = PanelDataset::new(
            vec!["a".into(), "b".into()],
            vec![1, 2],
            values,
            "value",
        )
        .unwrap();
        let reloaded = PanelDataset::parse_long_csv(ds.to_long_csv().as_bytes()).unwrap();
        assert_eq!(reloaded, ds);
    }

    #[test]
    fn new_rejects_bad_grids() {
        assert!(matches!(
            PanelDataset::new(vec!["a".into(), "a".into()], vec![1], vec![None, None], "y"),
            Err(PanelError::DuplicateUnit { .. })
        ));
        assert!(matches!(
            PanelDataset::new(vec!["a".into()], vec![2, 2], vec![None, None], "y"),
            Err(PanelError::NonIncreasingTimes)
        ));
        assert!(matches!(
            PanelDataset::new(vec!["a".into()], vec![1, 2], vec![None], "y"),
            Err(PanelError::GridShapeMismatch { .. })
        ));
        assert!(matches!(
            PanelDataset::new(vec!["a,b".into()], vec![1], vec![None], "y"),
            Err(PanelError::InvalidUnitId { .. })
        ));
        assert!(matches!(
            PanelDataset::new(vec!["a".into()], vec![1], vec![Some(f64::NAN)], "y"),
            Err(PanelError::NonFiniteValue { .. })
        ));
    }

    fn spec_all_donors(t0: i32) -> StudySpec {
        StudySpec::new(
            "alpha",
            t0,
            vec!["beta".into(), "gamma".into(), "delta".into()],
        )
    }

    #[test]
    fn validate_drops_incomplete_donor_and_records_reason() {
        let ds = sample_dataset();
        let study = validate(&ds, &spec_all_donors(2002)).unwrap();
        assert_eq!(study.donors(), ["beta", "delta"]);
        assert_eq!(
            study.dropped_units(),
            [("gamma".to_string(), DropReason::Incomplete)]
        );
        assert_eq!(study.dataset().units(), ["alpha", "beta", "delta"]);
        assert_eq!(study.n_pre(), 3);
        assert_eq!(study.n_post(), 1);
    }

    #[test]
    fn validate_is_idempotent() {
        let ds = sample_dataset();
        let spec = spec_all_donors(2002);
        let first = validate(&ds, &spec).unwrap();
        let second = validate(first.dataset(), &spec).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn validate_errors_name_the_failing_rule() {
        let ds = sample_dataset();
        let spec = StudySpec::new("nobody", 2002, vec!["beta".into()]);
        assert!(matches!(
            validate(&ds, &spec),
            Err(PanelError::TreatedMissing { .. })
        ));

        // gamma is missing a cell, so it cannot be treated.
        let spec = StudySpec::new("gamma", 2002, vec!["beta".into()]);
        assert!(matches!(
            validate(&ds, &spec),
            Err(PanelError::TreatedIncomplete { .. })
        ));

        let spec = spec_all_donors(2003);
        assert!(matches!(
            validate(&ds, &spec),
            Err(PanelError::NoPostPeriods { t0: 2003 })
        ));

        let spec = spec_all_donors(2000);
        assert!(matches!(
            validate(&ds, &spec),
            Err(PanelError::TooFewPrePeriods { t0: 2000, found: 1 })
        ));

        // Only donor is incomplete: pool empties out.
        let spec = StudySpec::new("alpha", 2002, vec!["gamma".into()]);
        assert!(matches!(
            validate(&ds, &spec),
            Err(PanelError::EmptyDonorPool)
        ));

        let spec = StudySpec::new("alpha", 2002, vec![]);
        assert!(matches!(
            validate(&ds, &spec),
            Err(PanelError::EmptyDonorPool)
        ));

        let spec = StudySpec::new("alpha", 2002, vec!["alpha".into(), "beta".into()]);
        assert!(matches!(
            validate(&ds, &spec),
            Err(PanelError::TreatedInDonorPool { .. })
        ));
    }

    #[test]
    fn t0_between_observed_periods_splits_by_comparison() {
        let csv = "unit,time,value\na,2000,1\na,2005,2\na,2010,3\nb,2000,1\nb,2005,2\nb,2010,3\n";
        let ds = PanelDataset::parse_long_csv(csv.as_bytes()).unwrap();
        let study = validate(&ds, &StudySpec::new("a", 2007, vec!["b".into()])).unwrap();
        assert_eq!(study.n_pre(), 2);
        assert_eq!(study.n_post(), 1);
    }

    // Cell-by-cell oracle: design matrices reproduce direct dataset lookups.
    #[test]
    fn design_matrices_match_cell_lookups() {
        let ds = sample_dataset();
        let study = validate(&ds, &spec_all_donors(2002)).unwrap();
        let (x1, x0) = study.design_matrices();
        assert_eq!(x1.len(), 3);
        assert_eq!((x0.nrows(), x0.ncols()), (3, 2));
        for (t, time) in [2000, 2001, 2002].into_iter().enumerate() {
            assert_eq!(x1[t], ds.value_by_id("alpha", time).unwrap());
            assert_eq!(x0[(t, 0)], ds.value_by_id("beta", time).unwrap());
            assert_eq!(x0[(t, 1)], ds.value_by_id("delta", time).unwrap());
        }
    }

    #[test]
    fn x1_is_unaffected_by_donor_removal() {
        let ds = sample_dataset();
        let full = validate(&ds, &spec_all_donors(2002)).unwrap();
        let reduced = validate(&ds, &StudySpec::new("alpha", 2002, vec!["beta".into()])).unwrap();
        let (x1_full, _) = full.design_matrices();
        let (x1_reduced, x0_reduced) = reduced.design_matrices();
        assert_eq!(x1_full, x1_reduced);
        assert_eq!(x0_reduced.ncols(), 1);
    }

    #[test]
    fn duplicate_donor_entries_collapse() {
        let ds = sample_dataset();
        let spec = StudySpec::new("alpha", 2002, vec!["beta".into(), "beta".into()]);
        let study = validate(&ds, &spec).unwrap();
        assert_eq!(study.donors(), ["beta"]);
    }
}
