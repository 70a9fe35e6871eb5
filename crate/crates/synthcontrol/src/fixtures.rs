//! Deterministic synthetic panel generators for tests and benchmarks.
//!
//! Two generators cover the needs of property tests and acceptance suites:
//! a latent-factor data-generating process whose treated unit is constructed
//! to be synthesizable (its loadings are a convex combination of donor
//! loadings), and an exact convex-hull panel for recovery tests where the
//! true weights are known.
//!
//! # Reproducibility
//!
//! All randomness comes from the ChaCha8 stream cipher (`rand_chacha`),
//! seeded via `seed_from_u64`. For a fixed seed and fixed arguments the
//! draw order is part of the contract:
//!
//! 1. common time effects δ_t — `T` standard normals, periods ascending;
//! 2. factor series λ_t — `T·F` standard normals, factors inner, periods
//!    outer;
//! 3. donor loadings μ_j — `J·F` standard normals, factors inner, donors
//!    outer;
//! 4. `J` uniform(0,1) proposals, normalized to the simplex (the treated
//!    unit's generating weights);
//! 5. `(J+1)·T` standard normals for the noise term, treated unit first
//!    then donors in order, periods ascending within each unit. Noise draws
//!    are always consumed and scaled by `noise_sd`, so panels with
//!    different noise amplitudes share the same latent structure.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::panel::{PanelDataset, PanelError, StudySpec};

/// Errors from the fixture generators.
#[derive(Debug, Error)]
pub enum FixtureError {
    /// Requested panel dimensions cannot form a valid study.
    #[error("bad fixture dimensions: {detail}")]
    BadDimensions { detail: String },
    /// Supplied weights are not a point on the probability simplex.
    #[error("infeasible weights: {detail}")]
    InfeasibleWeights { detail: String },
    /// Assembling the dataset failed.
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// A generated panel together with the ground truth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPanel {
    /// The panel, complete (no missing cells), treated unit listed first.
    pub dataset: PanelDataset,
    /// Name of the treated unit.
    pub treated: String,
    /// Last pre-intervention period.
    pub t0: i32,
    /// The convex combination that generated the treated unit.
    pub true_weights: Vec<f64>,
}

impl GeneratedPanel {
    /// All units except the treated one, in dataset order.
    pub fn donors(&self) -> Vec<String> {
        self.dataset
            .units()
            .iter()
            .filter(|u| **u != self.treated)
            .cloned()
            .collect()
    }

    /// A default study configuration for this panel.
    pub fn study_spec(&self) -> StudySpec {
        StudySpec::new(&self.treated, self.t0, self.donors())
    }
}

fn check_dims(
    j: usize,
    t: usize,
    f: usize,
    noise_sd: f64,
    effect: &[f64],
) -> Result<(), FixtureError> {
    let fail = |detail: String| Err(FixtureError::BadDimensions { detail });
    if j < 2 {
        return fail(format!("need at least 2 donors, got {j}"));
    }
    if t < 4 {
        return fail(format!("need at least 4 periods, got {t}"));
    }
    if f < 1 {
        return fail(format!("need at least 1 factor, got {f}"));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return fail(format!("noise amplitude must be finite and >= 0, got {noise_sd}"));
    }
    if effect.is_empty() || effect.len() > t - 2 {
        return fail(format!(
            "effect must cover between 1 and {} post periods, got {}",
            t - 2,
            effect.len()
        ));
    }
    if effect.iter().any(|e| !e.is_finite()) {
        return fail("effect entries must be finite".to_string());
    }
    Ok(())
}

fn unit_names(j: usize) -> (String, Vec<String>) {
    let width = j.to_string().len().max(2);
    let donors = (1..=j)
        .map(|i| format!("donor{i:0width$}"))
        .collect();
    ("treated".to_string(), donors)
}

fn assemble(
    treated_path: Vec<f64>,
    donor_cols: &DMatrix<f64>,
    true_weights: Vec<f64>,
) -> Result<GeneratedPanel, FixtureError> {
    let t = donor_cols.nrows();
    let j = donor_cols.ncols();
    let (treated, donors) = unit_names(j);
    let mut units = vec![treated.clone()];
    units.extend(donors);
    let mut values: Vec<Option<f64>> = treated_path.into_iter().map(Some).collect();
    for col in 0..j {
        for row in 0..t {
            values.push(Some(donor_cols[(row, col)]));
        }
    }
    let times: Vec<i32> = (1..=t as i32).map(|k| 2000 + k).collect();
    // "value" matches the name the CSV loader assigns, so generated panels
    // round-trip through the on-disk format without metadata drift.
    let dataset = PanelDataset::new(units, times, values, "value")?;
    Ok(GeneratedPanel {
        dataset,
        treated,
        t0: 0, // overwritten by callers
        true_weights,
    })
}

/// Generate a latent-factor panel: `Y_jt = δ_t + λ_t'μ_j + ε_jt`.
///
/// The treated unit's loadings are a convex combination of donor loadings
/// (drawn uniformly on the simplex and returned as `true_weights`), so a
/// perfect synthetic control exists whenever `noise_sd = 0`. `effect` is
/// added to the treated unit over the last `effect.len()` periods, which
/// defines the intervention time: `t0 = 2000 + (T − effect.len())`.
pub fn gen_factor_panel(
    seed: u64,
    j: usize,
    t: usize,
    f: usize,
    noise_sd: f64,
    effect: &[f64],
) -> Result<GeneratedPanel, FixtureError> {
    check_dims(j, t, f, noise_sd, effect)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let delta: Vec<f64> = (0..t).map(|_| normal(&mut rng)).collect();
    let mut lambda = DMatrix::zeros(t, f);
    for row in 0..t {
        for col in 0..f {
            lambda[(row, col)] = normal(&mut rng);
        }
    }
    let mut mu = DMatrix::zeros(f, j);
    for col in 0..j {
        for row in 0..f {
            mu[(row, col)] = normal(&mut rng);
        }
    }
    let proposals: Vec<f64> = (0..j).map(|_| rng.gen_range(0.0..1.0)).collect();
    let total: f64 = proposals.iter().sum();
    let true_weights: Vec<f64> = proposals.iter().map(|p| p / total).collect();

    let mut noise = vec![0.0; (j + 1) * t];
    for cell in noise.iter_mut() {
        *cell = noise_sd * normal(&mut rng);
    }

    // Donor outcomes.
    let mut donor_cols = DMatrix::zeros(t, j);
    for col in 0..j {
        for row in 0..t {
            let factor_part: f64 = (0..f).map(|k| lambda[(row, k)] * mu[(k, col)]).sum();
            donor_cols[(row, col)] = delta[row] + factor_part + noise[(col + 1) * t + row];
        }
    }
    // Treated outcomes: loadings are the convex combination of donor
    // loadings, which (because Σw = 1 distributes over δ_t) makes the
    // noiseless treated path the same combination of noiseless donor paths.
    let n_post = effect.len();
    let t0 = 2000 + (t - n_post) as i32;
    let mut treated_path = Vec::with_capacity(t);
    for row in 0..t {
        let mut mu_treated = vec![0.0; f];
        for k in 0..f {
            mu_treated[k] = (0..j).map(|col| true_weights[col] * mu[(k, col)]).sum();
        }
        let factor_part: f64 = (0..f).map(|k| lambda[(row, k)] * mu_treated[k]).sum();
        let mut y = delta[row] + factor_part + noise[row];
        if row >= t - n_post {
            y += effect[row - (t - n_post)];
        }
        treated_path.push(y);
    }

    let mut panel = assemble(treated_path, &donor_cols, true_weights)?;
    panel.t0 = t0;
    Ok(panel)
}

/// Generate a panel whose treated unit lies exactly on the donor hull.
///
/// `donor_paths` is `T x J` (periods by donors); the treated path is
/// `donor_paths · weights`, with `effect` added over the last
/// `effect.len()` periods (`t0 = 2000 + (T − effect.len())`). Useful for
/// exact-recovery tests: the optimal weights are `weights` and the true
/// post-intervention gaps are `effect`.
pub fn gen_convex_hull_panel(
    weights: &[f64],
    donor_paths: &DMatrix<f64>,
    effect: &[f64],
) -> Result<GeneratedPanel, FixtureError> {
    let t = donor_paths.nrows();
    let j = donor_paths.ncols();
    if weights.len() != j {
        return Err(FixtureError::InfeasibleWeights {
            detail: format!("{} weights for {j} donor paths", weights.len()),
        });
    }
    if j < 1 || t < 4 {
        return Err(FixtureError::BadDimensions {
            detail: format!("donor path matrix is {t}x{j}; need at least 4 periods and 1 donor"),
        });
    }
    if effect.is_empty() || effect.len() > t - 2 {
        return Err(FixtureError::BadDimensions {
            detail: format!(
                "effect must cover between 1 and {} post periods, got {}",
                t - 2,
                effect.len()
            ),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(FixtureError::InfeasibleWeights {
            detail: "weights must be finite and non-negative".to_string(),
        });
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(FixtureError::InfeasibleWeights {
            detail: format!("weights sum to {sum}, expected 1"),
        });
    }

    let n_post = effect.len();
    let mut treated_path = Vec::with_capacity(t);
    for row in 0..t {
        let mut y: f64 = (0..j).map(|col| weights[col] * donor_paths[(row, col)]).sum();
        if row >= t - n_post {
            y += effect[row - (t - n_post)];
        }
        treated_path.push(y);
    }
    let mut panel = assemble(treated_path, donor_paths, weights.to_vec())?;
    panel.t0 = 2000 + (t - n_post) as i32;
    Ok(panel)
}
