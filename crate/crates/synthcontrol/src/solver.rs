//! Simplex-constrained donor weight solving.
//!
//! Donor weights live on the unit simplex: nonnegative entries summing to
//! one. [`solve_weights`] minimizes the V-weighted pre-treatment
//! discrepancy `sqrt((X1 - X0 w)' V (X1 - X0 w))` by active-set descent
//! over simplex faces: each face subproblem is solved through its KKT
//! system, infeasible face optima trigger a ratio-test step that binds the
//! blocking coordinate, and bound coordinates are released by the most
//! negative multiplier. Convergence is certified by the simplex duality
//! gap, which bounds squared-objective suboptimality directly.
//!
//! [`brute_force_weights`] is the independent lattice oracle used to check
//! the solver on small pools, and [`optimize_v_nested`] grid-searches the
//! diagonal predictor weighting V.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::panel::{VMode, ValidatedStudy};

/// Iteration cap for the active-set solve.
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Default solver tolerance on the squared objective.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Grid values per axis for the nested-V search.
pub const DEFAULT_CANDIDATE_GRID: usize = 101;
/// Weights below this are clamped to exact zero and the rest renormalized.
pub const WEIGHT_CLAMP: f64 = 1e-12;
/// Brute force refuses donor pools larger than this.
pub const BRUTE_FORCE_MAX_DONORS: usize = 6;
/// The nested-V search keeps the best searched grid candidate unless the
/// uniform diagonal beats it by more than this (mean-squared-error scale).
pub const UNIFORM_PREFERENCE_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },
    #[error("donor pool of {donors} exceeds the brute-force cap of {max}")]
    PoolTooLarge { donors: usize, max: usize },
    #[error("grid step {grid_step} does not evenly divide 1")]
    BadGridStep { grid_step: f64 },
    #[error("candidate grid must have at least 2 values, got {grid}")]
    BadCandidateGrid { grid: usize },
    #[error("invalid V weights: {detail}")]
    BadVWeights { detail: String },
}

/// Diagonal predictor weights: nonnegative, summing to one within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct VWeights {
    diag: Vec<f64>,
}

impl VWeights {
    pub fn new(diag: Vec<f64>) -> Result<Self, SolverError> {
        if diag.is_empty() {
            return Err(SolverError::BadVWeights {
                detail: "empty diagonal".into(),
            });
        }
        if diag.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(SolverError::BadVWeights {
                detail: "entries must be finite and nonnegative".into(),
            });
        }
        let sum: f64 = diag.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(SolverError::BadVWeights {
                detail: format!("entries sum to {sum}, expected 1"),
            });
        }
        Ok(Self { diag })
    }

    /// Scales nonnegative entries to sum to one.
    pub fn normalized(raw: Vec<f64>) -> Result<Self, SolverError> {
        let sum: f64 = raw.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(SolverError::BadVWeights {
                detail: format!("entries sum to {sum}, cannot normalize"),
            });
        }
        Self::new(raw.into_iter().map(|x| x / sum).collect())
    }

    pub fn uniform(len: usize) -> Result<Self, SolverError> {
        if len == 0 {
            return Err(SolverError::BadVWeights {
                detail: "empty diagonal".into(),
            });
        }
        Self::new(vec![1.0 / len as f64; len])
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }
}

/// A solved weight vector with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    /// Donor weights on the simplex; `|sum - 1| <= 1e-9`.
    pub w: Vec<f64>,
    /// `sqrt((X1 - X0 w)' V (X1 - X0 w))` at `w`.
    pub objective: f64,
    /// Face solves performed (lattice points evaluated for the oracle).
    pub iterations: usize,
    /// True when the duality-gap certificate met the tolerance.
    pub converged: bool,
}

fn check_dims(
    x1: &DVector<f64>,
    x0: &DMatrix<f64>,
    v: &VWeights,
) -> Result<(usize, usize), SolverError> {
    let (t, j) = (x0.nrows(), x0.ncols());
    if t == 0 || j == 0 {
        return Err(SolverError::DimensionMismatch {
            detail: format!("X0 is {t}x{j}, need at least one period and one donor"),
        });
    }
    if x1.len() != t {
        return Err(SolverError::DimensionMismatch {
            detail: format!("X1 has {} periods, X0 has {t}", x1.len()),
        });
    }
    if v.len() != t {
        return Err(SolverError::DimensionMismatch {
            detail: format!("V has {} entries, X0 has {t} periods", v.len()),
        });
    }
    Ok((t, j))
}

/// V-weighted squared objective `(X1 - X0 w)' V (X1 - X0 w)`.
fn objective_sq(x1: &DVector<f64>, x0: &DMatrix<f64>, v: &VWeights, w: &DVector<f64>) -> f64 {
    let r = x1 - x0 * w;
    r.iter()
        .zip(v.diag())
        .map(|(ri, vi)| vi * ri * ri)
        .sum::<f64>()
        .max(0.0)
}

/// Solves the face KKT system `[2Q_SS 1; 1' 0] [w_S; lambda] = [2c_S; 1]`.
///
/// Falls back to a minimal-norm SVD solve when LU fails or leaves a large
/// residual; the face objective is bounded below, so the system is
/// consistent even when the face is rank-deficient.
fn solve_face(q: &DMatrix<f64>, c: &DVector<f64>, support: &[usize]) -> (DVector<f64>, f64) {
    let n = support.len();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for (i, &si) in support.iter().enumerate() {
        for (k, &sk) in support.iter().enumerate() {
            m[(i, k)] = 2.0 * q[(si, sk)];
        }
        m[(i, n)] = 1.0;
        m[(n, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    for (i, &si) in support.iter().enumerate() {
        rhs[i] = 2.0 * c[si];
    }
    rhs[n] = 1.0;

    let scale = m.amax().max(rhs.amax()).max(1.0);
    if let Some(x) = m.clone().lu().solve(&rhs) {
        let residual = (&m * &x - &rhs).amax();
        if residual <= 1e-9 * scale {
            return (x.rows(0, n).into_owned(), x[n]);
        }
    }
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd
        .solve(&rhs, smax * 1e-13)
        .expect("SVD computed with both factor sets");
    (x.rows(0, n).into_owned(), x[n])
}

/// Minimizes `sqrt((X1 - X0 w)' V (X1 - X0 w))` over the unit simplex.
///
/// Deterministic: starts from the uniform weight vector, breaks index ties
/// toward the lowest donor index, and uses no randomness. `converged` is
/// true when the duality gap certifies the squared objective is within
/// `tol` (plus a float-precision allowance proportional to the gradient
/// scale) of the global optimum; hitting `max_iter` or stalling without
/// the certificate returns the best iterate with `converged = false`.
/// Weights below [`WEIGHT_CLAMP`] are clamped to zero and the rest
/// renormalized.
pub fn solve_weights(
    x1: &DVector<f64>,
    x0: &DMatrix<f64>,
    v: &VWeights,
    tol: f64,
    max_iter: usize,
) -> Result<WeightSolution, SolverError> {
    let (_t, j) = check_dims(x1, x0, v)?;
    let tol = if tol > 0.0 { tol } else { DEFAULT_TOL };

    // Weighted normal-equation data: Q = X0' V X0, c = X0' V X1.
    let vx0 = DMatrix::from_fn(x0.nrows(), j, |r, cidx| v.diag()[r] * x0[(r, cidx)]);
    let q = x0.transpose() * &vx0;
    let c = vx0.transpose() * x1;

    let mut w = DVector::from_element(j, 1.0 / j as f64);
    let mut free = vec![true; j];
    let mut f_curr = objective_sq(x1, x0, v, &w);
    let mut iterations = 0usize;
    let mut stall = 0usize;
    let stall_limit = 3 * (j + 1);
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let support: Vec<usize> = (0..j).filter(|&i| free[i]).collect();
        let (v_s, _lambda) = solve_face(&q, &c, &support);

        let f_next;
        if v_s.iter().all(|&x| x >= -1e-12) {
            // Face optimum is feasible: adopt it, then check optimality.
            for (i, &si) in support.iter().enumerate() {
                w[si] = v_s[i].max(0.0);
            }
            f_next = objective_sq(x1, x0, v, &w);

            let g = 2.0 * (&q * &w - &c);
            let gw = g.dot(&w);
            let gscale = g.amax().max(gw.abs());
            let gap = gw - g.min();
            if gap <= tol + 64.0 * f64::EPSILON * (1.0 + gscale) {
                converged = true;
                break;
            }
            // Release the bound index with the most negative multiplier
            // (equivalently the smallest gradient entry); lowest index wins
            // ties. If none is strictly releasable the certificate cannot
            // be met from this face; fall through to the stall guard.
            let mut best: Option<(usize, f64)> = None;
            for i in 0..j {
                if !free[i] && best.is_none_or(|(_, bg)| g[i] < bg) {
                    best = Some((i, g[i]));
                }
            }
            match best {
                Some((i, gi)) if gi < gw => free[i] = true,
                _ => {
                    converged = false;
                    break;
                }
            }
        } else {
            // Step toward the face optimum until a coordinate blocks.
            let mut alpha = 1.0f64;
            let mut blocker: Option<usize> = None;
            for (i, &si) in support.iter().enumerate() {
                let d = v_s[i] - w[si];
                if d < 0.0 {
                    let limit = w[si] / -d;
                    if limit < alpha {
                        alpha = limit;
                        blocker = Some(si);
                    }
                }
            }
            for (i, &si) in support.iter().enumerate() {
                w[si] = (w[si] + alpha * (v_s[i] - w[si])).max(0.0);
            }
            if let Some(b) = blocker {
                w[b] = 0.0;
                free[b] = false;
            }
            f_next = objective_sq(x1, x0, v, &w);
        }

        if f_curr - f_next < tol * f_curr.max(f64::MIN_POSITIVE) {
            stall += 1;
            if stall > stall_limit {
                break;
            }
        } else {
            stall = 0;
        }
        f_curr = f_next;
    }

    // Clamp dust weights and renormalize exactly.
    let mut wv: Vec<f64> = w.iter().map(|&x| if x < WEIGHT_CLAMP { 0.0 } else { x }).collect();
    let sum: f64 = wv.iter().sum();
    if sum > 0.0 {
        for x in &mut wv {
            *x /= sum;
        }
    } else {
        wv = vec![1.0 / j as f64; j];
    }
    let w_final = DVector::from_column_slice(&wv);
    let objective = objective_sq(x1, x0, v, &w_final).sqrt();

    Ok(WeightSolution {
        w: wv,
        objective,
        iterations,
        converged,
    })
}

/// Visits every composition of `total` into `parts` nonnegative integers in
/// lexicographic order.
fn visit_compositions(total: u64, parts: usize, f: &mut impl FnMut(&[u64])) {
    fn recurse(buf: &mut Vec<u64>, remaining: u64, parts_left: usize, f: &mut impl FnMut(&[u64])) {
        if parts_left == 1 {
            buf.push(remaining);
            f(buf);
            buf.pop();
            return;
        }
        for n in 0..=remaining {
            buf.push(n);
            recurse(buf, remaining - n, parts_left - 1, f);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(parts);
    recurse(&mut buf, total, parts, f);
}

fn lattice_resolution(grid_step: f64) -> Result<u64, SolverError> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(SolverError::BadGridStep { grid_step });
    }
    let k = (1.0 / grid_step).round();
    if k < 1.0 || (k * grid_step - 1.0).abs() > 1e-9 {
        return Err(SolverError::BadGridStep { grid_step });
    }
    Ok(k as u64)
}

/// All simplex lattice points with the given step, in lexicographic order.
///
/// This is exactly the evaluation set of [`brute_force_weights`].
pub fn simplex_lattice_points(j: usize, grid_step: f64) -> Result<Vec<Vec<f64>>, SolverError> {
    let k = lattice_resolution(grid_step)?;
    let mut out = Vec::new();
    visit_compositions(k, j, &mut |counts| {
        out.push(counts.iter().map(|&n| n as f64 / k as f64).collect());
    });
    Ok(out)
}

/// Exhaustive lattice minimization of the V-weighted discrepancy.
///
/// The oracle for small pools: evaluates every simplex lattice point with
/// the given step (combinatorially many; capped at
/// [`BRUTE_FORCE_MAX_DONORS`] donors) and keeps the lexicographically first
/// minimizer. `iterations` reports the number of points evaluated. The
/// objective is evaluated by plain indexed loops, independent of the
/// active-set path.
pub fn brute_force_weights(
    x1: &DVector<f64>,
    x0: &DMatrix<f64>,
    v: &VWeights,
    grid_step: f64,
) -> Result<WeightSolution, SolverError> {
    let (t, j) = check_dims(x1, x0, v)?;
    if j > BRUTE_FORCE_MAX_DONORS {
        return Err(SolverError::PoolTooLarge {
            donors: j,
            max: BRUTE_FORCE_MAX_DONORS,
        });
    }
    let k = lattice_resolution(grid_step)?;

    let mut best_w: Vec<f64> = Vec::new();
    let mut best_f = f64::INFINITY;
    let mut evaluated = 0usize;
    let mut w = vec![0.0f64; j];
    visit_compositions(k, j, &mut |counts| {
        for (wi, &n) in w.iter_mut().zip(counts) {
            *wi = n as f64 / k as f64;
        }
        let mut f = 0.0;
        for row in 0..t {
            let mut synth = 0.0;
            for (col, wi) in w.iter().enumerate() {
                synth += wi * x0[(row, col)];
            }
            let r = x1[row] - synth;
            f += v.diag()[row] * r * r;
        }
        evaluated += 1;
        if f < best_f {
            best_f = f;
            best_w.clone_from(&w);
        }
    });

    Ok(WeightSolution {
        w: best_w,
        objective: best_f.max(0.0).sqrt(),
        iterations: evaluated,
        converged: true,
    })
}

fn compositions_count(total: u64, parts: usize) -> u128 {
    // C(total + parts - 1, parts - 1) with saturation.
    let mut result: u128 = 1;
    for i in 1..parts as u128 {
        result = result.saturating_mul(total as u128 + i);
        result /= i;
        if result > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    result
}

/// Mean squared pre-treatment residual of the weights induced by `v`.
fn induced_pre_mspe(
    x1: &DVector<f64>,
    x0: &DMatrix<f64>,
    v: &VWeights,
    tol: f64,
) -> Result<(f64, WeightSolution), SolverError> {
    let sol = solve_weights(x1, x0, v, tol, DEFAULT_MAX_ITER)?;
    let w = DVector::from_column_slice(&sol.w);
    let r = x1 - x0 * &w;
    let mspe = r.iter().map(|ri| ri * ri).sum::<f64>() / x1.len() as f64;
    Ok((mspe, sol))
}

/// Grid-searches diagonal predictor weights scored by induced pre-treatment
/// MSPE, on raw design matrices. See [`optimize_v_nested`].
pub fn optimize_v_nested_for(
    x1: &DVector<f64>,
    x0: &DMatrix<f64>,
    tol: f64,
    candidate_grid: usize,
) -> Result<VWeights, SolverError> {
    let t = x1.len();
    if t == 0 {
        return Err(SolverError::DimensionMismatch {
            detail: "no pre-treatment periods".into(),
        });
    }
    if t == 1 {
        return VWeights::new(vec![1.0]);
    }
    if candidate_grid < 2 {
        return Err(SolverError::BadCandidateGrid {
            grid: candidate_grid,
        });
    }

    let k = candidate_grid as u64 - 1;
    let mut best: Option<(f64, VWeights)> = None;
    let consider = |cand: VWeights,
                        best: &mut Option<(f64, VWeights)>|
     -> Result<(), SolverError> {
        let (score, _) = induced_pre_mspe(x1, x0, &cand, tol)?;
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            *best = Some((score, cand));
        }
        Ok(())
    };

    if compositions_count(k, t) <= 20_000 {
        // Small axis count: exhaustive simplex lattice over V.
        let mut pending: Vec<VWeights> = Vec::new();
        visit_compositions(k, t, &mut |counts| {
            let diag: Vec<f64> = counts.iter().map(|&n| n as f64 / k as f64).collect();
            if let Ok(v) = VWeights::new(diag) {
                pending.push(v);
            }
        });
        for cand in pending {
            consider(cand, &mut best)?;
        }
    } else {
        // One period re-weighted against a flat remainder, per period.
        for period in 0..t {
            for i in 0..=k {
                let gamma = i as f64 / k as f64;
                let rest = (1.0 - gamma) / (t - 1) as f64;
                let mut diag = vec![rest; t];
                diag[period] = gamma;
                consider(VWeights::normalized(diag)?, &mut best)?;
            }
        }
    }

    let (best_score, best_v) = best.expect("grid is non-empty");
    let uniform = VWeights::uniform(t)?;
    let (uniform_score, _) = induced_pre_mspe(x1, x0, &uniform, tol)?;
    // Keep the searched candidate unless uniform is better by more than the
    // slack; uniform weighting of outcome predictors already minimizes the
    // score, so a strict argmin would never leave it.
    if uniform_score + UNIFORM_PREFERENCE_SLACK < best_score {
        Ok(uniform)
    } else {
        Ok(best_v)
    }
}

/// Grid-searches diagonal predictor weights for a validated study.
///
/// Scores each candidate V by the pre-treatment MSPE of its induced donor
/// weights and returns the best found; the returned V never scores worse
/// than the uniform diagonal by more than [`UNIFORM_PREFERENCE_SLACK`].
pub fn optimize_v_nested(
    study: &ValidatedStudy,
    candidate_grid: usize,
) -> Result<VWeights, SolverError> {
    let (x1, x0) = study.design_matrices();
    optimize_v_nested_for(&x1, &x0, study.spec().solver_tol, candidate_grid)
}

/// Resolves the study's V mode and solves for donor weights.
pub fn solve_study(study: &ValidatedStudy) -> Result<(VWeights, WeightSolution), SolverError> {
    let (x1, x0) = study.design_matrices();
    let v = match study.spec().v_mode {
        VMode::Uniform => VWeights::uniform(x1.len())?,
        VMode::Nested => optimize_v_nested_for(
            &x1,
            &x0,
            study.spec().solver_tol,
            DEFAULT_CANDIDATE_GRID,
        )?,
    };
    let sol = solve_weights(&x1, &x0, &v, study.spec().solver_tol, DEFAULT_MAX_ITER)?;
    Ok((v, sol))
}
