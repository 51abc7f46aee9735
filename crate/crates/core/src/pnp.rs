//! Pose solvers for the outer robust loop: a six-point DLT minimal solver
//! wrapped in RANSAC for initialization, damped Gauss–Newton refinement on
//! an index subset, and a Levenberg–Marquardt final polish.
//!
//! RANSAC draws its full sample schedule up front from the seeded generator,
//! so hypothesis evaluation can run in parallel while staying bit-identical
//! for a fixed seed regardless of thread count.

use nalgebra::{Cholesky, Matrix3, SMatrix, SVector, Vector2, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::par;
use crate::projection::{apply_left_increment, cost_on_subset, project, residual_jacobian};
use crate::types::{CameraIntrinsics, CorrespondenceSet, Pose};

type Matrix6 = SMatrix<f64, 6, 6>;
type Matrix12 = SMatrix<f64, 12, 12>;
type Vector12 = SVector<f64, 12>;

/// Default iteration cap for the damped Gauss–Newton refinement.
pub const DEFAULT_GN_MAX_ITER: usize = 50;
/// Default relative cost-decrease tolerance for Gauss–Newton termination.
pub const DEFAULT_GN_TOL: f64 = 1e-10;

const GN_INITIAL_DAMPING: f64 = 1e-8;
const LM_INITIAL_DAMPING: f64 = 1e-3;
const LM_MAX_ITER: usize = 100;
const LM_TOL: f64 = 1e-12;
const DAMPING_CEILING: f64 = 1e12;
const DAMPING_FLOOR: f64 = 1e-12;
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum PnpError {
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },
    #[error("no consensus: best hypothesis supported {best} inliers, need {needed}")]
    NoConsensus { best: usize, needed: usize },
    #[error("normal equations singular beyond damping recovery")]
    NumericalFailure,
    #[error("invalid RANSAC config: {0}")]
    InvalidConfig(&'static str),
}

/// RANSAC initialization parameters. The inlier threshold applies to the
/// UNSQUARED pixel reprojection error, independently of the squared
/// residuals the robust loop consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Pixel threshold on the unsquared reprojection error.
    pub inlier_threshold: f64,
    /// Minimal-sample size; the DLT solver needs at least 6.
    pub sample_size: usize,
    /// Early-exit confidence in (0, 1).
    pub confidence: f64,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            inlier_threshold: 8.0,
            sample_size: 6,
            confidence: 0.99,
            rng_seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), PnpError> {
        if self.inlier_threshold <= 0.0 || self.inlier_threshold.is_nan() {
            return Err(PnpError::InvalidConfig("inlier_threshold must be positive"));
        }
        if self.confidence.is_nan() || self.confidence <= 0.0 || self.confidence >= 1.0 {
            return Err(PnpError::InvalidConfig("confidence must lie in (0, 1)"));
        }
        if self.sample_size < 6 {
            return Err(PnpError::InvalidConfig("sample_size below DLT minimum of 6"));
        }
        if self.max_iterations == 0 {
            return Err(PnpError::InvalidConfig("max_iterations must be positive"));
        }
        Ok(())
    }
}

/// Outcome of a single solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub pose: Pose,
    /// Hypotheses evaluated (RANSAC) or accepted steps (iterative solvers).
    pub iterations_used: usize,
    /// Sum of squared pixel errors over the solved subset / inlier set.
    pub final_cost: f64,
    /// Consensus mask over all correspondences; RANSAC only.
    pub inlier_mask: Option<Vec<bool>>,
}

// ── DLT minimal solver ──────────────────────────────────────────────────

/// Direct linear transform on the 3×4 projection matrix from normalized
/// image coordinates, followed by projection of the rotation block onto
/// SO(3). Returns `None` on degenerate configurations.
fn dlt_pose(world: &[Vector3<f64>], image_norm: &[Vector2<f64>]) -> Option<Pose> {
    let n = world.len();
    if n < 6 || image_norm.len() != n {
        return None;
    }

    let mut centroid = Vector3::zeros();
    for p in world {
        centroid += p;
    }
    centroid /= n as f64;

    let mut mean_dist = 0.0;
    for p in world {
        mean_dist += (p - centroid).norm();
    }
    mean_dist /= n as f64;
    if mean_dist <= 1e-12 || mean_dist.is_nan() {
        return None;
    }
    let scale = 3f64.sqrt() / mean_dist;

    // Accumulate AᵀA from the two DLT rows of each correspondence.
    let mut ata = Matrix12::zeros();
    for (p, obs) in world.iter().zip(image_norm.iter()) {
        let x = (p - centroid) * scale;
        let (u, v) = (obs.x, obs.y);
        let row_u = Vector12::from_row_slice(&[
            x.x, x.y, x.z, 1.0, 0.0, 0.0, 0.0, 0.0, -u * x.x, -u * x.y, -u * x.z, -u,
        ]);
        let row_v = Vector12::from_row_slice(&[
            0.0, 0.0, 0.0, 0.0, x.x, x.y, x.z, 1.0, -v * x.x, -v * x.y, -v * x.z, -v,
        ]);
        ata += row_u * row_u.transpose();
        ata += row_v * row_v.transpose();
    }
    if ata.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let eig = ata.symmetric_eigen();
    let mut min_idx = 0;
    for i in 1..12 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    let p = eig.eigenvectors.column(min_idx);

    // Reshape and undo the world normalization: X' = scale·(X − c).
    let m_norm = Matrix3::new(p[0], p[1], p[2], p[4], p[5], p[6], p[8], p[9], p[10]);
    let t_norm = Vector3::new(p[3], p[7], p[11]);
    let m = m_norm * scale;
    let t_col = t_norm - m_norm * (scale * centroid);

    // The signed scale recovers both the magnitude and the cheirality sign.
    let det = m.determinant();
    let row_norm = (m.row(0).norm() + m.row(1).norm() + m.row(2).norm()) / 3.0;
    let s = det.signum() * row_norm;
    if !s.is_finite() || s.abs() < 1e-12 {
        return None;
    }

    let rotation = nearest_rotation(&(m / s))?;
    let translation = t_col / s;
    if translation.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Pose {
        rotation,
        translation,
    })
}

/// Nearest rotation matrix in the Frobenius sense, via SVD with sign fix.
fn nearest_rotation(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let mut u = svd.u?;
    let v_t = svd.v_t?;
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(r)
}

fn normalized_pixel(k: &CameraIntrinsics, pixel: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy)
}

fn count_inliers(
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
    pose: &Pose,
    threshold: f64,
) -> usize {
    c.iter()
        .filter(|corr| match project(k, pose, &corr.point) {
            Ok(proj) => (proj - corr.pixel).norm() < threshold,
            Err(_) => false,
        })
        .count()
}

fn consensus_mask(
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
    pose: &Pose,
    threshold: f64,
) -> Vec<bool> {
    c.iter()
        .map(|corr| match project(k, pose, &corr.point) {
            Ok(proj) => (proj - corr.pixel).norm() < threshold,
            Err(_) => false,
        })
        .collect()
}

/// Adaptive iteration bound from the standard consensus-ratio formula.
fn required_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64, cap: usize) -> usize {
    let p_all = inlier_ratio.powi(sample_size as i32);
    if p_all >= 1.0 - 1e-15 {
        return 1;
    }
    if p_all <= 1e-15 {
        return cap;
    }
    let needed = ((1.0 - confidence).ln() / (1.0 - p_all).ln()).ceil();
    if !needed.is_finite() {
        return cap;
    }
    (needed as usize).clamp(1, cap)
}

// ── RANSAC ──────────────────────────────────────────────────────────────

/// Robust initialization: repeated six-point DLT fits with consensus
/// counting under the pixel threshold, followed by an unweighted
/// Gauss–Newton refit on the winning consensus set.
///
/// Deterministic for a fixed `rng_seed`: the sample schedule is drawn
/// before evaluation and the adaptive early exit scans hypotheses in
/// schedule order.
pub fn ransac_pnp(
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
    cfg: &RansacConfig,
) -> Result<SolveReport, PnpError> {
    cfg.validate()?;
    let n = c.len();

    let pool: Vec<usize> = (0..n)
        .filter(|&i| {
            let corr = &c[i];
            corr.pixel.iter().all(|v| v.is_finite()) && corr.point.iter().all(|v| v.is_finite())
        })
        .collect();
    if pool.len() < cfg.sample_size {
        return Err(PnpError::TooFewCorrespondences {
            needed: cfg.sample_size,
            got: pool.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let schedule: Vec<Vec<usize>> = (0..cfg.max_iterations)
        .map(|_| {
            rand::seq::index::sample(&mut rng, pool.len(), cfg.sample_size)
                .iter()
                .map(|j| pool[j])
                .collect()
        })
        .collect();

    let mut best: Option<(usize, Pose)> = None;
    let mut evaluated = 0usize;
    'search: for chunk in schedule.chunks(EVAL_CHUNK) {
        let hypotheses: Vec<Option<(Pose, usize)>> = par::map_slice(chunk, |sample| {
            let world: Vec<Vector3<f64>> = sample.iter().map(|&i| c[i].point).collect();
            let image: Vec<Vector2<f64>> =
                sample.iter().map(|&i| normalized_pixel(k, &c[i].pixel)).collect();
            dlt_pose(&world, &image)
                .map(|pose| {
                    let count = count_inliers(k, c, &pose, cfg.inlier_threshold);
                    (pose, count)
                })
        });
        for hypothesis in hypotheses {
            evaluated += 1;
            if let Some((pose, count)) = hypothesis {
                let improves = match &best {
                    None => count > 0,
                    Some((best_count, _)) => count > *best_count,
                };
                if improves {
                    best = Some((count, pose));
                }
            }
            if let Some((best_count, _)) = &best {
                let ratio = *best_count as f64 / n as f64;
                let needed =
                    required_iterations(ratio, cfg.sample_size, cfg.confidence, cfg.max_iterations);
                if evaluated >= needed {
                    break 'search;
                }
            }
        }
    }

    let (best_count, best_pose) = best.ok_or(PnpError::NoConsensus {
        best: 0,
        needed: cfg.sample_size,
    })?;
    if best_count < cfg.sample_size {
        return Err(PnpError::NoConsensus {
            best: best_count,
            needed: cfg.sample_size,
        });
    }

    let consensus: Vec<usize> = consensus_mask(k, c, &best_pose, cfg.inlier_threshold)
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();

    // Refit on the consensus set; fall back to the raw hypothesis when the
    // refit cannot make progress.
    let refined = iterative_pnp(k, c, &consensus, &best_pose, DEFAULT_GN_MAX_ITER, DEFAULT_GN_TOL)
        .map(|report| report.pose)
        .unwrap_or(best_pose);

    let mask = consensus_mask(k, c, &refined, cfg.inlier_threshold);
    let final_subset: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    let final_cost = cost_on_subset(k, &refined, c, &final_subset);

    Ok(SolveReport {
        pose: refined,
        iterations_used: evaluated,
        final_cost,
        inlier_mask: Some(mask),
    })
}

// ── Damped least-squares refinement ─────────────────────────────────────

fn build_normal_system(
    k: &CameraIntrinsics,
    pose: &Pose,
    c: &CorrespondenceSet,
    subset: &[usize],
) -> Option<(Matrix6, Vector6<f64>, f64)> {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    let mut cost = 0.0;
    for &i in subset {
        let corr = &c[i];
        let jac = residual_jacobian(k, pose, &corr.point).ok()?;
        let proj = project(k, pose, &corr.point).ok()?;
        let e = proj - corr.pixel;
        h += jac.transpose() * jac;
        g += jac.transpose() * e;
        cost += e.norm_squared();
    }
    Some((h, g, cost))
}

fn damped_least_squares(
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
    subset: &[usize],
    initial: &Pose,
    max_iter: usize,
    rel_tol: f64,
    initial_damping: f64,
) -> Result<SolveReport, PnpError> {
    if subset.len() < 4 {
        return Err(PnpError::TooFewCorrespondences {
            needed: 4,
            got: subset.len(),
        });
    }

    let initial_cost = cost_on_subset(k, initial, c, subset);
    if !initial_cost.is_finite() {
        return Err(PnpError::NumericalFailure);
    }

    let mut current = *initial;
    let mut current_cost = initial_cost;
    let mut iterations_used = 0usize;
    let mut lambda = initial_damping;

    'outer: for _ in 0..max_iter {
        if current_cost == 0.0 {
            break;
        }
        let Some((h, g, _)) = build_normal_system(k, &current, c, subset) else {
            break;
        };

        let mut accepted = false;
        let mut solved_any = false;
        while lambda <= DAMPING_CEILING {
            let damped = h + Matrix6::identity() * lambda;
            let Some(chol) = Cholesky::new(damped) else {
                lambda *= 10.0;
                continue;
            };
            solved_any = true;
            let delta = chol.solve(&(-g));
            let candidate = apply_left_increment(&current, &delta);
            let candidate_cost = cost_on_subset(k, &candidate, c, subset);
            if candidate_cost < current_cost {
                let previous = current_cost;
                current = candidate;
                current_cost = candidate_cost;
                iterations_used += 1;
                lambda = (lambda * 0.1).max(DAMPING_FLOOR);
                accepted = true;
                if previous - candidate_cost < rel_tol * previous {
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
        }

        if !accepted {
            if !solved_any && iterations_used == 0 {
                return Err(PnpError::NumericalFailure);
            }
            break;
        }
    }

    Ok(SolveReport {
        pose: current,
        iterations_used,
        final_cost: current_cost,
        inlier_mask: None,
    })
}

/// Damped Gauss–Newton minimization of the unweighted sum of squared pixel
/// errors over `subset`. Terminates when the relative cost decrease falls
/// below `tol` or after `max_iter` accepted steps; the returned cost never
/// exceeds the initial cost.
pub fn iterative_pnp(
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
    subset: &[usize],
    initial: &Pose,
    max_iter: usize,
    tol: f64,
) -> Result<SolveReport, PnpError> {
    damped_least_squares(k, c, subset, initial, max_iter, tol, GN_INITIAL_DAMPING)
}

/// Levenberg–Marquardt polish of the same objective: damping multiplied by
/// 10 on a cost increase and divided by 10 on a decrease, starting at 1e-3.
pub fn refine_lm(
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
    subset: &[usize],
    initial: &Pose,
) -> Result<SolveReport, PnpError> {
    damped_least_squares(k, c, subset, initial, LM_MAX_ITER, LM_TOL, LM_INITIAL_DAMPING)
}
