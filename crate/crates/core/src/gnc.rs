//! Outer graduated non-convexity loop: score → select → solve →
//! re-residual → anneal, then a final Levenberg–Marquardt refinement on the
//! last surviving inlier set.

use thiserror::Error;

use crate::pnp::{self, PnpError, RansacConfig, DEFAULT_GN_MAX_ITER, DEFAULT_GN_TOL};
use crate::projection::{residuals, ResidualVector};
use crate::robust_loss::{anneal_mu, gnc_score, initial_mu, LossError};
use crate::types::{CameraIntrinsics, CorrespondenceSet, GncConfig, Pose, PoseEstimate, TraceEntry};

#[derive(Debug, Error)]
pub enum GncError {
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },
    #[error("initialization failed: {0}")]
    InitializationFailed(PnpError),
    #[error("no finite residuals under the initial pose")]
    NoFiniteResiduals,
    #[error("residuals ({residuals}) and geometry weights ({weights}) differ in length")]
    LengthMismatch { residuals: usize, weights: usize },
    #[error("invalid GNC config: {0}")]
    InvalidConfig(&'static str),
}

/// Diagnostic record of one completed outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GncIterationRecord {
    /// Non-convexity value the selection ran at, squared pixels.
    pub mu: f64,
    /// Indices that passed both the score and geometry gates.
    pub inlier_indices: Vec<usize>,
    /// Pose after the inner solve on those indices.
    pub pose: Pose,
    /// Median of the finite residuals after the solve, squared pixels.
    pub median_residual: f64,
}

/// Indices whose soft inlier score strictly exceeds `tau_gnc` AND whose
/// geometry weight strictly exceeds `tau_geom`.
pub fn select_inliers(
    residuals: &ResidualVector,
    geom_weights: &[f64],
    mu: f64,
    tau_gnc: f64,
    tau_geom: f64,
) -> Result<Vec<usize>, GncError> {
    if residuals.len() != geom_weights.len() {
        return Err(GncError::LengthMismatch {
            residuals: residuals.len(),
            weights: geom_weights.len(),
        });
    }
    let mut selected = Vec::new();
    for (i, (&r, &w)) in residuals.iter().zip(geom_weights.iter()).enumerate() {
        let score = gnc_score(r, mu).map_err(|_: LossError| {
            GncError::InvalidConfig("non-positive mu or negative residual in selection")
        })?;
        if score > tau_gnc && w > tau_geom {
            selected.push(i);
        }
    }
    Ok(selected)
}

fn median_finite(res: &ResidualVector) -> f64 {
    let mut finite: Vec<f64> = res.finite().collect();
    if finite.is_empty() {
        return f64::INFINITY;
    }
    finite.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = finite.len();
    if n % 2 == 1 {
        finite[n / 2]
    } else {
        0.5 * (finite[n / 2 - 1] + finite[n / 2])
    }
}

fn mean_over(res: &ResidualVector, indices: &[usize]) -> f64 {
    if indices.is_empty() {
        return f64::NAN;
    }
    indices.iter().map(|&i| res[i]).sum::<f64>() / indices.len() as f64
}

fn mask_from_indices(n: usize, indices: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; n];
    for &i in indices {
        mask[i] = true;
    }
    mask
}

/// Full pipeline with explicit per-point geometry weights; also returns the
/// per-iteration records for diagnostics.
pub fn gnc_pnp_detailed(
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
    geom_weights: &[f64],
    cfg: &GncConfig,
    ransac_cfg: &RansacConfig,
) -> Result<(PoseEstimate, Vec<GncIterationRecord>), GncError> {
    cfg.validate()
        .map_err(|_| GncError::InvalidConfig("GncConfig invariants violated"))?;
    if c.len() < cfg.min_inliers {
        return Err(GncError::TooFewCorrespondences {
            needed: cfg.min_inliers,
            got: c.len(),
        });
    }
    if geom_weights.len() != c.len() {
        return Err(GncError::LengthMismatch {
            residuals: c.len(),
            weights: geom_weights.len(),
        });
    }

    let init = match pnp::ransac_pnp(k, c, ransac_cfg) {
        Ok(report) => report,
        Err(PnpError::TooFewCorrespondences { needed, got }) => {
            return Err(GncError::TooFewCorrespondences { needed, got })
        }
        Err(err) => return Err(GncError::InitializationFailed(err)),
    };

    let mut pose = init.pose;
    let mut res = residuals(k, &pose, c);
    let mut mu = match initial_mu(&res, cfg.kappa, cfg.epsilon) {
        Ok(mu) => mu,
        Err(LossError::NoFiniteResiduals) => return Err(GncError::NoFiniteResiduals),
        Err(_) => return Err(GncError::InvalidConfig("kappa/epsilon out of domain")),
    };

    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut records: Vec<GncIterationRecord> = Vec::new();
    let mut last_selected: Option<Vec<usize>> = None;
    let mut breakout_selection: Vec<usize> = Vec::new();
    let mut converged = false;

    for _ in 0..cfg.max_iterations {
        let selected = select_inliers(&res, geom_weights, mu, cfg.tau_gnc, cfg.tau_geom)?;
        if selected.len() < cfg.min_inliers {
            breakout_selection = selected;
            converged = false;
            break;
        }

        // Inner solves are unweighted over the selected subset; the weights
        // only decide membership.
        match pnp::iterative_pnp(k, c, &selected, &pose, DEFAULT_GN_MAX_ITER, DEFAULT_GN_TOL) {
            Ok(report) => pose = report.pose,
            // A numerically dead inner system ends the schedule early with
            // the last good pose, like a min-inlier breakout.
            Err(_) => {
                breakout_selection = selected;
                converged = false;
                break;
            }
        }
        res = residuals(k, &pose, c);

        trace.push(TraceEntry {
            mu,
            inlier_count: selected.len(),
            mean_residual: mean_over(&res, &selected),
        });
        records.push(GncIterationRecord {
            mu,
            inlier_indices: selected.clone(),
            pose,
            median_residual: median_finite(&res),
        });
        last_selected = Some(selected);

        // The pass that ran at mu_final is the last one.
        if mu <= cfg.mu_final {
            converged = true;
            break;
        }
        mu = anneal_mu(mu, cfg.gamma, cfg.mu_final);
    }

    let estimate = match last_selected {
        Some(selected) => {
            let refined = pnp::refine_lm(k, c, &selected, &pose)
                .map(|report| report.pose)
                .unwrap_or(pose);
            PoseEstimate {
                pose: refined,
                inlier_mask: mask_from_indices(c.len(), &selected),
                trace,
                converged,
            }
        }
        // The very first selection failed: fall back to the RANSAC pose.
        None => PoseEstimate {
            pose: init.pose,
            inlier_mask: mask_from_indices(c.len(), &breakout_selection),
            trace,
            converged: false,
        },
    };
    Ok((estimate, records))
}

/// Robust pose from correspondences and per-point geometry weights.
pub fn gnc_pnp(
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
    geom_weights: &[f64],
    cfg: &GncConfig,
    ransac_cfg: &RansacConfig,
) -> Result<PoseEstimate, GncError> {
    gnc_pnp_detailed(k, c, geom_weights, cfg, ransac_cfg).map(|(estimate, _)| estimate)
}

/// Ablation arm with uniform geometry weights: every point passes the
/// geometry gate and only the soft score selects.
pub fn gnc_pnp_unweighted(
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
    cfg: &GncConfig,
    ransac_cfg: &RansacConfig,
) -> Result<PoseEstimate, GncError> {
    let weights = vec![1.0; c.len()];
    gnc_pnp(k, c, &weights, cfg, ransac_cfg)
}
