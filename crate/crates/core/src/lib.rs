//! Learning-free robust 6D pose estimation.
//!
//! The pipeline takes sparse 2D–3D correspondences, derives per-point
//! confidence weights from the voxel-support density of the 3D points,
//! and estimates a pose by annealing a Geman–McClure soft inlier score:
//! each stage selects the correspondences whose score and geometry weight
//! clear fixed thresholds, re-solves an unweighted PnP on the selection,
//! and tightens the non-convexity parameter until it reaches its floor. A
//! Levenberg–Marquardt pass polishes the final pose.
//!
//! The crate also ships the standard pose-accuracy metrics (mean and
//! nearest-neighbor model-point distance with exact accuracy-curve areas),
//! a seeded synthetic-scene generator, and a Monte-Carlo harness used by
//! the CLI for robustness and ablation experiments.
//!
//! Data-parallel sections (hypothesis scoring, metric reductions, trial
//! batches) run on rayon under the default `parallel` feature and fall
//! back to sequential loops without it; outputs are bit-identical either
//! way.

pub mod experiment;
pub mod geom_weight;
pub mod gnc;
pub mod io;
pub mod metrics;
mod par;
pub mod pnp;
pub mod projection;
pub mod robust_loss;
pub mod synth;
pub mod types;

pub use types::{
    CameraIntrinsics, Correspondence, CorrespondenceSet, GncConfig, Pose, PoseEstimate,
};
