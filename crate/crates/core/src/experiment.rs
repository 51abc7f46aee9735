//! Seeded Monte-Carlo harness: runs one of four solver arms over synthetic
//! scenes, scores each trial against ground truth, and aggregates summary
//! rows in the ablation-table column order.
//!
//! All randomness flows from `base_seed + trial_index`, trials may execute
//! concurrently, and results are collected in trial order, so repeated runs
//! produce identical output. Wall-clock timing is kept out of the CSV
//! unless explicitly requested, keeping the files byte-reproducible.

use std::fmt::Write as _;
use std::time::Instant;

use crate::geom_weight::{compute_weights, VoxelGridConfig};
use crate::gnc::{gnc_pnp, gnc_pnp_unweighted, GncError};
use crate::metrics::{add, add_s, auc};
use crate::par;
use crate::pnp::{ransac_pnp, refine_lm, PnpError, RansacConfig};
use crate::synth::{generate, SceneConfig, SynthError};
use crate::types::{
    rotation_geodesic_error, CameraIntrinsics, CorrespondenceSet, GncConfig, Pose,
};

/// Absolute threshold for the fixed-normalization curve area, meters.
pub const AUC_ABSOLUTE_THRESHOLD: f64 = 0.1;

/// The four solver arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentMode {
    /// Geometry-weighted GNC with LM refinement.
    Full,
    /// GNC with uniform geometry weights.
    NoGeomWeights,
    /// RANSAC initialization plus LM refinement, no GNC schedule.
    NoGnc,
    /// RANSAC initialization alone.
    RansacOnly,
}

impl ExperimentMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentMode::Full => "full",
            ExperimentMode::NoGeomWeights => "no-geom-weights",
            ExperimentMode::NoGnc => "no-gnc",
            ExperimentMode::RansacOnly => "ransac-only",
        }
    }

    pub fn all() -> [ExperimentMode; 4] {
        [
            ExperimentMode::Full,
            ExperimentMode::NoGeomWeights,
            ExperimentMode::NoGnc,
            ExperimentMode::RansacOnly,
        ]
    }
}

impl std::str::FromStr for ExperimentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(ExperimentMode::Full),
            "no-geom-weights" => Ok(ExperimentMode::NoGeomWeights),
            "no-gnc" => Ok(ExperimentMode::NoGnc),
            "ransac-only" => Ok(ExperimentMode::RansacOnly),
            other => Err(format!(
                "unknown mode {other:?}; expected full, no-geom-weights, no-gnc, or ransac-only"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub mode: ExperimentMode,
    pub scene: SceneConfig,
    pub voxel: VoxelGridConfig,
    pub gnc: GncConfig,
    pub ransac: RansacConfig,
    pub trials: usize,
    pub base_seed: u64,
}

impl ExperimentSpec {
    pub fn new(mode: ExperimentMode, scene: SceneConfig) -> Self {
        Self {
            mode,
            scene,
            voxel: VoxelGridConfig::default(),
            gnc: GncConfig::default(),
            ransac: RansacConfig::default(),
            trials: 1,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialStatus {
    Ok,
    /// Stable kebab-case failure label, e.g. `no-consensus`.
    Failed(String),
}

impl TrialStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, TrialStatus::Ok)
    }

    fn label(&self) -> &str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Failed(label) => label,
        }
    }
}

/// Per-trial outcome; metric fields are NaN on failed trials.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub status: TrialStatus,
    pub rotation_error_deg: f64,
    pub translation_error_m: f64,
    pub add_m: f64,
    pub add_s_m: f64,
    pub inlier_precision: f64,
    pub inlier_recall: f64,
    pub converged: bool,
    pub wall_time_ms: f64,
    pub model_diameter_m: f64,
}

impl TrialRecord {
    fn failed(trial_index: usize, label: impl Into<String>) -> Self {
        Self {
            trial_index,
            status: TrialStatus::Failed(label.into()),
            rotation_error_deg: f64::NAN,
            translation_error_m: f64::NAN,
            add_m: f64::NAN,
            add_s_m: f64::NAN,
            inlier_precision: f64::NAN,
            inlier_recall: f64::NAN,
            converged: false,
            wall_time_ms: f64::NAN,
            model_diameter_m: f64::NAN,
        }
    }
}

/// One aggregate row, leading with the ablation-table metric columns
/// (both curve-area normalizations are reported side by side).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub arm: String,
    pub outlier_fraction: f64,
    pub trials: usize,
    pub failures: usize,
    pub add_auc_0_1d: f64,
    pub add_s_auc_0_1d: f64,
    pub add_lt_0_1d_pct: f64,
    pub add_s_lt_0_1d_pct: f64,
    pub add_auc_10cm: f64,
    pub add_s_auc_10cm: f64,
    pub mean_rotation_error_deg: f64,
    pub median_rotation_error_deg: f64,
    pub mean_translation_error_m: f64,
    pub median_translation_error_m: f64,
    pub mean_add_m: f64,
    pub median_add_m: f64,
    pub mean_add_s_m: f64,
    pub median_add_s_m: f64,
    pub mean_inlier_precision: f64,
    pub mean_inlier_recall: f64,
    pub converged_rate: f64,
    pub mean_wall_time_ms: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<TrialRecord>,
    pub summary: SummaryRow,
}

/// RANSAC followed by an LM polish on the consensus set: the `no-gnc` arm.
pub fn ransac_then_refine(
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
    cfg: &RansacConfig,
) -> Result<(Pose, Vec<bool>), PnpError> {
    let report = ransac_pnp(k, c, cfg)?;
    let mask = report.inlier_mask.clone().expect("ransac sets the mask");
    let subset: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    let pose = refine_lm(k, c, &subset, &report.pose)
        .map(|r| r.pose)
        .unwrap_or(report.pose);
    Ok((pose, mask))
}

struct ArmOutcome {
    pose: Pose,
    inlier_mask: Vec<bool>,
    converged: bool,
}

fn gnc_failure_label(err: &GncError) -> String {
    match err {
        GncError::TooFewCorrespondences { .. } => "too-few-correspondences".into(),
        GncError::InitializationFailed(_) => "initialization-failed".into(),
        GncError::NoFiniteResiduals => "no-finite-residuals".into(),
        GncError::LengthMismatch { .. } => "length-mismatch".into(),
        GncError::InvalidConfig(_) => "invalid-config".into(),
    }
}

fn pnp_failure_label(err: &PnpError) -> String {
    match err {
        PnpError::TooFewCorrespondences { .. } => "too-few-correspondences".into(),
        PnpError::NoConsensus { .. } => "no-consensus".into(),
        PnpError::NumericalFailure => "numerical-failure".into(),
        PnpError::InvalidConfig(_) => "invalid-config".into(),
    }
}

fn run_arm(
    mode: ExperimentMode,
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
    voxel: &VoxelGridConfig,
    gnc_cfg: &GncConfig,
    ransac_cfg: &RansacConfig,
) -> Result<ArmOutcome, String> {
    match mode {
        ExperimentMode::Full => {
            let weights = compute_weights(&c.points(), voxel)
                .map_err(|e| format!("geometry-weights: {e}"))?;
            let est = gnc_pnp(k, c, &weights.weight, gnc_cfg, ransac_cfg)
                .map_err(|e| gnc_failure_label(&e))?;
            Ok(ArmOutcome {
                pose: est.pose,
                inlier_mask: est.inlier_mask,
                converged: est.converged,
            })
        }
        ExperimentMode::NoGeomWeights => {
            let est = gnc_pnp_unweighted(k, c, gnc_cfg, ransac_cfg)
                .map_err(|e| gnc_failure_label(&e))?;
            Ok(ArmOutcome {
                pose: est.pose,
                inlier_mask: est.inlier_mask,
                converged: est.converged,
            })
        }
        ExperimentMode::NoGnc => {
            let (pose, mask) =
                ransac_then_refine(k, c, ransac_cfg).map_err(|e| pnp_failure_label(&e))?;
            Ok(ArmOutcome {
                pose,
                inlier_mask: mask,
                converged: true,
            })
        }
        ExperimentMode::RansacOnly => {
            let report = ransac_pnp(k, c, ransac_cfg).map_err(|e| pnp_failure_label(&e))?;
            Ok(ArmOutcome {
                pose: report.pose,
                inlier_mask: report.inlier_mask.expect("ransac sets the mask"),
                converged: true,
            })
        }
    }
}

fn precision_recall(est_mask: &[bool], outlier_truth_mask: &[bool]) -> (f64, f64) {
    let mut tp = 0usize;
    let mut selected = 0usize;
    let mut true_inliers = 0usize;
    for (&est, &is_outlier) in est_mask.iter().zip(outlier_truth_mask.iter()) {
        if est {
            selected += 1;
            if !is_outlier {
                tp += 1;
            }
        }
        if !is_outlier {
            true_inliers += 1;
        }
    }
    let precision = if selected == 0 {
        1.0
    } else {
        tp as f64 / selected as f64
    };
    let recall = if true_inliers == 0 {
        1.0
    } else {
        tp as f64 / true_inliers as f64
    };
    (precision, recall)
}

fn run_trial(spec: &ExperimentSpec, trial_index: usize) -> TrialRecord {
    let seed = spec.base_seed.wrapping_add(trial_index as u64);
    let scene_cfg = SceneConfig {
        rng_seed: seed,
        ..spec.scene.clone()
    };
    let scene = match generate(&scene_cfg) {
        Ok(scene) => scene,
        Err(SynthError::InvalidConfig(msg)) => {
            return TrialRecord::failed(trial_index, format!("scene-generation: {msg}"))
        }
    };
    let ransac_cfg = RansacConfig {
        rng_seed: seed,
        ..spec.ransac
    };

    let started = Instant::now();
    let outcome = run_arm(
        spec.mode,
        &scene.intrinsics,
        &scene.correspondences,
        &spec.voxel,
        &spec.gnc,
        &ransac_cfg,
    );
    let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;

    let outcome = match outcome {
        Ok(outcome) => outcome,
        Err(label) => return TrialRecord::failed(trial_index, label),
    };

    let (precision, recall) = precision_recall(&outcome.inlier_mask, &scene.outlier_truth_mask);
    let add_m = add(&scene.model_points, &outcome.pose, &scene.truth).unwrap_or(f64::NAN);
    let add_s_m = add_s(&scene.model_points, &outcome.pose, &scene.truth).unwrap_or(f64::NAN);

    TrialRecord {
        trial_index,
        status: TrialStatus::Ok,
        rotation_error_deg: rotation_geodesic_error(&outcome.pose, &scene.truth).to_degrees(),
        translation_error_m: (outcome.pose.translation - scene.truth.translation).norm(),
        add_m,
        add_s_m,
        inlier_precision: precision,
        inlier_recall: recall,
        converged: outcome.converged,
        wall_time_ms,
        model_diameter_m: scene.model_points.diameter(),
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Aggregates trial records into one summary row. Failed trials count as
/// infinite pose error in the curve-area and accuracy columns and are
/// excluded from the plain means and medians.
pub fn summarize(records: &[TrialRecord], arm: &str, outlier_fraction: f64) -> SummaryRow {
    let trials = records.len();
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.status.is_ok()).collect();
    let failures = trials - ok.len();

    // errors over ALL trials, +inf for failures, for the accuracy columns
    let adds_all: Vec<f64> = records
        .iter()
        .map(|r| if r.status.is_ok() { r.add_m } else { f64::INFINITY })
        .collect();
    let add_s_all: Vec<f64> = records
        .iter()
        .map(|r| if r.status.is_ok() { r.add_s_m } else { f64::INFINITY })
        .collect();

    let per_trial_gate = |r: &TrialRecord, value: f64| -> bool {
        r.status.is_ok() && value < 0.1 * r.model_diameter_m
    };
    let add_lt = records
        .iter()
        .filter(|r| per_trial_gate(r, r.add_m))
        .count() as f64
        / trials.max(1) as f64;
    let add_s_lt = records
        .iter()
        .filter(|r| per_trial_gate(r, r.add_s_m))
        .count() as f64
        / trials.max(1) as f64;

    // per-trial diameter normalization, averaged; failures contribute 0
    let auc_0_1d = |value: fn(&TrialRecord) -> f64| -> f64 {
        records
            .iter()
            .map(|r| {
                if !r.status.is_ok() {
                    return 0.0;
                }
                let threshold = 0.1 * r.model_diameter_m;
                auc(&[value(r)], threshold).unwrap_or(0.0)
            })
            .sum::<f64>()
            / trials.max(1) as f64
    };

    let mean = |f: fn(&TrialRecord) -> f64| -> f64 {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };
    let median = |f: fn(&TrialRecord) -> f64| -> f64 {
        let mut values: Vec<f64> = ok.iter().map(|r| f(r)).collect();
        median_of(&mut values)
    };

    SummaryRow {
        arm: arm.to_string(),
        outlier_fraction,
        trials,
        failures,
        add_auc_0_1d: auc_0_1d(|r| r.add_m),
        add_s_auc_0_1d: auc_0_1d(|r| r.add_s_m),
        add_lt_0_1d_pct: 100.0 * add_lt,
        add_s_lt_0_1d_pct: 100.0 * add_s_lt,
        add_auc_10cm: auc(&adds_all, AUC_ABSOLUTE_THRESHOLD).unwrap_or(f64::NAN),
        add_s_auc_10cm: auc(&add_s_all, AUC_ABSOLUTE_THRESHOLD).unwrap_or(f64::NAN),
        mean_rotation_error_deg: mean(|r| r.rotation_error_deg),
        median_rotation_error_deg: median(|r| r.rotation_error_deg),
        mean_translation_error_m: mean(|r| r.translation_error_m),
        median_translation_error_m: median(|r| r.translation_error_m),
        mean_add_m: mean(|r| r.add_m),
        median_add_m: median(|r| r.add_m),
        mean_add_s_m: mean(|r| r.add_s_m),
        median_add_s_m: median(|r| r.add_s_m),
        mean_inlier_precision: mean(|r| r.inlier_precision),
        mean_inlier_recall: mean(|r| r.inlier_recall),
        converged_rate: records.iter().filter(|r| r.converged).count() as f64
            / trials.max(1) as f64,
        mean_wall_time_ms: mean(|r| r.wall_time_ms),
    }
}

/// Runs `spec.trials` seeded trials of the selected arm; trial failures
/// become failed rows rather than aborting the run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome, SynthError> {
    if spec.trials == 0 {
        return Err(SynthError::InvalidConfig("trials must be at least 1".into()));
    }
    let records = par::map_indices(spec.trials, |i| run_trial(spec, i));
    let summary = summarize(&records, spec.mode.as_str(), spec.scene.outlier_fraction);
    Ok(ExperimentOutcome { records, summary })
}

/// One summary row per (arm, outlier fraction) cell, in the given order.
pub fn emit_sweep(
    spec: &ExperimentSpec,
    fractions: &[f64],
    arms: &[ExperimentMode],
) -> Result<Vec<SummaryRow>, SynthError> {
    if fractions.is_empty() || arms.is_empty() {
        return Err(SynthError::InvalidConfig(
            "sweep needs at least one arm and one outlier fraction".into(),
        ));
    }
    let mut rows = Vec::with_capacity(fractions.len() * arms.len());
    for &arm in arms {
        for &fraction in fractions {
            let cell = ExperimentSpec {
                mode: arm,
                scene: SceneConfig {
                    outlier_fraction: fraction,
                    ..spec.scene.clone()
                },
                ..spec.clone()
            };
            rows.push(run_experiment(&cell)?.summary);
        }
    }
    Ok(rows)
}

/// Soft sweep sanity check: within each arm the ADD<0.1d success rate
/// should not increase with the outlier fraction. Returns warnings, never
/// errors.
pub fn sweep_monotonicity_warnings(rows: &[SummaryRow]) -> Vec<String> {
    let mut warnings = Vec::new();
    let mut arms: Vec<&str> = rows.iter().map(|r| r.arm.as_str()).collect();
    arms.dedup();
    for arm in arms {
        let mut cells: Vec<&SummaryRow> = rows.iter().filter(|r| r.arm == arm).collect();
        cells.sort_by(|a, b| a.outlier_fraction.partial_cmp(&b.outlier_fraction).unwrap());
        for pair in cells.windows(2) {
            if pair[1].add_lt_0_1d_pct > pair[0].add_lt_0_1d_pct + 1e-9 {
                warnings.push(format!(
                    "{arm}: ADD<0.1d rose from {:.1}% to {:.1}% between outlier fractions {} and {}",
                    pair[0].add_lt_0_1d_pct,
                    pair[1].add_lt_0_1d_pct,
                    pair[0].outlier_fraction,
                    pair[1].outlier_fraction
                ));
            }
        }
    }
    warnings
}

// ── CSV writers ─────────────────────────────────────────────────────────

pub const TRIALS_CSV_HEADER: &str = "trial_index,status,rotation_error_deg,translation_error_m,\
add_m,add_s_m,inlier_precision,inlier_recall,converged,model_diameter_m";

pub const SUMMARY_CSV_HEADER: &str = "arm,outlier_fraction,trials,failures,add_auc_0_1d,\
add_s_auc_0_1d,add_lt_0_1d_pct,add_s_lt_0_1d_pct,add_auc_10cm,add_s_auc_10cm,\
mean_rotation_error_deg,median_rotation_error_deg,mean_translation_error_m,\
median_translation_error_m,mean_add_m,median_add_m,mean_add_s_m,median_add_s_m,\
mean_inlier_precision,mean_inlier_recall,converged_rate";

fn fmt_metric(value: f64) -> String {
    if value.is_nan() {
        String::new()
    } else {
        format!("{value}")
    }
}

/// Renders per-trial rows. Timing is opt-in so default output stays
/// byte-identical across runs.
pub fn write_trials_csv(records: &[TrialRecord], include_timing: bool) -> String {
    let mut out = String::new();
    out.push_str(TRIALS_CSV_HEADER);
    if include_timing {
        out.push_str(",wall_time_ms");
    }
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.trial_index,
            r.status.label(),
            fmt_metric(r.rotation_error_deg),
            fmt_metric(r.translation_error_m),
            fmt_metric(r.add_m),
            fmt_metric(r.add_s_m),
            fmt_metric(r.inlier_precision),
            fmt_metric(r.inlier_recall),
            r.converged,
            fmt_metric(r.model_diameter_m),
        );
        if include_timing {
            let _ = write!(out, ",{}", fmt_metric(r.wall_time_ms));
        }
        out.push('\n');
    }
    out
}

/// Renders summary rows with the ablation metric columns first.
pub fn write_summary_csv(rows: &[SummaryRow], include_timing: bool) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_CSV_HEADER);
    if include_timing {
        out.push_str(",mean_wall_time_ms");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.arm,
            r.outlier_fraction,
            r.trials,
            r.failures,
            fmt_metric(r.add_auc_0_1d),
            fmt_metric(r.add_s_auc_0_1d),
            fmt_metric(r.add_lt_0_1d_pct),
            fmt_metric(r.add_s_lt_0_1d_pct),
            fmt_metric(r.add_auc_10cm),
            fmt_metric(r.add_s_auc_10cm),
            fmt_metric(r.mean_rotation_error_deg),
            fmt_metric(r.median_rotation_error_deg),
            fmt_metric(r.mean_translation_error_m),
            fmt_metric(r.median_translation_error_m),
            fmt_metric(r.mean_add_m),
            fmt_metric(r.median_add_m),
            fmt_metric(r.mean_add_s_m),
            fmt_metric(r.median_add_s_m),
            fmt_metric(r.mean_inlier_precision),
            fmt_metric(r.mean_inlier_recall),
            fmt_metric(r.converged_rate),
        );
        if include_timing {
            let _ = write!(out, ",{}", fmt_metric(r.mean_wall_time_ms));
        }
        out.push('\n');
    }
    out
}
