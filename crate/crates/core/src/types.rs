//! Shared geometric and configuration types with their validity invariants.
//!
//! Everything here is an immutable value type; the algorithms live in the
//! sibling modules. All lengths are meters, all image quantities are pixels,
//! so reprojection residuals downstream carry units of squared pixels.

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

/// Validation errors for the core value types.
#[derive(Debug, Error)]
pub enum TypeError {
    /// An intrinsics invariant failed; names the offending field.
    #[error("invalid camera intrinsics: {field} must be positive, got {value}")]
    InvalidIntrinsics { field: &'static str, value: f64 },
    /// A pose invariant (orthonormality or determinant) failed.
    #[error("invalid pose: {0}")]
    InvalidPose(&'static str),
    /// A per-correspondence geometry weight left [0, 1].
    #[error("geometry weight out of [0, 1] at index {index}: {value}")]
    InvalidWeight { index: usize, value: f64 },
    /// A configuration invariant failed.
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Pinhole projection parameters. No skew, no distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    /// Focal length in pixels along x.
    pub fx: f64,
    /// Focal length in pixels along y.
    pub fy: f64,
    /// Principal point x in pixels.
    pub cx: f64,
    /// Principal point y in pixels.
    pub cy: f64,
    pub image_width: i64,
    pub image_height: i64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, image_width: i64, image_height: i64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            image_width,
            image_height,
        }
    }
}

/// Checks `fx > 0`, `fy > 0`, `image_width > 0`, `image_height > 0` and
/// returns the intrinsics unchanged when they all hold.
pub fn validate_intrinsics(k: CameraIntrinsics) -> Result<CameraIntrinsics, TypeError> {
    let positive = [("fx", k.fx), ("fy", k.fy)];
    for (field, value) in positive {
        if value <= 0.0 || !value.is_finite() {
            return Err(TypeError::InvalidIntrinsics { field, value });
        }
    }
    if !k.cx.is_finite() {
        return Err(TypeError::InvalidIntrinsics {
            field: "cx",
            value: k.cx,
        });
    }
    if !k.cy.is_finite() {
        return Err(TypeError::InvalidIntrinsics {
            field: "cy",
            value: k.cy,
        });
    }
    if k.image_width <= 0 {
        return Err(TypeError::InvalidIntrinsics {
            field: "image_width",
            value: k.image_width as f64,
        });
    }
    if k.image_height <= 0 {
        return Err(TypeError::InvalidIntrinsics {
            field: "image_height",
            value: k.image_height as f64,
        });
    }
    Ok(k)
}

/// Rigid transform mapping model-frame points into the camera frame.
///
/// The rotation is stored as an explicit orthonormal matrix; axis-angle only
/// appears as the local parameterization inside the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from explicit parts, checking the rotation invariants
    /// (`RᵀR = I` and `det R = +1`, both within 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, TypeError> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        if !self
            .translation
            .iter()
            .chain(self.rotation.iter())
            .all(|v| v.is_finite())
        {
            return Err(TypeError::InvalidPose("non-finite entry"));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let identity: Matrix3<f64> = Matrix3::identity();
        for r in 0..3 {
            for c in 0..3 {
                if (gram[(r, c)] - identity[(r, c)]).abs() > 1e-9 {
                    return Err(TypeError::InvalidPose("rotation is not orthonormal"));
                }
            }
        }
        if (self.rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(TypeError::InvalidPose("rotation determinant is not +1"));
        }
        Ok(())
    }

    pub fn transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Rotation from the exponential map of `axis_angle` plus a translation.
/// The zero vector maps to the identity rotation.
pub fn pose_from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Pose {
    Pose {
        rotation: *nalgebra::Rotation3::new(axis_angle).matrix(),
        translation,
    }
}

/// Geodesic angle between the rotation parts:
/// `arccos((trace(RₐᵀR_b) − 1) / 2)`, clamped to `[0, π]`.
pub fn rotation_geodesic_error(a: &Pose, b: &Pose) -> f64 {
    let relative = a.rotation.transpose() * b.rotation;
    let cos_angle = ((relative.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    cos_angle.acos()
}

/// One paired 2D observation / 3D model point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Observed pixel (u, v).
    pub pixel: Vector2<f64>,
    /// Model-frame 3D point in meters.
    pub point: Vector3<f64>,
    /// Geometry confidence in [0, 1]; 1 when no weighting applies.
    pub geom_weight: f64,
}

impl Correspondence {
    pub fn new(pixel: Vector2<f64>, point: Vector3<f64>) -> Self {
        Self {
            pixel,
            point,
            geom_weight: 1.0,
        }
    }

    pub fn with_weight(pixel: Vector2<f64>, point: Vector3<f64>, geom_weight: f64) -> Self {
        Self {
            pixel,
            point,
            geom_weight,
        }
    }
}

/// Ordered list of correspondences. Indices are stable: every downstream
/// mask and inlier index set refers to positions in this list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    items: Vec<Correspondence>,
}

impl CorrespondenceSet {
    /// Validates that every geometry weight lies in [0, 1].
    pub fn new(items: Vec<Correspondence>) -> Result<Self, TypeError> {
        for (index, c) in items.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.geom_weight) {
                return Err(TypeError::InvalidWeight {
                    index,
                    value: c.geom_weight,
                });
            }
        }
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Correspondence> {
        self.items.iter()
    }

    pub fn items(&self) -> &[Correspondence] {
        &self.items
    }

    /// Per-point geometry weights in index order.
    pub fn geom_weights(&self) -> Vec<f64> {
        self.items.iter().map(|c| c.geom_weight).collect()
    }

    /// Model-frame 3D points in index order.
    pub fn points(&self) -> Vec<Vector3<f64>> {
        self.items.iter().map(|c| c.point).collect()
    }
}

impl std::ops::Index<usize> for CorrespondenceSet {
    type Output = Correspondence;

    fn index(&self, index: usize) -> &Correspondence {
        &self.items[index]
    }
}

/// Hyperparameters of the graduated non-convexity loop.
///
/// `mu` carries units of squared pixels throughout: the residual it gates is
/// the squared pixel reprojection error, consumed literally by the soft
/// inlier score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GncConfig {
    /// Scale factor on the median residual when seeding the schedule.
    pub kappa: f64,
    /// Additive floor on the initial non-convexity value, squared pixels.
    pub epsilon: f64,
    /// Multiplicative anneal factor, in (0, 1).
    pub gamma: f64,
    /// Terminal non-convexity value, squared pixels.
    pub mu_final: f64,
    /// Soft-score selection threshold, in (0, 1).
    pub tau_gnc: f64,
    /// Geometry-weight selection threshold, in [0, 1).
    pub tau_geom: f64,
    /// Smallest inlier set the inner solver will accept.
    pub min_inliers: usize,
    /// Guard on the outer loop for anneal factors close to 1.
    pub max_iterations: usize,
}

impl Default for GncConfig {
    fn default() -> Self {
        Self {
            kappa: 5.0,
            epsilon: 1e-6,
            gamma: 0.5,
            mu_final: 0.5,
            tau_gnc: 0.5,
            tau_geom: 0.1,
            min_inliers: 6,
            max_iterations: 100,
        }
    }
}

impl GncConfig {
    pub fn validate(&self) -> Result<(), TypeError> {
        if self.gamma.is_nan() || self.gamma <= 0.0 || self.gamma >= 1.0 {
            return Err(TypeError::InvalidConfig("gamma must lie in (0, 1)"));
        }
        if self.mu_final <= 0.0 || self.mu_final.is_nan() {
            return Err(TypeError::InvalidConfig("mu_final must be positive"));
        }
        if self.kappa <= 0.0 || self.kappa.is_nan() {
            return Err(TypeError::InvalidConfig("kappa must be positive"));
        }
        if self.epsilon < 0.0 {
            return Err(TypeError::InvalidConfig("epsilon must be non-negative"));
        }
        if self.tau_gnc.is_nan() || self.tau_gnc <= 0.0 || self.tau_gnc >= 1.0 {
            return Err(TypeError::InvalidConfig("tau_gnc must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.tau_geom) {
            return Err(TypeError::InvalidConfig("tau_geom must lie in [0, 1)"));
        }
        if self.min_inliers < 4 {
            return Err(TypeError::InvalidConfig("min_inliers must be at least 4"));
        }
        if self.max_iterations == 0 {
            return Err(TypeError::InvalidConfig("max_iterations must be positive"));
        }
        Ok(())
    }
}

/// One outer-loop diagnostic sample: the non-convexity value the pass ran
/// at, how many correspondences it selected, and their mean residual after
/// the inner solve (squared pixels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub mu: f64,
    pub inlier_count: usize,
    pub mean_residual: f64,
}

/// Final pose with its inlier mask and the per-iteration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    /// One flag per correspondence, in correspondence order.
    pub inlier_mask: Vec<bool>,
    /// Per-iteration diagnostics; `mu` values are non-increasing.
    pub trace: Vec<TraceEntry>,
    /// True when the loop ran down its full anneal schedule, false on a
    /// minimum-inlier breakout or iteration-guard exit.
    pub converged: bool,
}

impl PoseEstimate {
    pub fn inlier_indices(&self) -> Vec<usize> {
        self.inlier_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&m| m).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn validate_intrinsics_accepts_standard_camera() {
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480);
        assert!(validate_intrinsics(k).is_ok());
    }

    #[test]
    fn validate_intrinsics_rejects_zero_focal() {
        let k = CameraIntrinsics::new(0.0, 600.0, 320.0, 240.0, 640, 480);
        match validate_intrinsics(k) {
            Err(TypeError::InvalidIntrinsics { field, .. }) => assert_eq!(field, "fx"),
            other => panic!("expected InvalidIntrinsics, got {other:?}"),
        }
    }

    #[test]
    fn validate_intrinsics_rejects_negative_width() {
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, -1, 480);
        match validate_intrinsics(k) {
            Err(TypeError::InvalidIntrinsics { field, .. }) => assert_eq!(field, "image_width"),
            other => panic!("expected InvalidIntrinsics, got {other:?}"),
        }
    }

    #[test]
    fn axis_angle_zero_is_identity() {
        let pose = pose_from_axis_angle(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(pose.rotation, Matrix3::identity());
        assert_eq!(pose.translation, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn axis_angle_half_turn_about_x() {
        let pose = pose_from_axis_angle(Vector3::new(PI, 0.0, 0.0), Vector3::zeros());
        let expected = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
        for (got, want) in pose.rotation.iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn axis_angle_quarter_turn_about_z_maps_x_to_y() {
        let pose = pose_from_axis_angle(Vector3::new(0.0, 0.0, FRAC_PI_2), Vector3::zeros());
        let mapped = pose.rotation * Vector3::new(1.0, 0.0, 0.0);
        assert!((mapped - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn geodesic_error_examples() {
        let identity = Pose::identity();
        let half_turn = pose_from_axis_angle(Vector3::new(PI, 0.0, 0.0), Vector3::zeros());
        let quarter = pose_from_axis_angle(Vector3::new(0.0, 0.0, FRAC_PI_2), Vector3::zeros());

        assert_eq!(rotation_geodesic_error(&identity, &identity), 0.0);
        assert!((rotation_geodesic_error(&identity, &half_turn) - PI).abs() < 1e-9);
        assert!((rotation_geodesic_error(&identity, &quarter) - FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn pose_new_rejects_sheared_matrix() {
        let mut bad = Matrix3::identity();
        bad[(0, 1)] = 0.5;
        assert!(Pose::new(bad, Vector3::zeros()).is_err());
    }

    #[test]
    fn correspondence_set_rejects_out_of_range_weight() {
        let items = vec![Correspondence::with_weight(
            Vector2::new(10.0, 20.0),
            Vector3::new(0.0, 0.0, 1.0),
            1.5,
        )];
        assert!(CorrespondenceSet::new(items).is_err());
    }

    #[test]
    fn gnc_config_default_is_valid() {
        assert!(GncConfig::default().validate().is_ok());
    }

    #[test]
    fn gnc_config_rejects_bad_gamma() {
        let cfg = GncConfig {
            gamma: 1.0,
            ..GncConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
