//! Pinhole projection, reprojection residuals, and the analytic Jacobian
//! used by the iterative solvers.

use nalgebra::{Matrix2x3, Matrix3, SMatrix, Vector2, Vector3};
use thiserror::Error;

use crate::types::{CameraIntrinsics, CorrespondenceSet, Pose};

/// Default minimum camera-frame depth, meters.
pub const DEPTH_EPSILON: f64 = 1e-6;

pub type Jacobian2x6 = SMatrix<f64, 2, 6>;

#[derive(Debug, Error)]
pub enum ProjectionError {
    /// The point sits at or behind the camera plane.
    #[error("point behind camera: depth {depth} <= {epsilon}")]
    BehindCamera { depth: f64, epsilon: f64 },
}

/// Per-correspondence squared pixel reprojection errors.
///
/// Entries are `‖projection − observation‖²` in squared pixels;
/// correspondences that project behind the camera hold `+∞` so robust
/// selection discards them without special-casing.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    values: Vec<f64>,
}

impl ResidualVector {
    pub fn new(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|&r| r >= 0.0));
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    /// Entries that are finite (i.e. projected in front of the camera).
    pub fn finite(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|r| r.is_finite())
    }
}

impl std::ops::Index<usize> for ResidualVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.values[index]
    }
}

/// Projects a model-frame point to pixel coordinates.
pub fn project(
    k: &CameraIntrinsics,
    pose: &Pose,
    point: &Vector3<f64>,
) -> Result<Vector2<f64>, ProjectionError> {
    project_with_eps(k, pose, point, DEPTH_EPSILON)
}

/// `project` with an explicit minimum-depth cutoff.
pub fn project_with_eps(
    k: &CameraIntrinsics,
    pose: &Pose,
    point: &Vector3<f64>,
    depth_epsilon: f64,
) -> Result<Vector2<f64>, ProjectionError> {
    let cam = pose.transform_point(point);
    if cam.z <= depth_epsilon || cam.z.is_nan() {
        return Err(ProjectionError::BehindCamera {
            depth: cam.z,
            epsilon: depth_epsilon,
        });
    }
    Ok(Vector2::new(
        k.fx * cam.x / cam.z + k.cx,
        k.fy * cam.y / cam.z + k.cy,
    ))
}

/// Squared pixel reprojection errors for every correspondence, with `+∞`
/// for points behind the camera.
pub fn residuals(k: &CameraIntrinsics, pose: &Pose, c: &CorrespondenceSet) -> ResidualVector {
    let values = c
        .iter()
        .map(|corr| match project(k, pose, &corr.point) {
            Ok(proj) => (proj - corr.pixel).norm_squared(),
            Err(_) => f64::INFINITY,
        })
        .collect();
    ResidualVector::new(values)
}

/// Sum of squared pixel errors over an index subset; `+∞` if any subset
/// point falls behind the camera.
pub fn cost_on_subset(
    k: &CameraIntrinsics,
    pose: &Pose,
    c: &CorrespondenceSet,
    subset: &[usize],
) -> f64 {
    let mut total = 0.0;
    for &i in subset {
        let corr = &c[i];
        match project(k, pose, &corr.point) {
            Ok(proj) => total += (proj - corr.pixel).norm_squared(),
            Err(_) => return f64::INFINITY,
        }
    }
    total
}

/// Jacobian of the 2-vector pixel reprojection error with respect to a
/// left-multiplied local perturbation: columns 0..3 are the rotation part
/// (axis-angle δω), columns 3..6 the translation part (δt).
pub fn residual_jacobian(
    k: &CameraIntrinsics,
    pose: &Pose,
    point: &Vector3<f64>,
) -> Result<Jacobian2x6, ProjectionError> {
    let cam = pose.transform_point(point);
    if cam.z <= DEPTH_EPSILON || cam.z.is_nan() {
        return Err(ProjectionError::BehindCamera {
            depth: cam.z,
            epsilon: DEPTH_EPSILON,
        });
    }
    let inv_z = 1.0 / cam.z;
    let inv_z2 = inv_z * inv_z;
    let proj_jac = Matrix2x3::new(
        k.fx * inv_z,
        0.0,
        -k.fx * cam.x * inv_z2,
        0.0,
        k.fy * inv_z,
        -k.fy * cam.y * inv_z2,
    );
    // d(exp(δω)·p)/dδω at δω = 0 is −[p]ₓ.
    let neg_skew = -skew(&cam);
    let rot_block = proj_jac * neg_skew;

    let mut jac = Jacobian2x6::zeros();
    jac.fixed_view_mut::<2, 3>(0, 0).copy_from(&rot_block);
    jac.fixed_view_mut::<2, 3>(0, 3).copy_from(&proj_jac);
    Ok(jac)
}

/// Applies a left-multiplicative local step `(δω, δt)` to a pose:
/// `R ← exp(δω)·R`, `t ← exp(δω)·t + δt`.
pub fn apply_left_increment(pose: &Pose, delta: &nalgebra::Vector6<f64>) -> Pose {
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    let dt = Vector3::new(delta[3], delta[4], delta[5]);
    let rot = *nalgebra::Rotation3::new(omega).matrix();
    Pose {
        rotation: rot * pose.rotation,
        translation: rot * pose.translation + dt,
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{pose_from_axis_angle, Correspondence};
    use nalgebra::Vector6;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_k() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480)
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let p = project(&test_k(), &Pose::identity(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(p, Vector2::new(320.0, 240.0));
    }

    #[test]
    fn lateral_offset_scales_by_focal_length() {
        let p = project(&test_k(), &Pose::identity(), &Vector3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((p - Vector2::new(380.0, 240.0)).norm() < 1e-12);
    }

    #[test]
    fn negative_depth_is_rejected() {
        let r = project(&test_k(), &Pose::identity(), &Vector3::new(0.0, 0.0, -1.0));
        assert!(matches!(r, Err(ProjectionError::BehindCamera { .. })));
    }

    #[test]
    fn residual_is_squared_pixel_distance() {
        let corr = Correspondence::new(Vector2::new(323.0, 244.0), Vector3::new(0.0, 0.0, 1.0));
        let set = CorrespondenceSet::new(vec![corr]).unwrap();
        let r = residuals(&test_k(), &Pose::identity(), &set);
        // projection (320, 240), observation (323, 244): 3² + 4² = 25
        assert!((r[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn exact_observation_gives_zero_residual() {
        let corr = Correspondence::new(Vector2::new(320.0, 240.0), Vector3::new(0.0, 0.0, 1.0));
        let set = CorrespondenceSet::new(vec![corr]).unwrap();
        let r = residuals(&test_k(), &Pose::identity(), &set);
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn behind_camera_residual_is_infinite() {
        let corr = Correspondence::new(Vector2::new(320.0, 240.0), Vector3::new(0.0, 0.0, -1.0));
        let set = CorrespondenceSet::new(vec![corr]).unwrap();
        let r = residuals(&test_k(), &Pose::identity(), &set);
        assert!(r[0].is_infinite());
    }

    #[test]
    fn translation_columns_match_stated_values() {
        let jac = residual_jacobian(&test_k(), &Pose::identity(), &Vector3::new(0.0, 0.0, 1.0))
            .unwrap();
        assert!((jac[(0, 3)] - 600.0).abs() < 1e-9); // ∂u/∂t_x
        assert!((jac[(1, 4)] - 600.0).abs() < 1e-9); // ∂v/∂t_y
        assert!(jac[(0, 5)].abs() < 1e-9); // ∂u/∂t_z
        assert!(jac[(1, 5)].abs() < 1e-9); // ∂v/∂t_z
        assert!(jac[(0, 4)].abs() < 1e-9); // ∂u/∂t_y, symmetry on the axis
    }

    /// Central finite differences of the projection under the same left
    /// increment the analytic Jacobian differentiates.
    fn finite_difference_jacobian(
        k: &CameraIntrinsics,
        pose: &Pose,
        point: &Vector3<f64>,
        step: f64,
    ) -> Jacobian2x6 {
        let mut jac = Jacobian2x6::zeros();
        for col in 0..6 {
            let mut plus = Vector6::zeros();
            plus[col] = step;
            let mut minus = Vector6::zeros();
            minus[col] = -step;
            let p_plus = project(k, &apply_left_increment(pose, &plus), point).unwrap();
            let p_minus = project(k, &apply_left_increment(pose, &minus), point).unwrap();
            let d = (p_plus - p_minus) / (2.0 * step);
            jac[(0, col)] = d.x;
            jac[(1, col)] = d.y;
        }
        jac
    }

    #[test]
    fn jacobian_matches_finite_differences_over_random_samples() {
        let k = test_k();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let pose = pose_from_axis_angle(axis, Vector3::zeros());
            // model point placed so its camera-frame depth lands in [0.3, 3]
            let cam = Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.3..3.0),
            );
            let point = pose.inverse().transform_point(&cam);
            let analytic = residual_jacobian(&k, &pose, &point).unwrap();
            let numeric = finite_difference_jacobian(&k, &pose, &point, 1e-6);
            for r in 0..2 {
                for c in 0..6 {
                    let a = analytic[(r, c)];
                    let n = numeric[(r, c)];
                    let tol = f64::max(1e-4 * a.abs(), 1e-6).max(1e-4 * n.abs());
                    assert!(
                        (a - n).abs() <= tol,
                        "jacobian mismatch at ({r},{c}): analytic {a}, numeric {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn residuals_follow_permutation_of_input() {
        let k = test_k();
        let pose = pose_from_axis_angle(Vector3::new(0.1, -0.2, 0.05), Vector3::new(0.0, 0.0, 1.5));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let corrs: Vec<Correspondence> = (0..20)
            .map(|_| {
                Correspondence::new(
                    Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
                    Vector3::new(
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                    ),
                )
            })
            .collect();
        let set = CorrespondenceSet::new(corrs.clone()).unwrap();
        let base = residuals(&k, &pose, &set);

        let mut shuffled = corrs;
        shuffled.reverse();
        let set_rev = CorrespondenceSet::new(shuffled).unwrap();
        let rev = residuals(&k, &pose, &set_rev);
        for i in 0..set.len() {
            assert_eq!(base[i], rev[set.len() - 1 - i]);
        }
    }

    #[test]
    fn projection_commutes_with_precomposed_transform() {
        let k = test_k();
        let pose = pose_from_axis_angle(Vector3::new(0.3, 0.1, -0.2), Vector3::new(0.05, -0.02, 1.2));
        let point = Vector3::new(0.15, -0.08, 0.3);
        let direct = project(&k, &pose, &point).unwrap();
        let pre = project(&k, &Pose::identity(), &pose.transform_point(&point)).unwrap();
        assert_eq!(direct, pre);
    }
}
