//! Voxel-support geometry weights over the 3D points of a correspondence
//! set.
//!
//! Each point is hashed into an origin-anchored voxel grid; the number of
//! points sharing a voxel estimates local matched-point density, and the
//! normalized support becomes a confidence weight in `[w_min, 1]`. Dense,
//! structurally consistent regions end up near 1, isolated points near the
//! floor.

use std::collections::HashMap;

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("cannot compute geometry weights for an empty point set")]
    EmptyInput,
    #[error("invalid voxel grid config: {0}")]
    InvalidConfig(&'static str),
}

/// Voxel grid parameters. The grid is anchored at the model-frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGridConfig {
    /// Voxel edge length in meters.
    pub voxel_size: f64,
    /// Weight floor in [0, 1).
    pub w_min: f64,
}

impl Default for VoxelGridConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.005,
            w_min: 0.2,
        }
    }
}

impl VoxelGridConfig {
    pub fn validate(&self) -> Result<(), WeightError> {
        if self.voxel_size <= 0.0 || self.voxel_size.is_nan() {
            return Err(WeightError::InvalidConfig("voxel_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.w_min) {
            return Err(WeightError::InvalidConfig("w_min must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-point voxel support counts and the weights derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryWeights {
    /// Number of points sharing each point's voxel, including itself.
    pub support: Vec<u32>,
    /// `w_min + (1 − w_min) · sᵢ / s_max`, so the best-supported point
    /// weighs exactly 1.
    pub weight: Vec<f64>,
}

impl GeometryWeights {
    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }
}

/// Componentwise `⌊point / voxel_size⌋`, with floor toward −∞ so a
/// coordinate of −0.001 at v = 0.005 lands in voxel −1, not 0.
pub fn voxel_index(point: &Vector3<f64>, voxel_size: f64) -> [i64; 3] {
    debug_assert!(voxel_size > 0.0);
    [
        (point.x / voxel_size).floor() as i64,
        (point.y / voxel_size).floor() as i64,
        (point.z / voxel_size).floor() as i64,
    ]
}

/// Voxel-support weights for a point set.
pub fn compute_weights(
    points: &[Vector3<f64>],
    cfg: &VoxelGridConfig,
) -> Result<GeometryWeights, WeightError> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(WeightError::EmptyInput);
    }

    let mut counts: HashMap<[i64; 3], u32> = HashMap::with_capacity(points.len());
    for p in points {
        *counts.entry(voxel_index(p, cfg.voxel_size)).or_insert(0) += 1;
    }

    // s_max taken over the per-point supports, in index order, so the
    // result never depends on hash-map iteration order.
    let support: Vec<u32> = points
        .iter()
        .map(|p| counts[&voxel_index(p, cfg.voxel_size)])
        .collect();
    let s_max = *support.iter().max().expect("non-empty") as f64;

    let weight = support
        .iter()
        .map(|&s| cfg.w_min + (1.0 - cfg.w_min) * (s as f64 / s_max))
        .collect();

    Ok(GeometryWeights { support, weight })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn voxel_index_examples() {
        assert_eq!(voxel_index(&Vector3::new(0.0, 0.0, 0.0), 0.005), [0, 0, 0]);
        assert_eq!(
            voxel_index(&Vector3::new(0.012, 0.005, -0.001), 0.005),
            [2, 1, -1]
        );
        assert_eq!(
            voxel_index(&Vector3::new(0.0049999, 0.0, 0.0), 0.005),
            [0, 0, 0]
        );
    }

    #[test]
    fn single_shared_voxel_gives_unit_weights() {
        let points = vec![Vector3::new(0.001, 0.001, 0.001); 10];
        let cfg = VoxelGridConfig {
            voxel_size: 0.005,
            w_min: 0.2,
        };
        let gw = compute_weights(&points, &cfg).unwrap();
        assert!(gw.weight.iter().all(|&w| w == 1.0));
        assert!(gw.support.iter().all(|&s| s == 10));
    }

    #[test]
    fn isolated_point_gets_floor_plus_share() {
        let mut points = vec![Vector3::new(0.001, 0.001, 0.001); 9];
        points.push(Vector3::new(0.1, 0.1, 0.1));
        let cfg = VoxelGridConfig {
            voxel_size: 0.005,
            w_min: 0.2,
        };
        let gw = compute_weights(&points, &cfg).unwrap();
        let expected = 0.2 + 0.8 * (1.0 / 9.0);
        assert!((gw.weight[9] - expected).abs() < 1e-12);
        assert!(gw.weight[..9].iter().all(|&w| w == 1.0));
    }

    #[test]
    fn single_point_weighs_one() {
        let gw = compute_weights(&[Vector3::new(0.3, -0.2, 0.9)], &VoxelGridConfig::default())
            .unwrap();
        assert_eq!(gw.weight, vec![1.0]);
        assert_eq!(gw.support, vec![1]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            compute_weights(&[], &VoxelGridConfig::default()),
            Err(WeightError::EmptyInput)
        ));
    }

    /// O(N²) per-pair voxel counting, kept independent of the hash-map path.
    fn brute_force_support(points: &[Vector3<f64>], voxel_size: f64) -> Vec<u32> {
        points
            .iter()
            .map(|a| {
                points
                    .iter()
                    .filter(|b| voxel_index(a, voxel_size) == voxel_index(b, voxel_size))
                    .count() as u32
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_counting_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = VoxelGridConfig {
            voxel_size: 0.01,
            w_min: 0.3,
        };
        for trial in 0..20 {
            let n = 20 + trial * 24; // up to 476 points
            let points: Vec<Vector3<f64>> = (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-0.05..0.05),
                        rng.random_range(-0.05..0.05),
                        rng.random_range(-0.05..0.05),
                    )
                })
                .collect();
            let gw = compute_weights(&points, &cfg).unwrap();
            let brute = brute_force_support(&points, cfg.voxel_size);
            assert_eq!(gw.support, brute);
            let s_max = *brute.iter().max().unwrap() as f64;
            for (i, &s) in brute.iter().enumerate() {
                let expected = cfg.w_min + (1.0 - cfg.w_min) * (s as f64 / s_max);
                assert!((gw.weight[i] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn weights_bounded_with_max_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = VoxelGridConfig::default();
        let points: Vec<Vector3<f64>> = (0..200)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                )
            })
            .collect();
        let gw = compute_weights(&points, &cfg).unwrap();
        assert!(gw
            .weight
            .iter()
            .all(|&w| (cfg.w_min..=1.0).contains(&w)));
        assert!(gw.weight.contains(&1.0));
    }

    #[test]
    fn integer_grid_translation_preserves_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = VoxelGridConfig {
            voxel_size: 0.005,
            w_min: 0.2,
        };
        let points: Vec<Vector3<f64>> = (0..100)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-0.03..0.03),
                    rng.random_range(-0.03..0.03),
                    rng.random_range(-0.03..0.03),
                )
            })
            .collect();
        let base = compute_weights(&points, &cfg).unwrap();
        // shift by an exact multiple of the voxel size along each axis
        let shift = Vector3::new(3.0 * cfg.voxel_size, -7.0 * cfg.voxel_size, 2.0 * cfg.voxel_size);
        let shifted: Vec<Vector3<f64>> = points.iter().map(|p| p + shift).collect();
        let moved = compute_weights(&shifted, &cfg).unwrap();
        assert_eq!(base.support, moved.support);
        for (a, b) in base.weight.iter().zip(moved.weight.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_are_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cfg = VoxelGridConfig::default();
        let points: Vec<Vector3<f64>> = (0..60)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-0.02..0.02),
                    rng.random_range(-0.02..0.02),
                    rng.random_range(-0.02..0.02),
                )
            })
            .collect();
        let base = compute_weights(&points, &cfg).unwrap();
        let reversed: Vec<Vector3<f64>> = points.iter().rev().copied().collect();
        let rev = compute_weights(&reversed, &cfg).unwrap();
        for i in 0..points.len() {
            assert_eq!(base.weight[i], rev.weight[points.len() - 1 - i]);
        }
    }
}
