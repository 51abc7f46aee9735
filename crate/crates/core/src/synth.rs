//! Seeded synthetic-scene generator: ground-truth poses, projected
//! correspondences, truncated pixel noise, controlled outlier injection,
//! and optional clustered 3D structure for geometry-weight experiments.
//!
//! Everything is driven by one ChaCha stream per scene, so a config is a
//! complete, replayable description of its scene.

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::metrics::ModelPoints;
use crate::projection::project;
use crate::types::{CameraIntrinsics, Correspondence, CorrespondenceSet, Pose};

const PLACEMENT_ATTEMPTS: usize = 1000;
/// Pixel noise is truncated at this many sigmas so the inlier/outlier
/// labels stay exact.
const NOISE_TRUNCATION_SIGMAS: f64 = 6.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
}

/// Where the 3D points come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PointSource {
    /// Uniform in an origin-centered cube with the given edge length,
    /// meters. Ignored for the clustered part when `cluster_spec` is set.
    UniformBox { extent: f64 },
    /// Draw from the vertices of a loaded model.
    Model(ModelPoints),
}

/// How corrupted correspondences are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutlierModel {
    /// Replace the observation with a uniform in-image pixel.
    UniformPixel,
    /// Swap the observations of two distinct correspondences.
    WrongAssociation,
}

/// Which correspondences outlier injection may hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutlierTarget {
    Any,
    /// Prefer background (non-cluster) points; spills over only when the
    /// background pool is too small.
    Background,
}

/// Clustered-structure parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSpec {
    pub n_clusters: usize,
    /// Ball radius around each cluster center, meters.
    pub cluster_radius: f64,
    /// Fraction of points scattered uniformly instead of clustered.
    pub background_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub n_points: usize,
    pub point_source: PointSource,
    /// (z_min, z_max) for the projected centroid, meters.
    pub depth_range: (f64, f64),
    pub pixel_noise_sigma: f64,
    /// Fraction of correspondences replaced by outliers; the injected
    /// count is exactly `⌊fraction · n⌋`.
    pub outlier_fraction: f64,
    pub outlier_model: OutlierModel,
    pub outlier_target: OutlierTarget,
    pub cluster_spec: Option<ClusterSpec>,
    pub rng_seed: u64,
    pub intrinsics: CameraIntrinsics,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_points: 100,
            point_source: PointSource::UniformBox { extent: 0.3 },
            depth_range: (0.5, 2.0),
            pixel_noise_sigma: 0.0,
            outlier_fraction: 0.0,
            outlier_model: OutlierModel::UniformPixel,
            outlier_target: OutlierTarget::Any,
            cluster_spec: None,
            rng_seed: 0,
            intrinsics: CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480),
        }
    }
}

impl SceneConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.n_points < 4 {
            return Err(SynthError::InvalidConfig(format!(
                "n_points must be at least 4, got {}",
                self.n_points
            )));
        }
        if self.depth_range.0 <= 0.0
            || self.depth_range.0.is_nan()
            || self.depth_range.1.is_nan()
            || self.depth_range.1 < self.depth_range.0
        {
            return Err(SynthError::InvalidConfig(format!(
                "depth range ({}, {}) must satisfy 0 < z_min <= z_max",
                self.depth_range.0, self.depth_range.1
            )));
        }
        if self.pixel_noise_sigma < 0.0 {
            return Err(SynthError::InvalidConfig(
                "pixel_noise_sigma must be non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(SynthError::InvalidConfig(
                "outlier_fraction must lie in [0, 1)".into(),
            ));
        }
        let outliers = (self.outlier_fraction * self.n_points as f64).floor() as usize;
        if self.n_points - outliers < 4 {
            return Err(SynthError::InvalidConfig(
                "fewer than 4 true inliers would remain after outlier injection".into(),
            ));
        }
        if let PointSource::UniformBox { extent } = self.point_source {
            if extent <= 0.0 || extent.is_nan() {
                return Err(SynthError::InvalidConfig("box extent must be positive".into()));
            }
        }
        if let Some(spec) = &self.cluster_spec {
            if spec.n_clusters == 0 {
                return Err(SynthError::InvalidConfig("n_clusters must be positive".into()));
            }
            if spec.cluster_radius <= 0.0 || spec.cluster_radius.is_nan() {
                return Err(SynthError::InvalidConfig(
                    "cluster_radius must be positive".into(),
                ));
            }
            if !(0.0..1.0).contains(&spec.background_fraction) {
                return Err(SynthError::InvalidConfig(
                    "background_fraction must lie in [0, 1)".into(),
                ));
            }
            if matches!(self.point_source, PointSource::Model(_)) {
                return Err(SynthError::InvalidConfig(
                    "cluster_spec requires a box point source".into(),
                ));
            }
        }
        let margin = NOISE_TRUNCATION_SIGMAS * self.pixel_noise_sigma;
        if 2.0 * margin >= self.intrinsics.image_width as f64
            || 2.0 * margin >= self.intrinsics.image_height as f64
        {
            return Err(SynthError::InvalidConfig(
                "image too small for the requested noise level".into(),
            ));
        }
        Ok(())
    }
}

/// A generated scene with its exact corruption labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub intrinsics: CameraIntrinsics,
    pub truth: Pose,
    pub correspondences: CorrespondenceSet,
    /// True where the observation was replaced by an outlier.
    pub outlier_truth_mask: Vec<bool>,
    /// The 3D point cloud as a metric model.
    pub model_points: ModelPoints,
    /// True for points generated as uniform background (clustered scenes
    /// only; all false otherwise).
    pub background_mask: Vec<bool>,
}

impl SyntheticScene {
    pub fn n_outliers(&self) -> usize {
        self.outlier_truth_mask.iter().filter(|&&m| m).count()
    }

    pub fn inlier_indices(&self) -> Vec<usize> {
        self.outlier_truth_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| (!m).then_some(i))
            .collect()
    }

    /// Mean camera-frame depth of the clean correspondences.
    pub fn mean_depth(&self) -> f64 {
        let inliers = self.inlier_indices();
        if inliers.is_empty() {
            return f64::NAN;
        }
        inliers
            .iter()
            .map(|&i| self.truth.transform_point(&self.correspondences[i].point).z)
            .sum::<f64>()
            / inliers.len() as f64
    }
}

fn haar_rotation(rng: &mut ChaCha8Rng) -> nalgebra::Matrix3<f64> {
    let w: f64 = StandardNormal.sample(rng);
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    let z: f64 = StandardNormal.sample(rng);
    let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
    *q.to_rotation_matrix().matrix()
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    let mut dir = Vector3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    let norm = dir.norm();
    if norm < 1e-12 {
        dir = Vector3::new(1.0, 0.0, 0.0);
    } else {
        dir /= norm;
    }
    let r = radius * rng.random_range(0.0..1.0f64).cbrt();
    dir * r
}

/// Samples the 3D cloud; returns points plus the background flags.
fn sample_points(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> (Vec<Vector3<f64>>, Vec<bool>) {
    match (&cfg.point_source, &cfg.cluster_spec) {
        (PointSource::Model(model), _) => {
            let verts = model.vertices();
            let points = if cfg.n_points <= verts.len() {
                rand::seq::index::sample(rng, verts.len(), cfg.n_points)
                    .iter()
                    .map(|i| verts[i])
                    .collect()
            } else {
                (0..cfg.n_points)
                    .map(|_| verts[rng.random_range(0..verts.len())])
                    .collect()
            };
            let background = vec![false; cfg.n_points];
            (points, background)
        }
        (PointSource::UniformBox { extent }, None) => {
            let half = extent / 2.0;
            let points = (0..cfg.n_points)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-half..half),
                        rng.random_range(-half..half),
                        rng.random_range(-half..half),
                    )
                })
                .collect();
            (points, vec![false; cfg.n_points])
        }
        (PointSource::UniformBox { extent }, Some(spec)) => {
            let half = extent / 2.0;
            let n_background = (spec.background_fraction * cfg.n_points as f64).floor() as usize;
            let centers: Vec<Vector3<f64>> = (0..spec.n_clusters)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-half..half),
                        rng.random_range(-half..half),
                        rng.random_range(-half..half),
                    )
                })
                .collect();
            let mut points = Vec::with_capacity(cfg.n_points);
            let mut background = Vec::with_capacity(cfg.n_points);
            for _ in 0..n_background {
                points.push(Vector3::new(
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                ));
                background.push(true);
            }
            for i in 0..cfg.n_points - n_background {
                let center = centers[i % spec.n_clusters];
                points.push(center + uniform_in_ball(rng, spec.cluster_radius));
                background.push(false);
            }
            (points, background)
        }
    }
}

/// Generates a scene: cloud, Haar-uniform pose framed inside the central
/// 60% of the image, truncated Gaussian pixel noise, then exact-count
/// outlier injection.
pub fn generate(cfg: &SceneConfig) -> Result<SyntheticScene, SynthError> {
    cfg.validate()?;
    let k = &cfg.intrinsics;
    let width = k.image_width as f64;
    let height = k.image_height as f64;
    let margin = NOISE_TRUNCATION_SIGMAS * cfg.pixel_noise_sigma;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let (points, background_mask) = sample_points(cfg, &mut rng);

    let mut centroid = Vector3::zeros();
    for p in &points {
        centroid += p;
    }
    centroid /= points.len() as f64;

    // Rejection-sample a pose whose projections all land inside the
    // noise-shrunk image bounds.
    let mut placed: Option<(Pose, Vec<Vector2<f64>>)> = None;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let rotation = haar_rotation(&mut rng);
        let target_u = rng.random_range(0.2 * width..0.8 * width);
        let target_v = rng.random_range(0.2 * height..0.8 * height);
        let depth = rng.random_range(cfg.depth_range.0..=cfg.depth_range.1);
        let target_cam = Vector3::new(
            depth * (target_u - k.cx) / k.fx,
            depth * (target_v - k.cy) / k.fy,
            depth,
        );
        let pose = Pose {
            rotation,
            translation: target_cam - rotation * centroid,
        };
        let mut projections = Vec::with_capacity(points.len());
        let mut ok = true;
        for p in &points {
            match project(k, &pose, p) {
                Ok(proj)
                    if proj.x >= margin
                        && proj.x <= width - margin
                        && proj.y >= margin
                        && proj.y <= height - margin =>
                {
                    projections.push(proj)
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            placed = Some((pose, projections));
            break;
        }
    }
    let (truth, projections) = placed.ok_or_else(|| {
        SynthError::InvalidConfig(
            "could not frame the cloud inside the image; widen the depth range or shrink the cloud"
                .into(),
        )
    })?;

    // Truncated Gaussian pixel noise on every observation.
    let mut observations = projections.clone();
    if cfg.pixel_noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.pixel_noise_sigma).expect("sigma validated");
        let cap_sq = margin * margin;
        for obs in &mut observations {
            loop {
                let dx = normal.sample(&mut rng);
                let dy = normal.sample(&mut rng);
                if dx * dx + dy * dy <= cap_sq {
                    obs.x += dx;
                    obs.y += dy;
                    break;
                }
            }
        }
    }

    // Exact-count outlier injection.
    let n = cfg.n_points;
    let n_outliers = (cfg.outlier_fraction * n as f64).floor() as usize;
    let mut outlier_mask = vec![false; n];
    if n_outliers > 0 {
        let chosen = choose_outlier_indices(
            &mut rng,
            n,
            n_outliers,
            cfg.outlier_target,
            &background_mask,
        );
        match cfg.outlier_model {
            OutlierModel::UniformPixel => {
                for &i in &chosen {
                    observations[i] = Vector2::new(
                        rng.random_range(0.0..width),
                        rng.random_range(0.0..height),
                    );
                    outlier_mask[i] = true;
                }
            }
            OutlierModel::WrongAssociation => {
                for pair in chosen.chunks(2) {
                    if pair.len() == 2 {
                        observations.swap(pair[0], pair[1]);
                        outlier_mask[pair[0]] = true;
                        outlier_mask[pair[1]] = true;
                    } else {
                        // odd leftover: borrow the observation of a random
                        // other correspondence
                        let i = pair[0];
                        let mut j = rng.random_range(0..n - 1);
                        if j >= i {
                            j += 1;
                        }
                        observations[i] = observations[j];
                        outlier_mask[i] = true;
                    }
                }
            }
        }
    }

    let items: Vec<Correspondence> = observations
        .into_iter()
        .zip(points.iter())
        .map(|(pixel, &point)| Correspondence::new(pixel, point))
        .collect();
    let correspondences = CorrespondenceSet::new(items).expect("unit weights are valid");
    let model_points = match &cfg.point_source {
        PointSource::Model(model) => model.clone(),
        PointSource::UniformBox { .. } => ModelPoints::new(points)
            .map_err(|e| SynthError::InvalidConfig(format!("degenerate cloud: {e}")))?,
    };

    Ok(SyntheticScene {
        intrinsics: *k,
        truth,
        correspondences,
        outlier_truth_mask: outlier_mask,
        model_points,
        background_mask,
    })
}

fn choose_outlier_indices(
    rng: &mut ChaCha8Rng,
    n: usize,
    count: usize,
    target: OutlierTarget,
    background_mask: &[bool],
) -> Vec<usize> {
    match target {
        OutlierTarget::Any => rand::seq::index::sample(rng, n, count).into_vec(),
        OutlierTarget::Background => {
            let background: Vec<usize> = (0..n).filter(|&i| background_mask[i]).collect();
            if background.len() >= count {
                rand::seq::index::sample(rng, background.len(), count)
                    .iter()
                    .map(|j| background[j])
                    .collect()
            } else {
                // take the whole background pool, spill into the rest
                let mut chosen = background.clone();
                let rest: Vec<usize> = (0..n).filter(|&i| !background_mask[i]).collect();
                let extra = count - background.len();
                chosen.extend(
                    rand::seq::index::sample(rng, rest.len(), extra)
                        .iter()
                        .map(|j| rest[j]),
                );
                chosen
            }
        }
    }
}

/// Injects additional uniform-pixel outliers into previously clean
/// correspondences; the extra count is `⌊additional_fraction · n⌋`.
pub fn corrupt(
    scene: &SyntheticScene,
    additional_fraction: f64,
    rng_seed: u64,
) -> Result<SyntheticScene, SynthError> {
    if !(0.0..1.0).contains(&additional_fraction) {
        return Err(SynthError::InvalidConfig(
            "additional_fraction must lie in [0, 1)".into(),
        ));
    }
    let n = scene.correspondences.len();
    let extra = (additional_fraction * n as f64).floor() as usize;
    if extra == 0 {
        return Ok(scene.clone());
    }
    let clean: Vec<usize> = scene.inlier_indices();
    if clean.len() < extra || clean.len() - extra < 4 {
        return Err(SynthError::InvalidConfig(
            "corruption would leave fewer than 4 true inliers".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let width = scene.intrinsics.image_width as f64;
    let height = scene.intrinsics.image_height as f64;
    let mut items = scene.correspondences.items().to_vec();
    let mut mask = scene.outlier_truth_mask.clone();
    for j in rand::seq::index::sample(&mut rng, clean.len(), extra).iter() {
        let i = clean[j];
        items[i].pixel = Vector2::new(rng.random_range(0.0..width), rng.random_range(0.0..height));
        mask[i] = true;
    }

    Ok(SyntheticScene {
        intrinsics: scene.intrinsics,
        truth: scene.truth,
        correspondences: CorrespondenceSet::new(items).expect("weights preserved"),
        outlier_truth_mask: mask,
        model_points: scene.model_points.clone(),
        background_mask: scene.background_mask.clone(),
    })
}
