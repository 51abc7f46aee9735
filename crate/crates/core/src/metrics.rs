//! Pose-accuracy metrics: average model-point distance under fixed and
//! nearest-neighbor correspondence, threshold accuracy, and the exact area
//! under the accuracy–threshold curve.

use nalgebra::Vector3;
use thiserror::Error;

use crate::par;
use crate::types::Pose;

/// Default maximum threshold for the accuracy–threshold curve, meters.
pub const AUC_MAX_THRESHOLD: f64 = 0.1;
/// Vertex counts above this use the bounding-box diagonal as the diameter.
pub const EXACT_DIAMETER_LIMIT: usize = 2000;
/// Nearest-neighbor metric subsamples models above this vertex count.
pub const DEFAULT_VERTEX_CAP: usize = 5000;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("model has no vertices")]
    EmptyModel,
    #[error("model has zero spatial extent")]
    DegenerateModel,
    #[error("empty input")]
    EmptyInput,
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
}

/// Object model vertices with a characteristic diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoints {
    vertices: Vec<Vector3<f64>>,
    diameter: f64,
}

impl ModelPoints {
    /// Computes the diameter: exact maximum pairwise distance up to
    /// `EXACT_DIAMETER_LIMIT` vertices, the axis-aligned bounding-box
    /// diagonal above that.
    pub fn new(vertices: Vec<Vector3<f64>>) -> Result<Self, MetricError> {
        if vertices.is_empty() {
            return Err(MetricError::EmptyModel);
        }
        let diameter = if vertices.len() <= EXACT_DIAMETER_LIMIT {
            let distances = par::map_indices(vertices.len(), |i| {
                let mut best: f64 = 0.0;
                for j in (i + 1)..vertices.len() {
                    best = best.max((vertices[i] - vertices[j]).norm());
                }
                best
            });
            distances.into_iter().fold(0.0f64, f64::max)
        } else {
            let mut lo = vertices[0];
            let mut hi = vertices[0];
            for v in &vertices {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
            (hi - lo).norm()
        };
        if diameter <= 0.0 || diameter.is_nan() {
            return Err(MetricError::DegenerateModel);
        }
        Ok(Self { vertices, diameter })
    }

    /// Builds from vertices with a supplied diameter.
    pub fn with_diameter(vertices: Vec<Vector3<f64>>, diameter: f64) -> Result<Self, MetricError> {
        if vertices.is_empty() {
            return Err(MetricError::EmptyModel);
        }
        if diameter <= 0.0 || diameter.is_nan() {
            return Err(MetricError::InvalidThreshold(diameter));
        }
        Ok(Self { vertices, diameter })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Deterministic stride subsample down to at most `cap` vertices.
    fn subsampled(&self, cap: usize) -> Vec<Vector3<f64>> {
        if self.vertices.len() <= cap {
            return self.vertices.clone();
        }
        let stride = self.vertices.len().div_ceil(cap);
        self.vertices.iter().step_by(stride).copied().collect()
    }
}

/// Mean distance between vertices transformed by the two poses under fixed
/// correspondence.
pub fn add(model: &ModelPoints, estimated: &Pose, truth: &Pose) -> Result<f64, MetricError> {
    if model.is_empty() {
        return Err(MetricError::EmptyModel);
    }
    let distances = par::map_slice(model.vertices(), |v| {
        (estimated.transform_point(v) - truth.transform_point(v)).norm()
    });
    Ok(distances.iter().sum::<f64>() / model.len() as f64)
}

/// Symmetric variant: mean over estimated-transformed vertices of the
/// distance to the nearest truth-transformed vertex.
pub fn add_s(model: &ModelPoints, estimated: &Pose, truth: &Pose) -> Result<f64, MetricError> {
    add_s_with_cap(model, estimated, truth, DEFAULT_VERTEX_CAP)
}

/// `add_s` with an explicit subsampling cap on the vertex count.
pub fn add_s_with_cap(
    model: &ModelPoints,
    estimated: &Pose,
    truth: &Pose,
    cap: usize,
) -> Result<f64, MetricError> {
    if model.is_empty() {
        return Err(MetricError::EmptyModel);
    }
    let vertices = model.subsampled(cap.max(1));
    let transformed_truth: Vec<Vector3<f64>> =
        vertices.iter().map(|v| truth.transform_point(v)).collect();
    let nearest = par::map_slice(&vertices, |v| {
        let p = estimated.transform_point(v);
        transformed_truth
            .iter()
            .map(|q| (p - q).norm_squared())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    });
    Ok(nearest.iter().sum::<f64>() / vertices.len() as f64)
}

/// Exact area under the accuracy–threshold step curve, normalized by
/// `max_threshold`. Each error contributes `max(0, T − e) / (n·T)`, which
/// is the analytic integral of the empirical accuracy step function.
pub fn auc(errors: &[f64], max_threshold: f64) -> Result<f64, MetricError> {
    if errors.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if max_threshold <= 0.0 || max_threshold.is_nan() {
        return Err(MetricError::InvalidThreshold(max_threshold));
    }
    let total: f64 = errors
        .iter()
        .map(|&e| (max_threshold - e).max(0.0))
        .sum();
    Ok(total / (errors.len() as f64 * max_threshold))
}

/// Fraction of errors strictly below the threshold.
pub fn accuracy_at(errors: &[f64], threshold: f64) -> Result<f64, MetricError> {
    if errors.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if threshold <= 0.0 || threshold.is_nan() {
        return Err(MetricError::InvalidThreshold(threshold));
    }
    let below = errors.iter().filter(|&&e| e < threshold).count();
    Ok(below as f64 / errors.len() as f64)
}

/// Per-pose metric bundle. The AUC entries are the single-error areas
/// (`1 − min(e, T)/T`); averaging them across trials reproduces the
/// aggregate curve area.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub add: f64,
    pub add_s: f64,
    pub add_auc: f64,
    pub add_s_auc: f64,
    pub add_below_0_1d: bool,
    pub add_s_below_0_1d: bool,
}

impl MetricReport {
    pub fn compute(
        model: &ModelPoints,
        estimated: &Pose,
        truth: &Pose,
    ) -> Result<Self, MetricError> {
        let add_value = add(model, estimated, truth)?;
        let add_s_value = add_s(model, estimated, truth)?;
        let gate = 0.1 * model.diameter();
        Ok(Self {
            add: add_value,
            add_s: add_s_value,
            add_auc: auc(&[add_value], AUC_MAX_THRESHOLD)?,
            add_s_auc: auc(&[add_s_value], AUC_MAX_THRESHOLD)?,
            add_below_0_1d: add_value < gate,
            add_s_below_0_1d: add_s_value < gate,
        })
    }
}
