//! File formats: the correspondence JSON exchange format, ASCII-PLY / CSV
//! model point loading, and the pose JSON emitted by the CLI.
//!
//! Correspondence JSON schema (all numbers IEEE doubles, UTF-8):
//!
//! ```json
//! {
//!   "intrinsics": {"fx": 600.0, "fy": 600.0, "cx": 320.0, "cy": 240.0,
//!                   "width": 640, "height": 480},
//!   "correspondences": [
//!     {"pixel": [u, v], "point": [x, y, z], "geom_weight": 0.8}
//!   ]
//! }
//! ```
//!
//! `geom_weight` is optional and defaults to 1.0. Units are meters and
//! pixels, matching the in-memory types.

use std::fs;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricError, ModelPoints};
use crate::synth::SyntheticScene;
use crate::types::{
    validate_intrinsics, CameraIntrinsics, Correspondence, CorrespondenceSet, Pose, TypeError,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {source}")]
    InvalidIntrinsics { path: String, source: TypeError },
    #[error("{path}: {source}")]
    InvalidModel { path: String, source: MetricError },
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IntrinsicsJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: i64,
    height: i64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CorrespondenceJson {
    pixel: [f64; 2],
    point: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    geom_weight: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CorrespondenceFileJson {
    intrinsics: IntrinsicsJson,
    correspondences: Vec<CorrespondenceJson>,
}

/// Parses a correspondence JSON file; a missing `geom_weight` defaults
/// to 1.0 and out-of-range weights are parse errors.
pub fn load_correspondences(
    path: impl AsRef<Path>,
) -> Result<(CameraIntrinsics, CorrespondenceSet), IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: CorrespondenceFileJson = serde_json::from_str(&text)
        .map_err(|e| parse_err(path, format!("line {}, column {}: {}", e.line(), e.column(), e)))?;

    let k = CameraIntrinsics::new(
        file.intrinsics.fx,
        file.intrinsics.fy,
        file.intrinsics.cx,
        file.intrinsics.cy,
        file.intrinsics.width,
        file.intrinsics.height,
    );
    let k = validate_intrinsics(k).map_err(|source| IoError::InvalidIntrinsics {
        path: path.display().to_string(),
        source,
    })?;

    let mut items = Vec::with_capacity(file.correspondences.len());
    for (index, c) in file.correspondences.iter().enumerate() {
        let weight = c.geom_weight.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&weight) {
            return Err(parse_err(
                path,
                format!("correspondence {index}: geom_weight {weight} outside [0, 1]"),
            ));
        }
        if c.pixel.iter().any(|v| !v.is_finite()) || c.point.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(
                path,
                format!("correspondence {index}: non-finite coordinate"),
            ));
        }
        items.push(Correspondence::with_weight(
            Vector2::new(c.pixel[0], c.pixel[1]),
            Vector3::new(c.point[0], c.point[1], c.point[2]),
            weight,
        ));
    }
    let set = CorrespondenceSet::new(items)
        .map_err(|e| parse_err(path, format!("invalid correspondence set: {e}")))?;
    Ok((k, set))
}

/// Writes the correspondence JSON format; `save` → `load` round-trips to
/// identical values.
pub fn save_correspondences(
    path: impl AsRef<Path>,
    k: &CameraIntrinsics,
    c: &CorrespondenceSet,
) -> Result<(), IoError> {
    let path = path.as_ref();
    let file = CorrespondenceFileJson {
        intrinsics: IntrinsicsJson {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.image_width,
            height: k.image_height,
        },
        correspondences: c
            .iter()
            .map(|corr| CorrespondenceJson {
                pixel: [corr.pixel.x, corr.pixel.y],
                point: [corr.point.x, corr.point.y, corr.point.z],
                geom_weight: (corr.geom_weight != 1.0).then_some(corr.geom_weight),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("serializable");
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Serializes a synthetic scene's observations for replay through the
/// same file interface real front-ends use.
pub fn save_scene_correspondences(
    path: impl AsRef<Path>,
    scene: &SyntheticScene,
) -> Result<(), IoError> {
    save_correspondences(path, &scene.intrinsics, &scene.correspondences)
}

/// Loads model vertices from ASCII PLY (`ply` magic) or CSV (`x,y,z` per
/// line). Binary PLY is rejected.
pub fn load_model_points(path: impl AsRef<Path>) -> Result<ModelPoints, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let vertices = if text.trim_start().starts_with("ply") {
        parse_ascii_ply(path, &text)?
    } else {
        parse_csv_points(path, &text)?
    };
    ModelPoints::new(vertices).map_err(|source| IoError::InvalidModel {
        path: path.display().to_string(),
        source,
    })
}

fn parse_csv_points(path: &Path, text: &str) -> Result<Vec<Vector3<f64>>, IoError> {
    let mut vertices = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                format!("line {}: expected 3 comma-separated values", line_no + 1),
            ));
        }
        let mut coords = [0.0; 3];
        for (slot, field) in coords.iter_mut().zip(fields.iter()) {
            *slot = field.parse::<f64>().map_err(|_| {
                parse_err(path, format!("line {}: bad number {field:?}", line_no + 1))
            })?;
        }
        vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
    }
    Ok(vertices)
}

/// Minimal ASCII-PLY vertex reader: honors the property order declared in
/// the header, reads only the vertex element, ignores everything after.
fn parse_ascii_ply(path: &Path, text: &str) -> Result<Vec<Vector3<f64>>, IoError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, magic)) if magic.trim() == "ply" => {}
        _ => return Err(parse_err(path, "missing ply magic")),
    }

    let mut vertex_count: Option<usize> = None;
    let mut in_vertex_element = false;
    let mut property_names: Vec<String> = Vec::new();
    let mut format_seen = false;
    for (line_no, raw) in &mut lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("comment") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("format ") {
            if !rest.starts_with("ascii") {
                return Err(parse_err(
                    path,
                    format!("line {}: binary PLY is not supported", line_no + 1),
                ));
            }
            format_seen = true;
        } else if let Some(rest) = line.strip_prefix("element ") {
            let mut parts = rest.split_whitespace();
            let name = parts.next().unwrap_or("");
            in_vertex_element = name == "vertex";
            if in_vertex_element {
                let count = parts
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| {
                        parse_err(path, format!("line {}: bad vertex count", line_no + 1))
                    })?;
                vertex_count = Some(count);
            }
        } else if let Some(rest) = line.strip_prefix("property ") {
            if in_vertex_element {
                let name = rest.split_whitespace().last().unwrap_or("");
                property_names.push(name.to_string());
            }
        } else if line == "end_header" {
            break;
        }
    }

    if !format_seen {
        return Err(parse_err(path, "missing format line"));
    }
    let vertex_count =
        vertex_count.ok_or_else(|| parse_err(path, "missing vertex element"))?;
    let axis_index = |axis: &str| -> Result<usize, IoError> {
        property_names
            .iter()
            .position(|p| p == axis)
            .ok_or_else(|| parse_err(path, format!("vertex element lacks property {axis}")))
    };
    let (ix, iy, iz) = (axis_index("x")?, axis_index("y")?, axis_index("z")?);

    let mut vertices = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let Some((line_no, raw)) = lines.next() else {
            return Err(parse_err(path, "unexpected end of file in vertex data"));
        };
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() < property_names.len() {
            return Err(parse_err(
                path,
                format!("line {}: expected {} fields", line_no + 1, property_names.len()),
            ));
        }
        let parse = |idx: usize| -> Result<f64, IoError> {
            fields[idx].parse::<f64>().map_err(|_| {
                parse_err(
                    path,
                    format!("line {}: bad number {:?}", line_no + 1, fields[idx]),
                )
            })
        };
        vertices.push(Vector3::new(parse(ix)?, parse(iy)?, parse(iz)?));
    }
    Ok(vertices)
}

/// Pose JSON payload: rotation as 9 row-major numbers plus translation.
#[derive(Debug, Serialize, Deserialize)]
pub struct PoseJson {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&Pose> for PoseJson {
    fn from(pose: &Pose) -> Self {
        let r = &pose.rotation;
        Self {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [
                pose.translation.x,
                pose.translation.y,
                pose.translation.z,
            ],
        }
    }
}

/// Renders a pose as the CLI's JSON output.
pub fn pose_to_json(pose: &Pose) -> String {
    serde_json::to_string_pretty(&PoseJson::from(pose)).expect("serializable")
}
