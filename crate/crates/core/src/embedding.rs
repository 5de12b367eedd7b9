//! Per-frame motion differences and fixed-size segment descriptors.
//!
//! The difference between a teacher and a student joint rotation is the
//! half-angle log of `q_tea · q_stu*`. Differences are propagated down the
//! skeleton tree so that an error at a parent also shows up at its children:
//!
//! ```text
//! D_root_parent = 0
//! D_i = (1 / m1) · W_i · d_i + m2 · D_parent(i)
//! ```

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{log, Pose, Quat, SkeletonTopology, Vec3};
use crate::motion_io::{resample_frames, MotionSequence};

pub const WEIGHTS_JSON_VERSION: &str = "siglang-weights/1";

/// Frames a segment is resampled to before pooling.
pub const DEFAULT_DESCRIPTOR_FRAMES: usize = 32;

/// Upper bound on the embedding dimension.
pub const MAX_EMBEDDING_DIM: usize = 64;

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

/// Per-joint affine weights and the propagation constants.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingWeights {
    pub per_joint: Vec<Mat3>,
    /// Normalizer on the local term, `> 0`.
    pub m1: f64,
    /// Share of the parent's difference carried to the child, in `[0, 1)`.
    pub m2: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    version: String,
    m1: f64,
    m2: f64,
    /// Joint names matching `per_joint`; optional, checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    joints: Option<Vec<String>>,
    per_joint: Vec<Mat3>,
}

impl EmbeddingWeights {
    pub fn identity(joints: usize) -> Self {
        EmbeddingWeights { per_joint: vec![IDENTITY3; joints], m1: 1.0, m2: 0.5 }
    }

    pub fn validate(&self, joints: usize) -> Result<()> {
        if self.per_joint.len() != joints {
            return Err(Error::DimensionMismatch { expected: joints, found: self.per_joint.len() });
        }
        if !(self.m1.is_finite() && self.m1 > 0.0) {
            return Err(Error::InvalidConfig(format!("m1 must be positive, got {}", self.m1)));
        }
        if !(0.0..1.0).contains(&self.m2) {
            return Err(Error::InvalidConfig(format!("m2 must lie in [0, 1), got {}", self.m2)));
        }
        if self.per_joint.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("weight matrices must be finite".into()));
        }
        Ok(())
    }

    /// Reads a weights file whose matrices follow the topology's joint order.
    pub fn from_json(text: &str, topo: &SkeletonTopology) -> Result<Self> {
        let file: WeightsFile = serde_json::from_str(text)?;
        if file.version != WEIGHTS_JSON_VERSION {
            return Err(Error::VersionMismatch { found: file.version, expected: WEIGHTS_JSON_VERSION.into() });
        }
        let per_joint = match file.joints {
            Some(names) => {
                if names.len() != file.per_joint.len() {
                    return Err(Error::DimensionMismatch { expected: names.len(), found: file.per_joint.len() });
                }
                topo.names()
                    .iter()
                    .map(|n| {
                        names
                            .iter()
                            .position(|m| m == n)
                            .map(|k| file.per_joint[k])
                            .ok_or_else(|| Error::TopologyMismatch(format!("weights file has no joint {n:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            None => file.per_joint,
        };
        let w = EmbeddingWeights { per_joint, m1: file.m1, m2: file.m2 };
        w.validate(topo.len())?;
        Ok(w)
    }

    pub fn to_json(&self, topo: &SkeletonTopology) -> String {
        let file = WeightsFile {
            version: WEIGHTS_JSON_VERSION.into(),
            m1: self.m1,
            m2: self.m2,
            joints: Some(topo.names().to_vec()),
            per_joint: self.per_joint.clone(),
        };
        serde_json::to_string_pretty(&file).expect("weights serialize")
    }

    pub fn read_file(path: impl AsRef<Path>, topo: &SkeletonTopology) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, topo)
    }
}

/// Half-angle log of `q_tea · q_stu*`; zero iff both are the same rotation.
pub fn joint_log_diff(q_tea: Quat, q_stu: Quat) -> Vec3 {
    // The product rounds away from exact identity for equal inputs.
    if q_tea == q_stu || q_tea == -q_stu {
        return Vec3::ZERO;
    }
    log((q_tea * q_stu.conj()).canonicalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDifference {
    pub per_joint: Vec<Vec3>,
    /// Euclidean norm over all joints.
    pub scalar: f64,
}

pub fn frame_difference(tea: &Pose, stu: &Pose, w: &EmbeddingWeights, topo: &SkeletonTopology) -> Result<FrameDifference> {
    tea.check(topo)?;
    stu.check(topo)?;
    if w.per_joint.len() != topo.len() {
        return Err(Error::TopologyMismatch(format!(
            "{} weight matrices for {} joints",
            w.per_joint.len(),
            topo.len()
        )));
    }
    let inv_m1 = 1.0 / w.m1;
    let mut per_joint: Vec<Vec3> = Vec::with_capacity(topo.len());
    for i in 0..topo.len() {
        let d = joint_log_diff(tea.rotations()[i], stu.rotations()[i]);
        let local = mat_vec(&w.per_joint[i], d).scale(inv_m1);
        let carried = topo.parent(i).map_or(Vec3::ZERO, |p| per_joint[p].scale(w.m2));
        per_joint.push(local + carried);
    }
    let scalar = per_joint.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    Ok(FrameDifference { per_joint, scalar })
}

/// Pools a motion into a `6N` vector.
///
/// The motion is resampled to `frames` poses, each pose is compared with the
/// rest pose, and for every joint the temporal mean and (population)
/// standard deviation of its three difference channels are emitted:
/// `[mean_x, mean_y, mean_z, std_x, std_y, std_z]` per joint.
pub fn segment_descriptor(motion: &MotionSequence, w: &EmbeddingWeights, frames: usize) -> Result<Vec<f64>> {
    if motion.is_empty() || frames == 0 {
        return Err(Error::EmptyMotion);
    }
    let topo = motion.topology();
    let n = topo.len();
    let sampled = resample_frames(motion, frames)?;
    let rest = topo.rest_pose();
    let diffs = sampled
        .frames()
        .iter()
        .map(|f| frame_difference(f, &rest, w, topo))
        .collect::<Result<Vec<_>>>()?;
    let count = diffs.len() as f64;
    let mut out = Vec::with_capacity(6 * n);
    for j in 0..n {
        let mut mean = Vec3::ZERO;
        for d in &diffs {
            mean += d.per_joint[j];
        }
        let mean = mean.scale(1.0 / count);
        let mut var = [0.0; 3];
        for d in &diffs {
            let e = (d.per_joint[j] - mean).to_array();
            for k in 0..3 {
                var[k] += e[k] * e[k];
            }
        }
        out.extend(mean.to_array());
        out.extend(var.map(|v| (v / count).sqrt()));
    }
    Ok(out)
}

/// A point in the reduced descriptor space.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEmbedding {
    pub vector: Vec<f64>,
    pub source_label: Option<String>,
}

impl SegmentEmbedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Centered orthonormal basis of the principal directions of a descriptor set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    pub center: Vec<f64>,
    /// `n` orthonormal vectors, each the length of `center`.
    pub columns: Vec<Vec<f64>>,
}

impl ProjectionBasis {
    /// Principal basis of `descriptors`, keeping at most `max_dim` directions.
    ///
    /// Directions come from the SVD of the centered descriptor matrix ordered
    /// by decreasing singular value; directions below numerical rank are
    /// dropped. Each vector's largest-magnitude entry is made positive. A
    /// rank-zero corpus keeps a single axis-aligned direction.
    pub fn fit(descriptors: &[Vec<f64>], max_dim: usize) -> Result<Self> {
        let rows = descriptors.len();
        if rows == 0 {
            return Err(Error::EmptyInput);
        }
        let dim = descriptors[0].len();
        if dim == 0 {
            return Err(Error::EmptyInput);
        }
        if let Some(bad) = descriptors.iter().find(|d| d.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
        }
        if max_dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be at least 1".into()));
        }
        let mut center = vec![0.0; dim];
        for d in descriptors {
            for (c, v) in center.iter_mut().zip(d) {
                *c += v;
            }
        }
        center.iter_mut().for_each(|c| *c /= rows as f64);
        let x = DMatrix::from_fn(rows, dim, |r, c| descriptors[r][c] - center[c]);

        let svd = x.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let sv = &svd.singular_values;
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
        let top = order.first().map_or(0.0, |&i| sv[i]);
        let tol = rows.max(dim) as f64 * f64::EPSILON * top;
        let rank = order.iter().filter(|&&i| top > 0.0 && sv[i] > tol).count();

        let mut columns: Vec<Vec<f64>> = order
            .iter()
            .take(rank.min(max_dim))
            .map(|&i| v_t.row(i).iter().copied().collect())
            .collect();
        if columns.is_empty() {
            let mut e0 = vec![0.0; dim];
            e0[0] = 1.0;
            columns.push(e0);
        }
        for col in &mut columns {
            let mut pivot = 0;
            for (k, v) in col.iter().enumerate() {
                if v.abs() > col[pivot].abs() {
                    pivot = k;
                }
            }
            if col[pivot] < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
        }
        Ok(ProjectionBasis { center, columns })
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn input_dim(&self) -> usize {
        self.center.len()
    }

    /// Largest deviation of `columnsᵀ · columns` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, ca) in self.columns.iter().enumerate() {
            for (b, cb) in self.columns.iter().enumerate() {
                let dot: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Coordinates of `descriptor − center` along each basis vector.
    pub fn project(&self, descriptor: &[f64]) -> Result<Vec<f64>> {
        if descriptor.len() != self.center.len() {
            return Err(Error::DimensionMismatch { expected: self.center.len(), found: descriptor.len() });
        }
        Ok(self
            .columns
            .iter()
            .map(|col| col.iter().zip(descriptor).zip(&self.center).map(|((b, d), c)| b * (d - c)).sum())
            .collect())
    }

    /// Maps embedding coordinates back into descriptor space.
    pub fn reconstruct(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if coords.len() != self.columns.len() {
            return Err(Error::DimensionMismatch { expected: self.columns.len(), found: coords.len() });
        }
        let mut out = self.center.clone();
        for (col, &a) in self.columns.iter().zip(coords) {
            for (o, b) in out.iter_mut().zip(col) {
                *o += a * b;
            }
        }
        Ok(out)
    }
}

pub fn project(descriptor: &[f64], basis: &ProjectionBasis, label: Option<String>) -> Result<SegmentEmbedding> {
    Ok(SegmentEmbedding { vector: basis.project(descriptor)?, source_label: label })
}
