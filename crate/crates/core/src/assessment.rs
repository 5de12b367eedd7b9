//! The three-part evaluation of a student motion against the reference
//! database: confusion, smoothness and alignment.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{project, segment_descriptor, EmbeddingWeights, SegmentEmbedding};
use crate::error::{Error, Result};
use crate::kinematics::{log, Vec3};
use crate::motion_io::{resample, MotionSequence};
use crate::refdb::{ReferenceDatabase, TeacherTake};
use crate::smoothing::{smoothness, SmoothnessResult};

pub const REPORT_JSON_VERSION: &str = "siglang-report/1";

/// Floor added to every joint's mean speed before weighting (rad/s).
pub const JOINT_WEIGHT_FLOOR: f64 = 1e-3;

/// Reference speed for the alignment score (rad/s).
pub const ALIGNMENT_SCALE: f64 = 1.0;

/// One centroid per vocabulary item.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub temperature: f64,
}

impl ClusterModel {
    pub fn new(centroids: Vec<Vec<f64>>, labels: Vec<String>, temperature: f64) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::EmptyModel);
        }
        if centroids.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: centroids.len(), found: labels.len() });
        }
        let dim = centroids[0].len();
        if let Some(c) = centroids.iter().find(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: c.len() });
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidConfig(format!("duplicate cluster label {dup:?}")));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidConfig(format!("temperature must be positive, got {temperature}")));
        }
        Ok(ClusterModel { centroids, labels, temperature })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionResult {
    /// Probability per cluster, in the model's label order.
    pub distribution: Vec<f64>,
    pub labels: Vec<String>,
    pub assigned_label: String,
    /// Normalized entropy of `distribution`, in `[0, 1]`.
    pub confusion: f64,
}

impl ConfusionResult {
    pub fn probability_of(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.distribution[i])
    }
}

/// Soft assignment of an embedding to the vocabulary clusters.
///
/// Probabilities are a softmax over negated centroid distances divided by the
/// temperature, so the nearest centroid is the most probable one.
pub fn class_distribution(e: &SegmentEmbedding, model: &ClusterModel) -> Result<ConfusionResult> {
    if model.centroids.is_empty() {
        return Err(Error::EmptyModel);
    }
    if e.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: e.dim() });
    }
    let dist: Vec<f64> = model
        .centroids
        .iter()
        .map(|c| c.iter().zip(&e.vector).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    let nearest = dist
        .iter()
        .enumerate()
        .fold(0, |best, (i, d)| if *d < dist[best] { i } else { best });
    let logits: Vec<f64> = dist.iter().map(|d| -d / model.temperature).collect();
    let top = logits[nearest];
    let raw: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    let distribution: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let k = distribution.len();
    let confusion = if k < 2 {
        0.0
    } else {
        let h: f64 = distribution.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
        (h / (k as f64).ln()).clamp(0.0, 1.0)
    };
    Ok(ConfusionResult {
        distribution,
        labels: model.labels.clone(),
        assigned_label: model.labels[nearest].clone(),
        confusion,
    })
}

/// Per-interval joint angular velocities in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSequence {
    /// `intervals[t][j]` is joint `j`'s angular velocity between frames `t` and `t+1`.
    pub intervals: Vec<Vec<Vec3>>,
    pub fps: f64,
}

impl GradientSequence {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.intervals.first().map_or(0, Vec::len)
    }
}

/// Body-frame angular velocity of every joint over every frame interval:
/// `ω = 2 · log(q(t)* · q(t+1)) · fps`.
pub fn angular_velocity(motion: &MotionSequence) -> Result<GradientSequence> {
    if motion.len() < 2 {
        return Err(Error::EmptyMotion);
    }
    let fps = motion.fps();
    let intervals = motion
        .frames()
        .windows(2)
        .map(|w| {
            w[0].rotations()
                .iter()
                .zip(w[1].rotations())
                .map(|(&a, &b)| log((a.conj() * b).canonicalize()).scale(2.0 * fps))
                .collect()
        })
        .collect();
    Ok(GradientSequence { intervals, fps })
}

/// Weights proportional to each joint's mean speed plus a small floor,
/// normalized to sum to one.
pub fn joint_weights_from_gradients(g: &GradientSequence) -> Vec<f64> {
    let n = g.joint_count();
    let count = g.len().max(1) as f64;
    let raw: Vec<f64> = (0..n)
        .map(|j| JOINT_WEIGHT_FLOOR + g.intervals.iter().map(|w| w[j].norm()).sum::<f64>() / count)
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

pub fn joint_weights(teacher: &MotionSequence) -> Result<Vec<f64>> {
    Ok(joint_weights_from_gradients(&angular_velocity(teacher)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Optimal accumulated warp cost.
    pub distance: f64,
    /// `exp(−distance / (path length · ALIGNMENT_SCALE))`.
    pub normalized_score: f64,
    /// `(student index, teacher index)` pairs from `(0, 0)` to the last pair.
    pub path: Vec<(usize, usize)>,
    /// Mean angular-velocity discrepancy per joint along the path.
    pub per_joint_error: Vec<f64>,
}

/// Weighted L1 over joints of angular-velocity differences.
pub fn local_cost(a: &[Vec3], b: &[Vec3], weights: &[f64]) -> f64 {
    a.iter().zip(b).zip(weights).map(|((x, y), w)| w * (*x - *y).norm()).sum()
}

/// Derivative dynamic time warping between two angular-velocity sequences.
///
/// Steps are `(1,0)`, `(0,1)` and `(1,1)`. With `band = Some(r)` cells with
/// `|i − j| > r` are excluded. On equal accumulated cost the backtrack
/// prefers the diagonal, then a teacher-only step, then a student-only step.
pub fn ddtw(stu: &GradientSequence, tea: &GradientSequence, weights: &[f64], band: Option<usize>) -> Result<AlignmentResult> {
    let (ls, lt) = (stu.len(), tea.len());
    if ls == 0 || lt == 0 {
        return Err(Error::EmptyMotion);
    }
    let n = tea.joint_count();
    if stu.joint_count() != n {
        return Err(Error::TopologyMismatch(format!("{} joints against {n}", stu.joint_count())));
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: weights.len() });
    }
    if let Some(b) = band {
        if b < ls.abs_diff(lt) {
            return Err(Error::BandInfeasible { band: b, len_a: ls, len_b: lt });
        }
    }
    let inside = |i: usize, j: usize| band.is_none_or(|b| i.abs_diff(j) <= b);
    let idx = |i: usize, j: usize| i * lt + j;
    let mut acc = vec![f64::INFINITY; ls * lt];
    for i in 0..ls {
        for j in 0..lt {
            if !inside(i, j) {
                continue;
            }
            let c = local_cost(&stu.intervals[i], &tea.intervals[j], weights);
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(acc[idx(i - 1, j - 1)]);
                }
                if j > 0 {
                    best = best.min(acc[idx(i, j - 1)]);
                }
                if i > 0 {
                    best = best.min(acc[idx(i - 1, j)]);
                }
                best
            };
            acc[idx(i, j)] = c + prev;
        }
    }
    let distance = acc[idx(ls - 1, lt - 1)];

    let mut path = vec![(ls - 1, lt - 1)];
    let (mut i, mut j) = (ls - 1, lt - 1);
    while i > 0 || j > 0 {
        let mut next: Option<((usize, usize), f64)> = None;
        let mut consider = |cand: (usize, usize)| {
            let v = acc[idx(cand.0, cand.1)];
            if next.is_none_or(|(_, best)| v < best) {
                next = Some((cand, v));
            }
        };
        if i > 0 && j > 0 {
            consider((i - 1, j - 1));
        }
        if j > 0 {
            consider((i, j - 1));
        }
        if i > 0 {
            consider((i - 1, j));
        }
        let ((ni, nj), _) = next.expect("a predecessor exists off the origin");
        i = ni;
        j = nj;
        path.push((i, j));
    }
    path.reverse();

    let mut per_joint_error = vec![0.0; n];
    for &(a, b) in &path {
        for (k, e) in per_joint_error.iter_mut().enumerate() {
            *e += (stu.intervals[a][k] - tea.intervals[b][k]).norm();
        }
    }
    per_joint_error.iter_mut().for_each(|e| *e /= path.len() as f64);
    let normalized_score = (-distance / (path.len() as f64 * ALIGNMENT_SCALE)).exp();
    Ok(AlignmentResult { distance, normalized_score, path, per_joint_error })
}

/// Weights of the three components in the composite score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeWeights {
    pub confusion: f64,
    pub smoothness: f64,
    pub alignment: f64,
}

impl Default for CompositeWeights {
    fn default() -> Self {
        CompositeWeights { confusion: 1.0 / 3.0, smoothness: 1.0 / 3.0, alignment: 1.0 / 3.0 }
    }
}

impl CompositeWeights {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.confusion, self.smoothness, self.alignment];
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("composite weights must be non-negative".into()));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("composite weights must sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssessConfig {
    pub composite: CompositeWeights,
    /// Sakoe–Chiba half-width in frames; `None` is unbounded.
    pub band: Option<usize>,
    /// Replaces the database's embedding weights for the student descriptor.
    pub weights: Option<EmbeddingWeights>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentReport {
    pub vocab: String,
    pub joint_names: Vec<String>,
    pub confusion: ConfusionResult,
    pub smoothness: SmoothnessResult,
    pub alignment: AlignmentResult,
    /// Identifier of the teacher take the alignment was computed against.
    pub teacher_take: String,
    pub composite: f64,
    pub worst_joints: Vec<String>,
}

/// What the pipeline extracts from one motion already at the database rate.
#[derive(Debug, Clone)]
pub(crate) struct MotionProfile {
    pub descriptor: Vec<f64>,
    pub smoothness: SmoothnessResult,
    pub gradients: GradientSequence,
}

pub(crate) fn profile(motion: &MotionSequence, db: &ReferenceDatabase, weights: &EmbeddingWeights) -> Result<MotionProfile> {
    let descriptor = segment_descriptor(motion, weights, db.descriptor_frames)?;
    let smoothness = smoothness(motion, &db.smoothing)?;
    let gradients = angular_velocity(&smoothness.smoothed)?;
    Ok(MotionProfile { descriptor, smoothness, gradients })
}

pub fn composite_score(w: &CompositeWeights, confusion: f64, smoothness: f64, alignment: f64) -> f64 {
    100.0 * (w.confusion * (1.0 - confusion) + w.smoothness * smoothness + w.alignment * alignment)
}

/// Scores `student` as an attempt at vocabulary item `vocab`.
///
/// The student is matched to the database skeleton by joint name and
/// resampled to the database rate. Alignment runs against every stored take
/// of `vocab` and keeps the one with the lowest warp cost.
pub fn assess(student: &MotionSequence, vocab: &str, db: &ReferenceDatabase, cfg: &AssessConfig) -> Result<AssessmentReport> {
    cfg.composite.validate()?;
    let entry = db.entry(vocab).ok_or_else(|| Error::UnknownVocab(vocab.to_string()))?;
    let student = student.conform_to(&db.topology)?;
    let student = resample(&student, db.fps)?;
    let weights = cfg.weights.as_ref().unwrap_or(&db.weights);
    weights.validate(db.topology.len())?;

    let prof = profile(&student, db, weights)?;
    let embedding = project(&prof.descriptor, &db.basis, student.label().map(str::to_string))?;
    let confusion = class_distribution(&embedding, &db.cluster_model)?;

    let alignments = entry
        .takes
        .par_iter()
        .map(|take: &TeacherTake| ddtw(&prof.gradients, &take.gradients, &take.joint_weights, cfg.band))
        .collect::<Result<Vec<_>>>()?;
    let (best, alignment) = alignments
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.distance < a.1.distance { b } else { a })
        .expect("vocabulary entries hold at least one take");

    let composite = composite_score(&cfg.composite, confusion.confusion, prof.smoothness.score, alignment.normalized_score);
    let mut order: Vec<usize> = (0..db.topology.len()).collect();
    order.sort_by(|&a, &b| alignment.per_joint_error[b].total_cmp(&alignment.per_joint_error[a]).then(a.cmp(&b)));
    let worst_joints = order.iter().take(3).map(|&j| db.topology.names()[j].clone()).collect();

    Ok(AssessmentReport {
        vocab: vocab.to_string(),
        joint_names: db.topology.names().to_vec(),
        confusion,
        smoothness: prof.smoothness,
        alignment,
        teacher_take: entry.takes[best].id.clone(),
        composite,
        worst_joints,
    })
}

/// Rounds to nine significant digits so serialized reports diff cleanly.
pub fn round_sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v + 0.0;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ReportJson {
    pub version: String,
    pub vocab: String,
    pub confusion: ConfusionJson,
    pub smoothness: SmoothnessJson,
    pub alignment: AlignmentJson,
    pub composite: f64,
    pub worst_joints: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ConfusionJson {
    pub distribution: BTreeMap<String, f64>,
    pub assigned: String,
    #[serde(rename = "C")]
    pub c: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SmoothnessJson {
    pub d_s: f64,
    #[serde(rename = "S")]
    pub s: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct AlignmentJson {
    #[serde(rename = "D")]
    pub d: f64,
    pub score: f64,
    pub path_len: usize,
    pub per_joint: BTreeMap<String, f64>,
}

impl AssessmentReport {
    pub fn to_json_value(&self) -> ReportJson {
        ReportJson {
            version: REPORT_JSON_VERSION.to_string(),
            vocab: self.vocab.clone(),
            confusion: ConfusionJson {
                distribution: self
                    .confusion
                    .labels
                    .iter()
                    .cloned()
                    .zip(self.confusion.distribution.iter().map(|&p| round_sig9(p)))
                    .collect(),
                assigned: self.confusion.assigned_label.clone(),
                c: round_sig9(self.confusion.confusion),
            },
            smoothness: SmoothnessJson { d_s: round_sig9(self.smoothness.d_s), s: round_sig9(self.smoothness.score) },
            alignment: AlignmentJson {
                d: round_sig9(self.alignment.distance),
                score: round_sig9(self.alignment.normalized_score),
                path_len: self.alignment.path.len(),
                per_joint: self
                    .joint_names
                    .iter()
                    .cloned()
                    .zip(self.alignment.per_joint_error.iter().map(|&e| round_sig9(e)))
                    .collect(),
            },
            composite: round_sig9(self.composite),
            worst_joints: self.worst_joints.clone(),
        }
    }

    /// Pretty-printed report with sorted map keys and nine significant digits.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("report serializes");
        s.push('\n');
        s
    }
}
