//! Motion sequences and their on-disk formats.

mod bvh;
mod json;

pub use bvh::{parse_bvh, parse_bvh_with, quat_to_euler_zxy, write_bvh, BvhOptions, DEFAULT_BVH_SCALE};
pub use json::{motion_from_json, motion_to_json, MOTION_JSON_VERSION};

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::{slerp, Pose, Quat, SkeletonTopology, Vec3};

/// Timed frames of local joint rotations over a fixed skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    topology: SkeletonTopology,
    frames: Vec<Pose>,
    fps: f64,
    label: Option<String>,
}

impl MotionSequence {
    pub fn new(topology: SkeletonTopology, frames: Vec<Pose>, fps: f64, label: Option<String>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyMotion);
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidConfig(format!("frame rate must be positive and finite, got {fps}")));
        }
        for pose in &frames {
            pose.check(&topology)?;
        }
        Ok(MotionSequence { topology, frames, fps, label })
    }

    pub fn topology(&self) -> &SkeletonTopology {
        &self.topology
    }

    pub fn frames(&self) -> &[Pose] {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.topology.len()
    }

    /// Seconds between the first and last frame.
    pub fn duration(&self) -> f64 {
        (self.frames.len() - 1) as f64 / self.fps
    }

    /// Rotation track of joint `j`.
    pub fn joint_track(&self, j: usize) -> impl Iterator<Item = Quat> + '_ {
        self.frames.iter().map(move |f| f.rotations()[j])
    }

    /// Frames in reverse order.
    pub fn reversed(&self) -> MotionSequence {
        let mut frames = self.frames.clone();
        frames.reverse();
        MotionSequence { frames, ..self.clone() }
    }

    /// Re-expresses this motion over `target`, matching joints by name.
    ///
    /// Fails with `TopologyMismatch` unless both skeletons have the same
    /// joint names with the same parents.
    pub fn conform_to(&self, target: &SkeletonTopology) -> Result<MotionSequence> {
        if !self.topology.same_structure(target) {
            return Err(Error::TopologyMismatch(format!(
                "joints [{}] do not match [{}]",
                self.topology.names().join(", "),
                target.names().join(", ")
            )));
        }
        if self.topology.names() == target.names() {
            return Ok(MotionSequence { topology: target.clone(), ..self.clone() });
        }
        let map: Vec<usize> = target.names().iter().map(|n| self.topology.index_of(n).unwrap()).collect();
        let frames = self
            .frames
            .iter()
            .map(|f| Pose::new(map.iter().map(|&j| f.rotations()[j]).collect(), f.root_translation()))
            .collect();
        MotionSequence::new(target.clone(), frames, self.fps, self.label.clone())
    }

    /// Pose at fractional frame position `u ∈ [0, len-1]`.
    pub fn sample(&self, u: f64) -> Pose {
        let last = self.frames.len() - 1;
        let u = u.clamp(0.0, last as f64);
        let i = u.floor() as usize;
        let t = u - i as f64;
        if i >= last || t == 0.0 {
            return self.frames[i.min(last)].clone();
        }
        let (a, b) = (&self.frames[i], &self.frames[i + 1]);
        let rotations = a
            .rotations()
            .iter()
            .zip(b.rotations())
            .map(|(&qa, &qb)| slerp(qa, qb, t))
            .collect();
        Pose::new(rotations, a.root_translation().lerp(b.root_translation(), t))
    }

    pub fn read_file(path: impl AsRef<Path>, opts: &BvhOptions) -> Result<MotionSequence> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("json") => motion_from_json(&text),
            _ => parse_bvh_with(&text, opts),
        }
    }
}

/// Resamples to `target_fps`, keeping the first and last frames.
///
/// The output holds `round(duration · target_fps) + 1` frames spread evenly
/// over the source duration, so the duration is preserved to within one
/// output period. Rotations are interpolated with SLERP per joint and the
/// root translation linearly.
pub fn resample(motion: &MotionSequence, target_fps: f64) -> Result<MotionSequence> {
    if !(target_fps.is_finite() && target_fps > 0.0) {
        return Err(Error::InvalidConfig(format!("target frame rate must be positive, got {target_fps}")));
    }
    if motion.is_empty() {
        return Err(Error::EmptyMotion);
    }
    let count = if motion.fps == target_fps {
        motion.len()
    } else if motion.len() == 1 {
        1
    } else {
        // Two frames at least, so both endpoints survive.
        ((motion.duration() * target_fps).round() as usize + 1).max(2)
    };
    let mut out = resample_frames(motion, count)?;
    out.fps = target_fps;
    Ok(out)
}

/// Resamples to exactly `count` evenly spaced frames over the same duration.
///
/// The frame rate of the result is adjusted to match.
pub fn resample_frames(motion: &MotionSequence, count: usize) -> Result<MotionSequence> {
    if count == 0 || motion.is_empty() {
        return Err(Error::EmptyMotion);
    }
    let src_last = (motion.len() - 1) as f64;
    let frames: Vec<Pose> = if count == motion.len() {
        motion.frames.clone()
    } else if count == 1 {
        vec![motion.frames[0].clone()]
    } else {
        let step = src_last / (count - 1) as f64;
        (0..count)
            .map(|k| if k == count - 1 { motion.frames[motion.len() - 1].clone() } else { motion.sample(k as f64 * step) })
            .collect()
    };
    let fps = if count > 1 && motion.len() > 1 { (count - 1) as f64 / motion.duration() } else { motion.fps };
    Ok(MotionSequence { topology: motion.topology.clone(), frames, fps, label: motion.label.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::X,
            Axis::Y => Vec3::Y,
            Axis::Z => Vec3::Z,
        }
    }

    fn letter(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }
}

/// Order of the three rotation channels of a joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EulerOrder([Axis; 3]);

impl EulerOrder {
    pub const ZXY: EulerOrder = EulerOrder([Axis::Z, Axis::X, Axis::Y]);
    pub const XYZ: EulerOrder = EulerOrder([Axis::X, Axis::Y, Axis::Z]);

    pub fn new(axes: [Axis; 3]) -> Result<Self> {
        if axes[0] == axes[1] || axes[1] == axes[2] || axes[0] == axes[2] {
            return Err(Error::InvalidConfig(format!("euler axes must be distinct: {axes:?}")));
        }
        Ok(EulerOrder(axes))
    }

    pub fn axes(self) -> [Axis; 3] {
        self.0
    }

    /// All six orders.
    pub fn all() -> [EulerOrder; 6] {
        use Axis::*;
        [[X, Y, Z], [X, Z, Y], [Y, X, Z], [Y, Z, X], [Z, X, Y], [Z, Y, X]].map(EulerOrder)
    }
}

impl fmt::Display for EulerOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.0 {
            write!(f, "{}", a.letter())?;
        }
        Ok(())
    }
}

/// Intrinsic composition: `angles.x` turns about the first declared axis,
/// `angles.y` about the second, `angles.z` about the third.
pub fn euler_to_quat(angles_deg: Vec3, order: EulerOrder) -> Quat {
    let a = angles_deg.to_array();
    order
        .0
        .iter()
        .zip(a)
        .fold(Quat::IDENTITY, |acc, (axis, deg)| acc * Quat::from_axis_angle(axis.unit(), deg.to_radians()))
        .normalize()
        .canonicalize()
}
