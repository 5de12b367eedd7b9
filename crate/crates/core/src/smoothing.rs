//! Temporal smoothing of motion and the smoothness score derived from it.
//!
//! Each joint's rotation track is linearized in log space about its temporal
//! mean rotation, filtered with a Savitzky–Golay (local least-squares
//! polynomial) filter, and mapped back. The smoothness score compares the
//! original motion with that idealized version.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{exp, geodesic_angle, log, Pose, Quat, Vec3};
use crate::motion_io::MotionSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingConfig {
    /// Odd filter length in frames, at least 3.
    pub window: usize,
    pub poly_order: usize,
    /// Score sharpness in 1/rad.
    pub alpha: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { window: 7, poly_order: 3, alpha: 8.0 }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("window must be odd and ≥ 3, got {}", self.window)));
        }
        if self.poly_order == 0 || self.poly_order >= self.window {
            return Err(Error::InvalidConfig(format!(
                "polynomial order must be in 1..{}, got {}",
                self.window, self.poly_order
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Convolution weights that evaluate the least-squares polynomial fit of a
/// window at its center sample.
pub fn savitzky_golay_coefficients(window: usize, order: usize) -> Vec<f64> {
    let half = (window / 2) as f64;
    let a = DMatrix::from_fn(window, order + 1, |k, j| (k as f64 - half).powi(j as i32));
    let normal = a.transpose() * &a;
    let inv = normal.try_inverse().expect("Vandermonde normal matrix is invertible for order < window");
    (0..window).map(|k| (0..=order).map(|j| inv[(0, j)] * a[(k, j)]).sum()).collect()
}

/// Filters `signal` with point-mirrored padding at both ends.
///
/// Padding reflects through the end samples (`x[-k] = 2·x[0] − x[k]`), which
/// extends straight lines exactly, so any filter that reproduces linear
/// signals also leaves them unchanged at the boundaries.
pub fn filter_signal(signal: &[f64], coeffs: &[f64]) -> Vec<f64> {
    let n = signal.len() as isize;
    let half = (coeffs.len() / 2) as isize;
    let at = |i: isize| -> f64 {
        if i < 0 {
            2.0 * signal[0] - signal[(-i) as usize]
        } else if i >= n {
            2.0 * signal[(n - 1) as usize] - signal[(2 * (n - 1) - i) as usize]
        } else {
            signal[i as usize]
        }
    };
    (0..n)
        .map(|t| coeffs.iter().enumerate().map(|(k, c)| c * at(t + k as isize - half)).sum())
        .collect()
}

/// Sign-aligned normalized average of a rotation track.
fn mean_rotation(track: &[Quat]) -> Quat {
    let reference = track[0];
    let mut acc = Quat::new(0.0, 0.0, 0.0, 0.0);
    for &q in track {
        let q = if q.dot(reference) < 0.0 { -q } else { q };
        acc = Quat::new(acc.w + q.w, acc.x + q.x, acc.y + q.y, acc.z + q.z);
    }
    if acc.norm() < 1e-12 {
        return reference;
    }
    acc.normalize().canonicalize()
}

/// Returns the idealized smooth version of `motion`.
///
/// Sequences shorter than the window come back unchanged.
pub fn smooth_sequence(motion: &MotionSequence, cfg: &SmoothingConfig) -> Result<MotionSequence> {
    cfg.validate()?;
    let frames = motion.len();
    if frames < cfg.window {
        return Ok(motion.clone());
    }
    let coeffs = savitzky_golay_coefficients(cfg.window, cfg.poly_order);
    let joints = motion.joint_count();
    let mut rotations = vec![Vec::with_capacity(joints); frames];
    for j in 0..joints {
        let track: Vec<Quat> = motion.joint_track(j).collect();
        let mean = mean_rotation(&track);
        let logs: Vec<Vec3> = track.iter().map(|&q| log(mean.conj() * q)).collect();
        let channel = |k: usize| -> Vec<f64> {
            let raw: Vec<f64> = logs.iter().map(|v| v.to_array()[k]).collect();
            filter_signal(&raw, &coeffs)
        };
        let (xs, ys, zs) = (channel(0), channel(1), channel(2));
        for t in 0..frames {
            rotations[t].push(mean * exp(Vec3::new(xs[t], ys[t], zs[t])));
        }
    }
    let roots: Vec<Vec3> = motion.frames().iter().map(|f| f.root_translation()).collect();
    let root_channel = |k: usize| -> Vec<f64> {
        let raw: Vec<f64> = roots.iter().map(|v| v.to_array()[k]).collect();
        filter_signal(&raw, &coeffs)
    };
    let (rx, ry, rz) = (root_channel(0), root_channel(1), root_channel(2));
    let poses = rotations
        .into_iter()
        .enumerate()
        .map(|(t, rot)| Pose::new(rot, Vec3::new(rx[t], ry[t], rz[t])))
        .collect();
    MotionSequence::new(motion.topology().clone(), poses, motion.fps(), motion.label().map(str::to_string))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessResult {
    pub smoothed: MotionSequence,
    /// Mean per-frame, per-joint geodesic angle to the smoothed motion (rad).
    pub d_s: f64,
    /// `exp(−alpha · d_s)`, in `(0, 1]`.
    pub score: f64,
}

/// Mean geodesic angle between corresponding rotations of two motions.
pub fn mean_geodesic_distance(a: &MotionSequence, b: &MotionSequence) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (fa, fb) in a.frames().iter().zip(b.frames()) {
        for (&qa, &qb) in fa.rotations().iter().zip(fb.rotations()) {
            total += geodesic_angle(qa, qb);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

pub fn smoothness(motion: &MotionSequence, cfg: &SmoothingConfig) -> Result<SmoothnessResult> {
    let smoothed = smooth_sequence(motion, cfg)?;
    let d_s = mean_geodesic_distance(motion, &smoothed);
    let score = (-cfg.alpha * d_s).exp();
    Ok(SmoothnessResult { smoothed, d_s, score })
}
