//! Deterministic demo corpus: an upper-body skeleton and one smooth,
//! distinctive motion per vocabulary item.
//!
//! Used by tests, benchmarks and the CLI's synthetic evaluation mode.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kinematics::{Pose, Quat, SkeletonTopology, Vec3};
use crate::motion_io::{write_bvh, BvhOptions, MotionSequence};
use crate::refdb::LabeledMotion;

pub const FIXTURE_FPS: f64 = 30.0;

const JOINTS: [(&str, Option<usize>, [f64; 3]); 15] = [
    ("Hips", None, [0.0, 1.0, 0.0]),
    ("Spine", Some(0), [0.0, 0.12, 0.0]),
    ("Chest", Some(1), [0.0, 0.2, 0.0]),
    ("Neck", Some(2), [0.0, 0.22, 0.0]),
    ("Head", Some(3), [0.0, 0.1, 0.0]),
    ("LeftShoulder", Some(2), [0.05, 0.18, 0.0]),
    ("LeftArm", Some(5), [0.14, 0.0, 0.0]),
    ("LeftForeArm", Some(6), [0.28, 0.0, 0.0]),
    ("LeftHand", Some(7), [0.25, 0.0, 0.0]),
    ("LeftFingers", Some(8), [0.08, 0.0, 0.0]),
    ("RightShoulder", Some(2), [-0.05, 0.18, 0.0]),
    ("RightArm", Some(10), [-0.14, 0.0, 0.0]),
    ("RightForeArm", Some(11), [-0.28, 0.0, 0.0]),
    ("RightHand", Some(12), [-0.25, 0.0, 0.0]),
    ("RightFingers", Some(13), [-0.08, 0.0, 0.0]),
];

/// Joints that sign: the arms and hands carry large motion, the trunk little.
fn is_articulating(j: usize) -> bool {
    j >= 5
}

pub fn upper_body_skeleton() -> SkeletonTopology {
    SkeletonTopology::new(
        JOINTS.iter().map(|j| j.0.to_string()).collect(),
        JOINTS.iter().map(|j| j.1).collect(),
        JOINTS.iter().map(|j| Vec3::from_array(j.2)).collect(),
    )
    .expect("fixture skeleton is a valid tree")
}

pub fn vocab_label(vocab: usize) -> String {
    format!("sign{vocab:02}")
}

/// Take `take` of vocabulary item `vocab`.
///
/// Each item has its own held posture and oscillation pattern; takes differ
/// slightly in length, amplitude and phase.
pub fn vocab_motion(vocab: usize, take: usize) -> MotionSequence {
    let topo = upper_body_skeleton();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5167_0000 + vocab as u64);
    let freq = rng.random_range(0.6..1.6);
    let params: Vec<[(f64, f64, f64); 3]> = (0..topo.len())
        .map(|j| {
            let (spread, amp) = if is_articulating(j) { (1.5, 0.6) } else { (0.15, 0.08) };
            [0, 1, 2].map(|_| (rng.random_range(-spread..spread), rng.random_range(0.2 * amp..amp), rng.random_range(0.0..TAU)))
        })
        .collect();

    let mut take_rng = ChaCha8Rng::seed_from_u64(0x7a4e_0000 + ((vocab as u64) << 8) + take as u64);
    let frames = 56 + 4 * (take % 4) + take_rng.random_range(0..4);
    let gain = if take == 0 { 1.0 } else { take_rng.random_range(0.93..1.07) };
    let shift = if take == 0 { 0.0 } else { take_rng.random_range(-0.15..0.15) };

    let poses = (0..frames)
        .map(|k| {
            let u = k as f64 / (frames - 1) as f64;
            let rotations = params
                .iter()
                .map(|axes| {
                    let angle = |(mean, amp, phase): (f64, f64, f64)| mean + gain * amp * (TAU * freq * u + phase + shift).sin();
                    let [x, y, z] = axes.map(angle);
                    Quat::from_axis_angle(Vec3::Z, z) * Quat::from_axis_angle(Vec3::X, x) * Quat::from_axis_angle(Vec3::Y, y)
                })
                .collect();
            let sway = Vec3::new(0.02 * (TAU * u).sin(), 0.0, 0.0);
            Pose::new(rotations, topo.offsets()[0] + sway)
        })
        .collect();
    MotionSequence::new(topo, poses, FIXTURE_FPS, Some(vocab_label(vocab))).expect("fixture motion is valid")
}

pub fn take_id(vocab: usize, take: usize) -> String {
    format!("{}__t{take}", vocab_label(vocab))
}

pub fn fixture_corpus(vocabs: usize, takes: usize) -> Vec<LabeledMotion> {
    (0..vocabs)
        .flat_map(|v| (0..takes).map(move |t| (v, t)))
        .map(|(v, t)| LabeledMotion { id: take_id(v, t), label: vocab_label(v), motion: vocab_motion(v, t) })
        .collect()
}

/// Writes the fixture corpus as `<label>__t<take>.bvh` files.
pub fn write_corpus(dir: &Path, vocabs: usize, takes: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let opts = BvhOptions::default();
    let mut paths = Vec::new();
    for m in fixture_corpus(vocabs, takes) {
        let path = dir.join(format!("{}.bvh", m.id));
        fs::write(&path, write_bvh(&m.motion, &opts))?;
        paths.push(path);
    }
    Ok(paths)
}
