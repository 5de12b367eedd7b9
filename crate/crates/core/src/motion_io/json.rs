//! Versioned JSON mirror of a motion sequence, used for fixtures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{Pose, Quat, SkeletonTopology, Vec3};
use crate::motion_io::MotionSequence;

pub const MOTION_JSON_VERSION: &str = "siglang-motion/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionFile {
    version: String,
    topology: TopologyJson,
    fps: f64,
    frames: Vec<FrameJson>,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyJson {
    names: Vec<String>,
    /// `-1` marks the root.
    parents: Vec<i64>,
    offsets: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameJson {
    root_t: [f64; 3],
    quats: Vec<[f64; 4]>,
}

pub fn motion_to_json(motion: &MotionSequence) -> String {
    let topo = motion.topology();
    let file = MotionFile {
        version: MOTION_JSON_VERSION.to_string(),
        topology: TopologyJson {
            names: topo.names().to_vec(),
            parents: topo.parents().iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            offsets: topo.offsets().iter().map(|o| o.to_array()).collect(),
        },
        fps: motion.fps(),
        frames: motion
            .frames()
            .iter()
            .map(|f| FrameJson {
                root_t: f.root_translation().to_array(),
                quats: f.rotations().iter().map(|q| q.to_array()).collect(),
            })
            .collect(),
        label: motion.label().map(str::to_string),
    };
    serde_json::to_string_pretty(&file).expect("motion serializes")
}

pub fn motion_from_json(text: &str) -> Result<MotionSequence> {
    let file: MotionFile = serde_json::from_str(text)?;
    if file.version != MOTION_JSON_VERSION {
        return Err(Error::VersionMismatch { found: file.version, expected: MOTION_JSON_VERSION.into() });
    }
    let t = file.topology;
    let n = t.names.len();
    let parents = t
        .parents
        .iter()
        .map(|&p| match p {
            -1 => Ok(None),
            p if p >= 0 && (p as usize) < n => Ok(Some(p as usize)),
            p => Err(Error::InvalidTopology(format!("parent index {p} out of range"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let offsets = t.offsets.into_iter().map(Vec3::from_array).collect();
    let topology = SkeletonTopology::new(t.names, parents, offsets)?;
    let src = topology.source_index().to_vec();
    let frames = file
        .frames
        .into_iter()
        .map(|f| {
            if f.quats.len() != n {
                return Err(Error::TopologyMismatch(format!("frame has {} rotations for {n} joints", f.quats.len())));
            }
            let q: Vec<Quat> = src.iter().map(|&s| Quat::from_array(f.quats[s])).collect();
            if q.iter().any(|q| !q.is_finite() || q.norm() == 0.0) {
                return Err(Error::InvalidConfig("rotation must be a finite nonzero quaternion".into()));
            }
            Ok(Pose::new(q, Vec3::from_array(f.root_t)))
        })
        .collect::<Result<Vec<_>>>()?;
    MotionSequence::new(topology, frames, file.fps, file.label)
}
