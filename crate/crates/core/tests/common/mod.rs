//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siglang_core::kinematics::{Pose, Quat, SkeletonTopology, Vec3};
use siglang_core::MotionSequence;

pub type M3 = [[f64; 3]; 3];
pub type M4 = [[f64; 4]; 4];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rotation matrix of `angle` radians about unit `axis` (Rodrigues).
pub fn rodrigues(axis: [f64; 3], angle: f64) -> M3 {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|a| a / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ]
}

pub fn m3_mul(a: &M3, b: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn m3_apply(m: &M3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| (0..3).map(|k| m[i][k] * v[k]).sum())
}

pub fn homogeneous(r: &M3, t: [f64; 3]) -> M4 {
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&r[i]);
        m[i][3] = t[i];
    }
    m[3][3] = 1.0;
    m
}

pub fn m4_mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// A random rotation as both an axis-angle pair and its quaternion.
pub fn random_rotation(r: &mut impl Rng) -> ([f64; 3], f64, Quat) {
    let axis = loop {
        let a = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0f64)];
        let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            break a.map(|v| v / n);
        }
    };
    let angle = r.random_range(-3.1..3.1);
    (axis, angle, Quat::from_axis_angle(Vec3::from_array(axis), angle))
}

pub fn random_unit_quat(r: &mut impl Rng) -> Quat {
    random_rotation(r).2
}

/// Random tree in a shuffled order: `parents[i]` may exceed `i`.
pub fn random_tree(r: &mut impl Rng, n: usize) -> (Vec<String>, Vec<Option<usize>>, Vec<Vec3>) {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, r.random_range(0..=i));
    }
    // Build in topological order, then store at permuted slots.
    let mut names = vec![String::new(); n];
    let mut parents = vec![None; n];
    let mut offsets = vec![Vec3::ZERO; n];
    for k in 0..n {
        let slot = perm[k];
        names[slot] = format!("joint_{k}");
        parents[slot] = if k == 0 { None } else { Some(perm[r.random_range(0..k)]) };
        offsets[slot] = Vec3::new(r.random_range(-0.5..0.5), r.random_range(-0.5..0.5), r.random_range(-0.5..0.5));
    }
    (names, parents, offsets)
}

/// Global joint positions by chaining 4×4 transforms, in input order.
pub fn matrix_fk(parents: &[Option<usize>], offsets: &[Vec3], rotations: &[M3], root_t: Vec3) -> Vec<[f64; 3]> {
    let n = parents.len();
    let mut done: Vec<Option<M4>> = vec![None; n];
    fn solve(i: usize, parents: &[Option<usize>], offsets: &[Vec3], rot: &[M3], root_t: Vec3, done: &mut Vec<Option<M4>>) -> M4 {
        if let Some(m) = done[i] {
            return m;
        }
        let m = match parents[i] {
            None => homogeneous(&rot[i], root_t.to_array()),
            Some(p) => {
                let parent = solve(p, parents, offsets, rot, root_t, done);
                m4_mul(&parent, &homogeneous(&rot[i], offsets[i].to_array()))
            }
        };
        done[i] = Some(m);
        m
    }
    (0..n)
        .map(|i| {
            let m = solve(i, parents, offsets, rotations, root_t, &mut done);
            [m[0][3], m[1][3], m[2][3]]
        })
        .collect()
}

/// Minimum over every monotone path of the summed local costs.
pub fn brute_force_dtw(cost: &dyn Fn(usize, usize) -> f64, ls: usize, lt: usize) -> f64 {
    fn walk(i: usize, j: usize, acc: f64, ls: usize, lt: usize, cost: &dyn Fn(usize, usize) -> f64, best: &mut f64) {
        let acc = acc + cost(i, j);
        if i == ls - 1 && j == lt - 1 {
            *best = best.min(acc);
            return;
        }
        if i + 1 < ls {
            walk(i + 1, j, acc, ls, lt, cost, best);
        }
        if j + 1 < lt {
            walk(i, j + 1, acc, ls, lt, cost, best);
        }
        if i + 1 < ls && j + 1 < lt {
            walk(i + 1, j + 1, acc, ls, lt, cost, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(0, 0, 0.0, ls, lt, cost, &mut best);
    best
}

/// Single-joint motion from a rotation track.
pub fn one_joint(track: Vec<Quat>, fps: f64) -> MotionSequence {
    let topo = SkeletonTopology::new(vec!["j".into()], vec![None], vec![Vec3::ZERO]).unwrap();
    let frames = track.into_iter().map(|q| Pose::new(vec![q], Vec3::ZERO)).collect();
    MotionSequence::new(topo, frames, fps, None).unwrap()
}

pub fn chain(n: usize) -> SkeletonTopology {
    let names = (0..n).map(|i| format!("c{i}")).collect();
    let parents = (0..n).map(|i| i.checked_sub(1)).collect();
    SkeletonTopology::new(names, parents, vec![Vec3::new(0.0, 0.3, 0.0); n]).unwrap()
}

/// Half rotation angle between two unit quaternions, from the scalar part
/// of the relative rotation.
pub fn half_angle(a: Quat, b: Quat) -> f64 {
    let d = (a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z).abs().min(1.0);
    d.acos()
}
