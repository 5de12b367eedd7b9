//! Quaternion algebra and forward kinematics over a joint tree.
//!
//! Conventions used throughout the crate:
//!
//! * Quaternions are scalar-first `(w, x, y, z)` and compose with the Hamilton
//!   product. A local joint rotation is expressed in the parent frame, so the
//!   global rotation of joint `i` is `q_root * ... * q_parent * q_i`.
//! * The log map uses the half-angle convention: for
//!   `q = (cos(θ/2), sin(θ/2)·axis)` it returns `(θ/2)·axis`.
//! * Canonical form keeps `w ≥ 0`. For `w == 0` (a half turn) the axis is
//!   flipped so its first nonzero component is positive.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `sin(θ/2)` the log map uses its first-order series.
const SMALL_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    /// Linear interpolation, `t = 0` gives `self`.
    pub fn lerp(self, other: Vec3, t: f64) -> Vec3 {
        self + (other - self).scale(t)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A quaternion `w + xi + yj + zk`.
///
/// Most of the crate works with unit quaternions; [`Quat::normalize`] and
/// [`Quat::canonicalize`] restore the invariants after arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis`. The axis is normalized here.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Quat::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis.scale(s / n);
        Quat::new(c, a.x, a.y, a.z)
    }

    /// Rotation given as a full-angle rotation vector (`angle · axis`).
    pub fn from_rotation_vector(v: Vec3) -> Self {
        exp(v.scale(0.5))
    }

    #[inline]
    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn conj(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    #[inline]
    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalize(self) -> Quat {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Quat::IDENTITY;
        }
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Inverse of a unit quaternion.
    #[inline]
    pub fn inverse(self) -> Quat {
        let n2 = self.dot(self);
        let c = self.conj();
        Quat::new(c.w / n2, c.x / n2, c.y / n2, c.z / n2)
    }

    /// Representative of the double cover with `w ≥ 0`.
    pub fn canonicalize(self) -> Quat {
        if self.w > 0.0 {
            return self;
        }
        if self.w < 0.0 {
            return -self;
        }
        // Half turn: both signs have w == 0, pick the axis sign.
        let first = [self.x, self.y, self.z].into_iter().find(|c| *c != 0.0);
        match first {
            Some(c) if c < 0.0 => Quat::new(0.0, -self.x, -self.y, -self.z),
            _ => Quat::new(0.0, self.x, self.y, self.z),
        }
    }

    /// Rotates `v` by this unit quaternion, `q v q⁻¹`.
    #[inline]
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // Expanded form of q (0, v) q*; avoids two full products.
        let u = self.vector();
        let t = u.cross(v).scale(2.0);
        v + t.scale(self.w) + u.cross(t)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }

    /// Row-major 3×3 rotation matrix of a unit quaternion.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quat { w, x, y, z } = self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Unit quaternion from a proper rotation matrix (Shepperd's method).
    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Quat {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat::new((m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat::new((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s)
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat::new((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s)
        };
        q.normalize().canonicalize()
    }
}

impl Mul for Quat {
    type Output = Quat;
    /// Hamilton product.
    #[inline]
    fn mul(self, b: Quat) -> Quat {
        let a = self;
        Quat::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl Neg for Quat {
    type Output = Quat;
    #[inline]
    fn neg(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

#[inline]
pub fn quat_mul(a: Quat, b: Quat) -> Quat {
    a * b
}

#[inline]
pub fn quat_rotate(q: Quat, v: Vec3) -> Vec3 {
    q.rotate(v)
}

#[inline]
pub fn quat_canonicalize(q: Quat) -> Quat {
    q.canonicalize()
}

/// Half-angle log map of a unit quaternion. The result has norm ≤ π/2.
///
/// The input is canonicalized first, so `log(q) == log(-q)`.
pub fn log(q: Quat) -> Vec3 {
    let q = q.canonicalize();
    let v = q.vector();
    let s = v.norm();
    if s < SMALL_ANGLE {
        return v;
    }
    let half = s.atan2(q.w);
    v.scale(half / s)
}

/// Inverse of [`log`]: maps `(θ/2)·axis` back to a unit quaternion.
pub fn exp(v: Vec3) -> Quat {
    let half = v.norm();
    if half < SMALL_ANGLE {
        return Quat::new(1.0, v.x, v.y, v.z).normalize();
    }
    let (s, c) = half.sin_cos();
    let a = v.scale(s / half);
    Quat::new(c, a.x, a.y, a.z)
}

/// Geodesic rotation angle (radians, in `[0, π]`) between two unit quaternions.
pub fn geodesic_angle(a: Quat, b: Quat) -> f64 {
    2.0 * log(a.conj() * b).norm()
}

/// Spherical linear interpolation along the shortest arc.
pub fn slerp(a: Quat, b: Quat, t: f64) -> Quat {
    let mut b = b;
    let mut dot = a.dot(b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    if dot > 1.0 - 1e-12 {
        let q = Quat::new(
            a.w + (b.w - a.w) * t,
            a.x + (b.x - a.x) * t,
            a.y + (b.y - a.y) * t,
            a.z + (b.z - a.z) * t,
        );
        return q.normalize();
    }
    let theta = dot.min(1.0).acos();
    let sin_theta = theta.sin();
    let wa = ((1.0 - t) * theta).sin() / sin_theta;
    let wb = (t * theta).sin() / sin_theta;
    Quat::new(
        wa * a.w + wb * b.w,
        wa * a.x + wb * b.x,
        wa * a.y + wb * b.y,
        wa * a.z + wb * b.z,
    )
    .normalize()
}

/// Joint tree with rest offsets.
///
/// Joints are stored so that every parent precedes its children, which lets
/// forward kinematics run as a single pass.
#[derive(Debug, Clone)]
pub struct SkeletonTopology {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
    /// `source_index[new] = old` for the order the caller supplied.
    source_index: Vec<usize>,
}

// The supplied ordering is provenance, not structure.
impl PartialEq for SkeletonTopology {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.parents == other.parents && self.offsets == other.offsets
    }
}

impl SkeletonTopology {
    /// Builds a topology, reindexing joints into parent-first order.
    ///
    /// Fails unless the parent links describe a single tree with unique joint
    /// names and finite offsets.
    pub fn new(names: Vec<String>, parents: Vec<Option<usize>>, offsets: Vec<Vec3>) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::InvalidTopology("skeleton has no joints".into()));
        }
        if parents.len() != n || offsets.len() != n {
            return Err(Error::InvalidTopology(format!(
                "{} names, {} parents, {} offsets",
                n,
                parents.len(),
                offsets.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(n);
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidTopology(format!("duplicate joint name {name:?}")));
            }
        }
        if let Some(bad) = offsets.iter().position(|o| !o.is_finite()) {
            return Err(Error::InvalidTopology(format!("joint {:?} has a non-finite offset", names[bad])));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTopology(format!("expected exactly one root, found {}", roots.len())));
        }
        let mut children = vec![Vec::new(); n];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n || p == i {
                    return Err(Error::InvalidTopology(format!("joint {:?} has invalid parent {p}", names[i])));
                }
                children[p].push(i);
            }
        }
        // Depth-first preorder from the root; children keep supplied order.
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![roots[0]];
        while let Some(j) = stack.pop() {
            order.push(j);
            for &c in children[j].iter().rev() {
                stack.push(c);
            }
        }
        if order.len() != n {
            return Err(Error::InvalidTopology("parent links contain a cycle".into()));
        }
        let mut new_of_old = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            new_of_old[old] = new;
        }
        let topo = SkeletonTopology {
            names: order.iter().map(|&o| names[o].clone()).collect(),
            parents: order.iter().map(|&o| parents[o].map(|p| new_of_old[p])).collect(),
            offsets: order.iter().map(|&o| offsets[o]).collect(),
            source_index: order,
        };
        Ok(topo)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    #[inline]
    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parents[i]
    }

    pub fn offsets(&self) -> &[Vec3] {
        &self.offsets
    }

    /// For each stored joint, its index in the order passed to [`SkeletonTopology::new`].
    pub fn source_index(&self) -> &[usize] {
        &self.source_index
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Same joint names and the same parent by name for each joint.
    pub fn same_structure(&self, other: &SkeletonTopology) -> bool {
        if self.len() != other.len() {
            return false;
        }
        self.names.iter().enumerate().all(|(i, name)| match other.index_of(name) {
            Some(j) => {
                let mine = self.parents[i].map(|p| self.names[p].as_str());
                let theirs = other.parents[j].map(|p| other.names[p].as_str());
                mine == theirs
            }
            None => false,
        })
    }

    /// The all-identity pose at the origin.
    /// All-identity rotations with the root at its rest offset.
    pub fn rest_pose(&self) -> Pose {
        Pose {
            rotations: vec![Quat::IDENTITY; self.len()],
            root_translation: self.offsets[0],
        }
    }
}

/// Local joint rotations for one frame plus the root translation.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    rotations: Vec<Quat>,
    root_translation: Vec3,
}

impl Pose {
    /// Normalizes and canonicalizes every rotation.
    pub fn new(rotations: Vec<Quat>, root_translation: Vec3) -> Self {
        let rotations = rotations
            .into_iter()
            .map(|q| {
                // Leave already-unit values bit-for-bit alone.
                let q = if (q.dot(q) - 1.0).abs() <= 4.0 * f64::EPSILON { q } else { q.normalize() };
                q.canonicalize()
            })
            .collect();
        Pose { rotations, root_translation }
    }

    /// Takes rotations that are already unit and canonical, unchanged.
    pub(crate) fn from_raw(rotations: Vec<Quat>, root_translation: Vec3) -> Self {
        Pose { rotations, root_translation }
    }

    pub fn rotations(&self) -> &[Quat] {
        &self.rotations
    }

    pub fn root_translation(&self) -> Vec3 {
        self.root_translation
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn check(&self, topo: &SkeletonTopology) -> Result<()> {
        if self.rotations.len() != topo.len() {
            return Err(Error::TopologyMismatch(format!(
                "pose has {} rotations, skeleton has {} joints",
                self.rotations.len(),
                topo.len()
            )));
        }
        Ok(())
    }
}

/// Global rotation of every joint, accumulated from the root.
pub fn global_rotations(topo: &SkeletonTopology, pose: &Pose) -> Result<Vec<Quat>> {
    pose.check(topo)?;
    let mut global: Vec<Quat> = Vec::with_capacity(topo.len());
    for (i, q) in pose.rotations.iter().enumerate() {
        let g = match topo.parent(i) {
            Some(p) => (global[p] * *q).normalize(),
            None => *q,
        };
        global.push(g);
    }
    Ok(global)
}

/// Global joint positions in meters.
///
/// The root sits at the pose's root translation; every other joint is its
/// parent's position plus the rest offset rotated by the parent's global
/// rotation.
pub fn forward_kinematics(topo: &SkeletonTopology, pose: &Pose) -> Result<Vec<Vec3>> {
    let global = global_rotations(topo, pose)?;
    let mut positions: Vec<Vec3> = Vec::with_capacity(topo.len());
    for i in 0..topo.len() {
        let p = match topo.parent(i) {
            Some(p) => positions[p] + global[p].rotate(topo.offsets[i]),
            None => pose.root_translation,
        };
        positions.push(p);
    }
    Ok(positions)
}
