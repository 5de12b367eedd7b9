//! Biovision hierarchy (BVH) reader and writer.
//!
//! Rotation channels are in degrees and compose intrinsically in the order
//! the `CHANNELS` line declares them. Offsets and root positions are scaled
//! into meters. Position channels on joints other than the root are read and
//! ignored.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kinematics::{Pose, Quat, SkeletonTopology, Vec3};
use crate::motion_io::{Axis, MotionSequence};

/// Bounds recursion depth on hostile input.
const MAX_JOINTS: usize = 1024;

/// Meters per BVH unit for centimeter-authored files.
pub const DEFAULT_BVH_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhOptions {
    /// Meters per file unit.
    pub scale: f64,
}

impl Default for BvhOptions {
    fn default() -> Self {
        BvhOptions { scale: DEFAULT_BVH_SCALE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Channel {
    Position(Axis),
    Rotation(Axis),
}

impl Channel {
    fn parse(s: &str) -> Option<Channel> {
        let (axis, kind) = s.split_at_checked(1)?;
        let axis = match axis {
            "X" | "x" => Axis::X,
            "Y" | "y" => Axis::Y,
            "Z" | "z" => Axis::Z,
            _ => return None,
        };
        match kind.to_ascii_lowercase().as_str() {
            "position" => Some(Channel::Position(axis)),
            "rotation" => Some(Channel::Rotation(axis)),
            _ => None,
        }
    }
}

struct JointDecl {
    name: String,
    parent: Option<usize>,
    offset: Vec3,
    channels: Vec<Channel>,
}

struct Token<'a> {
    text: &'a str,
    line: usize,
}

struct Cursor<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Cursor<'a> {
    fn new(lines: &[(usize, &'a str)]) -> Self {
        let mut tokens = Vec::new();
        for &(line, text) in lines {
            for raw in text.split_whitespace() {
                // Braces are allowed to touch neighbouring tokens.
                let mut rest = raw;
                while !rest.is_empty() {
                    if let Some(i) = rest.find(['{', '}']) {
                        if i > 0 {
                            tokens.push(Token { text: &rest[..i], line });
                        }
                        tokens.push(Token { text: &rest[i..i + 1], line });
                        rest = &rest[i + 1..];
                    } else {
                        tokens.push(Token { text: rest, line });
                        break;
                    }
                }
            }
        }
        let last_line = lines.last().map(|l| l.0).unwrap_or(1);
        Cursor { tokens, pos: 0, last_line }
    }

    fn line(&self) -> usize {
        self.tokens.get(self.pos).map(|t| t.line).unwrap_or(self.last_line)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Syntax { line: self.line(), message: message.into() }
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(|t| t.text)
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.text)
            }
            None => Err(self.err(format!("unexpected end of hierarchy, expected {what}"))),
        }
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let line = self.line();
        let got = self.next(word)?;
        if got.eq_ignore_ascii_case(word) {
            Ok(())
        } else {
            Err(Error::Syntax { line, message: format!("expected {word:?}, found {got:?}") })
        }
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let line = self.line();
        let tok = self.next(what)?;
        parse_finite(tok).ok_or_else(|| Error::Syntax { line, message: format!("invalid {what} {tok:?}") })
    }

    /// Joint names run to the end of their line.
    fn name(&mut self) -> Result<String> {
        let line = self.line();
        let mut parts = Vec::new();
        while let Some(t) = self.tokens.get(self.pos) {
            if t.line != line || t.text == "{" {
                break;
            }
            parts.push(t.text);
            self.pos += 1;
        }
        if parts.is_empty() {
            return Err(Error::Syntax { line, message: "missing joint name".into() });
        }
        Ok(parts.join(" "))
    }
}

fn parse_finite(tok: &str) -> Option<f64> {
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_joint(cur: &mut Cursor<'_>, parent: Option<usize>, joints: &mut Vec<JointDecl>, scale: f64) -> Result<()> {
    if joints.len() >= MAX_JOINTS {
        return Err(cur.err(format!("more than {MAX_JOINTS} joints")));
    }
    let name = cur.name()?;
    cur.expect("{")?;
    cur.expect("OFFSET")?;
    let offset = Vec3::new(cur.number("offset")?, cur.number("offset")?, cur.number("offset")?).scale(scale);
    let mut channels = Vec::new();
    if cur.peek().is_some_and(|t| t.eq_ignore_ascii_case("CHANNELS")) {
        cur.pos += 1;
        let line = cur.line();
        let count = cur.next("channel count")?;
        let count: usize =
            count.parse().map_err(|_| Error::Syntax { line, message: format!("invalid channel count {count:?}") })?;
        if count > 6 {
            return Err(Error::Syntax { line, message: format!("{count} channels declared, at most 6 supported") });
        }
        for _ in 0..count {
            let line = cur.line();
            let tok = cur.next("channel name")?;
            let ch =
                Channel::parse(tok).ok_or_else(|| Error::Syntax { line, message: format!("unknown channel {tok:?}") })?;
            channels.push(ch);
        }
    }
    let index = joints.len();
    joints.push(JointDecl { name, parent, offset, channels });
    loop {
        let line = cur.line();
        match cur.next("'}'")? {
            "}" => return Ok(()),
            t if t.eq_ignore_ascii_case("JOINT") => parse_joint(cur, Some(index), joints, scale)?,
            t if t.eq_ignore_ascii_case("End") => {
                cur.expect("Site")?;
                cur.expect("{")?;
                cur.expect("OFFSET")?;
                for _ in 0..3 {
                    cur.number("offset")?;
                }
                cur.expect("}")?;
            }
            t => return Err(Error::Syntax { line, message: format!("unexpected token {t:?} in joint block") }),
        }
    }
}

pub fn parse_bvh(text: &str) -> Result<MotionSequence> {
    parse_bvh_with(text, &BvhOptions::default())
}

pub fn parse_bvh_with(text: &str, opts: &BvhOptions) -> Result<MotionSequence> {
    if !(opts.scale.is_finite() && opts.scale > 0.0) {
        return Err(Error::InvalidConfig(format!("scale must be positive, got {}", opts.scale)));
    }
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let motion_at = lines
        .iter()
        .position(|(_, l)| l.trim().eq_ignore_ascii_case("MOTION"))
        .ok_or_else(|| Error::Syntax { line: lines.len().max(1), message: "missing MOTION section".into() })?;

    let mut cur = Cursor::new(&lines[..motion_at]);
    cur.expect("HIERARCHY")?;
    cur.expect("ROOT")?;
    let mut joints = Vec::new();
    parse_joint(&mut cur, None, &mut joints, opts.scale)?;
    if let Some(t) = cur.peek() {
        return Err(cur.err(format!("unexpected token {t:?} after root joint")));
    }

    let mut body = lines[motion_at + 1..].iter().filter(|(_, l)| !l.trim().is_empty());
    let frame_count = header_value(body.next(), "Frames:", lines.len())?;
    let frame_count: usize = frame_count
        .1
        .parse()
        .map_err(|_| Error::Syntax { line: frame_count.0, message: format!("invalid frame count {:?}", frame_count.1) })?;
    let frame_time = header_value(body.next(), "Frame Time:", lines.len())?;
    let dt = parse_finite(frame_time.1)
        .filter(|v| *v > 0.0)
        .ok_or_else(|| Error::Syntax { line: frame_time.0, message: format!("invalid frame time {:?}", frame_time.1) })?;
    if frame_count == 0 {
        return Err(Error::EmptyMotion);
    }

    let width: usize = joints.iter().map(|j| j.channels.len()).sum();
    let mut frames = Vec::with_capacity(frame_count);
    let root_offset = joints[0].offset;
    for (line, row) in body {
        if frames.len() == frame_count {
            return Err(Error::Syntax { line: *line, message: format!("more than the declared {frame_count} frames") });
        }
        let values: Vec<&str> = row.split_whitespace().collect();
        if values.len() != width {
            return Err(Error::ChannelMismatch { line: *line, expected: width, found: values.len() });
        }
        let mut it = values.iter();
        let mut rotations = Vec::with_capacity(joints.len());
        let mut root_t = root_offset;
        for (j, joint) in joints.iter().enumerate() {
            let mut q = Quat::IDENTITY;
            for ch in &joint.channels {
                let tok = it.next().unwrap();
                let v = parse_finite(tok)
                    .ok_or_else(|| Error::Syntax { line: *line, message: format!("invalid channel value {tok:?}") })?;
                match *ch {
                    Channel::Rotation(axis) => q = q * Quat::from_axis_angle(axis.unit(), v.to_radians()),
                    Channel::Position(axis) if j == 0 => match axis {
                        Axis::X => root_t.x += v * opts.scale,
                        Axis::Y => root_t.y += v * opts.scale,
                        Axis::Z => root_t.z += v * opts.scale,
                    },
                    Channel::Position(_) => {}
                }
            }
            rotations.push(q);
        }
        frames.push(Pose::new(rotations, root_t));
    }
    if frames.len() != frame_count {
        return Err(Error::Syntax {
            line: lines.len(),
            message: format!("declared {frame_count} frames, found {}", frames.len()),
        });
    }

    let names = joints.iter().map(|j| j.name.clone()).collect();
    let parents = joints.iter().map(|j| j.parent).collect();
    let offsets = joints.iter().map(|j| j.offset).collect();
    let topology = SkeletonTopology::new(names, parents, offsets).map_err(|e| Error::Syntax {
        line: 1,
        message: e.to_string(),
    })?;
    // Joints are declared depth-first, so the constructor keeps their order.
    debug_assert!(topology.source_index().iter().enumerate().all(|(i, &s)| i == s));
    MotionSequence::new(topology, frames, 1.0 / dt, None)
}

fn header_value<'a>(line: Option<&(usize, &'a str)>, key: &str, eof: usize) -> Result<(usize, &'a str)> {
    let &(n, text) = line.ok_or_else(|| Error::Syntax { line: eof, message: format!("missing {key:?}") })?;
    let trimmed = text.trim();
    let matches = trimmed.len() >= key.len() && trimmed[..key.len()].eq_ignore_ascii_case(key);
    if !matches {
        return Err(Error::Syntax { line: n, message: format!("expected {key:?}") });
    }
    Ok((n, trimmed[key.len()..].trim()))
}

/// Decomposes a unit quaternion into intrinsic Z, X, Y angles in degrees.
pub fn quat_to_euler_zxy(q: Quat) -> Vec3 {
    // R = Rz(a) · Rx(b) · Ry(c)
    let m = q.to_matrix();
    let cb = (m[0][1] * m[0][1] + m[1][1] * m[1][1]).sqrt();
    let b = m[2][1].atan2(cb);
    let (a, c) = if cb > 1e-12 {
        ((-m[0][1]).atan2(m[1][1]), (-m[2][0]).atan2(m[2][2]))
    } else {
        (m[1][0].atan2(m[0][0]), 0.0)
    };
    Vec3::new(a.to_degrees(), b.to_degrees(), c.to_degrees())
}

fn num(v: f64) -> String {
    // `+ 0.0` folds negative zero so identity rows print as plain zeros.
    format!("{}", v + 0.0)
}

/// Writes BVH text with `Zrotation Xrotation Yrotation` channels.
///
/// The root also carries three position channels. Leaf joints get a
/// zero-length end site.
pub fn write_bvh(motion: &MotionSequence, opts: &BvhOptions) -> String {
    let topo = motion.topology();
    let n = topo.len();
    let mut children = vec![Vec::new(); n];
    for i in 0..n {
        if let Some(p) = topo.parent(i) {
            children[p].push(i);
        }
    }
    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, topo, &children, 0, 0, opts.scale);
    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", motion.len());
    let _ = writeln!(out, "Frame Time: {}", num(1.0 / motion.fps()));
    let root_offset = topo.offsets()[0];
    for frame in motion.frames() {
        let t = (frame.root_translation() - root_offset).scale(1.0 / opts.scale);
        let mut row: Vec<String> = vec![num(t.x), num(t.y), num(t.z)];
        for &q in frame.rotations() {
            let e = quat_to_euler_zxy(q);
            row.extend([num(e.x), num(e.y), num(e.z)]);
        }
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn write_joint(out: &mut String, topo: &SkeletonTopology, children: &[Vec<usize>], j: usize, depth: usize, scale: f64) {
    let pad = "  ".repeat(depth);
    let kw = if j == 0 { "ROOT" } else { "JOINT" };
    let o = topo.offsets()[j].scale(1.0 / scale);
    let _ = writeln!(out, "{pad}{kw} {}", topo.names()[j]);
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(out, "{pad}  OFFSET {} {} {}", num(o.x), num(o.y), num(o.z));
    if j == 0 {
        let _ = writeln!(out, "{pad}  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation");
    } else {
        let _ = writeln!(out, "{pad}  CHANNELS 3 Zrotation Xrotation Yrotation");
    }
    for &c in &children[j] {
        write_joint(out, topo, children, c, depth + 1, scale);
    }
    if children[j].is_empty() {
        let _ = writeln!(out, "{pad}  End Site");
        let _ = writeln!(out, "{pad}  {{");
        let _ = writeln!(out, "{pad}    OFFSET 0 0 0");
        let _ = writeln!(out, "{pad}  }}");
    }
    let _ = writeln!(out, "{pad}}}");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{forward_kinematics, geodesic_angle};
    use crate::motion_io::{euler_to_quat, EulerOrder};

    const ONE_JOINT: &str = "HIERARCHY
ROOT Hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  End Site
  {
    OFFSET 0 10 0
  }
}
MOTION
Frames: 1
Frame Time: 0.0333333
0 0 0 0 0 0
";

    const TWO_JOINT: &str = "HIERARCHY
ROOT Hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Arm
  {
    OFFSET 50 0 0
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 50 0 0
    }
  }
}
MOTION
Frames: 2
Frame Time: 0.5
0 0 0 0 0 0 0 0 0
0 0 0 90 0 0 0 0 0
";

    #[test]
    fn minimal_file_is_identity_at_origin() {
        let m = parse_bvh(ONE_JOINT).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.joint_count(), 1);
        assert_eq!(m.frames()[0].rotations()[0], Quat::IDENTITY);
        assert_eq!(m.frames()[0].root_translation(), Vec3::ZERO);
        assert!((m.fps() - 1.0 / 0.0333333).abs() < 1e-9);
    }

    #[test]
    fn root_z_rotation_swings_child() {
        let m = parse_bvh(TWO_JOINT).unwrap();
        assert_eq!(m.topology().names(), &["Hips", "Arm"]);
        assert!((m.topology().offsets()[1] - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
        let pos = forward_kinematics(m.topology(), &m.frames()[1]).unwrap();
        assert!((pos[1] - Vec3::new(0.0, 0.5, 0.0)).norm() < 1e-12);
        assert_eq!(m.fps(), 2.0);
    }

    #[test]
    fn channel_mismatch_reports_line() {
        let bad = TWO_JOINT.replace("0 0 0 90 0 0 0 0 0", "0 0 0 90 0 0 0 0");
        match parse_bvh(&bad) {
            Err(Error::ChannelMismatch { line, expected: 9, found: 8 }) => assert_eq!(line, 20),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_frames_is_empty_motion() {
        let text = ONE_JOINT.replace("Frames: 1", "Frames: 0").replace("0 0 0 0 0 0\n", "");
        assert!(matches!(parse_bvh(&text), Err(Error::EmptyMotion)));
    }

    #[test]
    fn syntax_errors_carry_line() {
        let text = TWO_JOINT.replace("OFFSET 50 0 0\n    CHANNELS", "OFFSET 50 zero 0\n    CHANNELS");
        match parse_bvh(&text) {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 8),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_bvh("HIERARCHY\nROOT a\n{"), Err(Error::Syntax { .. })));
        let short = TWO_JOINT.replace("Frames: 2", "Frames: 3");
        assert!(matches!(parse_bvh(&short), Err(Error::Syntax { .. })));
    }

    #[test]
    fn identity_motion_writes_zero_rows() {
        let m = parse_bvh(ONE_JOINT).unwrap();
        let text = write_bvh(&m, &BvhOptions::default());
        assert!(text.contains("Frames: 1\n"));
        assert!(text.lines().last().unwrap().split_whitespace().all(|t| t == "0"));
    }

    #[test]
    fn euler_zxy_inverts_euler_to_quat() {
        for angles in [
            Vec3::new(10.0, -20.0, 30.0),
            Vec3::new(170.0, 89.999, -45.0),
            Vec3::new(-120.0, -60.0, 175.0),
            Vec3::new(30.0, 90.0, 0.0),
        ] {
            let q = euler_to_quat(angles, EulerOrder::ZXY);
            let back = euler_to_quat(quat_to_euler_zxy(q), EulerOrder::ZXY);
            assert!(geodesic_angle(q, back) < 1e-9, "{angles:?}");
        }
    }

    #[test]
    fn attached_braces_and_spaced_names() {
        let text = "HIERARCHY\nROOT Hips{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\nJOINT Left Hand\n{ OFFSET 1 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation }\n}\nMOTION\nFrames: 1\nFrame Time: 0.1\n0 0 0 0 0 0\n";
        let m = parse_bvh(text).unwrap();
        assert_eq!(m.topology().names(), &["Hips", "Left Hand"]);
    }
}
