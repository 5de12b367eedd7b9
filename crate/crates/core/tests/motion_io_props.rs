mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use siglang_core::kinematics::{geodesic_angle, Pose, Quat, SkeletonTopology, Vec3};
use siglang_core::motion_io::{
    euler_to_quat, motion_from_json, motion_to_json, parse_bvh, resample, write_bvh, BvhOptions, EulerOrder,
};
use siglang_core::{synthetic, MotionSequence};

fn random_motion(seed: u64, max_joints: usize, max_frames: usize) -> MotionSequence {
    let mut r = rng(seed);
    let n = r.random_range(1..=max_joints);
    let (names, parents, offsets) = random_tree(&mut r, n);
    let topo = SkeletonTopology::new(names, parents, offsets).unwrap();
    let frames = (0..r.random_range(1..=max_frames))
        .map(|_| {
            let rot = (0..n).map(|_| random_unit_quat(&mut r)).collect();
            Pose::new(rot, Vec3::new(r.random_range(-1.0..1.0), r.random_range(0.0..2.0), r.random_range(-1.0..1.0)))
        })
        .collect();
    MotionSequence::new(topo, frames, r.random_range(10.0..120.0), None).unwrap()
}

fn max_rotation_error(a: &MotionSequence, b: &MotionSequence) -> f64 {
    a.frames()
        .iter()
        .zip(b.frames())
        .flat_map(|(fa, fb)| fa.rotations().iter().zip(fb.rotations()).map(|(&x, &y)| geodesic_angle(x, y)))
        .fold(0.0, f64::max)
}

#[test]
fn two_joint_file_places_the_tip() {
    let text = "HIERARCHY\nROOT base\n{\n  OFFSET 0 0 0\n  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n  JOINT arm\n  {\n    OFFSET 50 0 0\n    CHANNELS 3 Zrotation Xrotation Yrotation\n    End Site\n    {\n      OFFSET 25 0 0\n    }\n  }\n}\nMOTION\nFrames: 1\nFrame Time: 0.0333333\n0 0 0 90 0 0 0 0 0\n";
    let m = parse_bvh(text).unwrap();
    let pos = siglang_core::kinematics::forward_kinematics(m.topology(), &m.frames()[0]).unwrap();
    assert!((pos[1] - Vec3::new(0.0, 0.5, 0.0)).norm() < 1e-12);
    assert!((m.fps() - 1.0 / 0.0333333).abs() < 1e-9);
}

#[test]
fn single_frame_and_identity_writes() {
    let topo = chain(3);
    let m = MotionSequence::new(topo.clone(), vec![topo.rest_pose()], 30.0, None).unwrap();
    let text = write_bvh(&m, &BvhOptions::default());
    assert!(text.contains("Frames: 1\n"));
    let row = text.lines().last().unwrap();
    assert!(row.split_whitespace().all(|v| v.parse::<f64>().unwrap() == 0.0), "{row}");
}

#[test]
fn fixture_corpus_survives_bvh_and_json() {
    let opts = BvhOptions::default();
    for v in 0..3 {
        let m = synthetic::vocab_motion(v, 1);
        let once = parse_bvh(&write_bvh(&m, &opts)).unwrap();
        assert!(max_rotation_error(&m, &once) <= 1e-6);
        let twice = parse_bvh(&write_bvh(&once, &opts)).unwrap();
        assert_eq!(twice.topology(), once.topology());
        let json = motion_from_json(&motion_to_json(&m)).unwrap();
        assert_eq!(json, m);
    }
}

#[test]
fn resampled_pose_midpoint() {
    let m = one_joint(vec![Quat::IDENTITY, Quat::from_axis_angle(Vec3::Z, std::f64::consts::FRAC_PI_2)], 1.0);
    let r = resample(&m, 2.0).unwrap();
    assert_eq!(r.len(), 3);
    assert!(geodesic_angle(r.frames()[1].rotations()[0], Quat::from_axis_angle(Vec3::Z, std::f64::consts::FRAC_PI_4)) < 1e-12);
}

const VALID: &str = "HIERARCHY\nROOT Hips\n{\n OFFSET 0 90 0\n CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n JOINT Spine\n {\n  OFFSET 0 10 0\n  CHANNELS 3 Zrotation Xrotation Yrotation\n  JOINT Head\n  {\n   OFFSET 0 20 0\n   CHANNELS 3 Xrotation Yrotation Zrotation\n   End Site\n   {\n    OFFSET 0 5 0\n   }\n  }\n }\n}\nMOTION\nFrames: 2\nFrame Time: 0.04\n0 90 0 10 20 30 1 2 3 4 5 6\n1 91 1 11 21 31 2 3 4 5 6 7\n";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn euler_matches_matrix_composition(a in -180.0..180.0f64, b in -180.0..180.0f64, c in -180.0..180.0f64, which in 0usize..6) {
        let order = EulerOrder::all()[which];
        let q = euler_to_quat(Vec3::new(a, b, c), order);
        let mut m = rodrigues([1.0, 0.0, 0.0], 0.0);
        for (axis, deg) in order.axes().iter().zip([a, b, c]) {
            m = m3_mul(&m, &rodrigues(axis.unit().to_array(), deg.to_radians()));
        }
        for v in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, -0.4, 0.87]] {
            let expected = m3_apply(&m, v);
            let got = q.rotate(Vec3::from_array(v)).to_array();
            for k in 0..3 {
                prop_assert!((got[k] - expected[k]).abs() <= 1e-9);
            }
        }
        prop_assert!(q.w >= 0.0);
    }

    #[test]
    fn bvh_round_trip(seed in any::<u64>()) {
        let m = random_motion(seed, 12, 6);
        let opts = BvhOptions::default();
        let back = parse_bvh(&write_bvh(&m, &opts)).unwrap();
        prop_assert_eq!(back.topology().names(), m.topology().names());
        prop_assert_eq!(back.topology().parents(), m.topology().parents());
        for (a, b) in back.topology().offsets().iter().zip(m.topology().offsets()) {
            prop_assert!((*a - *b).norm() <= 1e-12);
        }
        prop_assert!(max_rotation_error(&m, &back) <= 1e-6);
        prop_assert!((back.fps() - m.fps()).abs() <= 1e-9 * m.fps());
        for (fa, fb) in back.frames().iter().zip(m.frames()) {
            prop_assert!((fa.root_translation() - fb.root_translation()).norm() <= 1e-12);
        }
    }

    #[test]
    fn resampling_keeps_endpoints_and_duration(seed in any::<u64>(), target in 5.0..200.0f64) {
        let m = random_motion(seed, 4, 12);
        let r = resample(&m, target).unwrap();
        prop_assert_eq!(r.fps(), target);
        prop_assert!((r.duration() - m.duration()).abs() <= 1.0 / target + 1e-12);
        let (first, last) = (&r.frames()[0], &r.frames()[r.len() - 1]);
        prop_assert!(max_pose_err(first, &m.frames()[0]) <= 1e-9);
        prop_assert!(max_pose_err(last, &m.frames()[m.len() - 1]) <= 1e-9);
    }

    #[test]
    fn parser_never_panics_on_damaged_input(cut in 0usize..VALID.len(), edits in proptest::collection::vec((0usize..VALID.len(), 0usize..12), 0..6)) {
        let alphabet = ['{', '}', '\n', ' ', '-', '9', '.', 'x', 'J', 'E', '0', 'e'];
        let mut chars: Vec<char> = VALID.chars().collect();
        for (pos, c) in edits {
            chars[pos] = alphabet[c];
        }
        let damaged: String = chars[..cut.max(1)].iter().collect();
        let _ = parse_bvh(&damaged);
        let full: String = chars.iter().collect();
        let _ = parse_bvh(&full);
    }
}

fn max_pose_err(a: &Pose, b: &Pose) -> f64 {
    let rot = a
        .rotations()
        .iter()
        .zip(b.rotations())
        .map(|(&x, &y)| geodesic_angle(x, y))
        .fold(0.0, f64::max);
    rot.max((a.root_translation() - b.root_translation()).norm())
}

#[test]
fn valid_fixture_parses() {
    let m = parse_bvh(VALID).unwrap();
    assert_eq!(m.len(), 2);
    assert_eq!(m.topology().names(), ["Hips", "Spine", "Head"]);
    // Root offset plus scaled position channels.
    assert!((m.frames()[1].root_translation() - Vec3::new(0.01, 1.81, 0.01)).norm() < 1e-12);
}
