mod common;

use std::sync::OnceLock;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use siglang_core::assessment::{
    angular_velocity, class_distribution, composite_score, ddtw, joint_weights, local_cost, ClusterModel, GradientSequence,
};
use siglang_core::embedding::SegmentEmbedding;
use siglang_core::evalstats::graded_corpus;
use siglang_core::kinematics::{Pose, Quat, SkeletonTopology, Vec3};
use siglang_core::motion_io::{motion_from_json, motion_to_json, resample};
use siglang_core::refdb::build_from_motions;
use siglang_core::{assess, synthetic, AssessConfig, BuildConfig, Error, MotionSequence, ReferenceDatabase};

fn db() -> &'static ReferenceDatabase {
    static DB: OnceLock<ReferenceDatabase> = OnceLock::new();
    DB.get_or_init(|| build_from_motions(synthetic::fixture_corpus(15, 2), &BuildConfig::default()).unwrap())
}

fn random_gradients(r: &mut impl Rng, len: usize, joints: usize) -> GradientSequence {
    let intervals = (0..len)
        .map(|_| (0..joints).map(|_| Vec3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0))).collect())
        .collect();
    GradientSequence { intervals, fps: 30.0 }
}

fn check_dtw(s: &GradientSequence, t: &GradientSequence, w: &[f64]) -> Result<(), TestCaseError> {
    let r = ddtw(s, t, w, None).unwrap();
    let cost = |i: usize, j: usize| local_cost(&s.intervals[i], &t.intervals[j], w);
    let brute = brute_force_dtw(&cost, s.len(), t.len());
    prop_assert!((r.distance - brute).abs() <= 1e-9, "dp {} brute {}", r.distance, brute);

    prop_assert_eq!(r.path[0], (0, 0));
    prop_assert_eq!(*r.path.last().unwrap(), (s.len() - 1, t.len() - 1));
    for p in r.path.windows(2) {
        let step = (p[1].0 - p[0].0, p[1].1 - p[0].1);
        prop_assert!(matches!(step, (1, 0) | (0, 1) | (1, 1)));
    }
    let along: f64 = r.path.iter().map(|&(i, j)| cost(i, j)).sum();
    prop_assert!((along - r.distance).abs() <= 1e-9);
    prop_assert!(r.normalized_score > 0.0 && r.normalized_score <= 1.0);
    prop_assert!(r.per_joint_error.iter().all(|e| *e >= 0.0));

    let banded = ddtw(s, t, w, Some(s.len().max(t.len()))).unwrap();
    prop_assert_eq!(banded, r);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dtw_equals_exhaustive_enumeration(seed in any::<u64>()) {
        let mut r = rng(seed);
        let joints = r.random_range(1..=3);
        let (ls, lt) = (r.random_range(1..=8), r.random_range(1..=8));
        let s = random_gradients(&mut r, ls, joints);
        let t = random_gradients(&mut r, lt, joints);
        let raw: Vec<f64> = (0..joints).map(|_| r.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        check_dtw(&s, &t, &w)?;
        let zero = ddtw(&s, &s, &w, None).unwrap();
        prop_assert_eq!(zero.distance, 0.0);
        prop_assert!(zero.path.iter().all(|&(i, j)| i == j));
    }
}

#[test]
fn half_speed_student_against_enumeration() {
    let mut r = rng(3);
    let t = random_gradients(&mut r, 4, 2);
    let s = GradientSequence { intervals: t.intervals.iter().flat_map(|f| [f.clone(), f.clone()]).collect(), fps: 30.0 };
    check_dtw(&s, &t, &[0.5, 0.5]).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn softmax_is_a_distribution_peaked_at_the_nearest_centroid(seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = r.random_range(1..=10);
        let dim = r.random_range(1..=8);
        let scale = r.random_range(0.1..20.0);
        let mut point = || (0..dim).map(|_| r.random_range(-scale..scale)).collect::<Vec<f64>>();
        let centroids: Vec<Vec<f64>> = (0..k).map(|_| point()).collect();
        let e = point();
        let temperature = rng(seed ^ 1).random_range(0.05..5.0);
        let labels = (0..k).map(|i| format!("l{i}")).collect();
        let model = ClusterModel::new(centroids.clone(), labels, temperature).unwrap();
        let c = class_distribution(&SegmentEmbedding { vector: e.clone(), source_label: None }, &model).unwrap();

        prop_assert!((c.distribution.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(c.distribution.iter().all(|&p| p >= 0.0));
        prop_assert!((0.0..=1.0).contains(&c.confusion));
        let d: Vec<f64> = centroids.iter().map(|ct| ct.iter().zip(&e).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()).collect();
        let nearest = (0..k).fold(0, |b, i| if d[i] < d[b] { i } else { b });
        let argmax = (0..k).fold(0, |b, i| if c.distribution[i] > c.distribution[b] { i } else { b });
        prop_assert_eq!(&c.assigned_label, &format!("l{nearest}"));
        prop_assert!(c.distribution[argmax] == c.distribution[nearest]);
        if k == 1 {
            prop_assert_eq!(c.confusion, 0.0);
        }
        if k > 1 && d.iter().any(|&x| (x - d[0]).abs() > 1e-6) {
            prop_assert!(c.confusion < 1.0 - 1e-12);
        }
    }
}

/// Body angular velocity from a dense central difference of the
/// quaternion components: ω = 2·vec(q* · dq/dt).
fn velocity_oracle(q: &dyn Fn(f64) -> Quat, t: f64) -> Vec3 {
    let h = 1e-6;
    let (a, b) = (q(t - h), q(t + h));
    let dq = Quat::new((b.w - a.w) / (2.0 * h), (b.x - a.x) / (2.0 * h), (b.y - a.y) / (2.0 * h), (b.z - a.z) / (2.0 * h));
    (q(t).conj() * dq).vector().scale(2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn angular_velocity_matches_finite_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p: Vec<(f64, f64, f64)> = (0..3).map(|_| (r.random_range(-1.0..1.0), r.random_range(0.1..1.0), r.random_range(0.2..1.2))).collect();
        let fps = 30.0;
        let q = move |t: f64| {
            let ang: Vec<f64> = p.iter().map(|(m, a, f)| m + a * (std::f64::consts::TAU * f * t).sin()).collect();
            Quat::from_axis_angle(Vec3::Z, ang[0]) * Quat::from_axis_angle(Vec3::X, ang[1]) * Quat::from_axis_angle(Vec3::Y, ang[2])
        };
        let m = one_joint((0..60).map(|k| q(k as f64 / fps)).collect(), fps);
        let g = angular_velocity(&m).unwrap();
        for (k, w) in g.intervals.iter().enumerate() {
            let oracle = velocity_oracle(&q, (k as f64 + 0.5) / fps);
            prop_assert!((w[0] - oracle).norm() <= 0.02 * oracle.norm().max(0.05), "interval {k}: {:?} vs {:?}", w[0], oracle);
        }
    }
}

#[test]
fn weights_follow_the_moving_joint() {
    let n = 20;
    let topo = SkeletonTopology::new(
        (0..n).map(|i| format!("j{i}")).collect(),
        (0..n).map(|i| if i == 0 { None } else { Some(0) }).collect(),
        vec![Vec3::X; n],
    )
    .unwrap();
    // Joint 5 turns at 2 rad/s; the rest stay put.
    let frames = (0..31)
        .map(|k| {
            let mut rot = vec![Quat::IDENTITY; n];
            rot[5] = Quat::from_axis_angle(Vec3::Y, 2.0 * k as f64 / 30.0);
            Pose::new(rot, Vec3::X)
        })
        .collect();
    let m = MotionSequence::new(topo, frames, 30.0, None).unwrap();
    let w = joint_weights(&m).unwrap();
    assert!(w[5] >= 0.99, "{}", w[5]);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let faster = joint_weights(&resample(&m, 90.0).unwrap()).unwrap();
    for (a, b) in w.iter().zip(&faster) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn teacher_as_student_reproduces_its_own_scores() {
    let db = db();
    let cfg = AssessConfig::default();
    for entry in &db.entries {
        for take in &entry.takes {
            let r = assess(&take.motion, &entry.label, db, &cfg).unwrap();
            assert_eq!(r.confusion.assigned_label, entry.label);
            assert_eq!(r.alignment.distance, 0.0);
            assert_eq!(r.teacher_take, take.id);
            let expected = composite_score(&cfg.composite, take.self_confusion, take.self_smoothness, 1.0);
            assert!((r.composite - expected).abs() <= 1e-9);
        }
    }
}

#[test]
fn more_noise_scores_lower() {
    let db = db();
    let levels = [0.0, 0.05, 0.1, 0.15, 0.2, 0.4];
    for entry in db.entries.iter().take(5) {
        let students = graded_corpus(&entry.takes[0].motion, &levels, 1, 21).unwrap();
        let scores: Vec<f64> = students
            .iter()
            .map(|s| assess(&s.motion, &entry.label, db, &AssessConfig::default()).unwrap().composite)
            .collect();
        for pair in scores.windows(2) {
            assert!(pair[1] < pair[0], "{}: {scores:?}", entry.label);
        }
        assert!((0.0..=100.0).contains(&scores[0]));
    }
}

#[test]
fn unknown_vocab_and_foreign_skeleton() {
    let db = db();
    let m = synthetic::vocab_motion(0, 0);
    assert!(matches!(assess(&m, "nope", db, &AssessConfig::default()), Err(Error::UnknownVocab(_))));
    let topo = chain(3);
    let other = MotionSequence::new(topo.clone(), vec![topo.rest_pose(); 8], 30.0, None).unwrap();
    assert!(matches!(assess(&other, "sign00", db, &AssessConfig::default()), Err(Error::TopologyMismatch(_))));
}

fn negate_some(m: &MotionSequence, seed: u64) -> MotionSequence {
    let mut r = rng(seed);
    let mut v: serde_json::Value = serde_json::from_str(&motion_to_json(m)).unwrap();
    for frame in v["frames"].as_array_mut().unwrap() {
        for q in frame["quats"].as_array_mut().unwrap() {
            if r.random_bool(0.5) {
                for c in q.as_array_mut().unwrap() {
                    *c = serde_json::json!(-c.as_f64().unwrap());
                }
            }
        }
    }
    motion_from_json(&v.to_string()).unwrap()
}

#[test]
fn sign_flipped_quaternions_change_nothing() {
    let db = db();
    let student = &graded_corpus(&db.entries[2].takes[1].motion, &[0.0, 0.1], 1, 5).unwrap()[1].motion;
    let flipped = negate_some(student, 77);
    let cfg = AssessConfig::default();
    let a = assess(student, "sign02", db, &cfg).unwrap();
    let b = assess(&flipped, "sign02", db, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());

    let corpus = synthetic::fixture_corpus(3, 1);
    let mut flipped_corpus = corpus.clone();
    for (k, c) in flipped_corpus.iter_mut().enumerate() {
        c.motion = negate_some(&c.motion, k as u64);
    }
    let x = build_from_motions(corpus, &BuildConfig::default()).unwrap();
    let y = build_from_motions(flipped_corpus, &BuildConfig::default()).unwrap();
    assert_eq!(x.to_bytes(), y.to_bytes());
}

#[test]
fn report_json_layout() {
    let db = db();
    let r = assess(&synthetic::vocab_motion(4, 1), "sign04", db, &AssessConfig::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(v["version"], "siglang-report/1");
    assert_eq!(v["vocab"], "sign04");
    assert_eq!(v["confusion"]["distribution"].as_object().unwrap().len(), 15);
    assert_eq!(v["alignment"]["per_joint"].as_object().unwrap().len(), 15);
    assert_eq!(v["worst_joints"].as_array().unwrap().len(), 3);
    assert!(v["confusion"]["C"].is_number());
    for key in ["d_s", "S"] {
        assert!(v["smoothness"][key].is_number());
    }
    for key in ["D", "score", "path_len"] {
        assert!(v["alignment"][key].is_number());
    }
    let composite = v["composite"].as_f64().unwrap();
    assert_eq!(composite, format!("{:.8e}", r.composite).parse::<f64>().unwrap());
    let worst = &r.worst_joints[0];
    let top = r.alignment.per_joint_error.iter().copied().fold(0.0, f64::max);
    assert_eq!(r.alignment.per_joint_error[db.topology.index_of(worst).unwrap()], top);
}
