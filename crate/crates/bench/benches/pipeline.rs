use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use siglang_core::assessment::{angular_velocity, ddtw, joint_weights};
use siglang_core::evalstats::graded_corpus;
use siglang_core::kinematics::forward_kinematics;
use siglang_core::refdb::build_from_motions;
use siglang_core::{assess, synthetic, AssessConfig, BuildConfig};

fn kinematics(c: &mut Criterion) {
    let m = synthetic::vocab_motion(0, 0);
    c.bench_function("fk/15 joints, one clip", |b| {
        b.iter(|| {
            for f in m.frames() {
                black_box(forward_kinematics(m.topology(), f).unwrap());
            }
        })
    });
}

fn alignment(c: &mut Criterion) {
    let t = synthetic::vocab_motion(2, 0);
    let s = &graded_corpus(&t, &[0.0, 0.1], 1, 1).unwrap()[1].motion;
    let (gs, gt) = (angular_velocity(s).unwrap(), angular_velocity(&t).unwrap());
    let w = joint_weights(&t).unwrap();
    c.bench_function("ddtw/unbanded", |b| b.iter(|| ddtw(black_box(&gs), black_box(&gt), &w, None).unwrap()));
    c.bench_function("ddtw/band 10", |b| b.iter(|| ddtw(black_box(&gs), black_box(&gt), &w, Some(10)).unwrap()));
}

fn pipeline(c: &mut Criterion) {
    let corpus = synthetic::fixture_corpus(15, 2);
    let cfg = BuildConfig::default();
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("build/15x2", |b| b.iter(|| build_from_motions(black_box(corpus.clone()), &cfg).unwrap()));
    let db = build_from_motions(corpus, &cfg).unwrap();
    let student = &graded_corpus(&synthetic::vocab_motion(5, 0), &[0.0, 0.1], 1, 4).unwrap()[1].motion;
    g.bench_function("assess", |b| b.iter(|| assess(black_box(student), "sign05", &db, &AssessConfig::default()).unwrap()));
    g.finish();
}

criterion_group!(benches, kinematics, alignment, pipeline);
criterion_main!(benches);
