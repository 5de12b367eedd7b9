//! Ranking and rank correlation for validation runs, and a seeded generator
//! of graded student attempts.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kinematics::{Pose, Quat, Vec3};
use crate::motion_io::MotionSequence;

/// Tie-averaged ranks, 1-based, highest score first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    pub ranks: Vec<f64>,
}

pub fn rank(scores: &[f64]) -> Result<RankVector> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::DegenerateInput("non-finite score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their mean.
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    Ok(RankVector { ranks })
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::DegenerateInput("all values are tied".into()));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ: the Pearson correlation of tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::DegenerateInput("need at least two items".into()));
    }
    pearson(&rank(a)?.ranks, &rank(b)?.ranks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradedStudent {
    /// `<label>__s<level>_t<take>`.
    pub id: String,
    pub level: usize,
    pub sigma: f64,
    pub take: usize,
    pub motion: MotionSequence,
}

/// Segments re-timed independently in each warped attempt.
pub const WARP_SEGMENTS: usize = 4;
/// Largest relative stretch or squeeze of a warp segment.
pub const MAX_WARP: f64 = 0.2;

/// Synthetic students at increasing noise levels.
///
/// Every level above zero re-times the teacher piecewise (each of
/// [`WARP_SEGMENTS`] segments stretched by up to ±[`MAX_WARP`]) and then
/// multiplies each joint rotation by `exp` of an isotropic Gaussian rotation
/// vector with per-axis deviation `σ`. The zero level is an exact copy.
pub fn graded_corpus(teacher: &MotionSequence, levels: &[f64], takes: usize, seed: u64) -> Result<Vec<GradedStudent>> {
    if levels.is_empty() || levels[0] != 0.0 {
        return Err(Error::InvalidConfig("noise levels must start at 0".into()));
    }
    if levels.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) || levels.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig("noise levels must be strictly increasing".into()));
    }
    if takes == 0 {
        return Err(Error::InvalidConfig("need at least one take per level".into()));
    }
    let label = teacher.label().unwrap_or("motion");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(levels.len() * takes);
    for (level, &sigma) in levels.iter().enumerate() {
        for take in 0..takes {
            let motion = if sigma == 0.0 { teacher.clone() } else { perturb(teacher, sigma, &mut rng)? };
            out.push(GradedStudent { id: format!("{label}__s{level}_t{take}"), level, sigma, take, motion });
        }
    }
    Ok(out)
}

fn perturb(teacher: &MotionSequence, sigma: f64, rng: &mut ChaCha8Rng) -> Result<MotionSequence> {
    let warped = time_warp(teacher, rng)?;
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let frames = warped
        .frames()
        .iter()
        .map(|f| {
            let rotations = f
                .rotations()
                .iter()
                .map(|&q| {
                    let r = Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
                    q * Quat::from_rotation_vector(r)
                })
                .collect();
            Pose::new(rotations, f.root_translation())
        })
        .collect();
    MotionSequence::new(warped.topology().clone(), frames, warped.fps(), warped.label().map(str::to_string))
}

/// Piecewise-linear re-timing at the original frame rate.
fn time_warp(m: &MotionSequence, rng: &mut ChaCha8Rng) -> Result<MotionSequence> {
    let src_last = (m.len() - 1) as f64;
    let factors: Vec<f64> = (0..WARP_SEGMENTS).map(|_| rng.random_range(1.0 - MAX_WARP..=1.0 + MAX_WARP)).collect();
    let seg = src_last / WARP_SEGMENTS as f64;
    // Knots in output time for each source segment boundary.
    let mut knots = vec![0.0];
    for f in &factors {
        knots.push(knots.last().copied().unwrap_or(0.0) + seg * f);
    }
    let out_last = knots[WARP_SEGMENTS];
    let count = out_last.round().max(1.0) as usize + 1;
    let scale = out_last / (count - 1) as f64;
    let frames = (0..count)
        .map(|k| {
            let t = k as f64 * scale;
            let s = knots.windows(2).position(|w| t <= w[1]).unwrap_or(WARP_SEGMENTS - 1);
            let local = ((t - knots[s]) / (knots[s + 1] - knots[s])).clamp(0.0, 1.0);
            m.sample((s as f64 + local) * seg)
        })
        .collect();
    MotionSequence::new(m.topology().clone(), frames, m.fps(), m.label().map(str::to_string))
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    id: String,
    score: f64,
}

/// Reads an `id,score` CSV with a header row.
pub fn read_ratings(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    if !(headers.iter().any(|h| h == "id") && headers.iter().any(|h| h == "score")) {
        return Err(Error::InvalidConfig(format!("{}: header must name columns id and score", path.display())));
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<RatingRow>() {
        let row = row?;
        out.push((row.id, row.score));
    }
    Ok(out)
}
