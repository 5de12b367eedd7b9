use std::collections::BTreeMap;

use rayon::prelude::*;
use siglang_core::evalstats::{graded_corpus, rank, spearman};
use siglang_core::{assess, AssessConfig, MotionSequence, ReferenceDatabase, Result};

pub const DEFAULT_LEVELS: [f64; 5] = [0.0, 0.05, 0.1, 0.2, 0.4];
pub const DEFAULT_TAKES: usize = 3;

#[derive(Debug, Clone)]
pub struct Student {
    pub id: String,
    pub vocab: String,
    /// Ground-truth quality; higher is better.
    pub truth: f64,
    pub motion: MotionSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub id: String,
    pub vocab: String,
    pub composite: f64,
    /// Within the vocabulary set, 1 = best.
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetResult {
    pub vocab: String,
    pub size: usize,
    /// `Err` holds the reason the set was skipped.
    pub rho: std::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    /// Sorted by id.
    pub scored: Vec<Scored>,
    /// Sorted by vocabulary label.
    pub sets: Vec<SetResult>,
    /// Mean ρ over the sets that could be ranked.
    pub average: Option<f64>,
}

/// Graded students for every vocabulary item, generated from its first take.
/// Set `k` (in label order) uses seed `seed + k`.
pub fn synthetic_students(db: &ReferenceDatabase, seed: u64, levels: &[f64], takes: usize) -> Result<Vec<Student>> {
    let mut out = Vec::new();
    for (k, entry) in db.entries.iter().enumerate() {
        let teacher = &entry.takes[0].motion;
        for s in graded_corpus(teacher, levels, takes, seed.wrapping_add(k as u64))? {
            out.push(Student { id: s.id, vocab: entry.label.clone(), truth: -s.sigma, motion: s.motion });
        }
    }
    Ok(out)
}

/// Noise level parsed from a `<vocab>__s<level>_...` identifier, negated so
/// cleaner students score higher.
pub fn truth_from_id(id: &str) -> Option<f64> {
    let (_, rest) = id.split_once("__s")?;
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse::<f64>().ok().map(|l| -l)
}

/// Scores all students and correlates composite ranks with ground truth per
/// vocabulary set. Sets that cannot be ranked are skipped with a reason.
pub fn evaluate(db: &ReferenceDatabase, students: &[Student], cfg: &AssessConfig) -> Result<EvalOutcome> {
    let composites = students
        .par_iter()
        .map(|s| assess(&s.motion, &s.vocab, db, cfg).map(|r| r.composite))
        .collect::<Result<Vec<f64>>>()?;

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in students.iter().enumerate() {
        groups.entry(&s.vocab).or_default().push(i);
    }

    let mut scored = Vec::with_capacity(students.len());
    let mut sets = Vec::new();
    for (vocab, members) in groups {
        let c: Vec<f64> = members.iter().map(|&i| composites[i]).collect();
        let t: Vec<f64> = members.iter().map(|&i| students[i].truth).collect();
        let ranks = rank(&c)?;
        for (&i, &r) in members.iter().zip(&ranks.ranks) {
            scored.push(Scored { id: students[i].id.clone(), vocab: vocab.to_string(), composite: composites[i], rank: r });
        }
        let rho = spearman(&c, &t).map_err(|e| e.to_string());
        sets.push(SetResult { vocab: vocab.to_string(), size: members.len(), rho });
    }
    scored.sort_by(|a, b| a.id.cmp(&b.id));

    let valid: Vec<f64> = sets.iter().filter_map(|s| s.rho.as_ref().ok().copied()).collect();
    let average = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
    Ok(EvalOutcome { scored, sets, average })
}
