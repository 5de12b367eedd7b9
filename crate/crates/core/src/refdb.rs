//! Teacher reference database: building from a labeled corpus, and a
//! checksummed binary container for persistence.
//!
//! Layout of a database file:
//!
//! ```text
//! u64 LE   header length H
//! H bytes  JSON header (version, fps, joints, n, labels, section table)
//! per section: u64 LE value count, then that many f64 LE values
//! u32 LE   CRC32 of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assessment::{class_distribution, joint_weights_from_gradients, profile, ClusterModel, GradientSequence};
use crate::embedding::{project, EmbeddingWeights, ProjectionBasis, DEFAULT_DESCRIPTOR_FRAMES, MAX_EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::kinematics::{Pose, Quat, SkeletonTopology, Vec3};
use crate::motion_io::{resample, BvhOptions, MotionSequence};
use crate::smoothing::{smooth_sequence, SmoothingConfig};

pub const DB_VERSION: &str = "siglang-db/1";
pub const DEFAULT_FPS: f64 = 30.0;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub fps: f64,
    pub max_dim: usize,
    pub descriptor_frames: usize,
    pub smoothing: SmoothingConfig,
    /// Identity weights when absent.
    pub weights: Option<EmbeddingWeights>,
    pub temperature: f64,
    pub bvh: BvhOptions,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            fps: DEFAULT_FPS,
            max_dim: MAX_EMBEDDING_DIM,
            descriptor_frames: DEFAULT_DESCRIPTOR_FRAMES,
            smoothing: SmoothingConfig::default(),
            weights: None,
            temperature: 1.0,
            bvh: BvhOptions::default(),
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidConfig(format!("fps must be positive, got {}", self.fps)));
        }
        if self.max_dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be at least 1".into()));
        }
        if self.descriptor_frames == 0 {
            return Err(Error::InvalidConfig("descriptor frame count must be at least 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!("temperature must be positive, got {}", self.temperature)));
        }
        self.smoothing.validate()
    }
}

/// A labeled teacher recording before it enters the database.
#[derive(Debug, Clone)]
pub struct LabeledMotion {
    pub id: String,
    pub label: String,
    pub motion: MotionSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTake {
    pub id: String,
    /// Resampled and smoothed teacher motion.
    pub motion: MotionSequence,
    pub gradients: GradientSequence,
    pub joint_weights: Vec<f64>,
    pub embedding: Vec<f64>,
    pub self_confusion: f64,
    pub self_smoothness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabEntry {
    pub label: String,
    pub takes: Vec<TeacherTake>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDatabase {
    pub fps: f64,
    pub topology: SkeletonTopology,
    pub descriptor_frames: usize,
    pub smoothing: SmoothingConfig,
    pub weights: EmbeddingWeights,
    pub basis: ProjectionBasis,
    pub cluster_model: ClusterModel,
    /// Sorted by label; parallel to `cluster_model.labels`.
    pub entries: Vec<VocabEntry>,
}

/// Splits `<vocab>__<take>` into its label. Stems without a separator are
/// their own label.
pub fn label_from_stem(stem: &str) -> &str {
    stem.split_once("__").map_or(stem, |(label, _)| label)
}

fn is_motion_file(path: &Path) -> bool {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("bvh") => true,
        Some("json") => path.file_name().is_some_and(|n| n != MANIFEST_FILE),
        _ => false,
    }
}

/// Motion files of a corpus directory, sorted by file name.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::from(e).in_file(dir))? {
        let path = entry?.path();
        if path.is_file() && is_motion_file(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every labeled motion in `dir`.
///
/// Labels come from `<vocab>__<take>` file names unless `manifest.json`
/// (an object mapping file name to label) says otherwise.
pub fn read_corpus(dir: &Path, opts: &BvhOptions) -> Result<Vec<LabeledMotion>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: BTreeMap<String, String> = if manifest_path.is_file() {
        let text = fs::read_to_string(&manifest_path)?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(&manifest_path))?
    } else {
        BTreeMap::new()
    };
    let files = corpus_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    files
        .par_iter()
        .map(|path| {
            let motion = MotionSequence::read_file(path, opts).map_err(|e| e.in_file(path))?;
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let label = manifest.get(name).cloned().unwrap_or_else(|| label_from_stem(&stem).to_string());
            Ok(LabeledMotion { id: stem, label, motion })
        })
        .collect()
}

pub fn build(corpus_dir: &Path, cfg: &BuildConfig) -> Result<ReferenceDatabase> {
    cfg.validate()?;
    let corpus = read_corpus(corpus_dir, &cfg.bvh)?;
    let files = corpus_files(corpus_dir)?;
    build_from_motions(corpus, cfg).map_err(|e| match e {
        // Point at the offending file when one take is to blame.
        Error::Corpus { path, source } => {
            let full = files.iter().find(|f| f.file_stem().is_some_and(|s| s == path.as_os_str())).cloned();
            Error::Corpus { path: full.unwrap_or(path), source }
        }
        other => other,
    })
}

struct Prepared {
    id: String,
    label: String,
    motion: MotionSequence,
    descriptor: Vec<f64>,
    gradients: GradientSequence,
    self_smoothness: f64,
}

/// Builds a database from in-memory teacher recordings.
///
/// The first recording (after sorting by label, then id) fixes the skeleton;
/// the rest are matched to it by joint name.
pub fn build_from_motions(mut corpus: Vec<LabeledMotion>, cfg: &BuildConfig) -> Result<ReferenceDatabase> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus.sort_by(|a, b| (&a.label, &a.id).cmp(&(&b.label, &b.id)));
    let topology = corpus[0].motion.topology().clone();
    let weights = cfg.weights.clone().unwrap_or_else(|| EmbeddingWeights::identity(topology.len()));
    weights.validate(topology.len())?;

    let mut db = ReferenceDatabase {
        fps: cfg.fps,
        topology,
        descriptor_frames: cfg.descriptor_frames,
        smoothing: cfg.smoothing,
        weights,
        basis: ProjectionBasis { center: vec![0.0], columns: vec![vec![1.0]] },
        cluster_model: ClusterModel { centroids: vec![vec![0.0]], labels: vec![String::new()], temperature: cfg.temperature },
        entries: Vec::new(),
    };

    let prepared = corpus
        .into_par_iter()
        .map(|take| {
            let inner = || -> Result<Prepared> {
                let motion = take.motion.conform_to(&db.topology)?;
                let motion = resample(&motion, db.fps)?;
                let stored = smooth_sequence(&motion, &db.smoothing)?.with_label(Some(take.label.clone()));
                let prof = profile(&stored, &db, &db.weights)?;
                Ok(Prepared {
                    id: take.id.clone(),
                    label: take.label.clone(),
                    motion: stored,
                    descriptor: prof.descriptor,
                    gradients: prof.gradients,
                    self_smoothness: prof.smoothness.score,
                })
            };
            inner().map_err(|e| e.in_file(&take.id))
        })
        .collect::<Result<Vec<_>>>()?;

    let descriptors: Vec<Vec<f64>> = prepared.iter().map(|p| p.descriptor.clone()).collect();
    db.basis = ProjectionBasis::fit(&descriptors, cfg.max_dim)?;
    let embeddings = descriptors.iter().map(|d| db.basis.project(d)).collect::<Result<Vec<_>>>()?;

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in prepared.iter().enumerate() {
        groups.entry(p.label.as_str()).or_default().push(i);
    }
    let n = db.basis.dim();
    let mut centroids = Vec::with_capacity(groups.len());
    for members in groups.values() {
        let mut c = vec![0.0; n];
        for &i in members {
            for (acc, v) in c.iter_mut().zip(&embeddings[i]) {
                *acc += v;
            }
        }
        c.iter_mut().for_each(|v| *v /= members.len() as f64);
        centroids.push(c);
    }
    let labels: Vec<String> = groups.keys().map(|s| s.to_string()).collect();
    db.cluster_model = ClusterModel::new(centroids, labels, cfg.temperature)?;

    let mut entries: Vec<VocabEntry> = Vec::with_capacity(groups.len());
    for (label, members) in &groups {
        let mut takes = Vec::with_capacity(members.len());
        for &i in members {
            let p = &prepared[i];
            let e = project(&p.descriptor, &db.basis, Some(p.label.clone()))?;
            let conf = class_distribution(&e, &db.cluster_model)?;
            takes.push(TeacherTake {
                id: p.id.clone(),
                motion: p.motion.clone(),
                joint_weights: joint_weights_from_gradients(&p.gradients),
                gradients: p.gradients.clone(),
                embedding: embeddings[i].clone(),
                self_confusion: conf.confusion,
                self_smoothness: p.self_smoothness,
            });
        }
        entries.push(VocabEntry { label: label.to_string(), takes });
    }
    db.entries = entries;
    Ok(db)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: String,
    fps: f64,
    joints: Vec<String>,
    n: usize,
    labels: Vec<String>,
    parents: Vec<i64>,
    descriptor_frames: usize,
    window: usize,
    poly_order: usize,
    takes: Vec<TakeHeader>,
    sections: Vec<SectionHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TakeHeader {
    label: String,
    id: String,
    frames: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SectionHeader {
    name: String,
    len: usize,
}

fn flatten_vec3(vs: impl IntoIterator<Item = Vec3>) -> Vec<f64> {
    vs.into_iter().flat_map(Vec3::to_array).collect()
}

impl ReferenceDatabase {
    pub fn entry(&self, label: &str) -> Option<&VocabEntry> {
        self.entries.binary_search_by(|e| e.label.as_str().cmp(label)).ok().map(|i| &self.entries[i])
    }

    pub fn labels(&self) -> &[String] {
        &self.cluster_model.labels
    }

    pub fn takes(&self) -> impl Iterator<Item = (&str, &TeacherTake)> {
        self.entries.iter().flat_map(|e| e.takes.iter().map(move |t| (e.label.as_str(), t)))
    }

    fn sections(&self) -> Vec<(String, Vec<f64>)> {
        let mut s: Vec<(String, Vec<f64>)> = vec![
            (
                "scalars".into(),
                vec![self.fps, self.cluster_model.temperature, self.weights.m1, self.weights.m2, self.smoothing.alpha],
            ),
            ("topology.offsets".into(), flatten_vec3(self.topology.offsets().iter().copied())),
            ("weights.matrices".into(), self.weights.per_joint.iter().flatten().flatten().copied().collect()),
            ("basis.center".into(), self.basis.center.clone()),
            ("basis.columns".into(), self.basis.columns.concat()),
            ("centroids".into(), self.cluster_model.centroids.concat()),
        ];
        for (k, (_, take)) in self.takes().enumerate() {
            let frames = take.motion.frames();
            s.push((
                format!("take.{k}.rotations"),
                frames.iter().flat_map(|f| f.rotations().iter().flat_map(|q| q.to_array())).collect(),
            ));
            s.push((format!("take.{k}.root"), flatten_vec3(frames.iter().map(Pose::root_translation))));
            s.push((format!("take.{k}.gradients"), flatten_vec3(take.gradients.intervals.iter().flatten().copied())));
            s.push((format!("take.{k}.joint_weights"), take.joint_weights.clone()));
            s.push((format!("take.{k}.embedding"), take.embedding.clone()));
            s.push((format!("take.{k}.self"), vec![take.self_confusion, take.self_smoothness, take.gradients.fps]));
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let sections = self.sections();
        let header = Header {
            version: DB_VERSION.to_string(),
            fps: self.fps,
            joints: self.topology.names().to_vec(),
            n: self.basis.dim(),
            labels: self.labels().to_vec(),
            parents: self.topology.parents().iter().map(|p| p.map_or(-1, |i| i as i64)).collect(),
            descriptor_frames: self.descriptor_frames,
            window: self.smoothing.window,
            poly_order: self.smoothing.poly_order,
            takes: self
                .takes()
                .map(|(label, t)| TakeHeader { label: label.to_string(), id: t.id.clone(), frames: t.motion.len() })
                .collect(),
            sections: sections.iter().map(|(name, v)| SectionHeader { name: name.clone(), len: v.len() }).collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, values) in &sections {
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::CorruptFile(format!("{} bytes is too short", bytes.len())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4-byte tail"));
        if crc32fast::hash(body) != stored {
            return Err(Error::CorruptFile("checksum mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: 0 };
        let header_len = r.u64()? as usize;
        let header_bytes = r.take(header_len)?;
        let raw: serde_json::Value =
            serde_json::from_slice(header_bytes).map_err(|e| Error::CorruptFile(format!("header: {e}")))?;
        let version = raw.get("version").and_then(|v| v.as_str()).unwrap_or_default();
        if version != DB_VERSION {
            return Err(Error::VersionMismatch { found: version.to_string(), expected: DB_VERSION.to_string() });
        }
        let header: Header = serde_json::from_value(raw).map_err(|e| Error::CorruptFile(format!("header: {e}")))?;

        let mut sections: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for s in &header.sections {
            let len = r.u64()? as usize;
            if len != s.len {
                return Err(Error::CorruptFile(format!("section {} has {len} values, header says {}", s.name, s.len)));
            }
            let data = r.take(len.checked_mul(8).ok_or_else(|| Error::CorruptFile("section too large".into()))?)?;
            let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            sections.insert(s.name.clone(), values);
        }
        if r.pos != body.len() {
            return Err(Error::CorruptFile("trailing bytes after last section".into()));
        }
        decode(header, sections)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::CorruptFile("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn section(sections: &mut BTreeMap<String, Vec<f64>>, name: &str, len: usize) -> Result<Vec<f64>> {
    let v = sections.remove(name).ok_or_else(|| Error::CorruptFile(format!("missing section {name}")))?;
    if v.len() != len {
        return Err(Error::CorruptFile(format!("section {name} has {} values, expected {len}", v.len())));
    }
    Ok(v)
}

fn vec3s(v: &[f64]) -> Vec<Vec3> {
    v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

fn decode(h: Header, mut s: BTreeMap<String, Vec<f64>>) -> Result<ReferenceDatabase> {
    let corrupt = |e: Error| Error::CorruptFile(e.to_string());
    let nj = h.joints.len();
    if h.parents.len() != nj {
        return Err(Error::CorruptFile("parent list does not match joint list".into()));
    }
    let scalars = section(&mut s, "scalars", 5)?;
    let [fps, temperature, m1, m2, alpha] = scalars[..] else { unreachable!() };
    if fps.to_bits() != h.fps.to_bits() {
        return Err(Error::CorruptFile("header frame rate disagrees with the scalar section".into()));
    }
    let parents = h.parents.iter().map(|&p| usize::try_from(p).ok()).collect();
    let offsets = vec3s(&section(&mut s, "topology.offsets", 3 * nj)?);
    let topology = SkeletonTopology::new(h.joints.clone(), parents, offsets).map_err(corrupt)?;
    if topology.names() != h.joints.as_slice() {
        return Err(Error::CorruptFile("joints are not in parent-first order".into()));
    }

    let mats = section(&mut s, "weights.matrices", 9 * nj)?;
    let per_joint = mats
        .chunks_exact(9)
        .map(|m| [[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]])
        .collect();
    let weights = EmbeddingWeights { per_joint, m1, m2 };
    let smoothing = SmoothingConfig { window: h.window, poly_order: h.poly_order, alpha };

    let input_dim = 6 * nj;
    let center = section(&mut s, "basis.center", input_dim)?;
    let columns = section(&mut s, "basis.columns", h.n * input_dim)?;
    let basis = ProjectionBasis { center, columns: columns.chunks(input_dim).map(<[f64]>::to_vec).collect() };
    let centroids = section(&mut s, "centroids", h.labels.len() * h.n)?;
    let cluster_model = ClusterModel::new(centroids.chunks(h.n.max(1)).map(<[f64]>::to_vec).collect(), h.labels.clone(), temperature)
        .map_err(corrupt)?;

    let mut entries: Vec<VocabEntry> = h.labels.iter().map(|l| VocabEntry { label: l.clone(), takes: Vec::new() }).collect();
    for (k, t) in h.takes.iter().enumerate() {
        if t.frames < 2 {
            return Err(Error::CorruptFile(format!("take {} has {} frames", t.id, t.frames)));
        }
        let rot = section(&mut s, &format!("take.{k}.rotations"), t.frames * nj * 4)?;
        let root = vec3s(&section(&mut s, &format!("take.{k}.root"), t.frames * 3)?);
        let grads = vec3s(&section(&mut s, &format!("take.{k}.gradients"), (t.frames - 1) * nj * 3)?);
        let joint_weights = section(&mut s, &format!("take.{k}.joint_weights"), nj)?;
        let embedding = section(&mut s, &format!("take.{k}.embedding"), h.n)?;
        let selfs = section(&mut s, &format!("take.{k}.self"), 3)?;
        let frames = rot
            .chunks_exact(nj * 4)
            .zip(root)
            .map(|(r, t)| Pose::from_raw(r.chunks_exact(4).map(|q| Quat::new(q[0], q[1], q[2], q[3])).collect(), t))
            .collect();
        let motion = MotionSequence::new(topology.clone(), frames, fps, Some(t.label.clone())).map_err(corrupt)?;
        let gradients = GradientSequence { intervals: grads.chunks(nj).map(<[Vec3]>::to_vec).collect(), fps: selfs[2] };
        let entry = entries
            .iter_mut()
            .find(|e| e.label == t.label)
            .ok_or_else(|| Error::CorruptFile(format!("take {} has unknown label {}", t.id, t.label)))?;
        entry.takes.push(TeacherTake {
            id: t.id.clone(),
            motion,
            gradients,
            joint_weights,
            embedding,
            self_confusion: selfs[0],
            self_smoothness: selfs[1],
        });
    }
    if let Some(e) = entries.iter().find(|e| e.takes.is_empty()) {
        return Err(Error::CorruptFile(format!("label {} has no takes", e.label)));
    }
    if !s.is_empty() {
        return Err(Error::CorruptFile("unexpected extra sections".into()));
    }
    Ok(ReferenceDatabase {
        fps,
        topology,
        descriptor_frames: h.descriptor_frames,
        smoothing,
        weights,
        basis,
        cluster_model,
        entries,
    })
}
