//! Command implementations behind the `siglang` binary.

mod args;
pub mod config;
pub mod eval;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use siglang_core::assessment::round_sig9;
use siglang_core::embedding::{EmbeddingWeights, MAX_EMBEDDING_DIM};
use siglang_core::evalstats::{graded_corpus, read_ratings};
use siglang_core::motion_io::{motion_to_json, write_bvh, BvhOptions, DEFAULT_BVH_SCALE};
use siglang_core::refdb::{self, read_corpus, DEFAULT_FPS};
use siglang_core::smoothing::SmoothingConfig;
use siglang_core::{synthetic, AssessConfig, AssessmentReport, BuildConfig, Error, MotionSequence, ReferenceDatabase};

pub use args::{AssessArgs, BuildArgs, Cli, Command, ConvertArgs, EvalArgs, SynthArgs};
use config::{Overlay, CONFIG_ENV};
use eval::{evaluate, synthetic_students, truth_from_id, Student, DEFAULT_LEVELS, DEFAULT_TAKES};

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_UNKNOWN_VOCAB: u8 = 3;
pub const EXIT_TOPOLOGY: u8 = 4;

/// Bad flags, files or corpora detected by the front end itself.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.root_cause() {
                Error::UnknownVocab(_) => EXIT_UNKNOWN_VOCAB,
                Error::TopologyMismatch(_) => EXIT_TOPOLOGY,
                _ => EXIT_INPUT,
            };
        }
        if cause.is::<InputError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_INPUT;
        }
    }
    EXIT_INTERNAL
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let is_build = matches!(cli.command, Command::Build(_));
    run_inner(cli).map_err(|error| {
        let mut code = exit_code(&error);
        // Any corpus problem during a build is an input error.
        if is_build && code != EXIT_INTERNAL {
            code = EXIT_INPUT;
        }
        Failure { code, error }
    })
}

fn load_overlay(explicit: Option<&Path>) -> anyhow::Result<Overlay> {
    let path = match explicit {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
    };
    match path {
        Some(p) => Overlay::read(&p).map_err(|e| input_error(format!("config {e}"))),
        None => Ok(Overlay::default()),
    }
}

fn run_inner(cli: Cli) -> anyhow::Result<()> {
    let ov = load_overlay(cli.config.as_deref())?;
    let threads = cli.threads.or(ov.threads);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(input_error("--threads must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker threads")?;
    pool.install(|| match &cli.command {
        Command::Build(a) => cmd_build(a, &ov),
        Command::Assess(a) => cmd_assess(a, &ov),
        Command::Eval(a) => cmd_eval(a, &ov),
        Command::Convert(a) => cmd_convert(a, &ov),
        Command::SynthCorpus(a) => cmd_synth(a, &ov),
    })
}

fn bvh_options(flag: Option<f64>, ov: &Overlay) -> anyhow::Result<BvhOptions> {
    let scale = flag.or(ov.scale).unwrap_or(DEFAULT_BVH_SCALE);
    if !(scale.is_finite() && scale > 0.0) {
        return Err(input_error(format!("--scale must be positive, got {scale}")));
    }
    Ok(BvhOptions { scale })
}

pub fn build_config(a: &BuildArgs, ov: &Overlay) -> anyhow::Result<BuildConfig> {
    let defaults = SmoothingConfig::default();
    let cfg = BuildConfig {
        fps: a.fps.or(ov.fps).unwrap_or(DEFAULT_FPS),
        max_dim: a.n.or(ov.n).unwrap_or(MAX_EMBEDDING_DIM),
        smoothing: SmoothingConfig {
            window: a.window.or(ov.window).unwrap_or(defaults.window),
            poly_order: a.order.or(ov.order).unwrap_or(defaults.poly_order),
            alpha: a.alpha.or(ov.alpha).unwrap_or(defaults.alpha),
        },
        temperature: a.temperature.or(ov.temperature).unwrap_or(1.0),
        bvh: bvh_options(a.scale, ov)?,
        ..BuildConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_build(a: &BuildArgs, ov: &Overlay) -> anyhow::Result<()> {
    let cfg = build_config(a, ov)?;
    if !a.corpus.is_dir() {
        return Err(input_error(format!("{}: not a directory", a.corpus.display())));
    }
    let db = refdb::build(&a.corpus, &cfg)?;
    db.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "wrote {}: {} vocabulary items, {} takes, n = {}, {} joints",
        a.out.display(),
        db.labels().len(),
        db.takes().count(),
        db.basis.dim(),
        db.topology.len()
    );
    Ok(())
}

fn load_db(path: &Path) -> anyhow::Result<ReferenceDatabase> {
    ReferenceDatabase::load(path).with_context(|| format!("loading {}", path.display()))
}

fn read_motion(path: &Path, opts: &BvhOptions) -> anyhow::Result<MotionSequence> {
    MotionSequence::read_file(path, opts).with_context(|| format!("reading {}", path.display()))
}

pub fn summary(r: &AssessmentReport) -> String {
    let c = &r.confusion;
    let a = &r.alignment;
    format!(
        "vocab         {}\nassigned      {} (p = {:.6})\ncomposite     {:.6}\nC             {:.6}\nS             {:.6} (d_s = {:.6} rad)\nD             {:.6} (score {:.6}, path {}, teacher {})\nworst_joints  {}\n",
        r.vocab,
        c.assigned_label,
        c.probability_of(&c.assigned_label).unwrap_or(0.0),
        r.composite,
        c.confusion,
        r.smoothness.score,
        r.smoothness.d_s,
        a.distance,
        a.normalized_score,
        a.path.len(),
        r.teacher_take,
        r.worst_joints.join(", ")
    )
}

fn cmd_assess(a: &AssessArgs, ov: &Overlay) -> anyhow::Result<()> {
    let opts = bvh_options(a.scale, ov)?;
    let db = load_db(&a.db)?;
    let student = read_motion(&a.student, &opts)?;
    let weights = match &a.weights {
        Some(p) => Some(EmbeddingWeights::read_file(p, &db.topology).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let cfg = AssessConfig { band: a.band.or(ov.band), weights, ..AssessConfig::default() };
    let report = siglang_core::assess(&student, &a.vocab, &db, &cfg)?;
    let json = report.to_json();
    match &a.report {
        Some(path) => {
            fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
            print!("{}", summary(&report));
        }
        None => {
            eprint!("{}", summary(&report));
            print!("{json}");
        }
    }
    Ok(())
}

fn corpus_students(dir: &Path, ratings: Option<&Path>, opts: &BvhOptions) -> anyhow::Result<Vec<Student>> {
    let truth: Option<HashMap<String, f64>> = match ratings {
        Some(p) => Some(read_ratings(p).with_context(|| format!("reading {}", p.display()))?.into_iter().collect()),
        None => None,
    };
    let mut out = Vec::new();
    for m in read_corpus(dir, opts)? {
        let t = match &truth {
            Some(map) => map.get(&m.id).copied(),
            None => truth_from_id(&m.id),
        };
        let t = t.ok_or_else(|| input_error(format!("no ground truth for student {:?}", m.id)))?;
        out.push(Student { id: m.id, vocab: m.label, truth: t, motion: m.motion });
    }
    Ok(out)
}

fn cmd_eval(a: &EvalArgs, ov: &Overlay) -> anyhow::Result<()> {
    let opts = bvh_options(a.scale, ov)?;
    let levels = a.levels.clone().or(ov.levels.clone()).unwrap_or(DEFAULT_LEVELS.to_vec());
    let takes = a.takes.or(ov.takes).unwrap_or(DEFAULT_TAKES);
    let cfg = AssessConfig { band: a.band.or(ov.band), ..AssessConfig::default() };
    let db = load_db(&a.db)?;
    let students = match (&a.synthetic, &a.corpus) {
        (Some(seed), _) => synthetic_students(&db, *seed, &levels, takes)?,
        (None, Some(dir)) => corpus_students(dir, a.ratings.as_deref(), &opts)?,
        (None, None) => return Err(input_error("one of --synthetic or --corpus is required")),
    };
    let outcome = evaluate(&db, &students, &cfg)?;

    let width = outcome.sets.iter().map(|s| s.vocab.len()).max().unwrap_or(0);
    let mut used = 0;
    for s in &outcome.sets {
        match &s.rho {
            Ok(rho) => {
                used += 1;
                println!("{:<width$}  n = {:<3} rho = {rho:+.6}", s.vocab, s.size);
            }
            Err(reason) => eprintln!("skipping {}: {reason}", s.vocab),
        }
    }
    let Some(average) = outcome.average else {
        return Err(Error::DegenerateInput("no vocabulary set could be ranked".into()).into());
    };
    println!("average rho = {average:.6} over {used} of {} sets", outcome.sets.len());

    let mut w = match &a.csv {
        Some(p) => {
            let file = fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
            csv::Writer::from_writer(Box::new(file) as Box<dyn std::io::Write>)
        }
        None => {
            println!();
            csv::Writer::from_writer(Box::new(std::io::stdout()) as Box<dyn std::io::Write>)
        }
    };
    w.write_record(["id", "composite", "rank"])?;
    for s in &outcome.scored {
        w.write_record([s.id.clone(), round_sig9(s.composite).to_string(), s.rank.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

fn cmd_convert(a: &ConvertArgs, ov: &Overlay) -> anyhow::Result<()> {
    let opts = bvh_options(a.scale, ov)?;
    let (from, to) = (extension(&a.input), extension(&a.out));
    let to_json = match (from.as_deref(), to.as_deref()) {
        (Some("bvh"), Some("json")) => true,
        (Some("json"), Some("bvh")) => false,
        _ => {
            return Err(input_error(format!(
                "cannot convert {} to {}: expected .bvh -> .json or .json -> .bvh",
                a.input.display(),
                a.out.display()
            )))
        }
    };
    let m = read_motion(&a.input, &opts)?;
    let text = if to_json { motion_to_json(&m) } else { write_bvh(&m, &opts) };
    fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} ({} frames, {} joints)", a.out.display(), m.len(), m.joint_count());
    Ok(())
}

fn cmd_synth(a: &SynthArgs, ov: &Overlay) -> anyhow::Result<()> {
    if a.vocabs == 0 || a.teacher_takes == 0 {
        return Err(input_error("--vocabs and --teacher-takes must be at least 1"));
    }
    let levels = a.levels.clone().or(ov.levels.clone()).unwrap_or(DEFAULT_LEVELS.to_vec());
    let takes = a.takes.or(ov.takes).unwrap_or(DEFAULT_TAKES);
    let teachers = synthetic::write_corpus(&a.out, a.vocabs, a.teacher_takes)?;
    println!("wrote {} teacher files to {}", teachers.len(), a.out.display());
    if let (Some(dir), Some(seed)) = (&a.students, a.seed) {
        fs::create_dir_all(dir)?;
        let opts = BvhOptions::default();
        let mut count = 0;
        for v in 0..a.vocabs {
            let teacher = synthetic::vocab_motion(v, 0).with_label(Some(synthetic::vocab_label(v)));
            for s in graded_corpus(&teacher, &levels, takes, seed.wrapping_add(v as u64))? {
                fs::write(dir.join(format!("{}.bvh", s.id)), write_bvh(&s.motion, &opts))?;
                count += 1;
            }
        }
        println!("wrote {count} student files to {}", dir.display());
    }
    Ok(())
}
