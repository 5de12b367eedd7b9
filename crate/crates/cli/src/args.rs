use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "siglang", version, about = "Score sign-language motion against a reference database")]
pub struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON file whose keys mirror the flags. Falls back to $SIGLANG_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a reference database from a directory of teacher recordings.
    Build(BuildArgs),
    /// Score one student recording against a vocabulary item.
    Assess(AssessArgs),
    /// Rank a graded corpus and report Spearman correlation per vocabulary item.
    Eval(EvalArgs),
    /// Convert between BVH and the JSON motion mirror.
    Convert(ConvertArgs),
    /// Write the built-in synthetic teacher corpus, and optionally graded students.
    SynthCorpus(SynthArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Database frame rate.
    #[arg(long)]
    pub fps: Option<f64>,
    /// Largest embedding dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// Savitzky-Golay window length (odd).
    #[arg(long)]
    pub window: Option<usize>,
    /// Savitzky-Golay polynomial order.
    #[arg(long)]
    pub order: Option<usize>,
    /// Smoothness score sharpness.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Softmax temperature of the cluster model.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Meters per BVH unit.
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub student: PathBuf,
    #[arg(long)]
    pub vocab: String,
    /// Write the JSON report here. Without it the report goes to stdout and
    /// the summary to stderr.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-joint embedding weights replacing the database's.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Alignment band half-width in frames.
    #[arg(long)]
    pub band: Option<usize>,
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub db: PathBuf,
    /// Generate graded students from the database teachers with this seed.
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    pub synthetic: Option<u64>,
    /// Directory of student recordings named `<vocab>__<id>`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// `id,score` ground truth for --corpus (higher is better). Without it,
    /// the `__s<level>` part of each file name is used.
    #[arg(long, requires = "corpus")]
    pub ratings: Option<PathBuf>,
    /// Write `id,composite,rank` rows here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Noise levels in radians for --synthetic, starting at 0.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Students per noise level for --synthetic.
    #[arg(long)]
    pub takes: Option<usize>,
    #[arg(long)]
    pub band: Option<usize>,
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Teacher corpus directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 15)]
    pub vocabs: usize,
    /// Teacher takes per vocabulary item.
    #[arg(long = "teacher-takes", default_value_t = 2)]
    pub teacher_takes: usize,
    /// Also write graded students here.
    #[arg(long, requires = "seed")]
    pub students: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long)]
    pub takes: Option<usize>,
}
