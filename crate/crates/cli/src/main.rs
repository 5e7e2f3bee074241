mod commands;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Replication audit and mitigation toolkit for text-to-image training corpora.
#[derive(Debug, Parser)]
#[command(name = "dupaudit", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "DUPAUDIT_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Rows per block in similarity scans.
    #[arg(long, global = true, default_value_t = dupaudit_core::simgraph::DEFAULT_BLOCK_ROWS)]
    pub block_rows: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find duplicate-image clusters in an embedding file.
    Cluster(ClusterArgs),
    /// Score generated images against a training set.
    Simscore(SimscoreArgs),
    /// Self-similarity baseline of a training set.
    Selfsim(SelfsimArgs),
    /// Histogram-entropy and JPEG-size complexity of images.
    Complexity(ComplexityArgs),
    /// Apply a caption or text-embedding mitigation strategy.
    Mitigate(MitigateArgs),
    /// Build a duplication-aware training manifest.
    Manifest(ManifestArgs),
    /// Draw a weighted epoch from a manifest.
    Sample(SampleArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    /// EMB1 image embeddings (unit-norm rows).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output: one JSON cluster record per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep pairs with cosine >= this value.
    #[arg(long, default_value_t = dupaudit_core::simgraph::DEFAULT_EDGE_THRESHOLD)]
    pub threshold: f32,
    /// Smallest cluster to report.
    #[arg(long, default_value_t = dupaudit_core::simgraph::DEFAULT_MIN_CLUSTER_SIZE)]
    pub min_size: usize,
    /// Also dump every edge as little-endian (u32, u32, f32) triples.
    #[arg(long)]
    pub edge_dump: Option<PathBuf>,
    /// Captions (JSONL id, caption) for the median caption similarity.
    #[arg(long, requires = "text_embeddings")]
    pub captions: Option<PathBuf>,
    /// EMB1 text embeddings keyed by the same ids.
    #[arg(long, requires = "captions")]
    pub text_embeddings: Option<PathBuf>,
    /// Caption pairs sampled per cluster when there are more.
    #[arg(long, default_value_t = dupaudit_core::metrics::DEFAULT_PAIR_BUDGET)]
    pub pair_budget: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SimscoreArgs {
    /// EMB1 embeddings of generated images.
    #[arg(long)]
    pub generated: PathBuf,
    /// EMB1 embeddings of the training set.
    #[arg(long)]
    pub train: PathBuf,
    /// Output JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-query CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = dupaudit_core::metrics::DEFAULT_PERCENTILE)]
    pub percentile: f64,
    /// Top-1 score at or above which a generation counts as a replication.
    #[arg(long, default_value_t = dupaudit_core::metrics::DEFAULT_REPLICATION_THRESHOLD)]
    pub replication_threshold: f64,
    /// Skip training rows whose id equals the query id.
    #[arg(long)]
    pub exclude_self: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SelfsimArgs {
    /// EMB1 embeddings of the training set.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = dupaudit_core::metrics::DEFAULT_PERCENTILE)]
    pub percentile: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyModeArg {
    Luma,
    ChannelMean,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Pearson,
    Spearman,
}

#[derive(Debug, Args, Serialize)]
pub struct ComplexityArgs {
    /// Directory of <id>.png / <id>.jpg files.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub images: Option<PathBuf>,
    /// JSONL manifest of {id, path}.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output CSV (id, entropy_bits, jpeg_bytes, bits_per_pixel).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = dupaudit_core::complexity::DEFAULT_JPEG_QUALITY)]
    pub quality: u8,
    /// Standardized side length used before scoring (fixed).
    #[arg(long, default_value_t = dupaudit_core::complexity::RESOLUTION, value_parser = clap::value_parser!(u32).range(256..=256))]
    pub resolution: u32,
    #[arg(long, value_enum, default_value_t = EntropyModeArg::Luma)]
    pub entropy_mode: EntropyModeArg,
    /// simscore report to correlate against.
    #[arg(long, requires = "correlation_out")]
    pub report: Option<PathBuf>,
    /// Output JSON with (r, p) for each complexity metric.
    #[arg(long, requires = "report")]
    pub correlation_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Pearson)]
    pub method: MethodArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Mc,
    Gn,
    Rc,
    Rt,
    Cwr,
    Rna,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseArg {
    Train,
    Inference,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenModeArg {
    PerStep,
    PerToken,
}

#[derive(Debug, Args, Serialize)]
pub struct MitigateArgs {
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    /// Captions JSONL, or an EMB1 file for gn.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Trigger probability [default: 0.4 for rc/cwr/rna, 0.1 for rt].
    #[arg(long)]
    pub prob: Option<f64>,
    /// Rounds per caption [default: 2 train / 4 inference for rt/cwr/rna, 1 otherwise].
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Selects the default repeat count.
    #[arg(long, value_enum, default_value_t = PhaseArg::Train)]
    pub phase: PhaseArg,
    /// Gaussian noise multiplier for gn.
    #[arg(long, default_value_t = dupaudit_core::mitigate::DEFAULT_NOISE_SCALE)]
    pub noise_scale: f64,
    /// rna draws integers from [0, number_range).
    #[arg(long, default_value_t = dupaudit_core::mitigate::DEFAULT_NUMBER_RANGE)]
    pub number_range: u64,
    /// Newline-delimited vocabulary [default: bundled 10k English words].
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Caption pools for mc: JSONL {id, captions}. The original caption joins each pool; ids without one keep their caption.
    #[arg(long)]
    pub pools: Option<PathBuf>,
    /// How the rt probability is applied.
    #[arg(long, value_enum, default_value_t = TokenModeArg::PerStep)]
    pub rt_mode: TokenModeArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    None,
    Full,
    Partial,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Original,
    Fixed,
    Class,
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct ManifestArgs {
    /// Image captions JSONL {id, caption}.
    #[arg(long)]
    pub captions: PathBuf,
    /// Newline-delimited ids of duplicated images.
    #[arg(long)]
    pub dups: Option<PathBuf>,
    /// Data duplication factor: sampling weight of duplicated images.
    #[arg(long, default_value_t = 1.0)]
    pub ddf: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    pub mode: ModeArg,
    /// Caption pools for partial mode: JSONL {id, captions}.
    #[arg(long)]
    pub pools: Option<PathBuf>,
    /// Replace captions with a conditioning scheme before building.
    #[arg(long, value_enum, default_value_t = SchemeArg::Original)]
    pub caption_scheme: SchemeArg,
    /// Class names for the class scheme: JSONL {id, class}.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Vocabulary for the random scheme [default: bundled list].
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Write repeated rows instead of weights (integer ddf only).
    #[arg(long)]
    pub expand: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentArg {
    RoundRobin,
    Iid,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    /// Manifest JSONL written by `manifest`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub draws: usize,
    #[arg(long, value_enum, default_value_t = AssignmentArg::RoundRobin)]
    pub caption_assignment: AssignmentArg,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
