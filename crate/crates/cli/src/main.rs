mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Part-structure inference, structure-driven segmentation refinement and
/// structure-aware retrieval on labeled point clouds.
#[derive(Debug, Parser)]
#[command(name = "sseg", version)]
struct Cli {
    /// Worker threads for per-shape work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset.
    Gen(GenArgs),
    /// Infer part hierarchies with boxes and relations.
    Infer(InferArgs),
    /// Detect box conflicts, predict merges and rebuild the hierarchy.
    Refine(RefineArgs),
    /// Score predicted hierarchies against ground truth.
    Eval(EvalArgs),
    /// Rank a corpus against a query shape.
    Retrieve(RetrieveArgs),
    /// Train the structure and merge networks.
    Train(TrainArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// toy-chair, toy-table or toy-storage (the `toy-` prefix is optional).
    #[arg(long)]
    pub category: sseg::synthio::Category,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    /// Probability that a shape has one part split in two.
    #[arg(long = "oversample-prob", alias = "oversegment-prob", default_value_t = 0.0)]
    pub oversample_prob: f64,
    /// Approximate number of points per shape.
    #[arg(long, default_value_t = 1200)]
    pub points: usize,
    /// Per-point probability of a stray label.
    #[arg(long)]
    pub label_noise: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[group(id = "predictor", required = true, multiple = false, args = ["model", "rule_based"])]
pub struct Predictor {
    /// Model directory (or `.sseg` checkpoint next to `taxonomy.json`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// PCA boxes on the built tree, no network.
    #[arg(long)]
    pub rule_based: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub predictor: Predictor,
    /// A `.shape.json` file, or a directory (or dataset) of them.
    #[arg(long)]
    pub shape: PathBuf,
    /// Taxonomy JSON; defaults to the model's, or the shape's category.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Output hierarchy file, or directory when `--shape` is a directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub shape: PathBuf,
    /// Annotated hierarchy of the shape; inferred when omitted.
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    #[arg(long = "iou-thresh", default_value_t = sseg::refine::CONFLICT_IOU_THRESHOLD)]
    pub iou_thresh: f64,
    #[arg(long = "merge-thresh", default_value_t = sseg::refine::MERGE_THRESHOLD)]
    pub merge_thresh: f64,
    /// Output directory for the refined shape, hierarchy and decision log.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted `<name>.hierarchy.json` files.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth dataset or directory of shape/hierarchy pairs.
    #[arg(long)]
    pub gt: PathBuf,
    /// Comma-separated subset of ap, ee, map.
    #[arg(long, default_value = "ap,ee,map", value_delimiter = ',')]
    pub metrics: Vec<commands::Metric>,
    /// Taxonomy JSON; defaults to the dataset's or the shapes' category.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Write the JSON report here; the table goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "structure")]
    pub mode: sseg::metrics::RetrievalMode,
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    /// Infer structures with this model instead of reading the
    /// `.hierarchy.json` next to each shape.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML or JSON training settings; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset written by `gen`; the test split is held out.
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SSEG_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return commands::report(&commands::CliError::Usage("--jobs must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            log::warn!("worker pool already initialized: {e}");
        }
    }
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Infer(a) => commands::infer(a),
        Command::Refine(a) => commands::refine(a),
        Command::Eval(a) => commands::eval(a),
        Command::Retrieve(a) => commands::retrieve(a),
        Command::Train(a) => commands::train(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => commands::report(&e),
    }
}
