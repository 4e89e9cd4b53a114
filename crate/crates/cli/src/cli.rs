//! Flag surface. Options that mirror a config-file key are `Option`al so
//! the merge in [`crate::config`] can tell "explicitly set" from
//! "defaulted": flags beat file values, file values beat built-ins.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hcf_core::eval::ScenarioKind;
use hcf_core::fm::{Direction, Variant};

#[derive(Debug, Parser)]
#[command(
    name = "hcf",
    version,
    about = "Signed-engagement recommendation: store both reactions, learn from dislikes too",
    max_term_width = 100
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic dataset with planted taste structure.
    Datagen(DatagenArgs),
    /// Normalize an event log into canonical order (validates it too).
    Ingest(IngestArgs),
    /// Fit a factorization machine on an event log.
    Train(TrainArgs),
    /// Rank unseen items for one or more users.
    Recommend(RecommendArgs),
    /// Grow an audience for one item, cohort by cohort.
    Disseminate(DisseminateArgs),
    /// Head-to-head AUC of the signed variant vs the positive-only one.
    Evaluate(EvaluateArgs),
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// RNG seed for anything stochastic in this command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config file merged beneath the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory the dataset is written into.
    #[arg(long)]
    pub out: PathBuf,
    /// Event log encoding.
    #[arg(long, value_enum)]
    pub format: Option<LogFormat>,
    /// Number of users (overrides the config file).
    #[arg(long)]
    pub users: Option<usize>,
    /// Number of items (overrides the config file).
    #[arg(long)]
    pub items: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Event log to read (.csv or .jsonl).
    #[arg(long)]
    pub data: PathBuf,
    /// Normalized log to write (extension picks the encoding).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Event log to train on.
    #[arg(long)]
    pub data: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Feature set: signed (hcf) or positives-only ablation (ccf).
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// What the model ranks: items for users, or users for an item.
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Event log the candidates and histories come from.
    #[arg(long)]
    pub data: PathBuf,
    /// Trained recommendation model.
    #[arg(long)]
    pub model: PathBuf,
    /// JSON-lines output, one record per requested user.
    #[arg(long)]
    pub out: PathBuf,
    /// User key to serve; repeat for several.
    #[arg(long = "user", required = true)]
    pub users: Vec<String>,
    /// List length per user.
    #[arg(long)]
    pub top_n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DisseminateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Event log the audience grows on.
    #[arg(long)]
    pub data: PathBuf,
    /// Trained dissemination model.
    #[arg(long)]
    pub model: PathBuf,
    /// Ground-truth file standing in for the audience's reactions.
    #[arg(long)]
    pub truth: PathBuf,
    /// JSON-lines output, one record per exposure round.
    #[arg(long)]
    pub out: PathBuf,
    /// Item key to spread.
    #[arg(long)]
    pub item: String,
    /// Exposure rounds to run.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Users exposed in the first round.
    #[arg(long)]
    pub cohort: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Event log to evaluate on.
    #[arg(long)]
    pub data: PathBuf,
    /// Report file to write (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Scenario to run; repeat for several. Defaults to all three.
    #[arg(long = "scenario", value_enum)]
    pub scenarios: Vec<ScenarioArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogFormat {
    Csv,
    Jsonl,
}

impl LogFormat {
    pub fn extension(self) -> &'static str {
        match self {
            LogFormat::Csv => "csv",
            LogFormat::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Ccf,
    Hcf,
}

impl From<VariantArg> for Variant {
    fn from(value: VariantArg) -> Variant {
        match value {
            VariantArg::Ccf => Variant::Ccf,
            VariantArg::Hcf => Variant::Hcf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Reco,
    Dism,
}

impl From<DirectionArg> for Direction {
    fn from(value: DirectionArg) -> Direction {
        match value {
            DirectionArg::Reco => Direction::Recommendation,
            DirectionArg::Dism => Direction::Dissemination,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    RecoAll,
    RecoNew,
    DismNew,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(value: ScenarioArg) -> ScenarioKind {
        match value {
            ScenarioArg::RecoAll => ScenarioKind::RecoAll,
            ScenarioArg::RecoNew => ScenarioKind::RecoNew,
            ScenarioArg::DismNew => ScenarioKind::DismNew,
        }
    }
}
