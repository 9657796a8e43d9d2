use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use genlab_core::agreement::ReportOptions;
use genlab_core::annotations::{RiditPooling, Split};
use genlab_core::corpus::ItemKind;
use genlab_core::glmm::PairEffects;
use genlab_core::ontology::Selection;
use genlab_core::regressor::R1Weighting;

#[derive(Debug, Parser)]
#[command(name = "genlab", version, about = "Genericity annotation pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter candidate spans against a parsed corpus.
    Ingest(IngestArgs),
    /// Fill per-annotator ridit confidences.
    Ridit(RiditArgs),
    /// Chance-corrected agreement from the bias and agreement models.
    Iaa(IaaArgs),
    /// Fit item scores for the average annotator.
    Normalize(NormalizeArgs),
    /// Build feature matrices for span items.
    Features(FeaturesArgs),
    /// Train a property regressor.
    Train(TrainArgs),
    /// Score trained regressors on held-out scores.
    Eval(EvalArgs),
    /// Clause-type classification from property scores with nested cross-validation.
    Compare(CompareArgs),
    /// Per-item score pairs for density plots.
    ExportPlotdata(ExportArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Argument,
    Predicate,
    Both,
}

impl KindArg {
    pub fn kinds(self) -> Vec<ItemKind> {
        match self {
            KindArg::Argument => vec![ItemKind::Argument],
            KindArg::Predicate => vec![ItemKind::Predicate],
            KindArg::Both => vec![ItemKind::Argument, ItemKind::Predicate],
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SingleKind {
    Argument,
    Predicate,
}

impl From<SingleKind> for ItemKind {
    fn from(k: SingleKind) -> Self {
        match k {
            SingleKind::Argument => ItemKind::Argument,
            SingleKind::Predicate => ItemKind::Predicate,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum PoolingArg {
    #[default]
    PerAnnotator,
    PerProperty,
}

impl From<PoolingArg> for RiditPooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::PerAnnotator => RiditPooling::PerAnnotator,
            PoolingArg::PerProperty => RiditPooling::PerProperty,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PairEffectsArg {
    PerAnnotator,
    PerPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScoreFormat {
    Wide,
    Long,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightingArg {
    BaselineMae,
    ModelMae,
}

impl From<WeightingArg> for R1Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::BaselineMae => R1Weighting::BaselineMae,
            WeightingArg::ModelMae => R1Weighting::ModelMae,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SelectionArg {
    Accuracy,
    F1,
}

impl From<SelectionArg> for Selection {
    fn from(s: SelectionArg) -> Self {
        match s {
            SelectionArg::Accuracy => Selection::Accuracy,
            SelectionArg::F1 => Selection::F1,
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub conllu: PathBuf,
    /// Candidate span items, one JSON object per line.
    #[arg(long)]
    pub spans: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub kind: KindArg,
    /// Keep roots outside the part-of-speech whitelists.
    #[arg(long)]
    pub no_pos_filter: bool,
    /// Keep predicates attached as adverbial modifiers or clauses.
    #[arg(long)]
    pub keep_adverbial: bool,
    /// Keep personal-pronoun argument roots.
    #[arg(long)]
    pub no_pronoun_stoplist: bool,
}

#[derive(Debug, Args)]
pub struct RiditArgs {
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "per-annotator")]
    pub pooling: PoolingArg,
}

#[derive(Debug, Args)]
pub struct IaaArgs {
    /// Response files; repeat to pool splits.
    #[arg(long, required = true)]
    pub responses: Vec<PathBuf>,
    /// Properties to report; repeat for several. Defaults to every property present.
    /// With exactly one property the JSON output is a single report object.
    #[arg(long)]
    pub property: Vec<String>,
    #[arg(long, default_value_t = genlab_core::agreement::DEFAULT_REPS)]
    pub reps: usize,
    #[arg(long, env = "GENLAB_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "per-annotator")]
    pub pair_effects: PairEffectsArg,
    /// Integrate a shared item effect into the chance-agreement simulation.
    #[arg(long)]
    pub include_item_variance: bool,
    /// Pooling used when the responses carry no ridit confidences yet.
    #[arg(long, value_enum, default_value = "per-annotator")]
    pub pooling: PoolingArg,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl IaaArgs {
    pub fn report_options(&self) -> ReportOptions {
        ReportOptions {
            reps: self.reps,
            seed: self.seed,
            pair_effects: match self.pair_effects {
                PairEffectsArg::PerAnnotator => PairEffects::PerAnnotator,
                PairEffectsArg::PerPair => PairEffects::PerPair,
            },
            include_item_variance: self.include_item_variance,
            ..ReportOptions::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long, value_enum)]
    pub split: SplitArg,
    #[arg(long)]
    pub out: PathBuf,
    /// `wide`: TSV with one column per property; `long`: one JSON score per line.
    #[arg(long, value_enum, default_value = "wide")]
    pub format: ScoreFormat,
    /// Also write the full fit (annotator effects, variances) as JSON.
    #[arg(long)]
    pub fit_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "per-annotator")]
    pub pooling: PoolingArg,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub conllu: PathBuf,
    /// Span items of every split, one JSON object per line.
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long, value_enum)]
    pub kind: SingleKind,
    /// Directory holding `concreteness.tsv`, `eventivity.tsv`, `verbnet.tsv`,
    /// `framenet.tsv` and `wordnet.tsv`.
    #[arg(long)]
    pub resource_dir: Option<PathBuf>,
    #[arg(long)]
    pub glove: Option<PathBuf>,
    #[arg(long)]
    pub context_vectors: Option<PathBuf>,
    /// Four `+`/`-` flags: type-level, token-level, type embedding, context embedding.
    #[arg(long, default_value = "++++", allow_hyphen_values = true)]
    pub config: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub train_scores: PathBuf,
    #[arg(long)]
    pub dev_scores: PathBuf,
    #[arg(long, value_enum)]
    pub kind: SingleKind,
    #[arg(long)]
    pub out: PathBuf,
    /// Hidden sizes, e.g. `256` or `256,64`. Without it the full grid is searched.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long, env = "GENLAB_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Training summary: selected configuration, development losses, grid points.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model files; pair each with a `--features` file in the same order.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub features: Vec<PathBuf>,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_enum)]
    pub kind: SingleKind,
    #[arg(long, value_enum, default_value = "baseline-mae")]
    pub weighting: WeightingArg,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Six property-score columns and a clause-type label per row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, env = "GENLAB_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "accuracy")]
    pub selection: SelectionArg,
    #[arg(long, default_value_t = 10)]
    pub outer_k: usize,
    #[arg(long, default_value_t = 5)]
    pub inner_k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Wide score table from `normalize`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Restrict to one property pair.
    #[arg(long, requires = "y")]
    pub x: Option<String>,
    #[arg(long, requires = "x")]
    pub y: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Span items to annotate, one JSON object per line.
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub conllu: PathBuf,
    /// Append-only JSON Lines store; reloaded on start.
    #[arg(long)]
    pub responses_out: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Sets the default annotations per item: 1 for train, 3 otherwise.
    #[arg(long, value_enum, default_value = "dev")]
    pub split: SplitArg,
    #[arg(long)]
    pub k_per_item: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub batch_size: usize,
    /// JSON object mapping `kind/property` to a statement with a `{span}` placeholder.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Accepted annotator IDs, one per line. Without it any ID may request work.
    #[arg(long)]
    pub annotators: Option<PathBuf>,
}
