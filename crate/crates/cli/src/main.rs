mod commands;
mod io;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "attitude-fusion", version, about = "Fuse closed- and open-ended survey instruments through shared latent attitudes")]
struct Cli {
    /// Base seed; every random stream is derived from it by purpose.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Clean open-ended responses into token documents and per-question bags of words.
    Preprocess(PreprocessArgs),
    /// Topic model fitting, inference and export.
    #[command(subcommand)]
    Topics(TopicsCommand),
    /// Replace the topic-proportion columns of OE rows with inferred proportions.
    AttachTopics(AttachTopicsArgs),
    /// Stratified train/test split by questionnaire version.
    Split(SplitArgs),
    /// Encode a survey into the design matrix used by the models.
    Encode(EncodeArgs),
    /// Fit a latent-attitude choice model by variational inference.
    Fit(FitArgs),
    /// Predict choices and attitudes with a fitted posterior.
    Predict(PredictArgs),
    /// Goodness-of-fit report from predictions.
    Evaluate(EvaluateArgs),
    /// Aggregate choice shares for the average respondent of each version.
    Shares(SharesArgs),
    /// Generate counterfactual instrument responses from attitudes.
    Map(MapArgs),
    /// Multinomial logit of the choice on questionnaire-version indicators.
    Mnl(MnlArgs),
    /// Cronbach's alpha of the Likert statements and a Mann-Whitney comparison of two versions.
    Reliability(ReliabilityArgs),
    /// Simulate a survey (and its open-ended text) with known parameters.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct PreprocessArgs {
    /// CSV with columns respondent_id,question_id,text.
    #[arg(long)]
    pub input: PathBuf,
    /// JSON pipeline configuration.
    #[arg(long)]
    pub pipeline_config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopicsCommand {
    /// Collapsed Gibbs LDA on a bag-of-words corpus.
    Fit(TopicsFitArgs),
    /// Topic proportions of token documents with the topic-word matrix fixed.
    Infer(TopicsInferArgs),
    /// Highest-probability terms per topic.
    TopWords(TopWordsArgs),
    /// phi, theta, document lengths, vocabulary and term frequencies as CSV.
    ExportVis(ExportVisArgs),
    /// Per-document sums of topic-word probabilities.
    Score(ScoreArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct TopicsFitArgs {
    #[arg(long)]
    pub bow: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, default_value_t = 200)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 200)]
    pub sweeps: usize,
    /// Model JSON; document proportions go to `<stem>.theta.csv` beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct TopicsInferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// JSON-lines token documents.
    #[arg(long)]
    pub tokens: PathBuf,
    /// Only documents of this question.
    #[arg(long)]
    pub question: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct TopWordsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Topic label prefix; labels are prefix + 1-based topic number.
    #[arg(long, default_value = "Top")]
    pub prefix: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ExportVisArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bow: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub tokens: PathBuf,
    #[arg(long)]
    pub question: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AttachTopicsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// `BLOCK=PATH` pairs: a topic block id and a CSV of respondent_id plus one column per topic.
    #[arg(long = "theta", value_parser = parse_block_path, required = true)]
    pub theta: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_block_path(s: &str) -> Result<(String, PathBuf), String> {
    let (b, p) = s.split_once('=').ok_or_else(|| format!("expected BLOCK=PATH, got {s:?}"))?;
    Ok((b.to_string(), PathBuf::from(p)))
}

#[derive(Args, Debug, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Directory receiving train.csv and test.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EncodeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Standardisation statistics from an earlier encode (reused instead of recomputed).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Directory receiving design.csv and stats.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    /// individual-lk | individual-lkoe | individual-oe | combined
    #[arg(long, default_value = "combined")]
    pub model: String,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub k_att: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 4000)]
    pub steps: usize,
    #[arg(long, default_value_t = 3)]
    pub particles: usize,
    #[arg(long, default_value_t = 10.0)]
    pub clip: f64,
    /// Do not standardise the latent attitudes before they enter utilities.
    #[arg(long)]
    pub raw_attitudes: bool,
    /// Posterior JSON; `<stem>.elbo.csv` and `<stem>.attitudes.csv` are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub posterior: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Prediction CSV; a `<stem>.summary.json` is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingArg {
    Macro,
    Micro,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    /// Prediction CSV from `predict`.
    #[arg(long)]
    pub pred: PathBuf,
    /// CSV with respondent_id and choice columns; defaults to the choices in the prediction file.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Final log-likelihood; defaults to the sum of log predicted probabilities of the true choices.
    #[arg(long, allow_hyphen_values = true)]
    pub ll_full: Option<f64>,
    /// Null (equal-shares) log-likelihood; defaults to N log(1/C).
    #[arg(long, allow_hyphen_values = true)]
    pub ll_null: Option<f64>,
    /// Parameter count; defaults to the value in the prediction summary.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "macro")]
    pub averaging: AveragingArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SharesArgs {
    #[arg(long)]
    pub posterior: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MapTarget {
    Likert,
    Topics,
}

#[derive(Args, Debug, Serialize)]
pub struct MapArgs {
    #[arg(long)]
    pub posterior: PathBuf,
    /// Prediction CSV (raw attitudes in att_* columns).
    #[arg(long)]
    pub attitudes: PathBuf,
    #[arg(long, value_enum)]
    pub target: MapTarget,
    /// Head whose loadings are inverted: LK or LKOE for Likert (default LK), OE for topics.
    #[arg(long)]
    pub head: Option<String>,
    /// Comma-separated versions whose attitudes are mapped; default: versions without the target instrument.
    #[arg(long, value_delimiter = ',')]
    pub versions: Vec<String>,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 400)]
    pub warmup: usize,
    /// Multiplier on the Dirichlet parameter (1 reproduces the reference sampler).
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    /// Survey CSV whose rows with the target instrument supply observed averages for a side-by-side table.
    #[arg(long)]
    pub observed: Option<PathBuf>,
    /// Table CSV; `<stem>.rows.csv` and `<stem>.diagnostics.json` are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct MnlArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ReliabilityArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Two versions whose per-respondent mean Likert scores are compared.
    #[arg(long, value_delimiter = ',', default_values_t = ["LK".to_string(), "LKOE".to_string()])]
    pub compare: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// JSON simulation config (defaults when absent). Its seed is replaced by one derived from --seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = run::Context { seed: cli.seed, quiet: cli.quiet };
    match commands::dispatch(&ctx, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(run::exit_code(&e))
        }
    }
}
