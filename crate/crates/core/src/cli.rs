//! Command-line front end.
//!
//! Every subcommand writes its artifacts plus a `manifest.json` recording the
//! resolved configuration into `--out`. Errors map to distinct exit codes via
//! [`Error::exit_code`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{analyze, write_correlation_csv, write_histogram_csv, write_summary_csv};
use crate::attributes::{
    read_scores_csv, score_corpus, write_scores_csv, write_scores_jsonl, Attribute, AttributeScores, ConfidenceProvider,
};
use crate::corpus::{load_corpus_with, tokenize, Corpus, Format, ProbabilitySource, RawRecord};
use crate::curriculum::{build_curriculum, write_curricula_jsonl, Direction, ProgressConfig, DEFAULT_C0};
use crate::embeddings::{load_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::learner::{easiness_from_scores, ExternalLearner, LearnerProcess, SimConfig, SimulatedLearner};
use crate::metrics::{evaluate, write_metrics_csv, MetricVector};
use crate::scheduler::{train_loop, Mode, RewardConfig, RunReport, TrainConfig};

/// Version string recorded in manifests: crate version plus `git describe` output when available.
pub fn version_string() -> String {
    match option_env!("DIALOGUE_CURRICULA_GIT") {
        Some(g) if !g.is_empty() => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dialogue-curricula",
    version,
    about = "Dialogue corpus complexity scoring and adaptive multi-curricula training"
)]
pub struct Cli {
    /// Worker threads for scoring (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every sample on the five complexity attributes.
    Score(ScoreArgs),
    /// Distribution summaries, histograms and pairwise Kendall tau of a score file.
    Analyze(AnalyzeArgs),
    /// Export the five easy-to-hard (or reversed) orderings.
    Curriculum(CurriculumArgs),
    /// Run the curriculum scheduler against a simulated or external learner.
    Train(Box<TrainArgs>),
    /// Compute the 13 evaluation metrics for a hypothesis file.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Tsv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Tsv => Format::Tsv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbSourceArg {
    /// Unigram probabilities over queries and responses.
    All,
    /// Unigram probabilities over responses only.
    Responses,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EmbeddingArgs {
    /// Word vectors in word2vec/GloVe text format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,

    /// Fall back to deterministic hashed vectors when no usable file is given.
    #[arg(long)]
    pub hashed_embeddings: bool,

    /// Dimension of hashed vectors.
    #[arg(long, default_value_t = 100)]
    pub embedding_dim: usize,

    /// Seed of hashed vectors.
    #[arg(long, default_value_t = 0)]
    pub embedding_seed: u64,
}

impl EmbeddingArgs {
    pub fn resolve(&self) -> Result<EmbeddingTable> {
        match (&self.embeddings, self.hashed_embeddings) {
            (Some(path), hashed) => match load_embeddings(path) {
                Ok(table) => Ok(table),
                Err(Error::Io { path, source }) if hashed => {
                    warn!(
                        "cannot read embeddings {}: {source}; using hashed vectors",
                        path.display()
                    );
                    EmbeddingTable::hashed(self.embedding_dim, self.embedding_seed)
                }
                Err(e) => Err(e),
            },
            (None, true) => EmbeddingTable::hashed(self.embedding_dim, self.embedding_seed),
            (None, false) => Err(Error::Config(
                "no embeddings: pass --embeddings PATH or --hashed-embeddings".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScoreArgs {
    /// Corpus file (TSV `query<TAB>response[<TAB>next_utterance]` or JSONL).
    #[arg(long)]
    pub corpus: PathBuf,

    /// Corpus format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,

    #[command(flatten)]
    pub embedding: EmbeddingArgs,

    /// `builtin` for the bigram model, or a file of `id,loss` lines.
    #[arg(long, default_value = "builtin")]
    pub confidence: String,

    #[arg(long, value_enum, default_value_t = ProbSourceArg::All)]
    pub prob_source: ProbSourceArg,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Score file written by `score`.
    #[arg(long)]
    pub scores: PathBuf,

    #[arg(long, default_value_t = 20)]
    pub bins: usize,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CurriculumArgs {
    #[arg(long)]
    pub scores: PathBuf,

    /// Write complex-to-easy orderings instead.
    #[arg(long)]
    pub anti: bool,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub scores: PathBuf,

    /// TOML file with any of the options below plus an optional `[sim]` table;
    /// command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// adaptive, random_policy, anti, none or single:<attribute>.
    #[arg(long)]
    pub mode: Option<String>,

    /// Training steps (batches). [default: 2000]
    #[arg(long)]
    pub steps: Option<usize>,

    /// Validation and policy-update interval Γ. [default: 50]
    #[arg(long)]
    pub gamma: Option<usize>,

    /// Curriculum duration T in steps. [default: 1000]
    #[arg(long = "T", id = "duration")]
    pub duration: Option<u64>,

    /// Initial competence c0. [default: 0.01]
    #[arg(long)]
    pub c0: Option<f64>,

    /// [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Policy learning rate. [default: 0.01]
    #[arg(long)]
    pub policy_lr: Option<f64>,

    /// Stop after this many consecutive negative deltas; 0 disables. [default: 5]
    #[arg(long)]
    pub patience: Option<usize>,

    /// Enable a moving-average reward baseline with this decay.
    #[arg(long)]
    pub baseline_decay: Option<f64>,

    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// External learner command (whitespace-separated); `--seed S` is appended.
    /// Without it the built-in simulated learner is used.
    #[arg(long)]
    pub learner_cmd: Option<String>,

    /// Per-request learner timeout in seconds. [default: 300]
    #[arg(long)]
    pub learner_timeout: Option<u64>,

    /// Training corpus for an external learner (same order as the score file).
    #[arg(long)]
    pub corpus: Option<PathBuf>,

    /// Validation corpus for an external learner.
    #[arg(long)]
    pub valid: Option<PathBuf>,

    #[command(flatten)]
    pub embedding: EmbeddingArgs,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Generated responses, one per line.
    #[arg(long)]
    pub hyp: PathBuf,

    /// Reference responses, one per line.
    #[arg(long = "ref", id = "reference")]
    pub reference: PathBuf,

    /// Queries, one per line.
    #[arg(long)]
    pub query: PathBuf,

    #[command(flatten)]
    pub embedding: EmbeddingArgs,

    #[arg(long)]
    pub out: PathBuf,
}

/// Options accepted in a `train --config` TOML file.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<String>,
    pub steps: Option<usize>,
    pub gamma: Option<usize>,
    #[serde(rename = "T")]
    pub duration: Option<u64>,
    pub c0: Option<f64>,
    pub batch_size: Option<usize>,
    pub policy_lr: Option<f64>,
    pub patience: Option<usize>,
    pub baseline_decay: Option<f64>,
    pub seed: Option<u64>,
    pub learner_cmd: Option<String>,
    pub learner_timeout: Option<u64>,
    pub reward_epsilon: Option<f64>,
    pub reward_clip: Option<f64>,
    pub sim: Option<SimConfig>,
    /// Whether `[sim]` set `seed` itself; otherwise it is derived from `seed`.
    #[serde(skip)]
    pub sim_seed_given: bool,
}

pub fn parse_file_config(text: &str) -> Result<FileConfig> {
    let bad = |e: toml::de::Error| Error::Config(e.to_string());
    let mut config: FileConfig = toml::from_str(text).map_err(bad)?;
    let table: toml::Table = toml::from_str(text).map_err(bad)?;
    config.sim_seed_given = table
        .get("sim")
        .and_then(|s| s.as_table())
        .is_some_and(|s| s.contains_key("seed"));
    Ok(config)
}

pub fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_file_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Fully resolved training options.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedTrain {
    pub train: TrainConfig,
    pub sim: SimConfig,
    pub learner_cmd: Option<String>,
    pub learner_timeout: u64,
}

/// Merge flags over the config file over defaults.
pub fn resolve_train(args: &TrainArgs) -> Result<ResolvedTrain> {
    let file = match &args.config {
        Some(p) => load_file_config(p)?,
        None => FileConfig::default(),
    };
    let d = TrainConfig::default();
    let mode = match args.mode.as_ref().or(file.mode.as_ref()) {
        Some(m) => m.parse::<Mode>()?,
        None => d.mode,
    };
    let seed = args.seed.or(file.seed).unwrap_or(d.seed);
    let progress = ProgressConfig::new(
        args.c0.or(file.c0).unwrap_or(DEFAULT_C0),
        args.duration.or(file.duration).unwrap_or(d.progress.duration),
    )?;
    let patience = match args.patience.or(file.patience) {
        Some(0) => None,
        Some(p) => Some(p),
        None => d.patience,
    };
    let reward = RewardConfig {
        epsilon: file.reward_epsilon.unwrap_or(d.reward.epsilon),
        clip: file.reward_clip.unwrap_or(d.reward.clip),
    };
    let train = TrainConfig {
        mode,
        steps: args.steps.or(file.steps).unwrap_or(d.steps),
        validate_every: args.gamma.or(file.gamma).unwrap_or(d.validate_every),
        progress,
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        policy_lr: args.policy_lr.or(file.policy_lr).unwrap_or(d.policy_lr),
        patience,
        baseline_decay: args.baseline_decay.or(file.baseline_decay),
        reward,
        seed,
    };
    train.validate()?;
    let mut sim = file.sim.unwrap_or_default();
    if !file.sim_seed_given {
        sim.seed = sim_seed(seed);
    }
    Ok(ResolvedTrain {
        train,
        sim,
        learner_cmd: args.learner_cmd.clone().or(file.learner_cmd),
        learner_timeout: args.learner_timeout.or(file.learner_timeout).unwrap_or(300),
    })
}

/// Seed of the simulated learner's noise stream, kept apart from the scheduler's.
pub fn sim_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_manifest(dir: &Path, command: &str, config: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "command": command,
        "version": version_string(),
        "config": config,
    });
    let path = dir.join("manifest.json");
    let mut w = create(&path)?;
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::invalid(e.to_string()))?;
    writeln!(w, "{text}")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))
}

fn to_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("config serializes")
}

fn read_scores(path: &Path) -> Result<Vec<AttributeScores>> {
    read_scores_csv(open(path)?)
}

fn load_corpus_arg(path: &Path, format: Option<FormatArg>, source: ProbabilitySource) -> Result<Corpus> {
    let format = format.map(Format::from).unwrap_or_else(|| Format::from_path(path));
    let corpus = load_corpus_with(path, format, source)?;
    if corpus.dropped() > 0 {
        warn!(
            "{}: dropped {} samples with empty responses",
            path.display(),
            corpus.dropped()
        );
    }
    Ok(corpus)
}

pub fn cmd_score(args: &ScoreArgs) -> Result<Vec<AttributeScores>> {
    let source = match args.prob_source {
        ProbSourceArg::All => ProbabilitySource::QueriesAndResponses,
        ProbSourceArg::Responses => ProbabilitySource::ResponsesOnly,
    };
    let corpus = load_corpus_arg(&args.corpus, args.format, source)?;
    let mut table = args.embedding.resolve()?;
    table.materialize(corpus.vocab().keys().map(String::as_str));
    let provider = if args.confidence == "builtin" {
        ConfidenceProvider::builtin(&corpus)
    } else {
        ConfidenceProvider::from_file(&args.confidence)?
    };
    info!("scoring {} samples", corpus.len());
    let scores = score_corpus(&corpus, &table, &provider)?;
    prepare_out(&args.out)?;
    write_scores_csv(&scores, create(&args.out.join("scores.csv"))?)?;
    write_scores_jsonl(&scores, create(&args.out.join("scores.jsonl"))?)?;
    let mut config = to_json(args);
    config["embedding_source"] = to_json(&table.source());
    config["samples"] = json!(corpus.len());
    config["dropped"] = json!(corpus.dropped());
    write_manifest(&args.out, "score", config)?;
    Ok(scores)
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let scores = read_scores(&args.scores)?;
    let report = analyze(&scores, args.bins)?;
    prepare_out(&args.out)?;
    write_summary_csv(&report.summaries, create(&args.out.join("summary.csv"))?)?;
    write_histogram_csv(&report.histograms, create(&args.out.join("histogram.csv"))?)?;
    write_correlation_csv(&report.correlations, create(&args.out.join("correlations.csv"))?)?;
    write_manifest(&args.out, "analyze", to_json(args))
}

fn build_all_curricula(scores: &[AttributeScores], direction: Direction) -> Vec<crate::curriculum::Curriculum> {
    Attribute::ALL
        .iter()
        .filter_map(|&a| match build_curriculum(scores, a, direction) {
            Ok(c) => Some(c),
            Err(e) => {
                warn!("skipping {a} curriculum: {e}");
                None
            }
        })
        .collect()
}

pub fn cmd_curriculum(args: &CurriculumArgs) -> Result<()> {
    let scores = read_scores(&args.scores)?;
    let direction = if args.anti {
        Direction::Anti
    } else {
        Direction::EasyFirst
    };
    let curricula = build_all_curricula(&scores, direction);
    if curricula.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    prepare_out(&args.out)?;
    write_curricula_jsonl(&curricula, create(&args.out.join("curricula.jsonl"))?)?;
    write_manifest(&args.out, "curriculum", to_json(args))
}

fn check_dense_ids(scores: &[AttributeScores]) -> Result<()> {
    match scores.iter().enumerate().find(|(i, s)| s.id != *i) {
        Some((i, s)) => Err(Error::invalid(format!(
            "score file ids must be 0..n in order; row {i} has id {}",
            s.id
        ))),
        None => Ok(()),
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<RunReport> {
    let resolved = resolve_train(args)?;
    let scores = read_scores(&args.scores)?;
    if scores.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    check_dense_ids(&scores)?;
    let curricula = build_all_curricula(&scores, Direction::EasyFirst);
    let cfg = &resolved.train;

    let report = match &resolved.learner_cmd {
        None => {
            let mut sim = SimulatedLearner::new(resolved.sim.clone(), easiness_from_scores(&scores));
            train_loop(&mut sim, curricula, scores.len(), cfg)?
        }
        Some(cmd) => {
            let corpus_path = args
                .corpus
                .as_ref()
                .ok_or_else(|| Error::Config("--corpus is required with --learner-cmd".into()))?;
            let valid_path = args
                .valid
                .as_ref()
                .ok_or_else(|| Error::Config("--valid is required with --learner-cmd".into()))?;
            let corpus = load_corpus_arg(corpus_path, None, ProbabilitySource::QueriesAndResponses)?;
            if corpus.len() != scores.len() {
                return Err(Error::invalid(format!(
                    "score file has {} rows but the corpus has {} samples",
                    scores.len(),
                    corpus.len()
                )));
            }
            let valid = load_corpus_arg(valid_path, None, ProbabilitySource::QueriesAndResponses)?;
            let mut table = args.embedding.resolve()?;
            table.materialize(valid.vocab().keys().map(String::as_str));
            let mut command: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            command.extend(["--seed".to_string(), cfg.seed.to_string()]);
            let process = LearnerProcess::spawn(&command, Duration::from_secs(resolved.learner_timeout))?;
            let init = json!({ "seed": cfg.seed, "batch_size": cfg.batch_size });
            let mut learner = ExternalLearner::new(process, init, &corpus, &table, &valid)?;
            let report = train_loop(&mut learner, curricula, scores.len(), cfg)?;
            learner.into_process().shutdown()?;
            report
        }
    };

    prepare_out(&args.out)?;
    report.write_jsonl(create(&args.out.join("run.jsonl"))?)?;
    report.write_steps_csv(create(&args.out.join("steps.csv"))?)?;
    report.write_validations_csv(create(&args.out.join("validations.csv"))?)?;
    let metrics: Vec<MetricVector> = report.validations.iter().map(|v| v.metrics).collect();
    write_metrics_csv(&metrics, create(&args.out.join("metrics.csv"))?)?;
    let mut config = to_json(args);
    config["resolved"] = to_json(&resolved);
    write_manifest(&args.out, "train", config)?;
    Ok(report)
}

fn read_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(tokenize).collect())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricVector> {
    let hyps = read_lines(&args.hyp)?;
    let refs = read_lines(&args.reference)?;
    let queries = read_lines(&args.query)?;
    if hyps.len() != refs.len() || hyps.len() != queries.len() {
        return Err(Error::invalid(format!(
            "line counts differ: {} hypotheses, {} references, {} queries",
            hyps.len(),
            refs.len(),
            queries.len()
        )));
    }
    // word probabilities for the coherence embedding come from the reference side
    let records = queries
        .iter()
        .zip(&refs)
        .map(|(q, r)| RawRecord {
            query: q.join(" "),
            response: r.join(" "),
            next_utterance: None,
            conv_id: None,
        })
        .collect();
    let corpus = Corpus::from_records(records, ProbabilitySource::QueriesAndResponses)?;
    let mut table = args.embedding.resolve()?;
    table.materialize(corpus.vocab().keys().map(String::as_str));
    let metrics = evaluate(&table, &corpus, &queries, &hyps, &refs)?;
    prepare_out(&args.out)?;
    let path = args.out.join("metrics.json");
    let mut w = create(&path)?;
    let text = serde_json::to_string_pretty(&metrics).map_err(|e| Error::invalid(e.to_string()))?;
    writeln!(w, "{text}")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;
    write_metrics_csv(&[metrics], create(&args.out.join("metrics.csv"))?)?;
    let mut config = to_json(args);
    config["embedding_source"] = to_json(&table.source());
    config["bleu"] = json!("corpus BLEU, orders 1..=min(4, longest hypothesis), epsilon 1e-9, brevity penalty");
    write_manifest(&args.out, "eval", config)?;
    Ok(metrics)
}

/// Parse arguments, run the subcommand and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            warn!("thread pool already configured: {e}");
        }
    }
    let result = match &cli.command {
        Command::Score(a) => cmd_score(a).map(|_| ()),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Curriculum(a) => cmd_curriculum(a),
        Command::Train(a) => cmd_train(a).map(|_| ()),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
