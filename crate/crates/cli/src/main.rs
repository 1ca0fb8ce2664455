use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

use ponos_core::chat::seed_from_env;
use ponos_core::eval::evaluate_classifier;
use ponos_core::ingest::{
    ingest_threads, load_gold_labels, write_atomic, CorpusStore, DEFAULT_MAX_REPLIES,
    DEFAULT_MIN_REPLIES,
};
use ponos_core::knn::{EmbeddingLine, NeighborIndex, DEFAULT_TAU};
use ponos_core::metric::{render_report, ReportLine, ScoreRecord};
use ponos_core::pipeline::{score_store, ScoringOptions};
use ponos_core::pool::{bounded_map, default_parallelism};
use ponos_core::predictor::{predict_ponos, read_candidates, Exemplar, GeneratorConfig};
use ponos_core::sentiment::{BackendKind, Classifier, ClassifierConfig};
use ponos_core::thread_model::{ContextDescriptor, ReactionRecord, ScoreVariant};
use ponos_core::{Error, ErrorClass, Result};

const API_KEY_ENV: &str = "PONOS_API_KEY";

#[derive(Parser)]
#[command(name = "ponos", version, about = "Score content by the share of negative replies it draws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a JSONL thread dump into a corpus store.
    Ingest(IngestArgs),
    /// Classify replies and write one PONOS line per eligible target.
    Score(ScoreArgs),
    /// Compare a classifier against assessor labels.
    Eval(EvalArgs),
    /// Build or query a nearest-neighbour index of scored embeddings.
    #[command(subcommand)]
    Knn(KnnCommand),
    /// Predict PONOS for unseen content from generated replies.
    Predict(PredictArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Thread dump, one JSON record per line.
    #[arg(long)]
    input: PathBuf,
    /// Store directory to create or replace.
    #[arg(long, env = "PONOS_STORE")]
    store: PathBuf,
    /// Community the corpus was collected from.
    #[arg(long, env = "PONOS_CONTEXT")]
    context: String,
}

#[derive(Args)]
struct ClassifierArgs {
    /// Classifier config file (TOML).
    #[arg(long, env = "PONOS_CLASSIFIER")]
    classifier: PathBuf,
    /// Overrides endpoint_url in the classifier config.
    #[arg(long, env = "PONOS_CLASSIFIER_ENDPOINT")]
    classifier_endpoint: Option<String>,
    /// Overrides model_name in the classifier config.
    #[arg(long, env = "PONOS_CLASSIFIER_MODEL")]
    classifier_model: Option<String>,
}

impl ClassifierArgs {
    fn build(&self, gold: Option<&[ReactionRecord]>) -> Result<Classifier> {
        let mut config = ClassifierConfig::load(&self.classifier)?;
        if let Some(url) = &self.classifier_endpoint {
            config.endpoint_url = Some(url.clone());
        }
        if let Some(model) = &self.classifier_model {
            config.model_name = Some(model.clone());
        }
        if config.backend == BackendKind::GoldPassthrough && gold.is_none() {
            return Err(Error::InvalidConfig("gold_passthrough classifier needs --gold".into()));
        }
        let key = std::env::var(API_KEY_ENV).ok();
        Classifier::from_config(&config, gold, key.as_deref(), seed_from_env())
    }
}

#[derive(Args)]
struct ParallelArgs {
    /// Worker threads for per-target work.
    #[arg(long, env = "PONOS_PARALLEL", default_value_t = default_parallelism())]
    parallel: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Basic,
    Weighted,
    Net,
}

impl From<VariantArg> for ScoreVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Basic => ScoreVariant::Basic,
            VariantArg::Weighted => ScoreVariant::Weighted,
            VariantArg::Net => ScoreVariant::Net,
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long, env = "PONOS_STORE")]
    store: PathBuf,
    #[arg(long, value_enum, env = "PONOS_VARIANT", default_value = "basic")]
    variant: VariantArg,
    /// Recency decay per second; weighted variant only [default: 0].
    #[arg(long, env = "PONOS_LAMBDA")]
    lambda: Option<f64>,
    /// Targets with fewer replies are reported as insufficient.
    #[arg(long, env = "PONOS_MIN_REPLIES", default_value_t = DEFAULT_MIN_REPLIES)]
    min_replies: usize,
    /// Highest-ranked replies kept per target.
    #[arg(long, env = "PONOS_MAX_REPLIES", default_value_t = DEFAULT_MAX_REPLIES)]
    max_replies: usize,
    #[command(flatten)]
    classifier: ClassifierArgs,
    /// Assessor labels, required by the gold_passthrough backend.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Report file (JSONL).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    parallel: ParallelArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, env = "PONOS_STORE")]
    store: PathBuf,
    /// Assessor labels (JSON array of {comment_id, reply_id, labels}).
    #[arg(long)]
    gold: PathBuf,
    #[command(flatten)]
    classifier: ClassifierArgs,
    /// Also write the full report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    parallel: ParallelArgs,
}

#[derive(Subcommand)]
enum KnnCommand {
    /// Join embeddings with a score report into an index directory.
    Build {
        /// Embeddings, one {content_id, vector} per line.
        #[arg(long)]
        embeddings: PathBuf,
        /// Score report written by `ponos score`.
        #[arg(long)]
        scores: PathBuf,
        /// Index directory to create or replace.
        #[arg(long)]
        index: PathBuf,
    },
    /// Print the nearest scored neighbour of a vector.
    Query {
        #[arg(long)]
        index: PathBuf,
        /// JSON array of numbers, or a {content_id, vector} object.
        #[arg(long)]
        vector_file: PathBuf,
        /// Minimum cosine similarity for a match.
        #[arg(long, env = "PONOS_TAU", default_value_t = DEFAULT_TAU)]
        tau: f64,
    },
}

#[derive(Args)]
struct PredictArgs {
    /// Candidates, one {id, body, context} per line.
    #[arg(long)]
    input: PathBuf,
    /// Generator config file (TOML).
    #[arg(long, env = "PONOS_GENERATOR")]
    generator: PathBuf,
    /// Overrides endpoint_url in the generator config.
    #[arg(long, env = "PONOS_GENERATOR_ENDPOINT")]
    generator_endpoint: Option<String>,
    /// Overrides model_name in the generator config.
    #[arg(long, env = "PONOS_GENERATOR_MODEL")]
    generator_model: Option<String>,
    #[command(flatten)]
    classifier: ClassifierArgs,
    /// Replies to generate per candidate [default: 5, or k_replies from the generator config].
    #[arg(long, env = "PONOS_K")]
    k: Option<usize>,
    /// Index used to retrieve a scored neighbour as a generation exemplar.
    #[arg(long, requires_all = ["store", "query_embeddings"])]
    index: Option<PathBuf>,
    /// Store holding the replies of retrieved neighbours.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Embeddings of the candidates, keyed by candidate id.
    #[arg(long)]
    query_embeddings: Option<PathBuf>,
    /// Minimum similarity for a retrieved neighbour.
    #[arg(long, env = "PONOS_TAU", default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Report file (JSONL).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    parallel: ParallelArgs,
}

fn open_file(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn load_gold(path: &Path, store: &CorpusStore) -> Result<Vec<ReactionRecord>> {
    load_gold_labels(open_file(path)?, store)
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let ctx = ContextDescriptor::new(&args.context)?;
    let (store, report) = ingest_threads(open_file(&args.input)?, ctx)?;
    for e in &report.errors {
        warn!("line {}: {}", e.line, e.message);
    }
    if report.duplicates > 0 {
        warn!("{} duplicate ids replaced by their later record", report.duplicates);
    }
    store.save(&args.store)?;
    println!(
        "posts={} comments={} orphans={} parse_errors={}",
        report.posts,
        report.comments,
        report.orphans,
        report.errors.len()
    );
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let options = ScoringOptions {
        variant: args.variant.into(),
        lambda: args.lambda,
        min_replies: args.min_replies,
        max_replies: args.max_replies,
        workers: args.parallel.parallel,
    };
    options.validate()?;
    let store = CorpusStore::open(&args.store)?;
    let gold = args.gold.as_deref().map(|p| load_gold(p, &store)).transpose()?;
    let classifier = args.classifier.build(gold.as_deref())?;
    let lines = score_store(&store, &classifier, &options)?;
    write_atomic(&args.out, render_report(&lines).as_bytes())?;
    let scored = lines.iter().filter(|l| matches!(l, ReportLine::Scored(_))).count();
    println!("scored={} insufficient={}", scored, lines.len() - scored);
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let store = CorpusStore::open(&args.store)?;
    let gold = load_gold(&args.gold, &store)?;
    let classifier = args.classifier.build(Some(&gold))?;
    let report = evaluate_classifier(&store, &gold, &classifier, args.parallel.parallel)?;
    if let Some(out) = &args.out {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        write_atomic(out, text.as_bytes())?;
    }
    print!("{}", report.render_table());
    println!("f1={} mae={} mse={}", report.f1, report.mae, report.mse);
    Ok(())
}

fn read_query_vector(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    if let Ok(v) = serde_json::from_str::<Vec<f64>>(&text) {
        return Ok(v);
    }
    serde_json::from_str::<EmbeddingLine>(&text)
        .map(|line| line.vector)
        .map_err(|e| Error::Parse { line: None, message: format!("{}: {e}", path.display()) })
}

fn cmd_knn(cmd: KnnCommand) -> Result<()> {
    match cmd {
        KnnCommand::Build { embeddings, scores, index } => {
            let (built, skipped) = NeighborIndex::from_files(&embeddings, &scores, DEFAULT_TAU)?;
            built.save(&index)?;
            println!("indexed={} skipped={}", built.len(), skipped);
        }
        KnnCommand::Query { index, vector_file, tau } => {
            let index = NeighborIndex::open(&index, tau)?;
            let query = read_query_vector(&vector_file)?;
            match index.query_nearest(&query)? {
                Some(n) => println!(
                    "{}",
                    json!({
                        "content_id": n.content_id,
                        "similarity": n.similarity,
                        "variant": n.score.variant(),
                        "value": n.score.value(),
                        "n_replies": n.score.n_replies(),
                        "error": n.score.error(),
                    })
                ),
                None => println!("no neighbour with similarity >= {tau}"),
            }
        }
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let mut config = GeneratorConfig::load(&args.generator)?;
    if let Some(url) = &args.generator_endpoint {
        config.endpoint_url = url.clone();
    }
    if let Some(model) = &args.generator_model {
        config.model_name = model.clone();
    }
    if let Some(k) = args.k {
        config.k_replies = k;
    }
    config.validate()?;
    let candidates = read_candidates(open_file(&args.input)?)?
        .into_iter()
        .map(|c| c.into_item())
        .collect::<Result<Vec<_>>>()?;
    let retrieval = match (&args.index, &args.store, &args.query_embeddings) {
        (Some(index), Some(store), Some(embeddings)) => Some((
            NeighborIndex::open(index, args.tau)?,
            CorpusStore::open(store)?,
            ponos_core::knn::read_embeddings(embeddings)?,
        )),
        _ => None,
    };
    let classifier = args.classifier.build(None)?;
    let generator = config.client(std::env::var(API_KEY_ENV).ok().as_deref(), seed_from_env());

    let results = bounded_map(&candidates, args.parallel.parallel, |(item, ctx)| {
        let mut cfg = config.clone();
        if let Some((index, store, embeddings)) = &retrieval {
            match embeddings.iter().find(|e| e.content_id == item.id) {
                Some(e) => {
                    if let Some(n) = index.query_nearest(&e.vector)? {
                        info!("{}: exemplar {} (similarity {:.3})", item.id, n.content_id, n.similarity);
                        cfg.retrieved_neighbors.push(Exemplar::from_store(store, &n.content_id, cfg.k_replies)?);
                    }
                }
                None => warn!("{}: no query embedding, generating without exemplar", item.id),
            }
        }
        let score = predict_ponos(item, ctx, &cfg, generator.as_ref(), &classifier)?;
        Ok::<_, Error>(ScoreRecord::new(&item.id, ctx.clone(), score))
    });
    let lines = results
        .into_iter()
        .map(|r| r.map(ReportLine::Scored))
        .collect::<Result<Vec<_>>>()?;
    write_atomic(&args.out, render_report(&lines).as_bytes())?;
    for line in &lines {
        if let ReportLine::Scored(r) = line {
            println!("{} ponos={} n={} error={}", r.content_id, r.score.value(), r.score.n_replies(), r.score.error());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Knn(c) => cmd_knn(c),
        Command::Predict(a) => cmd_predict(a),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.class() {
        ErrorClass::Data => 1,
        ErrorClass::Usage => 2,
        ErrorClass::Backend => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
