use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use misinfo_core::bm25::InvertedIndex;
use misinfo_core::corpus_io::{load_corpus, load_pool, load_qrels, load_run, load_topics, save_run, CandidatePool};
use misinfo_core::eval::evaluate_runs;
use misinfo_core::fixture::SyntheticFixture;
use misinfo_core::fusion::fuse_runs;
use misinfo_core::pipeline::{self, PipelineConfig};
use misinfo_core::quality::load_criterion_scores;
use misinfo_core::semantic::TopicField;
use misinfo_core::Run;

#[derive(Parser)]
#[command(
    name = "misinfo",
    version,
    about = "Health misinformation retrieval: BM25, re-ranking, fusion and evaluation"
)]
struct Cli {
    /// Log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 index from a JSONL corpus
    Index(IndexArgs),
    /// Run BM25 retrieval for every topic
    Search(SearchArgs),
    /// Re-rank candidates by embedding similarity or criterion quality
    Rerank(RerankArgs),
    /// Reciprocal rank fusion of two or more run files
    Fuse(FuseArgs),
    /// Evaluate run files against three-aspect qrels
    Eval(EvalArgs),
    /// Index, retrieve, re-rank, fuse and evaluate in one go
    RunAll(RunAllArgs),
    /// Write the bundled synthetic corpus, judgments and config
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML config file; flags override its keys
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(p) => Ok(PipelineConfig::load(p)?),
            None => Ok(PipelineConfig::new("", "")),
        }
    }
}

#[derive(Args)]
struct Bm25Flags {
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
}

impl Bm25Flags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.bm25.k1, self.k1);
        set(&mut cfg.bm25.b, self.b);
    }
}

#[derive(Args)]
struct SemanticFlags {
    #[arg(long)]
    doc_embeddings: Option<PathBuf>,
    #[arg(long)]
    topic_embeddings: Option<PathBuf>,
    #[arg(long)]
    max_sentences: Option<usize>,
    #[arg(long, value_enum)]
    topic_field: Option<FieldArg>,
    #[arg(long)]
    hash_dim: Option<usize>,
    #[arg(long)]
    hash_seed: Option<u64>,
}

impl SemanticFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set_path(&mut cfg.doc_embeddings, &self.doc_embeddings);
        set_path(&mut cfg.topic_embeddings, &self.topic_embeddings);
        set(&mut cfg.semantic.max_sentences, self.max_sentences);
        set(&mut cfg.semantic.topic_field, self.topic_field.map(TopicField::from));
        set(&mut cfg.semantic.hash_dim, self.hash_dim);
        set(&mut cfg.semantic.hash_seed, self.hash_seed);
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Query,
    Description,
    Both,
}

impl From<FieldArg> for TopicField {
    fn from(f: FieldArg) -> Self {
        match f {
            FieldArg::Query => TopicField::Query,
            FieldArg::Description => TopicField::Description,
            FieldArg::Both => TopicField::Both,
        }
    }
}

#[derive(Args)]
struct EvalFlags {
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    max_usefulness: Option<u32>,
    #[arg(long)]
    usefulness_threshold: Option<u32>,
    #[arg(long)]
    eval_depth: Option<usize>,
    #[arg(long)]
    persistence: Option<f64>,
    #[arg(long)]
    compat_depth: Option<usize>,
}

impl EvalFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set_path(&mut cfg.qrels, &self.qrels);
        set(&mut cfg.baseline, self.baseline.clone());
        set(&mut cfg.eval.max_usefulness, self.max_usefulness);
        set(&mut cfg.eval.usefulness_threshold, self.usefulness_threshold);
        set(&mut cfg.eval.depth, self.eval_depth);
        set(&mut cfg.eval.persistence, self.persistence);
        set(&mut cfg.eval.compat_depth, self.compat_depth);
    }
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    bm25: Bm25Flags,
    /// Index file to write
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Prebuilt index; the corpus is indexed on the fly when absent
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long)]
    pool: Option<PathBuf>,
    #[command(flatten)]
    bm25: Bm25Flags,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value = "bm25")]
    tag: String,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Semantic,
    Quality,
}

#[derive(Args)]
struct RerankArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_enum)]
    method: Method,
    /// Run whose lists are re-ranked (quality) or supply the candidates (semantic)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Criterion-score file (quality)
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long)]
    pool: Option<PathBuf>,
    #[command(flatten)]
    semantic: SemanticFlags,
    #[arg(long)]
    tag: Option<String>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    rrf_k: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    tag: String,
    #[arg(long, short)]
    out: PathBuf,
    /// Run files to fuse
    #[arg(required = true)]
    runs: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    eval: EvalFlags,
    /// Also write delimited rows here
    #[arg(long)]
    tsv: Option<PathBuf>,
    /// Run files to evaluate
    #[arg(required = true)]
    runs: Vec<PathBuf>,
}

#[derive(Args)]
struct RunAllArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    qe_base_scores: Option<PathBuf>,
    #[arg(long)]
    qe_large_scores: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[command(flatten)]
    bm25: Bm25Flags,
    #[arg(long)]
    depth: Option<usize>,
    #[command(flatten)]
    semantic: SemanticFlags,
    #[arg(long)]
    rrf_k: Option<f64>,
    #[arg(long)]
    fusion_depth: Option<usize>,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, short)]
    out: PathBuf,
}

/// A problem with the invocation itself rather than a failing stage.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn required<'a>(path: &'a Path, key: &str) -> Result<&'a Path> {
    if path.as_os_str().is_empty() {
        return Err(usage(format!("no {key} given; pass --{key} or set it in --config")));
    }
    if !path.is_file() {
        return Err(usage(format!("{key} file `{}` does not exist", path.display())));
    }
    Ok(path)
}

fn optional(path: &Option<PathBuf>, key: &str) -> Result<()> {
    match path {
        Some(p) => required(p, key).map(|_| ()),
        None => Ok(()),
    }
}

fn load_pool_opt(path: &Option<PathBuf>) -> Result<Option<CandidatePool>> {
    optional(path, "pool")?;
    Ok(path.as_ref().map(load_pool).transpose()?)
}

fn cmd_index(args: IndexArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    set(&mut cfg.corpus, args.corpus);
    args.bm25.apply(&mut cfg);
    let params = cfg.bm25.params();
    params.validate()?;
    let store = load_corpus(required(&cfg.corpus, "corpus")?)?;
    let index = InvertedIndex::build(&store, params)?;
    pipeline::save_index(&args.out, &index)?;
    println!(
        "{} documents, {} terms, avgdl {:.4}",
        index.num_docs(),
        index.num_terms(),
        index.avg_doc_length()
    );
    Ok(())
}

fn cmd_search(args: SearchArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    set(&mut cfg.corpus, args.corpus);
    set(&mut cfg.topics, args.topics);
    set_path(&mut cfg.pool, &args.pool);
    args.bm25.apply(&mut cfg);
    set(&mut cfg.bm25.depth, args.depth);
    let topics = load_topics(required(&cfg.topics, "topics")?)?;
    let pool = load_pool_opt(&cfg.pool)?;
    let (index, params) = match &args.index {
        Some(path) => {
            let index = pipeline::load_index(required(path, "index")?)?;
            let mut params = index.params();
            set(&mut params.k1, args.bm25.k1);
            set(&mut params.b, args.bm25.b);
            (index, params)
        }
        None => {
            let store = load_corpus(required(&cfg.corpus, "corpus")?)?;
            (InvertedIndex::build(&store, cfg.bm25.params())?, cfg.bm25.params())
        }
    };
    params.validate()?;
    let run = pipeline::search_topics(&index, &topics, params, cfg.bm25.depth, pool.as_ref(), &args.tag)?;
    save_run(&args.out, &run)?;
    info!("wrote {} topics to {}", run.len(), args.out.display());
    Ok(())
}

fn cmd_rerank(args: RerankArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    set(&mut cfg.corpus, args.corpus);
    set(&mut cfg.topics, args.topics);
    set_path(&mut cfg.pool, &args.pool);
    args.semantic.apply(&mut cfg);
    let input = match &args.input {
        Some(p) => Some(load_run(required(p, "input")?)?),
        None => None,
    };
    let run = match args.method {
        Method::Quality => {
            let input = input.ok_or_else(|| usage("--method quality needs --input"))?;
            let scores = args
                .scores
                .as_deref()
                .ok_or_else(|| usage("--method quality needs --scores"))?;
            let scores = load_criterion_scores(required(scores, "scores")?)?;
            let tag = args.tag.as_deref().unwrap_or("quality");
            let (run, missing) = pipeline::quality_topics(&input, &scores, tag)?;
            if missing > 0 {
                warn!("{missing} ranked documents had no criterion scores and were scored 0");
            }
            run
        }
        Method::Semantic => {
            if args.scores.is_some() {
                return Err(usage("--scores only applies to --method quality"));
            }
            if cfg.doc_embeddings.is_some() != cfg.topic_embeddings.is_some() {
                return Err(usage("--doc-embeddings and --topic-embeddings must be given together"));
            }
            optional(&cfg.doc_embeddings, "doc-embeddings")?;
            optional(&cfg.topic_embeddings, "topic-embeddings")?;
            let store = load_corpus(required(&cfg.corpus, "corpus")?)?;
            let topics = load_topics(required(&cfg.topics, "topics")?)?;
            let pool = match input {
                Some(run) => Some(candidates_of(&run)),
                None => load_pool_opt(&cfg.pool)?,
            };
            let provider = pipeline::embedding_provider(&cfg)?;
            let tag = args.tag.as_deref().unwrap_or("semantic");
            pipeline::semantic_topics(&store, &topics, provider.as_ref(), pool.as_ref(), tag)?
        }
    };
    save_run(&args.out, &run)?;
    Ok(())
}

fn candidates_of(run: &Run) -> CandidatePool {
    run.iter()
        .map(|(topic, list)| {
            (
                topic.clone(),
                list.doc_ids().map(str::to_owned).collect::<BTreeSet<_>>(),
            )
        })
        .collect()
}

fn cmd_fuse(args: FuseArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    set(&mut cfg.fusion.rrf_k, args.rrf_k);
    set(&mut cfg.fusion.depth, args.depth);
    let runs = args
        .runs
        .iter()
        .map(|p| Ok((p.display().to_string(), load_run(required(p, "run")?)?)))
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<(&str, &Run)> = runs.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let fused = fuse_runs(&inputs, cfg.fusion.rrf_k, cfg.fusion.depth, &args.tag)?;
    save_run(&args.out, &fused)?;
    Ok(())
}

/// The tag a run file carries, or its file stem when it has no lines.
fn run_tag(path: &Path, run: &Run) -> String {
    run.values()
        .next()
        .map(|l| l.run_tag().to_owned())
        .unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into_owned())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let has_config = args.config.config.is_some();
    let mut cfg = args.config.load()?;
    args.eval.apply(&mut cfg);
    let qrels_path = cfg
        .qrels
        .as_deref()
        .ok_or_else(|| usage("no qrels given; pass --qrels or set it in --config"))?;
    let qrels = load_qrels(required(qrels_path, "qrels")?, cfg.eval.max_usefulness)?;
    let mut runs = Vec::with_capacity(args.runs.len());
    for p in &args.runs {
        let run = load_run(required(p, "run")?)?;
        runs.push((run_tag(p, &run), run));
    }
    let baseline = match (&args.eval.baseline, has_config) {
        (Some(b), _) => b.clone(),
        (None, true) => cfg.baseline.clone(),
        (None, false) => runs[0].0.clone(),
    };
    let table = evaluate_runs(&runs, &qrels, &cfg.eval.settings(), &baseline)?;
    print!("{}", table.render_text());
    if let Some(tsv) = &args.tsv {
        fs::write(tsv, table.render_tsv()).with_context(|| format!("writing {}", tsv.display()))?;
    }
    Ok(())
}

fn cmd_run_all(args: RunAllArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    set(&mut cfg.corpus, args.corpus);
    set(&mut cfg.topics, args.topics);
    set_path(&mut cfg.pool, &args.pool);
    set_path(&mut cfg.qe_base_scores, &args.qe_base_scores);
    set_path(&mut cfg.qe_large_scores, &args.qe_large_scores);
    set(&mut cfg.output_dir, args.output_dir);
    args.bm25.apply(&mut cfg);
    set(&mut cfg.bm25.depth, args.depth);
    args.semantic.apply(&mut cfg);
    set(&mut cfg.fusion.rrf_k, args.rrf_k);
    set(&mut cfg.fusion.depth, args.fusion_depth);
    args.eval.apply(&mut cfg);
    required(&cfg.corpus, "corpus")?;
    required(&cfg.topics, "topics")?;

    let report = pipeline::run_all(&cfg)?;
    println!("indexed {} documents, {} terms", report.index_docs, report.index_terms);
    for (comp, missing) in &report.missing_scores {
        if *missing > 0 {
            warn!("{comp}: {missing} ranked documents had no criterion scores");
        }
    }
    for f in &report.run_files {
        println!("wrote {}", f.display());
    }
    println!("manifest {}", report.manifest.display());
    if let Some(table) = &report.table {
        print!("\n{}", table.render_text());
    }
    Ok(())
}

fn cmd_fixture(args: FixtureArgs) -> Result<()> {
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    SyntheticFixture::generate().write_to(&args.out)?;
    println!("wrote fixture to {}", args.out.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<misinfo_core::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    let result = match cli.command {
        Command::Index(a) => cmd_index(a),
        Command::Search(a) => cmd_search(a),
        Command::Rerank(a) => cmd_rerank(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Eval(a) => cmd_eval(a),
        Command::RunAll(a) => cmd_run_all(a),
        Command::Fixture(a) => cmd_fixture(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
