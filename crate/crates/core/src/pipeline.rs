//! End-to-end orchestration: index → retrieve → re-rank → fuse → evaluate.
//!
//! A pipeline is described by a TOML file. Relative paths resolve against
//! the file's directory. Every run writes `manifest.toml` next to its
//! outputs: the fully resolved configuration, itself a valid config that
//! reproduces the same bytes.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bm25::{Bm25Params, InvertedIndex, DEFAULT_DEPTH};
use crate::corpus_io::{
    load_corpus, load_embeddings, load_pool, load_qrels, load_topics, save_run, CandidatePool, DEFAULT_MAX_USEFULNESS,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_runs, EvalSettings, EvalTable};
use crate::fusion::{build_run, standard_runs, Component, FusionConfig, DEFAULT_FUSION_DEPTH, DEFAULT_RRF_K};
use crate::model::{Document, DocumentStore, Qrels, Run, Topic};
use crate::quality::{load_criterion_scores, rerank_by_quality, CriterionScores};
use crate::semantic::{
    semantic_rank, EmbeddingProvider, FileEmbeddings, HashedTfEmbedder, TopicField, DEFAULT_HASH_DIM,
    DEFAULT_MAX_SENTENCES, HASH_SEED,
};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RUNS_DIR: &str = "runs";
pub const EVAL_TEXT_FILE: &str = "eval.txt";
pub const EVAL_TSV_FILE: &str = "eval.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Section {
    pub k1: f64,
    pub b: f64,
    pub depth: usize,
}

impl Default for Bm25Section {
    fn default() -> Self {
        let p = Bm25Params::default();
        Self {
            k1: p.k1,
            b: p.b,
            depth: DEFAULT_DEPTH,
        }
    }
}

impl Bm25Section {
    pub fn params(&self) -> Bm25Params {
        Bm25Params { k1: self.k1, b: self.b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticSection {
    pub max_sentences: usize,
    pub topic_field: TopicField,
    /// Dimension of the built-in hashed embedder (used without embedding files).
    pub hash_dim: usize,
    /// Written as a hex string; TOML integers stop at `i64::MAX`.
    #[serde(with = "hex_seed")]
    pub hash_seed: u64,
}

mod hex_seed {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{seed:#018x}"))
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(v),
            Raw::Text(t) => {
                let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
                    Some(hex) => u64::from_str_radix(hex, 16),
                    None => t.parse(),
                };
                parsed.map_err(|_| de::Error::custom(format!("hash_seed `{t}` is not a u64")))
            }
        }
    }
}

impl Default for SemanticSection {
    fn default() -> Self {
        Self {
            max_sentences: DEFAULT_MAX_SENTENCES,
            topic_field: TopicField::Query,
            hash_dim: DEFAULT_HASH_DIM,
            hash_seed: HASH_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub rrf_k: f64,
    pub depth: usize,
}

impl Default for FusionSection {
    fn default() -> Self {
        Self {
            rrf_k: DEFAULT_RRF_K,
            depth: DEFAULT_FUSION_DEPTH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub max_usefulness: u32,
    pub usefulness_threshold: u32,
    pub depth: usize,
    pub persistence: f64,
    pub compat_depth: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let s = EvalSettings::default();
        Self {
            max_usefulness: DEFAULT_MAX_USEFULNESS,
            usefulness_threshold: s.usefulness_threshold,
            depth: s.depth,
            persistence: s.persistence,
            compat_depth: s.compat_depth,
        }
    }
}

impl EvalSection {
    pub fn settings(&self) -> EvalSettings {
        EvalSettings {
            depth: self.depth,
            usefulness_threshold: self.usefulness_threshold,
            persistence: self.persistence,
            compat_depth: self.compat_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunStanza {
    pub tag: String,
    pub components: Vec<Component>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rrf_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub topics: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qrels: Option<PathBuf>,
    /// Per-topic candidate allowlist applied to BM25 and semantic ranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qe_base_scores: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qe_large_scores: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_embeddings: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_baseline")]
    pub baseline: String,
    #[serde(default)]
    pub bm25: Bm25Section,
    #[serde(default)]
    pub semantic: SemanticSection,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub eval: EvalSection,
    /// Empty means the six standard runs.
    #[serde(default, rename = "run", skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunStanza>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_baseline() -> String {
    "upv_bm25".to_owned()
}

impl PipelineConfig {
    /// A config with every optional key at its default.
    pub fn new(corpus: impl Into<PathBuf>, topics: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
            topics: topics.into(),
            qrels: None,
            pool: None,
            qe_base_scores: None,
            qe_large_scores: None,
            doc_embeddings: None,
            topic_embeddings: None,
            output_dir: default_output_dir(),
            baseline: default_baseline(),
            bm25: Bm25Section::default(),
            semantic: SemanticSection::default(),
            fusion: FusionSection::default(),
            eval: EvalSection::default(),
            runs: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid("config", e.to_string()))
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.corpus);
        join(&mut self.topics);
        join(&mut self.output_dir);
        for p in [
            &mut self.qrels,
            &mut self.pool,
            &mut self.qe_base_scores,
            &mut self.qe_large_scores,
            &mut self.doc_embeddings,
            &mut self.topic_embeddings,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
    }

    pub fn fusion_configs(&self) -> Vec<FusionConfig> {
        if self.runs.is_empty() {
            return standard_runs(self.fusion.rrf_k);
        }
        self.runs
            .iter()
            .map(|r| FusionConfig {
                tag: r.tag.clone(),
                components: r.components.clone(),
                rrf_k: r.rrf_k.unwrap_or(self.fusion.rrf_k),
            })
            .collect()
    }

    fn input_paths(&self) -> Vec<(&'static str, &Path)> {
        let mut out = vec![("corpus", self.corpus.as_path()), ("topics", self.topics.as_path())];
        let optional = [
            ("qrels", &self.qrels),
            ("pool", &self.pool),
            ("qe_base_scores", &self.qe_base_scores),
            ("qe_large_scores", &self.qe_large_scores),
            ("doc_embeddings", &self.doc_embeddings),
            ("topic_embeddings", &self.topic_embeddings),
        ];
        out.extend(optional.into_iter().filter_map(|(k, p)| p.as_deref().map(|p| (k, p))));
        out
    }

    /// Checks everything that can be checked before any stage runs.
    pub fn validate(&self) -> Result<()> {
        for (key, path) in self.input_paths() {
            if !path.is_file() {
                return Err(Error::invalid(
                    "config",
                    format!("{key} file `{}` does not exist", path.display()),
                ));
            }
        }
        self.bm25.params().validate()?;
        if self.bm25.depth == 0 || self.fusion.depth == 0 {
            return Err(Error::invalid(
                "config",
                "retrieval and fusion depth must be at least 1",
            ));
        }
        if self.semantic.max_sentences == 0 || self.semantic.hash_dim == 0 {
            return Err(Error::invalid(
                "config",
                "semantic max_sentences and hash_dim must be at least 1",
            ));
        }
        if self.doc_embeddings.is_some() != self.topic_embeddings.is_some() {
            return Err(Error::invalid(
                "config",
                "doc_embeddings and topic_embeddings must be given together",
            ));
        }
        self.eval.settings().validate()?;

        let configs = self.fusion_configs();
        let mut tags = HashSet::new();
        for c in &configs {
            c.validate()?;
            if !tags.insert(c.tag.as_str()) {
                return Err(Error::invalid("config", format!("run tag `{}` is used twice", c.tag)));
            }
            for comp in &c.components {
                let missing = match comp {
                    Component::QeBase => self.qe_base_scores.is_none(),
                    Component::QeLarge => self.qe_large_scores.is_none(),
                    _ => false,
                };
                if missing {
                    return Err(Error::invalid(
                        "config",
                        format!("run `{}` uses `{comp}` but no {comp}_scores file is configured", c.tag),
                    ));
                }
            }
        }
        if self.qrels.is_some() && !tags.contains(self.baseline.as_str()) {
            return Err(Error::invalid(
                "config",
                format!("baseline `{}` is not a configured run", self.baseline),
            ));
        }
        Ok(())
    }

    /// The same configuration with absolute input paths.
    pub fn absolutized(&self) -> Result<Self> {
        let mut cfg = self.clone();
        let abs = |p: &mut PathBuf| -> Result<()> {
            *p = fs::canonicalize(&*p).map_err(|e| Error::io(&*p, e))?;
            Ok(())
        };
        abs(&mut cfg.corpus)?;
        abs(&mut cfg.topics)?;
        for p in [
            &mut cfg.qrels,
            &mut cfg.pool,
            &mut cfg.qe_base_scores,
            &mut cfg.qe_large_scores,
            &mut cfg.doc_embeddings,
            &mut cfg.topic_embeddings,
        ]
        .into_iter()
        .flatten()
        {
            abs(p)?;
        }
        if cfg.output_dir.is_relative() {
            let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
            cfg.output_dir = cwd.join(&cfg.output_dir);
        }
        // the run matrix is spelled out so the manifest stands alone
        if cfg.runs.is_empty() {
            cfg.runs = cfg
                .fusion_configs()
                .into_iter()
                .map(|c| RunStanza {
                    tag: c.tag,
                    components: c.components,
                    rrf_k: Some(c.rrf_k),
                })
                .collect();
        }
        Ok(cfg)
    }
}

pub fn save_index(path: impl AsRef<Path>, index: &InvertedIndex) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    index.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<InvertedIndex> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    InvertedIndex::read_from(BufReader::new(file))
}

/// BM25 top-`depth` for every topic, in parallel. On failure the first
/// failing topic in input order is reported.
pub fn search_topics(
    index: &InvertedIndex,
    topics: &[Topic],
    params: Bm25Params,
    depth: usize,
    pool: Option<&CandidatePool>,
    run_tag: &str,
) -> Result<Run> {
    let empty = BTreeSet::new();
    topics
        .par_iter()
        .map(|t| {
            let allow = pool.map(|p| p.get(&t.topic_id).unwrap_or(&empty));
            index
                .search(&t.topic_id, &t.query, params, depth, allow, run_tag)
                .map(|l| (t.topic_id.clone(), l))
                .map_err(|e| e.in_stage("search", Some(&t.topic_id)))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Semantic ranking of each topic's candidate pool (the whole corpus when
/// no pool is given).
pub fn semantic_topics(
    store: &DocumentStore,
    topics: &[Topic],
    provider: &dyn EmbeddingProvider,
    pool: Option<&CandidatePool>,
    run_tag: &str,
) -> Result<Run> {
    topics
        .par_iter()
        .map(|t| {
            let candidates: Vec<&Document> = match pool {
                Some(p) => p
                    .get(&t.topic_id)
                    .into_iter()
                    .flatten()
                    .filter_map(|id| store.get(id))
                    .collect(),
                None => store.iter().collect(),
            };
            semantic_rank(t, &candidates, provider, run_tag)
                .map(|l| (t.topic_id.clone(), l))
                .map_err(|e| e.in_stage("semantic", Some(&t.topic_id)))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Quality re-ranking of every list in `base`; also returns how many
/// documents lacked criterion scores.
pub fn quality_topics(base: &Run, scores: &CriterionScores, run_tag: &str) -> Result<(Run, usize)> {
    let mut missing = 0;
    let mut out = Run::new();
    for (topic, list) in base {
        let r = rerank_by_quality(list, scores, run_tag).map_err(|e| e.in_stage("quality", Some(topic)))?;
        missing += r.missing;
        out.insert(topic.clone(), r.list);
    }
    Ok((out, missing))
}

pub fn embedding_provider(cfg: &PipelineConfig) -> Result<Box<dyn EmbeddingProvider>> {
    match (&cfg.topic_embeddings, &cfg.doc_embeddings) {
        (Some(t), Some(d)) => Ok(Box::new(FileEmbeddings::new(load_embeddings(t)?, load_embeddings(d)?)?)),
        _ => Ok(Box::new(HashedTfEmbedder {
            dim: cfg.semantic.hash_dim,
            max_sentences: cfg.semantic.max_sentences,
            topic_field: cfg.semantic.topic_field,
            seed: cfg.semantic.hash_seed,
        })),
    }
}

#[derive(Debug)]
pub struct RunAllReport {
    pub run_files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub table: Option<EvalTable>,
    /// Quality-reranked documents that had no criterion scores, per component.
    pub missing_scores: Vec<(Component, usize)>,
    pub index_docs: usize,
    pub index_terms: usize,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => e.in_stage(name, None),
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents).map_err(|e| Error::io(path, e))
}

pub fn run_all(config: &PipelineConfig) -> Result<RunAllReport> {
    config.validate()?;
    let cfg = config.absolutized()?;
    let fusion_configs = cfg.fusion_configs();
    let needed: BTreeSet<Component> = fusion_configs
        .iter()
        .flat_map(|c| c.components.iter().copied())
        .collect();

    let store = stage("load", load_corpus(&cfg.corpus))?;
    let topics = stage("load", load_topics(&cfg.topics))?;
    let pool = cfg.pool.as_ref().map(load_pool).transpose();
    let pool = stage("load", pool)?;
    let qrels: Option<Qrels> = stage(
        "load",
        cfg.qrels
            .as_ref()
            .map(|q| load_qrels(q, cfg.eval.max_usefulness))
            .transpose(),
    )?;

    let index = stage("index", InvertedIndex::build(&store, cfg.bm25.params()))?;
    let bm25 = stage(
        "search",
        search_topics(
            &index,
            &topics,
            cfg.bm25.params(),
            cfg.bm25.depth,
            pool.as_ref(),
            "bm25",
        ),
    )?;

    let mut components: HashMap<Component, Run> = HashMap::new();
    let mut missing_scores = Vec::new();
    if needed.contains(&Component::Semantic) {
        let provider = stage("semantic", embedding_provider(&cfg))?;
        let run = stage(
            "semantic",
            semantic_topics(&store, &topics, provider.as_ref(), pool.as_ref(), "semantic"),
        )?;
        components.insert(Component::Semantic, run);
    }
    for (comp, path) in [
        (Component::QeBase, &cfg.qe_base_scores),
        (Component::QeLarge, &cfg.qe_large_scores),
    ] {
        if let (true, Some(path)) = (needed.contains(&comp), path) {
            let scores = stage("quality", load_criterion_scores(path))?;
            let (run, missing) = stage("quality", quality_topics(&bm25, &scores, comp.name()))?;
            missing_scores.push((comp, missing));
            components.insert(comp, run);
        }
    }
    components.insert(Component::Bm25, bm25);

    let runs_dir = cfg.output_dir.join(RUNS_DIR);
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    let mut runs = Vec::with_capacity(fusion_configs.len());
    let mut run_files = Vec::with_capacity(fusion_configs.len());
    for fc in &fusion_configs {
        let run = stage("fuse", build_run(fc, &components, cfg.fusion.depth))?;
        let path = runs_dir.join(format!("{}.run", fc.tag));
        save_run(&path, &run)?;
        run_files.push(path);
        runs.push((fc.tag.clone(), run));
    }

    let table = match &qrels {
        Some(q) => {
            let table = stage("eval", evaluate_runs(&runs, q, &cfg.eval.settings(), &cfg.baseline))?;
            write_file(&cfg.output_dir.join(EVAL_TEXT_FILE), table.render_text().as_bytes())?;
            write_file(&cfg.output_dir.join(EVAL_TSV_FILE), table.render_tsv().as_bytes())?;
            Some(table)
        }
        None => None,
    };

    let manifest = cfg.output_dir.join(MANIFEST_FILE);
    let body = format!(
        "# misinfo {} run manifest; usable as a config to reproduce these outputs\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.to_toml()?
    );
    write_file(&manifest, body.as_bytes())?;

    Ok(RunAllReport {
        run_files,
        manifest,
        table,
        missing_scores,
        index_docs: index.num_docs(),
        index_terms: index.num_terms(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_round_trip() {
        let cfg = PipelineConfig::from_toml("corpus = \"c.jsonl\"\ntopics = \"t.jsonl\"\n").unwrap();
        assert_eq!(cfg.bm25.k1, 0.9);
        assert_eq!(cfg.bm25.b, 0.4);
        assert_eq!(cfg.bm25.depth, 1000);
        assert_eq!(cfg.fusion.rrf_k, 60.0);
        assert_eq!(cfg.eval.persistence, 0.95);
        assert_eq!(cfg.semantic.max_sentences, 20);
        assert_eq!(cfg.baseline, "upv_bm25");
        assert_eq!(cfg.fusion_configs().len(), 6);
        let text = cfg.to_toml().unwrap();
        assert!(text.contains("hash_seed = \"0xcbf29ce484222325\""), "{text}");
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hash_seed_forms() {
        let seed = |v: &str| {
            PipelineConfig::from_toml(&format!(
                "corpus = \"c\"\ntopics = \"t\"\n[semantic]\nhash_seed = {v}\n"
            ))
            .map(|c| c.semantic.hash_seed)
        };
        assert_eq!(seed("42").unwrap(), 42);
        assert_eq!(seed("\"0x2a\"").unwrap(), 42);
        assert_eq!(seed("\"18446744073709551615\"").unwrap(), u64::MAX);
        assert!(seed("\"0xzz\"").is_err());
        assert!(seed("-1").is_err());
    }

    #[test]
    fn run_stanzas_parse() {
        let text = r#"
corpus = "c"
topics = "t"
[fusion]
rrf_k = 10

[[run]]
tag = "a"
components = ["bm25"]

[[run]]
tag = "b"
components = ["bm25", "semantic"]
rrf_k = 30
"#;
        let cfg = PipelineConfig::from_toml(text).unwrap();
        let fc = cfg.fusion_configs();
        assert_eq!(fc[0].rrf_k, 10.0);
        assert_eq!(fc[1].rrf_k, 30.0);
        assert_eq!(fc[1].components, [Component::Bm25, Component::Semantic]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("corpus = \"c\"\ntopics = \"t\"\nkay1 = 3\n").is_err());
        assert!(PipelineConfig::from_toml("corpus = \"c\"\ntopics = \"t\"\n[bm25]\nk = 3\n").is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut cfg = PipelineConfig::new("c.jsonl", "/abs/t.jsonl");
        cfg.qrels = Some("q.txt".into());
        cfg.resolve_paths(Path::new("/data/fx"));
        assert_eq!(cfg.corpus, Path::new("/data/fx/c.jsonl"));
        assert_eq!(cfg.topics, Path::new("/abs/t.jsonl"));
        assert_eq!(cfg.qrels.unwrap(), Path::new("/data/fx/q.txt"));
    }

    #[test]
    fn validation_names_missing_path() {
        let cfg = PipelineConfig::new("/definitely/not/here.jsonl", "/nope.jsonl");
        let err = cfg.validate().unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("/definitely/not/here.jsonl"), "{err}");
    }
}
