use std::fs;
use std::path::{Path, PathBuf};

use misinfo_core::corpus_io::{
    load_embeddings, load_run, parse_criterion_scores, write_corpus, write_embeddings, write_topics,
};
use misinfo_core::fixture::SyntheticFixture;
use misinfo_core::fusion::Component;
use misinfo_core::pipeline::{run_all, semantic_topics, PipelineConfig, RunStanza, MANIFEST_FILE, RUNS_DIR};
use misinfo_core::quality::quality_similarity;
use misinfo_core::semantic::FileEmbeddings;
use misinfo_core::{Document, DocumentStore, EmbeddingRecord, Error, Topic};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic")
}

fn fixture_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(fixture_dir().join("config.toml")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

#[test]
fn bundled_fixture_matches_generator() {
    let tmp = tempfile::tempdir().unwrap();
    SyntheticFixture::generate().write_to(tmp.path()).unwrap();
    for entry in fs::read_dir(tmp.path()).unwrap() {
        let entry = entry.unwrap();
        let committed = fixture_dir().join(entry.file_name());
        assert_eq!(
            fs::read(entry.path()).unwrap(),
            fs::read(&committed).unwrap(),
            "{} is stale; regenerate with `misinfo fixture --out fixtures/synthetic`",
            committed.display()
        );
    }
}

#[test]
fn manifest_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let first = run_all(&fixture_config(&tmp.path().join("a"))).unwrap();
    let manifest = fs::read_to_string(&first.manifest).unwrap();
    for key in [
        "k1 = 0.9",
        "b = 0.4",
        "rrf_k = 60.0",
        "persistence = 0.95",
        "hash_seed",
        "max_sentences = 20",
    ] {
        assert!(manifest.contains(key), "manifest lacks `{key}`");
    }

    let mut replay = PipelineConfig::load(&first.manifest).unwrap();
    assert_eq!(replay.runs.len(), 6);
    replay.output_dir = tmp.path().join("b");
    let second = run_all(&replay).unwrap();
    for (a, b) in first.run_files.iter().zip(&second.run_files) {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{}", a.display());
    }
    let tsv = |dir: &str| fs::read(tmp.path().join(dir).join("eval.tsv")).unwrap();
    assert_eq!(tsv("a"), tsv("b"));
    let strip = |s: String| {
        s.replace(&tmp.path().join("a").display().to_string(), "OUT")
            .replace(&tmp.path().join("b").display().to_string(), "OUT")
    };
    assert_eq!(strip(manifest), strip(fs::read_to_string(&second.manifest).unwrap()));
}

#[test]
fn single_run_config_gives_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(tmp.path());
    cfg.runs = vec![RunStanza {
        tag: "upv_bm25".into(),
        components: vec![Component::Bm25],
        rrf_k: None,
    }];
    let report = run_all(&cfg).unwrap();
    assert_eq!(report.run_files.len(), 1);
    let table = report.table.unwrap();
    assert_eq!(table.rows.len(), 1);
    assert!(table.rows[0].cells.iter().all(|c| !c.better_than_baseline));
    assert_eq!(fs::read_dir(tmp.path().join(RUNS_DIR)).unwrap().count(), 1);
    assert!(tmp.path().join(MANIFEST_FILE).is_file());
}

#[test]
fn validation_names_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(tmp.path());
    cfg.qe_large_scores = None;
    let err = run_all(&cfg).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("qe_large"), "{err}");

    let mut cfg = fixture_config(tmp.path());
    cfg.corpus = tmp.path().join("absent.jsonl");
    let err = run_all(&cfg).unwrap_err();
    assert!(err.to_string().contains("absent.jsonl"), "{err}");

    let mut cfg = fixture_config(tmp.path());
    cfg.runs.push(cfg.runs[0].clone());
    assert!(run_all(&cfg).unwrap_err().to_string().contains("used twice"));

    let mut cfg = fixture_config(tmp.path());
    cfg.baseline = "nope".into();
    assert!(run_all(&cfg).is_err());

    assert!(PipelineConfig::from_toml("corpus = \"c\"\ntopics = \"t\"\nunknown_key = 1\n").is_err());
}

fn write_embedding_file(path: &Path, records: &[EmbeddingRecord]) {
    let mut buf = Vec::new();
    write_embeddings(&mut buf, records[0].dim(), records).unwrap();
    fs::write(path, buf).unwrap();
}

#[test]
fn stage_failure_reports_stage_and_topic() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = SyntheticFixture::generate();
    let topics: Vec<EmbeddingRecord> = fx
        .topics
        .iter()
        .map(|t| EmbeddingRecord {
            id: t.topic_id.clone(),
            vector: vec![1.0, 0.0],
        })
        .collect();
    // doc199 has no vector
    let docs: Vec<EmbeddingRecord> = fx.docs[..199]
        .iter()
        .map(|d| EmbeddingRecord {
            id: d.doc_id.clone(),
            vector: vec![0.5, 0.5],
        })
        .collect();
    write_embedding_file(&tmp.path().join("t.emb"), &topics);
    write_embedding_file(&tmp.path().join("d.emb"), &docs);
    let mut cfg = fixture_config(&tmp.path().join("out"));
    cfg.topic_embeddings = Some(tmp.path().join("t.emb"));
    cfg.doc_embeddings = Some(tmp.path().join("d.emb"));
    let err = run_all(&cfg).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("stage `semantic`") && msg.contains("topic 101") && msg.contains("doc199"),
        "{msg}"
    );
    assert!(matches!(err, Error::Stage { .. }));
}

#[test]
fn exporter_files_are_accepted() {
    // as written by the model exporter: criteria (1, 2, 7, 8) then the model id
    let scores = "doc1 0.900000 0.800000 0.700000 0.950000 roberta-base-qe\n\
                  doc2 0.100000 0.000000 1.000000 0.500000 roberta-base-qe\n";
    let parsed = parse_criterion_scores(scores.as_bytes(), Path::new("qe.scores")).unwrap();
    assert_eq!(parsed["doc1"].probs(), [0.9, 0.8, 0.7, 0.95]);
    assert_eq!(parsed["doc2"].source_tag, "roberta-base-qe");
    assert!(quality_similarity(&parsed["doc1"]) > quality_similarity(&parsed["doc2"]));
    let bad = "doc1 0.9 0.8 1.7 0.95 qe\n";
    assert!(parse_criterion_scores(bad.as_bytes(), Path::new("qe.scores")).is_err());

    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("topics.emb"), "dim 3\n101 1.0 0.0 0.0\n").unwrap();
    fs::write(
        tmp.path().join("docs.emb"),
        "3\na 0.1 0.9 0.0\nb 0.9 0.1 0.0\nc -1.0 0.0 0.0\n",
    )
    .unwrap();
    let provider = FileEmbeddings::new(
        load_embeddings(tmp.path().join("topics.emb")).unwrap(),
        load_embeddings(tmp.path().join("docs.emb")).unwrap(),
    )
    .unwrap();
    let docs: Vec<Document> = ["a", "b", "c"]
        .into_iter()
        .map(|id| Document {
            doc_id: id.into(),
            url: String::new(),
            text: String::new(),
        })
        .collect();
    let store = DocumentStore::new(docs).unwrap();
    let topics = vec![Topic {
        topic_id: "101".into(),
        query: "q".into(),
        description: String::new(),
    }];
    let run = semantic_topics(&store, &topics, &provider, None, "sem").unwrap();
    assert_eq!(run["101"].doc_ids().collect::<Vec<_>>(), ["b", "a", "c"]);
}

#[test]
fn run_all_without_qrels_skips_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = SyntheticFixture::generate();
    let mut corpus = Vec::new();
    write_corpus(&mut corpus, &fx.docs[..20]).unwrap();
    fs::write(tmp.path().join("c.jsonl"), corpus).unwrap();
    let mut topics = Vec::new();
    write_topics(&mut topics, &fx.topics).unwrap();
    fs::write(tmp.path().join("t.jsonl"), topics).unwrap();
    let mut cfg = PipelineConfig::new(tmp.path().join("c.jsonl"), tmp.path().join("t.jsonl"));
    cfg.output_dir = tmp.path().join("out");
    cfg.runs = vec![RunStanza {
        tag: "sem_only".into(),
        components: vec![Component::Semantic],
        rrf_k: None,
    }];
    let report = run_all(&cfg).unwrap();
    assert!(report.table.is_none());
    let run = load_run(&report.run_files[0]).unwrap();
    assert_eq!(run.len(), 5);
    assert!(run.values().all(|l| l.len() == 20 && l.run_tag() == "sem_only"));
}
