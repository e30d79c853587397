//! Readers and writers for every file the pipeline consumes or produces.
//!
//! | file            | layout                                                   |
//! |-----------------|----------------------------------------------------------|
//! | corpus          | JSON lines: `{"doc_id", "url", "text"}`                  |
//! | topics          | JSON lines: `{"topic_id", "query", "description"}`       |
//! | qrels           | `topic_id 0 doc_id usefulness correctness credibility`   |
//! | run             | `topic_id Q0 doc_id rank score run_tag`                  |
//! | criterion score | `doc_id p1 p2 p7 p8 source_tag`                          |
//! | embeddings      | header `dim`, then `id v1 .. v_dim`                      |
//! | candidate pool  | `topic_id doc_id`                                        |
//!
//! Blank lines are skipped everywhere. Every parse error carries the
//! 1-based line number.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_id, Aspect, AspectJudgment, CriterionVector, Document, DocumentStore, EmbeddingRecord, Qrels, RankedList,
    Run, RunEntry, Topic,
};

/// Default maximum usefulness grade accepted in qrels.
pub const DEFAULT_MAX_USEFULNESS: u32 = 2;
/// Default usefulness grade at or above which a document counts as useful.
pub const DEFAULT_USEFULNESS_THRESHOLD: u32 = 1;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Yields `(line_number, line)` for non-blank lines.
fn numbered_lines<'a, R: BufRead + 'a>(
    reader: R,
    path: &'a Path,
) -> impl Iterator<Item = Result<(usize, String)>> + 'a {
    reader.lines().enumerate().filter_map(move |(i, line)| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok((i + 1, l))),
        Err(e) => Some(Err(Error::io(path, e))),
    })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<DocumentStore> {
    let path = path.as_ref();
    parse_corpus(open(path)?, path)
}

pub fn parse_corpus<R: BufRead>(reader: R, path: &Path) -> Result<DocumentStore> {
    let mut docs = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for item in numbered_lines(reader, path) {
        let (line_no, line) = item?;
        let doc: Document =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, line_no, format!("malformed record: {e}")))?;
        validate_id("doc_id", &doc.doc_id).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if let Some(prev) = first_seen.insert(doc.doc_id.clone(), line_no) {
            return Err(Error::Duplicate {
                path: path.into(),
                line: line_no,
                what: "doc_id",
                id: format!("{} (first seen on line {prev})", doc.doc_id),
            });
        }
        docs.push(doc);
    }
    DocumentStore::new(docs)
}

pub fn write_corpus<W: Write>(mut out: W, docs: &[Document]) -> std::io::Result<()> {
    for d in docs {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_topics(path: impl AsRef<Path>) -> Result<Vec<Topic>> {
    let path = path.as_ref();
    parse_topics(open(path)?, path)
}

pub fn parse_topics<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Topic>> {
    let mut topics = Vec::new();
    let mut seen = HashSet::new();
    for item in numbered_lines(reader, path) {
        let (line_no, line) = item?;
        let topic: Topic =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, line_no, format!("malformed record: {e}")))?;
        validate_id("topic_id", &topic.topic_id).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if topic.query.trim().is_empty() {
            return Err(Error::parse(path, line_no, "empty query"));
        }
        if !seen.insert(topic.topic_id.clone()) {
            return Err(Error::Duplicate {
                path: path.into(),
                line: line_no,
                what: "topic_id",
                id: topic.topic_id,
            });
        }
        topics.push(topic);
    }
    Ok(topics)
}

pub fn write_topics<W: Write>(mut out: W, topics: &[Topic]) -> std::io::Result<()> {
    for t in topics {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_qrels(path: impl AsRef<Path>, max_usefulness: u32) -> Result<Qrels> {
    let path = path.as_ref();
    parse_qrels(open(path)?, path, max_usefulness)
}

fn parse_binary_label(token: &str) -> Option<Option<bool>> {
    match token {
        "1" => Some(Some(true)),
        "0" => Some(Some(false)),
        "-1" => Some(None),
        _ => None,
    }
}

pub fn parse_qrels<R: BufRead>(reader: R, path: &Path, max_usefulness: u32) -> Result<Qrels> {
    let mut qrels = Qrels::default();
    for item in numbered_lines(reader, path) {
        let (line_no, line) = item?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [topic_id, _iter, doc_id, usefulness, correctness, credibility] = fields[..] else {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 6 columns, found {}", fields.len()),
            ));
        };
        let usefulness: u32 = usefulness.parse().map_err(|_| {
            Error::parse(
                path,
                line_no,
                format!("usefulness `{usefulness}` is not a non-negative integer"),
            )
        })?;
        if usefulness > max_usefulness {
            return Err(Error::parse(
                path,
                line_no,
                format!("usefulness {usefulness} exceeds maximum grade {max_usefulness}"),
            ));
        }
        let correctness = parse_binary_label(correctness).ok_or_else(|| {
            Error::parse(
                path,
                line_no,
                format!("correctness `{correctness}` is not one of 1, 0, -1"),
            )
        })?;
        let credibility = parse_binary_label(credibility).ok_or_else(|| {
            Error::parse(
                path,
                line_no,
                format!("credibility `{credibility}` is not one of 1, 0, -1"),
            )
        })?;
        let judgment = AspectJudgment {
            topic_id: topic_id.to_owned(),
            doc_id: doc_id.to_owned(),
            usefulness,
            correctness,
            credibility,
        };
        if !qrels.insert(judgment) {
            return Err(Error::Duplicate {
                path: path.into(),
                line: line_no,
                what: "judgment",
                id: format!("{topic_id} {doc_id}"),
            });
        }
    }
    Ok(qrels)
}

pub fn write_qrels<W: Write>(mut out: W, qrels: &Qrels) -> std::io::Result<()> {
    let label = |l: Option<bool>| match l {
        Some(true) => "1",
        Some(false) => "0",
        None => "-1",
    };
    for j in qrels.judgments() {
        writeln!(
            out,
            "{} 0 {} {} {} {}",
            j.topic_id,
            j.doc_id,
            j.usefulness,
            label(j.correctness),
            label(j.credibility)
        )?;
    }
    Ok(())
}

/// The binary aspect combinations used to derive relevance from judgments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AspectCombo {
    Useful,
    UsefulCorrect,
    UsefulCredible,
    UsefulCorrectCredible,
}

impl AspectCombo {
    pub fn aspects(self) -> &'static [Aspect] {
        match self {
            AspectCombo::Useful => &[Aspect::Useful],
            AspectCombo::UsefulCorrect => &[Aspect::Useful, Aspect::Correct],
            AspectCombo::UsefulCredible => &[Aspect::Useful, Aspect::Credible],
            AspectCombo::UsefulCorrectCredible => &[Aspect::Useful, Aspect::Correct, Aspect::Credible],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AspectCombo::Useful => "useful",
            AspectCombo::UsefulCorrect => "useful-correct",
            AspectCombo::UsefulCredible => "useful-credible",
            AspectCombo::UsefulCorrectCredible => "useful-correct-credible",
        }
    }
}

impl fmt::Display for AspectCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AspectCombo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            AspectCombo::Useful,
            AspectCombo::UsefulCorrect,
            AspectCombo::UsefulCredible,
            AspectCombo::UsefulCorrectCredible,
        ]
        .into_iter()
        .find(|c| c.name() == s)
        .ok_or_else(|| Error::invalid("aspect combination", format!("unknown combination `{s}`")))
    }
}

/// Relevant doc ids per judged topic. Every judged topic has an entry,
/// possibly empty.
pub type BinaryQrels = BTreeMap<String, BTreeSet<String>>;

/// A document is relevant iff every aspect in `aspects` holds.
pub fn derive_relevance(qrels: &Qrels, aspects: &[Aspect], usefulness_threshold: u32) -> BinaryQrels {
    qrels
        .topic_ids()
        .map(|topic_id| {
            let relevant = qrels
                .topic(topic_id)
                .into_iter()
                .flat_map(|m| m.values())
                .filter(|j| aspects.iter().all(|&a| j.satisfies(a, usefulness_threshold)))
                .map(|j| j.doc_id.clone())
                .collect();
            (topic_id.to_owned(), relevant)
        })
        .collect()
}

pub fn derive_binary_qrels(qrels: &Qrels, combo: AspectCombo, usefulness_threshold: u32) -> BinaryQrels {
    derive_relevance(qrels, combo.aspects(), usefulness_threshold)
}

/// Formats one run line exactly: `topic_id Q0 doc_id rank score run_tag`
/// with the score at six decimal places.
pub fn format_run_line(topic_id: &str, entry: &RunEntry, run_tag: &str) -> String {
    format!(
        "{} Q0 {} {} {:.6} {}",
        topic_id, entry.doc_id, entry.rank, entry.score, run_tag
    )
}

pub fn write_run<W: Write>(mut out: W, run: &Run) -> std::io::Result<()> {
    for list in run.values() {
        for entry in list.entries() {
            writeln!(out, "{}", format_run_line(list.topic_id(), entry, list.run_tag()))?;
        }
    }
    out.flush()
}

pub fn save_run(path: impl AsRef<Path>, run: &Run) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_run(BufWriter::new(file), run).map_err(|e| Error::io(path, e))
}

pub fn load_run(path: impl AsRef<Path>) -> Result<Run> {
    let path = path.as_ref();
    read_run(open(path)?, path)
}

/// Parses a run file. Lines of one topic must appear in rank order with
/// ranks 1..n and non-increasing scores; topics may interleave.
pub fn read_run<R: BufRead>(reader: R, path: &Path) -> Result<Run> {
    struct Pending {
        tag: String,
        entries: Vec<RunEntry>,
        seen: HashSet<String>,
    }
    let mut pending: BTreeMap<String, Pending> = BTreeMap::new();
    for item in numbered_lines(reader, path) {
        let (line_no, line) = item?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [topic_id, _q0, doc_id, rank, score, tag] = fields[..] else {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 6 columns, found {}", fields.len()),
            ));
        };
        let rank: usize = rank
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("rank `{rank}` is not a positive integer")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(path, line_no, format!("score `{score}` is not a finite number")))?;
        let p = pending.entry(topic_id.to_owned()).or_insert_with(|| Pending {
            tag: tag.to_owned(),
            entries: Vec::new(),
            seen: HashSet::new(),
        });
        if p.tag != tag {
            return Err(Error::parse(
                path,
                line_no,
                format!("run tag `{tag}` differs from `{}` earlier in topic {topic_id}", p.tag),
            ));
        }
        let expected = p.entries.len() + 1;
        if rank != expected {
            return Err(Error::parse(
                path,
                line_no,
                format!("topic {topic_id}: ranks not contiguous (expected {expected}, found {rank})"),
            ));
        }
        if let Some(prev) = p.entries.last() {
            if score > prev.score {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!(
                        "topic {topic_id}: score {score} at rank {rank} exceeds score at rank {}",
                        rank - 1
                    ),
                ));
            }
        }
        if !p.seen.insert(doc_id.to_owned()) {
            return Err(Error::Duplicate {
                path: path.into(),
                line: line_no,
                what: "doc_id in topic",
                id: format!("{topic_id} {doc_id}"),
            });
        }
        p.entries.push(RunEntry {
            doc_id: doc_id.to_owned(),
            score,
            rank,
        });
    }
    pending
        .into_iter()
        .map(|(topic_id, p)| {
            let list = RankedList::from_entries(topic_id.clone(), p.tag, p.entries)?;
            Ok((topic_id, list))
        })
        .collect()
}

pub fn load_criterion_file(path: impl AsRef<Path>) -> Result<HashMap<String, CriterionVector>> {
    let path = path.as_ref();
    parse_criterion_scores(open(path)?, path)
}

pub fn parse_criterion_scores<R: BufRead>(reader: R, path: &Path) -> Result<HashMap<String, CriterionVector>> {
    let mut scores = HashMap::new();
    for item in numbered_lines(reader, path) {
        let (line_no, line) = item?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [doc_id, p1, p2, p7, p8, source_tag] = fields[..] else {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 6 columns, found {}", fields.len()),
            ));
        };
        let mut probs = [0.0; 4];
        for (slot, tok) in probs.iter_mut().zip([p1, p2, p7, p8]) {
            *slot = tok
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("probability `{tok}` is not a number")))?;
        }
        let cv =
            CriterionVector::new(doc_id, probs, source_tag).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if scores.insert(doc_id.to_owned(), cv).is_some() {
            return Err(Error::Duplicate {
                path: path.into(),
                line: line_no,
                what: "doc_id",
                id: doc_id.to_owned(),
            });
        }
    }
    Ok(scores)
}

pub fn write_criterion_scores<'a, W: Write>(
    mut out: W,
    vectors: impl IntoIterator<Item = &'a CriterionVector>,
) -> std::io::Result<()> {
    for cv in vectors {
        let [p1, p2, p7, p8] = cv.probs();
        writeln!(out, "{} {p1:.6} {p2:.6} {p7:.6} {p8:.6} {}", cv.doc_id, cv.source_tag)?;
    }
    Ok(())
}

/// Embedding vectors keyed by id, all of one dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    let path = path.as_ref();
    parse_embeddings(open(path)?, path)
}

/// The header is the dimension, either bare (`384`) or keyed (`dim 384`).
pub fn parse_embeddings<R: BufRead>(reader: R, path: &Path) -> Result<EmbeddingFile> {
    let mut lines = numbered_lines(reader, path);
    let Some(header) = lines.next() else {
        return Err(Error::parse(path, 1, "missing dimension header"));
    };
    let (line_no, header) = header?;
    let dim_token = match header.split_whitespace().collect::<Vec<_>>()[..] {
        [d] | ["dim", d] => d,
        _ => return Err(Error::parse(path, line_no, "header must be the vector dimension")),
    };
    let dim: usize = dim_token.parse().ok().filter(|&d| d > 0).ok_or_else(|| {
        Error::parse(
            path,
            line_no,
            format!("dimension `{dim_token}` is not a positive integer"),
        )
    })?;

    let mut vectors = HashMap::new();
    for item in lines {
        let (line_no, line) = item?;
        let mut fields = line.split_whitespace();
        let id = fields.next().unwrap_or_default();
        let vector = fields
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::parse(path, line_no, "vector component is not a finite number"))?;
        if vector.len() != dim {
            return Err(Error::parse(
                path,
                line_no,
                format!("vector has {} components, header declares {dim}", vector.len()),
            ));
        }
        if vectors.insert(id.to_owned(), vector).is_some() {
            return Err(Error::Duplicate {
                path: path.into(),
                line: line_no,
                what: "embedding id",
                id: id.to_owned(),
            });
        }
    }
    Ok(EmbeddingFile { dim, vectors })
}

pub fn write_embeddings<'a, W: Write>(
    mut out: W,
    dim: usize,
    records: impl IntoIterator<Item = &'a EmbeddingRecord>,
) -> std::io::Result<()> {
    writeln!(out, "{dim}")?;
    for r in records {
        write!(out, "{}", r.id)?;
        for v in &r.vector {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Per-topic candidate allowlist.
pub type CandidatePool = BTreeMap<String, BTreeSet<String>>;

pub fn load_pool(path: impl AsRef<Path>) -> Result<CandidatePool> {
    let path = path.as_ref();
    parse_pool(open(path)?, path)
}

pub fn parse_pool<R: BufRead>(reader: R, path: &Path) -> Result<CandidatePool> {
    let mut pool = CandidatePool::new();
    for item in numbered_lines(reader, path) {
        let (line_no, line) = item?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [topic_id, doc_id] = fields[..] else {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 2 columns, found {}", fields.len()),
            ));
        };
        pool.entry(topic_id.to_owned()).or_default().insert(doc_id.to_owned());
    }
    Ok(pool)
}

pub fn write_pool<W: Write>(mut out: W, pool: &CandidatePool) -> std::io::Result<()> {
    for (topic_id, docs) in pool {
        for doc_id in docs {
            writeln!(out, "{topic_id} {doc_id}")?;
        }
    }
    Ok(())
}
