//! Data model shared by every stage of the pipeline.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One corpus entry: the unit that is indexed, ranked and judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub url: String,
    #[serde(default)]
    pub text: String,
}

/// Documents in file order with an id lookup. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct DocumentStore {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl DocumentStore {
    /// Builds a store, rejecting empty or duplicate ids.
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            validate_id("doc_id", &doc.doc_id)?;
            if by_id.insert(doc.doc_id.clone(), i).is_some() {
                return Err(Error::invalid("corpus", format!("duplicate doc_id `{}`", doc.doc_id)));
            }
        }
        Ok(Self { docs, by_id })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn index_of(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }
}

/// Identifiers end up as whitespace-separated columns in run and qrels
/// files, so they must be non-empty and free of whitespace.
pub(crate) fn validate_id(what: &'static str, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::invalid(what, "identifier is empty"));
    }
    if id.chars().any(char::is_whitespace) {
        return Err(Error::invalid(what, format!("`{id}` contains whitespace")));
    }
    Ok(())
}

/// A health query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: String,
    pub query: String,
    #[serde(default)]
    pub description: String,
}

/// The three judged aspects of a (topic, document) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Useful,
    Correct,
    Credible,
}

impl Aspect {
    pub fn name(self) -> &'static str {
        match self {
            Aspect::Useful => "useful",
            Aspect::Correct => "correct",
            Aspect::Credible => "credible",
        }
    }
}

/// Graded usefulness plus binary correctness and credibility.
/// `None` marks an unjudged binary aspect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspectJudgment {
    pub topic_id: String,
    pub doc_id: String,
    pub usefulness: u32,
    pub correctness: Option<bool>,
    pub credibility: Option<bool>,
}

impl AspectJudgment {
    /// Whether the single aspect holds; unjudged counts as not holding.
    pub fn satisfies(&self, aspect: Aspect, usefulness_threshold: u32) -> bool {
        match aspect {
            Aspect::Useful => self.usefulness >= usefulness_threshold,
            Aspect::Correct => self.correctness == Some(true),
            Aspect::Credible => self.credibility == Some(true),
        }
    }
}

/// Judgments keyed by topic, then document.
#[derive(Debug, Clone, Default)]
pub struct Qrels {
    topics: BTreeMap<String, BTreeMap<String, AspectJudgment>>,
}

impl Qrels {
    /// Inserts a judgment; returns false (leaving the existing one) on a
    /// duplicate (topic, doc) pair.
    pub fn insert(&mut self, judgment: AspectJudgment) -> bool {
        let per_topic = self.topics.entry(judgment.topic_id.clone()).or_default();
        if per_topic.contains_key(&judgment.doc_id) {
            return false;
        }
        per_topic.insert(judgment.doc_id.clone(), judgment);
        true
    }

    pub fn topic(&self, topic_id: &str) -> Option<&BTreeMap<String, AspectJudgment>> {
        self.topics.get(topic_id)
    }

    pub fn topic_ids(&self) -> impl Iterator<Item = &str> {
        self.topics.keys().map(String::as_str)
    }

    pub fn judgments(&self) -> impl Iterator<Item = &AspectJudgment> {
        self.topics.values().flat_map(|m| m.values())
    }

    pub fn len(&self) -> usize {
        self.topics.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Descending score, then ascending doc_id.
pub fn tie_rule(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

/// One topic's ranking from one system. Ranks are 1..n, doc ids are unique
/// and scores never increase with rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    topic_id: String,
    run_tag: String,
    entries: Vec<RunEntry>,
}

impl RankedList {
    pub fn empty(topic_id: impl Into<String>, run_tag: impl Into<String>) -> Self {
        Self {
            topic_id: topic_id.into(),
            run_tag: run_tag.into(),
            entries: Vec::new(),
        }
    }

    /// Sorts `(doc_id, score)` pairs by the tie rule and assigns ranks.
    /// Non-finite scores and duplicate ids are rejected.
    pub fn from_scores(
        topic_id: impl Into<String>,
        run_tag: impl Into<String>,
        mut scored: Vec<(String, f64)>,
    ) -> Result<Self> {
        if let Some((id, s)) = scored.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::invalid(
                "ranked list",
                format!("non-finite score {s} for `{id}`"),
            ));
        }
        scored.sort_by(|a, b| tie_rule(a.1, &a.0, b.1, &b.0));
        if let Some(w) = scored.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("ranked list", format!("duplicate doc_id `{}`", w[0].0)));
        }
        let entries = scored
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RunEntry {
                doc_id,
                score,
                rank: i + 1,
            })
            .collect();
        Ok(Self {
            topic_id: topic_id.into(),
            run_tag: run_tag.into(),
            entries,
        })
    }

    /// Accepts entries already in rank order and checks every invariant.
    pub fn from_entries(
        topic_id: impl Into<String>,
        run_tag: impl Into<String>,
        entries: Vec<RunEntry>,
    ) -> Result<Self> {
        let topic_id = topic_id.into();
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(Error::invalid(
                    "ranked list",
                    format!("topic {topic_id}: expected rank {}, found {}", i + 1, e.rank),
                ));
            }
            if !e.score.is_finite() {
                return Err(Error::invalid(
                    "ranked list",
                    format!("topic {topic_id}: non-finite score at rank {}", e.rank),
                ));
            }
            if !seen.insert(e.doc_id.as_str()) {
                return Err(Error::invalid(
                    "ranked list",
                    format!("topic {topic_id}: duplicate doc_id `{}`", e.doc_id),
                ));
            }
            if i > 0 && e.score > entries[i - 1].score {
                return Err(Error::invalid(
                    "ranked list",
                    format!("topic {topic_id}: score increases from rank {} to rank {}", i, i + 1),
                ));
            }
        }
        Ok(Self {
            topic_id,
            run_tag: run_tag.into(),
            entries,
        })
    }

    pub fn topic_id(&self) -> &str {
        &self.topic_id
    }

    pub fn run_tag(&self) -> &str {
        &self.run_tag
    }

    pub fn entries(&self) -> &[RunEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn truncate(&mut self, depth: usize) {
        self.entries.truncate(depth);
    }

    pub fn with_tag(mut self, run_tag: impl Into<String>) -> Self {
        self.run_tag = run_tag.into();
        self
    }
}

/// A full run: one ranked list per topic, keyed (and written) in topic order.
pub type Run = BTreeMap<String, RankedList>;

/// Probabilities for the four quality criteria, in the fixed order
/// (costs, benefits, alternatives, availability).
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionVector {
    pub doc_id: String,
    probs: [f64; 4],
    pub source_tag: String,
}

impl CriterionVector {
    pub fn new(doc_id: impl Into<String>, probs: [f64; 4], source_tag: impl Into<String>) -> Result<Self> {
        let doc_id = doc_id.into();
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(
                "criterion vector",
                format!("probability {p} for `{doc_id}` is outside [0, 1]"),
            ));
        }
        Ok(Self {
            doc_id,
            probs,
            source_tag: source_tag.into(),
        })
    }

    pub fn probs(&self) -> [f64; 4] {
        self.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}
