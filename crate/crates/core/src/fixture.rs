//! Seeded generator for a small synthetic collection: corpus, topics,
//! three-aspect qrels, two criterion-score files, a candidate pool and a
//! pipeline config wired to all of them.
//!
//! Some on-topic documents are long and mention the topic only after
//! their twentieth sentence. BM25 sees those mentions; the sentence-limited
//! semantic ranking does not, so the BM25-only and BM25+semantic runs
//! are guaranteed to disagree near the top.

use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus_io::{write_corpus, write_criterion_scores, write_pool, write_qrels, write_topics, CandidatePool};
use crate::error::{Error, Result};
use crate::model::{AspectJudgment, CriterionVector, Document, Qrels, Topic};

pub const FIXTURE_SEED: u64 = 20211027;
pub const FIXTURE_DOCS: usize = 200;
pub const POOL_SIZE: usize = 150;

const TOPICS: [(&str, &str, &str, &[&str]); 5] = [
    (
        "101",
        "vitamin c common cold",
        "Does taking vitamin C prevent or shorten the common cold?",
        &["vitamin", "ascorbic", "cold", "colds", "immune", "supplement"],
    ),
    (
        "102",
        "zinc lozenges sore throat",
        "Can zinc lozenges relieve a sore throat?",
        &["zinc", "lozenges", "throat", "sore", "lozenge", "pharynx"],
    ),
    (
        "103",
        "honey cough children",
        "Is honey an effective cough remedy for children?",
        &["honey", "cough", "children", "syrup", "nighttime", "pediatric"],
    ),
    (
        "104",
        "garlic blood pressure",
        "Does garlic lower high blood pressure?",
        &["garlic", "blood", "pressure", "hypertension", "allicin", "systolic"],
    ),
    (
        "105",
        "melatonin insomnia",
        "Is melatonin a safe treatment for insomnia?",
        &["melatonin", "insomnia", "sleep", "circadian", "hormone", "bedtime"],
    ),
];

const FILLER: &[&str] = &[
    "the",
    "a",
    "study",
    "patients",
    "doctors",
    "reported",
    "results",
    "trial",
    "health",
    "people",
    "research",
    "found",
    "may",
    "help",
    "some",
    "experts",
    "say",
    "evidence",
    "effect",
    "daily",
    "dose",
    "risk",
    "benefit",
    "cost",
    "price",
    "available",
    "pharmacy",
    "compared",
    "placebo",
    "treatment",
    "symptoms",
    "week",
    "weeks",
    "group",
    "adults",
    "survey",
    "claims",
    "article",
    "news",
    "website",
    "product",
    "natural",
    "remedy",
    "science",
    "medical",
    "advice",
    "review",
    "small",
    "large",
    "percent",
    "reduced",
    "increased",
    "years",
    "common",
    "used",
    "many",
    "should",
    "could",
    "before",
    "after",
    "during",
    "with",
    "without",
    "about",
    "more",
    "less",
    "clinic",
    "hospital",
    "nutrition",
    "diet",
    "exercise",
    "water",
    "morning",
    "evening",
];

#[derive(Clone, Copy, PartialEq)]
enum Focus {
    Strong,
    Medium,
    Weak,
    /// Long document whose topic mentions all sit after sentence 20.
    Buried,
    Off,
}

fn sentence(rng: &mut ChaCha8Rng, topic_terms: &[&str], topic_rate: f64) -> String {
    let len = rng.random_range(6..=14);
    let mut words: Vec<String> = (0..len)
        .map(|_| {
            if rng.random_bool(topic_rate) {
                (*topic_terms.choose(rng).unwrap()).to_owned()
            } else {
                (*FILLER.choose(rng).unwrap()).to_owned()
            }
        })
        .collect();
    if let Some(first) = words.first_mut() {
        let mut c = first.chars();
        *first = c
            .next()
            .map(|h| h.to_uppercase().chain(c).collect())
            .unwrap_or_default();
    }
    let end = match rng.random_range(0..10) {
        0 => "!",
        1 => "?",
        _ => ".",
    };
    format!("{}{end}", words.join(" "))
}

fn document_text(rng: &mut ChaCha8Rng, topic_terms: &[&str], focus: Focus) -> String {
    let sentences: Vec<String> = match focus {
        Focus::Buried => {
            let mut s: Vec<String> = (0..22).map(|_| sentence(rng, topic_terms, 0.0)).collect();
            s.extend((0..8).map(|_| sentence(rng, topic_terms, 0.6)));
            s
        }
        _ => {
            let (n, rate) = match focus {
                Focus::Strong => (rng.random_range(5..=12), 0.35),
                Focus::Medium => (rng.random_range(6..=25), 0.15),
                Focus::Weak => (rng.random_range(8..=28), 0.04),
                _ => (rng.random_range(4..=24), 0.0),
            };
            (0..n).map(|_| sentence(rng, topic_terms, rate)).collect()
        }
    };
    sentences.join(" ")
}

fn binary_label(rng: &mut ChaCha8Rng, p_true: f64, p_unjudged: f64) -> Option<bool> {
    if rng.random_bool(p_unjudged) {
        None
    } else {
        Some(rng.random_bool(p_true))
    }
}

fn probs(rng: &mut ChaCha8Rng, centre: f64, spread: f64) -> [f64; 4] {
    // six decimals, matching the file precision, so reloads are exact
    std::array::from_fn(|_| {
        let v: f64 = (centre + rng.random_range(-spread..=spread)).clamp(0.0, 1.0);
        (v * 1e6).round() / 1e6
    })
}

/// In-memory contents of the synthetic collection.
#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub docs: Vec<Document>,
    pub topics: Vec<Topic>,
    pub qrels: Qrels,
    pub qe_base: Vec<CriterionVector>,
    pub qe_large: Vec<CriterionVector>,
    pub pool: CandidatePool,
}

impl SyntheticFixture {
    pub fn generate() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_SEED);
        let per_topic = FIXTURE_DOCS / TOPICS.len();

        let mut docs = Vec::with_capacity(FIXTURE_DOCS);
        let mut meta = Vec::with_capacity(FIXTURE_DOCS);
        for i in 0..FIXTURE_DOCS {
            let topic = i % TOPICS.len();
            let slot = i / TOPICS.len();
            let focus = match slot {
                s if s < 6 => Focus::Strong,
                s if s < 9 => Focus::Buried,
                s if s < 18 => Focus::Medium,
                s if s < 28 => Focus::Weak,
                _ => Focus::Off,
            };
            debug_assert!(slot < per_topic);
            let text = document_text(&mut rng, TOPICS[topic].3, focus);
            docs.push(Document {
                doc_id: format!("doc{i:03}"),
                url: format!("https://example.org/{}/{i:03}", TOPICS[topic].0),
                text,
            });
            meta.push((topic, focus));
        }

        let topics = TOPICS
            .iter()
            .map(|(id, q, d, _)| Topic {
                topic_id: (*id).to_owned(),
                query: (*q).to_owned(),
                description: (*d).to_owned(),
            })
            .collect();

        let mut qrels = Qrels::default();
        for (t, (topic_id, ..)) in TOPICS.iter().enumerate() {
            for (i, doc) in docs.iter().enumerate() {
                let (topic, focus) = meta[i];
                let judged = topic == t || rng.random_bool(0.05);
                if !judged {
                    continue;
                }
                let usefulness = match (topic == t, focus) {
                    (true, Focus::Strong | Focus::Buried) => rng.random_range(1..=2),
                    (true, Focus::Medium) => rng.random_range(0..=2),
                    (true, Focus::Weak) => rng.random_range(0..=1),
                    _ => 0,
                };
                qrels.insert(AspectJudgment {
                    topic_id: (*topic_id).to_owned(),
                    doc_id: doc.doc_id.clone(),
                    usefulness,
                    correctness: binary_label(&mut rng, 0.6, 0.1),
                    credibility: binary_label(&mut rng, 0.55, 0.1),
                });
            }
        }

        let mut qe_base = Vec::with_capacity(FIXTURE_DOCS);
        let mut qe_large = Vec::with_capacity(FIXTURE_DOCS);
        for doc in &docs {
            let centre = rng.random_range(0.2..0.8);
            let base = probs(&mut rng, centre, 0.2);
            let centre = rng.random_range(0.1..0.9);
            let large = probs(&mut rng, centre, 0.3);
            qe_base.push(CriterionVector::new(&doc.doc_id, base, "qe_base").expect("probabilities clamped"));
            qe_large.push(CriterionVector::new(&doc.doc_id, large, "qe_large").expect("probabilities clamped"));
        }

        let mut pool = CandidatePool::new();
        for (t, (topic_id, ..)) in TOPICS.iter().enumerate() {
            let mut own: Vec<&Document> = docs
                .iter()
                .zip(&meta)
                .filter(|(_, m)| m.0 == t)
                .map(|(d, _)| d)
                .collect();
            let mut others: Vec<&Document> = docs
                .iter()
                .zip(&meta)
                .filter(|(_, m)| m.0 != t)
                .map(|(d, _)| d)
                .collect();
            others.shuffle(&mut rng);
            own.extend(others.into_iter().take(POOL_SIZE - per_topic));
            pool.insert((*topic_id).to_owned(), own.iter().map(|d| d.doc_id.clone()).collect());
        }

        Self {
            docs,
            topics,
            qrels,
            qe_base,
            qe_large,
            pool,
        }
    }

    /// Writes the collection plus `config.toml` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<()> {
            let mut buf = Vec::new();
            let path = dir.join(name);
            f(&mut buf).map_err(|e| Error::io(&path, e))?;
            fs::write(&path, buf).map_err(|e| Error::io(&path, e))
        };
        write("corpus.jsonl", &|b| write_corpus(b, &self.docs))?;
        write("topics.jsonl", &|b| write_topics(b, &self.topics))?;
        write("qrels.txt", &|b| write_qrels(b, &self.qrels))?;
        write("qe_base.scores", &|b| write_criterion_scores(b, &self.qe_base))?;
        write("qe_large.scores", &|b| write_criterion_scores(b, &self.qe_large))?;
        write("pool.txt", &|b| write_pool(b, &self.pool))?;
        write("config.toml", &|b| {
            use std::io::Write;
            b.write_all(FIXTURE_CONFIG.as_bytes())
        })?;
        Ok(())
    }
}

const FIXTURE_CONFIG: &str = r#"# Synthetic fixture: the six standard runs over 200 documents and 5 topics.
corpus = "corpus.jsonl"
topics = "topics.jsonl"
qrels = "qrels.txt"
pool = "pool.txt"
qe_base_scores = "qe_base.scores"
qe_large_scores = "qe_large.scores"
output_dir = "out"
baseline = "upv_bm25"

[bm25]
k1 = 0.9
b = 0.4
depth = 1000

[fusion]
rrf_k = 60.0
depth = 1000

[[run]]
tag = "upv_bm25"
components = ["bm25"]

[[run]]
tag = "upv_fuse_2"
components = ["bm25", "semantic"]

[[run]]
tag = "upv_fuse_3"
components = ["bm25", "qe_base"]

[[run]]
tag = "upv_fuse_5"
components = ["bm25", "qe_large"]

[[run]]
tag = "upv_fuse_7"
components = ["bm25", "semantic", "qe_base"]

[[run]]
tag = "upv_fuse_9"
components = ["bm25", "semantic", "qe_large"]
"#;
