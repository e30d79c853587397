//! Tokenizer, inverted index and BM25 top-k retrieval.
//!
//! Scoring uses the Robertson/Zaragoza form with the non-negative
//! Lucene idf:
//!
//! ```text
//! idf(t)   = ln(1 + (N - df + 0.5) / (df + 0.5))
//! score    = Σ_t idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! ```
//!
//! Repeated query terms contribute once per occurrence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{tie_rule, DocumentStore, RankedList};

pub const DEFAULT_K1: f64 = 0.9;
pub const DEFAULT_B: f64 = 0.4;
pub const DEFAULT_DEPTH: usize = 1000;

const INDEX_MAGIC: &str = "misinfo-bm25-index";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let p = Self { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(Error::invalid(
                "bm25 params",
                format!("k1 must be > 0, got {}", self.k1),
            ));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid(
                "bm25 params",
                format!("b must be in [0, 1], got {}", self.b),
            ));
        }
        Ok(())
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn idf(num_docs: usize, df: usize) -> f64 {
    let n = num_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// The saturated, length-normalised term-frequency factor.
pub fn tf_component(tf: u32, doc_len: u32, avg_doc_len: f64, params: Bm25Params) -> f64 {
    let tf = f64::from(tf);
    let norm = if avg_doc_len > 0.0 {
        f64::from(doc_len) / avg_doc_len
    } else {
        1.0
    };
    tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
    avg_doc_length: f64,
    params: Bm25Params,
}

fn term_counts(text: &str) -> (u32, HashMap<String, u32>) {
    let tokens = tokenize(text);
    let len = tokens.len() as u32;
    let mut counts = HashMap::new();
    for t in tokens {
        *counts.entry(t).or_insert(0) += 1;
    }
    (len, counts)
}

impl InvertedIndex {
    /// Tokenizes documents in parallel and merges them in store order, so
    /// the result does not depend on the worker count.
    pub fn build(store: &DocumentStore, params: Bm25Params) -> Result<Self> {
        if store.is_empty() {
            return Err(Error::invalid("corpus", "cannot index an empty document store"));
        }
        params.validate()?;
        let per_doc: Vec<(u32, HashMap<String, u32>)> = store.docs().par_iter().map(|d| term_counts(&d.text)).collect();

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(per_doc.len());
        for (doc, (len, counts)) in per_doc.into_iter().enumerate() {
            doc_lengths.push(len);
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting { doc: doc as u32, tf });
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        Ok(Self {
            doc_ids: store.iter().map(|d| d.doc_id.clone()).collect(),
            doc_lengths,
            postings,
            avg_doc_length,
            params,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    /// Parameters recorded when the index was built.
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_id(&self, doc: usize) -> &str {
        &self.doc_ids[doc]
    }

    pub fn doc_len(&self, doc: usize) -> u32 {
        self.doc_lengths[doc]
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn tf(&self, term: &str, doc: usize) -> u32 {
        let list = self.postings(term);
        list.binary_search_by_key(&(doc as u32), |p| p.doc)
            .map_or(0, |i| list[i].tf)
    }

    pub fn score(&self, query_tokens: &[String], doc: usize, params: Bm25Params) -> f64 {
        query_tokens
            .iter()
            .map(|t| {
                let tf = self.tf(t, doc);
                if tf == 0 {
                    0.0
                } else {
                    idf(self.num_docs(), self.df(t))
                        * tf_component(tf, self.doc_lengths[doc], self.avg_doc_length, params)
                }
            })
            .sum()
    }

    /// Top-`k` documents with a positive score, optionally restricted to
    /// an allowlist of doc ids.
    pub fn search(
        &self,
        topic_id: &str,
        query: &str,
        params: Bm25Params,
        k: usize,
        allowlist: Option<&BTreeSet<String>>,
        run_tag: &str,
    ) -> Result<RankedList> {
        if k == 0 {
            return Err(Error::invalid("search depth", "k must be at least 1"));
        }
        let tokens = tokenize(query);
        let allowed: Option<Vec<bool>> = allowlist.map(|ids| self.doc_ids.iter().map(|id| ids.contains(id)).collect());

        // term-at-a-time accumulation, in query order
        let mut acc = vec![0.0f64; self.num_docs()];
        let mut touched = vec![false; self.num_docs()];
        for t in &tokens {
            let list = self.postings(t);
            if list.is_empty() {
                continue;
            }
            let w = idf(self.num_docs(), list.len());
            for p in list {
                let d = p.doc as usize;
                acc[d] += w * tf_component(p.tf, self.doc_lengths[d], self.avg_doc_length, params);
                touched[d] = true;
            }
        }

        let mut hits: Vec<(usize, f64)> = (0..self.num_docs())
            .filter(|&d| touched[d] && acc[d] > 0.0)
            .filter(|&d| allowed.as_ref().is_none_or(|a| a[d]))
            .map(|d| (d, acc[d]))
            .collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| tie_rule(a.1, &self.doc_ids[a.0], b.1, &self.doc_ids[b.0]);
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, cmp);
            hits.truncate(k);
        }
        hits.sort_by(cmp);
        RankedList::from_scores(
            topic_id,
            run_tag,
            hits.into_iter().map(|(d, s)| (self.doc_ids[d].clone(), s)).collect(),
        )
    }

    /// Line-based, self-describing serialization. Output is a pure
    /// function of the index contents.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{INDEX_MAGIC} {INDEX_VERSION}")?;
        writeln!(out, "k1 {}", self.params.k1)?;
        writeln!(out, "b {}", self.params.b)?;
        writeln!(out, "docs {}", self.num_docs())?;
        writeln!(out, "terms {}", self.num_terms())?;
        writeln!(out, "avgdl {}", self.avg_doc_length)?;
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            writeln!(out, "doc {id} {len}")?;
        }
        for (term, list) in &self.postings {
            write!(out, "term {term} {}", list.len())?;
            for p in list {
                write!(out, " {}:{}", p.doc, p.tf)?;
            }
            writeln!(out)?;
        }
        out.flush()
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::invalid("index file", format!("line {line}: {msg}"));
        let mut lines = reader.lines().enumerate();
        let mut next_line = |expect: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(bad(i + 1, &e.to_string())),
                None => Err(Error::invalid("index file", format!("truncated before {expect}"))),
            }
        };
        fn field<T: std::str::FromStr>(line: &str, key: &str) -> Option<T> {
            line.strip_prefix(key)?.strip_prefix(' ')?.parse().ok()
        }

        let (n, header) = next_line("header")?;
        if header != format!("{INDEX_MAGIC} {INDEX_VERSION}") {
            return Err(bad(n, "unrecognised header"));
        }
        let (n, l) = next_line("k1")?;
        let k1: f64 = field(&l, "k1").ok_or_else(|| bad(n, "expected `k1 <value>`"))?;
        let (n, l) = next_line("b")?;
        let b: f64 = field(&l, "b").ok_or_else(|| bad(n, "expected `b <value>`"))?;
        let params = Bm25Params::new(k1, b)?;
        let (n, l) = next_line("docs")?;
        let num_docs: usize = field(&l, "docs").ok_or_else(|| bad(n, "expected `docs <count>`"))?;
        let (n, l) = next_line("terms")?;
        let num_terms: usize = field(&l, "terms").ok_or_else(|| bad(n, "expected `terms <count>`"))?;
        let (n, l) = next_line("avgdl")?;
        let _avgdl: f64 = field(&l, "avgdl").ok_or_else(|| bad(n, "expected `avgdl <value>`"))?;

        let mut doc_ids = Vec::with_capacity(num_docs);
        let mut doc_lengths = Vec::with_capacity(num_docs);
        for _ in 0..num_docs {
            let (n, l) = next_line("doc record")?;
            let parts: Vec<&str> = l.split(' ').collect();
            match parts[..] {
                ["doc", id, len] => {
                    doc_ids.push(id.to_owned());
                    doc_lengths.push(len.parse().map_err(|_| bad(n, "bad document length"))?);
                }
                _ => return Err(bad(n, "expected `doc <id> <length>`")),
            }
        }
        let mut postings = BTreeMap::new();
        for _ in 0..num_terms {
            let (n, l) = next_line("term record")?;
            let mut parts = l.split(' ');
            if parts.next() != Some("term") {
                return Err(bad(n, "expected `term <term> <df> <doc:tf>...`"));
            }
            let term = parts.next().ok_or_else(|| bad(n, "missing term"))?.to_owned();
            let df: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(n, "bad document frequency"))?;
            let list = parts
                .map(|p| {
                    let (d, tf) = p.split_once(':')?;
                    Some(Posting {
                        doc: d.parse().ok()?,
                        tf: tf.parse().ok()?,
                    })
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad(n, "bad posting"))?;
            if list.len() != df
                || list.windows(2).any(|w| w[0].doc >= w[1].doc)
                || list.iter().any(|p| p.doc as usize >= num_docs || p.tf == 0)
            {
                return Err(bad(n, "postings inconsistent with header"));
            }
            postings.insert(term, list);
        }
        // recomputed rather than parsed, so equality with a fresh build is exact
        let total: u64 = doc_lengths.iter().map(|&l: &u32| u64::from(l)).sum();
        let avg_doc_length = if num_docs == 0 {
            0.0
        } else {
            total as f64 / num_docs as f64
        };
        Ok(Self {
            doc_ids,
            doc_lengths,
            postings,
            avg_doc_length,
            params,
        })
    }
}
