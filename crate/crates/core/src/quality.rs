//! Re-ranking by similarity of a document's criterion probabilities to an
//! ideal article that satisfies every criterion.
//!
//! Cosine against the all-ones reference ignores magnitude: a uniform
//! (0.1, 0.1, 0.1, 0.1) scores the same 1.0 as (1, 1, 1, 1).

use std::collections::HashMap;
use std::path::Path;

use crate::corpus_io::load_criterion_file;
use crate::error::Result;
use crate::model::{CriterionVector, RankedList};
use crate::semantic::cosine;

/// Criterion probabilities of an ideal article, in (p1, p2, p7, p8) order.
pub const REFERENCE_VECTOR: [f64; 4] = [1.0; 4];

pub type CriterionScores = HashMap<String, CriterionVector>;

pub fn quality_similarity(cv: &CriterionVector) -> f64 {
    // dims are both 4, so this cannot fail
    cosine(&cv.probs(), &REFERENCE_VECTOR).unwrap_or(0.0)
}

pub fn load_criterion_scores(path: impl AsRef<Path>) -> Result<CriterionScores> {
    load_criterion_file(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityRerank {
    pub list: RankedList,
    /// Documents in the input that had no criterion vector.
    pub missing: usize,
}

/// Reorders `base` by descending quality similarity. Unscored documents get
/// similarity 0.
pub fn rerank_by_quality(base: &RankedList, scores: &CriterionScores, run_tag: &str) -> Result<QualityRerank> {
    let mut missing = 0;
    let scored = base
        .doc_ids()
        .map(|id| {
            let s = match scores.get(id) {
                Some(cv) => quality_similarity(cv),
                None => {
                    missing += 1;
                    0.0
                }
            };
            (id.to_owned(), s)
        })
        .collect();
    let list = RankedList::from_scores(base.topic_id(), run_tag, scored)?;
    if missing > 0 {
        log::warn!(
            "topic {}: {missing} of {} documents have no criterion scores",
            base.topic_id(),
            base.len()
        );
    }
    Ok(QualityRerank { list, missing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cv(id: &str, p: [f64; 4]) -> CriterionVector {
        CriterionVector::new(id, p, "qe").unwrap()
    }

    fn base(ids: &[&str]) -> RankedList {
        let n = ids.len();
        RankedList::from_scores(
            "1",
            "bm25",
            ids.iter()
                .enumerate()
                .map(|(i, id)| (id.to_string(), (n - i) as f64))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn similarity_values() {
        assert_abs_diff_eq!(quality_similarity(&cv("a", [1.0; 4])), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(quality_similarity(&cv("a", [1.0, 0.0, 0.0, 0.0])), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(quality_similarity(&cv("a", [0.5; 4])), 1.0, epsilon = 1e-15);
        assert_eq!(quality_similarity(&cv("a", [0.0; 4])), 0.0);
    }

    #[test]
    fn better_vector_wins_regardless_of_bm25_order() {
        let scores: CriterionScores = [
            ("low".to_string(), cv("low", [1.0, 0.0, 0.0, 0.0])),
            ("high".to_string(), cv("high", [1.0; 4])),
        ]
        .into();
        let out = rerank_by_quality(&base(&["low", "high"]), &scores, "qe").unwrap();
        assert_eq!(out.list.doc_ids().collect::<Vec<_>>(), ["high", "low"]);
        assert_eq!(out.missing, 0);
    }

    #[test]
    fn shared_vector_falls_back_to_doc_id_order() {
        let ids = ["d3", "d1", "d2"];
        let scores: CriterionScores = ids
            .iter()
            .map(|id| (id.to_string(), cv(id, [0.2, 0.4, 0.6, 0.8])))
            .collect();
        let out = rerank_by_quality(&base(&ids), &scores, "qe").unwrap();
        assert_eq!(out.list.doc_ids().collect::<Vec<_>>(), ["d1", "d2", "d3"]);
    }

    #[test]
    fn missing_scores_sink_and_are_counted() {
        let scores: CriterionScores = [("b".to_string(), cv("b", [0.1, 0.0, 0.0, 0.0]))].into();
        let out = rerank_by_quality(&base(&["a", "b", "c"]), &scores, "qe").unwrap();
        assert_eq!(out.list.doc_ids().collect::<Vec<_>>(), ["b", "a", "c"]);
        assert_eq!(out.missing, 2);
    }

    #[test]
    fn empty_input() {
        let out = rerank_by_quality(&RankedList::empty("1", "bm25"), &CriterionScores::new(), "qe").unwrap();
        assert!(out.list.is_empty());
    }
}
