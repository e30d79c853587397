//! Reciprocal rank fusion and the run matrix built from it.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RankedList, Run};

pub const DEFAULT_RRF_K: f64 = 60.0;
pub const DEFAULT_FUSION_DEPTH: usize = 1000;

/// A component ranking that can take part in fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Bm25,
    Semantic,
    QeBase,
    QeLarge,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Bm25,
        Component::Semantic,
        Component::QeBase,
        Component::QeLarge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Bm25 => "bm25",
            Component::Semantic => "semantic",
            Component::QeBase => "qe_base",
            Component::QeLarge => "qe_large",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid("component", format!("unknown component `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub tag: String,
    pub components: Vec<Component>,
    #[serde(default = "default_rrf_k")]
    pub rrf_k: f64,
}

fn default_rrf_k() -> f64 {
    DEFAULT_RRF_K
}

impl FusionConfig {
    pub fn new(tag: impl Into<String>, components: Vec<Component>, rrf_k: f64) -> Result<Self> {
        let c = Self {
            tag: tag.into(),
            components,
            rrf_k,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        crate::model::validate_id("run tag", &self.tag)?;
        if self.components.is_empty() {
            return Err(Error::invalid(
                "fusion config",
                format!("run `{}` has no components", self.tag),
            ));
        }
        let unique: BTreeSet<_> = self.components.iter().collect();
        if unique.len() != self.components.len() {
            return Err(Error::invalid(
                "fusion config",
                format!("run `{}` repeats a component", self.tag),
            ));
        }
        if !(self.rrf_k.is_finite() && self.rrf_k > 0.0) {
            return Err(Error::invalid(
                "fusion config",
                format!("rrf_k must be > 0, got {}", self.rrf_k),
            ));
        }
        Ok(())
    }
}

/// The six submitted runs: BM25 alone, and BM25 fused with the semantic
/// ranking and/or one of the two quality re-rankings.
pub fn standard_runs(rrf_k: f64) -> Vec<FusionConfig> {
    use Component::*;
    [
        ("upv_bm25", vec![Bm25]),
        ("upv_fuse_2", vec![Bm25, Semantic]),
        ("upv_fuse_3", vec![Bm25, QeBase]),
        ("upv_fuse_5", vec![Bm25, QeLarge]),
        ("upv_fuse_7", vec![Bm25, Semantic, QeBase]),
        ("upv_fuse_9", vec![Bm25, Semantic, QeLarge]),
    ]
    .into_iter()
    .map(|(tag, components)| FusionConfig {
        tag: tag.to_owned(),
        components,
        rrf_k,
    })
    .collect()
}

/// Sums `1/(k + rank)` over the lists containing each document. Raw scores
/// are ignored. Each document's terms are added largest first, so the
/// result does not depend on list order.
pub fn rrf_fuse(lists: &[&RankedList], k: f64, run_tag: &str) -> Result<RankedList> {
    let Some(first) = lists.first() else {
        return Err(Error::invalid("fusion input", "no lists to fuse"));
    };
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::invalid("fusion input", format!("k must be > 0, got {k}")));
    }
    let topic = first.topic_id();
    let mut ranks: HashMap<&str, Vec<usize>> = HashMap::new();
    for list in lists {
        if list.topic_id() != topic {
            return Err(Error::TopicMismatch {
                expected: topic.to_owned(),
                found: list.topic_id().to_owned(),
            });
        }
        for e in list.entries() {
            ranks.entry(e.doc_id.as_str()).or_default().push(e.rank);
        }
    }
    let fused = ranks
        .into_iter()
        .map(|(doc, mut rs)| {
            rs.sort_unstable();
            let score = rs.iter().map(|&r| 1.0 / (k + r as f64)).sum();
            (doc.to_owned(), score)
        })
        .collect();
    RankedList::from_scores(topic, run_tag, fused)
}

/// Fuses whole runs topic by topic. Every input must cover every topic
/// seen in any input. A single input passes through with the new tag.
pub fn fuse_runs(inputs: &[(&str, &Run)], k: f64, depth: usize, run_tag: &str) -> Result<Run> {
    let topics: BTreeSet<&String> = inputs.iter().flat_map(|(_, r)| r.keys()).collect();
    topics
        .into_iter()
        .map(|topic| {
            let lists = inputs
                .iter()
                .map(|(name, run)| {
                    run.get(topic).ok_or_else(|| {
                        Error::invalid("fusion input", format!("`{name}` has no list for topic {topic}"))
                            .in_stage("fuse", Some(topic))
                    })
                })
                .collect::<Result<Vec<&RankedList>>>()?;
            let mut out = if let [only] = lists[..] {
                only.clone().with_tag(run_tag)
            } else {
                rrf_fuse(&lists, k, run_tag)?
            };
            out.truncate(depth);
            Ok((topic.clone(), out))
        })
        .collect()
}

/// Builds one configured run from per-component runs.
pub fn build_run(config: &FusionConfig, components: &HashMap<Component, Run>, depth: usize) -> Result<Run> {
    config.validate()?;
    let inputs = config
        .components
        .iter()
        .map(|c| {
            components
                .get(c)
                .map(|run| (c.name(), run))
                .ok_or_else(|| Error::invalid("fusion input", format!("no `{c}` run for `{}`", config.tag)))
        })
        .collect::<Result<Vec<_>>>()?;
    fuse_runs(&inputs, config.rrf_k, depth, &config.tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn list(topic: &str, ids: &[&str]) -> RankedList {
        let n = ids.len();
        RankedList::from_scores(
            topic,
            "in",
            ids.iter()
                .enumerate()
                .map(|(i, id)| (id.to_string(), (n - i) as f64 * 0.1))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_list_keeps_order() {
        let l = list("1", &["c", "a", "b", "z"]);
        let fused = rrf_fuse(&[&l], 60.0, "f").unwrap();
        assert_eq!(fused.doc_ids().collect::<Vec<_>>(), ["c", "a", "b", "z"]);
    }

    #[test]
    fn worked_example() {
        let l1 = list("1", &["A", "B", "x"]);
        let l2 = list("1", &["y", "B", "A"]);
        let fused = rrf_fuse(&[&l1, &l2], 60.0, "f").unwrap();
        let score = |id: &str| fused.entries().iter().find(|e| e.doc_id == id).unwrap().score;
        assert_abs_diff_eq!(score("A"), 0.0322664, epsilon = 1e-7);
        assert_abs_diff_eq!(score("B"), 0.0322581, epsilon = 1e-7);
        assert!(score("A") > score("B"));
        assert_eq!(fused.entries()[0].doc_id, "A");
    }

    #[test]
    fn topic_mismatch_is_an_error() {
        let a = list("1", &["a"]);
        let b = list("2", &["a"]);
        assert!(matches!(
            rrf_fuse(&[&a, &b], 60.0, "f"),
            Err(Error::TopicMismatch { .. })
        ));
        assert!(rrf_fuse(&[], 60.0, "f").is_err());
        assert!(rrf_fuse(&[&a], 0.0, "f").is_err());
    }

    fn run(lists: Vec<RankedList>) -> Run {
        lists.into_iter().map(|l| (l.topic_id().to_owned(), l)).collect()
    }

    #[test]
    fn single_component_passes_through() {
        let bm25 = run(vec![list("1", &["a", "b"]), list("2", &["c"])]);
        let comps: HashMap<_, _> = [(Component::Bm25, bm25.clone())].into();
        let cfg = &standard_runs(60.0)[0];
        let out = build_run(cfg, &comps, 1000).unwrap();
        for (t, l) in &out {
            assert_eq!(l.entries(), bm25[t].entries());
            assert_eq!(l.run_tag(), "upv_bm25");
        }
    }

    #[test]
    fn duplicate_input_keeps_order() {
        let bm25 = run(vec![list("1", &["q", "a", "m", "b"])]);
        let comps: HashMap<_, _> = [(Component::Bm25, bm25.clone()), (Component::Semantic, bm25)].into();
        let out = build_run(&standard_runs(60.0)[1], &comps, 1000).unwrap();
        assert_eq!(out["1"].doc_ids().collect::<Vec<_>>(), ["q", "a", "m", "b"]);
        assert_abs_diff_eq!(out["1"].entries()[0].score, 2.0 / 61.0, epsilon = 1e-15);
    }

    #[test]
    fn missing_component_or_topic() {
        let bm25 = run(vec![list("1", &["a"]), list("2", &["b"])]);
        let sem = run(vec![list("1", &["a"])]);
        let comps: HashMap<_, _> = [(Component::Bm25, bm25.clone())].into();
        assert!(build_run(&standard_runs(60.0)[1], &comps, 1000).is_err());
        let comps: HashMap<_, _> = [(Component::Bm25, bm25), (Component::Semantic, sem)].into();
        let err = build_run(&standard_runs(60.0)[1], &comps, 1000).unwrap_err();
        assert!(err.to_string().contains("topic 2"), "{err}");
    }

    #[test]
    fn depth_truncation() {
        let ids: Vec<String> = (0..30).map(|i| format!("d{i:02}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let bm25 = run(vec![list("1", &refs)]);
        let comps: HashMap<_, _> = [(Component::Bm25, bm25.clone()), (Component::Semantic, bm25)].into();
        let out = build_run(&standard_runs(60.0)[1], &comps, 10).unwrap();
        assert_eq!(out["1"].len(), 10);
    }

    #[test]
    fn config_validation() {
        assert!(FusionConfig::new("", vec![Component::Bm25], 60.0).is_err());
        assert!(FusionConfig::new("x", vec![], 60.0).is_err());
        assert!(FusionConfig::new("x", vec![Component::Bm25, Component::Bm25], 60.0).is_err());
        assert!(FusionConfig::new("x", vec![Component::Bm25], -1.0).is_err());
        assert_eq!("qe_large".parse::<Component>().unwrap(), Component::QeLarge);
    }

    #[test]
    fn standard_matrix_shape() {
        let runs = standard_runs(60.0);
        let tags: Vec<_> = runs.iter().map(|r| r.tag.as_str()).collect();
        assert_eq!(
            tags,
            [
                "upv_bm25",
                "upv_fuse_2",
                "upv_fuse_3",
                "upv_fuse_5",
                "upv_fuse_7",
                "upv_fuse_9"
            ]
        );
        assert!(runs.iter().all(|r| r.components[0] == Component::Bm25));
        assert!(!runs
            .iter()
            .any(|r| r.components.contains(&Component::QeBase) && r.components.contains(&Component::QeLarge)));
    }
}
