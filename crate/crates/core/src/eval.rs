//! Multi-aspect evaluation: nDCG, P@10, AP/MAP, the convex aggregating
//! measure (CAM) over per-aspect MAPs, rank-biased overlap, and
//! helpful/harmful compatibility against ideal rankings.
//!
//! Per-topic metrics return `None` when the topic has nothing to find
//! (IDCG = 0, no relevant documents, empty ideal list). Such topics are
//! left out of means and counted.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{derive_binary_qrels, derive_relevance, AspectCombo, DEFAULT_USEFULNESS_THRESHOLD};
use crate::error::{Error, Result};
use crate::model::{tie_rule, Aspect, Qrels, RankedList, Run};

pub const DEFAULT_EVAL_DEPTH: usize = 1000;
pub const DEFAULT_PERSISTENCE: f64 = 0.95;
pub const PRECISION_CUTOFF: usize = 10;

/// `Σ_{i ≤ depth} gain(d_i) / log2(i + 1)`
pub fn dcg<'a>(ranking: impl IntoIterator<Item = &'a str>, gain: impl Fn(&str) -> f64, depth: usize) -> f64 {
    ranking
        .into_iter()
        .take(depth)
        .enumerate()
        .map(|(i, d)| gain(d) / ((i + 2) as f64).log2())
        .sum()
}

/// nDCG at `depth`, normalised by the ideal ordering of all judged gains.
pub fn ndcg(run: &RankedList, gains: &BTreeMap<String, f64>, depth: usize) -> Option<f64> {
    let mut ideal: Vec<f64> = gains.values().copied().filter(|&g| g > 0.0).collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(depth)
        .enumerate()
        .map(|(i, g)| g / ((i + 2) as f64).log2())
        .sum();
    if idcg <= 0.0 {
        return None;
    }
    let dcg = dcg(run.doc_ids(), |d| gains.get(d).copied().unwrap_or(0.0), depth);
    Some(dcg / idcg)
}

/// Fraction of the top `cutoff` that is relevant; short lists count as
/// padded with non-relevant documents.
pub fn precision_at(run: &RankedList, relevant: &BTreeSet<String>, cutoff: usize) -> f64 {
    let cutoff = cutoff.max(1);
    let hits = run.doc_ids().take(cutoff).filter(|d| relevant.contains(*d)).count();
    hits as f64 / cutoff as f64
}

/// Sum of precision at each relevant rank, over the total relevant count.
pub fn average_precision(run: &RankedList, relevant: &BTreeSet<String>, depth: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in run.doc_ids().take(depth).enumerate() {
        if relevant.contains(d) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

/// Truncated rank-biased overlap:
/// `(1 − p) · Σ_{d=1..depth} p^{d−1} · |A[..d] ∩ B[..d]| / d`.
/// A list shorter than `d` contributes its whole prefix.
pub fn rbo<S: AsRef<str>>(a: &[S], b: &[S], p: f64, depth: usize) -> f64 {
    let mut seen_a: HashSet<&str> = HashSet::new();
    let mut seen_b: HashSet<&str> = HashSet::new();
    let mut overlap = 0usize;
    let mut weight = 1.0;
    let mut sum = 0.0;
    for d in 0..depth {
        let x = a.get(d).map(AsRef::as_ref);
        let y = b.get(d).map(AsRef::as_ref);
        match (x, y) {
            (Some(x), Some(y)) if x == y => overlap += 1,
            _ => {
                if let Some(x) = x {
                    overlap += usize::from(seen_b.contains(x));
                }
                if let Some(y) = y {
                    overlap += usize::from(seen_a.contains(y));
                }
            }
        }
        if let Some(x) = x {
            seen_a.insert(x);
        }
        if let Some(y) = y {
            seen_b.insert(y);
        }
        sum += weight * overlap as f64 / (d + 1) as f64;
        weight *= p;
    }
    (1.0 - p) * sum
}

/// Which judged documents make up an ideal ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Correct and credible.
    Helpful,
    /// Incorrect.
    Harmful,
}

impl Polarity {
    pub fn name(self) -> &'static str {
        match self {
            Polarity::Helpful => "helpful",
            Polarity::Harmful => "harmful",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompatibilitySpec {
    pub polarity: Polarity,
    pub persistence: f64,
    pub depth: usize,
}

impl CompatibilitySpec {
    pub fn new(polarity: Polarity, persistence: f64, depth: usize) -> Result<Self> {
        if !(persistence > 0.0 && persistence < 1.0) {
            return Err(Error::invalid(
                "compatibility",
                format!("persistence must be in (0, 1), got {persistence}"),
            ));
        }
        if depth == 0 {
            return Err(Error::invalid("compatibility", "depth must be at least 1"));
        }
        Ok(Self {
            polarity,
            persistence,
            depth,
        })
    }
}

/// Qualifying documents for one topic, by usefulness descending then doc id.
pub fn ideal_ranking(qrels: &Qrels, topic_id: &str, polarity: Polarity) -> Vec<String> {
    let Some(judged) = qrels.topic(topic_id) else {
        return Vec::new();
    };
    let mut docs: Vec<(&str, u32)> = judged
        .values()
        .filter(|j| match polarity {
            Polarity::Helpful => j.correctness == Some(true) && j.credibility == Some(true),
            Polarity::Harmful => j.correctness == Some(false),
        })
        .map(|j| (j.doc_id.as_str(), j.usefulness))
        .collect();
    docs.sort_by(|a, b| tie_rule(f64::from(a.1), a.0, f64::from(b.1), b.0));
    docs.into_iter().map(|(d, _)| d.to_owned()).collect()
}

/// RBO of the run against the ideal, divided by the ideal's self-RBO.
pub fn topic_compatibility(run: &RankedList, ideal: &[String], spec: &CompatibilitySpec) -> Option<f64> {
    if ideal.is_empty() {
        return None;
    }
    let ranking: Vec<&str> = run.doc_ids().take(spec.depth).collect();
    let ideal: Vec<&str> = ideal.iter().map(String::as_str).collect();
    let norm = rbo(&ideal, &ideal, spec.persistence, spec.depth);
    Some(rbo(&ranking, &ideal, spec.persistence, spec.depth) / norm)
}

/// A mean over topics plus how many topics were left out.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricValue {
    pub mean: Option<f64>,
    pub topics: usize,
    pub excluded: usize,
}

impl MetricValue {
    fn from_topics(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let (mut sum, mut topics, mut excluded) = (0.0, 0, 0);
        for v in values {
            match v {
                Some(v) => {
                    sum += v;
                    topics += 1;
                }
                None => excluded += 1,
            }
        }
        Self {
            mean: (topics > 0).then(|| sum / topics as f64),
            topics,
            excluded,
        }
    }
}

fn empty_list(topic_id: &str) -> RankedList {
    RankedList::empty(topic_id, "")
}

/// Applies `f` to every judged topic; a topic the run did not answer is
/// scored as an empty ranking.
fn per_topic<F>(run: &Run, qrels: &Qrels, f: F) -> MetricValue
where
    F: Fn(&str, &RankedList) -> Option<f64>,
{
    MetricValue::from_topics(qrels.topic_ids().map(|t| match run.get(t) {
        Some(list) => f(t, list),
        None => f(t, &empty_list(t)),
    }))
}

pub fn mean_average_precision(run: &Run, qrels: &Qrels, aspects: &[Aspect], settings: &EvalSettings) -> MetricValue {
    let rel = derive_relevance(qrels, aspects, settings.usefulness_threshold);
    per_topic(run, qrels, |t, list| average_precision(list, &rel[t], settings.depth))
}

/// `Σ_a w_a · MAP_a`. Undefined if any aspect has no relevant documents
/// in any topic.
pub fn cam(
    run: &Run,
    qrels: &Qrels,
    aspects: &[Aspect],
    weights: &[f64],
    settings: &EvalSettings,
) -> Result<Option<f64>> {
    if aspects.len() != weights.len() || aspects.is_empty() {
        return Err(Error::invalid(
            "cam",
            format!("{} aspects but {} weights", aspects.len(), weights.len()),
        ));
    }
    if weights.iter().any(|&w| w.is_nan() || w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("cam", "weights must be non-negative and sum to 1"));
    }
    let maps: Option<Vec<f64>> = aspects
        .iter()
        .map(|&a| mean_average_precision(run, qrels, &[a], settings).mean)
        .collect();
    Ok(maps.map(|m| convex_combination(&m, weights)))
}

pub fn convex_combination(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

pub fn compatibility(run: &Run, qrels: &Qrels, spec: &CompatibilitySpec) -> MetricValue {
    per_topic(run, qrels, |t, list| {
        topic_compatibility(list, &ideal_ranking(qrels, t, spec.polarity), spec)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Measure {
    /// nDCG with raw usefulness grades as gains.
    GradedNdcg,
    BinaryNdcg(AspectCombo),
    PrecisionAt10(AspectCombo),
    /// CAM over per-aspect MAPs with equal weights.
    CamMap(Vec<Aspect>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSpec {
    pub id: u8,
    pub name: &'static str,
    pub metric: &'static str,
    pub measure: Measure,
}

/// The eight aspect evaluations, in column order.
pub fn aspect_specs() -> Vec<EvalSpec> {
    use Aspect::{Correct, Credible, Useful};
    use AspectCombo::{UsefulCorrect, UsefulCorrectCredible, UsefulCredible};
    vec![
        EvalSpec {
            id: 1,
            name: "graded.usefulness",
            metric: "nDCG",
            measure: Measure::GradedNdcg,
        },
        EvalSpec {
            id: 2,
            name: "binary.useful-correct",
            metric: "nDCG",
            measure: Measure::BinaryNdcg(UsefulCorrect),
        },
        EvalSpec {
            id: 3,
            name: "binary.useful-correct*",
            metric: "P@10",
            measure: Measure::PrecisionAt10(UsefulCorrect),
        },
        EvalSpec {
            id: 4,
            name: "binary.useful-credible",
            metric: "nDCG",
            measure: Measure::BinaryNdcg(UsefulCredible),
        },
        EvalSpec {
            id: 5,
            name: "useful-correct-credible",
            metric: "nDCG",
            measure: Measure::BinaryNdcg(UsefulCorrectCredible),
        },
        EvalSpec {
            id: 6,
            name: "2aspects.correct-credible",
            metric: "CAM_MAP",
            measure: Measure::CamMap(vec![Correct, Credible]),
        },
        EvalSpec {
            id: 7,
            name: "2aspects.useful-credible",
            metric: "CAM_MAP",
            measure: Measure::CamMap(vec![Useful, Credible]),
        },
        EvalSpec {
            id: 8,
            name: "3aspects",
            metric: "CAM_MAP_3",
            measure: Measure::CamMap(vec![Useful, Correct, Credible]),
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Cutoff for nDCG and AP.
    pub depth: usize,
    pub usefulness_threshold: u32,
    pub persistence: f64,
    pub compat_depth: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            depth: DEFAULT_EVAL_DEPTH,
            usefulness_threshold: DEFAULT_USEFULNESS_THRESHOLD,
            persistence: DEFAULT_PERSISTENCE,
            compat_depth: DEFAULT_EVAL_DEPTH,
        }
    }
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::invalid("eval settings", "depth must be at least 1"));
        }
        CompatibilitySpec::new(Polarity::Helpful, self.persistence, self.compat_depth)?;
        Ok(())
    }

    pub fn compatibility_specs(&self) -> [CompatibilitySpec; 2] {
        [Polarity::Harmful, Polarity::Helpful].map(|polarity| CompatibilitySpec {
            polarity,
            persistence: self.persistence,
            depth: self.compat_depth,
        })
    }
}

pub fn evaluate_spec(run: &Run, qrels: &Qrels, spec: &EvalSpec, settings: &EvalSettings) -> MetricValue {
    let t = settings.usefulness_threshold;
    match &spec.measure {
        Measure::GradedNdcg => {
            let gains: BTreeMap<&str, BTreeMap<String, f64>> = qrels
                .topic_ids()
                .map(|tid| {
                    let g = qrels
                        .topic(tid)
                        .into_iter()
                        .flat_map(|m| m.values())
                        .map(|j| (j.doc_id.clone(), f64::from(j.usefulness)))
                        .collect();
                    (tid, g)
                })
                .collect();
            per_topic(run, qrels, |tid, list| ndcg(list, &gains[tid], settings.depth))
        }
        Measure::BinaryNdcg(combo) => {
            let rel = derive_binary_qrels(qrels, *combo, t);
            per_topic(run, qrels, |tid, list| {
                let gains = rel[tid].iter().map(|d| (d.clone(), 1.0)).collect();
                ndcg(list, &gains, settings.depth)
            })
        }
        Measure::PrecisionAt10(combo) => {
            let rel = derive_binary_qrels(qrels, *combo, t);
            per_topic(run, qrels, |tid, list| {
                (!rel[tid].is_empty()).then(|| precision_at(list, &rel[tid], PRECISION_CUTOFF))
            })
        }
        Measure::CamMap(aspects) => {
            let weights = vec![1.0 / aspects.len() as f64; aspects.len()];
            let per_aspect: Vec<MetricValue> = aspects
                .iter()
                .map(|&a| mean_average_precision(run, qrels, &[a], settings))
                .collect();
            let mean = per_aspect
                .iter()
                .map(|m| m.mean)
                .collect::<Option<Vec<f64>>>()
                .map(|m| convex_combination(&m, &weights));
            MetricValue {
                mean,
                topics: per_aspect.iter().map(|m| m.topics).min().unwrap_or(0),
                excluded: per_aspect.iter().map(|m| m.excluded).max().unwrap_or(0),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub id: String,
    pub label: String,
    pub lower_is_better: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub value: MetricValue,
    pub better_than_baseline: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub run_tag: String,
    pub cells: Vec<Cell>,
    /// Run topics absent from the qrels.
    pub unjudged_topics: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalTable {
    pub baseline: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
}

/// Evaluates every run on the eight aspect measures and the two
/// compatibility measures, then flags cells that beat `baseline`
/// (lower is better for harmful compatibility).
pub fn evaluate_runs(
    runs: &[(String, Run)],
    qrels: &Qrels,
    settings: &EvalSettings,
    baseline: &str,
) -> Result<EvalTable> {
    settings.validate()?;
    let base_idx = runs.iter().position(|(tag, _)| tag == baseline).ok_or_else(|| {
        Error::invalid(
            "baseline",
            format!("baseline run `{baseline}` is not among the evaluated runs"),
        )
    })?;
    let specs = aspect_specs();
    let compat = settings.compatibility_specs();

    let mut columns: Vec<Column> = specs
        .iter()
        .map(|s| Column {
            id: s.id.to_string(),
            label: format!("{} {}", s.name, s.metric),
            lower_is_better: false,
        })
        .collect();
    columns.extend(compat.iter().map(|c| Column {
        id: c.polarity.name().to_owned(),
        label: format!("{} compatibility", c.polarity.name()),
        lower_is_better: c.polarity == Polarity::Harmful,
    }));

    let values: Vec<Vec<MetricValue>> = runs
        .par_iter()
        .map(|(_, run)| {
            let mut v: Vec<MetricValue> = specs.iter().map(|s| evaluate_spec(run, qrels, s, settings)).collect();
            v.extend(compat.iter().map(|c| compatibility(run, qrels, c)));
            v
        })
        .collect();

    let rows = runs
        .iter()
        .zip(&values)
        .map(|((tag, run), vals)| {
            let unjudged = run.keys().filter(|t| qrels.topic(t).is_none()).count();
            if unjudged > 0 {
                log::warn!("run {tag}: {unjudged} topics have no judgments and were skipped");
            }
            let cells = vals
                .iter()
                .zip(&values[base_idx])
                .zip(&columns)
                .map(|((v, b), col)| Cell {
                    value: *v,
                    better_than_baseline: match (v.mean, b.mean) {
                        (Some(v), Some(b)) if col.lower_is_better => v < b,
                        (Some(v), Some(b)) => v > b,
                        _ => false,
                    },
                })
                .collect();
            Row {
                run_tag: tag.clone(),
                cells,
                unjudged_topics: unjudged,
            }
        })
        .collect();
    Ok(EvalTable {
        baseline: baseline.to_owned(),
        columns,
        rows,
    })
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"))
}

impl EvalTable {
    /// Aligned table; `*` marks a cell better than the baseline.
    pub fn render_text(&self) -> String {
        let mut header = vec!["run".to_owned()];
        header.extend(self.columns.iter().map(|c| c.id.clone()));
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut line = vec![r.run_tag.clone()];
                line.extend(r.cells.iter().map(|c| {
                    format!(
                        "{}{}",
                        fmt_value(c.value.mean),
                        if c.better_than_baseline { "*" } else { " " }
                    )
                }));
                line
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|l| l[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for line in std::iter::once(&header).chain(&body) {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "* better than {}", self.baseline);
        for c in &self.columns {
            let _ = writeln!(out, "{:>8}: {}", c.id, c.label);
        }
        for r in &self.rows {
            for (c, cell) in self.columns.iter().zip(&r.cells) {
                if cell.value.excluded > 0 {
                    let _ = writeln!(
                        out,
                        "note: {} column {}: {} topics excluded (nothing to retrieve)",
                        r.run_tag, c.id, cell.value.excluded
                    );
                }
            }
        }
        out
    }

    /// Tab-separated `run_tag spec_id value better_than_baseline` rows.
    pub fn render_tsv(&self) -> String {
        let mut out = String::from("run_tag\tspec_id\tvalue\tbetter_than_baseline\n");
        for r in &self.rows {
            for (c, cell) in self.columns.iter().zip(&r.cells) {
                let value = cell.value.mean.map_or_else(|| "NA".to_owned(), |v| format!("{v:.6}"));
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    r.run_tag,
                    c.id,
                    value,
                    u8::from(cell.better_than_baseline)
                );
            }
        }
        out
    }

    pub fn value(&self, run_tag: &str, column_id: &str) -> Option<f64> {
        let row = self.rows.iter().find(|r| r.run_tag == run_tag)?;
        let col = self.columns.iter().position(|c| c.id == column_id)?;
        row.cells[col].value.mean
    }
}

impl fmt::Display for EvalTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AspectJudgment;
    use approx::assert_abs_diff_eq;

    fn list(ids: &[&str]) -> RankedList {
        let n = ids.len();
        RankedList::from_scores(
            "1",
            "r",
            ids.iter()
                .enumerate()
                .map(|(i, d)| (d.to_string(), (n - i) as f64))
                .collect(),
        )
        .unwrap()
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ndcg_worked_example() {
        let gains: BTreeMap<String, f64> = [("d1".into(), 2.0), ("d2".into(), 1.0), ("d3".into(), 0.0)].into();
        let v = ndcg(&list(&["d2", "d1", "d3"]), &gains, 1000).unwrap();
        let dcg = 1.0 + 2.0 / 3f64.log2();
        let idcg = 2.0 + 1.0 / 3f64.log2();
        assert_abs_diff_eq!(dcg, 2.26186, epsilon = 1e-5);
        assert_abs_diff_eq!(idcg, 2.63093, epsilon = 1e-5);
        assert_abs_diff_eq!(v, 0.85972, epsilon = 1e-5);
        assert_abs_diff_eq!(
            ndcg(&list(&["d1", "d2", "d3"]), &gains, 1000).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(ndcg(&list(&["x", "y"]), &gains, 1000), Some(0.0));
        assert_eq!(ndcg(&list(&["x"]), &[("d".to_string(), 0.0)].into(), 1000), None);
    }

    #[test]
    fn precision_examples() {
        let ten: Vec<String> = (0..10).map(|i| format!("d{i}")).collect();
        let refs: Vec<&str> = ten.iter().map(String::as_str).collect();
        assert_eq!(precision_at(&list(&refs), &ten.iter().cloned().collect(), 10), 1.0);
        assert_abs_diff_eq!(precision_at(&list(&refs), &set(&["d0", "d4", "d9", "zz"]), 10), 0.3);
        assert_abs_diff_eq!(precision_at(&list(&["a", "b", "c", "d"]), &set(&["a", "c"]), 10), 0.2);
    }

    #[test]
    fn average_precision_examples() {
        assert_eq!(average_precision(&list(&["a", "b"]), &set(&["a"]), 1000), Some(1.0));
        assert_abs_diff_eq!(
            average_precision(&list(&["a", "x", "b"]), &set(&["a", "b"]), 1000).unwrap(),
            0.83333,
            epsilon = 1e-5
        );
        assert_eq!(average_precision(&list(&["x"]), &set(&["a"]), 1000), Some(0.0));
        assert_eq!(average_precision(&list(&["x"]), &set(&[]), 1000), None);
    }

    #[test]
    fn rbo_examples() {
        assert_abs_diff_eq!(rbo(&["a", "b"], &["b", "a"], 0.5, 2), 0.25, epsilon = 1e-15);
        assert_eq!(rbo(&["a", "b"], &["c", "d"], 0.9, 10), 0.0);
        let x = ["a", "b", "c", "d", "e"];
        assert_abs_diff_eq!(rbo(&x, &x, 0.9, 5), 1.0 - 0.9f64.powi(5), epsilon = 1e-12);
    }

    fn qrels(rows: &[(&str, u32, Option<bool>, Option<bool>)]) -> Qrels {
        let mut q = Qrels::default();
        for (d, u, c, cr) in rows {
            q.insert(AspectJudgment {
                topic_id: "1".into(),
                doc_id: d.to_string(),
                usefulness: *u,
                correctness: *c,
                credibility: *cr,
            });
        }
        q
    }

    #[test]
    fn ideal_lists() {
        let q = qrels(&[
            ("a", 1, Some(true), Some(true)),
            ("b", 2, Some(true), Some(true)),
            ("c", 2, Some(false), Some(true)),
            ("d", 0, Some(false), None),
            ("e", 1, None, Some(true)),
            ("f", 1, Some(true), Some(true)),
        ]);
        assert_eq!(ideal_ranking(&q, "1", Polarity::Helpful), ["b", "a", "f"]);
        assert_eq!(ideal_ranking(&q, "1", Polarity::Harmful), ["c", "d"]);
        assert!(ideal_ranking(&q, "nope", Polarity::Helpful).is_empty());
    }

    #[test]
    fn compatibility_five_doc_example() {
        // helpful: d4 (usefulness 2) then d2 (usefulness 1)
        let q = qrels(&[
            ("d1", 1, Some(false), Some(true)),
            ("d2", 1, Some(true), Some(true)),
            ("d3", 0, Some(true), Some(false)),
            ("d4", 2, Some(true), Some(true)),
            ("d5", 0, None, None),
        ]);
        let spec = CompatibilitySpec::new(Polarity::Helpful, 0.95, 10).unwrap();
        let run = list(&["d1", "d2", "d3", "d4", "d5"]);
        let ideal = ideal_ranking(&q, "1", Polarity::Helpful);
        assert_eq!(ideal, ["d4", "d2"]);

        // overlap at depth d, written out by hand
        let p: f64 = 0.95;
        let run_vs_ideal = [
            0.0,
            1.0 / 2.0,
            1.0 / 3.0,
            2.0 / 4.0,
            2.0 / 5.0,
            2.0 / 6.0,
            2.0 / 7.0,
            2.0 / 8.0,
            2.0 / 9.0,
            2.0 / 10.0,
        ];
        let ideal_vs_ideal = [
            1.0,
            1.0,
            2.0 / 3.0,
            2.0 / 4.0,
            2.0 / 5.0,
            2.0 / 6.0,
            2.0 / 7.0,
            2.0 / 8.0,
            2.0 / 9.0,
            2.0 / 10.0,
        ];
        let weighted = |a: &[f64]| (1.0 - p) * a.iter().enumerate().map(|(i, x)| p.powi(i as i32) * x).sum::<f64>();
        let expected = weighted(&run_vs_ideal) / weighted(&ideal_vs_ideal);

        let got = topic_compatibility(&run, &ideal, &spec).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(
            topic_compatibility(&list(&["d4", "d2", "d9"]), &ideal, &spec).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(topic_compatibility(&list(&["x", "y"]), &ideal, &spec), Some(0.0));
        assert_eq!(topic_compatibility(&run, &[], &spec), None);
    }

    #[test]
    fn cam_examples() {
        assert_abs_diff_eq!(convex_combination(&[0.4, 0.2], &[0.5, 0.5]), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(
            convex_combination(&[0.3, 0.6, 0.9], &[1.0 / 3.0; 3]),
            0.6,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(convex_combination(&[0.37, 0.37], &[0.5, 0.5]), 0.37, epsilon = 1e-15);
    }

    #[test]
    fn cam_rejects_bad_weights() {
        let q = qrels(&[("a", 1, Some(true), Some(true))]);
        let run: Run = [("1".to_string(), list(&["a"]))].into();
        let s = EvalSettings::default();
        assert!(cam(&run, &q, &[Aspect::Correct, Aspect::Credible], &[1.0], &s).is_err());
        assert!(cam(&run, &q, &[Aspect::Correct], &[0.5], &s).is_err());
        assert_eq!(
            cam(&run, &q, &[Aspect::Correct, Aspect::Credible], &[0.5, 0.5], &s).unwrap(),
            Some(1.0)
        );
    }

    #[test]
    fn cam_run_level() {
        // correct: {a, c}; credible: {b}
        let q = qrels(&[
            ("a", 1, Some(true), Some(false)),
            ("b", 1, Some(false), Some(true)),
            ("c", 1, Some(true), None),
        ]);
        let run: Run = [("1".to_string(), list(&["a", "b", "c"]))].into();
        let s = EvalSettings::default();
        let ap_correct = (1.0 + 2.0 / 3.0) / 2.0;
        let ap_credible = 1.0 / 2.0;
        let v = cam(&run, &q, &[Aspect::Correct, Aspect::Credible], &[0.5, 0.5], &s)
            .unwrap()
            .unwrap();
        assert_abs_diff_eq!(v, 0.5 * ap_correct + 0.5 * ap_credible, epsilon = 1e-15);
    }

    #[test]
    fn missing_topic_scores_zero_and_unjudged_run_topic_is_skipped() {
        let mut q = qrels(&[("a", 2, Some(true), Some(true))]);
        q.insert(AspectJudgment {
            topic_id: "2".into(),
            doc_id: "z".into(),
            usefulness: 1,
            correctness: Some(true),
            credibility: Some(true),
        });
        let run: Run = [
            ("1".to_string(), list(&["a"])),
            (
                "99".to_string(),
                RankedList::from_scores("99", "r", vec![("q".into(), 1.0)]).unwrap(),
            ),
        ]
        .into();
        let table = evaluate_runs(&[("r".into(), run)], &q, &EvalSettings::default(), "r").unwrap();
        assert_abs_diff_eq!(table.value("r", "1").unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(table.rows[0].unjudged_topics, 1);
    }

    #[test]
    fn self_baseline_has_no_flags() {
        let q = qrels(&[("a", 2, Some(true), Some(true)), ("b", 1, Some(false), Some(true))]);
        let run: Run = [("1".to_string(), list(&["b", "a"]))].into();
        let table = evaluate_runs(&[("r".into(), run)], &q, &EvalSettings::default(), "r").unwrap();
        assert_eq!(table.columns.len(), 10);
        assert!(table.rows[0].cells.iter().all(|c| !c.better_than_baseline));
    }

    #[test]
    fn flags_respect_polarity() {
        let q = qrels(&[
            ("good", 2, Some(true), Some(true)),
            ("bad", 1, Some(false), Some(false)),
        ]);
        let better: Run = [("1".to_string(), list(&["good", "bad"]))].into();
        let worse: Run = [("1".to_string(), list(&["bad", "good"]))].into();
        let table = evaluate_runs(
            &[("base".into(), worse), ("new".into(), better)],
            &q,
            &EvalSettings::default(),
            "base",
        )
        .unwrap();
        let row = &table.rows[1];
        let col = |id: &str| table.columns.iter().position(|c| c.id == id).unwrap();
        assert!(row.cells[col("1")].better_than_baseline);
        assert!(row.cells[col("helpful")].better_than_baseline);
        // less harmful content near the top is the better outcome
        assert!(table.value("new", "harmful").unwrap() < table.value("base", "harmful").unwrap());
        assert!(row.cells[col("harmful")].better_than_baseline);
        assert!(table.rows[0].cells.iter().all(|c| !c.better_than_baseline));
    }

    #[test]
    fn unknown_baseline_is_an_error() {
        assert!(evaluate_runs(&[], &Qrels::default(), &EvalSettings::default(), "x").is_err());
    }

    #[test]
    fn render_shapes() {
        let q = qrels(&[("a", 2, Some(true), Some(true))]);
        let run: Run = [("1".to_string(), list(&["a"]))].into();
        let table = evaluate_runs(
            &[("r".into(), run.clone()), ("s".into(), run)],
            &q,
            &EvalSettings::default(),
            "r",
        )
        .unwrap();
        let tsv = table.render_tsv();
        assert_eq!(tsv.lines().count(), 1 + 2 * 10);
        assert!(tsv.lines().nth(1).unwrap().starts_with("r\t1\t1.000000\t0"));
        let text = table.render_text();
        assert!(text.lines().next().unwrap().split_whitespace().count() == 11);
    }
}
