//! Filtered ranking evaluation (MR, MRR, Hits@K), the per-category
//! breakdown and the scoring-time scaling benchmark.

mod bench;

pub use bench::{bench_scaling, fit_linear, EfficiencyPoint, EfficiencyReport, LinearFit};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{FilterIndex, KnowledgeGraph, RelationCategory, Triple};
use crate::models::ScoreModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation split is empty")]
    EmptySplit,
    #[error("answer {answer} of {query:?} is not a known completion in the filter index")]
    AnswerNotKnown { query: Query, answer: usize },
    #[error("benchmark error: {0}")]
    Bench(String),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// A link-prediction query with one open slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Query {
    /// `(head, relation, ?)`
    Tail { head: usize, relation: usize },
    /// `(?, relation, tail)`
    Head { relation: usize, tail: usize },
}

impl Query {
    pub fn candidate(&self, e: usize) -> Triple {
        match *self {
            Query::Tail { head, relation } => Triple::new(head, relation, e),
            Query::Head { relation, tail } => Triple::new(e, relation, tail),
        }
    }
}

#[inline]
fn ord_score(x: f64) -> f64 {
    if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x
    }
}

/// Filtered rank of `answer` given all candidate scores. Every candidate in
/// `known` other than the answer is removed; ties count half. NaN scores are
/// treated as −∞.
pub fn rank_from_scores<'a, I>(scores: &[f64], answer: usize, known: I) -> f64
where
    I: IntoIterator<Item = &'a usize>,
{
    let target = ord_score(scores[answer]);
    let mut greater = 0usize;
    let mut equal = 0usize;
    for (e, &s) in scores.iter().enumerate() {
        if e == answer {
            continue;
        }
        let s = ord_score(s);
        if s > target {
            greater += 1;
        } else if s == target {
            equal += 1;
        }
    }
    // Undo the contribution of filtered candidates.
    for &e in known {
        if e == answer {
            continue;
        }
        let s = ord_score(scores[e]);
        if s > target {
            greater -= 1;
        } else if s == target {
            equal -= 1;
        }
    }
    1.0 + greater as f64 + 0.5 * equal as f64
}

/// Scores every candidate for `query` and returns the filtered rank.
pub fn rank_query<M: ScoreModel + ?Sized>(
    model: &M,
    query: Query,
    answer: usize,
    filter: &FilterIndex,
) -> Result<f64, EvalError> {
    let mut scores = vec![0.0; model.num_entities()];
    rank_query_with_buffer(model, query, answer, filter, &mut scores)
}

fn rank_query_with_buffer<M: ScoreModel + ?Sized>(
    model: &M,
    query: Query,
    answer: usize,
    filter: &FilterIndex,
    scores: &mut [f64],
) -> Result<f64, EvalError> {
    let known = match query {
        Query::Tail { head, relation } => {
            model.score_tails(head, relation, scores);
            filter.tails(head, relation)
        }
        Query::Head { relation, tail } => {
            model.score_heads(relation, tail, scores);
            filter.heads(relation, tail)
        }
    };
    let known = known.ok_or(EvalError::AnswerNotKnown { query, answer })?;
    if !known.contains(&answer) {
        return Err(EvalError::AnswerNotKnown { query, answer });
    }
    Ok(rank_from_scores(scores, answer, known))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Head,
    Tail,
    Combined,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Head => "head",
            Direction::Tail => "tail",
            Direction::Combined => "combined",
        }
    }
}

pub const HITS_AT: [usize; 3] = [1, 3, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub direction: Direction,
    pub n_queries: usize,
    pub mr: f64,
    pub mrr: f64,
    /// K → fraction of queries with rank ≤ K.
    pub hits: BTreeMap<usize, f64>,
}

impl RankingReport {
    pub fn from_ranks(direction: Direction, ranks: &[f64]) -> Self {
        let n = ranks.len();
        let denom = n.max(1) as f64;
        let mr = ranks.iter().sum::<f64>() / denom;
        let mrr = ranks.iter().map(|r| 1.0 / r).sum::<f64>() / denom;
        let hits = HITS_AT
            .iter()
            .map(|&k| (k, ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / denom))
            .collect();
        Self {
            direction,
            n_queries: n,
            mr,
            mrr,
            hits,
        }
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        self.hits.get(&k).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub head: RankingReport,
    pub tail: RankingReport,
    pub combined: RankingReport,
}

fn report_header() -> String {
    format!(
        "{:<14} {:<9} {:>8} {:>10} {:>8} {:>8} {:>8} {:>8}\n",
        "bucket", "direction", "n", "MR", "MRR", "H@1", "H@3", "H@10"
    )
}

fn report_line(bucket: &str, r: &RankingReport) -> String {
    format!(
        "{:<14} {:<9} {:>8} {:>10.3} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
        bucket,
        r.direction.label(),
        r.n_queries,
        r.mr,
        r.mrr,
        r.hits_at(1),
        r.hits_at(3),
        r.hits_at(10)
    )
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = report_header();
        for r in [&self.head, &self.tail, &self.combined] {
            s.push_str(&report_line("all", r));
        }
        s
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Parallel workers; results do not depend on this.
    pub workers: usize,
}

/// Head and tail ranks for every triple of `split`, in split order. With a
/// reciprocal graph the head query of `(h, r, t)` is asked as the tail query
/// of `(t, r + |R|, h)`.
pub fn query_ranks<M: ScoreModel>(
    model: &M,
    kg: &KnowledgeGraph,
    split: &[Triple],
    opts: &EvalOptions,
) -> Result<Vec<(f64, f64)>, EvalError> {
    let ne = model.num_entities();
    let one = |t: &Triple, buf: &mut Vec<f64>| -> Result<(f64, f64), EvalError> {
        let head = if kg.reciprocal && t.relation < kg.base_relations {
            let q = Query::Tail {
                head: t.tail,
                relation: t.relation + kg.base_relations,
            };
            rank_query_with_buffer(model, q, t.head, &kg.filter, buf)?
        } else {
            let q = Query::Head {
                relation: t.relation,
                tail: t.tail,
            };
            rank_query_with_buffer(model, q, t.head, &kg.filter, buf)?
        };
        let q = Query::Tail {
            head: t.head,
            relation: t.relation,
        };
        let tail = rank_query_with_buffer(model, q, t.tail, &kg.filter, buf)?;
        Ok((head, tail))
    };
    if opts.workers <= 1 {
        let mut buf = vec![0.0; ne];
        split.iter().map(|t| one(t, &mut buf)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| EvalError::Pool(e.to_string()))?;
        pool.install(|| {
            split
                .par_iter()
                .map_init(|| vec![0.0; ne], |buf, t| one(t, buf))
                .collect()
        })
    }
}

/// Filtered MR / MRR / Hits@K over `split`, per direction and combined.
pub fn evaluate<M: ScoreModel>(
    model: &M,
    kg: &KnowledgeGraph,
    split: &[Triple],
    opts: &EvalOptions,
) -> Result<EvaluationReport, EvalError> {
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let ranks = query_ranks(model, kg, split, opts)?;
    let heads: Vec<f64> = ranks.iter().map(|r| r.0).collect();
    let tails: Vec<f64> = ranks.iter().map(|r| r.1).collect();
    let all: Vec<f64> = heads.iter().chain(&tails).copied().collect();
    Ok(EvaluationReport {
        head: RankingReport::from_ranks(Direction::Head, &heads),
        tail: RankingReport::from_ranks(Direction::Tail, &tails),
        combined: RankingReport::from_ranks(Direction::Combined, &all),
    })
}

pub const UNCATEGORIZED: &str = "uncategorized";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub report: RankingReport,
}

/// Metrics per (relation category, direction). Rows are sorted by category
/// label, then head before tail; empty buckets are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub rows: Vec<CategoryRow>,
}

impl CategoryReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,direction,mr,mrr,hits1,hits3,hits10,n\n");
        for row in &self.rows {
            let r = &row.report;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                row.category,
                r.direction.label(),
                r.mr,
                r.mrr,
                r.hits_at(1),
                r.hits_at(3),
                r.hits_at(10),
                r.n_queries
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = report_header();
        for row in &self.rows {
            s.push_str(&report_line(&row.category, &row.report));
        }
        s
    }

    pub fn get(&self, category: &str, direction: Direction) -> Option<&RankingReport> {
        self.rows
            .iter()
            .find(|r| r.category == category && r.report.direction == direction)
            .map(|r| &r.report)
    }
}

/// Buckets queries by the category of their (base) relation. Relations
/// missing from `categories` go to the "uncategorized" bucket.
pub fn evaluate_by_category<M: ScoreModel>(
    model: &M,
    kg: &KnowledgeGraph,
    split: &[Triple],
    categories: &BTreeMap<usize, RelationCategory>,
    opts: &EvalOptions,
) -> Result<CategoryReport, EvalError> {
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let ranks = query_ranks(model, kg, split, opts)?;
    let mut buckets: BTreeMap<(String, Direction), Vec<f64>> = BTreeMap::new();
    for (t, (h, tl)) in split.iter().zip(ranks) {
        let label = categories
            .get(&t.relation)
            .map(|c| c.kind.label().to_owned())
            .unwrap_or_else(|| UNCATEGORIZED.to_owned());
        buckets.entry((label.clone(), Direction::Head)).or_default().push(h);
        buckets.entry((label, Direction::Tail)).or_default().push(tl);
    }
    let rows = buckets
        .into_iter()
        .map(|((category, dir), ranks)| CategoryRow {
            category,
            report: RankingReport::from_ranks(dir, &ranks),
        })
        .collect();
    Ok(CategoryReport { rows })
}
