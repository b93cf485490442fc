//! Filtered link-prediction ranking and MRR / MR / Hits@N aggregates.
//!
//! For a query `(h, r, ?)` every entity is scored as a tail candidate.
//! Candidates that form some other known triple are removed; the gold entity
//! stays. The rank is `1 + #better + #tied / 2`, so ties are averaged rather
//! than resolved in the model's favour. Head queries work symmetrically.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{score_batch_all_heads, score_batch_all_tails, EmbeddingTables, ModelConfig};
use crate::store::{Split, Triple, TripleStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Predict the head of `(?, r, t)`.
    Head,
    /// Predict the tail of `(h, r, ?)`.
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryRank {
    pub triple: Triple,
    pub direction: Direction,
    pub rank: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mrr: f64,
    pub mr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub queries: usize,
}

impl Metrics {
    /// Aggregates a list of ranks. Returns `None` for an empty list.
    pub fn from_ranks(ranks: &[f64]) -> Option<Self> {
        if ranks.is_empty() {
            return None;
        }
        let n = ranks.len() as f64;
        let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Some(Self {
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            mr: ranks.iter().sum::<f64>() / n,
            hits1: hits(1.0),
            hits3: hits(3.0),
            hits10: hits(10.0),
            queries: ranks.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub queries: Vec<QueryRank>,
    pub metrics: Metrics,
}

impl RankReport {
    pub fn from_queries(queries: Vec<QueryRank>) -> Result<Self> {
        let ranks: Vec<f64> = queries.iter().map(|q| q.rank).collect();
        let metrics =
            Metrics::from_ranks(&ranks).ok_or_else(|| Error::Config("no queries to aggregate".into()))?;
        Ok(Self { queries, metrics })
    }
}

/// Filtered rank of `gold` given every candidate's plausibility
/// (higher = better) and a predicate marking filtered candidates.
pub fn filtered_rank<F>(plausibility: &[f64], gold: usize, is_filtered: F) -> f64
where
    F: Fn(usize) -> bool,
{
    let g = plausibility[gold];
    let mut better = 0usize;
    let mut ties = 0usize;
    for (c, &p) in plausibility.iter().enumerate() {
        if c == gold || is_filtered(c) {
            continue;
        }
        if p > g {
            better += 1;
        } else if p == g {
            ties += 1;
        }
    }
    1.0 + better as f64 + ties as f64 / 2.0
}

/// Plausibility of every candidate entity in the queried slot.
pub fn candidate_plausibility(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    triple: &Triple,
    direction: Direction,
) -> Result<Vec<f64>> {
    let raw = match direction {
        Direction::Tail => score_batch_all_tails(config, tables, triple.head, triple.relation)?,
        Direction::Head => score_batch_all_heads(config, tables, triple.relation, triple.tail)?,
    };
    Ok(raw.into_iter().map(|s| -config.energy_of(s)).collect())
}

/// Filtered rank of the gold entity of `triple` in the given direction.
pub fn rank_query(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    store: &TripleStore,
    triple: &Triple,
    direction: Direction,
) -> Result<f64> {
    let scores = candidate_plausibility(config, tables, triple, direction)?;
    Ok(match direction {
        Direction::Tail => {
            let known = store.known_tails(triple.head, triple.relation);
            filtered_rank(&scores, triple.tail, |c| known.is_some_and(|s| s.contains(&c)))
        }
        Direction::Head => {
            let known = store.known_heads(triple.relation, triple.tail);
            filtered_rank(&scores, triple.head, |c| known.is_some_and(|s| s.contains(&c)))
        }
    })
}

/// Ranks both directions of every triple in `triples`, in order: for each
/// triple its tail query, then its head query.
pub fn rank_triples(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    store: &TripleStore,
    triples: &[Triple],
) -> Result<Vec<QueryRank>> {
    let mut out = Vec::with_capacity(2 * triples.len());
    for t in triples {
        for direction in [Direction::Tail, Direction::Head] {
            let rank = rank_query(config, tables, store, t, direction)?;
            out.push(QueryRank {
                triple: *t,
                direction,
                rank,
            });
        }
    }
    Ok(out)
}

/// Filtered evaluation of one split with head and tail queries pooled.
pub fn evaluate_split(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    store: &TripleStore,
    split: Split,
) -> Result<RankReport> {
    let triples = store.split(split);
    if triples.is_empty() {
        return Err(Error::Config(format!("{} split is empty", split.name())));
    }
    RankReport::from_queries(rank_triples(config, tables, store, triples)?)
}
