//! Reaction-prediction ranking: candidate pools, L2-distance ranks, and the
//! MRR / MR / Hit@k report, plus multi-choice product selection.

use serde::Serialize;

use crate::graph::{merge_graphs, MolecularGraph, Reaction};
use crate::numeric::l2_distance;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no ranks to aggregate")]
    EmptyRanks,
    #[error("truth index {index} outside pool of {pool}")]
    TruthMissing { index: usize, pool: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct RankingReport {
    pub mrr: f64,
    pub mr: f64,
    pub hit1: f64,
    pub hit3: f64,
    pub hit5: f64,
    pub hit10: f64,
    /// 1-based rank of the true product for each query, in query order.
    pub ranks: Vec<usize>,
}

/// Unique product-side graphs across the test set (each reaction's product
/// molecules merged into one graph), deduplicated by the canonical key in
/// first-occurrence order. Also returns, per reaction, the pool index of its
/// own product.
pub fn build_candidate_pool(test: &[Reaction]) -> (Vec<MolecularGraph>, Vec<usize>) {
    let mut pool: Vec<MolecularGraph> = Vec::new();
    let mut keys: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let mut truth = Vec::with_capacity(test.len());
    for reaction in test {
        let (merged, _) = merge_graphs(&reaction.products);
        let key = merged.canonical_key();
        let index = *keys.entry(key).or_insert_with(|| {
            pool.push(merged);
            pool.len() - 1
        });
        truth.push(index);
    }
    (pool, truth)
}

/// 1-based rank of the truth among the pool by L2 distance to the query:
/// 1 + (strictly closer candidates) + (equidistant candidates that precede
/// the truth in pool order).
pub fn rank_products(
    query: &[f64],
    pool: &[Vec<f64>],
    truth: usize,
) -> Result<usize, EvalError> {
    if truth >= pool.len() {
        return Err(EvalError::TruthMissing {
            index: truth,
            pool: pool.len(),
        });
    }
    let truth_distance = l2_distance(query, &pool[truth]);
    let mut rank = 1;
    for (i, candidate) in pool.iter().enumerate() {
        if i == truth {
            continue;
        }
        let d = l2_distance(query, candidate);
        if d < truth_distance || (d == truth_distance && i < truth) {
            rank += 1;
        }
    }
    Ok(rank)
}

pub fn ranking_metrics(ranks: &[usize]) -> Result<RankingReport, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::EmptyRanks);
    }
    let n = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let mr = ranks.iter().map(|&r| r as f64).sum::<f64>() / n;
    let hit = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(RankingReport {
        mrr,
        mr,
        hit1: hit(1),
        hit3: hit(3),
        hit5: hit(5),
        hit10: hit(10),
        ranks: ranks.to_vec(),
    })
}

/// Selects the choice with the smallest L2 distance to the query (ties go to
/// the lowest index). Returns the selected index and whether it is the truth.
pub fn multi_choice(query: &[f64], choices: &[Vec<f64>], truth: usize) -> (usize, bool) {
    let mut best = 0;
    let mut best_distance = f64::INFINITY;
    for (i, choice) in choices.iter().enumerate() {
        let d = l2_distance(query, choice);
        if d < best_distance {
            best_distance = d;
            best = i;
        }
    }
    (best, best == truth)
}
