//! Ranking metrics and pseudo-mapping quality.
//!
//! Ranks break ties in favour of the lower candidate id: the truth's rank is
//! one plus the number of candidates scoring strictly higher, plus the
//! number of lower-id candidates scoring the same.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kg::{EntityId, MappingSet};
use crate::model::SimMatrix;

/// One ranked query: candidate scores and the true candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedRow<'a> {
    pub candidates: &'a [EntityId],
    pub scores: &'a [f64],
    pub truth: Option<EntityId>,
}

/// Rank of `truth` among `candidates`; `None` if it is not a candidate.
pub fn rank_of(candidates: &[EntityId], scores: &[f64], truth: EntityId) -> Option<usize> {
    let pos = candidates.iter().position(|&c| c == truth)?;
    let ts = scores[pos];
    let ahead = candidates
        .iter()
        .zip(scores)
        .filter(|&(&c, &s)| s > ts || (s == ts && c < truth))
        .count();
    Some(ahead + 1)
}

fn ranks(rows: &[RankedRow<'_>]) -> Result<Vec<Option<usize>>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let t = r
                .truth
                .ok_or_else(|| Error::InvalidArgument(format!("row {i} has no ground truth")))?;
            Ok(rank_of(r.candidates, r.scores, t))
        })
        .collect()
}

/// Share of rows whose truth ranks within the top `k`. A truth missing from
/// its row never counts.
pub fn hit_at_k(rows: &[RankedRow<'_>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let ranks = ranks(rows)?;
    if ranks.is_empty() {
        return Ok(0.0);
    }
    let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// Mean reciprocal rank; a missing truth contributes zero.
pub fn mrr(rows: &[RankedRow<'_>]) -> Result<f64> {
    let ranks = ranks(rows)?;
    if ranks.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)).sum();
    Ok(total / ranks.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub hit1: f64,
    pub hit10: f64,
    pub mrr: f64,
    pub n: usize,
}

pub fn evaluate_rows(rows: &[RankedRow<'_>]) -> Result<EvalReport> {
    Ok(EvalReport {
        hit1: hit_at_k(rows, 1)?,
        hit10: hit_at_k(rows, 10)?,
        mrr: mrr(rows)?,
        n: rows.len(),
    })
}

/// Ranks each test source against the test targets.
pub fn evaluate_similarities(sim: &SimMatrix, test: &MappingSet) -> Result<EvalReport> {
    let mut allowed = vec![false; sim.n_cols()];
    for t in test.targets() {
        allowed[t] = true;
    }
    let owned: Vec<(Vec<EntityId>, Vec<f64>, EntityId)> = test
        .iter()
        .map(|(s, t)| {
            let (cands, _) = sim.candidates(s, Some(&allowed));
            let (ids, scores) = cands.into_iter().unzip();
            (ids, scores, t)
        })
        .collect();
    let rows: Vec<RankedRow<'_>> = owned
        .iter()
        .map(|(c, s, t)| RankedRow {
            candidates: c,
            scores: s,
            truth: Some(*t),
        })
        .collect();
    evaluate_rows(&rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PseudoQuality {
    pub precision: f64,
    pub recall: f64,
    /// Set when the pseudo set was empty; precision is then reported as 1.
    pub empty: bool,
}

pub fn pseudo_quality(pseudo: &MappingSet, truth: &MappingSet) -> PseudoQuality {
    let correct = pseudo.intersection_len(truth) as f64;
    let precision = if pseudo.is_empty() {
        1.0
    } else {
        correct / pseudo.len() as f64
    };
    let recall = if truth.is_empty() {
        0.0
    } else {
        correct / truth.len() as f64
    };
    PseudoQuality {
        precision,
        recall,
        empty: pseudo.is_empty(),
    }
}
