//! Pseudo-mapping generation.
//!
//! Three strategies read refined distributions (`UniThr`, `BiThr`,
//! `MutHighestProb`); three baselines read raw similarities (`SimThr`,
//! `OneToOne`, `MutNearest`). Every output is a pseudo [`MappingSet`] in
//! `(source, target)` order, scored by the probability or similarity that
//! selected the pair.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::kg::{Direction, EntityId, MappingKind, MappingSet};
use crate::model::SimMatrix;
use crate::normalizer::ProbRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    UniThr,
    BiThr,
    MutHighestProb,
    SimThr,
    OneToOne,
    MutNearest,
}

/// Which threshold a strategy takes, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdKind {
    /// Probability threshold `α` in (0, 1).
    Alpha,
    /// Similarity threshold `θ`.
    Theta,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::UniThr,
        Strategy::BiThr,
        Strategy::MutHighestProb,
        Strategy::SimThr,
        Strategy::OneToOne,
        Strategy::MutNearest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::UniThr => "UniThr",
            Strategy::BiThr => "BiThr",
            Strategy::MutHighestProb => "MutHighestProb",
            Strategy::SimThr => "SimThr",
            Strategy::OneToOne => "OneToOne",
            Strategy::MutNearest => "MutNearest",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s.trim()))
    }

    /// Strategies that consume refined distributions rather than raw
    /// similarities.
    pub fn uses_q_star(self) -> bool {
        matches!(self, Strategy::UniThr | Strategy::BiThr | Strategy::MutHighestProb)
    }

    pub fn threshold(self) -> Option<ThresholdKind> {
        match self {
            Strategy::UniThr | Strategy::BiThr => Some(ThresholdKind::Alpha),
            Strategy::SimThr | Strategy::OneToOne => Some(ThresholdKind::Theta),
            Strategy::MutHighestProb | Strategy::MutNearest => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
    /// Source graph choice for `UniThr`.
    pub direction: Direction,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            alpha: None,
            theta: None,
            direction: Direction::SourceToTarget,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = Some(theta);
        self
    }

    /// Each strategy must be given exactly the threshold it uses.
    pub fn validate(&self) -> Result<()> {
        let s = self.strategy;
        match s.threshold() {
            Some(ThresholdKind::Alpha) => {
                let a = self
                    .alpha
                    .ok_or_else(|| Error::Config(format!("strategy {s} requires `alpha`")))?;
                check_alpha(a)?;
                if self.theta.is_some() {
                    return Err(Error::Config(format!("strategy {s} does not take `theta`")));
                }
            }
            Some(ThresholdKind::Theta) => {
                let t = self
                    .theta
                    .ok_or_else(|| Error::Config(format!("strategy {s} requires `theta`")))?;
                if !t.is_finite() {
                    return Err(Error::Config(format!("`theta` must be finite, got {t}")));
                }
                if self.alpha.is_some() {
                    return Err(Error::Config(format!("strategy {s} does not take `alpha`")));
                }
            }
            None => {
                if self.alpha.is_some() || self.theta.is_some() {
                    return Err(Error::Config(format!("strategy {s} takes no threshold")));
                }
            }
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("`alpha` must lie in (0, 1), got {alpha}")))
    }
}

fn orient(direction: Direction, row: EntityId, col: EntityId) -> (EntityId, EntityId) {
    match direction {
        Direction::SourceToTarget => (row, col),
        Direction::TargetToSource => (col, row),
    }
}

/// Keeps `(u, argmax q*(u))` when the maximal probability exceeds `alpha`.
/// `direction` says which graph the rows belong to.
pub fn uni_thr(rows: &[ProbRow], alpha: f64, direction: Direction) -> Result<MappingSet> {
    check_alpha(alpha)?;
    let mut out = MappingSet::new(MappingKind::Pseudo);
    for row in rows {
        if let Some((c, p)) = row.argmax() {
            if p > alpha {
                let (s, t) = orient(direction, row.entity, c);
                out.insert_scored(s, t, p);
            }
        }
    }
    Ok(out)
}

/// Union of [`uni_thr`] in both directions. Conflicting pairs are all kept.
pub fn bi_thr(source_rows: &[ProbRow], target_rows: &[ProbRow], alpha: f64) -> Result<MappingSet> {
    let fwd = uni_thr(source_rows, alpha, Direction::SourceToTarget)?;
    let bwd = uni_thr(target_rows, alpha, Direction::TargetToSource)?;
    Ok(fwd.union(&bwd))
}

/// Pairs that are each other's most probable counterpart.
pub fn mut_highest_prob(source_rows: &[ProbRow], target_rows: &[ProbRow]) -> MappingSet {
    let back: HashMap<EntityId, EntityId> = target_rows
        .iter()
        .filter_map(|r| r.argmax().map(|(c, _)| (r.entity, c)))
        .collect();
    let mut out = MappingSet::new(MappingKind::Pseudo);
    for row in source_rows {
        if let Some((c, p)) = row.argmax() {
            if back.get(&c) == Some(&row.entity) {
                out.insert_scored(row.entity, c, p);
            }
        }
    }
    out
}

/// Entities that may take part in pseudo mappings.
#[derive(Clone, Debug, PartialEq)]
pub struct EntityMask {
    pub source: Vec<bool>,
    pub target: Vec<bool>,
}

impl EntityMask {
    pub fn all(n_source: usize, n_target: usize) -> Self {
        Self {
            source: vec![true; n_source],
            target: vec![true; n_target],
        }
    }

    /// Everything except the entities of `labelled`.
    pub fn unlabelled(n_source: usize, n_target: usize, labelled: &MappingSet) -> Self {
        let mut m = Self::all(n_source, n_target);
        for (s, t) in labelled.iter() {
            m.source[s] = false;
            m.target[t] = false;
        }
        m
    }

    fn rows_cols(&self, direction: Direction) -> (&[bool], &[bool]) {
        match direction {
            Direction::SourceToTarget => (&self.source, &self.target),
            Direction::TargetToSource => (&self.target, &self.source),
        }
    }
}

/// Row argmaxes (over allowed columns) whose similarity exceeds `theta`.
pub fn sim_thr(sim: &SimMatrix, theta: f64, mask: &EntityMask) -> MappingSet {
    let (rows, cols) = mask.rows_cols(sim.direction());
    let mut out = MappingSet::new(MappingKind::Pseudo);
    for i in (0..sim.n_rows()).filter(|&i| rows[i]) {
        if let Some((c, v)) = sim.argmax(i, Some(cols)) {
            if v > theta {
                let (s, t) = orient(sim.direction(), i, c);
                out.insert_scored(s, t, v);
            }
        }
    }
    out
}

/// Greedy one-to-one matching over `edges`, best score first; ties go to
/// the lower `(source, target)`.
fn greedy_matching(mut edges: Vec<(EntityId, EntityId, f64)>) -> MappingSet {
    edges.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut used_s = HashSet::new();
    let mut used_t = HashSet::new();
    let mut out = MappingSet::new(MappingKind::Pseudo);
    for (s, t, w) in edges {
        if !used_s.contains(&s) && !used_t.contains(&t) {
            used_s.insert(s);
            used_t.insert(t);
            out.insert_scored(s, t, w);
        }
    }
    out
}

/// Greedy matching over the pairs scoring above `theta`, merged into the
/// one-to-one `accumulated` set. Conflicts keep the higher-scoring pair.
pub fn one_to_one(sim: &SimMatrix, theta: f64, mask: &EntityMask, accumulated: &MappingSet) -> MappingSet {
    let (rows, cols) = mask.rows_cols(sim.direction());
    let mut edges = Vec::new();
    for i in (0..sim.n_rows()).filter(|&i| rows[i]) {
        let (cands, _) = sim.candidates(i, Some(cols));
        for (c, v) in cands {
            if v > theta {
                let (s, t) = orient(sim.direction(), i, c);
                edges.push((s, t, v));
            }
        }
    }
    let fresh = greedy_matching(edges);
    let merged: Vec<_> = accumulated.iter_scored().chain(fresh.iter_scored()).collect();
    greedy_matching(merged)
}

/// Mutual nearest neighbours under raw similarity.
pub fn mut_nearest(forward: &SimMatrix, backward: &SimMatrix, mask: &EntityMask) -> MappingSet {
    let (f_rows, f_cols) = mask.rows_cols(forward.direction());
    let (b_rows, b_cols) = mask.rows_cols(backward.direction());
    let mut out = MappingSet::new(MappingKind::Pseudo);
    for i in (0..forward.n_rows()).filter(|&i| f_rows[i]) {
        let Some((c, v)) = forward.argmax(i, Some(f_cols)) else { continue };
        if !b_rows[c] {
            continue;
        }
        if backward.argmax(c, Some(b_cols)).map(|x| x.0) == Some(i) {
            let (s, t) = orient(forward.direction(), i, c);
            out.insert_scored(s, t, v);
        }
    }
    out
}
