//! Relation statistics, local compatibility and dependency-aware
//! distributions.
//!
//! A candidate mapping `e ↦ e'` is compatible when the mappings of `e`'s
//! neighbours land on neighbours of `e'` through relations that imply each
//! other. Sub-relation probabilities and inverse functionalities are
//! estimated from the current assignment. Local compatibilities, one per
//! entity, define an undirected model over all assignments; the
//! conditional of one entity given its Markov blanket involves only the
//! factors that contain it, and one block coordinate-ascent step over all
//! unlabelled entities yields the refined distributions `q*`.
//!
//! Incoming edges take part as inverse relations: an outgoing edge of `e`
//! is only matched with an outgoing edge of the candidate, an incoming edge
//! with an incoming one.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kg::{factor_subset, EntityId, Kg, KgPairRef, MappingSet, RelationId};
use crate::normalizer::{softmax, ProbRow};

/// Edge orientation relative to the anchor entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// `r(e, n)`.
    Forward,
    /// `r(n, e)`, read as the inverse relation `r⁻¹(e, n)`.
    Inverse,
}

/// Sub-relation probabilities for relations of one graph inside relations
/// of the other. Pairs without an explicit entry fall back to the
/// per-relation default `1 / (trials + 2)`.
#[derive(Clone, Debug, Default, PartialEq)]
struct SubRelation {
    default: Vec<f64>,
    probs: HashMap<(RelationId, RelationId), f64>,
}

impl SubRelation {
    fn get(&self, sub: RelationId, sup: RelationId) -> f64 {
        self.probs
            .get(&(sub, sup))
            .copied()
            .unwrap_or_else(|| self.default.get(sub).copied().unwrap_or(0.0))
    }
}

/// Inverse functionalities and sub-relation probabilities for an oriented
/// graph pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelationStats {
    source_inv_fun: [Vec<f64>; 2],
    target_inv_fun: [Vec<f64>; 2],
    /// `Pr(r' ⊆ r)`, `r'` in the target graph.
    target_in_source: SubRelation,
    /// `Pr(r ⊆ r')`, `r` in the source graph.
    source_in_target: SubRelation,
}

fn slot(o: Orientation) -> usize {
    match o {
        Orientation::Forward => 0,
        Orientation::Inverse => 1,
    }
}

fn check_unit(v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!("probability {v} outside [0, 1]")))
    }
}

impl RelationStats {
    /// Every inverse functionality equal to `inv_fun` and every
    /// sub-relation probability equal to `subrel`.
    pub fn constant(source_relations: usize, target_relations: usize, inv_fun: f64, subrel: f64) -> Result<Self> {
        check_unit(inv_fun)?;
        check_unit(subrel)?;
        Ok(Self {
            source_inv_fun: [vec![inv_fun; source_relations], vec![inv_fun; source_relations]],
            target_inv_fun: [vec![inv_fun; target_relations], vec![inv_fun; target_relations]],
            target_in_source: SubRelation {
                default: vec![subrel; target_relations],
                probs: HashMap::new(),
            },
            source_in_target: SubRelation {
                default: vec![subrel; source_relations],
                probs: HashMap::new(),
            },
        })
    }

    pub fn source_inv_fun(&self, r: RelationId, o: Orientation) -> f64 {
        self.source_inv_fun[slot(o)][r]
    }

    pub fn target_inv_fun(&self, r: RelationId, o: Orientation) -> f64 {
        self.target_inv_fun[slot(o)][r]
    }

    /// `Pr(r' ⊆ r)` for target relation `r'` and source relation `r`.
    pub fn target_in_source(&self, target_rel: RelationId, source_rel: RelationId) -> f64 {
        self.target_in_source.get(target_rel, source_rel)
    }

    /// `Pr(r ⊆ r')` for source relation `r` and target relation `r'`.
    pub fn source_in_target(&self, source_rel: RelationId, target_rel: RelationId) -> f64 {
        self.source_in_target.get(source_rel, target_rel)
    }

    pub fn set_source_inv_fun(&mut self, r: RelationId, o: Orientation, v: f64) -> Result<()> {
        self.source_inv_fun[slot(o)][r] = check_unit(v)?;
        Ok(())
    }

    pub fn set_target_inv_fun(&mut self, r: RelationId, o: Orientation, v: f64) -> Result<()> {
        self.target_inv_fun[slot(o)][r] = check_unit(v)?;
        Ok(())
    }

    pub fn set_target_in_source(&mut self, target_rel: RelationId, source_rel: RelationId, v: f64) -> Result<()> {
        self.target_in_source.probs.insert((target_rel, source_rel), check_unit(v)?);
        Ok(())
    }

    pub fn set_source_in_target(&mut self, source_rel: RelationId, target_rel: RelationId, v: f64) -> Result<()> {
        self.source_in_target.probs.insert((source_rel, target_rel), check_unit(v)?);
        Ok(())
    }

    /// Statistics for the pair viewed the other way round.
    pub fn swapped(&self) -> RelationStats {
        RelationStats {
            source_inv_fun: self.target_inv_fun.clone(),
            target_inv_fun: self.source_inv_fun.clone(),
            target_in_source: self.source_in_target.clone(),
            source_in_target: self.target_in_source.clone(),
        }
    }

    /// All stored values, for range checks.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.source_inv_fun
            .iter()
            .chain(self.target_inv_fun.iter())
            .flatten()
            .copied()
            .chain(self.target_in_source.default.iter().copied())
            .chain(self.target_in_source.probs.values().copied())
            .chain(self.source_in_target.default.iter().copied())
            .chain(self.source_in_target.probs.values().copied())
    }
}

/// Current counterpart `ŷ_e` of every source entity that has one.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    map: Vec<Option<EntityId>>,
    labelled: Vec<bool>,
}

impl Assignment {
    pub fn new(n_source: usize) -> Self {
        Self {
            map: vec![None; n_source],
            labelled: vec![false; n_source],
        }
    }

    /// Clamps every labelled pair. A source listed twice keeps its first
    /// (lowest) target.
    pub fn from_labelled(n_source: usize, labelled: &MappingSet) -> Self {
        let mut a = Self::new(n_source);
        for (s, t) in labelled.iter() {
            if a.map[s].is_none() {
                a.map[s] = Some(t);
                a.labelled[s] = true;
            }
        }
        a
    }

    /// Sets a predicted counterpart; labelled entries are left untouched
    /// and `false` is returned for them.
    pub fn predict(&mut self, e: EntityId, candidate: EntityId) -> bool {
        if self.labelled[e] {
            return false;
        }
        self.map[e] = Some(candidate);
        true
    }

    pub fn get(&self, e: EntityId) -> Option<EntityId> {
        self.map[e]
    }

    pub fn is_labelled(&self, e: EntityId) -> bool {
        self.labelled[e]
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Only the clamped entries.
    pub fn labelled_only(&self) -> Assignment {
        Assignment {
            map: self
                .map
                .iter()
                .zip(&self.labelled)
                .map(|(&m, &l)| if l { m } else { None })
                .collect(),
            labelled: self.labelled.clone(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, EntityId)> + '_ {
        self.map.iter().enumerate().filter_map(|(e, m)| m.map(|t| (e, t)))
    }
}

fn inverse_functionalities(kg: &Kg) -> [Vec<f64>; 2] {
    let n = kg.num_relations();
    let mut count = vec![0usize; n];
    let mut tails: Vec<Vec<EntityId>> = vec![Vec::new(); n];
    let mut heads: Vec<Vec<EntityId>> = vec![Vec::new(); n];
    for t in kg.triples() {
        count[t.relation] += 1;
        tails[t.relation].push(t.tail);
        heads[t.relation].push(t.head);
    }
    let distinct = |mut v: Vec<EntityId>| {
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    let mut fwd = vec![0.0; n];
    let mut inv = vec![0.0; n];
    for r in 0..n {
        if count[r] > 0 {
            fwd[r] = distinct(std::mem::take(&mut tails[r])) as f64 / count[r] as f64;
            inv[r] = distinct(std::mem::take(&mut heads[r])) as f64 / count[r] as f64;
        }
    }
    [fwd, inv]
}

/// Estimates `Pr(sub ⊆ sup)` for relations of `sub_kg` in relations of
/// `sup_kg`, where `image` maps a `sub_kg` entity to its `sup_kg`
/// counterparts.
fn estimate_subrelations(sub_kg: &Kg, sup_kg: &Kg, image: &[Vec<EntityId>]) -> SubRelation {
    let mut trials = vec![0usize; sub_kg.num_relations()];
    let mut support: HashMap<(RelationId, RelationId), usize> = HashMap::new();
    let mut hit: Vec<RelationId> = Vec::new();
    for t in sub_kg.triples() {
        let (hs, ts) = (&image[t.head], &image[t.tail]);
        if hs.is_empty() || ts.is_empty() {
            continue;
        }
        trials[t.relation] += 1;
        hit.clear();
        for &h in hs {
            for &(r, n) in sup_kg.out_edges(h) {
                if ts.contains(&n) {
                    hit.push(r);
                }
            }
        }
        hit.sort_unstable();
        hit.dedup();
        for &r in &hit {
            *support.entry((t.relation, r)).or_default() += 1;
        }
    }
    let default = trials.iter().map(|&n| 1.0 / (n as f64 + 2.0)).collect();
    let probs = support
        .into_iter()
        .map(|((sub, sup), s)| ((sub, sup), (s as f64 + 1.0) / (trials[sub] as f64 + 2.0)))
        .collect();
    SubRelation { default, probs }
}

/// Counts-based estimate from the graphs and the current assignment.
///
/// `fun⁻¹(r)` is distinct tails over triples (distinct heads for the
/// inverse relation). `Pr(r' ⊆ r) = (support + 1) / (trials + 2)`, where
/// trials are the `r'` triples whose endpoints both have counterparts and
/// support counts those whose counterparts are linked by `r`.
pub fn estimate_relation_stats(pair: KgPairRef<'_>, assignment: &Assignment) -> RelationStats {
    let (src, tgt) = (pair.source, pair.target);
    let mut forward: Vec<Vec<EntityId>> = vec![Vec::new(); src.num_entities()];
    let mut backward: Vec<Vec<EntityId>> = vec![Vec::new(); tgt.num_entities()];
    for (s, t) in assignment.iter() {
        forward[s].push(t);
        backward[t].push(s);
    }
    RelationStats {
        source_inv_fun: inverse_functionalities(src),
        target_inv_fun: inverse_functionalities(tgt),
        target_in_source: estimate_subrelations(tgt, src, &backward),
        source_in_target: estimate_subrelations(src, tgt, &forward),
    }
}

/// A local compatibility value in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct CompatibilityScore(f64);

impl CompatibilityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn local_with<F>(pair: KgPairRef<'_>, stats: &RelationStats, e: EntityId, candidate: EntityId, lookup: &F) -> f64
where
    F: Fn(EntityId) -> Option<EntityId>,
{
    let mut survive = 1.0;
    for (edges_e, edges_c, o) in [
        (pair.source.out_edges(e), pair.target.out_edges(candidate), Orientation::Forward),
        (pair.source.in_edges(e), pair.target.in_edges(candidate), Orientation::Inverse),
    ] {
        for &(r, n) in edges_e {
            let Some(yn) = lookup(n) else { continue };
            for &(r2, n2) in edges_c {
                if n2 != yn {
                    continue;
                }
                let a = stats.target_in_source(r2, r) * stats.source_inv_fun(r, o);
                let b = stats.source_in_target(r, r2) * stats.target_inv_fun(r2, o);
                survive *= (1.0 - a) * (1.0 - b);
            }
        }
    }
    1.0 - survive
}

/// `g` at `e` when `e` is mapped to `candidate` and every other entity
/// follows `assignment`. Neighbours without a counterpart give no
/// evidence.
pub fn local_compatibility(
    pair: KgPairRef<'_>,
    stats: &RelationStats,
    assignment: &Assignment,
    e: EntityId,
    candidate: EntityId,
) -> CompatibilityScore {
    CompatibilityScore(local_with(pair, stats, e, candidate, &|n| assignment.get(n)))
}

/// `S(c)`: the sum of local compatibilities over every factor that contains
/// `u`, with `u` mapped to `c` and everything else fixed by `assignment`.
/// Factors anchored at entities without a counterpart are constant in `c`
/// and left out.
pub fn factor_sums(
    pair: KgPairRef<'_>,
    stats: &RelationStats,
    assignment: &Assignment,
    u: EntityId,
    candidates: &[EntityId],
) -> Vec<f64> {
    let anchors = factor_subset(pair.source, u).members;
    candidates
        .iter()
        .map(|&c| {
            let lookup = |x: EntityId| if x == u { Some(c) } else { assignment.get(x) };
            anchors
                .iter()
                .map(|&a| {
                    let ya = if a == u { Some(c) } else { assignment.get(a) };
                    ya.map_or(0.0, |ya| local_with(pair, stats, a, ya, &lookup))
                })
                .sum()
        })
        .collect()
}

/// `p(y_u = c | y_MB(u))` over `candidates`, as the softmax of
/// [`factor_sums`]. The returned row lists candidates in the given order.
pub fn conditional_distribution(
    pair: KgPairRef<'_>,
    stats: &RelationStats,
    assignment: &Assignment,
    u: EntityId,
    candidates: &[EntityId],
) -> ProbRow {
    let sums = factor_sums(pair, stats, assignment, u, candidates);
    ProbRow {
        entity: u,
        candidates: candidates.to_vec(),
        probs: softmax(&sums),
        tail_mass: 0.0,
    }
}

/// Labelled pairs plus `ŷ_u = argmax q(y_u)` for every row.
pub fn build_assignment(n_source: usize, labelled: &MappingSet, q_rows: &[ProbRow]) -> Assignment {
    let mut a = Assignment::from_labelled(n_source, labelled);
    for row in q_rows {
        if let Some((c, _)) = row.argmax() {
            a.predict(row.entity, c);
        }
    }
    a
}

/// One refined row together with its factor sums.
#[derive(Clone, Debug, PartialEq)]
pub struct QStarRow {
    pub row: ProbRow,
    pub sums: Vec<f64>,
}

/// Block coordinate ascent on the unlabelled distributions.
///
/// Each sweep freezes the assignment (labelled pairs plus current argmaxes)
/// and replaces every row by its conditional over the row's `top_k` most
/// probable candidates under the original `q`. Rows of labelled entities
/// are skipped. Candidates are listed most probable first, so argmax ties
/// fall back on the original ranking.
pub fn coordinate_ascent(
    pair: KgPairRef<'_>,
    stats: &RelationStats,
    labelled: &MappingSet,
    q_rows: &[ProbRow],
    top_k: usize,
    sweeps: usize,
) -> Result<Vec<QStarRow>> {
    if top_k == 0 {
        return Err(Error::InvalidArgument("top-K must be at least 1".into()));
    }
    if sweeps == 0 {
        return Err(Error::InvalidArgument("need at least one sweep".into()));
    }
    let n = pair.source.num_entities();
    let clamped = Assignment::from_labelled(n, labelled);
    let rows: Vec<&ProbRow> = q_rows
        .iter()
        .filter(|r| !clamped.is_labelled(r.entity) && !r.is_empty())
        .collect();
    let cands: Vec<Vec<EntityId>> = rows
        .iter()
        .map(|r| r.top_k(top_k).into_iter().map(|(c, _)| c).collect())
        .collect();
    let mut current: Vec<ProbRow> = rows.iter().map(|&r| r.clone()).collect();
    let mut out = Vec::new();
    for _ in 0..sweeps {
        let frozen = build_assignment(n, labelled, &current);
        out = rows
            .par_iter()
            .zip(cands.par_iter())
            .map(|(r, c)| {
                let sums = factor_sums(pair, stats, &frozen, r.entity, c);
                QStarRow {
                    row: ProbRow {
                        entity: r.entity,
                        candidates: c.clone(),
                        probs: softmax(&sums),
                        tail_mass: 0.0,
                    },
                    sums,
                }
            })
            .collect();
        current = out.iter().map(|q| q.row.clone()).collect();
    }
    Ok(out)
}

/// The single-sweep update: `q*` for every unlabelled row.
pub fn derive_q_star(
    pair: KgPairRef<'_>,
    stats: &RelationStats,
    labelled: &MappingSet,
    q_rows: &[ProbRow],
    top_k: usize,
) -> Result<Vec<ProbRow>> {
    Ok(coordinate_ascent(pair, stats, labelled, q_rows, top_k, 1)?
        .into_iter()
        .map(|q| q.row)
        .collect())
}

/// Tab-separated `entity, candidate, factor_sum, q_star` rows with labels.
pub fn write_q_star_dump(path: &Path, pair: KgPairRef<'_>, rows: &[QStarRow]) -> Result<()> {
    let mut out = String::from("entity\tcandidate\tfactor_sum\tq_star\n");
    for q in rows {
        for ((&c, &p), &s) in q.row.candidates.iter().zip(&q.row.probs).zip(&q.sums) {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                pair.source.entity_label(q.row.entity),
                pair.target.entity_label(c),
                s,
                p
            );
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Upper bound on the number of joint states [`joint_bruteforce`] will
/// enumerate.
pub const JOINT_STATE_CAP: u128 = 100_000;

/// The exact joint over the unlabelled entities' grids.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable {
    pub entities: Vec<EntityId>,
    pub grids: Vec<Vec<EntityId>>,
    /// Mixed-radix layout; the last entity varies fastest.
    pub probs: Vec<f64>,
}

impl JointTable {
    fn index(&self, choice: &[usize]) -> usize {
        choice
            .iter()
            .zip(&self.grids)
            .fold(0, |acc, (&c, g)| acc * g.len() + c)
    }

    /// Probability of picking `choice[i]` from grid `i` for every entity.
    pub fn prob(&self, choice: &[usize]) -> f64 {
        self.probs[self.index(choice)]
    }

    /// Conditional of entity `which` given the other entries of `choice`.
    pub fn conditional(&self, which: usize, choice: &[usize]) -> Vec<f64> {
        let mut c = choice.to_vec();
        let weights: Vec<f64> = (0..self.grids[which].len())
            .map(|k| {
                c[which] = k;
                self.prob(&c)
            })
            .collect();
        let z: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / z).collect()
    }
}

/// Enumerates `p(y_L, y_U) ∝ Π_e exp(g(y_{F_e}))` over every combination of
/// the grids, holding all other entities at `fixed`. Entities without a
/// counterpart contribute no factor. Test oracle for tiny instances.
pub fn joint_bruteforce(
    pair: KgPairRef<'_>,
    stats: &RelationStats,
    fixed: &Assignment,
    grids: &[(EntityId, Vec<EntityId>)],
) -> Result<JointTable> {
    let size = grids.iter().map(|(_, g)| g.len() as u128).product::<u128>();
    if size > JOINT_STATE_CAP {
        return Err(Error::StateSpaceTooLarge {
            size,
            cap: JOINT_STATE_CAP,
        });
    }
    if grids.iter().any(|(_, g)| g.is_empty()) {
        return Err(Error::InvalidArgument("empty candidate grid".into()));
    }
    let entities: Vec<EntityId> = grids.iter().map(|(e, _)| *e).collect();
    let mut choice = vec![0usize; grids.len()];
    let mut energies = Vec::with_capacity(size as usize);
    let mut state = fixed.clone();
    for _ in 0..size {
        for (k, (e, g)) in grids.iter().enumerate() {
            state.map[*e] = Some(g[choice[k]]);
        }
        let energy: f64 = (0..pair.source.num_entities())
            .filter_map(|e| state.get(e).map(|y| local_with(pair, stats, e, y, &|n| state.get(n))))
            .sum();
        energies.push(energy);
        for k in (0..choice.len()).rev() {
            choice[k] += 1;
            if choice[k] < grids[k].1.len() {
                break;
            }
            choice[k] = 0;
        }
    }
    Ok(JointTable {
        entities,
        grids: grids.iter().map(|(_, g)| g.clone()).collect(),
        probs: softmax(&energies),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{KgBuilder, KgPair, MappingKind};

    fn kg(triples: &[(&str, &str, &str)], extra: &[&str]) -> Kg {
        let mut b = KgBuilder::new();
        for (h, r, t) in triples {
            b.triple(h, r, t);
        }
        for e in extra {
            b.entity(e);
        }
        b.build()
    }

    /// e has `k` neighbours each mapped onto a neighbour of the candidate
    /// through the single relation.
    fn fan(k: usize) -> (KgPair, Assignment) {
        let src: Vec<(String, String, String)> = (0..k).map(|i| ("e".into(), "r".into(), format!("n{i}"))).collect();
        let tgt: Vec<(String, String, String)> = (0..k).map(|i| ("c".into(), "r".into(), format!("m{i}"))).collect();
        let mut a = KgBuilder::new();
        let mut b = KgBuilder::new();
        for (h, r, t) in &src {
            a.triple(h, r, t);
        }
        for (h, r, t) in &tgt {
            b.triple(h, r, t);
        }
        let pair = KgPair::new(a.build(), b.build());
        let mut asg = Assignment::new(pair.source.num_entities());
        for i in 0..k {
            asg.predict(
                pair.source.entity_id(&format!("n{i}")).unwrap(),
                pair.target.entity_id(&format!("m{i}")).unwrap(),
            );
        }
        (pair, asg)
    }

    fn hand_stats() -> RelationStats {
        let mut s = RelationStats::constant(1, 1, 0.0, 0.0).unwrap();
        s.set_target_in_source(0, 0, 0.8).unwrap();
        s.set_source_inv_fun(0, Orientation::Forward, 0.5).unwrap();
        s.set_source_in_target(0, 0, 0.9).unwrap();
        s.set_target_inv_fun(0, Orientation::Forward, 0.4).unwrap();
        s
    }

    #[test]
    fn hand_evaluated_local_compatibility() {
        let stats = hand_stats();
        let (p1, a1) = fan(1);
        let g1 = local_compatibility(p1.as_ref(), &stats, &a1, 0, 0).value();
        assert!((g1 - 0.616).abs() < 1e-12);
        let (p2, a2) = fan(2);
        let g2 = local_compatibility(p2.as_ref(), &stats, &a2, 0, 0).value();
        assert!((g2 - 0.852544).abs() < 1e-12);
        let empty = Assignment::new(p2.source.num_entities());
        assert_eq!(local_compatibility(p2.as_ref(), &stats, &empty, 0, 0).value(), 0.0);
    }

    #[test]
    fn inverse_functionality_counts() {
        let g = kg(&[("a", "r", "b"), ("a", "r", "c")], &[]);
        let [fwd, inv] = inverse_functionalities(&g);
        assert_eq!(fwd[0], 1.0);
        assert_eq!(inv[0], 0.5);
    }

    #[test]
    fn duplicated_input_leaves_inverse_functionality_unchanged() {
        let base = [("a", "r", "b"), ("a", "r", "c"), ("d", "r", "c")];
        let once = kg(&base, &[]);
        let doubled: Vec<_> = base.iter().chain(base.iter()).copied().collect();
        let twice = kg(&doubled, &[]);
        assert_eq!(twice.duplicates_dropped(), 3);
        assert_eq!(inverse_functionalities(&once), inverse_functionalities(&twice));
    }

    #[test]
    fn smoothed_subrelation_estimates() {
        // target r'(a', b'); a' ↦ a, b' ↦ b (held as source a ↦ a', b ↦ b')
        let pair = KgPair::new(
            kg(&[("a", "r", "b")], &[]),
            kg(&[("a'", "q", "b'")], &[]),
        );
        let asg = Assignment::from_labelled(2, &MappingSet::from_pairs(MappingKind::Labelled, [(0, 0), (1, 1)]));
        let stats = estimate_relation_stats(pair.as_ref(), &asg);
        assert!((stats.target_in_source(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((stats.source_in_target(0, 0) - 2.0 / 3.0).abs() < 1e-15);

        let none = Assignment::new(2);
        let prior = estimate_relation_stats(pair.as_ref(), &none);
        assert_eq!(prior.target_in_source(0, 0), 0.5);
        assert_eq!(prior.source_in_target(0, 0), 0.5);
        assert!(prior.values().all(|v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn mismatched_orientation_gives_no_evidence() {
        // e -r-> n in the source, but the candidate only has n' -r-> c
        let pair = KgPair::new(kg(&[("e", "r", "n")], &[]), kg(&[("n'", "r", "c")], &[]));
        let stats = RelationStats::constant(1, 1, 1.0, 0.9).unwrap();
        let mut asg = Assignment::new(2);
        asg.predict(1, 0);
        let c = pair.target.entity_id("c").unwrap();
        assert_eq!(local_compatibility(pair.as_ref(), &stats, &asg, 0, c).value(), 0.0);
    }

    #[test]
    fn conditional_is_softmax_of_factor_sums() {
        let p = softmax(&[0.6, 0.1]);
        assert!((p[0] - 0.62246).abs() < 1e-5);
        assert!((p[1] - 0.37754).abs() < 1e-5);
    }

    #[test]
    fn isolated_entity_gets_uniform_conditional() {
        let pair = KgPair::new(kg(&[("a", "r", "b")], &["u"]), kg(&[("x", "r", "y")], &["z"]));
        let stats = RelationStats::constant(1, 1, 0.7, 0.7).unwrap();
        let asg = Assignment::new(3);
        let row = conditional_distribution(pair.as_ref(), &stats, &asg, 2, &[0, 1, 2]);
        assert!(row.probs.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn labelled_entries_are_clamped() {
        let l = MappingSet::from_pairs(MappingKind::Labelled, [(0, 3)]);
        let mut a = Assignment::from_labelled(2, &l);
        assert!(!a.predict(0, 1));
        assert_eq!(a.get(0), Some(3));
        assert!(a.predict(1, 2));
        assert_eq!(a.labelled_only().get(1), None);
    }

    #[test]
    fn joint_enumeration_guards() {
        let pair = KgPair::new(kg(&[("a", "r", "b")], &[]), kg(&[("x", "r", "y")], &[]));
        let stats = RelationStats::constant(1, 1, 0.5, 0.5).unwrap();
        let fixed = Assignment::new(2);
        let big: Vec<(EntityId, Vec<EntityId>)> = vec![(0, (0..400).collect()), (1, (0..400).collect())];
        assert!(matches!(
            joint_bruteforce(pair.as_ref(), &stats, &fixed, &big),
            Err(Error::StateSpaceTooLarge { .. })
        ));
        let t = joint_bruteforce(pair.as_ref(), &stats, &fixed, &[(0, vec![0, 1])]).unwrap();
        assert_eq!(t.probs.len(), 2);
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_top_k_is_rejected() {
        let pair = KgPair::new(kg(&[("a", "r", "b")], &[]), kg(&[("x", "r", "y")], &[]));
        let stats = RelationStats::constant(1, 1, 0.5, 0.5).unwrap();
        let empty = MappingSet::new(MappingKind::Labelled);
        assert!(derive_q_star(pair.as_ref(), &stats, &empty, &[], 0).is_err());
    }
}
