mod common;

use rand::seq::SliceRandom;
use rand::Rng;

use common::*;
use stea::compat::{
    build_assignment, conditional_distribution, coordinate_ascent, derive_q_star, estimate_relation_stats,
    Assignment,
};
use stea::kg::{KgPair, MappingKind, MappingSet};
use stea::normalizer::ProbRow;

struct Instance {
    pair: KgPair,
    labelled: MappingSet,
    q: Vec<ProbRow>,
}

/// Random graphs, a third of the source entities labelled, random q rows
/// over every target for the rest.
fn instance(seed: u64) -> Instance {
    let mut rng = rng(seed);
    let src = random_kg(&mut rng, "s", 12, 3, 30);
    let tgt = random_kg(&mut rng, "t", 12, 3, 30);
    let pair = KgPair::new(src, tgt);
    let labelled = MappingSet::from_pairs(MappingKind::Labelled, (0..4).map(|e| (e, e)));
    let q = (4..12)
        .map(|e| {
            let w: Vec<f64> = (0..12).map(|_| rng.gen_range(0.01..1.0)).collect();
            ProbRow::from_weights(e, (0..12).collect(), &w)
        })
        .collect();
    Instance { pair, labelled, q }
}

#[test]
fn full_width_q_star_equals_the_conditional() {
    for seed in 0..10 {
        let inst = instance(seed);
        let asg = build_assignment(12, &inst.labelled, &inst.q);
        let stats = estimate_relation_stats(inst.pair.as_ref(), &asg);
        let q_star = derive_q_star(inst.pair.as_ref(), &stats, &inst.labelled, &inst.q, 12).unwrap();
        for (row, q) in q_star.iter().zip(&inst.q) {
            let cond = conditional_distribution(inst.pair.as_ref(), &stats, &asg, q.entity, &row.candidates);
            assert_eq!(row, &cond);
            let mut c = row.candidates.clone();
            c.sort_unstable();
            assert_eq!(c, (0..12).collect::<Vec<_>>());
        }
    }
}

#[test]
fn truncation_renormalizes_the_top_k_conditional() {
    for seed in 0..10 {
        let inst = instance(100 + seed);
        let asg = build_assignment(12, &inst.labelled, &inst.q);
        let stats = estimate_relation_stats(inst.pair.as_ref(), &asg);
        let q_star = derive_q_star(inst.pair.as_ref(), &stats, &inst.labelled, &inst.q, 2).unwrap();
        for (row, q) in q_star.iter().zip(&inst.q) {
            let top: Vec<usize> = q.top_k(2).into_iter().map(|(c, _)| c).collect();
            assert_eq!(row.candidates, top);
            let mut three = top.clone();
            three.push(q.top_k(3)[2].0);
            let full = conditional_distribution(inst.pair.as_ref(), &stats, &asg, q.entity, &three);
            let z = full.probs[0] + full.probs[1];
            for j in 0..2 {
                assert!((row.probs[j] - full.probs[j] / z).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn q_star_ignores_row_order() {
    let inst = instance(7);
    let asg = build_assignment(12, &inst.labelled, &inst.q);
    let stats = estimate_relation_stats(inst.pair.as_ref(), &asg);
    let a = derive_q_star(inst.pair.as_ref(), &stats, &inst.labelled, &inst.q, 5).unwrap();
    let mut shuffled = inst.q.clone();
    shuffled.shuffle(&mut rng(1));
    let mut b = derive_q_star(inst.pair.as_ref(), &stats, &inst.labelled, &shuffled, 5).unwrap();
    b.sort_by_key(|r| r.entity);
    assert_eq!(a, b);
}

#[test]
fn labelled_rows_are_never_refined() {
    let inst = instance(8);
    let mut q = inst.q.clone();
    q.push(ProbRow::from_weights(0, vec![0, 1], &[1.0, 1.0]));
    let stats = estimate_relation_stats(inst.pair.as_ref(), &Assignment::from_labelled(12, &inst.labelled));
    let rows = coordinate_ascent(inst.pair.as_ref(), &stats, &inst.labelled, &q, 4, 2).unwrap();
    assert_eq!(rows.len(), inst.q.len());
    assert!(rows.iter().all(|r| r.row.entity >= 4));
    for r in &rows {
        assert!((r.row.total() - 1.0).abs() < 1e-12);
        assert_eq!(r.sums.len(), r.row.candidates.len());
    }
}

#[test]
fn father_friend_statistics() {
    let (pair, asg) = father_friend();
    let stats = estimate_relation_stats(pair.as_ref(), &asg);
    // no source triple has both endpoints mapped: the prior holds
    assert!(stats.values().all(|v| (0.0..=1.0).contains(&v)));
    assert_eq!(stats.source_in_target(0, 0), 0.5);
}
