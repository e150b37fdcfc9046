//! Ranking metrics and pseudo-mapping quality on a hand-made example.
//!
//! cargo run --example metrics

use stea::kg::{MappingKind, MappingSet};
use stea::metrics::{evaluate_rows, pseudo_quality, rank_of, RankedRow};

fn main() -> stea::Result<()> {
    let candidates = [0, 1, 2, 3];
    let rows = [
        ([0.9, 0.1, 0.3, 0.2], 0),
        ([0.2, 0.8, 0.9, 0.1], 1),
        ([0.5, 0.5, 0.1, 0.7], 1),
    ];
    let ranked: Vec<RankedRow<'_>> = rows
        .iter()
        .map(|(s, t)| RankedRow {
            candidates: &candidates,
            scores: s,
            truth: Some(*t),
        })
        .collect();
    for (s, t) in &rows {
        println!("truth {t} ranked {}", rank_of(&candidates, s, *t).unwrap());
    }
    let r = evaluate_rows(&ranked)?;
    println!("hit1 = {:.3}  hit10 = {:.3}  mrr = {:.3}", r.hit1, r.hit10, r.mrr);

    let truth = MappingSet::from_pairs(MappingKind::Labelled, [(0, 0), (1, 1), (2, 2), (3, 3)]);
    let pseudo = MappingSet::from_pairs(MappingKind::Pseudo, [(0, 0), (1, 2), (3, 3)]);
    let q = pseudo_quality(&pseudo, &truth);
    println!("pseudo precision = {:.3}  recall = {:.3}", q.precision, q.recall);
    Ok(())
}
