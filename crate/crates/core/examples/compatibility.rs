//! Local compatibility and its effect on a candidate distribution.
//!
//! `e2` has father `e1` and friend `e3`, which are already matched to `f1`
//! and `f3`. Of the two candidates for `e2`, only `f2` keeps those
//! neighbours, so refinement moves the probability mass onto it even
//! though the model prefers `f4`.
//!
//! cargo run --example compatibility

use stea::compat::{coordinate_ascent, estimate_relation_stats, local_compatibility, Assignment};
use stea::kg::{KgBuilder, KgPair, MappingKind, MappingSet};
use stea::normalizer::ProbRow;

fn main() -> stea::Result<()> {
    let mut s = KgBuilder::new();
    s.triple("e2", "father", "e1");
    s.triple("e2", "friend", "e3");
    let mut t = KgBuilder::new();
    t.triple("f2", "father", "f1");
    t.triple("f2", "friend", "f3");
    t.triple("f4", "father", "f5");
    t.triple("f4", "friend", "f6");
    let pair = KgPair::new(s.build(), t.build());
    let (src, tgt) = (&pair.source, &pair.target);
    let id = |kg: &stea::kg::Kg, l: &str| kg.entity_id(l).unwrap();

    let labelled = MappingSet::from_pairs(
        MappingKind::Labelled,
        [("e1", "f1"), ("e3", "f3")].map(|(a, b)| (id(src, a), id(tgt, b))),
    );
    let asg = Assignment::from_labelled(src.num_entities(), &labelled);
    let stats = estimate_relation_stats(pair.as_ref(), &asg);

    let e2 = id(src, "e2");
    for cand in ["f2", "f4"] {
        let g = local_compatibility(pair.as_ref(), &stats, &asg, e2, id(tgt, cand));
        println!("g(e2 -> {cand}) = {:.4}", g.value());
    }

    let q = ProbRow::from_weights(e2, vec![id(tgt, "f2"), id(tgt, "f4")], &[0.4, 0.6]);
    let refined = coordinate_ascent(pair.as_ref(), &stats, &labelled, &[q.clone()], 10, 1)?;
    for (k, &c) in q.candidates.iter().enumerate() {
        println!(
            "{}: q = {:.4}  q* = {:.4}",
            tgt.entity_label(c),
            q.probs[k],
            refined[0].row.prob_of(c)
        );
    }
    Ok(())
}
