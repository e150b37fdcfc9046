//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stea::compat::{Assignment, Orientation, RelationStats};
use stea::kg::{EntityId, Kg, KgBuilder, KgPair, KgPairRef};
use stea::normalizer::{CalibrationRow, NormalizerParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mean cross-entropy computed directly, without max subtraction.
pub fn naive_loss(rows: &[CalibrationRow], p: &NormalizerParams) -> f64 {
    let tau = p.log_tau.exp();
    let mut total = 0.0;
    for row in rows {
        let w: Vec<f64> = row.scores.iter().map(|s| ((p.omega1 * s + p.omega0) / tau).exp()).collect();
        total -= (w[row.truth] / w.iter().sum::<f64>()).ln();
    }
    total / rows.len() as f64
}

/// Central differences of [`naive_loss`] in `(ω₀, ω₁, log τ)`.
pub fn fd_gradient(rows: &[CalibrationRow], p: &NormalizerParams, h: f64) -> [f64; 3] {
    let mut g = [0.0; 3];
    for (k, slot) in g.iter_mut().enumerate() {
        let mut plus = *p;
        let mut minus = *p;
        match k {
            0 => {
                plus.omega0 += h;
                minus.omega0 -= h;
            }
            1 => {
                plus.omega1 += h;
                minus.omega1 -= h;
            }
            _ => {
                plus.log_tau += h;
                minus.log_tau -= h;
            }
        }
        *slot = (naive_loss(rows, &plus) - naive_loss(rows, &minus)) / (2.0 * h);
    }
    g
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Local compatibility straight from the triple lists: every source triple
/// at `e` is paired with every target triple at `cand` of the same
/// orientation whose far end is the far end's counterpart.
pub fn naive_g(pair: KgPairRef<'_>, stats: &RelationStats, y: &dyn Fn(EntityId) -> Option<EntityId>, e: EntityId, cand: EntityId) -> f64 {
    let mut survive = 1.0;
    for s in pair.source.triples() {
        for t in pair.target.triples() {
            let (matched, o) = if s.head == e && t.head == cand {
                (y(s.tail) == Some(t.tail), Orientation::Forward)
            } else if s.tail == e && t.tail == cand {
                (y(s.head) == Some(t.head), Orientation::Inverse)
            } else {
                continue;
            };
            if !matched {
                continue;
            }
            let a = stats.target_in_source(t.relation, s.relation) * stats.source_inv_fun(s.relation, o);
            let b = stats.source_in_target(s.relation, t.relation) * stats.target_inv_fun(t.relation, o);
            survive *= (1.0 - a) * (1.0 - b);
        }
    }
    1.0 - survive
}

/// Sum of every entity's local compatibility under the full assignment `y`.
pub fn energy(pair: KgPairRef<'_>, stats: &RelationStats, y: &[Option<EntityId>]) -> f64 {
    let look = |n: EntityId| y[n];
    (0..pair.source.num_entities())
        .filter_map(|e| y[e].map(|c| naive_g(pair, stats, &look, e, c)))
        .sum()
}

/// Exact conditional of `u` over `cands` under `p ∝ exp(energy)`, with
/// every other entity held at `y`.
pub fn exact_conditional(pair: KgPairRef<'_>, stats: &RelationStats, y: &[Option<EntityId>], u: EntityId, cands: &[EntityId]) -> Vec<f64> {
    let mut state = y.to_vec();
    let weights: Vec<f64> = cands
        .iter()
        .map(|&c| {
            state[u] = Some(c);
            energy(pair, stats, &state).exp()
        })
        .collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

pub fn random_kg(rng: &mut ChaCha8Rng, prefix: &str, entities: usize, relations: usize, triples: usize) -> Kg {
    let mut b = KgBuilder::new();
    for e in 0..entities {
        b.entity(&format!("{prefix}{e}"));
    }
    for _ in 0..triples {
        let h = rng.gen_range(0..entities);
        let t = rng.gen_range(0..entities);
        if h != t {
            let r = rng.gen_range(0..relations);
            b.triple(&format!("{prefix}{h}"), &format!("r{r}"), &format!("{prefix}{t}"));
        }
    }
    b.build()
}

/// Statistics with every entry drawn uniformly from `[0, 0.95]`.
pub fn random_stats(rng: &mut ChaCha8Rng, pair: &KgPair) -> RelationStats {
    let (rs, rt) = (pair.source.num_relations(), pair.target.num_relations());
    let mut st = RelationStats::constant(rs, rt, 0.5, 0.5).unwrap();
    for o in [Orientation::Forward, Orientation::Inverse] {
        for r in 0..rs {
            st.set_source_inv_fun(r, o, rng.gen_range(0.0..0.95)).unwrap();
        }
        for r in 0..rt {
            st.set_target_inv_fun(r, o, rng.gen_range(0.0..0.95)).unwrap();
        }
    }
    for a in 0..rs {
        for b in 0..rt {
            st.set_source_in_target(a, b, rng.gen_range(0.0..0.95)).unwrap();
            st.set_target_in_source(b, a, rng.gen_range(0.0..0.95)).unwrap();
        }
    }
    st
}

pub fn assignment_vec(a: &Assignment, n: usize) -> Vec<Option<EntityId>> {
    (0..n).map(|e| a.get(e)).collect()
}

/// Hit@k and MRR by fully sorting each row; ties go to the lower id.
pub fn naive_metrics(rows: &[(Vec<EntityId>, Vec<f64>, EntityId)], k: usize) -> (f64, f64) {
    let mut hits = 0.0;
    let mut rr = 0.0;
    for (c, s, t) in rows {
        let mut idx: Vec<usize> = (0..c.len()).collect();
        idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(c[a].cmp(&c[b])));
        if let Some(pos) = idx.iter().position(|&i| c[i] == *t) {
            if pos < k {
                hits += 1.0;
            }
            rr += 1.0 / (pos + 1) as f64;
        }
    }
    (hits / rows.len() as f64, rr / rows.len() as f64)
}

/// The father/friend example: `e2` has father `e1` and friend `e3`; in the
/// target, `f2` has the counterparts of both while `f4` has unrelated
/// neighbours. Returns the pair and the assignment `e1 ↦ f1, e3 ↦ f3`.
pub fn father_friend() -> (KgPair, Assignment) {
    let mut s = KgBuilder::new();
    s.triple("e2", "father", "e1");
    s.triple("e2", "friend", "e3");
    let mut t = KgBuilder::new();
    t.triple("f2", "father", "f1");
    t.triple("f2", "friend", "f3");
    t.triple("f4", "father", "f5");
    t.triple("f4", "friend", "f6");
    let pair = KgPair::new(s.build(), t.build());
    let mut a = Assignment::new(pair.source.num_entities());
    for (x, y) in [("e1", "f1"), ("e3", "f3")] {
        a.predict(pair.source.entity_id(x).unwrap(), pair.target.entity_id(y).unwrap());
    }
    (pair, a)
}
