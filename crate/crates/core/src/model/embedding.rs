//! Translation-embedding aligner.
//!
//! Both graphs are embedded in one space with the score
//! `-‖h + r - t‖₂` and trained with a margin ranking loss against
//! corrupted triples. Every training mapping merges its two entities into a
//! single shared vector (union-find), which is what carries alignment
//! information across the graphs. Similarity is the cosine of entity
//! vectors.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_fit_args, EaModel, FitReport, SimMatrix};
use crate::error::{Error, Result};
use crate::kg::{Direction, KgPair, MappingSet};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingAlignerParams {
    pub dim: usize,
    pub margin: f64,
    pub negatives: usize,
    pub learning_rate: f64,
    /// Epochs per self-training iteration.
    pub epochs: usize,
    /// Relations whose labels coincide across the two graphs share one
    /// vector.
    pub share_relations: bool,
    pub seed: u64,
}

impl Default for EmbeddingAlignerParams {
    fn default() -> Self {
        Self {
            dim: 64,
            margin: 1.0,
            negatives: 5,
            learning_rate: 0.01,
            epochs: 50,
            share_relations: true,
            seed: 0,
        }
    }
}

/// Gradients of [`margin_loss`] with respect to its five vector arguments.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginGrad {
    pub head: Vec<f64>,
    pub relation: Vec<f64>,
    pub tail: Vec<f64>,
    pub neg_head: Vec<f64>,
    pub neg_tail: Vec<f64>,
}

fn translation_residual(h: &[f64], r: &[f64], t: &[f64]) -> Vec<f64> {
    h.iter().zip(r).zip(t).map(|((a, b), c)| a + b - c).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `max(0, margin + ‖h + r - t‖ - ‖h' + r - t'‖)`.
pub fn margin_loss(h: &[f64], r: &[f64], t: &[f64], nh: &[f64], nt: &[f64], margin: f64) -> f64 {
    let pos = norm(&translation_residual(h, r, t));
    let neg = norm(&translation_residual(nh, r, nt));
    (margin + pos - neg).max(0.0)
}

/// Analytic gradient of [`margin_loss`]; zero where the hinge is inactive.
pub fn margin_loss_grad(h: &[f64], r: &[f64], t: &[f64], nh: &[f64], nt: &[f64], margin: f64) -> MarginGrad {
    let d = h.len();
    let zero = MarginGrad {
        head: vec![0.0; d],
        relation: vec![0.0; d],
        tail: vec![0.0; d],
        neg_head: vec![0.0; d],
        neg_tail: vec![0.0; d],
    };
    if margin_loss(h, r, t, nh, nt, margin) <= 0.0 {
        return zero;
    }
    let pv = translation_residual(h, r, t);
    let nv = translation_residual(nh, r, nt);
    let pn = norm(&pv).max(1e-12);
    let nn = norm(&nv).max(1e-12);
    let pu: Vec<f64> = pv.iter().map(|x| x / pn).collect();
    let nu: Vec<f64> = nv.iter().map(|x| x / nn).collect();
    MarginGrad {
        head: pu.clone(),
        relation: pu.iter().zip(&nu).map(|(a, b)| a - b).collect(),
        tail: pu.iter().map(|x| -x).collect(),
        neg_head: nu.iter().map(|x| -x).collect(),
        neg_tail: nu,
    }
}

#[derive(Clone, Debug)]
struct Layout {
    n_source: usize,
    n_target: usize,
    n_relations: usize,
    /// Target relation id -> shared relation slot.
    target_relation: Vec<usize>,
}

/// The reference trainable model.
#[derive(Clone, Debug)]
pub struct EmbeddingAligner {
    params: EmbeddingAlignerParams,
    rng: ChaCha8Rng,
    layout: Option<Layout>,
    /// `(n_source + n_target) × dim`; source entities first.
    entities: Vec<f64>,
    relations: Vec<f64>,
    fitted: bool,
}

/// Cosine of two unit vectors.
fn unit_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0)
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so slot assignment is order independent
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

impl EmbeddingAligner {
    pub fn new(params: EmbeddingAlignerParams) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Self {
            params,
            rng,
            layout: None,
            entities: Vec::new(),
            relations: Vec::new(),
            fitted: false,
        }
    }

    pub fn params(&self) -> &EmbeddingAlignerParams {
        &self.params
    }

    /// The unit vector of a source (`target == false`) or target entity.
    pub fn entity_vector(&self, target: bool, id: usize) -> Option<&[f64]> {
        let layout = self.layout.as_ref()?;
        let node = if target { layout.n_source + id } else { id };
        let d = self.params.dim;
        self.entities.get(node * d..(node + 1) * d)
    }

    fn layout_for(&self, pair: &KgPair) -> Layout {
        let rs = pair.source.num_relations();
        let mut next = rs;
        let target_relation = (0..pair.target.num_relations())
            .map(|r| {
                let shared = if self.params.share_relations {
                    pair.source.relation_id(pair.target.relation_label(r))
                } else {
                    None
                };
                shared.unwrap_or_else(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Layout {
            n_source: pair.source.num_entities(),
            n_target: pair.target.num_entities(),
            n_relations: next,
            target_relation,
        }
    }

    fn initialize(&mut self, layout: Layout) {
        let d = self.params.dim;
        let n = layout.n_source + layout.n_target;
        self.entities = (0..n * d).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
        for v in self.entities.chunks_mut(d) {
            normalize(v);
        }
        let bound = 6.0 / (d as f64).sqrt();
        self.relations = (0..layout.n_relations * d)
            .map(|_| self.rng.gen_range(-bound..bound))
            .collect();
        self.layout = Some(layout);
    }

    fn ensure_layout(&mut self, pair: &KgPair) {
        let wanted = self.layout_for(pair);
        let compatible = self.layout.as_ref().is_some_and(|l| {
            l.n_source == wanted.n_source
                && l.n_target == wanted.n_target
                && l.target_relation == wanted.target_relation
        });
        if !compatible {
            self.initialize(wanted);
        }
    }
}

impl EaModel for EmbeddingAligner {
    fn name(&self) -> &str {
        "embedding"
    }

    fn fit(&mut self, pair: &KgPair, train: &MappingSet, epochs: usize) -> Result<FitReport> {
        check_fit_args(train, epochs)?;
        train.validate(pair.as_ref())?;
        self.ensure_layout(pair);
        let layout = self.layout.clone().expect("layout initialized");
        let d = self.params.dim;
        let ns = layout.n_source;
        let n_nodes = ns + layout.n_target;

        let mut uf = UnionFind::new(n_nodes);
        for (s, t) in train.iter() {
            uf.union(s, ns + t);
        }
        let mut slot_of_root: HashMap<usize, usize> = HashMap::new();
        let mut slot = vec![0usize; n_nodes];
        for (node, s) in slot.iter_mut().enumerate() {
            let root = uf.find(node);
            let next = slot_of_root.len();
            *s = *slot_of_root.entry(root).or_insert(next);
        }
        let n_slots = slot_of_root.len();

        // merged groups start from the normalized mean of their members
        let mut table = vec![0.0; n_slots * d];
        for node in 0..n_nodes {
            let dst = &mut table[slot[node] * d..(slot[node] + 1) * d];
            for (a, b) in dst.iter_mut().zip(&self.entities[node * d..(node + 1) * d]) {
                *a += b;
            }
        }
        for (s, v) in table.chunks_mut(d).enumerate() {
            if norm(v) < 1e-9 {
                let rep = slot.iter().position(|&x| x == s).expect("slot has a member");
                v.copy_from_slice(&self.entities[rep * d..(rep + 1) * d]);
            }
            normalize(v);
        }

        // (head slot, relation slot, tail slot, entity range for corruption)
        let mut samples: Vec<(usize, usize, usize, bool)> = Vec::new();
        for t in pair.source.triples() {
            samples.push((slot[t.head], t.relation, slot[t.tail], false));
        }
        for t in pair.target.triples() {
            samples.push((
                slot[ns + t.head],
                layout.target_relation[t.relation],
                slot[ns + t.tail],
                true,
            ));
        }

        let margin = self.params.margin;
        let lr = self.params.learning_rate;
        let mut losses = Vec::with_capacity(epochs);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        for epoch in 0..epochs {
            order.shuffle(&mut self.rng);
            let mut total = 0.0;
            let mut count = 0usize;
            for &i in &order {
                let (h, r, t, in_target) = samples[i];
                for _ in 0..self.params.negatives {
                    let corrupt = if in_target {
                        ns + self.rng.gen_range(0..layout.n_target)
                    } else {
                        self.rng.gen_range(0..ns)
                    };
                    let (nh, nt) = if self.rng.gen_bool(0.5) {
                        (slot[corrupt], t)
                    } else {
                        (h, slot[corrupt])
                    };
                    let vh = &table[h * d..(h + 1) * d];
                    let vt = &table[t * d..(t + 1) * d];
                    let vnh = &table[nh * d..(nh + 1) * d];
                    let vnt = &table[nt * d..(nt + 1) * d];
                    let vr = &self.relations[r * d..(r + 1) * d];
                    let loss = margin_loss(vh, vr, vt, vnh, vnt, margin);
                    count += 1;
                    if loss <= 0.0 {
                        continue;
                    }
                    total += loss;
                    let g = margin_loss_grad(vh, vr, vt, vnh, vnt, margin);
                    for (slot_id, grad) in [(h, &g.head), (t, &g.tail), (nh, &g.neg_head), (nt, &g.neg_tail)] {
                        for (p, gi) in table[slot_id * d..(slot_id + 1) * d].iter_mut().zip(grad) {
                            *p -= lr * gi;
                        }
                    }
                    for (p, gi) in self.relations[r * d..(r + 1) * d].iter_mut().zip(&g.relation) {
                        *p -= lr * gi;
                    }
                    for s in [h, t, nh, nt] {
                        normalize(&mut table[s * d..(s + 1) * d]);
                    }
                }
            }
            let mean = if count == 0 { 0.0 } else { total / count as f64 };
            if !mean.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            losses.push(mean);
        }

        for node in 0..n_nodes {
            let s = slot[node];
            let (src, dst) = (s * d, node * d);
            let v: Vec<f64> = table[src..src + d].to_vec();
            self.entities[dst..dst + d].copy_from_slice(&v);
        }
        self.fitted = true;
        Ok(FitReport { losses })
    }

    fn similarities(&self, pair: &KgPair, direction: Direction) -> Result<SimMatrix> {
        let layout = match (&self.layout, self.fitted) {
            (Some(l), true) => l,
            _ => return Err(Error::Unfitted),
        };
        if layout.n_source != pair.source.num_entities() || layout.n_target != pair.target.num_entities() {
            return Err(Error::InvalidArgument(
                "graph pair does not match the fitted model".into(),
            ));
        }
        let d = self.params.dim;
        let ns = layout.n_source;
        let (row_off, n_rows, col_off, n_cols) = match direction {
            Direction::SourceToTarget => (0, ns, ns, layout.n_target),
            Direction::TargetToSource => (ns, layout.n_target, 0, ns),
        };
        let ents = &self.entities;
        let mut data = vec![0.0; n_rows * n_cols];
        data.par_chunks_mut(n_cols.max(1))
            .enumerate()
            .for_each(|(i, out)| {
                let a = &ents[(row_off + i) * d..(row_off + i + 1) * d];
                for (j, o) in out.iter_mut().enumerate() {
                    let b = &ents[(col_off + j) * d..(col_off + j + 1) * d];
                    *o = unit_cosine(a, b);
                }
            });
        if n_cols == 0 {
            data.clear();
        }
        SimMatrix::dense(direction, n_rows, n_cols, data)
    }

    fn reset(&mut self) {
        self.layout = None;
        self.fitted = false;
    }
}
