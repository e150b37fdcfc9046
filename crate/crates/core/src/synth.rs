//! Synthetic twin graphs for experiments and tests.
//!
//! The source graph is a random relational graph; the target graph is the
//! same graph under a random relabelling of entities, with a share of its
//! triples rewired at random. Relation labels are shared.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{write_links, Dataset, KgBuilder, KgPair, MappingKind, MappingSet, LINKS_FILE, SOURCE_TRIPLES_FILE, TARGET_TRIPLES_FILE};

#[derive(Clone, Debug, PartialEq)]
pub struct TwinConfig {
    pub entities: usize,
    pub triples: usize,
    pub relations: usize,
    /// Share of target triples replaced by random ones.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for TwinConfig {
    fn default() -> Self {
        Self {
            entities: 300,
            triples: 1200,
            relations: 12,
            perturbation: 0.1,
            seed: 0,
        }
    }
}

type Edge = (usize, usize, usize);

fn random_edge(rng: &mut ChaCha8Rng, n: usize, relations: usize) -> Edge {
    let h = rng.gen_range(0..n);
    let mut t = rng.gen_range(0..n - 1);
    if t >= h {
        t += 1;
    }
    (h, rng.gen_range(0..relations), t)
}

/// Builds a twin pair and its complete reference alignment.
pub fn twin_pair(cfg: &TwinConfig) -> Result<Dataset> {
    if cfg.entities < 2 || cfg.relations == 0 || cfg.triples < cfg.entities - 1 {
        return Err(Error::InvalidArgument(
            "twin graphs need ≥ 2 entities, ≥ 1 relation and enough triples to connect them".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.perturbation) {
        return Err(Error::InvalidArgument("perturbation must lie in [0, 1]".into()));
    }
    let n = cfg.entities;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut edges: Vec<Edge> = Vec::with_capacity(cfg.triples);
    let mut seen: HashSet<Edge> = HashSet::new();
    // a random tree first so no entity is isolated
    for e in 1..n {
        let other = rng.gen_range(0..e);
        let r = rng.gen_range(0..cfg.relations);
        let edge = if rng.gen_bool(0.5) { (e, r, other) } else { (other, r, e) };
        seen.insert(edge);
        edges.push(edge);
    }
    while edges.len() < cfg.triples {
        let edge = random_edge(&mut rng, n, cfg.relations);
        if seen.insert(edge) {
            edges.push(edge);
        }
    }

    let mut target_edges = edges.clone();
    target_edges.shuffle(&mut rng);
    let rewired = (cfg.perturbation * target_edges.len() as f64).round() as usize;
    let mut target_seen: HashSet<Edge> = target_edges[rewired..].iter().copied().collect();
    for slot in target_edges.iter_mut().take(rewired) {
        loop {
            let edge = random_edge(&mut rng, n, cfg.relations);
            if target_seen.insert(edge) {
                *slot = edge;
                break;
            }
        }
    }
    target_edges.shuffle(&mut rng);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);

    let mut src = KgBuilder::new();
    for &(h, r, t) in &edges {
        src.triple(&format!("s/e{h}"), &format!("r{r}"), &format!("s/e{t}"));
    }
    let mut tgt = KgBuilder::new();
    for &(h, r, t) in &target_edges {
        tgt.triple(&format!("t/e{}", perm[h]), &format!("r{r}"), &format!("t/e{}", perm[t]));
    }
    let mut links = Vec::with_capacity(n);
    for e in 0..n {
        links.push((src.entity(&format!("s/e{e}")), tgt.entity(&format!("t/e{}", perm[e]))));
    }
    Ok(Dataset {
        pair: KgPair::new(src.build(), tgt.build()),
        links: MappingSet::from_pairs(MappingKind::Labelled, links),
    })
}

/// Writes a dataset in the benchmark directory layout.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    ds.pair.source.write_triples(&dir.join(SOURCE_TRIPLES_FILE))?;
    ds.pair.target.write_triples(&dir.join(TARGET_TRIPLES_FILE))?;
    write_links(&dir.join(LINKS_FILE), &ds.links, &ds.pair, None)
}
