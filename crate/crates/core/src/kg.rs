//! Knowledge-graph storage, entity mappings and dataset partitioning.
//!
//! Entity and relation labels are interned to dense ids at load time. Every
//! [`Kg`] is immutable once built, so it can be shared freely across worker
//! threads.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type EntityId = usize;
pub type RelationId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Which graph plays the source role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    SourceToTarget,
    TargetToSource,
}

impl Direction {
    pub fn reverse(self) -> Direction {
        match self {
            Direction::SourceToTarget => Direction::TargetToSource,
            Direction::TargetToSource => Direction::SourceToTarget,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::SourceToTarget => "source_to_target",
            Direction::TargetToSource => "target_to_source",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s.trim().to_ascii_lowercase().as_str() {
            "source_to_target" | "source" | "forward" => Some(Direction::SourceToTarget),
            "target_to_source" | "target" | "reverse" => Some(Direction::TargetToSource),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An immutable relational knowledge graph.
#[derive(Clone, Debug, Default)]
pub struct Kg {
    entity_labels: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relation_labels: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    out_index: Vec<Vec<(RelationId, EntityId)>>,
    in_index: Vec<Vec<(RelationId, EntityId)>>,
    duplicates_dropped: usize,
}

impl Kg {
    pub fn num_entities(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_labels.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Number of duplicate input triples discarded while building.
    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entity_index.get(label).copied()
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        &self.entity_labels[id]
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relation_index.get(label).copied()
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        &self.relation_labels[id]
    }

    pub fn entity_labels(&self) -> &[String] {
        &self.entity_labels
    }

    pub fn relation_labels(&self) -> &[String] {
        &self.relation_labels
    }

    /// Outgoing `(relation, tail)` edges of `e`.
    pub fn out_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_index[e]
    }

    /// Incoming `(relation, head)` edges of `e`.
    pub fn in_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.in_index[e]
    }

    pub fn has_triple(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.out_index[head]
            .iter()
            .any(|&(r, t)| r == relation && t == tail)
    }

    /// Sorted, deduplicated undirected neighbours of `e`. May include `e`
    /// itself when the graph contains a self loop.
    pub fn neighbors(&self, e: EntityId) -> Vec<EntityId> {
        let mut out: Vec<EntityId> = self.out_index[e]
            .iter()
            .chain(self.in_index[e].iter())
            .map(|&(_, n)| n)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn degree(&self, e: EntityId) -> usize {
        self.out_index[e].len() + self.in_index[e].len()
    }

    /// Writes the triples back out in the tab-separated input format.
    pub fn write_triples(&self, path: &Path) -> Result<()> {
        let mut buf = String::new();
        for t in &self.triples {
            buf.push_str(&self.entity_labels[t.head]);
            buf.push('\t');
            buf.push_str(&self.relation_labels[t.relation]);
            buf.push('\t');
            buf.push_str(&self.entity_labels[t.tail]);
            buf.push('\n');
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Incrementally interns labels and collects triples for a [`Kg`].
#[derive(Debug, Default)]
pub struct KgBuilder {
    entity_labels: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relation_labels: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    duplicates_dropped: usize,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&mut self, label: &str) -> EntityId {
        if let Some(&id) = self.entity_index.get(label) {
            return id;
        }
        let id = self.entity_labels.len();
        self.entity_labels.push(label.to_owned());
        self.entity_index.insert(label.to_owned(), id);
        id
    }

    pub fn relation(&mut self, label: &str) -> RelationId {
        if let Some(&id) = self.relation_index.get(label) {
            return id;
        }
        let id = self.relation_labels.len();
        self.relation_labels.push(label.to_owned());
        self.relation_index.insert(label.to_owned(), id);
        id
    }

    /// Adds a triple; returns `false` if it was already present.
    pub fn triple(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let t = Triple {
            head: self.entity(head),
            relation: self.relation(relation),
            tail: self.entity(tail),
        };
        if self.seen.insert(t) {
            self.triples.push(t);
            true
        } else {
            self.duplicates_dropped += 1;
            false
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn build(self) -> Kg {
        let n = self.entity_labels.len();
        let mut out_index = vec![Vec::new(); n];
        let mut in_index = vec![Vec::new(); n];
        for t in &self.triples {
            out_index[t.head].push((t.relation, t.tail));
            in_index[t.tail].push((t.relation, t.head));
        }
        Kg {
            entity_labels: self.entity_labels,
            entity_index: self.entity_index,
            relation_labels: self.relation_labels,
            relation_index: self.relation_index,
            triples: self.triples,
            out_index,
            in_index,
            duplicates_dropped: self.duplicates_dropped,
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Splits a tab-separated file into records of exactly `fields` columns.
/// Blank lines are skipped; CRLF line endings are accepted.
pub(crate) fn read_tsv(path: &Path, fields: usize) -> Result<Vec<Vec<String>>> {
    read_tsv_between(path, fields, fields)
}

pub(crate) fn read_tsv_between(path: &Path, min: usize, max: usize) -> Result<Vec<Vec<String>>> {
    let text = read_to_string(path)?;
    let mut records = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < min || cols.len() > max {
            let expected = if min == max { min.to_string() } else { format!("{min} to {max}") };
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                msg: format!("expected {expected} tab-separated fields, found {}", cols.len()),
            });
        }
        records.push(cols.into_iter().map(str::to_owned).collect());
    }
    if records.is_empty() {
        return Err(Error::EmptyFile(path.to_owned()));
    }
    Ok(records)
}

fn triples_into(builder: &mut KgBuilder, path: &Path) -> Result<()> {
    for rec in read_tsv(path, 3)? {
        builder.triple(&rec[0], &rec[1], &rec[2]);
    }
    Ok(())
}

/// Loads a `head<TAB>relation<TAB>tail` file.
pub fn load_kg(path: &Path) -> Result<Kg> {
    let mut builder = KgBuilder::new();
    triples_into(&mut builder, path)?;
    Ok(builder.build())
}

/// The source graph `G` and target graph `G'`.
#[derive(Clone, Debug)]
pub struct KgPair {
    pub source: Kg,
    pub target: Kg,
}

/// A borrowed, oriented view of a [`KgPair`].
#[derive(Clone, Copy, Debug)]
pub struct KgPairRef<'a> {
    pub source: &'a Kg,
    pub target: &'a Kg,
}

impl<'a> KgPairRef<'a> {
    pub fn swap(self) -> KgPairRef<'a> {
        KgPairRef {
            source: self.target,
            target: self.source,
        }
    }
}

impl KgPair {
    pub fn new(source: Kg, target: Kg) -> Self {
        Self { source, target }
    }

    pub fn as_ref(&self) -> KgPairRef<'_> {
        KgPairRef {
            source: &self.source,
            target: &self.target,
        }
    }

    /// View with `direction` deciding which graph is the source.
    pub fn oriented(&self, direction: Direction) -> KgPairRef<'_> {
        match direction {
            Direction::SourceToTarget => self.as_ref(),
            Direction::TargetToSource => self.as_ref().swap(),
        }
    }

    /// Exchanges the two roles. Ids are untouched.
    pub fn swapped(self) -> KgPair {
        KgPair {
            source: self.target,
            target: self.source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MappingKind {
    Labelled,
    Pseudo,
}

/// A set of `(source, target)` entity pairs, each with a confidence score.
///
/// Pairs are kept ordered by `(source, target)` so iteration is
/// deterministic. Labelled pairs carry score 1.0.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingSet {
    kind: MappingKind,
    pairs: BTreeMap<(EntityId, EntityId), f64>,
}

impl MappingSet {
    pub fn new(kind: MappingKind) -> Self {
        Self {
            kind,
            pairs: BTreeMap::new(),
        }
    }

    pub fn from_pairs(kind: MappingKind, pairs: impl IntoIterator<Item = (EntityId, EntityId)>) -> Self {
        let mut set = Self::new(kind);
        for (s, t) in pairs {
            set.insert(s, t);
        }
        set
    }

    pub fn kind(&self) -> MappingKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: MappingKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn insert(&mut self, source: EntityId, target: EntityId) -> bool {
        self.insert_scored(source, target, 1.0)
    }

    /// Inserts a pair; a duplicate keeps the higher of the two scores.
    pub fn insert_scored(&mut self, source: EntityId, target: EntityId, score: f64) -> bool {
        match self.pairs.get_mut(&(source, target)) {
            Some(old) => {
                if score > *old {
                    *old = score;
                }
                false
            }
            None => {
                self.pairs.insert((source, target), score);
                true
            }
        }
    }

    pub fn remove(&mut self, source: EntityId, target: EntityId) -> bool {
        self.pairs.remove(&(source, target)).is_some()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, source: EntityId, target: EntityId) -> bool {
        self.pairs.contains_key(&(source, target))
    }

    pub fn score(&self, source: EntityId, target: EntityId) -> Option<f64> {
        self.pairs.get(&(source, target)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, EntityId)> + '_ {
        self.pairs.keys().copied()
    }

    pub fn iter_scored(&self) -> impl Iterator<Item = (EntityId, EntityId, f64)> + '_ {
        self.pairs.iter().map(|(&(s, t), &w)| (s, t, w))
    }

    pub fn sources(&self) -> BTreeSet<EntityId> {
        self.pairs.keys().map(|&(s, _)| s).collect()
    }

    pub fn targets(&self) -> BTreeSet<EntityId> {
        self.pairs.keys().map(|&(_, t)| t).collect()
    }

    /// The same pairs with the roles exchanged.
    pub fn flipped(&self) -> MappingSet {
        MappingSet {
            kind: self.kind,
            pairs: self.pairs.iter().map(|(&(s, t), &w)| ((t, s), w)).collect(),
        }
    }

    /// Set union; the result keeps `self`'s kind.
    pub fn union(&self, other: &MappingSet) -> MappingSet {
        let mut out = self.clone();
        for (s, t, w) in other.iter_scored() {
            out.insert_scored(s, t, w);
        }
        out
    }

    pub fn intersection_len(&self, other: &MappingSet) -> usize {
        self.iter().filter(|&(s, t)| other.contains(s, t)).count()
    }

    /// True when no entity appears twice on either side.
    pub fn is_one_to_one(&self) -> bool {
        let mut src = HashSet::new();
        let mut tgt = HashSet::new();
        self.iter().all(|(s, t)| src.insert(s) && tgt.insert(t))
    }

    pub fn validate(&self, pair: KgPairRef<'_>) -> Result<()> {
        for (s, t) in self.iter() {
            if s >= pair.source.num_entities() || t >= pair.target.num_entities() {
                return Err(Error::InvalidArgument(format!(
                    "mapping ({s}, {t}) references an entity outside the graphs"
                )));
            }
        }
        Ok(())
    }
}

/// Reads a `source<TAB>target` links file and resolves the labels.
/// Provenance columns written by [`write_links`] are accepted and ignored.
pub fn load_links(path: &Path, pair: &KgPair, kind: MappingKind) -> Result<MappingSet> {
    let mut set = MappingSet::new(kind);
    for rec in read_tsv_between(path, 2, 5)? {
        let resolve = |kg: &Kg, label: &str| {
            kg.entity_id(label).ok_or_else(|| Error::UnknownEntity {
                label: label.to_owned(),
                context: path.display().to_string(),
            })
        };
        set.insert(resolve(&pair.source, &rec[0])?, resolve(&pair.target, &rec[1])?);
    }
    Ok(set)
}

/// Provenance written alongside pseudo mappings.
#[derive(Clone, Debug)]
pub struct Provenance<'a> {
    pub iteration: usize,
    pub strategy: &'a str,
}

/// Writes a links file. With provenance, three extra columns
/// (iteration, strategy, score) follow each pair.
pub fn write_links(
    path: &Path,
    set: &MappingSet,
    pair: &KgPair,
    provenance: Option<&Provenance<'_>>,
) -> Result<()> {
    let mut buf = String::new();
    for (s, t, w) in set.iter_scored() {
        buf.push_str(pair.source.entity_label(s));
        buf.push('\t');
        buf.push_str(pair.target.entity_label(t));
        if let Some(p) = provenance {
            buf.push_str(&format!("\t{}\t{}\t{}", p.iteration, p.strategy, w));
        }
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// A benchmark dataset: two graphs plus their reference alignment.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub pair: KgPair,
    pub links: MappingSet,
}

pub const SOURCE_TRIPLES_FILE: &str = "rel_triples_1";
pub const TARGET_TRIPLES_FILE: &str = "rel_triples_2";
pub const LINKS_FILE: &str = "ent_links";

impl Dataset {
    /// Loads the conventional benchmark layout: `rel_triples_1`,
    /// `rel_triples_2` and `ent_links` inside `dir`.
    ///
    /// Entities that only occur in the links file are kept as isolated
    /// entities so they still take part in evaluation.
    pub fn load(dir: &Path) -> Result<Dataset> {
        Self::load_files(
            &dir.join(SOURCE_TRIPLES_FILE),
            &dir.join(TARGET_TRIPLES_FILE),
            &dir.join(LINKS_FILE),
        )
    }

    pub fn load_files(source: &Path, target: &Path, links: &Path) -> Result<Dataset> {
        let mut src = KgBuilder::new();
        let mut tgt = KgBuilder::new();
        triples_into(&mut src, source)?;
        triples_into(&mut tgt, target)?;
        let mut ids = Vec::new();
        for rec in read_tsv(links, 2)? {
            ids.push((src.entity(&rec[0]), tgt.entity(&rec[1])));
        }
        let pair = KgPair::new(src.build(), tgt.build());
        Ok(Dataset {
            pair,
            links: MappingSet::from_pairs(MappingKind::Labelled, ids),
        })
    }

    pub fn file_paths(dir: &Path) -> [PathBuf; 3] {
        [
            dir.join(SOURCE_TRIPLES_FILE),
            dir.join(TARGET_TRIPLES_FILE),
            dir.join(LINKS_FILE),
        ]
    }
}

/// Seeded split of reference links into labelled seeds and a test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub labelled: MappingSet,
    pub test: MappingSet,
    pub ratio: f64,
    pub seed: u64,
}

/// Name of the generator used for shuffling; recorded in manifests.
pub const PARTITION_PRNG: &str = "ChaCha8Rng::seed_from_u64";

/// Shuffles `links` (in sorted order) with ChaCha8 seeded from `seed` and
/// takes the first `round(ratio * |links|)` pairs as labelled data.
pub fn partition_mappings(links: &MappingSet, ratio: f64, seed: u64) -> Result<Partition> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "partition ratio must lie in (0, 1), got {ratio}"
        )));
    }
    if links.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two links to partition".into(),
        ));
    }
    let n_labelled = (ratio * links.len() as f64).round() as usize;
    if n_labelled == 0 {
        return Err(Error::InvalidArgument(format!(
            "ratio {ratio} yields no labelled pairs out of {}",
            links.len()
        )));
    }
    if n_labelled >= links.len() {
        return Err(Error::InvalidArgument(format!(
            "ratio {ratio} leaves no test pairs out of {}",
            links.len()
        )));
    }
    let mut pairs: Vec<(EntityId, EntityId)> = links.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let (head, tail) = pairs.split_at(n_labelled);
    Ok(Partition {
        labelled: MappingSet::from_pairs(MappingKind::Labelled, head.iter().copied()),
        test: MappingSet::from_pairs(MappingKind::Labelled, tail.iter().copied()),
        ratio,
        seed,
    })
}

impl Partition {
    /// Writes `labelled.tsv`, `test.tsv` and `partition.manifest` into `dir`.
    pub fn write(&self, dir: &Path, pair: &KgPair) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_links(&dir.join("labelled.tsv"), &self.labelled, pair, None)?;
        write_links(&dir.join("test.tsv"), &self.test, pair, None)?;
        let path = dir.join("partition.manifest");
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(
            f,
            "ratio = {}\nseed = {}\nprng = {}\nlabelled = {}\ntest = {}",
            self.ratio,
            self.seed,
            PARTITION_PRNG,
            self.labelled.len(),
            self.test.len()
        )
        .map_err(|e| Error::io(&path, e))
    }
}

/// `F_e`: an entity together with its one-hop neighbours.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorSubset {
    pub anchor: EntityId,
    /// Sorted and unique.
    pub members: Vec<EntityId>,
}

/// All entities that share a factor with the anchor, i.e. the anchor and
/// everything within two undirected hops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkovBlanket {
    pub anchor: EntityId,
    /// Sorted and unique.
    pub members: Vec<EntityId>,
}

pub fn factor_subset(kg: &Kg, e: EntityId) -> FactorSubset {
    let mut members = kg.neighbors(e);
    if let Err(pos) = members.binary_search(&e) {
        members.insert(pos, e);
    }
    FactorSubset { anchor: e, members }
}

pub fn markov_blanket(kg: &Kg, u: EntityId) -> MarkovBlanket {
    // u ∈ F_e exactly when e ∈ F_u, so the blanket is the union of the
    // factor subsets anchored at members of F_u.
    let mut members: BTreeSet<EntityId> = BTreeSet::new();
    for e in factor_subset(kg, u).members {
        members.extend(factor_subset(kg, e).members);
    }
    MarkovBlanket {
        anchor: u,
        members: members.into_iter().collect(),
    }
}
