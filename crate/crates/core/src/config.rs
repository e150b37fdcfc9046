//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Every key can also
//! be set from the command line with a flag of the same name, which wins
//! over the file. An empty value or `none` clears an optional key.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kg::Direction;
use crate::model::EmbeddingAlignerParams;
use crate::pseudo::{Strategy, StrategyConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Supervised,
    Selftrain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Embedding,
    Oracle,
    Import,
}

/// Which assignment relation statistics are estimated from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatsAssignment {
    /// Labelled pairs plus the argmax of `q` for every other entity.
    Predicted,
    LabelledOnly,
}

/// Scores used for the per-iteration ranking metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankWith {
    Similarity,
    QStar,
}

macro_rules! keyword_enum {
    ($ty:ty, $($name:literal => $variant:expr),+) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($variant),)+
                    _ => Err(format!("expected one of: {}", [$($name),+].join(", "))),
                }
            }
        }
        impl $ty {
            pub fn as_str(self) -> &'static str {
                $(if self == $variant { return $name; })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(Mode, "supervised" => Mode::Supervised, "selftrain" => Mode::Selftrain);
keyword_enum!(ModelKind, "embedding" => ModelKind::Embedding, "oracle" => ModelKind::Oracle, "import" => ModelKind::Import);
keyword_enum!(StatsAssignment, "predicted" => StatsAssignment::Predicted, "labelled_only" => StatsAssignment::LabelledOnly);
keyword_enum!(RankWith, "similarity" => RankWith::Similarity, "q_star" => RankWith::QStar);

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Directory with `rel_triples_1`, `rel_triples_2` and `ent_links`.
    pub dataset: Option<PathBuf>,
    /// Pre-split links; when absent the dataset links are partitioned.
    pub labelled: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub partition_ratio: f64,
    pub seed: u64,
    pub mode: Mode,

    pub model: ModelKind,
    pub sim_forward: Option<PathBuf>,
    pub sim_backward: Option<PathBuf>,
    pub oracle_noise: f64,
    pub dim: usize,
    pub margin: f64,
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub share_relations: bool,
    /// Reset the model before every refit instead of warm-starting.
    pub cold_restart: bool,

    pub strategy: Strategy,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
    pub uni_direction: Direction,
    pub top_k: usize,
    pub iterations: usize,
    pub cd_sweeps: usize,
    pub stats_assignment: StatsAssignment,
    pub normalizer_lr: f64,
    pub normalizer_epochs: usize,
    pub rank_with: RankWith,

    pub output_dir: PathBuf,
    /// Write wall-clock seconds into the metrics stream. Off by default so
    /// repeated runs produce identical files.
    pub record_timing: bool,
    /// Dump q* rows and factor sums for every iteration.
    pub debug_dump: bool,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = EmbeddingAlignerParams::default();
        Self {
            dataset: None,
            labelled: None,
            test: None,
            partition_ratio: 0.3,
            seed: 0,
            mode: Mode::Selftrain,
            model: ModelKind::Embedding,
            sim_forward: None,
            sim_backward: None,
            oracle_noise: 0.3,
            dim: m.dim,
            margin: m.margin,
            negatives: m.negatives,
            learning_rate: m.learning_rate,
            epochs: m.epochs,
            share_relations: m.share_relations,
            cold_restart: false,
            strategy: Strategy::MutHighestProb,
            alpha: None,
            theta: None,
            uni_direction: Direction::SourceToTarget,
            top_k: 10,
            iterations: 10,
            cd_sweeps: 1,
            stats_assignment: StatsAssignment::Predicted,
            normalizer_lr: 0.05,
            normalizer_epochs: 200,
            rank_with: RankWith::Similarity,
            output_dir: PathBuf::from("runs"),
            record_timing: false,
            debug_dump: false,
            threads: 0,
        }
    }
}

/// Every recognised key, in manifest order.
pub const KEYS: &[&str] = &[
    "dataset",
    "labelled",
    "test",
    "partition_ratio",
    "seed",
    "mode",
    "model",
    "sim_forward",
    "sim_backward",
    "oracle_noise",
    "dim",
    "margin",
    "negatives",
    "learning_rate",
    "epochs",
    "share_relations",
    "cold_restart",
    "strategy",
    "alpha",
    "theta",
    "uni_direction",
    "top_k",
    "iterations",
    "cd_sweeps",
    "stats_assignment",
    "normalizer_lr",
    "normalizer_epochs",
    "rank_with",
    "output_dir",
    "record_timing",
    "debug_dump",
    "threads",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value {value:?} for `{key}`: {e}")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value.is_empty() || value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "dataset" => self.dataset = optional(key, v)?,
            "labelled" => self.labelled = optional(key, v)?,
            "test" => self.test = optional(key, v)?,
            "partition_ratio" => self.partition_ratio = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "mode" => self.mode = parse(key, v)?,
            "model" => self.model = parse(key, v)?,
            "sim_forward" => self.sim_forward = optional(key, v)?,
            "sim_backward" => self.sim_backward = optional(key, v)?,
            "oracle_noise" => self.oracle_noise = parse(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "margin" => self.margin = parse(key, v)?,
            "negatives" => self.negatives = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "share_relations" => self.share_relations = parse(key, v)?,
            "cold_restart" => self.cold_restart = parse(key, v)?,
            "strategy" => {
                self.strategy = Strategy::parse(v)
                    .ok_or_else(|| Error::Config(format!("unknown strategy {v:?}")))?
            }
            "alpha" => self.alpha = optional(key, v)?,
            "theta" => self.theta = optional(key, v)?,
            "uni_direction" => {
                self.uni_direction = Direction::parse(v)
                    .ok_or_else(|| Error::Config(format!("unknown direction {v:?}")))?
            }
            "top_k" => self.top_k = parse(key, v)?,
            "iterations" => self.iterations = parse(key, v)?,
            "cd_sweeps" => self.cd_sweeps = parse(key, v)?,
            "stats_assignment" => self.stats_assignment = parse(key, v)?,
            "normalizer_lr" => self.normalizer_lr = parse(key, v)?,
            "normalizer_epochs" => self.normalizer_epochs = parse(key, v)?,
            "rank_with" => self.rank_with = parse(key, v)?,
            "output_dir" => self.output_dir = parse(key, v)?,
            "record_timing" => self.record_timing = parse(key, v)?,
            "debug_dump" => self.debug_dump = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Current value of `key` in the form [`RunConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(|| "none".into(), |p| p.display().to_string());
        Some(match key {
            "dataset" => path(&self.dataset),
            "labelled" => path(&self.labelled),
            "test" => path(&self.test),
            "partition_ratio" => self.partition_ratio.to_string(),
            "seed" => self.seed.to_string(),
            "mode" => self.mode.as_str().into(),
            "model" => self.model.as_str().into(),
            "sim_forward" => path(&self.sim_forward),
            "sim_backward" => path(&self.sim_backward),
            "oracle_noise" => self.oracle_noise.to_string(),
            "dim" => self.dim.to_string(),
            "margin" => self.margin.to_string(),
            "negatives" => self.negatives.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "epochs" => self.epochs.to_string(),
            "share_relations" => self.share_relations.to_string(),
            "cold_restart" => self.cold_restart.to_string(),
            "strategy" => self.strategy.name().into(),
            "alpha" => opt_str(&self.alpha),
            "theta" => opt_str(&self.theta),
            "uni_direction" => self.uni_direction.as_str().into(),
            "top_k" => self.top_k.to_string(),
            "iterations" => self.iterations.to_string(),
            "cd_sweeps" => self.cd_sweeps.to_string(),
            "stats_assignment" => self.stats_assignment.as_str().into(),
            "normalizer_lr" => self.normalizer_lr.to_string(),
            "normalizer_epochs" => self.normalizer_epochs.to_string(),
            "rank_with" => self.rank_with.as_str().into(),
            "output_dir" => self.output_dir.display().to_string(),
            "record_timing" => self.record_timing.to_string(),
            "debug_dump" => self.debug_dump.to_string(),
            "threads" => self.threads.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: "expected `key = value`".into(),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Fully resolved configuration, one `key = value` line per key.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("known key"));
        }
        out
    }

    /// Hex SHA-256 of [`RunConfig::to_text`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn strategy_config(&self) -> StrategyConfig {
        StrategyConfig {
            strategy: self.strategy,
            alpha: self.alpha,
            theta: self.theta,
            direction: self.uni_direction,
        }
    }

    pub fn model_params(&self) -> EmbeddingAlignerParams {
        EmbeddingAlignerParams {
            dim: self.dim,
            margin: self.margin,
            negatives: self.negatives,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            share_relations: self.share_relations,
            seed: self.seed,
        }
    }

    /// Checks values and cross-key consistency without touching the
    /// filesystem.
    pub fn validate_values(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.top_k == 0 {
            return fail("`top_k` must be at least 1");
        }
        if self.iterations == 0 {
            return fail("`iterations` must be at least 1");
        }
        if self.epochs == 0 {
            return fail("`epochs` must be at least 1");
        }
        if self.cd_sweeps == 0 {
            return fail("`cd_sweeps` must be at least 1");
        }
        if self.dim == 0 {
            return fail("`dim` must be at least 1");
        }
        if !(self.partition_ratio > 0.0 && self.partition_ratio < 1.0) {
            return fail("`partition_ratio` must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.oracle_noise) {
            return fail("`oracle_noise` must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0) || !(self.normalizer_lr > 0.0) || !(self.margin > 0.0) {
            return fail("learning rates and margin must be positive");
        }
        if self.labelled.is_some() != self.test.is_some() {
            return fail("`labelled` and `test` must be given together");
        }
        match self.mode {
            Mode::Selftrain => self.strategy_config().validate()?,
            Mode::Supervised => {
                if self.rank_with == RankWith::QStar {
                    return fail("`rank_with = q_star` needs selftrain mode");
                }
            }
        }
        if self.model == ModelKind::Import && self.sim_forward.is_none() {
            return fail("model `import` requires `sim_forward`");
        }
        Ok(())
    }

    /// [`RunConfig::validate_values`] plus existence of every referenced
    /// file.
    pub fn validate(&self) -> Result<()> {
        self.validate_values()?;
        let dataset = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("`dataset` is required".into()))?;
        let mut paths: Vec<PathBuf> = crate::kg::Dataset::file_paths(dataset).into();
        paths.extend(self.labelled.iter().cloned());
        paths.extend(self.test.iter().cloned());
        if self.model == ModelKind::Import {
            paths.extend(self.sim_forward.iter().cloned());
            paths.extend(self.sim_backward.iter().cloned());
        }
        for p in paths {
            if !p.is_file() {
                return Err(Error::Config(format!("file not found: {}", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# comment\n\nstrategy = UniThr\nalpha = 0.9\nseed=7\ndataset = data/x\n",
            Path::new("run.conf"),
        )
        .unwrap();
        assert_eq!(cfg.strategy, Strategy::UniThr);
        assert_eq!(cfg.alpha, Some(0.9));
        assert_eq!(cfg.seed, 7);
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn every_key_is_readable_and_writable() {
        let mut cfg = RunConfig::default();
        for k in KEYS {
            let v = cfg.get(k).unwrap();
            cfg.set(k, &v).unwrap();
        }
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("top_k", "ten").is_err());
        assert!(cfg.set("mode", "both").is_err());
        let err = cfg.apply_text("just words", Path::new("c")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn validation_rules() {
        let ok = RunConfig::default();
        ok.validate_values().unwrap();
        let bad = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate_values().unwrap_err()
        };
        assert!(bad(|c| c.top_k = 0).is_validation());
        bad(|c| c.iterations = 0);
        bad(|c| c.theta = Some(0.5));
        let e = bad(|c| c.strategy = Strategy::UniThr);
        assert!(e.to_string().contains("alpha"), "{e}");
        bad(|c| c.labelled = Some("a".into()));
        bad(|c| c.model = ModelKind::Import);
        // thresholds are irrelevant without self-training
        let mut sup = RunConfig { mode: Mode::Supervised, theta: Some(0.5), ..Default::default() };
        sup.validate_values().unwrap();
        sup.rank_with = RankWith::QStar;
        assert!(sup.validate_values().is_err());
    }

    #[test]
    fn missing_files_fail_validation() {
        let cfg = RunConfig { dataset: Some("/nonexistent/ds".into()), ..Default::default() };
        assert!(cfg.validate().unwrap_err().is_validation());
        assert!(RunConfig::default().validate().is_err());
    }
}
