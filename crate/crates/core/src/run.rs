//! Running a configuration end to end with on-disk artifacts.
//!
//! Each run gets its own directory `<output_dir>/<UTC timestamp>-<config
//! hash prefix>` holding `manifest`, `metrics.jsonl` and `pseudo.tsv`.
//! Existing directories are never reused.

use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::compat::write_q_star_dump;
use crate::config::{ModelKind, RunConfig};
use crate::error::{Error, Result};
use crate::kg::{load_links, partition_mappings, write_links, Dataset, Direction, MappingKind, Provenance, PARTITION_PRNG};
use crate::model::{read_sim_matrix, EaModel, EmbeddingAligner, PrecomputedModel, SyntheticOracle};
use crate::selftrain::{run, Experiment, IterationDetail, IterationReport, RunObserver, RunOutcome};

pub const MANIFEST_FILE: &str = "manifest";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const PSEUDO_FILE: &str = "pseudo.tsv";

/// Loads the dataset and either reads the configured split or partitions
/// the reference links.
pub fn load_experiment(cfg: &RunConfig) -> Result<Experiment> {
    let dir = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("`dataset` is required".into()))?;
    let ds = Dataset::load(dir)?;
    let (labelled, test) = match (&cfg.labelled, &cfg.test) {
        (Some(l), Some(t)) => (
            load_links(l, &ds.pair, MappingKind::Labelled)?,
            load_links(t, &ds.pair, MappingKind::Labelled)?,
        ),
        _ => {
            let p = partition_mappings(&ds.links, cfg.partition_ratio, cfg.seed)?;
            (p.labelled, p.test)
        }
    };
    Ok(Experiment {
        pair: ds.pair,
        labelled,
        test,
    })
}

pub fn build_model(cfg: &RunConfig, exp: &Experiment) -> Result<Box<dyn EaModel>> {
    Ok(match cfg.model {
        ModelKind::Embedding => Box::new(EmbeddingAligner::new(cfg.model_params())),
        ModelKind::Oracle => {
            let truth = exp.labelled.union(&exp.test);
            Box::new(SyntheticOracle::new(&exp.pair, &truth, cfg.oracle_noise, cfg.seed)?)
        }
        ModelKind::Import => {
            let first = cfg
                .sim_forward
                .as_ref()
                .ok_or_else(|| Error::Config("model `import` requires `sim_forward`".into()))?;
            let first = read_sim_matrix(first, &exp.pair)?;
            let second = cfg
                .sim_backward
                .as_ref()
                .map(|p| read_sim_matrix(p, &exp.pair))
                .transpose()?;
            Box::new(PrecomputedModel::new(first, second)?)
        }
    })
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Claims a fresh run directory under `output_dir`.
pub fn create_run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let root = &cfg.output_dir;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{stamp}-{}", &cfg.hash()[..12]);
    for n in 0.. {
        let name = if n == 0 { base.clone() } else { format!("{base}-{n}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}

/// Streams metrics and manifest entries into a run directory.
pub struct ArtifactWriter {
    dir: PathBuf,
    metrics: File,
    manifest: File,
    /// Kept only when q* rows are dumped.
    dump_pair: Option<crate::kg::KgPair>,
    prev_hit1: Option<f64>,
}

fn append(path: &Path) -> Result<File> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))
}

impl ArtifactWriter {
    /// Opens the artifact files and writes the manifest header.
    pub fn create(dir: &Path, cfg: &RunConfig, exp: &Experiment, model: &str) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let mut manifest = append(&manifest_path)?;
        let mut head = cfg.to_text();
        head.push_str(&format!("config_hash = {}\n", cfg.hash()));
        head.push_str(&format!("model_name = {model}\n"));
        head.push_str(&format!("partition_seed = {}\nmodel_seed = {}\n", cfg.seed, cfg.seed));
        head.push_str(&format!("partition_prng = {PARTITION_PRNG}\n"));
        if let Some(ds) = &cfg.dataset {
            for p in Dataset::file_paths(ds) {
                let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                head.push_str(&format!("sha256.{name} = {}\n", file_sha256(&p)?));
            }
        }
        for (key, p) in [("labelled", &cfg.labelled), ("test", &cfg.test), ("sim_forward", &cfg.sim_forward), ("sim_backward", &cfg.sim_backward)] {
            if let Some(p) = p {
                if p.is_file() {
                    head.push_str(&format!("sha256.{key} = {}\n", file_sha256(p)?));
                }
            }
        }
        head.push_str(&format!(
            "labelled_count = {}\ntest_count = {}\nstarted = {}\n",
            exp.labelled.len(),
            exp.test.len(),
            chrono::Utc::now().to_rfc3339()
        ));
        manifest
            .write_all(head.as_bytes())
            .map_err(|e| Error::io(&manifest_path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics: append(&dir.join(METRICS_FILE))?,
            manifest,
            dump_pair: cfg.debug_dump.then(|| exp.pair.clone()),
            prev_hit1: None,
        })
    }

    fn manifest_line(&mut self, line: &str) -> Result<()> {
        let path = self.dir.join(MANIFEST_FILE);
        writeln!(self.manifest, "{line}").map_err(|e| Error::io(&path, e))
    }
}

impl RunObserver for ArtifactWriter {
    fn iteration(&mut self, report: &IterationReport, detail: &IterationDetail<'_>) -> Result<()> {
        let path = self.dir.join(METRICS_FILE);
        let line = serde_json::to_string(report).expect("plain numeric record");
        writeln!(self.metrics, "{line}").map_err(|e| Error::io(&path, e))?;
        self.metrics.flush().map_err(|e| Error::io(&path, e))?;

        let i = report.iter;
        if let Some([f, b]) = detail.omega {
            self.manifest_line(&format!(
                "iter.{i}.omega_forward = {} {} {}\niter.{i}.omega_backward = {} {} {}",
                f.omega0,
                f.omega1,
                f.tau(),
                b.omega0,
                b.omega1,
                b.tau()
            ))?;
        }
        let delta = report.hit1 - self.prev_hit1.unwrap_or(report.hit1);
        self.prev_hit1 = Some(report.hit1);
        self.manifest_line(&format!("iter.{i}.hit1_delta = {delta}\niter.{i}.train_size = {}", detail.train_size))?;

        if let (Some(rows), Some(pair)) = (detail.q_star, &self.dump_pair) {
            for (k, dir) in [Direction::SourceToTarget, Direction::TargetToSource].into_iter().enumerate() {
                let p = self.dir.join(format!("q_star.{i}.{}.tsv", dir.as_str()));
                write_q_star_dump(&p, pair.oriented(dir), rows[k])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub outcome: RunOutcome,
}

/// Validates, loads, runs and records one configuration.
///
/// On a failure mid-run the iterations already completed stay on disk.
pub fn execute(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let exp = load_experiment(cfg)?;
    exp.validate()?;
    let mut model = build_model(cfg, &exp)?;
    let dir = create_run_dir(cfg)?;
    let mut writer = ArtifactWriter::create(&dir, cfg, &exp, model.name())?;
    let start = Instant::now();
    let outcome = run(cfg, &exp, model.as_mut(), &mut writer)?;
    let last = outcome.last().iter;
    write_links(
        &dir.join(PSEUDO_FILE),
        &outcome.pseudo,
        &exp.pair,
        Some(&Provenance {
            iteration: last,
            strategy: cfg.strategy.name(),
        }),
    )?;
    writer.manifest_line(&format!(
        "wall_clock_seconds = {}\nfinished = {}",
        start.elapsed().as_secs_f64(),
        chrono::Utc::now().to_rfc3339()
    ))?;
    Ok(RunSummary { dir, outcome })
}
