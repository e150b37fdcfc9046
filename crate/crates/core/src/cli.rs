//! The `stea` command line.
//!
//! Exit status is 0 on success, 1 for configuration or validation errors
//! and 2 for failures while running.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{value_parser, Arg, ArgMatches, Command};

use crate::compat::{estimate_relation_stats, Assignment, Orientation};
use crate::config::{RunConfig, KEYS};
use crate::error::{Error, Result};
use crate::kg::{
    load_links, partition_mappings, read_tsv, Dataset, Direction, KgBuilder, KgPair, MappingKind, MappingSet,
};
use crate::metrics::{evaluate_similarities, pseudo_quality};
use crate::model::{read_sim_matrix, write_sim_matrix, SimMatrix};
use crate::run::execute;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .value_parser(value_parser!(PathBuf))
        .help(help)
}

fn command() -> Command {
    let mut run = Command::new("run")
        .about("Run a supervised or self-training experiment")
        .arg(path_arg("config", "Run configuration file (key = value lines)"));
    for key in KEYS {
        run = run.arg(Arg::new(*key).long(*key).value_name("VALUE").help("Overrides the config key of the same name"));
    }
    Command::new("stea")
        .about("Dependency-aware self-training for entity alignment")
        .subcommand_required(true)
        .subcommand(
            Command::new("partition")
                .about("Split reference links into labelled and test sets")
                .arg(path_arg("dataset", "Dataset directory; its ent_links are split"))
                .arg(path_arg("links", "Links file to split instead of a dataset"))
                .arg(
                    Arg::new("ratio")
                        .long("ratio")
                        .value_parser(value_parser!(f64))
                        .default_value("0.3"),
                )
                .arg(Arg::new("seed").long("seed").value_parser(value_parser!(u64)).default_value("0"))
                .arg(path_arg("out", "Output directory").default_value(".")),
        )
        .subcommand(run)
        .subcommand(
            Command::new("import-sim")
                .about("Convert or check an externally computed similarity matrix")
                .arg(path_arg("dataset", "Dataset directory").required(true))
                .arg(path_arg("matrix", "Matrix in the exchange format, or whitespace-separated numbers with --rows/--cols").required(true))
                .arg(path_arg("rows", "Row entity labels, one per line"))
                .arg(path_arg("cols", "Column entity labels, one per line"))
                .arg(
                    Arg::new("direction")
                        .long("direction")
                        .default_value("source_to_target")
                        .help("source_to_target or target_to_source"),
                )
                .arg(Arg::new("top-k").long("top-k").value_parser(value_parser!(usize)).help("Keep only the best k candidates per row"))
                .arg(path_arg("out", "Output file in the exchange format").required(true)),
        )
        .subcommand(
            Command::new("stats")
                .about("Dataset counts and relation statistics")
                .arg(path_arg("dataset", "Dataset directory").required(true))
                .arg(path_arg("links", "Alignment to estimate relation statistics from")),
        )
        .subcommand(
            Command::new("eval")
                .about("Score similarities or pseudo mappings against test links")
                .arg(path_arg("dataset", "Dataset directory").required(true))
                .arg(path_arg("test", "Test links").required(true))
                .arg(path_arg("sim", "Similarity matrix in the exchange format"))
                .arg(path_arg("pseudo", "Pseudo mapping file")),
        )
}

/// Validation-phase failures always exit with the configuration status.
enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Config(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn config_phase<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Config)
}

/// Runs the command line and returns the process exit status.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match matches.subcommand() {
        Some(("partition", m)) => partition(m, out),
        Some(("run", m)) => run(m, out),
        Some(("import-sim", m)) => import_sim(m, out),
        Some(("stats", m)) => stats(m, out),
        Some(("eval", m)) => eval(m, out),
        _ => unreachable!("subcommand is required"),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn io_out(e: std::io::Error) -> Failure {
    Failure::Runtime(Error::io("<stdout>", e))
}

/// A pair of edgeless graphs holding just the entities of a links file.
fn links_only(path: &Path) -> Result<Dataset> {
    let mut src = KgBuilder::new();
    let mut tgt = KgBuilder::new();
    let ids: Vec<_> = read_tsv(path, 2)?
        .into_iter()
        .map(|r| (src.entity(&r[0]), tgt.entity(&r[1])))
        .collect();
    Ok(Dataset {
        pair: KgPair::new(src.build(), tgt.build()),
        links: MappingSet::from_pairs(MappingKind::Labelled, ids),
    })
}

fn partition(m: &ArgMatches, out: &mut dyn Write) -> CliResult {
    let ds = match (m.get_one::<PathBuf>("dataset"), m.get_one::<PathBuf>("links")) {
        (Some(d), None) => Dataset::load(d)?,
        (None, Some(l)) => links_only(l)?,
        _ => return Err(Failure::Config(Error::Config("give exactly one of --dataset and --links".into()))),
    };
    let ratio = *m.get_one::<f64>("ratio").expect("default");
    let seed = *m.get_one::<u64>("seed").expect("default");
    let dir = m.get_one::<PathBuf>("out").expect("default");
    let p = config_phase(partition_mappings(&ds.links, ratio, seed))?;
    p.write(dir, &ds.pair)?;
    writeln!(out, "labelled = {}\ntest = {}\nout = {}", p.labelled.len(), p.test.len(), dir.display()).map_err(io_out)
}

/// Config file first, then flag overrides.
pub fn resolve_config(file: Option<&Path>, overrides: &[(&str, String)]) -> Result<RunConfig> {
    let mut cfg = match file {
        Some(p) => RunConfig::from_file(p).map_err(|e| match e {
            Error::Io { .. } | Error::Parse { .. } => Error::Config(e.to_string()),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(m: &ArgMatches, out: &mut dyn Write) -> CliResult {
    let overrides: Vec<(&str, String)> = KEYS
        .iter()
        .filter_map(|k| m.get_one::<String>(k).map(|v| (*k, v.clone())))
        .collect();
    let cfg = config_phase(resolve_config(m.get_one::<PathBuf>("config").map(PathBuf::as_path), &overrides))?;
    if cfg.threads > 0 {
        // fails only if a pool already exists, in which case that one is used
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    let summary = execute(&cfg)?;
    let last = summary.outcome.last();
    writeln!(
        out,
        "run_dir = {}\niterations = {}\nhit1 = {}\nhit10 = {}\nmrr = {}\npseudo_count = {}",
        summary.dir.display(),
        summary.outcome.reports.len(),
        last.hit1,
        last.hit10,
        last.mrr,
        last.pseudo_count
    )
    .map_err(io_out)
}

fn read_labels(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect())
}

/// Reads a whitespace-separated numeric matrix whose rows and columns are
/// named by label files.
fn read_raw_matrix(pair: &KgPair, matrix: &Path, rows: &Path, cols: &Path, direction: Direction) -> Result<SimMatrix> {
    let p = pair.oriented(direction);
    let resolve = |labels: Vec<String>, kg: &crate::kg::Kg, file: &Path| -> Result<Vec<usize>> {
        labels
            .into_iter()
            .map(|l| {
                kg.entity_id(&l).ok_or_else(|| Error::UnknownEntity {
                    label: l,
                    context: file.display().to_string(),
                })
            })
            .collect()
    };
    let row_ids = resolve(read_labels(rows)?, p.source, rows)?;
    let col_ids = resolve(read_labels(cols)?, p.target, cols)?;
    let (n_rows, n_cols) = (p.source.num_entities(), p.target.num_entities());
    if row_ids.len() != n_rows || col_ids.len() != n_cols {
        return Err(Error::InvalidArgument(format!(
            "label files name {}×{} entities but the graphs have {n_rows}×{n_cols}",
            row_ids.len(),
            col_ids.len()
        )));
    }
    let text = fs::read_to_string(matrix).map_err(|e| Error::io(matrix, e))?;
    let mut data = vec![f64::NAN; n_rows * n_cols];
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != n_rows {
        return Err(Error::Parse {
            path: matrix.to_path_buf(),
            line: lines.len(),
            msg: format!("expected {n_rows} rows, found {}", lines.len()),
        });
    }
    for (i, line) in lines.iter().enumerate() {
        let vals: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: String| Error::Parse {
            path: matrix.to_path_buf(),
            line: i + 1,
            msg,
        };
        if vals.len() != n_cols {
            return Err(bad(format!("expected {n_cols} values, found {}", vals.len())));
        }
        for (j, v) in vals.iter().enumerate() {
            let x: f64 = v.parse().map_err(|_| bad(format!("not a number: {v:?}")))?;
            if !x.is_finite() {
                return Err(bad(format!("non-finite score {v}")));
            }
            data[row_ids[i] * n_cols + col_ids[j]] = x;
        }
    }
    SimMatrix::dense(direction, n_rows, n_cols, data)
}

fn import_sim(m: &ArgMatches, out: &mut dyn Write) -> CliResult {
    let ds = Dataset::load(m.get_one::<PathBuf>("dataset").expect("required"))?;
    let matrix = m.get_one::<PathBuf>("matrix").expect("required");
    let dir_text = m.get_one::<String>("direction").expect("default");
    let direction = Direction::parse(dir_text)
        .ok_or_else(|| Failure::Config(Error::Config(format!("unknown direction {dir_text:?}"))))?;
    let mut sim = match (m.get_one::<PathBuf>("rows"), m.get_one::<PathBuf>("cols")) {
        (Some(r), Some(c)) => read_raw_matrix(&ds.pair, matrix, r, c, direction)?,
        (None, None) => read_sim_matrix(matrix, &ds.pair)?,
        _ => return Err(Failure::Config(Error::Config("--rows and --cols go together".into()))),
    };
    if let Some(&k) = m.get_one::<usize>("top-k") {
        if k == 0 {
            return Err(Failure::Config(Error::Config("--top-k must be at least 1".into())));
        }
        sim = sim.truncate(k);
    }
    let dest = m.get_one::<PathBuf>("out").expect("required");
    write_sim_matrix(dest, &sim, &ds.pair)?;
    writeln!(
        out,
        "direction = {}\nrows = {}\ncols = {}\nlayout = {}\nout = {}",
        sim.direction(),
        sim.n_rows(),
        sim.n_cols(),
        if sim.is_dense() { "dense" } else { "topk" },
        dest.display()
    )
    .map_err(io_out)
}

fn stats(m: &ArgMatches, out: &mut dyn Write) -> CliResult {
    let ds = Dataset::load(m.get_one::<PathBuf>("dataset").expect("required"))?;
    let mut text = String::new();
    for (side, kg) in [("source", &ds.pair.source), ("target", &ds.pair.target)] {
        text.push_str(&format!(
            "{side}.entities = {}\n{side}.relations = {}\n{side}.triples = {}\n{side}.duplicates_dropped = {}\n",
            kg.num_entities(),
            kg.num_relations(),
            kg.triples().len(),
            kg.duplicates_dropped()
        ));
    }
    text.push_str(&format!("links = {}\n", ds.links.len()));
    if let Some(path) = m.get_one::<PathBuf>("links") {
        let links = load_links(path, &ds.pair, MappingKind::Labelled)?;
        let assignment = Assignment::from_labelled(ds.pair.source.num_entities(), &links);
        let rs = estimate_relation_stats(ds.pair.as_ref(), &assignment);
        text.push_str("side\trelation\tinv_fun\tinv_fun_inverse\tbest_match\tsubrel\n");
        let (src, tgt) = (&ds.pair.source, &ds.pair.target);
        for r in 0..src.num_relations() {
            let best = (0..tgt.num_relations()).max_by(|&a, &b| {
                rs.source_in_target(r, a).total_cmp(&rs.source_in_target(r, b)).then(b.cmp(&a))
            });
            let (name, p) = best.map_or(("-", 0.0), |b| (tgt.relation_label(b), rs.source_in_target(r, b)));
            text.push_str(&format!(
                "source\t{}\t{}\t{}\t{name}\t{p}\n",
                src.relation_label(r),
                rs.source_inv_fun(r, Orientation::Forward),
                rs.source_inv_fun(r, Orientation::Inverse)
            ));
        }
        for r in 0..tgt.num_relations() {
            let best = (0..src.num_relations()).max_by(|&a, &b| {
                rs.target_in_source(r, a).total_cmp(&rs.target_in_source(r, b)).then(b.cmp(&a))
            });
            let (name, p) = best.map_or(("-", 0.0), |b| (src.relation_label(b), rs.target_in_source(r, b)));
            text.push_str(&format!(
                "target\t{}\t{}\t{}\t{name}\t{p}\n",
                tgt.relation_label(r),
                rs.target_inv_fun(r, Orientation::Forward),
                rs.target_inv_fun(r, Orientation::Inverse)
            ));
        }
    }
    out.write_all(text.as_bytes()).map_err(io_out)
}

fn eval(m: &ArgMatches, out: &mut dyn Write) -> CliResult {
    let ds = Dataset::load(m.get_one::<PathBuf>("dataset").expect("required"))?;
    let test = load_links(m.get_one::<PathBuf>("test").expect("required"), &ds.pair, MappingKind::Labelled)?;
    let sim = m.get_one::<PathBuf>("sim");
    let pseudo = m.get_one::<PathBuf>("pseudo");
    if sim.is_none() && pseudo.is_none() {
        return Err(Failure::Config(Error::Config("give --sim, --pseudo or both".into())));
    }
    let mut record = serde_json::Map::new();
    if let Some(p) = sim {
        let mut s = read_sim_matrix(p, &ds.pair)?;
        if s.direction() == Direction::TargetToSource {
            s = s.transpose();
        }
        let r = evaluate_similarities(&s, &test)?;
        record.insert("ranking".into(), serde_json::to_value(r).expect("numeric record"));
    }
    if let Some(p) = pseudo {
        let set = match load_links(p, &ds.pair, MappingKind::Pseudo) {
            Err(Error::EmptyFile(_)) => MappingSet::new(MappingKind::Pseudo),
            other => other?,
        };
        let q = pseudo_quality(&set, &test);
        record.insert("pseudo_count".into(), set.len().into());
        record.insert("pseudo".into(), serde_json::to_value(q).expect("numeric record"));
    }
    writeln!(out, "{}", serde_json::Value::Object(record)).map_err(io_out)
}
