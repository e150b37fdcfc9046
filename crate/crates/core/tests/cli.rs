use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use stea::cli::{main_with_args, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
use stea::synth::{twin_pair, write_dataset, TwinConfig};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn stea(args: &[&str]) -> Out {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("stea").chain(args.iter().copied());
    let code = main_with_args(argv, &mut out, &mut err);
    Out {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn dataset(dir: &Path) -> PathBuf {
    let path = dir.join("data");
    let ds = twin_pair(&TwinConfig {
        entities: 50,
        triples: 200,
        relations: 5,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    write_dataset(&path, &ds).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_alpha_is_a_config_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let o = stea(&["run", "--dataset", s(&data), "--strategy", "UniThr", "--output_dir", s(tmp.path())]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("alpha"), "{}", o.stderr);
    assert!(fs::read_dir(tmp.path()).unwrap().count() == 1, "no run dir is created");
}

#[test]
fn unknown_flags_and_keys_exit_with_config_status() {
    assert_eq!(stea(&["run", "--no-such-flag", "1"]).code, EXIT_CONFIG);
    assert_eq!(stea(&["frobnicate"]).code, EXIT_CONFIG);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "colour = blue\n").unwrap();
    let o = stea(&["run", "--config", s(&cfg)]);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.stderr.contains("colour"), "{}", o.stderr);
    assert_eq!(stea(&["run", "--config", s(&tmp.path().join("absent.cfg"))]).code, EXIT_CONFIG);
}

#[test]
fn binary_reports_the_same_statuses() {
    let bin = env!("CARGO_BIN_EXE_stea");
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(EXIT_OK));
    let bad = Command::new(bin).args(["partition", "--ratio", "0.3"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn partition_of_a_links_file() {
    let tmp = tempfile::tempdir().unwrap();
    let links = tmp.path().join("links.tsv");
    let text: String = (0..20).map(|i| format!("a{i}\tb{i}\n")).collect();
    fs::write(&links, text).unwrap();
    let out = tmp.path().join("split");
    let o = stea(&["partition", "--links", s(&links), "--ratio", "0.3", "--seed", "5", "--out", s(&out)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let labelled = fs::read_to_string(out.join("labelled.tsv")).unwrap();
    let test = fs::read_to_string(out.join("test.tsv")).unwrap();
    assert_eq!(labelled.lines().count(), 6);
    assert_eq!(test.lines().count(), 14);
    let mut all: Vec<&str> = labelled.lines().chain(test.lines()).collect();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), 20);
    // a ratio that leaves one side empty is rejected
    assert_eq!(stea(&["partition", "--links", s(&links), "--ratio", "0.01", "--out", s(&out)]).code, EXIT_CONFIG);
}

#[test]
fn selftrain_run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let runs = tmp.path().join("runs");
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# small self-training run\ndataset = {}\nmode = selftrain\nstrategy = MutHighestProb\niterations = 2\nepochs = 5\ndim = 16\noutput_dir = {}\n",
            s(&data),
            s(&runs)
        ),
    )
    .unwrap();
    let o = stea(&["run", "--config", s(&cfg), "--model", "oracle"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let dirs: Vec<PathBuf> = fs::read_dir(&runs).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    let dir = &dirs[0];
    assert!(o.stdout.contains(s(dir)));
    let metrics = fs::read_to_string(dir.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    for (i, line) in metrics.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            ["hit1", "hit10", "iter", "loss", "mrr", "pseudo_count", "pseudo_precision", "pseudo_recall", "seconds"]
        );
        assert_eq!(obj["iter"], i);
    }
    let manifest = fs::read_to_string(dir.join("manifest")).unwrap();
    assert!(manifest.contains("model = oracle"), "{manifest}");
    assert!(manifest.contains("config_hash"));
    assert!(dir.join("pseudo.tsv").exists());

    // the pseudo file scores through eval
    let test = tmp.path().join("all_links.tsv");
    fs::copy(data.join("ent_links"), &test).unwrap();
    let e = stea(&["eval", "--dataset", s(&data), "--test", s(&test), "--pseudo", s(&dir.join("pseudo.tsv"))]);
    assert_eq!(e.code, EXIT_OK, "{}", e.stderr);
    let v: serde_json::Value = serde_json::from_str(e.stdout.trim()).unwrap();
    assert!(v["pseudo"]["precision"].as_f64().unwrap() > 0.5, "{v}");
}

#[test]
fn raw_matrix_imports_and_evaluates() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let ds = stea::kg::Dataset::load(&data).unwrap();
    let (src, tgt) = (&ds.pair.source, &ds.pair.target);
    let rows = tmp.path().join("rows");
    let cols = tmp.path().join("cols");
    fs::write(&rows, src.entity_labels().join("\n")).unwrap();
    fs::write(&cols, tgt.entity_labels().join("\n")).unwrap();
    // a perfect matrix: 1 on every reference link, 0 elsewhere
    let mut m = vec![vec![0.0; tgt.num_entities()]; src.num_entities()];
    for (a, b) in ds.links.iter() {
        m[a][b] = 1.0;
    }
    let text: String = m
        .iter()
        .map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    let raw = tmp.path().join("raw.txt");
    fs::write(&raw, text).unwrap();
    let sim = tmp.path().join("sim.tsv");
    let o = stea(&[
        "import-sim", "--dataset", s(&data), "--matrix", s(&raw), "--rows", s(&rows), "--cols", s(&cols),
        "--top-k", "5", "--out", s(&sim),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("layout = topk"));

    // re-reading the exchange file is a no-op conversion
    let again = tmp.path().join("again.tsv");
    let o = stea(&["import-sim", "--dataset", s(&data), "--matrix", s(&sim), "--out", s(&again)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert_eq!(fs::read_to_string(&sim).unwrap(), fs::read_to_string(&again).unwrap());

    let e = stea(&["eval", "--dataset", s(&data), "--test", s(&data.join("ent_links")), "--sim", s(&sim)]);
    assert_eq!(e.code, EXIT_OK, "{}", e.stderr);
    let v: serde_json::Value = serde_json::from_str(e.stdout.trim()).unwrap();
    assert_eq!(v["ranking"]["hit1"].as_f64(), Some(1.0), "{v}");

    fs::write(&raw, "1 2 3\n").unwrap();
    let bad = stea(&["import-sim", "--dataset", s(&data), "--matrix", s(&raw), "--rows", s(&rows), "--cols", s(&cols), "--out", s(&sim)]);
    assert_eq!(bad.code, EXIT_RUNTIME, "{}", bad.stderr);
}

#[test]
fn stats_lists_both_graphs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let o = stea(&["stats", "--dataset", s(&data), "--links", s(&data.join("ent_links"))]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("source.entities = 50"), "{}", o.stdout);
    assert!(o.stdout.contains("links = 50"));
    let table: Vec<&str> = o.stdout.lines().filter(|l| l.starts_with("source\t") || l.starts_with("target\t")).collect();
    assert_eq!(table.len(), 10);
}

#[test]
fn malformed_dataset_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    fs::write(data.join("rel_triples_1"), "only\ttwo\n").unwrap();
    let o = stea(&["stats", "--dataset", s(&data)]);
    assert_eq!(o.code, EXIT_RUNTIME, "{}", o.stderr);
    assert!(o.stderr.contains("rel_triples_1"), "{}", o.stderr);
}
