//! A full run from configuration text, with artifacts under a fresh run
//! directory.
//!
//! cargo run --release --example run_from_config -- [output_dir]

use stea::config::RunConfig;
use stea::run::execute;
use stea::synth::{twin_pair, write_dataset, TwinConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs".into());
    let tmp = tempfile::tempdir()?;
    let data = tmp.path().join("twin");
    write_dataset(&data, &twin_pair(&TwinConfig::default())?)?;

    let mut cfg = RunConfig::default();
    cfg.apply_text(
        "mode = selftrain\n\
         strategy = MutHighestProb\n\
         partition_ratio = 0.1\n\
         iterations = 3\n\
         epochs = 30\n",
        std::path::Path::new("inline"),
    )?;
    cfg.set("dataset", data.to_str().expect("utf-8 temp path"))?;
    cfg.set("output_dir", &out)?;
    cfg.validate()?;

    let summary = execute(&cfg)?;
    for r in &summary.outcome.reports {
        println!(
            "iter {}  hit1 {:.3}  pseudo {} (precision {:.3})",
            r.iter, r.hit1, r.pseudo_count, r.pseudo_precision
        );
    }
    println!("artifacts in {}", summary.dir.display());
    Ok(())
}
