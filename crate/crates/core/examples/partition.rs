//! Split the links of a dataset into labelled and test sets.
//!
//! cargo run --example partition -- <dataset_dir> [ratio] [seed] [out_dir]

use std::path::PathBuf;

use stea::kg::{partition_mappings, Dataset};

fn main() -> stea::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().map_or("crates/core/fixtures/dbp_mini", String::as_str));
    let ratio: f64 = args.get(1).map_or(0.3, |a| a.parse().expect("ratio"));
    let seed: u64 = args.get(2).map_or(0, |a| a.parse().expect("seed"));

    let ds = Dataset::load(&dir)?;
    println!(
        "source: {} entities, {} triples",
        ds.pair.source.num_entities(),
        ds.pair.source.triples().len()
    );
    println!(
        "target: {} entities, {} triples",
        ds.pair.target.num_entities(),
        ds.pair.target.triples().len()
    );
    let split = partition_mappings(&ds.links, ratio, seed)?;
    println!("{} links -> {} labelled, {} test", ds.links.len(), split.labelled.len(), split.test.len());
    for (s, t) in split.labelled.iter().take(3) {
        println!("  {} = {}", ds.pair.source.entity_label(s), ds.pair.target.entity_label(t));
    }
    if let Some(out) = args.get(3) {
        split.write(&PathBuf::from(out), &ds.pair)?;
        println!("written to {out}");
    }
    Ok(())
}
