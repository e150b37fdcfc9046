//! Round-trip a similarity matrix through the exchange format and align
//! with it as a fixed model.
//!
//! cargo run --example import_similarity

use stea::kg::{Dataset, Direction};
use stea::metrics::evaluate_similarities;
use stea::model::{read_sim_matrix, write_sim_matrix, EaModel, PrecomputedModel, SimMatrix};
use stea::synth::{twin_pair, TwinConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Dataset { pair, links } = twin_pair(&TwinConfig {
        entities: 100,
        triples: 400,
        ..Default::default()
    })?;
    let (n, m) = (pair.source.num_entities(), pair.target.num_entities());

    // scores from elsewhere: the true counterpart gets 0.9, its two
    // neighbours by id 0.7, everything else 0
    let mut rows = vec![Vec::new(); n];
    for (s, t) in links.iter() {
        rows[s] = vec![(t, 0.9), ((t + 1) % m, 0.7), ((t + m - 1) % m, 0.7)];
    }
    let sim = SimMatrix::top_k(Direction::SourceToTarget, m, rows, 0.0)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("forward.sim");
    write_sim_matrix(&path, &sim, &pair)?;
    let text = std::fs::read_to_string(&path)?;
    println!("{} bytes, first lines:", text.len());
    for line in text.lines().take(4) {
        println!("  {line}");
    }

    let back = read_sim_matrix(&path, &pair)?;
    let model = PrecomputedModel::new(back, None)?;
    let forward = model.similarities(&pair, Direction::SourceToTarget)?;
    let report = evaluate_similarities(&forward, &links)?;
    println!("hit1 = {:.3}  hit10 = {:.3}  mrr = {:.3}", report.hit1, report.hit10, report.mrr);
    Ok(())
}
