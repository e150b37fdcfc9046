//! Turn raw similarities into probabilities by fitting a softmax
//! temperature on the labelled rows.
//!
//! cargo run --release --example calibrate -- [noise]

use stea::kg::{partition_mappings, Direction};
use stea::model::{EaModel, SyntheticOracle};
use stea::normalizer::{fit_normalizer, NormalizerParams};
use stea::selftrain::{calibration_rows, probability_rows};
use stea::synth::{twin_pair, TwinConfig};

fn main() -> stea::Result<()> {
    let noise: f64 = std::env::args().nth(1).map_or(0.3, |a| a.parse().expect("noise rate"));
    let ds = twin_pair(&TwinConfig::default())?;
    let split = partition_mappings(&ds.links, 0.3, 0)?;
    let oracle = SyntheticOracle::new(&ds.pair, &ds.links, noise, 0)?;
    let sim = oracle.similarities(&ds.pair, Direction::SourceToTarget)?;

    let rows = calibration_rows(&sim, &split.labelled);
    let fit = fit_normalizer(&rows, NormalizerParams::default(), 0.05, 200)?;
    let p = fit.params;
    println!("omega0 = {:.4}  omega1 = {:.4}  tau = {:.4}", p.omega0, p.omega1, p.tau());
    println!("loss {:.4} -> {:.4}", fit.losses[0], fit.losses.last().unwrap());

    // mean probability given to the true counterpart of each test entity
    let n = ds.pair.source.num_entities();
    let m = ds.pair.target.num_entities();
    let mut rows_mask = vec![false; n];
    for (s, _) in split.test.iter() {
        rows_mask[s] = true;
    }
    let probs = probability_rows(&sim, &p, &rows_mask, &vec![true; m]);
    let plain = probability_rows(&sim, &NormalizerParams::default(), &rows_mask, &vec![true; m]);
    let truth: std::collections::HashMap<_, _> = split.test.iter().collect();
    let mean = |rows: &[stea::normalizer::ProbRow]| {
        rows.iter().map(|r| r.prob_of(truth[&r.entity])).sum::<f64>() / rows.len() as f64
    };
    println!("mean p(true counterpart): plain softmax {:.4}, calibrated {:.4}", mean(&plain), mean(&probs));
    Ok(())
}
