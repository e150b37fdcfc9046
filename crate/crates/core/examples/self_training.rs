//! Supervised training against self-training on synthetic twin graphs.
//!
//! cargo run --release --example self_training -- [seeds] [iterations] [epochs]

use stea::config::{Mode, RunConfig};
use stea::kg::partition_mappings;
use stea::model::EmbeddingAligner;
use stea::pseudo::Strategy;
use stea::selftrain::{run, Experiment, NoObserver};
use stea::synth::{twin_pair, TwinConfig};

fn main() -> stea::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let seeds = args.first().copied().unwrap_or(3);
    let iterations = args.get(1).copied().unwrap_or(5) as usize;
    let epochs = args.get(2).copied().unwrap_or(50) as usize;

    let arms: [(&str, Mode, Strategy, Option<f64>); 3] = [
        ("supervised", Mode::Supervised, Strategy::MutHighestProb, None),
        ("MutHighestProb", Mode::Selftrain, Strategy::MutHighestProb, None),
        ("SimThr", Mode::Selftrain, Strategy::SimThr, Some(0.5)),
    ];
    let mut mean = [0.0; 3];
    for seed in 0..seeds {
        let ds = twin_pair(&TwinConfig { seed, ..Default::default() })?;
        let split = partition_mappings(&ds.links, 0.05, seed)?;
        let exp = Experiment {
            pair: ds.pair,
            labelled: split.labelled,
            test: split.test,
        };
        for (k, (name, mode, strategy, theta)) in arms.iter().enumerate() {
            let cfg = RunConfig {
                mode: *mode,
                strategy: *strategy,
                theta: *theta,
                iterations,
                epochs,
                seed,
                ..Default::default()
            };
            let mut model = EmbeddingAligner::new(cfg.model_params());
            let out = run(&cfg, &exp, &mut model, &mut NoObserver)?;
            let last = out.last();
            mean[k] += last.hit1 / seeds as f64;
            println!(
                "seed {seed} {name:>15}: hit1 {:.3} hit10 {:.3} mrr {:.3} pseudo {} precision {:.3}",
                last.hit1, last.hit10, last.mrr, last.pseudo_count, last.pseudo_precision
            );
        }
    }
    for (k, (name, ..)) in arms.iter().enumerate() {
        println!("mean {name:>15}: hit1 {:.3}", mean[k]);
    }
    Ok(())
}
