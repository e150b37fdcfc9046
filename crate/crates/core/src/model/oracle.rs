use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_fit_args, EaModel, FitReport, SimMatrix};
use crate::error::{Error, Result};
use crate::kg::{Direction, KgPair, MappingSet};

/// A fixed, noisy similarity source built from the true alignment.
///
/// A `1 - noise_rate` share of the aligned source entities get their row
/// maximum (score in `[0.8, 1.0]`) on the true counterpart; the remaining
/// rows put the maximum on a random wrong candidate. All other scores are
/// drawn from `[0, 0.5]`. Training is a no-op.
#[derive(Clone, Debug)]
pub struct SyntheticOracle {
    forward: SimMatrix,
    noised_rows: usize,
}

impl SyntheticOracle {
    pub fn new(pair: &KgPair, truth: &MappingSet, noise_rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&noise_rate) {
            return Err(Error::InvalidArgument(format!(
                "noise rate must lie in [0, 1], got {noise_rate}"
            )));
        }
        truth.validate(pair.as_ref())?;
        let n_rows = pair.source.num_entities();
        let n_cols = pair.target.num_entities();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data: Vec<f64> = (0..n_rows * n_cols).map(|_| rng.gen_range(0.0..=0.5)).collect();

        // one counterpart per source; the lowest target id if truth is not 1:1
        let mut counterpart = vec![None; n_rows];
        for (s, t) in truth.iter() {
            counterpart[s].get_or_insert(t);
        }
        let mut aligned: Vec<usize> = (0..n_rows).filter(|&s| counterpart[s].is_some()).collect();
        aligned.shuffle(&mut rng);
        let noised = (noise_rate * aligned.len() as f64).round() as usize;
        if noised > 0 && n_cols < 2 {
            return Err(Error::InvalidArgument(
                "noise needs at least two target entities".into(),
            ));
        }
        for (k, &s) in aligned.iter().enumerate() {
            let truth_col = counterpart[s].expect("aligned row");
            let col = if k < noised {
                let mut c = rng.gen_range(0..n_cols - 1);
                if c >= truth_col {
                    c += 1;
                }
                c
            } else {
                truth_col
            };
            data[s * n_cols + col] = rng.gen_range(0.8..=1.0);
        }
        Ok(Self {
            forward: SimMatrix::dense(Direction::SourceToTarget, n_rows, n_cols, data)?,
            noised_rows: noised,
        })
    }

    /// Number of aligned rows whose maximum was moved off the truth.
    pub fn noised_rows(&self) -> usize {
        self.noised_rows
    }
}

impl EaModel for SyntheticOracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn fit(&mut self, pair: &KgPair, train: &MappingSet, epochs: usize) -> Result<FitReport> {
        check_fit_args(train, epochs)?;
        train.validate(pair.as_ref())?;
        Ok(FitReport::default())
    }

    fn similarities(&self, pair: &KgPair, direction: Direction) -> Result<SimMatrix> {
        if self.forward.n_rows() != pair.source.num_entities()
            || self.forward.n_cols() != pair.target.num_entities()
        {
            return Err(Error::InvalidArgument(
                "graph pair does not match the oracle".into(),
            ));
        }
        Ok(match direction {
            Direction::SourceToTarget => self.forward.clone(),
            Direction::TargetToSource => self.forward.transpose(),
        })
    }
}
