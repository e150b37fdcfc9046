//! Alignment models and the similarity matrices they produce.
//!
//! Anything that can score source entities against target entities plugs
//! into the self-training loop through [`EaModel`]. Three implementations
//! ship here: a trainable translation-embedding aligner, a noisy oracle for
//! exercising the framework in isolation, and a wrapper around similarity
//! matrices computed elsewhere.

mod embedding;
mod exchange;
mod oracle;

pub use embedding::{margin_loss, margin_loss_grad, EmbeddingAligner, EmbeddingAlignerParams, MarginGrad};
pub use exchange::{read_sim_matrix, write_sim_matrix, PrecomputedModel};
pub use oracle::SyntheticOracle;

use crate::error::{Error, Result};
use crate::kg::{Direction, EntityId, KgPair, MappingSet};

/// Loss trace of one call to [`EaModel::fit`], one mean loss per epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitReport {
    pub losses: Vec<f64>,
}

impl FitReport {
    pub fn last_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(0.0)
    }
}

pub trait EaModel: Send {
    fn name(&self) -> &str;

    /// Updates the parameters on `train` for `epochs` epochs, starting from
    /// the current parameters.
    fn fit(&mut self, pair: &KgPair, train: &MappingSet, epochs: usize) -> Result<FitReport>;

    /// Similarity of every entity of the direction's source graph to every
    /// entity of its target graph. Must not mutate the model.
    fn similarities(&self, pair: &KgPair, direction: Direction) -> Result<SimMatrix>;

    /// Discards learned parameters so the next `fit` starts cold.
    fn reset(&mut self) {}
}

pub(crate) fn check_fit_args(train: &MappingSet, epochs: usize) -> Result<()> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("training mapping set is empty".into()));
    }
    if epochs == 0 {
        return Err(Error::InvalidArgument("epoch budget must be at least 1".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimData {
    /// Row-major `rows × cols` scores.
    Dense(Vec<f64>),
    /// Per row, the listed candidates sorted by descending score; every
    /// unlisted candidate scores `fill`.
    TopK {
        rows: Vec<Vec<(EntityId, f64)>>,
        fill: f64,
    },
}

/// Scores `Sim(e, e')` for one alignment direction.
#[derive(Clone, Debug, PartialEq)]
pub struct SimMatrix {
    direction: Direction,
    n_rows: usize,
    n_cols: usize,
    data: SimData,
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("non-finite {what}: {v}")))
    }
}

impl SimMatrix {
    pub fn dense(direction: Direction, n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::InvalidArgument(format!(
                "dense matrix {n_rows}x{n_cols} needs {} scores, got {}",
                n_rows * n_cols,
                data.len()
            )));
        }
        for &v in &data {
            check_finite(v, "similarity")?;
        }
        Ok(Self {
            direction,
            n_rows,
            n_cols,
            data: SimData::Dense(data),
        })
    }

    /// Sparse rows; each row is sorted here (descending score, ties by id).
    pub fn top_k(
        direction: Direction,
        n_cols: usize,
        mut rows: Vec<Vec<(EntityId, f64)>>,
        fill: f64,
    ) -> Result<Self> {
        check_finite(fill, "fill value")?;
        for row in &mut rows {
            for &(c, v) in row.iter() {
                check_finite(v, "similarity")?;
                if c >= n_cols {
                    return Err(Error::InvalidArgument(format!(
                        "candidate {c} out of range for {n_cols} columns"
                    )));
                }
            }
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut ids: Vec<_> = row.iter().map(|p| p.0).collect();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument("duplicate candidate in sparse row".into()));
            }
        }
        Ok(Self {
            direction,
            n_rows: rows.len(),
            n_cols,
            data: SimData::TopK { rows, fill },
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn data(&self) -> &SimData {
        &self.data
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.data, SimData::Dense(_))
    }

    pub fn score(&self, row: EntityId, col: EntityId) -> f64 {
        match &self.data {
            SimData::Dense(d) => d[row * self.n_cols + col],
            SimData::TopK { rows, fill } => rows[row]
                .iter()
                .find(|&&(c, _)| c == col)
                .map_or(*fill, |&(_, v)| v),
        }
    }

    /// Full row, expanding sparse rows with the fill value.
    pub fn row(&self, row: EntityId) -> Vec<f64> {
        match &self.data {
            SimData::Dense(d) => d[row * self.n_cols..(row + 1) * self.n_cols].to_vec(),
            SimData::TopK { rows, fill } => {
                let mut out = vec![*fill; self.n_cols];
                for &(c, v) in &rows[row] {
                    out[c] = v;
                }
                out
            }
        }
    }

    /// Candidates of `row` restricted to `allowed` columns, as
    /// `(column, score)` in column order. Sparse rows yield only their
    /// listed candidates; the returned count of unlisted allowed columns
    /// all share the fill score.
    pub fn candidates(&self, row: EntityId, allowed: Option<&[bool]>) -> (Vec<(EntityId, f64)>, usize) {
        let ok = |c: EntityId| allowed.is_none_or(|a| a[c]);
        match &self.data {
            SimData::Dense(d) => {
                let r = &d[row * self.n_cols..(row + 1) * self.n_cols];
                let out = r.iter().enumerate().filter(|&(c, _)| ok(c)).map(|(c, &v)| (c, v)).collect();
                (out, 0)
            }
            SimData::TopK { rows, .. } => {
                let mut out: Vec<(EntityId, f64)> = rows[row].iter().copied().filter(|&(c, _)| ok(c)).collect();
                out.sort_by_key(|p| p.0);
                let total_allowed = match allowed {
                    Some(a) => a.iter().filter(|&&b| b).count(),
                    None => self.n_cols,
                };
                let tail = total_allowed - out.len();
                (out, tail)
            }
        }
    }

    /// Highest-scoring allowed column; ties go to the lowest column id.
    pub fn argmax(&self, row: EntityId, allowed: Option<&[bool]>) -> Option<(EntityId, f64)> {
        let (cands, _) = self.candidates(row, allowed);
        argmax_pairs(&cands)
    }

    /// The matrix of the opposite direction. Sparse matrices are expanded
    /// first.
    pub fn transpose(&self) -> SimMatrix {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            let r = self.row(i);
            for (j, v) in r.into_iter().enumerate() {
                out[j * self.n_rows + i] = v;
            }
        }
        SimMatrix {
            direction: self.direction.reverse(),
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            data: SimData::Dense(out),
        }
    }

    /// Keeps the `k` best candidates per row; the fill value is the
    /// largest discarded score (or the smallest kept one if nothing was
    /// discarded).
    pub fn truncate(&self, k: usize) -> SimMatrix {
        let mut rows = Vec::with_capacity(self.n_rows);
        let mut fill = f64::NEG_INFINITY;
        let mut min_kept = f64::INFINITY;
        for i in 0..self.n_rows {
            let mut r: Vec<(EntityId, f64)> = self.row(i).into_iter().enumerate().collect();
            r.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            if let Some(&(_, v)) = r.get(k) {
                fill = fill.max(v);
            }
            r.truncate(k);
            if let Some(&(_, v)) = r.last() {
                min_kept = min_kept.min(v);
            }
            rows.push(r);
        }
        if !fill.is_finite() {
            fill = if min_kept.is_finite() { min_kept } else { 0.0 };
        }
        SimMatrix {
            direction: self.direction,
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: SimData::TopK { rows, fill },
        }
    }
}

pub(crate) fn argmax_pairs(cands: &[(EntityId, f64)]) -> Option<(EntityId, f64)> {
    let mut best: Option<(EntityId, f64)> = None;
    for &(c, v) in cands {
        best = match best {
            None => Some((c, v)),
            Some((bc, bv)) if v > bv || (v == bv && c < bc) => Some((c, v)),
            keep => keep,
        };
    }
    best
}
