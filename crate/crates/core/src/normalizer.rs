//! Similarity-to-probability calibration.
//!
//! A row of similarities is mapped through `f = ω₁·sim + ω₀` and a softmax
//! with temperature `τ`. The three parameters are fitted by gradient
//! descent on the cross-entropy of the labelled entities' true
//! counterparts. `τ` is optimized as `log τ`, so it stays positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::EntityId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizerParams {
    pub omega0: f64,
    pub omega1: f64,
    pub log_tau: f64,
}

impl Default for NormalizerParams {
    /// `ω₁ = 1, ω₀ = 0, τ = 1`: a plain softmax of the similarities.
    fn default() -> Self {
        Self {
            omega0: 0.0,
            omega1: 1.0,
            log_tau: 0.0,
        }
    }
}

impl NormalizerParams {
    pub fn new(omega0: f64, omega1: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() || !omega0.is_finite() || !omega1.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "normalizer parameters must be finite with tau > 0 (got ω0={omega0}, ω1={omega1}, τ={tau})"
            )));
        }
        Ok(Self {
            omega0,
            omega1,
            log_tau: tau.ln(),
        })
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    fn logit(&self, sim: f64) -> f64 {
        (self.omega1 * sim + self.omega0) / self.tau()
    }
}

/// A distribution over counterpart candidates of one entity.
///
/// `tail_mass` is the probability held by candidates that are not listed
/// (zero for full rows); listed probabilities plus the tail sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbRow {
    pub entity: EntityId,
    pub candidates: Vec<EntityId>,
    pub probs: Vec<f64>,
    pub tail_mass: f64,
}

impl ProbRow {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_mass
    }

    pub fn prob_of(&self, candidate: EntityId) -> f64 {
        self.candidates
            .iter()
            .position(|&c| c == candidate)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Most probable candidate. Ties go to the candidate listed first, which
    /// for rows built in id order is the lowest id.
    pub fn argmax(&self) -> Option<(EntityId, f64)> {
        let mut best: Option<(EntityId, f64)> = None;
        for (&c, &p) in self.candidates.iter().zip(&self.probs) {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((c, p));
            }
        }
        best
    }

    /// The `k` most probable candidates, most probable first; ties keep
    /// listing order.
    pub fn top_k(&self, k: usize) -> Vec<(EntityId, f64)> {
        let mut idx: Vec<usize> = (0..self.candidates.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx.into_iter()
            .take(k)
            .map(|i| (self.candidates[i], self.probs[i]))
            .collect()
    }

    /// Builds a row by normalizing arbitrary nonnegative weights.
    pub fn from_weights(entity: EntityId, candidates: Vec<EntityId>, weights: &[f64]) -> ProbRow {
        let z: f64 = weights.iter().sum();
        let probs = if z > 0.0 {
            weights.iter().map(|w| w / z).collect()
        } else {
            vec![1.0 / weights.len() as f64; weights.len()]
        };
        ProbRow {
            entity,
            candidates,
            probs,
            tail_mass: 0.0,
        }
    }
}

/// Softmax with max subtraction; returns the probabilities.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Calibrates one full row of `(candidate, similarity)` pairs.
pub fn transform(entity: EntityId, row: &[(EntityId, f64)], params: &NormalizerParams) -> ProbRow {
    let logits: Vec<f64> = row.iter().map(|&(_, s)| params.logit(s)).collect();
    ProbRow {
        entity,
        candidates: row.iter().map(|&(c, _)| c).collect(),
        probs: softmax(&logits),
        tail_mass: 0.0,
    }
}

/// Calibrates a truncated row: `tail` further candidates, not listed, all
/// score `fill`. Their combined probability becomes the row's tail mass.
pub fn transform_with_tail(
    entity: EntityId,
    row: &[(EntityId, f64)],
    tail: usize,
    fill: f64,
    params: &NormalizerParams,
) -> ProbRow {
    if tail == 0 {
        return transform(entity, row, params);
    }
    let logits: Vec<f64> = row.iter().map(|&(_, s)| params.logit(s)).collect();
    let tail_logit = params.logit(fill);
    let m = logits.iter().copied().fold(tail_logit, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let tail_w = tail as f64 * (tail_logit - m).exp();
    let total = exps.iter().sum::<f64>() + tail_w;
    ProbRow {
        entity,
        candidates: row.iter().map(|&(c, _)| c).collect(),
        probs: exps.into_iter().map(|e| e / total).collect(),
        tail_mass: tail_w / total,
    }
}

/// One labelled example: its similarity row and the position of the true
/// counterpart in it.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationRow {
    pub scores: Vec<f64>,
    pub truth: usize,
}

/// Gradient with respect to `(ω₀, ω₁, log τ)`.
pub type Gradient = [f64; 3];

/// Mean cross-entropy over `rows` and its gradient.
pub fn loss_and_grad(rows: &[CalibrationRow], params: &NormalizerParams) -> (f64, Gradient) {
    let tau = params.tau();
    let mut loss = 0.0;
    let mut g = [0.0; 3];
    for row in rows {
        let z: Vec<f64> = row.scores.iter().map(|&s| params.logit(s)).collect();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - z[row.truth];
        for (j, (&zj, &sj)) in z.iter().zip(&row.scores).enumerate() {
            let resid = (zj - lse).exp() - if j == row.truth { 1.0 } else { 0.0 };
            g[0] += resid / tau;
            g[1] += resid * sj / tau;
            g[2] -= resid * zj;
        }
    }
    let n = rows.len().max(1) as f64;
    (loss / n, g.map(|x| x / n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizerFit {
    pub params: NormalizerParams,
    /// Loss before the first step followed by the loss after every step.
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent on the mean cross-entropy.
///
/// The returned parameters are those with the lowest loss seen, so the
/// final loss never exceeds the initial one.
pub fn fit_normalizer(
    rows: &[CalibrationRow],
    init: NormalizerParams,
    learning_rate: f64,
    epochs: usize,
) -> Result<NormalizerFit> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no labelled rows to calibrate on".into()));
    }
    for r in rows {
        if r.truth >= r.scores.len() {
            return Err(Error::InvalidArgument(
                "true counterpart missing from its candidate row".into(),
            ));
        }
    }
    let mut params = init;
    let (mut loss, mut grad) = loss_and_grad(rows, &params);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    let mut losses = vec![loss];
    let mut best = (loss, params);
    for epoch in 1..=epochs {
        params.omega0 -= learning_rate * grad[0];
        params.omega1 -= learning_rate * grad[1];
        params.log_tau -= learning_rate * grad[2];
        (loss, grad) = loss_and_grad(rows, &params);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        losses.push(loss);
        if loss < best.0 {
            best = (loss, params);
        }
    }
    Ok(NormalizerFit {
        params: best.1,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize, scores: &[f64]) -> Vec<(EntityId, f64)> {
        (0..n).zip(scores.iter().copied()).collect()
    }

    #[test]
    fn hand_evaluated_softmax() {
        let p = transform(0, &ids(3, &[2.0, 1.0, 0.0]), &NormalizerParams::default());
        for (a, b) in p.probs.iter().zip([0.66524, 0.24473, 0.09003]) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn equal_scores_are_uniform_and_shift_invariant() {
        let p = transform(0, &ids(4, &[0.3; 4]), &NormalizerParams::default());
        assert!(p.probs.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let row = ids(3, &[0.9, -0.2, 0.4]);
        let a = transform(0, &row, &NormalizerParams::new(0.0, 2.0, 0.5).unwrap());
        let b = transform(0, &row, &NormalizerParams::new(17.0, 2.0, 0.5).unwrap());
        for (x, y) in a.probs.iter().zip(&b.probs) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_mass_completes_the_distribution() {
        let params = NormalizerParams::new(0.1, 3.0, 0.7).unwrap();
        let p = transform_with_tail(0, &ids(2, &[0.9, 0.5]), 5, 0.2, &params);
        assert!((p.total() - 1.0).abs() < 1e-12);
        let full = transform(0, &ids(7, &[0.9, 0.5, 0.2, 0.2, 0.2, 0.2, 0.2]), &params);
        assert!((p.probs[0] - full.probs[0]).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_return_init() {
        let rows = vec![CalibrationRow { scores: vec![1.0, 0.0], truth: 0 }];
        let init = NormalizerParams::new(0.2, 1.5, 2.0).unwrap();
        let fit = fit_normalizer(&rows, init, 0.05, 0).unwrap();
        assert_eq!(fit.params, init);
        assert_eq!(fit.losses.len(), 1);
    }

    #[test]
    fn two_candidate_fit_sharpens() {
        let rows = vec![CalibrationRow { scores: vec![1.0, 0.0], truth: 0 }];
        let init = NormalizerParams::default();
        let fit = fit_normalizer(&rows, init, 0.05, 100).unwrap();
        assert!(fit.losses[100] < fit.losses[0]);
        assert!(fit.params.omega1 / fit.params.tau() > init.omega1 / init.tau());
    }

    #[test]
    fn idealized_rows_rank_truth_first() {
        let n = 12;
        let rows: Vec<CalibrationRow> = (0..n)
            .map(|i| CalibrationRow {
                scores: (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect(),
                truth: i,
            })
            .collect();
        let fit = fit_normalizer(&rows, NormalizerParams::default(), 0.05, 200).unwrap();
        assert!(fit.losses[..=10].windows(2).all(|w| w[1] < w[0]));
        for (i, r) in rows.iter().enumerate() {
            let p = transform(i, &ids(n, &r.scores), &fit.params);
            assert_eq!(p.argmax().unwrap().0, i);
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(NormalizerParams::new(0.0, 1.0, 0.0).is_err());
        assert!(fit_normalizer(&[], NormalizerParams::default(), 0.1, 3).is_err());
        let rows = vec![CalibrationRow { scores: vec![1.0], truth: 3 }];
        assert!(fit_normalizer(&rows, NormalizerParams::default(), 0.1, 3).is_err());
        let rows = vec![CalibrationRow { scores: vec![1.0, 0.0], truth: 0 }];
        let blowup = NormalizerParams { omega0: 0.0, omega1: 1.0, log_tau: -800.0 };
        assert!(matches!(
            fit_normalizer(&rows, blowup, 0.1, 3),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn argmax_and_top_k_break_ties_by_listing_order() {
        let row = ProbRow::from_weights(0, vec![5, 2, 9], &[1.0, 2.0, 2.0]);
        assert_eq!(row.argmax().unwrap().0, 2);
        assert_eq!(row.top_k(2).iter().map(|p| p.0).collect::<Vec<_>>(), vec![2, 9]);
    }
}
