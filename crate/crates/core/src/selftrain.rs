//! The self-training loop and its supervised baseline.
//!
//! Self-training fits the model on the labelled pairs once, then repeats a
//! fixed number of times: compute similarities in both directions,
//! calibrate them into probabilities, refine those with neighbourhood
//! compatibility, select pseudo mappings, refit on labelled plus pseudo
//! pairs and evaluate. Baseline strategies skip calibration and refinement
//! and select straight from the similarities.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::compat::{build_assignment, coordinate_ascent, estimate_relation_stats, Assignment, QStarRow};
use crate::config::{Mode, RankWith, RunConfig, StatsAssignment};
use crate::error::{Error, Result};
use crate::kg::{Direction, EntityId, KgPair, MappingKind, MappingSet};
use crate::metrics::{evaluate_rows, evaluate_similarities, pseudo_quality, EvalReport, RankedRow};
use crate::model::{EaModel, SimData, SimMatrix};
use crate::normalizer::{fit_normalizer, transform_with_tail, CalibrationRow, NormalizerParams, ProbRow};
use crate::pseudo::{bi_thr, mut_highest_prob, mut_nearest, one_to_one, sim_thr, uni_thr, EntityMask, Strategy};

/// Graphs plus the labelled/test split of their reference alignment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub pair: KgPair,
    pub labelled: MappingSet,
    pub test: MappingSet,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        if self.labelled.is_empty() || self.test.is_empty() {
            return Err(Error::InvalidArgument("labelled and test sets must be non-empty".into()));
        }
        self.labelled.validate(self.pair.as_ref())?;
        self.test.validate(self.pair.as_ref())
    }
}

/// One line of the metrics stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationReport {
    pub iter: usize,
    pub hit1: f64,
    pub hit10: f64,
    pub mrr: f64,
    pub pseudo_count: usize,
    pub pseudo_precision: f64,
    pub pseudo_recall: f64,
    /// Mean training loss of the last epoch of this iteration's fit.
    pub loss: f64,
    pub seconds: f64,
}

/// How often each pipeline stage ran.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CallCounts {
    pub fits: usize,
    pub similarity_calls: usize,
    pub normalizer_fits: usize,
    pub q_star_derivations: usize,
    /// Pseudo selections made from calibrated, refined probabilities.
    pub q_star_selections: usize,
    /// Pseudo selections made from raw similarities.
    pub similarity_selections: usize,
}

/// Per-iteration data beyond the metrics line.
#[derive(Debug)]
pub struct IterationDetail<'a> {
    pub eval: EvalReport,
    /// Calibration fitted for each direction, when the strategy uses it.
    pub omega: Option<[NormalizerParams; 2]>,
    pub pseudo: &'a MappingSet,
    /// Refined rows for each direction, when the strategy uses them.
    pub q_star: Option<[&'a [QStarRow]; 2]>,
    /// Size of the training set passed to this iteration's fit.
    pub train_size: usize,
}

/// Receives every iteration as soon as it completes.
pub trait RunObserver {
    fn iteration(&mut self, report: &IterationReport, detail: &IterationDetail<'_>) -> Result<()>;
}

/// An observer that drops everything.
pub struct NoObserver;

impl RunObserver for NoObserver {
    fn iteration(&mut self, _: &IterationReport, _: &IterationDetail<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub reports: Vec<IterationReport>,
    /// Pseudo mappings of the last iteration.
    pub pseudo: MappingSet,
    pub omegas: Vec<[NormalizerParams; 2]>,
    pub calls: CallCounts,
}

impl RunOutcome {
    pub fn last(&self) -> &IterationReport {
        self.reports.last().expect("runs have at least one iteration")
    }
}

/// Labelled rows of `sim` as calibration examples over the full row.
/// `labelled` is oriented like `sim`. Sparse rows missing their truth are
/// skipped.
pub fn calibration_rows(sim: &SimMatrix, labelled: &MappingSet) -> Vec<CalibrationRow> {
    labelled
        .iter()
        .filter_map(|(s, t)| {
            let (cands, _) = sim.candidates(s, None);
            let truth = cands.iter().position(|&(c, _)| c == t)?;
            Some(CalibrationRow {
                scores: cands.into_iter().map(|(_, v)| v).collect(),
                truth,
            })
        })
        .collect()
}

/// Calibrated rows for every allowed row entity over the allowed columns.
pub fn probability_rows(sim: &SimMatrix, params: &NormalizerParams, rows: &[bool], cols: &[bool]) -> Vec<ProbRow> {
    let fill = match sim.data() {
        SimData::TopK { fill, .. } => *fill,
        SimData::Dense(_) => 0.0,
    };
    (0..sim.n_rows())
        .into_par_iter()
        .filter(|&i| rows[i])
        .filter_map(|i| {
            let (cands, tail) = sim.candidates(i, Some(cols));
            (!cands.is_empty()).then(|| transform_with_tail(i, &cands, tail, fill, params))
        })
        .collect()
}

fn oriented_mask(mask: &EntityMask, direction: Direction) -> (&[bool], &[bool]) {
    match direction {
        Direction::SourceToTarget => (&mask.source, &mask.target),
        Direction::TargetToSource => (&mask.target, &mask.source),
    }
}

fn oriented_labelled(labelled: &MappingSet, direction: Direction) -> MappingSet {
    match direction {
        Direction::SourceToTarget => labelled.clone(),
        Direction::TargetToSource => labelled.flipped(),
    }
}

struct Refined {
    omega: [NormalizerParams; 2],
    rows: [Vec<QStarRow>; 2],
}

fn refine(
    cfg: &RunConfig,
    exp: &Experiment,
    sims: [&SimMatrix; 2],
    mask: &EntityMask,
    calls: &mut CallCounts,
) -> Result<Refined> {
    let mut omega = [NormalizerParams::default(); 2];
    let mut rows: [Vec<QStarRow>; 2] = [Vec::new(), Vec::new()];
    for (k, dir) in [Direction::SourceToTarget, Direction::TargetToSource].into_iter().enumerate() {
        let sim = sims[k];
        let labelled = oriented_labelled(&exp.labelled, dir);
        let fit = fit_normalizer(
            &calibration_rows(sim, &labelled),
            NormalizerParams::default(),
            cfg.normalizer_lr,
            cfg.normalizer_epochs,
        )?;
        calls.normalizer_fits += 1;
        omega[k] = fit.params;
        let (r, c) = oriented_mask(mask, dir);
        let q = probability_rows(sim, &fit.params, r, c);
        let pair = exp.pair.oriented(dir);
        let assignment = match cfg.stats_assignment {
            StatsAssignment::Predicted => build_assignment(pair.source.num_entities(), &labelled, &q),
            StatsAssignment::LabelledOnly => Assignment::from_labelled(pair.source.num_entities(), &labelled),
        };
        let stats = estimate_relation_stats(pair, &assignment);
        rows[k] = coordinate_ascent(pair, &stats, &labelled, &q, cfg.top_k, cfg.cd_sweeps)?;
        calls.q_star_derivations += 1;
    }
    Ok(Refined { omega, rows })
}

fn select_from_q_star(cfg: &RunConfig, refined: &Refined) -> Result<MappingSet> {
    let fwd: Vec<ProbRow> = refined.rows[0].iter().map(|q| q.row.clone()).collect();
    let bwd: Vec<ProbRow> = refined.rows[1].iter().map(|q| q.row.clone()).collect();
    let alpha = || cfg.alpha.ok_or_else(|| Error::Config("missing `alpha`".into()));
    Ok(match cfg.strategy {
        Strategy::UniThr => match cfg.uni_direction {
            Direction::SourceToTarget => uni_thr(&fwd, alpha()?, Direction::SourceToTarget)?,
            Direction::TargetToSource => uni_thr(&bwd, alpha()?, Direction::TargetToSource)?,
        },
        Strategy::BiThr => bi_thr(&fwd, &bwd, alpha()?)?,
        Strategy::MutHighestProb => mut_highest_prob(&fwd, &bwd),
        _ => unreachable!("baseline strategy routed to q* selection"),
    })
}

fn select_from_similarities(
    cfg: &RunConfig,
    sims: [&SimMatrix; 2],
    mask: &EntityMask,
    previous: &MappingSet,
) -> Result<MappingSet> {
    let theta = || cfg.theta.ok_or_else(|| Error::Config("missing `theta`".into()));
    Ok(match cfg.strategy {
        Strategy::SimThr => sim_thr(sims[0], theta()?, mask),
        Strategy::OneToOne => one_to_one(sims[0], theta()?, mask, previous),
        Strategy::MutNearest => mut_nearest(sims[0], sims[1], mask),
        _ => unreachable!("probabilistic strategy routed to similarity selection"),
    })
}

/// Ranking metrics from refined rows: each test source is ranked over its
/// q* candidates; a truth outside the row is a miss.
fn evaluate_q_star(rows: &[QStarRow], test: &MappingSet) -> Result<EvalReport> {
    let by_entity: HashMap<EntityId, &ProbRow> = rows.iter().map(|q| (q.row.entity, &q.row)).collect();
    let empty = ProbRow {
        entity: 0,
        candidates: Vec::new(),
        probs: Vec::new(),
        tail_mass: 0.0,
    };
    let ranked: Vec<RankedRow<'_>> = test
        .iter()
        .map(|(s, t)| {
            let row = by_entity.get(&s).copied().unwrap_or(&empty);
            RankedRow {
                candidates: &row.candidates,
                scores: &row.probs,
                truth: Some(t),
            }
        })
        .collect();
    evaluate_rows(&ranked)
}

fn check_mode(cfg: &RunConfig, mode: Mode) -> Result<()> {
    cfg.validate_values()?;
    if cfg.mode != mode {
        return Err(Error::Config(format!(
            "configuration is for mode `{}`, not `{}`",
            cfg.mode.as_str(),
            mode.as_str()
        )));
    }
    Ok(())
}

fn fit(
    cfg: &RunConfig,
    model: &mut dyn EaModel,
    pair: &KgPair,
    train: &MappingSet,
    calls: &mut CallCounts,
) -> Result<f64> {
    if cfg.cold_restart {
        model.reset();
    }
    calls.fits += 1;
    Ok(model.fit(pair, train, cfg.epochs)?.last_loss())
}

fn similarities(model: &dyn EaModel, pair: &KgPair, dir: Direction, calls: &mut CallCounts) -> Result<SimMatrix> {
    calls.similarity_calls += 1;
    model.similarities(pair, dir)
}

fn seconds(cfg: &RunConfig, start: Instant) -> f64 {
    if cfg.record_timing {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

/// Trains on the labelled pairs only, with the same epoch budget as
/// self-training: one bootstrap fit, then one fit per iteration, each
/// followed by an evaluation.
pub fn run_supervised(
    cfg: &RunConfig,
    exp: &Experiment,
    model: &mut dyn EaModel,
    observer: &mut dyn RunObserver,
) -> Result<RunOutcome> {
    check_mode(cfg, Mode::Supervised)?;
    exp.validate()?;
    let mut calls = CallCounts::default();
    let empty = MappingSet::new(MappingKind::Pseudo);
    fit(cfg, model, &exp.pair, &exp.labelled, &mut calls)?;
    let mut reports = Vec::with_capacity(cfg.iterations);
    for iter in 0..cfg.iterations {
        let start = Instant::now();
        let loss = fit(cfg, model, &exp.pair, &exp.labelled, &mut calls)?;
        let sim = similarities(model, &exp.pair, Direction::SourceToTarget, &mut calls)?;
        let eval = evaluate_similarities(&sim, &exp.test)?;
        let report = IterationReport {
            iter,
            hit1: eval.hit1,
            hit10: eval.hit10,
            mrr: eval.mrr,
            pseudo_count: 0,
            pseudo_precision: 1.0,
            pseudo_recall: 0.0,
            loss,
            seconds: seconds(cfg, start),
        };
        observer.iteration(
            &report,
            &IterationDetail {
                eval,
                omega: None,
                pseudo: &empty,
                q_star: None,
                train_size: exp.labelled.len(),
            },
        )?;
        reports.push(report);
    }
    Ok(RunOutcome {
        reports,
        pseudo: empty,
        omegas: Vec::new(),
        calls,
    })
}

/// The self-training loop. Iterations are numbered from 0.
pub fn run_selftrain(
    cfg: &RunConfig,
    exp: &Experiment,
    model: &mut dyn EaModel,
    observer: &mut dyn RunObserver,
) -> Result<RunOutcome> {
    check_mode(cfg, Mode::Selftrain)?;
    exp.validate()?;
    let mut calls = CallCounts::default();
    let mask = EntityMask::unlabelled(
        exp.pair.source.num_entities(),
        exp.pair.target.num_entities(),
        &exp.labelled,
    );
    fit(cfg, model, &exp.pair, &exp.labelled, &mut calls)?;
    let mut forward = similarities(model, &exp.pair, Direction::SourceToTarget, &mut calls)?;
    let mut pseudo = MappingSet::new(MappingKind::Pseudo);
    let mut reports = Vec::with_capacity(cfg.iterations);
    let mut omegas = Vec::new();
    for iter in 0..cfg.iterations {
        let start = Instant::now();
        let backward = similarities(model, &exp.pair, Direction::TargetToSource, &mut calls)?;
        let sims = [&forward, &backward];
        let refined = if cfg.strategy.uses_q_star() {
            let r = refine(cfg, exp, sims, &mask, &mut calls)?;
            pseudo = select_from_q_star(cfg, &r)?;
            calls.q_star_selections += 1;
            omegas.push(r.omega);
            Some(r)
        } else {
            pseudo = select_from_similarities(cfg, sims, &mask, &pseudo)?;
            calls.similarity_selections += 1;
            None
        };

        let train = exp.labelled.union(&pseudo).with_kind(MappingKind::Labelled);
        let loss = fit(cfg, model, &exp.pair, &train, &mut calls)?;
        forward = similarities(model, &exp.pair, Direction::SourceToTarget, &mut calls)?;
        let eval = match (cfg.rank_with, &refined) {
            (RankWith::QStar, Some(r)) => evaluate_q_star(&r.rows[0], &exp.test)?,
            (RankWith::QStar, None) => {
                return Err(Error::Config(format!(
                    "`rank_with = q_star` needs a probabilistic strategy, not {}",
                    cfg.strategy
                )))
            }
            (RankWith::Similarity, _) => evaluate_similarities(&forward, &exp.test)?,
        };
        let quality = pseudo_quality(&pseudo, &exp.test);
        let report = IterationReport {
            iter,
            hit1: eval.hit1,
            hit10: eval.hit10,
            mrr: eval.mrr,
            pseudo_count: pseudo.len(),
            pseudo_precision: quality.precision,
            pseudo_recall: quality.recall,
            loss,
            seconds: seconds(cfg, start),
        };
        observer.iteration(
            &report,
            &IterationDetail {
                eval,
                omega: refined.as_ref().map(|r| r.omega),
                pseudo: &pseudo,
                q_star: refined.as_ref().map(|r| [r.rows[0].as_slice(), r.rows[1].as_slice()]),
                train_size: train.len(),
            },
        )?;
        reports.push(report);
    }
    Ok(RunOutcome {
        reports,
        pseudo,
        omegas,
        calls,
    })
}

/// Dispatches on the configured mode.
pub fn run(cfg: &RunConfig, exp: &Experiment, model: &mut dyn EaModel, observer: &mut dyn RunObserver) -> Result<RunOutcome> {
    match cfg.mode {
        Mode::Supervised => run_supervised(cfg, exp, model, observer),
        Mode::Selftrain => run_selftrain(cfg, exp, model, observer),
    }
}
