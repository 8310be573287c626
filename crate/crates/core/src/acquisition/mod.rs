//! Acquisition functions and batch selection.
//!
//! All scores are computed on the proximal objective: the posterior mean is
//! shifted by `-lambda * d(s, s0)`, the posterior spread is left alone.

mod fantasy;

use std::collections::HashSet;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::ProximalObjective;
use crate::sequence::Sequence;
use crate::surrogate::{Dataset, Ensemble};

pub use fantasy::{
    BayesianLinear, BayesianLinearState, EnsembleFantasy, EnsembleFantasyState, FantasyModel,
    FantasyState,
};

/// Gaussian summary of the surrogate at one sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub std: f64,
}

impl Posterior {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() || std < 0.0 {
            return Err(Error::input(format!(
                "invalid posterior (mean {mean}, std {std})"
            )));
        }
        Ok(Posterior { mean, std })
    }

    pub fn from_mean_var(mean: f64, var: f64) -> Result<Self> {
        if !(var >= 0.0) {
            return Err(Error::input(format!("invalid posterior variance {var}")));
        }
        Posterior::new(mean, var.sqrt())
    }

    /// Same spread, mean moved by `delta`.
    pub fn shifted(self, delta: f64) -> Self {
        Posterior {
            mean: self.mean + delta,
            std: self.std,
        }
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn ucb(p: &Posterior, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::input(format!(
            "beta must be non-negative, got {beta}"
        )));
    }
    Ok(p.mean + beta * p.std)
}

/// Closed-form expected improvement over `best`.
pub fn ei(p: &Posterior, best: f64) -> Result<f64> {
    if !p.mean.is_finite() || !p.std.is_finite() || p.std < 0.0 || !best.is_finite() {
        return Err(Error::input("expected improvement needs finite inputs"));
    }
    let gap = p.mean - best;
    if p.std == 0.0 {
        return Ok(gap.max(0.0));
    }
    let z = gap / p.std;
    Ok((gap * normal_cdf(z) + p.std * normal_pdf(z)).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KgConfig {
    pub n_fantasies: usize,
    pub inner_pool_size: usize,
    /// Curvature-preconditioned gradient steps of the fantasy head update.
    pub update_steps: usize,
    /// Step size of those steps; they contract for `0 < lr < 2`.
    pub update_lr: f64,
    /// Candidates (pre-ranked by UCB) evaluated per greedy slot.
    pub candidates: usize,
}

impl Default for KgConfig {
    fn default() -> Self {
        KgConfig {
            n_fantasies: 16,
            inner_pool_size: 256,
            update_steps: 20,
            update_lr: 1.0,
            candidates: 64,
        }
    }
}

impl KgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fantasies == 0
            || self.inner_pool_size == 0
            || self.update_steps == 0
            || self.candidates == 0
        {
            return Err(Error::input("knowledge-gradient sizes must be positive"));
        }
        if !(self.update_lr > 0.0 && self.update_lr < 2.0) {
            return Err(Error::input(format!(
                "knowledge-gradient update_lr must lie in (0, 2), got {}",
                self.update_lr
            )));
        }
        Ok(())
    }

    pub fn ensemble_model<'a>(&self, ensemble: &'a Ensemble) -> EnsembleFantasy<'a> {
        EnsembleFantasy {
            ensemble,
            steps: self.update_steps,
            lr: self.update_lr,
        }
    }
}

/// KG of `batch` over `pool` (indices into the prepared points), with the
/// fantasy draws `normals` (row-major `[n_fantasies, width]`, column `k`
/// driving `batch[k]`).
fn kg_value<S: FantasyState>(
    state: &S,
    batch: &[usize],
    pool: &[usize],
    shift: &[f64],
    normals: &[f64],
    width: usize,
) -> Result<f64> {
    let b = batch.len();
    let posts: Vec<Posterior> = batch.iter().map(|&i| state.posterior(i)).collect();
    let outcomes: Vec<f64> = normals
        .chunks(width)
        .flat_map(|z| posts.iter().zip(z).map(|(p, zk)| p.mean + p.std * zk))
        .collect();
    debug_assert_eq!(outcomes.len() % b, 0);
    let maxima = state.fantasy_maxima(batch, &outcomes, pool, shift)?;
    let incumbent = pool
        .iter()
        .zip(shift)
        .map(|(&i, &sh)| state.posterior(i).mean + sh)
        .fold(f64::NEG_INFINITY, f64::max);
    let expected = maxima.iter().sum::<f64>() / maxima.len() as f64;
    let kg = expected - incumbent;
    if !kg.is_finite() {
        return Err(Error::Numeric(format!(
            "knowledge gradient evaluated to {kg}"
        )));
    }
    Ok(kg)
}

/// Row-major `[rows, width]` standard normals in antithetic pairs: row
/// `2i + 1` negates row `2i`. Paired fantasies make every KG estimate
/// non-negative, since the mean of `max(a + d)` and `max(a - d)` is at least
/// `max(a)`.
fn draw_normals<R: Rng + ?Sized>(rng: &mut R, rows: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        if r % 2 == 1 {
            let prev = out.len() - width;
            for k in 0..width {
                let z: f64 = out[prev + k];
                out.push(-z);
            }
        } else {
            out.extend((0..width).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
    }
    out
}

/// One-shot knowledge gradient of observing `batch`, for any fantasy model.
pub fn kg_oneshot_with<M: FantasyModel, R: Rng + ?Sized>(
    model: &M,
    batch: &[Sequence],
    inner_pool: &[Sequence],
    data: &Dataset,
    n_fantasies: usize,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() || inner_pool.is_empty() {
        return Err(Error::input(
            "knowledge gradient needs a batch and an inner pool",
        ));
    }
    if n_fantasies == 0 {
        return Err(Error::input(
            "knowledge gradient needs at least one fantasy",
        ));
    }
    let points: Vec<Sequence> = batch.iter().chain(inner_pool).cloned().collect();
    let state = model.prepare(data, &points)?;
    let b = batch.len();
    let batch_idx: Vec<usize> = (0..b).collect();
    let pool_idx: Vec<usize> = (b..points.len()).collect();
    let shift = vec![0.0; pool_idx.len()];
    let normals = draw_normals(rng, n_fantasies, b);
    kg_value(&state, &batch_idx, &pool_idx, &shift, &normals, b)
}

/// One-shot knowledge gradient with the ensemble's warm-started fantasy
/// update.
pub fn kg_oneshot<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    batch: &[Sequence],
    inner_pool: &[Sequence],
    data: &Dataset,
    cfg: &KgConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    kg_oneshot_with(
        &cfg.ensemble_model(ensemble),
        batch,
        inner_pool,
        data,
        cfg.n_fantasies,
        rng,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    Ucb,
    Ei,
    Kg,
}

impl AcquisitionKind {
    pub fn name(self) -> &'static str {
        match self {
            AcquisitionKind::Ucb => "ucb",
            AcquisitionKind::Ei => "ei",
            AcquisitionKind::Kg => "kg",
        }
    }
}

impl std::str::FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ucb" => Ok(AcquisitionKind::Ucb),
            "ei" => Ok(AcquisitionKind::Ei),
            "kg" => Ok(AcquisitionKind::Kg),
            other => Err(Error::input(format!("unknown acquisition {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub kind: AcquisitionKind,
    pub beta: f64,
    pub kg: KgConfig,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            kind: AcquisitionKind::Kg,
            beta: 2.0,
            kg: KgConfig::default(),
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::input(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        self.kg.validate()
    }
}

/// Chosen batch, in selection order, with the acquisition value each
/// element had when it was picked.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub batch: Vec<Sequence>,
    pub scores: Vec<f64>,
}

/// Sort key: higher score first, then closer to the wild type, then
/// lexicographic residue order.
fn rank_order(scores: &[f64], dist: &[usize], seqs: &[Sequence]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(dist[a].cmp(&dist[b]))
            .then_with(|| seqs[a].cmp(&seqs[b]))
    });
    idx
}

fn check_pool(pool: &[Sequence], data: &Dataset, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::input("batch size must be positive"));
    }
    if pool.len() < m {
        return Err(Error::input(format!(
            "pool of {} cannot fill a batch of {m}",
            pool.len()
        )));
    }
    let mut seen = HashSet::with_capacity(pool.len());
    for s in pool {
        if data.contains(s) {
            return Err(Error::input(format!(
                "pool contains measured sequence {s:?}"
            )));
        }
        if !seen.insert(s) {
            return Err(Error::input(format!("pool contains {s:?} twice")));
        }
    }
    Ok(())
}

/// Picks `m` distinct pool sequences with the ensemble as surrogate.
pub fn select_batch<R: Rng + ?Sized>(
    cfg: &AcquisitionConfig,
    ensemble: &Ensemble,
    pool: &[Sequence],
    data: &Dataset,
    m: usize,
    objective: &ProximalObjective,
    rng: &mut R,
) -> Result<Selection> {
    select_batch_with(
        &cfg.kg.ensemble_model(ensemble),
        cfg,
        pool,
        data,
        m,
        objective,
        rng,
    )
}

/// Picks `m` distinct pool sequences; `model` supplies posteriors and, for
/// KG, fantasy updates.
pub fn select_batch_with<M: FantasyModel, R: Rng + ?Sized>(
    model: &M,
    cfg: &AcquisitionConfig,
    pool: &[Sequence],
    data: &Dataset,
    m: usize,
    objective: &ProximalObjective,
    rng: &mut R,
) -> Result<Selection> {
    cfg.validate()?;
    check_pool(pool, data, m)?;
    let dist: Vec<usize> = pool
        .iter()
        .map(|s| objective.distance(s))
        .collect::<Result<_>>()?;
    let posts: Vec<Posterior> = model
        .posteriors(data, pool)?
        .into_iter()
        .zip(&dist)
        .map(|(p, &d)| p.shifted(-objective.penalty(d)))
        .collect();

    let take_top = |scores: Vec<f64>| {
        let order = rank_order(&scores, &dist, pool);
        Selection {
            batch: order[..m].iter().map(|&i| pool[i].clone()).collect(),
            scores: order[..m].iter().map(|&i| scores[i]).collect(),
        }
    };
    match cfg.kind {
        AcquisitionKind::Ucb => {
            let scores = posts
                .iter()
                .map(|p| ucb(p, cfg.beta))
                .collect::<Result<_>>()?;
            Ok(take_top(scores))
        }
        AcquisitionKind::Ei => {
            let best = data
                .pairs()
                .iter()
                .map(|(s, y)| Ok(objective.score(*y, objective.distance(s)?)))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            if !best.is_finite() {
                return Err(Error::input(
                    "expected improvement needs a measured incumbent",
                ));
            }
            let scores = posts.iter().map(|p| ei(p, best)).collect::<Result<_>>()?;
            Ok(take_top(scores))
        }
        AcquisitionKind::Kg => greedy_kg(model, cfg, pool, &posts, &dist, data, m, objective, rng),
    }
}

#[allow(clippy::too_many_arguments)]
fn greedy_kg<M: FantasyModel, R: Rng + ?Sized>(
    model: &M,
    cfg: &AcquisitionConfig,
    pool: &[Sequence],
    posts: &[Posterior],
    dist: &[usize],
    data: &Dataset,
    m: usize,
    objective: &ProximalObjective,
    rng: &mut R,
) -> Result<Selection> {
    let kg = &cfg.kg;
    let ucb_scores: Vec<f64> = posts.iter().map(|p| p.mean + cfg.beta * p.std).collect();
    let n_cand = kg.candidates.max(m).min(pool.len());
    let candidates: Vec<usize> = rank_order(&ucb_scores, dist, pool)[..n_cand].to_vec();

    // Inner pool: the best current regularized means over pool and measured
    // sequences, plus every candidate.
    let measured: Vec<Sequence> = data.sequences().cloned().collect();
    let measured_dist: Vec<usize> = measured
        .iter()
        .map(|s| objective.distance(s))
        .collect::<Result<_>>()?;
    let measured_means: Vec<f64> = model
        .posteriors(data, &measured)?
        .iter()
        .zip(&measured_dist)
        .map(|(p, &d)| p.mean - objective.penalty(d))
        .collect();
    let all_seqs: Vec<&Sequence> = pool.iter().chain(&measured).collect();
    let all_means: Vec<f64> = posts.iter().map(|p| p.mean).chain(measured_means).collect();
    let all_dist: Vec<usize> = dist.iter().chain(&measured_dist).copied().collect();
    let mut by_mean: Vec<usize> = (0..all_seqs.len()).collect();
    by_mean.sort_by(|&a, &b| {
        all_means[b]
            .total_cmp(&all_means[a])
            .then(all_dist[a].cmp(&all_dist[b]))
            .then_with(|| all_seqs[a].cmp(all_seqs[b]))
    });
    let mut chosen_points: Vec<usize> = candidates.clone();
    let mut in_points: HashSet<usize> = candidates.iter().copied().collect();
    for &i in by_mean.iter().take(kg.inner_pool_size) {
        if in_points.insert(i) {
            chosen_points.push(i);
        }
    }
    let points: Vec<Sequence> = chosen_points.iter().map(|&i| all_seqs[i].clone()).collect();
    let shift: Vec<f64> = chosen_points
        .iter()
        .map(|&i| -objective.penalty(all_dist[i]))
        .collect();
    let state = model.prepare(data, &points)?;
    // Candidates occupy the first n_cand prepared points.
    let inner: Vec<usize> = (0..points.len()).collect();
    let normals = draw_normals(rng, kg.n_fantasies, m);

    let mut batch: Vec<usize> = Vec::with_capacity(m);
    let mut scores = Vec::with_capacity(m);
    let mut open: Vec<usize> = (0..n_cand).collect();
    for _ in 0..m {
        let values: Vec<Result<f64>> = open
            .par_iter()
            .map(|&c| {
                let mut trial = batch.clone();
                trial.push(c);
                kg_value(&state, &trial, &inner, &shift, &normals, m)
            })
            .collect();
        let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
        let mut best = 0;
        for k in 1..open.len() {
            let (a, b) = (candidates[open[k]], candidates[open[best]]);
            let better = values[k]
                .total_cmp(&values[best])
                .then(dist[b].cmp(&dist[a]))
                .then_with(|| pool[b].cmp(&pool[a]));
            if better.is_gt() {
                best = k;
            }
        }
        batch.push(open.remove(best));
        scores.push(values[best]);
    }
    Ok(Selection {
        batch: batch.iter().map(|&k| pool[candidates[k]].clone()).collect(),
        scores,
    })
}
