//! Evolution strategies with antithetic sampling, centered-rank shaping and
//! multiplicative weight decay.
//!
//! Every generation `g` draws its minibatch from stream `(g << 32)` and
//! particle `i` draws its perturbation from stream `(g << 32) | (i + 1)` of a
//! ChaCha generator keyed by the master seed, so results do not depend on the
//! number of worker threads.

use std::fmt;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diverged evaluations score this multiple of the minibatch baseline loss.
pub const PENALTY_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsConfig {
    pub population: usize,
    pub sigma: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub generations: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig { population: 500, sigma: 0.02, lr: 5e-3, weight_decay: 1e-3, generations: 200, batch: 16, seed: 0 }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.population == 0 {
            return bad("population must be at least 1");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.weight_decay) {
            return bad("weight decay must lie in [0, 1)");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        Ok(())
    }
}

/// A training set seen through a loss.
pub trait Objective: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loss of parameters `theta` on sample `i`; `None` when execution failed.
    fn loss(&self, theta: &[f64], i: usize) -> Option<f64>;

    /// Loss of the constant predictor on sample `i`.
    fn baseline(&self, i: usize) -> f64;
}

/// Centered ranks: ascending losses get weights from +0.5 down to -0.5;
/// ties share the mean of their ranks.
pub fn rank_shape(losses: &[f64]) -> Vec<f64> {
    let n = losses.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && losses[idx[j]] == losses[idx[i]] {
            j += 1;
        }
        let r = (i + j - 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks.iter().map(|r| 0.5 - r / (n - 1) as f64).collect()
}

/// Loss-gradient estimate from antithetic pairs: `-(1 / (2 M sigma)) sum (w+ - w-) eps`.
pub fn gradient_estimate(eps: &[Vec<f64>], w_plus: &[f64], w_minus: &[f64], sigma: f64) -> Vec<f64> {
    let m = eps.len();
    let d = eps.first().map_or(0, |e| e.len());
    let mut g = vec![0.0; d];
    for i in 0..m {
        let c = w_plus[i] - w_minus[i];
        for (gk, ek) in g.iter_mut().zip(&eps[i]) {
            *gk += c * ek;
        }
    }
    let s = -1.0 / (2.0 * m as f64 * sigma);
    g.iter_mut().for_each(|v| *v *= s);
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub mean_loss: f64,
    pub min_loss: f64,
    pub theta_norm: f64,
    pub diverged: usize,
    pub holdout_loss: Option<f64>,
    pub wall_ms: u128,
}

impl fmt::Display for GenerationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "generation={} mean_loss={:.6e} min_loss={:.6e} theta_norm={:.6e} diverged={}",
            self.generation, self.mean_loss, self.min_loss, self.theta_norm, self.diverged
        )?;
        if let Some(h) = self.holdout_loss {
            write!(f, " holdout_loss={h:.6e}")?;
        }
        write!(f, " wall_ms={}", self.wall_ms)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the last generation.
    pub theta: Vec<f64>,
    /// Best parameters seen on the held-out samples (equal to `theta` without them).
    pub best_theta: Vec<f64>,
    pub best_holdout: Option<f64>,
    pub history: Vec<GenerationRecord>,
    pub stalled_generations: usize,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean capped loss over a batch. Returns the value and whether any sample diverged.
fn batch_loss(obj: &dyn Objective, theta: &[f64], batch: &[usize], cap: f64) -> (f64, bool) {
    let mut total = 0.0;
    let mut diverged = false;
    for &i in batch {
        let l = match obj.loss(theta, i) {
            Some(l) if l.is_finite() => l.min(cap),
            _ => {
                diverged = true;
                cap
            }
        };
        total += l;
    }
    (total / batch.len() as f64, diverged)
}

fn penalty_cap(obj: &dyn Objective, batch: &[usize]) -> f64 {
    let b = batch.iter().map(|&i| obj.baseline(i)).sum::<f64>() / batch.len() as f64;
    if b > 0.0 && b.is_finite() {
        PENALTY_FACTOR * b
    } else {
        PENALTY_FACTOR
    }
}

/// Runs `config.generations` ES steps from `theta0`. `holdout` indexes samples
/// used to keep the best-so-far parameters; `on_generation` sees every record.
pub fn train(
    config: &EsConfig,
    objective: &dyn Objective,
    theta0: &[f64],
    holdout: &[usize],
    on_generation: impl FnMut(&GenerationRecord),
) -> Result<TrainOutcome> {
    train_from(config, objective, theta0, 0, holdout, on_generation)
}

/// As [`train`], numbering generations (and their random streams) from `first`.
pub fn train_from(
    config: &EsConfig,
    objective: &dyn Objective,
    theta0: &[f64],
    first: usize,
    holdout: &[usize],
    mut on_generation: impl FnMut(&GenerationRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if objective.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    let d = theta0.len();
    let m = config.population;
    let mut theta = theta0.to_vec();
    let hold_cap = if holdout.is_empty() { 0.0 } else { penalty_cap(objective, holdout) };
    let mut best_holdout = if holdout.is_empty() { None } else { Some(batch_loss(objective, &theta, holdout, hold_cap).0) };
    let mut best_theta = theta.clone();
    let mut history = Vec::with_capacity(config.generations);
    let mut stalled = 0;
    let b = config.batch.min(objective.len());
    for gen in first..first + config.generations {
        let start = Instant::now();
        let base = (gen as u64) << 32;
        let mut brng = stream_rng(config.seed, base);
        let mut batch = sample(&mut brng, objective.len(), b).into_vec();
        batch.sort_unstable();
        let cap = penalty_cap(objective, &batch);
        let results: Vec<(Vec<f64>, f64, f64, bool)> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(config.seed, base | (i as u64 + 1));
                let eps: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let plus: Vec<f64> = theta.iter().zip(&eps).map(|(t, e)| t + config.sigma * e).collect();
                let minus: Vec<f64> = theta.iter().zip(&eps).map(|(t, e)| t - config.sigma * e).collect();
                let (lp, dp) = batch_loss(objective, &plus, &batch, cap);
                let (lm, dm) = batch_loss(objective, &minus, &batch, cap);
                (eps, lp, lm, dp || dm)
            })
            .collect();
        let mut losses = Vec::with_capacity(2 * m);
        losses.extend(results.iter().map(|r| r.1));
        losses.extend(results.iter().map(|r| r.2));
        let diverged = results.iter().filter(|r| r.3).count();
        if diverged == m {
            stalled += 1;
            log::warn!("generation {gen}: every perturbation diverged, training stalled");
        }
        let w = rank_shape(&losses);
        let eps: Vec<Vec<f64>> = results.into_iter().map(|r| r.0).collect();
        let g = gradient_estimate(&eps, &w[..m], &w[m..], config.sigma);
        for (t, gk) in theta.iter_mut().zip(&g) {
            *t = (1.0 - config.weight_decay) * (*t - config.lr * gk);
        }
        let holdout_loss = if holdout.is_empty() {
            best_theta.clone_from(&theta);
            None
        } else {
            let l = batch_loss(objective, &theta, holdout, hold_cap).0;
            if best_holdout.is_none_or(|b| l < b) {
                best_holdout = Some(l);
                best_theta.clone_from(&theta);
            }
            Some(l)
        };
        let rec = GenerationRecord {
            generation: gen,
            mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            min_loss: losses.iter().copied().fold(f64::INFINITY, f64::min),
            theta_norm: theta.iter().map(|v| v * v).sum::<f64>().sqrt(),
            diverged,
            holdout_loss,
            wall_ms: start.elapsed().as_millis(),
        };
        log::info!("{rec}");
        on_generation(&rec);
        history.push(rec);
    }
    Ok(TrainOutcome { theta, best_theta, best_holdout, history, stalled_generations: stalled })
}
