//! Desk-scale ablations: ES hyperparameter grid, feature sets, resolution
//! transfer. Each returns rows and renders one summary CSV.

use std::fmt::Write as _;

use hycop::checkpoint::Checkpoint;
use hycop::dataset::{regrid, Dataset, Split};
use hycop::metrics::Metrics;
use hycop::training::evaluate;
use rayon::prelude::*;

use crate::config::Config;
use crate::error::CliResult;
use crate::pipeline::{train_on, timed, TrainRun};

fn split_mean(ck: &Checkpoint, ds: &Dataset, split: Split) -> CliResult<Option<Metrics>> {
    let s = ds.split(split);
    if s.is_empty() {
        return Ok(None);
    }
    let ev = evaluate(&ck.model, &s)?;
    Ok(Some(Metrics::mean(&ev.into_iter().map(|e| e.metrics).collect::<Vec<_>>())))
}

fn cell(m: Option<Metrics>, f: impl Fn(&Metrics) -> f64) -> String {
    m.map_or_else(|| "N/A".into(), |m| format!("{:.6e}", f(&m)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub population: usize,
    pub sigma: f64,
    pub id: Option<Metrics>,
    pub ood: Option<Metrics>,
}

/// One policy per (population, sigma) cell with the sweep's generation
/// budget on the leading fraction of the training split.
pub fn es_sweep(cfg: &Config, ds: &Dataset) -> CliResult<Vec<SweepCell>> {
    let train = ds.split(Split::Train);
    let keep = ((train.len() as f64 * cfg.sweep.train_fraction).round() as usize).clamp(1, train.len().max(1));
    let train = &train[..keep.min(train.len())];
    let grid: Vec<(usize, f64)> = cfg
        .sweep
        .populations
        .iter()
        .flat_map(|&m| cfg.sweep.sigmas.iter().map(move |&s| (m, s)))
        .collect();
    grid.par_iter()
        .map(|&(population, sigma)| {
            let mut es = cfg.es_config();
            es.population = population;
            es.sigma = sigma;
            es.generations = cfg.sweep.generations;
            let run = train_on(cfg, ds.system(), ds.spec.points, train.to_vec(), None, &es, |_| {})?;
            Ok(SweepCell {
                population,
                sigma,
                id: split_mean(&run.checkpoint, ds, Split::Id)?,
                ood: split_mean(&run.checkpoint, ds, Split::Ood)?,
            })
        })
        .collect()
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut s = String::from("population,sigma,id_RelL2,ood_RelL2\n");
    for c in cells {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            c.population,
            c.sigma,
            cell(c.id, |m| m.rel_l2),
            cell(c.ood, |m| m.rel_l2)
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionRow {
    pub points: usize,
    pub split: String,
    pub metrics: Metrics,
    pub wall_ms: u128,
}

/// The checkpoint evaluated on the dataset as stored and re-gridded to
/// `points` nodes.
pub fn resolution_transfer(ck: &Checkpoint, ds: &Dataset, points: usize) -> CliResult<Vec<ResolutionRow>> {
    let fine = if points == ds.spec.points { ds.clone() } else { regrid(ds, points)? };
    let mut rows = Vec::new();
    for d in [ds, &fine] {
        for split in [Split::Id, Split::Ood] {
            let (m, wall_ms) = timed(|| split_mean(ck, d, split));
            if let Some(metrics) = m? {
                rows.push(ResolutionRow { points: d.spec.points, split: split.to_string(), metrics, wall_ms });
            }
        }
    }
    Ok(rows)
}

pub fn resolution_csv(rows: &[ResolutionRow]) -> String {
    let mut s = String::from("points,split,RelL2,RMSE,MaxErr,wall_ms\n");
    for r in rows {
        let m = r.metrics;
        let _ = writeln!(s, "{},{},{:.6e},{:.6e},{:.6e},{}", r.points, r.split, m.rel_l2, m.rmse, m.max_err, r.wall_ms);
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub features: String,
    pub id: Option<Metrics>,
    pub ood: Option<Metrics>,
}

pub struct FeatureAblation {
    pub rows: Vec<FeatureRow>,
    pub runs: Vec<TrainRun>,
}

impl FeatureAblation {
    /// Relative OOD RelL2 reduction of the first feature set over the second, in percent.
    pub fn ood_improvement(&self) -> Option<f64> {
        let a = self.rows.first()?.ood?.rel_l2;
        let b = self.rows.get(1)?.ood?.rel_l2;
        Some(100.0 * (b - a) / b)
    }
}

/// Twin policies differing only in their feature set, trained on the same
/// data with the same seeds.
pub fn feature_ablation(cfg: &Config, ds: &Dataset, sets: [&str; 2]) -> CliResult<FeatureAblation> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for name in sets {
        let mut c = cfg.clone();
        c.policy.features = name.to_string();
        let run = train_on(&c, ds.system(), ds.spec.points, ds.split(Split::Train), None, &c.es_config(), |_| {})?;
        rows.push(FeatureRow {
            features: c.features()?.name().to_string(),
            id: split_mean(&run.checkpoint, ds, Split::Id)?,
            ood: split_mean(&run.checkpoint, ds, Split::Ood)?,
        });
        runs.push(run);
    }
    Ok(FeatureAblation { rows, runs })
}

pub fn feature_csv(ab: &FeatureAblation) -> String {
    let mut s = String::from("features,id_RelL2,id_RMSE,id_MaxErr,ood_RelL2,ood_RMSE,ood_MaxErr\n");
    for r in &ab.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.features,
            cell(r.id, |m| m.rel_l2),
            cell(r.id, |m| m.rmse),
            cell(r.id, |m| m.max_err),
            cell(r.ood, |m| m.rel_l2),
            cell(r.ood, |m| m.rmse),
            cell(r.ood, |m| m.max_err)
        );
    }
    if let Some(p) = ab.ood_improvement() {
        let _ = writeln!(s, "# ood_improvement_percent,{p:.2}");
    }
    s
}
