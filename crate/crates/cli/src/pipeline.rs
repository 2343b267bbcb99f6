//! Experiment steps shared by the commands, the ablations and the tests.

use std::fmt::Write as _;
use std::time::Instant;

use hycop::checkpoint::Checkpoint;
use hycop::dataset::{Dataset, Sample, Split};
use hycop::es::{train, train_from, EsConfig, GenerationRecord, Objective};
use hycop::executor::{strang_calls, strang_schedule, HycopModel};
use hycop::metrics::{csv_table, error_decomposition, ks_attractor_metrics, rel_l2, Metrics};
use hycop::policy::{Policy, PolicyArch};
use hycop::training::{evaluate, evaluate_constant, SampleObjective};
use hycop::{Boundary, PrimitiveSpec, System};
use rayon::prelude::*;

use crate::config::{derive_seed, Config};
use crate::error::{CliError, CliResult};

/// Test splits in table order.
pub const TEST_SPLITS: [Split; 3] = [Split::Id, Split::Ood, Split::DamBreak];

pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub history: Vec<GenerationRecord>,
    /// Seed of the selected initial policy; `None` for warm starts.
    pub init_seed: Option<u64>,
}

pub fn fresh_model(cfg: &Config, system: System, points: usize, seed: u64) -> CliResult<HycopModel> {
    let dictionary = cfg.dictionary(system)?;
    let features = cfg.features()?;
    let arch = PolicyArch::new(features.dim(system, points), cfg.policy.hidden, dictionary.len())
        .with_lengths(cfg.policy.k_min, cfg.policy.k_max);
    let policy = Policy::init(arch, seed)?;
    Ok(HycopModel::new(policy, dictionary, features, cfg.duration_mode()?)?)
}

fn holdout_indices(cfg: &Config, n: usize) -> Vec<usize> {
    (0..cfg.training.holdout.min(n)).collect()
}

fn holdout_score(obj: &SampleObjective, theta: &[f64], idx: &[usize]) -> f64 {
    idx.iter()
        .map(|&i| obj.loss(theta, i).unwrap_or(hycop::es::PENALTY_FACTOR * obj.baseline(i)))
        .sum::<f64>()
}

/// Trains on the training split of `ds`. A warm start continues its
/// generation counter. Otherwise `init_candidates` random policies are
/// ranked on the holdout samples, the leading `init_trials` get a short ES
/// run, and the initial policy of the best trial is the starting point.
pub fn train_model(
    cfg: &Config,
    ds: &Dataset,
    warm: Option<&Checkpoint>,
    es: &EsConfig,
    on_generation: impl FnMut(&GenerationRecord),
) -> CliResult<TrainRun> {
    let samples = ds.split(Split::Train);
    if samples.is_empty() {
        return Err(CliError::Usage("dataset has no training samples".into()));
    }
    train_on(cfg, ds.system(), ds.spec.points, samples, warm, es, on_generation)
}

pub fn train_on(
    cfg: &Config,
    system: System,
    points: usize,
    samples: Vec<&Sample>,
    warm: Option<&Checkpoint>,
    es: &EsConfig,
    on_generation: impl FnMut(&GenerationRecord),
) -> CliResult<TrainRun> {
    let loss = cfg.loss()?;
    let hold = holdout_indices(cfg, samples.len());
    let (mut model, first, init_seed) = match warm {
        Some(c) => {
            if c.model.dictionary.system != system {
                return Err(CliError::Usage(format!(
                    "checkpoint is for {} but the data is {system}",
                    c.model.dictionary.system
                )));
            }
            (c.model.clone(), c.generations, None)
        }
        None => {
            let template = fresh_model(cfg, system, points, derive_seed(cfg.seed, "init", 0))?;
            let obj = SampleObjective::new(&template, samples.clone(), loss)?;
            let mut scored = Vec::with_capacity(cfg.policy.init_candidates);
            for j in 0..cfg.policy.init_candidates as u64 {
                let seed = derive_seed(cfg.seed, "init", j);
                let p = Policy::init(template.policy.arch, seed)?;
                scored.push((holdout_score(&obj, &p.theta, &hold), seed));
            }
            scored.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut best = scored[0];
            if cfg.policy.init_trials > 1 && cfg.policy.init_generations > 0 {
                let trial = EsConfig { generations: cfg.policy.init_generations, ..*es };
                best = (f64::INFINITY, best.1);
                for (j, &(_, seed)) in scored.iter().take(cfg.policy.init_trials).enumerate() {
                    let p = Policy::init(template.policy.arch, seed)?;
                    let c = EsConfig { seed: derive_seed(cfg.seed, "trial", j as u64), ..trial };
                    let out = train(&c, &obj, &p.theta, &hold, |_| {})?;
                    let score = holdout_score(&obj, &out.best_theta, &hold);
                    if score < best.0 {
                        best = (score, seed);
                    }
                }
            }
            log::info!("initial policy seed {} (holdout loss {:.4e})", best.1, best.0);
            (fresh_model(cfg, system, points, best.1)?, 0, Some(best.1))
        }
    };
    let obj = SampleObjective::new(&model, samples, loss)?;
    let out = train_from(es, &obj, &model.policy.theta, first, &hold, on_generation)?;
    if out.stalled_generations > 0 {
        log::warn!("{} generations stalled with every perturbation diverged", out.stalled_generations);
    }
    drop(obj);
    model.policy.theta = out.best_theta;
    Ok(TrainRun {
        checkpoint: Checkpoint::new(model, es.seed, first + es.generations),
        history: out.history,
        init_seed,
    })
}

/// One row per (model, split): the trained policy and the constant predictor.
pub fn metric_rows(model: &HycopModel, ds: &Dataset) -> CliResult<Vec<(String, String, Metrics)>> {
    let mut rows = Vec::new();
    for split in TEST_SPLITS {
        let s = ds.split(split);
        if s.is_empty() {
            continue;
        }
        let ev = evaluate(model, &s)?;
        let m: Vec<Metrics> = ev.into_iter().map(|e| e.metrics).collect();
        rows.push(("hycop".to_string(), split.to_string(), Metrics::mean(&m)));
        rows.push(("constant".to_string(), split.to_string(), Metrics::mean(&evaluate_constant(&s)?)));
    }
    Ok(rows)
}

pub fn metrics_csv(rows: &[(String, String, Metrics)]) -> String {
    csv_table(rows)
}

/// Mean spectrum error and KL divergence per split, from trajectories
/// predicted at every stored snapshot time.
pub fn attractor_rows(model: &HycopModel, ds: &Dataset) -> CliResult<Vec<(String, f64, f64)>> {
    let mut rows = Vec::new();
    for split in [Split::Id, Split::Ood] {
        let s = ds.split(split);
        if s.is_empty() {
            continue;
        }
        let per = s
            .par_iter()
            .map(|x| {
                let pred = model.predict_multi(&x.params, &x.u0, &x.times)?;
                Ok(ks_attractor_metrics(&pred, &x.targets)?)
            })
            .collect::<hycop::Result<Vec<(f64, f64)>>>()?;
        let n = per.len() as f64;
        rows.push((
            split.to_string(),
            per.iter().map(|p| p.0).sum::<f64>() / n,
            per.iter().map(|p| p.1).sum::<f64>() / n,
        ));
    }
    Ok(rows)
}

pub fn attractor_csv(rows: &[(String, f64, f64)]) -> String {
    let mut s = String::from("model,split,SE,KL\n");
    for (split, se, kl) in rows {
        let _ = writeln!(s, "hycop,{split},{se:.6e},{kl:.6e}");
    }
    s
}

pub const DEFAULT_HORIZONS: [usize; 4] = [1, 5, 10, 20];

/// Errors at the `h`-th stored snapshot, for every horizon every sample has.
pub fn horizon_rows(
    model: &HycopModel,
    ds: &Dataset,
    horizons: &[usize],
) -> CliResult<Vec<(String, usize, f64, Metrics)>> {
    let mut rows = Vec::new();
    for split in TEST_SPLITS {
        let s = ds.split(split);
        if s.is_empty() {
            continue;
        }
        let max = s.iter().map(|x| x.times.len()).min().unwrap_or(0);
        let hs: Vec<usize> = horizons.iter().copied().filter(|&h| h >= 1 && h <= max).collect();
        let per = s
            .par_iter()
            .map(|x| {
                let times: Vec<f64> = hs.iter().map(|&h| x.times[h - 1]).collect();
                let pred = model.predict_multi(&x.params, &x.u0, &times)?;
                hs.iter()
                    .zip(&pred)
                    .map(|(&h, p)| Metrics::compute(p, &x.targets[h - 1], x.params.system()))
                    .collect::<hycop::Result<Vec<_>>>()
            })
            .collect::<hycop::Result<Vec<_>>>()?;
        for (j, &h) in hs.iter().enumerate() {
            let t = s.iter().map(|x| x.times[h - 1]).sum::<f64>() / s.len() as f64;
            let m: Vec<Metrics> = per.iter().map(|r| r[j]).collect();
            rows.push((split.to_string(), h, t, Metrics::mean(&m)));
        }
    }
    Ok(rows)
}

pub fn horizon_csv(rows: &[(String, usize, f64, Metrics)]) -> String {
    let mut s = String::from("model,split,horizon,time,RelL2,RMSE,MaxErr\n");
    for (split, h, t, m) in rows {
        let _ = writeln!(s, "hycop,{split},{h},{t:.6e},{:.6e},{:.6e},{:.6e}", m.rel_l2, m.rmse, m.max_err);
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrangRow {
    pub model: String,
    pub split: String,
    pub substeps: Option<usize>,
    /// Mean primitive calls per query.
    pub calls: f64,
    pub rel_l2: f64,
}

/// The trained policy against fixed Strang schedules: one at the substep
/// count whose call budget matches the policy's mean program length, plus
/// every count in `extra`.
pub fn compare_strang(model: &HycopModel, ds: &Dataset, extra: &[usize]) -> CliResult<Vec<StrangRow>> {
    let n = model.dictionary.len();
    let mut rows = Vec::new();
    for split in TEST_SPLITS {
        let s = ds.split(split);
        if s.is_empty() {
            continue;
        }
        let ev = evaluate(model, &s)?;
        let calls = ev.iter().map(|e| e.calls as f64).sum::<f64>() / ev.len() as f64;
        let rel = ev.iter().map(|e| e.metrics.rel_l2).sum::<f64>() / ev.len() as f64;
        rows.push(StrangRow { model: "hycop".into(), split: split.to_string(), substeps: None, calls, rel_l2: rel });
        let matched = ((calls / strang_calls(n, 1) as f64).round() as usize).max(1);
        let mut counts = vec![matched];
        counts.extend(extra.iter().copied().filter(|&c| c != matched));
        for c in counts {
            let errs = s
                .par_iter()
                .map(|x| rel_l2(&strang_schedule(&model.dictionary, &x.params, &x.u0, x.t, c)?, x.target()))
                .collect::<hycop::Result<Vec<_>>>()?;
            rows.push(StrangRow {
                model: if c == matched { "strang-matched".into() } else { "strang".into() },
                split: split.to_string(),
                substeps: Some(c),
                calls: strang_calls(n, c) as f64,
                rel_l2: errs.iter().sum::<f64>() / errs.len() as f64,
            });
        }
    }
    Ok(rows)
}

pub fn strang_csv(rows: &[StrangRow]) -> String {
    let mut s = String::from("model,split,substeps,calls,RelL2\n");
    for r in rows {
        let sub = r.substeps.map_or_else(|| "-".to_string(), |c| c.to_string());
        let _ = writeln!(s, "{},{},{sub},{:.2},{:.6e}", r.model, r.split, r.calls, r.rel_l2);
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagRow {
    pub split: String,
    pub index: usize,
    pub family: String,
    pub total: f64,
    pub splitting_est: f64,
    pub primitive_est: f64,
    pub residual: f64,
    /// Program step at which the execution blew up.
    pub diverged_step: Option<usize>,
}

pub fn diagnose(model: &HycopModel, ds: &Dataset) -> CliResult<Vec<DiagRow>> {
    let mut rows = Vec::new();
    for split in TEST_SPLITS {
        let s = ds.split(split);
        let part = s
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let prog = model.program(&x.params, &x.u0, x.t)?;
                let base = DiagRow {
                    split: split.to_string(),
                    index: i,
                    family: x.family.clone(),
                    total: f64::NAN,
                    splitting_est: f64::NAN,
                    primitive_est: f64::NAN,
                    residual: f64::NAN,
                    diverged_step: None,
                };
                match error_decomposition(&prog, &model.dictionary, &x.params, &x.u0, x.target()) {
                    Ok(d) => Ok(DiagRow {
                        total: d.total,
                        splitting_est: d.splitting_est,
                        primitive_est: d.primitive_est,
                        residual: d.residual(),
                        ..base
                    }),
                    Err(hycop::Error::ExecutionDiverged { step }) => Ok(DiagRow { diverged_step: Some(step), ..base }),
                    Err(e) => Err(e),
                }
            })
            .collect::<hycop::Result<Vec<_>>>()?;
        rows.extend(part);
    }
    Ok(rows)
}

pub fn diagnose_csv(rows: &[DiagRow]) -> String {
    let mut s = String::from("split,index,family,total,splitting_est,primitive_est,residual,diverged_step\n");
    for r in rows {
        let step = r.diverged_step.map_or_else(|| "-".to_string(), |k| k.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{:.6e},{:.6e},{:.6e},{:.3e},{step}",
            r.split, r.index, r.family, r.total, r.splitting_est, r.primitive_est, r.residual
        );
    }
    for split in TEST_SPLITS.map(|x| x.to_string()) {
        let ok: Vec<&DiagRow> = rows.iter().filter(|r| r.split == split && r.diverged_step.is_none()).collect();
        if ok.is_empty() {
            continue;
        }
        let n = ok.len() as f64;
        let mean = |f: fn(&DiagRow) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / n;
        let worst = ok.iter().map(|r| r.residual).fold(f64::NEG_INFINITY, f64::max);
        let diverged = rows.iter().filter(|r| r.split == split && r.diverged_step.is_some()).count();
        let _ = writeln!(
            s,
            "{split},mean,all,{:.6e},{:.6e},{:.6e},{worst:.3e},{diverged}",
            mean(|r| r.total),
            mean(|r| r.splitting_est),
            mean(|r| r.primitive_est)
        );
    }
    s
}

/// Zero-shot evaluation on the wall-bounded split with the original and the
/// wall-swapped dictionary.
pub fn boundary_swap_rows(model: &HycopModel, ds: &Dataset) -> CliResult<Vec<(String, String, Metrics)>> {
    let s = ds.split(Split::DamBreak);
    if s.is_empty() {
        return Err(CliError::Usage("dataset has no dam-break samples".into()));
    }
    let mut swapped = model.clone();
    swapped.dictionary = model.dictionary.swap_boundary(Boundary::ReflectiveWall)?;
    let mean = |m: &HycopModel| -> CliResult<Metrics> {
        Ok(Metrics::mean(&evaluate(m, &s)?.into_iter().map(|e| e.metrics).collect::<Vec<_>>()))
    };
    let split = Split::DamBreak.to_string();
    Ok(vec![
        ("hycop-periodic".into(), split.clone(), mean(model)?),
        ("hycop-wall".into(), split, mean(&swapped)?),
    ])
}

/// Mean duration-weighted share of every dictionary entry on `samples`.
pub fn mean_shares(model: &HycopModel, samples: &[&Sample]) -> CliResult<Vec<f64>> {
    let ev = evaluate(model, samples)?;
    let n = ev.len().max(1) as f64;
    Ok((0..model.dictionary.len()).map(|j| ev.iter().map(|e| e.shares[j]).sum::<f64>() / n).collect())
}

pub fn allocation_csv(rows: &[(String, String, f64)]) -> String {
    let mut s = String::from("model,primitive,share\n");
    for (m, p, v) in rows {
        let _ = writeln!(s, "{m},{p},{v:.6e}");
    }
    s
}

pub struct Adaptation {
    pub run: TrainRun,
    pub index: usize,
    pub rows: Vec<(String, String, Metrics)>,
    pub allocation: Vec<(String, String, f64)>,
}

/// Extends the dictionary with `spec` and relearns the policy from the
/// checkpoint with the adaptation budget.
pub fn add_primitive(cfg: &Config, ckpt: &Checkpoint, ds: &Dataset, spec: PrimitiveSpec) -> CliResult<Adaptation> {
    let mut warm = ckpt.clone();
    let index = warm.model.add_primitive(spec, 0.0)?;
    let run = train_model(cfg, ds, Some(&warm), &cfg.adaptation_config(), |_| {})?;
    let mut rows = Vec::new();
    let id = ds.split(Split::Id);
    let mut allocation = Vec::new();
    for (name, m) in [("hycop", &ckpt.model), ("hycop-extended", &run.checkpoint.model)] {
        for split in [Split::Id, Split::Ood] {
            let s = ds.split(split);
            if !s.is_empty() {
                let ev = evaluate(m, &s)?;
                rows.push((
                    name.to_string(),
                    split.to_string(),
                    Metrics::mean(&ev.into_iter().map(|e| e.metrics).collect::<Vec<_>>()),
                ));
            }
        }
        if !id.is_empty() {
            for (label, share) in m.dictionary.labels().into_iter().zip(mean_shares(m, &id)?) {
                allocation.push((name.to_string(), label, share));
            }
        }
    }
    Ok(Adaptation { run, index, rows, allocation })
}

/// Per-sample allocation against the first policy feature, for plotting.
pub fn allocation_plot_data(model: &HycopModel, ds: &Dataset) -> CliResult<String> {
    let mut s = String::from("# split feature0 calls");
    for l in model.dictionary.labels() {
        let _ = write!(s, " share:{l}");
    }
    s.push('\n');
    for split in TEST_SPLITS {
        for x in ds.split(split) {
            let f = model.features.extract(&x.params, &x.u0, x.t)?;
            let prog = model.program(&x.params, &x.u0, x.t)?;
            let _ = write!(s, "{split} {:.6e} {}", f[0], prog.len());
            for j in 0..model.dictionary.len() {
                let _ = write!(s, " {:.6e}", prog.share(j));
            }
            s.push('\n');
        }
    }
    Ok(s)
}

pub fn curve_plot_data(history: &[GenerationRecord]) -> String {
    let mut s = String::from("# generation mean_loss min_loss holdout_loss\n");
    for r in history {
        let h = r.holdout_loss.map_or_else(|| "nan".to_string(), |v| format!("{v:.6e}"));
        let _ = writeln!(s, "{} {:.6e} {:.6e} {h}", r.generation, r.mean_loss, r.min_loss);
    }
    s
}

/// Wall time of `f` in milliseconds alongside its value.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, u128) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_millis())
}
