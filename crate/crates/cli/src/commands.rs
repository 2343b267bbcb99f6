use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hycop::checkpoint::Checkpoint;
use hycop::dataset::{build_dataset, Dataset, Split};
use hycop::{Mechanism, PrimitiveSpec};

use crate::ablation;
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "hycop", version, about = "Learned compositions of numerical PDE sub-flows")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate every benchmark dataset listed in the config.
    GenData {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a policy with evolution strategies.
    Train(TrainArgs),
    /// Metric tables of a checkpoint on the test splits.
    Eval(EvalArgs),
    /// The trained policy against Strang splitting at a matched call budget.
    CompareStrang(CompareArgs),
    /// Splitting / primitive error decomposition per query.
    Diagnose(DiagnoseArgs),
    /// Boundary swap or dictionary extension of a trained policy.
    Transfer(TransferArgs),
    /// Desk-scale ablations.
    #[command(subcommand)]
    Ablate(Ablation),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset file; defaults to the first benchmark of the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint (generation counter included).
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    /// Override the configured number of generations.
    #[arg(long)]
    pub generations: Option<usize>,
    /// Per-generation log; defaults to `<out>.log`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also emit the multi-horizon table at these snapshot indices.
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    /// Write allocation-vs-feature columns for plotting.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Extra Strang substep counts.
    #[arg(long, value_delimiter = ',')]
    pub substeps: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fail (exit 4) unless the policy is at least as accurate as matched Strang on ID.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fail (exit 4) if any row breaks the triangle inequality or diverged.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Replace the primitives by their reflective-wall variants (zero-shot).
    #[arg(long, conflicts_with = "add_primitive")]
    pub swap_boundary: bool,
    /// Append a primitive, `mechanism` or `mechanism:rate`, and adapt the policy.
    #[arg(long, required_unless_present = "swap_boundary")]
    pub add_primitive: Option<String>,
    /// Config supplying the adaptation budget and master seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the adapted checkpoint.
    #[arg(long)]
    pub save: Option<PathBuf>,
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Subcommand)]
pub enum Ablation {
    /// Train one policy per (population, sigma) cell.
    EsSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        populations: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail unless the best cell is within 2x of the sigma = 0.02 column.
        #[arg(long)]
        check: bool,
    },
    /// Evaluate a checkpoint on analytically re-gridded test queries.
    ResolutionTransfer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail unless the re-gridded RelL2 stays within 2x.
        #[arg(long)]
        check: bool,
    },
    /// Twin policies on dimensionless and raw initial-condition features.
    FeatureAblation {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail unless dimensionless features are no worse out of distribution.
        #[arg(long)]
        check: bool,
    },
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn check(ok: bool, what: impl FnOnce() -> String) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Check(what()))
    }
}

pub fn parse_primitive(arg: &str, system: hycop::System) -> CliResult<PrimitiveSpec> {
    let (name, rate) = match arg.split_once(':') {
        Some((n, r)) => {
            let r: f64 = r.parse().map_err(|_| CliError::Usage(format!("bad rate in `{arg}`")))?;
            (n, Some(r))
        }
        None => (arg, None),
    };
    let mech: Mechanism = name.parse()?;
    let spec = PrimitiveSpec::new(system, mech)?;
    Ok(match rate {
        Some(r) => spec.with_reaction_rate(r),
        None if mech == Mechanism::Reaction && system == hycop::System::Swe1d => spec.with_reaction_rate(1.0),
        None => spec,
    })
}

pub fn gen_data(cfg: &Config) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (i, entry) in cfg.benchmarks.iter().enumerate() {
        let spec = cfg.benchmark_spec(i)?;
        let ds = build_dataset(&spec)?;
        let path = cfg.resolve(&entry.path);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        ds.save(&path)?;
        log::info!(
            "{}: {} train, {} id, {} ood, {} dam-break -> {}",
            spec.system,
            ds.count(Split::Train),
            ds.count(Split::Id),
            ds.count(Split::Ood),
            ds.count(Split::DamBreak),
            path.display()
        );
        written.push(path);
    }
    Ok(written)
}

pub fn train(args: &TrainArgs) -> CliResult<Checkpoint> {
    let cfg = Config::load(&args.config)?;
    let data = match &args.data {
        Some(p) => p.clone(),
        None => cfg
            .benchmarks
            .first()
            .map(|b| cfg.resolve(&b.path))
            .ok_or_else(|| CliError::Usage("no --data and no benchmark in the config".into()))?,
    };
    let ds = Dataset::load(&data)?;
    let warm = args.warm_start.as_ref().map(Checkpoint::load).transpose()?;
    let mut es = cfg.es_config();
    if let Some(g) = args.generations {
        es.generations = g;
    }
    let log_path = args.log.clone().unwrap_or_else(|| with_suffix(&args.out, "log"));
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    let mut io_err = None;
    let run = pipeline::train_model(&cfg, &ds, warm.as_ref(), &es, |r| {
        if let Err(e) = writeln!(log, "{r}") {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    log.flush()?;
    run.checkpoint.save(&args.out)?;
    std::fs::write(with_suffix(&args.out, "curve.dat"), pipeline::curve_plot_data(&run.history))?;
    Ok(run.checkpoint)
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn eval(args: &EvalArgs) -> CliResult<String> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let ds = Dataset::load(&args.data)?;
    let mut text = pipeline::metrics_csv(&pipeline::metric_rows(&ck.model, &ds)?);
    if ds.system() == hycop::System::Ks1d {
        text.push('\n');
        text.push_str(&pipeline::attractor_csv(&pipeline::attractor_rows(&ck.model, &ds)?));
    }
    if let Some(h) = &args.horizons {
        let hs = if h.is_empty() { pipeline::DEFAULT_HORIZONS.to_vec() } else { h.clone() };
        text.push('\n');
        text.push_str(&pipeline::horizon_csv(&pipeline::horizon_rows(&ck.model, &ds, &hs)?));
    }
    if let Some(p) = &args.plot_data {
        std::fs::write(p, pipeline::allocation_plot_data(&ck.model, &ds)?)?;
    }
    emit(args.out.as_deref(), &text)?;
    Ok(text)
}

pub fn compare_strang(args: &CompareArgs) -> CliResult<String> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let ds = Dataset::load(&args.data)?;
    let rows = pipeline::compare_strang(&ck.model, &ds, &args.substeps)?;
    let text = pipeline::strang_csv(&rows);
    emit(args.out.as_deref(), &text)?;
    if args.check {
        let get = |m: &str| rows.iter().find(|r| r.split == "id" && r.model == m).map(|r| r.rel_l2);
        let (h, s) = (get("hycop"), get("strang-matched"));
        check(matches!((h, s), (Some(h), Some(s)) if h <= s), || format!("policy {h:?} vs matched Strang {s:?}"))?;
    }
    Ok(text)
}

pub fn diagnose(args: &DiagnoseArgs) -> CliResult<String> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let ds = Dataset::load(&args.data)?;
    let rows = pipeline::diagnose(&ck.model, &ds)?;
    let text = pipeline::diagnose_csv(&rows);
    emit(args.out.as_deref(), &text)?;
    if args.check {
        let bad = rows.iter().filter(|r| r.diverged_step.is_some() || !(r.residual <= 1e-12)).count();
        check(bad == 0, || format!("{bad} rows diverged or violate the triangle inequality"))?;
    }
    Ok(text)
}

pub fn transfer(args: &TransferArgs) -> CliResult<String> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let ds = Dataset::load(&args.data)?;
    if args.swap_boundary {
        let rows = pipeline::boundary_swap_rows(&ck.model, &ds)?;
        let text = pipeline::metrics_csv(&rows);
        emit(args.out.as_deref(), &text)?;
        if let Some(p) = &args.save {
            let mut c = ck.clone();
            c.model.dictionary = c.model.dictionary.swap_boundary(hycop::Boundary::ReflectiveWall)?;
            c.save(p)?;
        }
        if args.check {
            let (p, w) = (rows[0].2.rel_l2, rows[1].2.rel_l2);
            check(w * 2.0 <= p, || format!("wall {w:.3e} vs periodic {p:.3e} is below a 2x reduction"))?;
        }
        return Ok(text);
    }
    let arg = args.add_primitive.as_deref().ok_or_else(|| CliError::Usage("nothing to transfer".into()))?;
    let cfg = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::empty(ck.seed),
    };
    let spec = parse_primitive(arg, ds.system())?;
    let before = ck.model.dictionary.len();
    let ad = pipeline::add_primitive(&cfg, &ck, &ds, spec)?;
    let mut text = pipeline::metrics_csv(&ad.rows);
    text.push('\n');
    text.push_str(&pipeline::allocation_csv(&ad.allocation));
    emit(args.out.as_deref(), &text)?;
    if let Some(p) = &args.save {
        ad.run.checkpoint.save(p)?;
    }
    if args.check {
        let get = |m: &str| ad.rows.iter().find(|r| r.0 == m && r.1 == "id").map(|r| r.2.rel_l2);
        let (a, b) = (get("hycop").unwrap_or(f64::NAN), get("hycop-extended").unwrap_or(f64::NAN));
        let label = &ad.run.checkpoint.model.dictionary.labels()[ad.index];
        let share = ad.allocation.iter().find(|r| r.0 == "hycop-extended" && &r.1 == label).map_or(0.0, |r| r.2);
        let new = ad.run.checkpoint.model.dictionary.len() > before;
        check((b - a).abs() < 0.25 * a && (!new || share < 0.1), || {
            format!("ID RelL2 {a:.3e} -> {b:.3e}, new primitive share {share:.3}")
        })?;
    }
    Ok(text)
}

pub fn ablate(a: &Ablation) -> CliResult<String> {
    match a {
        Ablation::EsSweep { config, data, populations, sigmas, generations, out, check: chk } => {
            let mut cfg = Config::load(config)?;
            if let Some(p) = populations {
                cfg.sweep.populations = p.clone();
            }
            if let Some(s) = sigmas {
                cfg.sweep.sigmas = s.clone();
            }
            if let Some(g) = generations {
                cfg.sweep.generations = *g;
            }
            cfg.validate()?;
            let ds = Dataset::load(data)?;
            let cells = ablation::es_sweep(&cfg, &ds)?;
            let text = ablation::sweep_csv(&cells);
            emit(out.as_deref(), &text)?;
            if *chk {
                let ids: Vec<(f64, f64)> = cells.iter().filter_map(|c| c.id.map(|m| (c.sigma, m.rel_l2))).collect();
                let best = ids.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
                let col = ids.iter().filter(|c| c.0 == 0.02).map(|c| c.1).fold(f64::INFINITY, f64::min);
                check(col <= 2.0 * best, || format!("sigma = 0.02 column {col:.3e} vs best {best:.3e}"))?;
            }
            Ok(text)
        }
        Ablation::ResolutionTransfer { checkpoint, data, points, out, check: chk } => {
            let ck = Checkpoint::load(checkpoint)?;
            let ds = Dataset::load(data)?;
            let rows = ablation::resolution_transfer(&ck, &ds, *points)?;
            let text = ablation::resolution_csv(&rows);
            emit(out.as_deref(), &text)?;
            if *chk {
                let half = rows.len() / 2;
                let worst =
                    rows[..half].iter().zip(&rows[half..]).map(|(a, b)| b.metrics.rel_l2 / a.metrics.rel_l2).fold(0.0, f64::max);
                check(worst < 2.0, || format!("RelL2 grows {worst:.2}x after re-gridding"))?;
            }
            Ok(text)
        }
        Ablation::FeatureAblation { config, data, out, check: chk } => {
            let cfg = Config::load(config)?;
            let ds = Dataset::load(data)?;
            let ab = ablation::feature_ablation(&cfg, &ds, ["dimensionless", "raw"])?;
            let text = ablation::feature_csv(&ab);
            emit(out.as_deref(), &text)?;
            if *chk {
                let ood = |i: usize| ab.rows[i].ood.map_or(f64::NAN, |m| m.rel_l2);
                check(ood(0) <= ood(1), || format!("dimensionless OOD {:.3e} vs raw {:.3e}", ood(0), ood(1)))?;
            }
            Ok(text)
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::GenData { config } => gen_data(&Config::load(config)?).map(|_| ()),
        Command::Train(a) => train(a).map(|_| ()),
        Command::Eval(a) => eval(a).map(|_| ()),
        Command::CompareStrang(a) => compare_strang(a).map(|_| ()),
        Command::Diagnose(a) => diagnose(a).map(|_| ()),
        Command::Transfer(a) => transfer(a).map(|_| ()),
        Command::Ablate(a) => ablate(a).map(|_| ()),
    }
}
