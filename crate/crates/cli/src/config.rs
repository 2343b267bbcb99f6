//! Experiment configuration: one TOML file per experiment.
//!
//! ```toml
//! seed = 7
//!
//! [[benchmark]]
//! system = "burgers1d"
//! path = "burgers.ds"
//! train = 2000
//!
//! [policy]
//! hidden = 4
//! features = "dimensionless"
//!
//! [es]
//! population = 100
//! generations = 60
//! batch = 8
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use hycop::datagen::{BenchmarkSpec, Intervals};
use hycop::es::EsConfig;
use hycop::executor::Dictionary;
use hycop::features::FeatureSet;
use hycop::policy::{DurationMode, PolicyArch};
use hycop::training::LossKind;
use hycop::{Mechanism, PrimitiveSpec, System};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Master seed; every random stream of the experiment derives from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, rename = "benchmark")]
    pub benchmarks: Vec<BenchmarkEntry>,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub es: EsSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default = "EsSection::adaptation")]
    pub adaptation: EsSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkEntry {
    pub system: String,
    pub path: PathBuf,
    pub points: Option<usize>,
    pub train: Option<usize>,
    pub test_id: Option<usize>,
    pub test_ood: Option<usize>,
    pub dam_break: Option<usize>,
    pub id_ranges: Option<Vec<Intervals>>,
    pub ood_ranges: Option<Vec<Intervals>>,
    pub train_t: Option<[f64; 2]>,
    pub id_t: Option<[f64; 2]>,
    pub ood_t: Option<[f64; 2]>,
    pub id_families: Option<Vec<String>>,
    pub ood_families: Option<Vec<String>>,
    pub snapshots: Option<usize>,
    pub snapshot_end: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub hidden: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub features: String,
    pub duration_mode: String,
    /// Random initial policies scored on the holdout set; the best one starts ES.
    pub init_candidates: usize,
    /// Best-scoring candidates given a short ES trial before the choice.
    pub init_trials: usize,
    pub init_generations: usize,
    /// Dictionary override; the canonical dictionary when absent.
    pub mechanisms: Option<Vec<String>>,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            hidden: 4,
            k_min: 3,
            k_max: 18,
            features: FeatureSet::Dimensionless.name().into(),
            duration_mode: DurationMode::default().name().into(),
            init_candidates: 4096,
            init_trials: 8,
            init_generations: 10,
            mechanisms: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsSection {
    pub population: usize,
    pub sigma: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub generations: usize,
    pub batch: usize,
}

impl Default for EsSection {
    fn default() -> Self {
        let d = EsConfig::default();
        EsSection {
            population: d.population,
            sigma: d.sigma,
            lr: d.lr,
            weight_decay: d.weight_decay,
            generations: d.generations,
            batch: d.batch,
        }
    }
}

impl EsSection {
    /// Small-budget warm-started runs.
    pub fn adaptation() -> Self {
        EsSection { population: 50, sigma: 0.03, lr: 5e-3, generations: 20, ..EsSection::default() }
    }

    pub fn to_config(&self, seed: u64) -> EsConfig {
        EsConfig {
            population: self.population,
            sigma: self.sigma,
            lr: self.lr,
            weight_decay: self.weight_decay,
            generations: self.generations,
            batch: self.batch,
            seed,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub loss: String,
    /// Leading training samples kept as the fixed best-so-far holdout batch.
    pub holdout: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection { loss: LossKind::default().name().into(), holdout: 32 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub populations: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub generations: usize,
    /// Fraction of the training split used per cell.
    pub train_fraction: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            populations: vec![100, 250, 500],
            sigmas: vec![0.005, 0.01, 0.02, 0.05, 0.1],
            generations: 60,
            train_fraction: 0.5,
        }
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// Derived seed for stream `label` of the master seed.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes().chain(index.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    master ^ h
}

impl Config {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> CliResult<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(s) => {
                    let (l, c) = line_col(text, s.start);
                    format!("line {l}, column {c}")
                }
                None => "document".into(),
            };
            CliError::config(location, e.message())
        })?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::parse(&text, dir)
    }

    /// Defaults for everything, no benchmarks.
    pub fn empty(seed: u64) -> Self {
        let mut c: Config = toml::from_str("").expect("empty config parses");
        c.seed = seed;
        c
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        for i in 0..self.benchmarks.len() {
            self.benchmark_spec(i)?;
        }
        self.features()?;
        self.duration_mode()?;
        self.loss()?;
        if self.policy.init_candidates == 0 {
            return Err(CliError::config("policy.init_candidates", "must be at least 1"));
        }
        if self.policy.init_trials > self.policy.init_candidates {
            return Err(CliError::config("policy.init_trials", "must not exceed init_candidates"));
        }
        if let Some(m) = &self.policy.mechanisms {
            for (j, name) in m.iter().enumerate() {
                name.parse::<Mechanism>().map_err(|e| CliError::config(format!("policy.mechanisms[{j}]"), e))?;
            }
        }
        let arch = PolicyArch::new(1, self.policy.hidden, 2).with_lengths(self.policy.k_min, self.policy.k_max);
        arch.validate().map_err(|e| CliError::config("policy", e))?;
        for (label, s) in [("es", &self.es), ("adaptation", &self.adaptation)] {
            s.to_config(0).validate().map_err(|e| CliError::config(label, e))?;
        }
        if self.sweep.sigmas.iter().any(|s| !(*s > 0.0)) || self.sweep.populations.contains(&0) {
            return Err(CliError::config("sweep", "populations and sigmas must be positive"));
        }
        if !(self.sweep.train_fraction > 0.0 && self.sweep.train_fraction <= 1.0) {
            return Err(CliError::config("sweep.train_fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn features(&self) -> CliResult<FeatureSet> {
        self.policy.features.parse().map_err(|e| CliError::config("policy.features", e))
    }

    pub fn duration_mode(&self) -> CliResult<DurationMode> {
        self.policy.duration_mode.parse().map_err(|e| CliError::config("policy.duration_mode", e))
    }

    pub fn loss(&self) -> CliResult<LossKind> {
        self.training.loss.parse().map_err(|e| CliError::config("training.loss", e))
    }

    pub fn dictionary(&self, system: System) -> CliResult<Dictionary> {
        match &self.policy.mechanisms {
            None => Ok(Dictionary::canonical(system)),
            Some(names) => {
                let prims = names
                    .iter()
                    .map(|n| PrimitiveSpec::new(system, n.parse()?))
                    .collect::<hycop::Result<Vec<_>>>()
                    .map_err(|e| CliError::config("policy.mechanisms", e))?;
                Dictionary::new(system, prims).map_err(|e| CliError::config("policy.mechanisms", e))
            }
        }
    }

    pub fn es_config(&self) -> EsConfig {
        self.es.to_config(derive_seed(self.seed, "es", 0))
    }

    pub fn adaptation_config(&self) -> EsConfig {
        self.adaptation.to_config(derive_seed(self.seed, "adaptation", 0))
    }

    pub fn benchmark_spec(&self, i: usize) -> CliResult<BenchmarkSpec> {
        let e = &self.benchmarks[i];
        let at = |f: &str| format!("benchmark[{i}].{f}");
        let system: System = e.system.parse().map_err(|err| CliError::config(at("system"), err))?;
        let d = BenchmarkSpec::default_for(system);
        let spec = BenchmarkSpec {
            system,
            points: e.points.unwrap_or(d.points),
            train: e.train.unwrap_or(d.train),
            test_id: e.test_id.unwrap_or(d.test_id),
            test_ood: e.test_ood.unwrap_or(d.test_ood),
            dam_break: e.dam_break.unwrap_or(d.dam_break),
            id_ranges: e.id_ranges.clone().unwrap_or(d.id_ranges),
            ood_ranges: e.ood_ranges.clone().unwrap_or(d.ood_ranges),
            train_t: e.train_t.unwrap_or(d.train_t),
            id_t: e.id_t.unwrap_or(d.id_t),
            ood_t: e.ood_t.unwrap_or(d.ood_t),
            id_families: e.id_families.clone().unwrap_or(d.id_families),
            ood_families: e.ood_families.clone().unwrap_or(d.ood_families),
            snapshots: e.snapshots.unwrap_or(d.snapshots),
            snapshot_end: e.snapshot_end.unwrap_or(d.snapshot_end),
            seed: e.seed.unwrap_or_else(|| derive_seed(self.seed, "benchmark", i as u64)),
        };
        spec.validate().map_err(|err| {
            let msg = err.to_string();
            let field = ["id_ranges", "ood_ranges", "train_t", "id_t", "ood_t", "points", "snapshot"]
                .into_iter()
                .find(|f| msg.contains(f))
                .unwrap_or("families");
            CliError::config(at(field), msg)
        })?;
        Ok(spec)
    }
}
