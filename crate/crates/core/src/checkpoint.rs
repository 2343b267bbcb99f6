//! Plain-text policy checkpoints.
//!
//! ```text
//! format = hycop-checkpoint 1
//! system = burgers1d
//! input_dim = 4
//! ...
//! dictionary = [{"system":"burgers1d",...}]
//! ---
//! 0.0123
//! -0.5
//! ```
//!
//! The body holds the flat parameter vector in the documented layout, one value
//! per line in shortest round-trip decimal form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::executor::{Dictionary, HycopModel};
use crate::features::FeatureSet;
use crate::policy::{DurationMode, Policy, PolicyArch};
use crate::system::System;

const FORMAT: &str = "hycop-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: HycopModel,
    pub seed: u64,
    pub generations: usize,
}

impl Checkpoint {
    pub fn new(model: HycopModel, seed: u64, generations: usize) -> Self {
        Checkpoint { model, seed, generations }
    }

    pub fn to_text(&self) -> String {
        let m = &self.model;
        let a = &m.policy.arch;
        let mut s = String::new();
        let dict = serde_json::to_string(&m.dictionary.primitives).expect("dictionary serializes");
        for (k, v) in [
            ("format", FORMAT.to_string()),
            ("system", m.dictionary.system.name().to_string()),
            ("input_dim", a.input_dim.to_string()),
            ("hidden", a.hidden.to_string()),
            ("n_primitives", a.n_primitives.to_string()),
            ("k_max", a.k_max.to_string()),
            ("k_min", a.k_min.to_string()),
            ("features", m.features.name().to_string()),
            ("duration_mode", m.mode.name().to_string()),
            ("activation", "tanh".to_string()),
            ("layout", "w1,b1,w2,b2".to_string()),
            ("rank_shaping", "centered-rank".to_string()),
            ("seed", self.seed.to_string()),
            ("generations", self.generations.to_string()),
            ("n_params", m.policy.theta.len().to_string()),
            ("dictionary", dict),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("---\n");
        for x in &m.policy.theta {
            let _ = writeln!(s, "{x:?}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut header = BTreeMap::new();
        for line in lines.by_ref() {
            let line = line.trim();
            if line == "---" {
                break;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("checkpoint header line without `=`: {line}")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| header.get(k).ok_or_else(|| Error::Format(format!("checkpoint missing `{k}`")));
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Format(format!("checkpoint field `{k}` is not an integer")))
        };
        if get("format")? != FORMAT {
            return Err(Error::Format(format!("unsupported checkpoint format `{}`", get("format")?)));
        }
        let system: System = get("system")?.parse()?;
        let arch = PolicyArch {
            input_dim: num("input_dim")?,
            hidden: num("hidden")?,
            n_primitives: num("n_primitives")?,
            k_max: num("k_max")?,
            k_min: num("k_min")?,
        };
        let features: FeatureSet = get("features")?.parse()?;
        let mode: DurationMode = get("duration_mode")?.parse()?;
        let seed = get("seed")?.parse().map_err(|_| Error::Format("checkpoint seed is not an integer".into()))?;
        let generations = num("generations")?;
        let primitives = serde_json::from_str(get("dictionary")?)
            .map_err(|e| Error::Format(format!("checkpoint dictionary: {e}")))?;
        let dictionary = Dictionary::new(system, primitives)?;
        let theta = lines
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<f64>().map_err(|_| Error::Format(format!("bad parameter value `{l}`"))))
            .collect::<Result<Vec<_>>>()?;
        if theta.len() != num("n_params")? {
            return Err(Error::ParamShape { expected: num("n_params")?, found: theta.len() });
        }
        let model = HycopModel::new(Policy::new(arch, theta)?, dictionary, features, mode)?;
        Ok(Checkpoint { model, seed, generations })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::parse(&std::fs::read_to_string(path)?)
    }
}
