//! Training objective over dataset samples and per-split evaluation.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::es::Objective;
use crate::executor::{execute, HycopModel};
use crate::features::FeatureVector;
use crate::field::Field;
use crate::metrics::Metrics;
use crate::policy::Policy;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Discrete L2 norm of the error.
    #[default]
    L2,
    /// L2 error divided by the L2 norm of the reference.
    RelL2,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::L2 => "l2",
            LossKind::RelL2 => "rel-l2",
        }
    }

    pub fn of(self, pred: &Field, reference: &Field) -> f64 {
        let d = pred.l2_distance(reference);
        match self {
            LossKind::L2 => d,
            LossKind::RelL2 => d / reference.l2_norm().max(f64::MIN_POSITIVE),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(LossKind::L2),
            "rel-l2" | "rel_l2" => Ok(LossKind::RelL2),
            _ => Err(Error::InvalidConfig(format!("unknown loss `{s}`"))),
        }
    }
}

/// Prediction loss of a model template over a fixed list of samples.
/// Features are computed once; each evaluation decodes and executes a program.
pub struct SampleObjective<'a> {
    model: &'a HycopModel,
    samples: Vec<&'a Sample>,
    features: Vec<FeatureVector>,
    baselines: Vec<f64>,
    kind: LossKind,
}

impl<'a> SampleObjective<'a> {
    pub fn new(model: &'a HycopModel, samples: Vec<&'a Sample>, kind: LossKind) -> Result<Self> {
        let features = samples
            .par_iter()
            .map(|s| model.features.extract(&s.params, &s.u0, s.t))
            .collect::<Result<Vec<_>>>()?;
        if let Some(f) = features.iter().find(|f| f.len() != model.policy.arch.input_dim) {
            return Err(Error::ParamShape { expected: model.policy.arch.input_dim, found: f.len() });
        }
        let baselines = samples.iter().map(|s| kind.of(&s.u0, s.target())).collect();
        Ok(SampleObjective { model, samples, features, baselines, kind })
    }

    pub fn samples(&self) -> &[&'a Sample] {
        &self.samples
    }
}

impl Objective for SampleObjective<'_> {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn loss(&self, theta: &[f64], i: usize) -> Option<f64> {
        let s = self.samples[i];
        let policy = Policy { arch: self.model.policy.arch, theta: theta.to_vec() };
        let prog = policy.decode(&self.features[i], s.t, self.model.mode).ok()?;
        let pred = execute(&prog, &self.model.dictionary, &s.params, &s.u0).ok()?;
        let l = self.kind.of(&pred, s.target());
        l.is_finite().then_some(l)
    }

    fn baseline(&self, i: usize) -> f64 {
        self.baselines[i]
    }
}

/// Outcome of one evaluated query.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    /// Number of program steps (primitive calls).
    pub calls: usize,
    /// Duration-weighted share per dictionary entry.
    pub shares: Vec<f64>,
}

/// Metrics of `model` on each sample at its query time.
pub fn evaluate(model: &HycopModel, samples: &[&Sample]) -> Result<Vec<Evaluation>> {
    samples
        .par_iter()
        .map(|s| {
            let prog = model.program(&s.params, &s.u0, s.t)?;
            let pred = execute(&prog, &model.dictionary, &s.params, &s.u0)?;
            Ok(Evaluation {
                metrics: Metrics::compute(&pred, s.target(), s.params.system())?,
                calls: prog.len(),
                shares: (0..model.dictionary.len()).map(|j| prog.share(j)).collect(),
            })
        })
        .collect()
}

/// Metrics of the constant predictor `u(T) = u0`.
pub fn evaluate_constant(samples: &[&Sample]) -> Result<Vec<Metrics>> {
    samples.par_iter().map(|s| Metrics::compute(&s.u0, s.target(), s.params.system())).collect()
}
