//! One-hidden-layer composition policy: features to program.
//!
//! Flat parameter layout, in order:
//! `W1` (H x m, row-major), `b1` (H), `W2` (O x H, row-major), `b2` (O),
//! with `O = K_max * (n + 1) + 1`. Output row `r * (n + 1) + j` is the logit of
//! primitive `j` at step `r`, row `r * (n + 1) + n` is the duration
//! pre-activation of step `r`, and the last row is the length head.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K_MAX: usize = 18;
pub const DEFAULT_K_MIN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyArch {
    pub input_dim: usize,
    pub hidden: usize,
    pub n_primitives: usize,
    pub k_max: usize,
    pub k_min: usize,
}

impl PolicyArch {
    pub fn new(input_dim: usize, hidden: usize, n_primitives: usize) -> Self {
        PolicyArch { input_dim, hidden, n_primitives, k_max: DEFAULT_K_MAX, k_min: DEFAULT_K_MIN }
    }

    pub fn with_lengths(mut self, k_min: usize, k_max: usize) -> Self {
        self.k_min = k_min;
        self.k_max = k_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.n_primitives == 0 {
            return Err(Error::InvalidConfig("policy dimensions must be positive".into()));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::InvalidConfig(format!(
                "program length range [{}, {}] is empty",
                self.k_min, self.k_max
            )));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.k_max * (self.n_primitives + 1) + 1
    }

    pub fn n_params(&self) -> usize {
        (self.input_dim + 1) * self.hidden + (self.hidden + 1) * self.output_dim()
    }

    /// Same architecture with a larger dictionary.
    pub fn with_primitives(mut self, n: usize) -> Self {
        self.n_primitives = n;
        self
    }
}

/// Structured view of the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyWeights {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl PolicyWeights {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn unflatten(arch: &PolicyArch, theta: &[f64]) -> Result<Self> {
        if theta.len() != arch.n_params() {
            return Err(Error::ParamShape { expected: arch.n_params(), found: theta.len() });
        }
        let (m, h, o) = (arch.input_dim, arch.hidden, arch.output_dim());
        let (w1, rest) = theta.split_at(h * m);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(o * h);
        Ok(PolicyWeights { w1: w1.to_vec(), b1: b1.to_vec(), w2: w2.to_vec(), b2: b2.to_vec() })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DurationMode {
    /// Each mechanism that appears in the program integrates over exactly `T`.
    #[default]
    PerMechanism,
    /// All durations together sum to `T`.
    Allocation,
    /// Raw softplus durations.
    Free,
}

impl DurationMode {
    pub fn name(self) -> &'static str {
        match self {
            DurationMode::PerMechanism => "per-mechanism",
            DurationMode::Allocation => "allocation",
            DurationMode::Free => "free",
        }
    }
}

impl fmt::Display for DurationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DurationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "per-mechanism" => Ok(DurationMode::PerMechanism),
            "allocation" | "normalized" => Ok(DurationMode::Allocation),
            "free" => Ok(DurationMode::Free),
            _ => Err(Error::InvalidConfig(format!("unknown duration mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub primitive: usize,
    pub duration: f64,
}

/// Ordered primitive applications; step 0 runs first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub steps: Vec<Step>,
}

impl Program {
    pub fn new(steps: impl IntoIterator<Item = (usize, f64)>) -> Self {
        Program { steps: steps.into_iter().map(|(primitive, duration)| Step { primitive, duration }).collect() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.steps.iter().map(|s| s.duration).sum()
    }

    /// Duration-weighted share of primitive `j`.
    pub fn share(&self, j: usize) -> f64 {
        let total = self.total_duration();
        if total <= 0.0 {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.primitive == j).map(|s| s.duration).sum::<f64>() / total
    }

    pub fn validate(&self, n_primitives: usize) -> Result<()> {
        for s in &self.steps {
            if s.primitive >= n_primitives {
                return Err(Error::InvalidConfig(format!(
                    "step primitive {} outside dictionary of {n_primitives}",
                    s.primitive
                )));
            }
            if !(s.duration >= 0.0 && s.duration.is_finite()) {
                return Err(Error::InvalidDuration(s.duration));
            }
        }
        Ok(())
    }
}

pub fn softplus(a: f64) -> f64 {
    if a > 30.0 {
        a
    } else if a < -30.0 {
        a.exp()
    } else {
        a.exp().ln_1p()
    }
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Policy parameters: architecture plus the flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub arch: PolicyArch,
    pub theta: Vec<f64>,
}

impl Policy {
    pub fn new(arch: PolicyArch, theta: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if theta.len() != arch.n_params() {
            return Err(Error::ParamShape { expected: arch.n_params(), found: theta.len() });
        }
        Ok(Policy { arch, theta })
    }

    pub fn zeros(arch: PolicyArch) -> Result<Self> {
        Policy::new(arch, vec![0.0; arch.n_params()])
    }

    /// Zero biases, weights uniform in `(-0.5, 0.5) / sqrt(fan_in)`.
    pub fn init(arch: PolicyArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, h, o) = (arch.input_dim, arch.hidden, arch.output_dim());
        let s1 = 1.0 / (m as f64).sqrt();
        let s2 = 1.0 / (h as f64).sqrt();
        let w = PolicyWeights {
            w1: (0..h * m).map(|_| (rng.random::<f64>() - 0.5) * s1).collect(),
            b1: vec![0.0; h],
            w2: (0..o * h).map(|_| (rng.random::<f64>() - 0.5) * s2).collect(),
            b2: vec![0.0; o],
        };
        Policy::new(arch, w.flatten())
    }

    pub fn weights(&self) -> PolicyWeights {
        PolicyWeights::unflatten(&self.arch, &self.theta).expect("length checked at construction")
    }

    /// Policy for a dictionary with one more primitive appended. Existing rows
    /// are copied; the new logit rows get zero weights and bias `new_bias`.
    pub fn with_added_primitive(&self, new_bias: f64) -> Result<Self> {
        let (h, n) = (self.arch.hidden, self.arch.n_primitives);
        let arch = self.arch.with_primitives(n + 1);
        let old = self.weights();
        let mut w2 = Vec::with_capacity(arch.output_dim() * h);
        let mut b2 = Vec::with_capacity(arch.output_dim());
        let copy = |row: usize, w2: &mut Vec<f64>, b2: &mut Vec<f64>| {
            w2.extend_from_slice(&old.w2[row * h..(row + 1) * h]);
            b2.push(old.b2[row]);
        };
        for r in 0..arch.k_max {
            for j in 0..n {
                copy(r * (n + 1) + j, &mut w2, &mut b2);
            }
            w2.extend(std::iter::repeat_n(0.0, h));
            b2.push(new_bias);
            copy(r * (n + 1) + n, &mut w2, &mut b2);
        }
        copy(self.arch.k_max * (n + 1), &mut w2, &mut b2);
        let w = PolicyWeights { w1: old.w1, b1: old.b1, w2, b2 };
        Policy::new(arch, w.flatten())
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Policy::new(self.arch, theta)
    }

    /// Raw network output for a feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        let a = &self.arch;
        if features.len() != a.input_dim {
            return Err(Error::ParamShape { expected: a.input_dim, found: features.len() });
        }
        let (m, h, o) = (a.input_dim, a.hidden, a.output_dim());
        let t = &self.theta;
        let (w1, rest) = t.split_at(h * m);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(o * h);
        let hidden: Vec<f64> = (0..h)
            .map(|i| {
                let row = &w1[i * m..(i + 1) * m];
                (b1[i] + row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()).tanh()
            })
            .collect();
        let out: Vec<f64> = (0..o)
            .map(|r| b2[r] + w2[r * h..(r + 1) * h].iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::PolicyNumerical);
        }
        Ok(out)
    }

    /// Effective program length from the length head.
    pub fn program_length(&self, head: f64) -> usize {
        let a = &self.arch;
        let k = a.k_min as f64 + (a.k_max - a.k_min) as f64 * sigmoid(head);
        (k.round() as usize).clamp(a.k_min, a.k_max)
    }

    pub fn decode(&self, features: &[f64], t: f64, mode: DurationMode) -> Result<Program> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidDuration(t));
        }
        let out = self.forward(features)?;
        let n = self.arch.n_primitives;
        let k = self.program_length(out[self.arch.k_max * (n + 1)]);
        let mut steps: Vec<Step> = (0..k)
            .map(|r| {
                let row = &out[r * (n + 1)..(r + 1) * (n + 1)];
                Step { primitive: argmax(&row[..n]), duration: softplus(row[n]) }
            })
            .collect();
        normalize(&mut steps, n, t, mode);
        Ok(Program { steps })
    }
}

fn rescale(steps: &mut [Step], pick: impl Fn(&Step) -> bool, t: f64) {
    let (sum, count) = steps.iter().filter(|s| pick(s)).fold((0.0, 0usize), |(a, c), s| (a + s.duration, c + 1));
    if count == 0 {
        return;
    }
    for s in steps.iter_mut().filter(|s| pick(s)) {
        s.duration = if sum > 0.0 { s.duration * t / sum } else { t / count as f64 };
    }
}

fn normalize(steps: &mut [Step], n: usize, t: f64, mode: DurationMode) {
    match mode {
        DurationMode::Free => {}
        DurationMode::Allocation => rescale(steps, |_| true, t),
        DurationMode::PerMechanism => {
            for j in 0..n {
                rescale(steps, |s| s.primitive == j, t);
            }
        }
    }
}
