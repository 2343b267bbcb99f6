//! Benchmark systems, their parameters and the query type.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Boundary, Field, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum System {
    #[serde(rename = "ad1d")]
    Ad1d,
    #[serde(rename = "burgers1d")]
    Burgers1d,
    #[serde(rename = "swe1d")]
    Swe1d,
    #[serde(rename = "adr2d")]
    Adr2d,
    #[serde(rename = "ks1d")]
    Ks1d,
}

impl System {
    pub const ALL: [System; 5] = [System::Ad1d, System::Burgers1d, System::Swe1d, System::Adr2d, System::Ks1d];

    pub fn name(self) -> &'static str {
        match self {
            System::Ad1d => "ad1d",
            System::Burgers1d => "burgers1d",
            System::Swe1d => "swe1d",
            System::Adr2d => "adr2d",
            System::Ks1d => "ks1d",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            System::Swe1d => 2,
            _ => 1,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            System::Adr2d => 2,
            _ => 1,
        }
    }

    /// Length of the dimensionless feature vector.
    pub fn feature_dim(self) -> usize {
        match self {
            System::Adr2d => 7,
            _ => 4,
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            System::Ad1d => 2,
            System::Adr2d => 5,
            _ => 1,
        }
    }

    pub fn default_points(self) -> usize {
        match self {
            System::Adr2d => 32,
            System::Ks1d => 128,
            _ => 64,
        }
    }

    /// Domain length for this system. KS depends on the width multiplier.
    pub fn domain_length(self, params: &PdeParams) -> f64 {
        match (self, params) {
            (System::Ad1d, _) | (System::Swe1d, _) => 10.0,
            (System::Burgers1d, _) => 2.0,
            (System::Adr2d, _) => 1.0,
            (System::Ks1d, PdeParams::Ks1d { w }) => 2.0 * std::f64::consts::PI * w,
            (System::Ks1d, _) => 2.0 * std::f64::consts::PI,
        }
    }

    pub fn grid(self, params: &PdeParams, n: usize, boundary: Boundary) -> Result<Grid> {
        let l = self.domain_length(params);
        match self.dim() {
            1 => Grid::new_1d(n, l, boundary),
            _ => Grid::new_2d(n, n, l, l, boundary),
        }
    }

    pub fn default_grid(self, params: &PdeParams) -> Result<Grid> {
        self.grid(params, self.default_points(), Boundary::Periodic)
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        System::ALL
            .into_iter()
            .find(|sys| sys.name() == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown system `{s}`")))
    }
}

/// Physical parameters of one PDE instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "lowercase")]
pub enum PdeParams {
    Ad1d { c: f64, d: f64 },
    Burgers1d { nu: f64 },
    Swe1d { g: f64 },
    Adr2d { cx: f64, cy: f64, dx: f64, dy: f64, r: f64 },
    Ks1d { w: f64 },
}

impl PdeParams {
    pub fn system(&self) -> System {
        match self {
            PdeParams::Ad1d { .. } => System::Ad1d,
            PdeParams::Burgers1d { .. } => System::Burgers1d,
            PdeParams::Swe1d { .. } => System::Swe1d,
            PdeParams::Adr2d { .. } => System::Adr2d,
            PdeParams::Ks1d { .. } => System::Ks1d,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            PdeParams::Ad1d { c, d } => vec![c, d],
            PdeParams::Burgers1d { nu } => vec![nu],
            PdeParams::Swe1d { g } => vec![g],
            PdeParams::Adr2d { cx, cy, dx, dy, r } => vec![cx, cy, dx, dy, r],
            PdeParams::Ks1d { w } => vec![w],
        }
    }

    pub fn from_slice(system: System, v: &[f64]) -> Result<Self> {
        if v.len() != system.n_params() {
            return Err(Error::InvalidConfig(format!(
                "{system} takes {} parameters, got {}",
                system.n_params(),
                v.len()
            )));
        }
        let p = match system {
            System::Ad1d => PdeParams::Ad1d { c: v[0], d: v[1] },
            System::Burgers1d => PdeParams::Burgers1d { nu: v[0] },
            System::Swe1d => PdeParams::Swe1d { g: v[0] },
            System::Adr2d => PdeParams::Adr2d { cx: v[0], cy: v[1], dx: v[2], dy: v[3], r: v[4] },
            System::Ks1d => PdeParams::Ks1d { w: v[0] },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.to_vec();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite parameter in {self:?}")));
        }
        let ok = match *self {
            PdeParams::Ad1d { d, .. } => d >= 0.0,
            PdeParams::Burgers1d { nu } => nu >= 0.0,
            PdeParams::Swe1d { g } => g > 0.0,
            PdeParams::Adr2d { dx, dy, .. } => dx >= 0.0 && dy >= 0.0,
            PdeParams::Ks1d { w } => w > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("parameter out of range in {self:?}")))
        }
    }
}

/// A PDE instance: parameters, initial state and query time.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub params: PdeParams,
    pub u0: Field,
    pub t: f64,
}

impl Query {
    pub fn new(params: PdeParams, u0: Field, t: f64) -> Result<Self> {
        params.validate()?;
        check_state(params.system(), &u0)?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidDuration(t));
        }
        Ok(Self { params, u0, t })
    }

    pub fn system(&self) -> System {
        self.params.system()
    }
}

/// Checks that a field has the channel count and dimension of `system`.
pub fn check_state(system: System, u: &Field) -> Result<()> {
    if u.channels() != system.channels() || u.grid().dim() != system.dim() {
        return Err(Error::StateShape {
            expected: format!("{} channel(s) in {}D for {system}", system.channels(), system.dim()),
            found: format!("{} channel(s) in {}D", u.channels(), u.grid().dim()),
        });
    }
    Ok(())
}
