//! Scale-free regime features that condition the policy.
//!
//! All entries end with the query time. Ratios are log-compressed with
//! `ln(1 + x)` so that the extrapolation ranges stay in a trainable band.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::spectral::{forward, gradient, wavenumbers};
use crate::system::{PdeParams, System};

const EPS: f64 = 1e-8;

pub type FeatureVector = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    Dimensionless,
    RawIc,
}

impl FeatureSet {
    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Dimensionless => "dimensionless",
            FeatureSet::RawIc => "raw-ic",
        }
    }

    /// Input width for `system` on a grid with `points` nodes per channel.
    pub fn dim(self, system: System, points: usize) -> usize {
        match self {
            FeatureSet::Dimensionless => system.feature_dim(),
            FeatureSet::RawIc => system.channels() * points + 1,
        }
    }

    pub fn extract(self, params: &PdeParams, u0: &Field, t: f64) -> Result<FeatureVector> {
        match self {
            FeatureSet::Dimensionless => extract_features(params, u0, t),
            FeatureSet::RawIc => raw_ic_features(u0, t),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "dimensionless" => Ok(FeatureSet::Dimensionless),
            "raw-ic" | "raw" => Ok(FeatureSet::RawIc),
            _ => Err(Error::InvalidConfig(format!("unknown feature set `{s}`"))),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Squared coefficient of variation `Var(v) / mean(|v|)^2`, zero for a zero field.
pub fn cov2(v: &[f64]) -> f64 {
    let d = mean_abs(v);
    if d > 0.0 {
        variance(v) / (d * d)
    } else {
        0.0
    }
}

/// Scale-free gradient variance `L^2 Var(du) / Var(u)`, a squared
/// characteristic wavenumber of the state in units of the domain.
pub fn gradient_ratio(u: &[f64], du: &[f64], l: f64) -> f64 {
    let v = variance(u);
    if v > 0.0 {
        l * l * variance(du) / v
    } else {
        0.0
    }
}

fn ln1p(x: f64) -> f64 {
    x.max(0.0).ln_1p()
}

/// Péclet number `|c| L / max(D, eps)`.
pub fn peclet(c: f64, l: f64, d: f64) -> f64 {
    c.abs() * l / d.max(EPS)
}

/// Largest local Froude number `|u| / sqrt(g h)` of a shallow-water state.
pub fn max_froude(u: &Field, g: f64) -> f64 {
    let h = u.channel(0);
    let hu = u.channel(1);
    h.iter()
        .zip(hu)
        .map(|(&h, &q)| {
            let hh = h.max(EPS);
            (q / hh).abs() / (g * hh).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Energy-weighted mean angular wavenumber of a periodic 1D field.
pub fn spectral_centroid(u: &Field) -> f64 {
    let grid = u.grid();
    let spec = forward(grid, u.channel(0));
    let k = wavenumbers(grid.n(0), grid.length(0));
    let (mut num, mut den) = (0.0, 0.0);
    for (z, kk) in spec.iter().zip(&k).skip(1) {
        let e = z.norm_sqr();
        num += kk.abs() * e;
        den += e;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Dimensionless feature vector for a query.
pub fn extract_features(params: &PdeParams, u0: &Field, t: f64) -> Result<FeatureVector> {
    let system = params.system();
    crate::system::check_state(system, u0)?;
    let grid = u0.grid();
    let l = grid.length(0);
    let f = match *params {
        PdeParams::Ad1d { c, d } => {
            let du = gradient(u0, 0, 0);
            vec![ln1p(peclet(c, l, d)), ln1p(cov2(u0.channel(0))), ln1p(gradient_ratio(u0.channel(0), &du, l)), t]
        }
        PdeParams::Burgers1d { nu } => {
            let u = u0.channel(0);
            let amp = max_abs(u);
            let du = gradient(u0, 0, 0);
            let re = amp * l / nu.max(EPS);
            vec![ln1p(re), ln1p(max_abs(&du)), amp, t]
        }
        PdeParams::Swe1d { g } => {
            let h = u0.channel(0);
            let hbar = mean(h).max(EPS);
            vec![
                max_froude(u0, g),
                ln1p(cov2(h)),
                ln1p(variance(u0.channel(1)) / (g * hbar * hbar * hbar)),
                t,
            ]
        }
        PdeParams::Adr2d { cx, cy, dx, dy, r } => {
            let ly = grid.length(1);
            let speed = (cx * cx + cy * cy).sqrt();
            let da = r * l / speed.max(EPS);
            let gx = gradient(u0, 0, 0);
            let gy = gradient(u0, 0, 1);
            vec![
                ln1p(peclet(cx, l, dx)),
                ln1p(peclet(cy, ly, dy)),
                ln1p(da),
                ln1p(cov2(u0.channel(0))),
                ln1p(gradient_ratio(u0.channel(0), &gx, l)),
                ln1p(gradient_ratio(u0.channel(0), &gy, ly)),
                t,
            ]
        }
        PdeParams::Ks1d { w } => vec![w / 40.0, ln1p(cov2(u0.channel(0))), spectral_centroid(u0), t / 10.0],
    };
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::PolicyNumerical);
    }
    Ok(f)
}

/// Flattened initial state followed by the query time.
pub fn raw_ic_features(u0: &Field, t: f64) -> Result<FeatureVector> {
    let mut f = u0.values().to_vec();
    f.push(t);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Boundary, Grid};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn g1(n: usize, l: f64) -> Grid {
        Grid::new_1d(n, l, Boundary::Periodic).unwrap()
    }

    #[test]
    fn peclet_feature_of_reference_case() {
        let u0 = Field::from_fn_1d(g1(64, 10.0), |x| (2.0 * PI * x / 10.0).sin());
        let f = extract_features(&PdeParams::Ad1d { c: 2.0, d: 0.1 }, &u0, 0.5).unwrap();
        assert!((f[0] - 201f64.ln()).abs() < 1e-12);
        assert_eq!(f.len(), 4);
        assert_eq!(f[3], 0.5);
    }

    #[test]
    fn lake_at_rest_has_zero_froude() {
        let g = g1(64, 10.0);
        let u0 = Field::stack(&[Field::from_fn_1d(g, |_| 1.0), Field::from_fn_1d(g, |_| 0.0)]).unwrap();
        let f = extract_features(&PdeParams::Swe1d { g: 9.81 }, &u0, 0.3).unwrap();
        assert_eq!(f[0], 0.0);
    }

    #[test]
    fn constant_state_has_zero_variance_features() {
        let u0 = Field::from_fn_1d(g1(64, 10.0), |_| 0.7);
        let f = extract_features(&PdeParams::Ad1d { c: 1.0, d: 0.1 }, &u0, 0.5).unwrap();
        assert!(f[1].abs() < 1e-15 && f[2].abs() < 1e-15);
        let g2 = Grid::new_2d(16, 16, 1.0, 1.0, Boundary::Periodic).unwrap();
        let u2 = Field::from_fn_2d(g2, |_, _| 0.3);
        let p = PdeParams::Adr2d { cx: 0.5, cy: 0.5, dx: 0.1, dy: 0.1, r: 0.5 };
        let f = extract_features(&p, &u2, 0.2).unwrap();
        assert_eq!(f.len(), 7);
        assert!(f[3..6].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn raw_features_flatten_state() {
        let g = g1(64, 10.0);
        let z = Field::zeros(g, 1);
        let f = raw_ic_features(&z, 0.4).unwrap();
        assert_eq!(f.len(), 65);
        assert!(f[..64].iter().all(|v| *v == 0.0));
        assert_eq!(f[64], 0.4);
        let u = Field::from_fn_1d(g, |x| x.sin());
        let a = raw_ic_features(&u, 0.4).unwrap();
        let b = raw_ic_features(&u.scaled(2.0), 0.4).unwrap();
        for i in 0..64 {
            assert_eq!(b[i], 2.0 * a[i]);
        }
        let swe = Field::zeros(g, 2);
        assert_eq!(FeatureSet::RawIc.extract(&PdeParams::Swe1d { g: 9.8 }, &swe, 0.3).unwrap().len(), 129);
    }

    #[test]
    fn features_are_resolution_consistent() {
        let ic = |x: f64| 1.0 + 0.5 * (2.0 * PI * x / 10.0).sin() + 0.2 * (6.0 * PI * x / 10.0).cos();
        let p = PdeParams::Ad1d { c: 1.2, d: 0.05 };
        let a = extract_features(&p, &Field::from_fn_1d(g1(64, 10.0), ic), 0.5).unwrap();
        let b = extract_features(&p, &Field::from_fn_1d(g1(128, 10.0), ic), 0.5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-3);
        }
        let pb = PdeParams::Burgers1d { nu: 0.01 };
        let icb = |x: f64| (PI * x).sin() + 0.3;
        let a = extract_features(&pb, &Field::from_fn_1d(g1(64, 2.0), icb), 0.5).unwrap();
        let b = extract_features(&pb, &Field::from_fn_1d(g1(128, 2.0), icb), 0.5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-3, "{a:?} {b:?}");
        }
    }

    proptest! {
        #[test]
        fn coefficient_of_variation_is_scale_free(s in 0.01f64..100.0, phase in 0.0f64..6.0) {
            let g = g1(64, 10.0);
            let u = Field::from_fn_1d(g, |x| 1.0 + 0.5 * (2.0 * PI * x / 10.0 + phase).sin());
            let p = PdeParams::Ad1d { c: 1.0, d: 0.1 };
            let a = extract_features(&p, &u, 0.5).unwrap();
            let b = extract_features(&p, &u.scaled(s), 0.5).unwrap();
            prop_assert!((a[1] - b[1]).abs() < 1e-12);
            prop_assert!((a[2] - b[2]).abs() < 1e-12);
        }
    }
}
