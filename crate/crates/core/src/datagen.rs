//! Benchmark distributions: parameter ranges, initial-condition families and
//! query times for every system.
//!
//! An initial condition is a pure function of `(system, family, seed)` and the
//! grid, so a dataset can be re-sampled on another resolution.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Boundary, Field, Grid};
use crate::primitives::dealias;
use crate::system::{PdeParams, System};

/// A union of closed intervals.
pub type Intervals = Vec<[f64; 2]>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub system: System,
    pub points: usize,
    pub train: usize,
    pub test_id: usize,
    pub test_ood: usize,
    /// Wall-bounded dam-break queries (shallow water only).
    #[serde(default)]
    pub dam_break: usize,
    /// Per parameter, in the order of [`PdeParams::to_vec`].
    pub id_ranges: Vec<Intervals>,
    pub ood_ranges: Vec<Intervals>,
    pub train_t: [f64; 2],
    pub id_t: [f64; 2],
    pub ood_t: [f64; 2],
    pub id_families: Vec<String>,
    pub ood_families: Vec<String>,
    /// Test trajectories store `snapshots` equispaced times ending at
    /// `snapshot_end * t`; the query time must be one of them.
    pub snapshots: usize,
    pub snapshot_end: f64,
    pub seed: u64,
}

fn iv(a: f64, b: f64) -> Intervals {
    vec![[a, b]]
}

fn iv2(a: [f64; 2], b: [f64; 2]) -> Intervals {
    vec![a, b]
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl BenchmarkSpec {
    /// Desk-scale defaults: 2,000 training and 200 + 200 test queries.
    pub fn default_for(system: System) -> Self {
        let base = |id_ranges, ood_ranges, train_t, eval: f64, id_f: &[&str], ood_f: &[&str]| BenchmarkSpec {
            system,
            points: system.default_points(),
            train: 2000,
            test_id: 200,
            test_ood: 200,
            dam_break: 0,
            id_ranges,
            ood_ranges,
            train_t,
            id_t: [eval, eval],
            ood_t: [eval, eval],
            id_families: names(id_f),
            ood_families: names(ood_f),
            snapshots: 1,
            snapshot_end: 1.0,
            seed: 0,
        };
        match system {
            System::Ad1d => base(
                vec![iv(0.5, 3.0), iv(0.01, 0.5)],
                vec![iv2([0.1, 0.5], [3.0, 5.0]), iv2([0.001, 0.01], [0.5, 1.0])],
                [0.1, 1.0],
                0.5,
                AD_ID,
                AD_OOD,
            ),
            System::Burgers1d => base(
                vec![iv(0.005, 0.1)],
                vec![iv2([0.002, 0.005], [0.1, 0.2])],
                [0.1, 1.0],
                0.5,
                BURGERS_ID,
                BURGERS_OOD,
            ),
            System::Swe1d => BenchmarkSpec {
                dam_break: 50,
                ..base(vec![iv(9.0, 11.0)], vec![iv2([7.0, 9.0], [11.0, 13.0])], [0.15, 0.4], 0.3, SWE_ID, SWE_OOD)
            },
            System::Adr2d => BenchmarkSpec {
                snapshots: 20,
                snapshot_end: 2.0,
                ..base(
                    vec![iv(0.2, 1.5), iv(0.2, 1.5), iv(0.05, 0.2), iv(0.05, 0.2), iv(0.1, 1.0)],
                    vec![
                        iv2([0.1, 0.2], [1.5, 2.5]),
                        iv2([0.1, 0.2], [1.5, 2.5]),
                        iv2([0.01, 0.05], [0.2, 0.4]),
                        iv2([0.01, 0.05], [0.2, 0.4]),
                        iv2([0.05, 0.1], [1.0, 2.5]),
                    ],
                    [0.1, 0.35],
                    0.2,
                    ADR_ID,
                    ADR_OOD,
                )
            },
            System::Ks1d => BenchmarkSpec {
                train: 200,
                test_id: 20,
                test_ood: 20,
                id_t: [5.0, 8.0],
                ood_t: [8.0, 20.0],
                snapshots: 40,
                ..base(vec![iv(24.0, 40.0)], vec![iv(40.0, 50.0)], [5.0, 8.0], 0.0, KS_FAMILIES, KS_FAMILIES)
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let n = self.system.n_params();
        for (label, ranges) in [("id_ranges", &self.id_ranges), ("ood_ranges", &self.ood_ranges)] {
            if ranges.len() != n {
                return bad(format!("{label}: {} needs {n} parameter ranges, got {}", self.system, ranges.len()));
            }
            for (j, r) in ranges.iter().enumerate() {
                if r.is_empty() {
                    return bad(format!("{label}[{j}]: empty interval list"));
                }
                for [a, b] in r {
                    if !(a.is_finite() && b.is_finite() && a <= b) {
                        return bad(format!("{label}[{j}]: bad range [{a}, {b}]"));
                    }
                }
            }
        }
        for (label, [a, b]) in [("train_t", self.train_t), ("id_t", self.id_t), ("ood_t", self.ood_t)] {
            if !(a > 0.0 && a <= b && b.is_finite()) {
                return bad(format!("{label}: bad range [{a}, {b}]"));
            }
        }
        for fam in self.id_families.iter().chain(&self.ood_families) {
            if !families(self.system).contains(&fam.as_str()) {
                return Err(Error::UnknownIcFamily(fam.clone()));
            }
        }
        if self.id_families.is_empty() || self.ood_families.is_empty() {
            return bad("family lists must not be empty".into());
        }
        if self.points < crate::field::MIN_POINTS {
            return bad(format!("points = {} is below the minimum", self.points));
        }
        if self.snapshots == 0 || !(self.snapshot_end >= 1.0) {
            return bad("snapshots must be positive and snapshot_end at least 1".into());
        }
        let ratio = self.snapshots as f64 / self.snapshot_end;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return bad("snapshots / snapshot_end must be an integer so the query time is a snapshot".into());
        }
        if self.dam_break > 0 && self.system != System::Swe1d {
            return bad("dam-break queries exist only for swe1d".into());
        }
        Ok(())
    }

    /// Snapshot times for query time `t`, and the index of `t` among them.
    pub fn snapshot_times(&self, t: f64) -> (Vec<f64>, usize) {
        let s = self.snapshots;
        let end = self.snapshot_end * t;
        let times: Vec<f64> = (1..=s).map(|i| end * i as f64 / s as f64).collect();
        let idx = (s as f64 / self.snapshot_end).round() as usize - 1;
        let mut times = times;
        times[idx] = t;
        (times, idx)
    }
}

/// Uniform draw from a union of intervals, weighted by length.
pub fn sample_intervals(rng: &mut impl Rng, r: &[[f64; 2]]) -> f64 {
    let total: f64 = r.iter().map(|[a, b]| b - a).sum();
    if total <= 0.0 {
        return r[rng.random_range(0..r.len())][0];
    }
    let mut x = rng.random::<f64>() * total;
    for [a, b] in r {
        if x <= b - a {
            return a + x;
        }
        x -= b - a;
    }
    r[r.len() - 1][1]
}

pub fn inside(x: f64, r: &[[f64; 2]]) -> bool {
    r.iter().any(|[a, b]| *a <= x && x <= *b)
}

pub fn sample_params(system: System, ranges: &[Intervals], rng: &mut impl Rng) -> Result<PdeParams> {
    let v: Vec<f64> = ranges.iter().map(|r| sample_intervals(rng, r)).collect();
    PdeParams::from_slice(system, &v)
}

const AD_ID: &[&str] = &["gaussian", "step", "sine", "multi-gaussian", "fourier"];
const AD_OOD: &[&str] = &["narrow-gaussian", "wide-gaussian", "high-frequency", "multi-step"];
const BURGERS_ID: &[&str] = &["step", "sine", "gaussian", "sawtooth", "tanh", "fourier"];
const BURGERS_OOD: &[&str] = &["sharp-tanh", "smooth-tanh", "large-amplitude", "multi-step", "high-frequency"];
const SWE_ID: &[&str] = &["gaussian-wave", "dam-break", "fourier", "step", "rarefaction"];
const SWE_OOD: &[&str] = &["extreme-froude", "transcritical", "hydraulic-jump", "standing-wave"];
const ADR_ID: &[&str] = &["gaussian", "step", "ring", "stripes", "multi-gaussian", "sigmoid"];
const ADR_OOD: &[&str] =
    &["narrow-gaussian", "wide-gaussian", "near-saturation", "extinction", "high-frequency", "sharp-front"];
const KS_FAMILIES: &[&str] = &["two-mode", "fourier"];
/// Family of the wall-bounded shallow-water transfer queries.
pub const DAM_BREAK_WALL: &str = "dam-break-wall";

/// Every family known for `system`.
pub fn families(system: System) -> Vec<&'static str> {
    let (a, b): (&[&str], &[&str]) = match system {
        System::Ad1d => (AD_ID, AD_OOD),
        System::Burgers1d => (BURGERS_ID, BURGERS_OOD),
        System::Swe1d => (SWE_ID, SWE_OOD),
        System::Adr2d => (ADR_ID, ADR_OOD),
        System::Ks1d => (KS_FAMILIES, &[]),
    };
    let mut v: Vec<&str> = a.iter().chain(b).copied().collect();
    if system == System::Swe1d {
        v.push(DAM_BREAK_WALL);
    }
    v
}

fn wrap(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

fn gauss(x: f64, x0: f64, s: f64, l: f64) -> f64 {
    let d = wrap(x - x0, l);
    (-d * d / (2.0 * s * s)).exp()
}

/// Periodic smoothed indicator of an arc of length `len` centred at `c`.
fn tophat(x: f64, c: f64, len: f64, w: f64, l: f64) -> f64 {
    let d = wrap(x - c, l).abs();
    0.5 * (1.0 - ((d - 0.5 * len) / w).tanh())
}

struct Draw(ChaCha8Rng);

impl Draw {
    fn u(&mut self, a: f64, b: f64) -> f64 {
        a + (b - a) * self.0.random::<f64>()
    }
    fn i(&mut self, a: usize, b: usize) -> usize {
        self.0.random_range(a..=b)
    }
    fn normal(&mut self) -> f64 {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut self.0)
    }
    fn sign(&mut self) -> f64 {
        if self.0.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }
}

/// Random low-mode cosine series normalized to peak amplitude `amp`.
fn fourier_series(d: &mut Draw, modes: usize, amp: f64, l: f64) -> impl Fn(f64) -> f64 {
    let terms: Vec<(f64, f64, f64)> =
        (1..=modes).map(|m| (d.normal() / m as f64, d.u(0.0, 2.0 * PI), 2.0 * PI * m as f64 / l)).collect();
    let eval = move |x: f64| terms.iter().map(|(a, p, k)| a * (k * x + p).cos()).sum::<f64>();
    let peak = (0..256).map(|i| eval(l * i as f64 / 256.0).abs()).fold(1e-12, f64::max);
    move |x| amp * eval(x) / peak
}

/// Initial condition of `family` for `system`, a pure function of `seed` and the grid.
pub fn sample_ic(system: System, family: &str, seed: u64, grid: &Grid) -> Result<Field> {
    if !families(system).contains(&family) {
        return Err(Error::UnknownIcFamily(family.to_string()));
    }
    let mut d = Draw(ChaCha8Rng::seed_from_u64(seed));
    let l = grid.length(0);
    let f = match system {
        System::Ad1d => Field::from_fn_1d(*grid, scalar_1d(&mut d, family, l, ScalarKind::Ad)),
        System::Burgers1d => {
            let u = Field::from_fn_1d(*grid, scalar_1d(&mut d, family, l, ScalarKind::Burgers));
            Field::new(*grid, 1, dealias(grid, u.values()))?
        }
        System::Ks1d => {
            let u = Field::from_fn_1d(*grid, ks_ic(&mut d, family, l));
            let v = dealias(grid, u.values());
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            Field::new(*grid, 1, v.into_iter().map(|x| x - mean).collect())?
        }
        System::Swe1d => swe_ic(&mut d, family, grid)?,
        System::Adr2d => Field::from_fn_2d(*grid, adr_ic(&mut d, family, l)),
    };
    Ok(f)
}

#[derive(Clone, Copy, PartialEq)]
enum ScalarKind {
    Ad,
    Burgers,
}

fn scalar_1d(d: &mut Draw, family: &str, l: f64, kind: ScalarKind) -> Box<dyn Fn(f64) -> f64> {
    let burgers = kind == ScalarKind::Burgers;
    let amp = if burgers { d.u(0.3, 1.0) } else { d.u(0.5, 1.5) };
    let c = d.u(0.0, l);
    match family {
        "gaussian" => {
            let s = d.u(0.05, 0.15) * l;
            let off = if burgers { d.u(-0.2, 0.2) } else { 0.0 };
            Box::new(move |x| off + amp * gauss(x, c, s, l))
        }
        "narrow-gaussian" => {
            let s = d.u(0.015, 0.03) * l;
            Box::new(move |x| amp * gauss(x, c, s, l))
        }
        "wide-gaussian" => {
            let s = d.u(0.2, 0.3) * l;
            Box::new(move |x| amp * gauss(x, c, s, l))
        }
        "step" => {
            let len = d.u(0.2, 0.5) * l;
            let w = 0.01 * l;
            let base = if burgers { d.u(-0.3, 0.0) } else { 0.0 };
            Box::new(move |x| base + amp * tophat(x, c, len, w, l))
        }
        "multi-step" => {
            let steps: Vec<(f64, f64, f64)> =
                (0..d.i(2, 3)).map(|_| (d.u(0.0, l), d.u(0.08, 0.2) * l, d.u(0.5, 1.0) * d.sign())).collect();
            let w = 0.01 * l;
            let amp = if burgers { d.u(0.8, 1.2) } else { amp };
            Box::new(move |x| steps.iter().map(|(c, len, a)| amp * a * tophat(x, *c, *len, w, l)).sum())
        }
        "sine" => {
            let m = d.i(1, 2) as f64;
            let p = d.u(0.0, 2.0 * PI);
            let off = d.u(-0.2, 0.2);
            Box::new(move |x| off + amp * (2.0 * PI * m * x / l + p).sin())
        }
        "large-amplitude" => {
            let m = d.i(1, 2) as f64;
            let p = d.u(0.0, 2.0 * PI);
            let amp = d.u(1.0, 1.5);
            Box::new(move |x| amp * (2.0 * PI * m * x / l + p).sin())
        }
        "high-frequency" => {
            let m = if burgers { d.i(3, 5) } else { d.i(5, 8) } as f64;
            let p = d.u(0.0, 2.0 * PI);
            let amp = if burgers { d.u(0.3, 0.8) } else { amp };
            Box::new(move |x| 0.5 + amp * (2.0 * PI * m * x / l + p).sin())
        }
        "multi-gaussian" => {
            let bumps: Vec<(f64, f64, f64)> =
                (0..d.i(2, 4)).map(|_| (d.u(0.0, l), d.u(0.04, 0.12) * l, d.u(0.3, 1.0))).collect();
            Box::new(move |x| bumps.iter().map(|(c, s, a)| a * gauss(x, *c, *s, l)).sum())
        }
        "fourier" => Box::new(fourier_series(d, 4, amp, l)),
        "sawtooth" => {
            // band-limited sawtooth, eight harmonics
            let p = d.u(0.0, l);
            Box::new(move |x| {
                (1..=8)
                    .map(|m| {
                        let m = m as f64;
                        (if m as usize % 2 == 1 { 1.0 } else { -1.0 }) * (2.0 * PI * m * (x - p) / l).sin() / m
                    })
                    .sum::<f64>()
                    * amp
                    * 2.0
                    / PI
            })
        }
        "tanh" | "sharp-tanh" | "smooth-tanh" => {
            let w = match family {
                "tanh" => d.u(0.025, 0.075),
                "sharp-tanh" => d.u(0.005, 0.015),
                _ => d.u(0.1, 0.15),
            } * l;
            let len = d.u(0.3, 0.7) * l;
            let amp = if family == "tanh" { amp } else { d.u(0.5, 1.2) };
            Box::new(move |x| amp * (2.0 * tophat(x, c, len, w, l) - 1.0))
        }
        _ => unreachable!("family list checked by caller"),
    }
}

fn ks_ic(d: &mut Draw, family: &str, l: f64) -> Box<dyn Fn(f64) -> f64> {
    match family {
        "two-mode" => {
            let modes: Vec<(f64, f64, f64)> = (0..2)
                .map(|_| (d.u(0.5, 1.5), 2.0 * PI * d.i(1, 12) as f64 / l, d.u(0.0, 2.0 * PI)))
                .collect();
            Box::new(move |x| modes.iter().map(|(a, k, p)| a * (k * x + p).cos()).sum())
        }
        _ => {
            let amp = d.u(0.5, 1.5);
            Box::new(fourier_series(d, 12, amp, l))
        }
    }
}

fn swe_ic(d: &mut Draw, family: &str, grid: &Grid) -> Result<Field> {
    let l = grid.length(0);
    let c = d.u(0.0, l);
    let (h, u): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>) = match family {
        "gaussian-wave" => {
            let (a, s) = (d.u(0.1, 0.4), d.u(0.3, 1.0));
            (Box::new(move |x| 1.0 + a * gauss(x, c, s, l)), Box::new(|_| 0.0))
        }
        "dam-break" => {
            let (a, len, w) = (d.u(0.2, 0.6), d.u(2.0, 5.0), d.u(0.2, 0.5));
            (Box::new(move |x| 1.0 + a * tophat(x, c, len, w, l)), Box::new(|_| 0.0))
        }
        "fourier" => {
            let (ah, au) = (d.u(0.05, 0.3), d.u(0.0, 0.3));
            let hh = fourier_series(d, 3, ah, l);
            let uu = fourier_series(d, 3, au, l);
            (Box::new(move |x| 1.0 + hh(x)), Box::new(uu))
        }
        "step" => {
            let (a, len, w, v) = (d.u(0.2, 0.5), d.u(2.0, 5.0), d.u(0.2, 0.4), d.u(-0.5, 0.5));
            (Box::new(move |x| 1.0 + a * tophat(x, c, len, w, l)), Box::new(move |_| v))
        }
        "rarefaction" => {
            let (v, len, w) = (d.u(0.2, 0.6), d.u(3.0, 6.0), d.u(0.3, 0.6));
            (Box::new(|_| 1.0), Box::new(move |x| v * (2.0 * tophat(x, c, len, w, l) - 1.0)))
        }
        "extreme-froude" => {
            let (a, s, v) = (d.u(0.1, 0.3), d.u(0.3, 1.0), d.u(1.5, 2.5) * d.sign());
            (Box::new(move |x| 1.0 + a * gauss(x, c, s, l)), Box::new(move |_| v))
        }
        "transcritical" => {
            let (a, s, v) = (d.u(0.1, 0.2), d.u(0.5, 1.0), d.u(1.8, 2.3) * d.sign());
            (Box::new(move |x| 0.5 + a * gauss(x, c, s, l)), Box::new(move |_| v))
        }
        "hydraulic-jump" => {
            let (a, len, v) = (d.u(0.5, 1.0), d.u(2.0, 5.0), d.u(0.5, 1.0));
            (
                Box::new(move |x| 1.0 + a * tophat(x, c, len, 0.1, l)),
                Box::new(move |x| v * (1.0 - 2.0 * tophat(x, c, len, 0.1, l))),
            )
        }
        "standing-wave" => {
            let (a, m) = (d.u(0.05, 0.15), d.i(6, 10) as f64);
            (Box::new(move |x| 1.0 + a * (2.0 * PI * m * x / l + c).cos()), Box::new(|_| 0.0))
        }
        DAM_BREAK_WALL => {
            let (hl, hr, x0) = (d.u(1.5, 2.5), d.u(0.5, 1.0), d.u(0.3, 0.7) * l);
            (Box::new(move |x| if x < x0 { hl } else { hr }), Box::new(|_| 0.0))
        }
        _ => unreachable!("family list checked by caller"),
    };
    let hf = Field::from_fn_1d(*grid, &h);
    let qf = Field::from_fn_1d(*grid, move |x| h(x) * u(x));
    Field::stack(&[hf, qf])
}

fn adr_ic(d: &mut Draw, family: &str, l: f64) -> Box<dyn Fn(f64, f64) -> f64> {
    let (cx, cy) = (d.u(0.0, l), d.u(0.0, l));
    let amp = d.u(0.5, 1.0);
    let g2 = move |x: f64, y: f64, cx: f64, cy: f64, s: f64| gauss(x, cx, s, l) * gauss(y, cy, s, l);
    match family {
        "gaussian" | "narrow-gaussian" | "wide-gaussian" => {
            let s = match family {
                "gaussian" => d.u(0.06, 0.15),
                "narrow-gaussian" => d.u(0.02, 0.04),
                _ => d.u(0.25, 0.35),
            } * l;
            Box::new(move |x, y| amp * g2(x, y, cx, cy, s))
        }
        "step" | "sharp-front" => {
            let len = d.u(0.3, 0.6) * l;
            let w = if family == "step" { d.u(0.02, 0.04) } else { 0.005 } * l;
            let along_x = d.0.random::<bool>();
            Box::new(move |x, y| amp * tophat(if along_x { x } else { y }, cx, len, w, l))
        }
        "ring" => {
            let (r0, s) = (d.u(0.15, 0.3) * l, d.u(0.03, 0.06) * l);
            Box::new(move |x, y| {
                let (dx, dy) = (wrap(x - cx, l), wrap(y - cy, l));
                let r = (dx * dx + dy * dy).sqrt();
                amp * (-(r - r0).powi(2) / (2.0 * s * s)).exp()
            })
        }
        "stripes" | "high-frequency" => {
            let (lo, hi) = if family == "stripes" { (1, 2) } else { (3, 5) };
            let (m, n) = (d.i(lo, hi) as f64, d.i(lo, hi) as f64 * d.sign());
            let p = d.u(0.0, 2.0 * PI);
            Box::new(move |x, y| 0.5 + 0.4 * amp * (2.0 * PI * (m * x + n * y) / l + p).sin())
        }
        "multi-gaussian" => {
            let bumps: Vec<(f64, f64, f64, f64)> =
                (0..d.i(2, 4)).map(|_| (d.u(0.0, l), d.u(0.0, l), d.u(0.05, 0.12) * l, d.u(0.3, 0.7))).collect();
            Box::new(move |x, y| bumps.iter().map(|(a, b, s, h)| h * g2(x, y, *a, *b, *s)).sum::<f64>().min(1.0))
        }
        "sigmoid" => {
            let len = d.u(0.3, 0.6) * l;
            let w = d.u(0.03, 0.08) * l;
            let c = cx + cy;
            Box::new(move |x, y| amp * tophat((x + y).rem_euclid(l), c, len, w, l))
        }
        "near-saturation" => {
            let s = d.u(0.08, 0.2) * l;
            let dip = d.u(0.1, 0.3);
            Box::new(move |x, y| 1.0 - dip * g2(x, y, cx, cy, s))
        }
        "extinction" => {
            let s = d.u(0.08, 0.2) * l;
            let a = d.u(0.005, 0.03);
            Box::new(move |x, y| a * g2(x, y, cx, cy, s))
        }
        _ => unreachable!("family list checked by caller"),
    }
}

/// Grid used by a query of `system` with `params`.
pub fn query_grid(system: System, params: &PdeParams, points: usize, family: &str) -> Result<Grid> {
    let boundary = if family == DAM_BREAK_WALL { Boundary::ReflectiveWall } else { Boundary::Periodic };
    system.grid(params, points, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::extract_features;
    use proptest::prelude::*;

    fn grid(system: System) -> Grid {
        let p = match system {
            System::Ks1d => PdeParams::Ks1d { w: 32.0 },
            _ => PdeParams::from_slice(system, &vec![0.5; system.n_params()]).unwrap(),
        };
        system.default_grid(&p).unwrap()
    }

    #[test]
    fn every_family_builds_finite_states() {
        for system in System::ALL {
            for fam in families(system) {
                let g = if fam == DAM_BREAK_WALL {
                    grid(system).with_boundary(Boundary::ReflectiveWall)
                } else {
                    grid(system)
                };
                for seed in 0..5 {
                    let u = sample_ic(system, fam, seed, &g).unwrap();
                    assert!(u.is_finite(), "{system} {fam}");
                    assert_eq!(u.channels(), system.channels());
                }
            }
        }
        assert!(matches!(sample_ic(System::Ad1d, "vortex", 0, &grid(System::Ad1d)), Err(Error::UnknownIcFamily(_))));
    }

    #[test]
    fn gaussian_pulse_has_one_interior_maximum() {
        let g = Grid::new_1d(256, 10.0, Boundary::Periodic).unwrap();
        for seed in 0..10 {
            let u = sample_ic(System::Ad1d, "gaussian", seed, &g).unwrap();
            let v = u.values();
            let n = v.len();
            let peaks = (0..n).filter(|&i| v[i] > v[(i + n - 1) % n] && v[i] >= v[(i + 1) % n]).count();
            assert_eq!(peaks, 1);
        }
    }

    #[test]
    fn ks_ics_have_zero_mean() {
        let g = grid(System::Ks1d);
        for fam in KS_FAMILIES {
            for seed in 0..10 {
                let u = sample_ic(System::Ks1d, fam, seed, &g).unwrap();
                assert!((u.values().iter().sum::<f64>() / u.values().len() as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shallow_water_heights_are_positive() {
        for fam in families(System::Swe1d) {
            let g = if fam == DAM_BREAK_WALL {
                grid(System::Swe1d).with_boundary(Boundary::ReflectiveWall)
            } else {
                grid(System::Swe1d)
            };
            for seed in 0..20 {
                let u = sample_ic(System::Swe1d, fam, seed, &g).unwrap();
                assert!(u.channel(0).iter().all(|h| *h > 0.0), "{fam}");
            }
        }
    }

    #[test]
    fn ics_are_deterministic_and_regriddable() {
        let g = grid(System::Burgers1d);
        let a = sample_ic(System::Burgers1d, "fourier", 7, &g).unwrap();
        assert_eq!(a, sample_ic(System::Burgers1d, "fourier", 7, &g).unwrap());
        let fine = sample_ic(System::Ad1d, "sine", 7, &Grid::new_1d(128, 10.0, Boundary::Periodic).unwrap()).unwrap();
        let coarse = sample_ic(System::Ad1d, "sine", 7, &grid(System::Ad1d)).unwrap();
        for i in 0..64 {
            assert!((fine.values()[2 * i] - coarse.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn default_specs_validate_and_ood_is_disjoint() {
        for system in System::ALL {
            let s = BenchmarkSpec::default_for(system);
            s.validate().unwrap();
            let (times, idx) = s.snapshot_times(0.3);
            assert_eq!(times[idx], 0.3);
            assert_eq!(times.len(), s.snapshots);
            let mut bad = s.clone();
            bad.id_ranges[0] = vec![[2.0, 1.0]];
            assert!(bad.validate().is_err());
        }
        let s = BenchmarkSpec::default_for(System::Adr2d);
        let (times, idx) = s.snapshot_times(0.2);
        assert_eq!(idx, 9);
        assert!((times[19] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn features_of_all_families_are_finite() {
        for system in System::ALL {
            let spec = BenchmarkSpec::default_for(system);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for fam in spec.id_families.iter().chain(&spec.ood_families) {
                let p = sample_params(system, &spec.id_ranges, &mut rng).unwrap();
                let g = query_grid(system, &p, spec.points, fam).unwrap();
                let u = sample_ic(system, fam, 3, &g).unwrap();
                let f = extract_features(&p, &u, 0.3).unwrap();
                assert!(f.iter().all(|v| v.is_finite()));
            }
        }
    }

    proptest! {
        #[test]
        fn parameter_draws_respect_their_split(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for system in System::ALL {
                let s = BenchmarkSpec::default_for(system);
                let id = sample_params(system, &s.id_ranges, &mut rng).unwrap().to_vec();
                let ood = sample_params(system, &s.ood_ranges, &mut rng).unwrap().to_vec();
                for j in 0..id.len() {
                    prop_assert!(inside(id[j], &s.id_ranges[j]));
                    prop_assert!(inside(ood[j], &s.ood_ranges[j]));
                    let interior = s.id_ranges[j].iter().any(|[a, b]| *a < ood[j] && ood[j] < *b);
                    prop_assert!(!interior);
                }
            }
        }
    }
}
