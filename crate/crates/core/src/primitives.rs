//! Numerical sub-flows, one per physical mechanism.
//!
//! Every primitive advances a state by an arbitrary duration `tau >= 0` and
//! returns the input unchanged (bit for bit) when `tau == 0`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Boundary, Field, Grid};
use crate::spectral::{dealias_mask, derivative_wavenumbers, forward, inverse, square_padded, wavenumbers};
use crate::swe::{self, Part};
use crate::system::{check_state, PdeParams, System};
use crate::timestep::ssprk3;

/// Hard cap on the number of substeps of a single primitive call.
pub const STIFFNESS_CAP: u64 = 1_000_000;

/// Order reported by primitives that are exact in time.
pub const EXACT_ORDER: u32 = u32::MAX;

const BLOWUP: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Advection,
    Diffusion,
    Reaction,
    NonlinearAdvection,
    ViscousDiffusion,
    WaveAdvection,
    Gravity,
    KsLinear,
    KsNonlinear,
}

impl Mechanism {
    pub const ALL: [Mechanism; 9] = [
        Mechanism::Advection,
        Mechanism::Diffusion,
        Mechanism::Reaction,
        Mechanism::NonlinearAdvection,
        Mechanism::ViscousDiffusion,
        Mechanism::WaveAdvection,
        Mechanism::Gravity,
        Mechanism::KsLinear,
        Mechanism::KsNonlinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Advection => "advection",
            Mechanism::Diffusion => "diffusion",
            Mechanism::Reaction => "reaction",
            Mechanism::NonlinearAdvection => "nonlinear-advection",
            Mechanism::ViscousDiffusion => "viscous-diffusion",
            Mechanism::WaveAdvection => "wave-advection",
            Mechanism::Gravity => "gravity",
            Mechanism::KsLinear => "ks-linear",
            Mechanism::KsNonlinear => "ks-nonlinear",
        }
    }

    pub fn supports(self, system: System) -> bool {
        use Mechanism::*;
        match self {
            Advection | Diffusion => matches!(system, System::Ad1d | System::Adr2d),
            Reaction => matches!(system, System::Ad1d | System::Adr2d | System::Swe1d),
            NonlinearAdvection | ViscousDiffusion => system == System::Burgers1d,
            WaveAdvection | Gravity => system == System::Swe1d,
            KsLinear | KsNonlinear => system == System::Ks1d,
        }
    }

    fn wall_capable(self) -> bool {
        matches!(self, Mechanism::WaveAdvection | Mechanism::Gravity | Mechanism::Reaction)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mechanism `{s}`")))
    }
}

/// How a primitive chooses its number of internal steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SubstepPolicy {
    /// Closed-form flow, no substeps.
    Exact,
    /// `dt = courant * h / max signal speed`.
    Cfl { courant: f64 },
    /// `dt = increment / rate` for pointwise kinetics.
    RateLimited { increment: f64 },
    /// A fixed number of equal substeps.
    Fixed { count: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub system: System,
    pub mechanism: Mechanism,
    pub boundary: Boundary,
    pub substeps: SubstepPolicy,
    /// Formal order in time; [`EXACT_ORDER`] for closed-form flows.
    pub order: u32,
    /// Rate for reaction primitives that are not tied to a PDE parameter.
    pub reaction_rate: Option<f64>,
}

impl PrimitiveSpec {
    /// Canonical primitive for `mechanism` in `system`, periodic boundary.
    pub fn new(system: System, mechanism: Mechanism) -> Result<Self> {
        if !mechanism.supports(system) {
            return Err(Error::MechanismMismatch { system, mechanism: mechanism.name().into() });
        }
        use Mechanism::*;
        let (substeps, order) = match mechanism {
            Advection | Diffusion | ViscousDiffusion | KsLinear => (SubstepPolicy::Exact, EXACT_ORDER),
            Reaction => (SubstepPolicy::RateLimited { increment: 0.1 }, 4),
            NonlinearAdvection | KsNonlinear | WaveAdvection | Gravity => (SubstepPolicy::Cfl { courant: 0.4 }, 3),
        };
        Ok(Self { system, mechanism, boundary: Boundary::Periodic, substeps, order, reaction_rate: None })
    }

    pub fn with_reaction_rate(mut self, rate: f64) -> Self {
        self.reaction_rate = Some(rate);
        self
    }

    pub fn is_exact(&self) -> bool {
        self.substeps == SubstepPolicy::Exact
    }

    pub fn label(&self) -> String {
        match self.boundary {
            Boundary::Periodic => self.mechanism.name().to_string(),
            b => format!("{}@{b}", self.mechanism.name()),
        }
    }
}

/// Canonical dictionary for each benchmark system, in Strang order.
pub fn default_dictionary(system: System) -> Vec<PrimitiveSpec> {
    use Mechanism::*;
    let mechs: &[Mechanism] = match system {
        System::Ad1d => &[Advection, Diffusion],
        System::Burgers1d => &[NonlinearAdvection, ViscousDiffusion],
        System::Swe1d => &[WaveAdvection, Gravity],
        System::Adr2d => &[Advection, Diffusion, Reaction],
        System::Ks1d => &[KsLinear, KsNonlinear],
    };
    mechs.iter().map(|&m| PrimitiveSpec::new(system, m).expect("canonical mechanism")).collect()
}

/// Returns the same primitive with a different boundary treatment.
pub fn swap_boundary_variant(spec: &PrimitiveSpec, boundary: Boundary) -> Result<PrimitiveSpec> {
    if spec.system != System::Swe1d {
        return Err(Error::BoundarySwapUnsupported(spec.system));
    }
    Ok(PrimitiveSpec { boundary, ..*spec })
}

/// Substep selection for one call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Substeps {
    /// Use the spec's policy with the step size divided by `refine`.
    Auto { refine: u64 },
    /// Exactly this many equal substeps (ignored by exact flows).
    Fixed(u64),
}

impl Default for Substeps {
    fn default() -> Self {
        Substeps::Auto { refine: 1 }
    }
}

pub fn apply_primitive(spec: &PrimitiveSpec, params: &PdeParams, u: &Field, tau: f64) -> Result<Field> {
    apply_primitive_with(spec, params, u, tau, Substeps::default())
}

pub fn apply_primitive_with(
    spec: &PrimitiveSpec,
    params: &PdeParams,
    u: &Field,
    tau: f64,
    substeps: Substeps,
) -> Result<Field> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidDuration(tau));
    }
    validate(spec, params, u)?;
    if tau == 0.0 {
        return Ok(u.clone());
    }
    let grid = *u.grid();
    let values = match spec.mechanism {
        Mechanism::Advection => {
            let (cx, cy) = match *params {
                PdeParams::Ad1d { c, .. } => (c, 0.0),
                PdeParams::Adr2d { cx, cy, .. } => (cx, cy),
                _ => unreachable!("checked by validate"),
            };
            advect_exact(&grid, u.values(), cx, cy, tau)
        }
        Mechanism::Diffusion | Mechanism::ViscousDiffusion => {
            let (dx, dy) = match *params {
                PdeParams::Ad1d { d, .. } => (d, d),
                PdeParams::Adr2d { dx, dy, .. } => (dx, dy),
                PdeParams::Burgers1d { nu } => (nu, nu),
                _ => unreachable!("checked by validate"),
            };
            diffuse_exact(&grid, u.values(), dx, dy, tau)
        }
        Mechanism::KsLinear => ks_linear_exact(&grid, u.values(), tau),
        Mechanism::Reaction => {
            let rate = reaction_rate(spec, params)?;
            let n = resolve(spec, substeps, || rate.abs() * tau)?;
            let mut out = u.values().to_vec();
            let np = grid.total_points();
            logistic_rk4(&mut out[..np], rate, tau, n);
            out
        }
        Mechanism::NonlinearAdvection | Mechanism::KsNonlinear => {
            let h = grid.spacing(0);
            let n = resolve(spec, substeps, || u.max_abs() * tau / h)?;
            spectral_transport(&grid, u.values(), tau, n)
        }
        Mechanism::WaveAdvection | Mechanism::Gravity => {
            let g = match *params {
                PdeParams::Swe1d { g } => g,
                _ => unreachable!("checked by validate"),
            };
            let part = if spec.mechanism == Mechanism::WaveAdvection { Part::Transport } else { Part::Gravity };
            swe_flow(spec, &grid, u.values(), g, part, tau, substeps)?
        }
    };
    Field::new(grid, u.channels(), values)
}

fn validate(spec: &PrimitiveSpec, params: &PdeParams, u: &Field) -> Result<()> {
    if !spec.mechanism.supports(spec.system) || params.system() != spec.system {
        return Err(Error::MechanismMismatch { system: params.system(), mechanism: spec.label() });
    }
    if spec.boundary != Boundary::Periodic && !spec.mechanism.wall_capable() {
        return Err(Error::BoundaryUnsupported);
    }
    check_state(spec.system, u)
}

fn reaction_rate(spec: &PrimitiveSpec, params: &PdeParams) -> Result<f64> {
    match (spec.reaction_rate, params) {
        (Some(r), _) => Ok(r),
        (None, PdeParams::Adr2d { r, .. }) => Ok(*r),
        _ => Err(Error::InvalidConfig(format!("reaction primitive for {} needs an explicit rate", spec.system))),
    }
}

/// Number of substeps for a call. `work` is the dimensionless amount of
/// motion (speed * tau / h, or rate * tau) that the policy has to resolve.
fn resolve(spec: &PrimitiveSpec, substeps: Substeps, work: impl FnOnce() -> f64) -> Result<u64> {
    let n = match substeps {
        Substeps::Fixed(n) => n.max(1) as f64,
        Substeps::Auto { refine } => {
            let base = match spec.substeps {
                SubstepPolicy::Exact => 1.0,
                SubstepPolicy::Fixed { count } => count.max(1) as f64,
                SubstepPolicy::Cfl { courant: s } | SubstepPolicy::RateLimited { increment: s } => {
                    (work() / s).ceil().max(1.0)
                }
            };
            base * refine.max(1) as f64
        }
    };
    if !n.is_finite() || n > STIFFNESS_CAP as f64 {
        return Err(Error::StiffnessCap { substeps: if n.is_finite() { n as u64 } else { u64::MAX } });
    }
    Ok(n as u64)
}

/// Nominal substep count a call would use (1 for exact flows).
pub fn substep_count(spec: &PrimitiveSpec, params: &PdeParams, u: &Field, tau: f64) -> Result<u64> {
    validate(spec, params, u)?;
    let grid = u.grid();
    resolve(spec, Substeps::default(), || match spec.mechanism {
        Mechanism::Reaction => reaction_rate(spec, params).map(|r| r.abs() * tau).unwrap_or(0.0),
        Mechanism::NonlinearAdvection | Mechanism::KsNonlinear => u.max_abs() * tau / grid.spacing(0),
        Mechanism::WaveAdvection | Mechanism::Gravity => {
            let g = match *params {
                PdeParams::Swe1d { g } => g,
                _ => 1.0,
            };
            let part = if spec.mechanism == Mechanism::WaveAdvection { Part::Transport } else { Part::Gravity };
            swe::max_speed(u.values(), g, part) * tau / grid.spacing(0)
        }
        _ => 0.0,
    })
}

fn spectral_apply(grid: &Grid, data: &[f64], mult: impl Fn(f64, f64) -> Complex64) -> Vec<f64> {
    let mut spec = forward(grid, data);
    let kx = wavenumbers(grid.n(0), grid.length(0));
    let (ny, ky) = if grid.dim() == 2 { (grid.n(1), wavenumbers(grid.n(1), grid.length(1))) } else { (1, vec![0.0]) };
    for (i, &a) in kx.iter().enumerate() {
        for (j, &b) in ky.iter().enumerate() {
            spec[i * ny + j] *= mult(a, b);
        }
    }
    inverse(grid, &spec)
}

/// Exact translation by `(cx, cy) * tau` as a Fourier phase shift. Taking the
/// real part of the inverse keeps the Nyquist mode real.
pub(crate) fn advect_exact(grid: &Grid, data: &[f64], cx: f64, cy: f64, tau: f64) -> Vec<f64> {
    spectral_apply(grid, data, |a, b| Complex64::from_polar(1.0, -(a * cx + b * cy) * tau))
}

pub(crate) fn diffuse_exact(grid: &Grid, data: &[f64], dx: f64, dy: f64, tau: f64) -> Vec<f64> {
    spectral_apply(grid, data, |a, b| Complex64::new((-(dx * a * a + dy * b * b) * tau).exp(), 0.0))
}

fn ks_linear_exact(grid: &Grid, data: &[f64], tau: f64) -> Vec<f64> {
    spectral_apply(grid, data, |k, _| Complex64::new(((k * k - k * k * k * k) * tau).exp(), 0.0))
}

fn logistic_rk4(u: &mut [f64], r: f64, tau: f64, n: u64) {
    let dt = tau / n as f64;
    let f = |v: f64| r * v * (1.0 - v);
    for v in u.iter_mut() {
        let mut x = *v;
        for _ in 0..n {
            let k1 = f(x);
            let k2 = f(x + 0.5 * dt * k1);
            let k3 = f(x + 0.5 * dt * k2);
            let k4 = f(x + dt * k3);
            x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !x.is_finite() || x.abs() > BLOWUP {
                break;
            }
        }
        *v = x;
    }
}

/// Spectrum-space right-hand side of `u_t = -(u^2/2)_x` restricted to the
/// two-thirds band.
pub(crate) fn transport_rhs(v: &[Complex64], k: &[f64], mask: &[bool]) -> Vec<Complex64> {
    let sq = square_padded(v);
    sq.iter()
        .zip(k)
        .zip(mask)
        .map(|((z, &kk), &keep)| if keep { *z * Complex64::new(0.0, -0.5 * kk) } else { Complex64::new(0.0, 0.0) })
        .collect()
}

/// Projects a 1D spectrum onto the two-thirds band.
pub(crate) fn project(v: &mut [Complex64]) {
    let mask = dealias_mask(v.len());
    for (z, keep) in v.iter_mut().zip(mask) {
        if !keep {
            *z = Complex64::new(0.0, 0.0);
        }
    }
}

/// Projects real 1D data onto the two-thirds band.
pub fn dealias(grid: &Grid, data: &[f64]) -> Vec<f64> {
    let mut s = forward(grid, data);
    project(&mut s);
    inverse(grid, &s)
}

fn spectral_transport(grid: &Grid, data: &[f64], tau: f64, n: u64) -> Vec<f64> {
    let k = derivative_wavenumbers(grid.n(0), grid.length(0));
    let mask = dealias_mask(grid.n(0));
    let mut v = forward(grid, data);
    project(&mut v);
    let dt = tau / n as f64;
    let mut rhs = |w: &[Complex64]| transport_rhs(w, &k, &mask);
    for _ in 0..n {
        v = ssprk3(&v, dt, &mut rhs);
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            break;
        }
    }
    inverse(grid, &v)
}

fn swe_flow(
    spec: &PrimitiveSpec,
    grid: &Grid,
    data: &[f64],
    g: f64,
    part: Part,
    tau: f64,
    substeps: Substeps,
) -> Result<Vec<f64>> {
    let dx = grid.spacing(0);
    let boundary = spec.boundary;
    let mut state = data.to_vec();
    let mut rhs = |s: &[f64]| swe::rhs(s, g, dx, part, boundary);
    let blown = |s: &[f64]| s.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP);
    let uniform = match (substeps, spec.substeps) {
        (Substeps::Fixed(n), _) => Some(n.max(1)),
        (Substeps::Auto { refine }, SubstepPolicy::Fixed { count }) => Some(count.max(1) * refine.max(1)),
        _ => None,
    };
    match uniform {
        Some(n) => {
            let dt = tau / n as f64;
            for _ in 0..n {
                state = ssprk3(&state, dt, &mut rhs);
                if blown(&state) {
                    break;
                }
            }
        }
        None => {
            let refine = match substeps {
                Substeps::Auto { refine } => refine,
                Substeps::Fixed(_) => 1,
            };
            let courant = match spec.substeps {
                SubstepPolicy::Cfl { courant } => courant,
                _ => 0.4,
            } / refine.max(1) as f64;
            let estimate = swe::max_speed(&state, g, part) * tau / (courant * dx);
            if estimate > STIFFNESS_CAP as f64 {
                return Err(Error::StiffnessCap { substeps: estimate as u64 });
            }
            let mut t = 0.0;
            let mut count = 0u64;
            while t < tau {
                let s = swe::max_speed(&state, g, part);
                if !s.is_finite() {
                    break;
                }
                let remaining = tau - t;
                let dt = if s > 0.0 { (courant * dx / s).min(remaining) } else { remaining };
                // avoid a sliver step from rounding
                let last = remaining - dt <= 1e-12 * tau;
                let dt = if last { remaining } else { dt };
                state = ssprk3(&state, dt, &mut rhs);
                t += dt;
                count += 1;
                if last || blown(&state) {
                    break;
                }
                if count > STIFFNESS_CAP {
                    return Err(Error::StiffnessCap { substeps: count });
                }
            }
        }
    }
    Ok(state)
}

/// Empirical order of a primitive: log2 of the error ratio between `n` and
/// `2n` substeps against a run with `20n` substeps.
pub fn primitive_convergence_order(spec: &PrimitiveSpec, params: &PdeParams, u: &Field, tau: f64) -> Result<f64> {
    let n = substep_count(spec, params, u, tau)?;
    let coarse = apply_primitive_with(spec, params, u, tau, Substeps::Fixed(n))?;
    let fine = apply_primitive_with(spec, params, u, tau, Substeps::Fixed(2 * n))?;
    let reference = apply_primitive_with(spec, params, u, tau, Substeps::Fixed(20 * n))?;
    let err = |a: &Field| a.values().iter().zip(reference.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let (e1, e2) = (err(&coarse), err(&fine));
    let floor = 1e-13 * u.max_abs().max(1.0);
    if e2 <= floor || e1 <= floor {
        return Err(Error::OrderUnmeasurable { error: e2 });
    }
    Ok((e1 / e2).log2())
}
