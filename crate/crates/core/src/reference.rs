//! Trusted solvers: the analytic advection–diffusion flow, fully coupled
//! fine-step integration, and ETDRK4 for Kuramoto–Sivashinsky.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Field, Grid};
use crate::primitives::{advect_exact, diffuse_exact, project, transport_rhs};
use crate::spectral::{dealias_mask, derivative_wavenumbers, forward, inverse, wavenumbers};
use crate::swe::{self, Part};
use crate::system::{check_state, PdeParams, System};
use crate::timestep::{rk4, ssprk3};

const BLOWUP: f64 = 1e6;

/// Snapshots of a solution at increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&Field> {
        self.fields.last()
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDuration(t))
    }
}

/// Exact periodic advection–diffusion in Fourier space. Accepts 1D AD and
/// 2D ADR parameters with `r = 0`.
pub fn solve_exact_ad(params: &PdeParams, u0: &Field, t: f64) -> Result<Field> {
    check_time(t)?;
    check_state(params.system(), u0)?;
    if !u0.grid().is_periodic() {
        return Err(Error::BoundaryUnsupported);
    }
    let (cx, cy, dx, dy) = match *params {
        PdeParams::Ad1d { c, d } => (c, 0.0, d, d),
        PdeParams::Adr2d { cx, cy, dx, dy, r } if r == 0.0 => (cx, cy, dx, dy),
        _ => return Err(Error::NotApplicable("analytic solution exists only for advection-diffusion")),
    };
    if t == 0.0 {
        return Ok(u0.clone());
    }
    let grid = *u0.grid();
    let moved = advect_exact(&grid, u0.values(), cx, cy, t);
    Field::new(grid, 1, diffuse_exact(&grid, &moved, dx, dy, t))
}

/// Fully coupled method-of-lines reference at time `t`.
pub fn solve_coupled_finestep(params: &PdeParams, u0: &Field, t: f64) -> Result<Field> {
    solve_coupled_finestep_with(params, u0, t, 1)
}

/// As [`solve_coupled_finestep`] with the step size divided by `refine`.
pub fn solve_coupled_finestep_with(params: &PdeParams, u0: &Field, t: f64, refine: u64) -> Result<Field> {
    let mut out = solve_coupled_at_times(params, u0, &[t], refine)?;
    Ok(out.pop().expect("one time requested"))
}

/// Coupled reference evaluated at each of the sorted `times`.
pub fn solve_coupled_at_times(params: &PdeParams, u0: &Field, times: &[f64], refine: u64) -> Result<Vec<Field>> {
    let system = params.system();
    check_state(system, u0)?;
    for w in times.windows(2) {
        if w[1] < w[0] {
            return Err(Error::InvalidConfig("query times must be sorted".into()));
        }
    }
    if let Some(&t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::InvalidDuration(t));
    }
    let grid = *u0.grid();
    let refine = refine.max(1);
    match *params {
        PdeParams::Ad1d { .. } | PdeParams::Burgers1d { .. } | PdeParams::Adr2d { .. } => {
            if !grid.is_periodic() {
                return Err(Error::BoundaryUnsupported);
            }
            spectral_mol(params, u0, times, refine)
        }
        PdeParams::Swe1d { g } => {
            let dx = grid.spacing(0);
            let boundary = grid.boundary();
            let mut state = u0.values().to_vec();
            let mut now = 0.0;
            let mut out = Vec::with_capacity(times.len());
            for &target in times {
                while now < target {
                    let s = swe::max_speed(&state, g, Part::Coupled);
                    let remaining = target - now;
                    let dt = if s > 0.0 { 0.1 * dx / s / refine as f64 } else { remaining };
                    let last = remaining - dt <= 1e-12 * target;
                    let dt = if last { remaining } else { dt };
                    state = ssprk3(&state, dt, &mut |v: &[f64]| swe::rhs(v, g, dx, Part::Coupled, boundary));
                    now = if last { target } else { now + dt };
                    if state.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
                        return Err(Error::ReferenceDiverged { time: now });
                    }
                }
                out.push(Field::new(grid, 2, state.clone())?);
            }
            Ok(out)
        }
        PdeParams::Ks1d { .. } => Err(Error::NotApplicable("KS references come from the ETDRK4 solver")),
    }
}

/// RK4 on the spectral semi-discretisation of AD, Burgers and ADR.
fn spectral_mol(params: &PdeParams, u0: &Field, times: &[f64], refine: u64) -> Result<Vec<Field>> {
    let grid = *u0.grid();
    let nx = grid.n(0);
    let ny = if grid.dim() == 2 { grid.n(1) } else { 1 };
    let kx = wavenumbers(nx, grid.length(0));
    let ky = if grid.dim() == 2 { wavenumbers(ny, grid.length(1)) } else { vec![0.0] };
    let dkx = derivative_wavenumbers(nx, grid.length(0));
    let dky = if grid.dim() == 2 { derivative_wavenumbers(ny, grid.length(1)) } else { vec![0.0] };
    let kmax = |k: &[f64]| k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let umax = u0.max_abs();

    // linear symbol and stiffness estimate
    let (cx, cy, dx, dy, r, nu) = match *params {
        PdeParams::Ad1d { c, d } => (c, 0.0, d, 0.0, 0.0, 0.0),
        PdeParams::Adr2d { cx, cy, dx, dy, r } => (cx, cy, dx, dy, r, 0.0),
        PdeParams::Burgers1d { nu } => (0.0, 0.0, nu, 0.0, 0.0, nu),
        _ => unreachable!(),
    };
    let mut symbol = vec![Complex64::new(0.0, 0.0); nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let adv = cx * dkx[i] + cy * dky[j];
            let dif = dx * kx[i] * kx[i] + dy * ky[j] * ky[j];
            symbol[i * ny + j] = Complex64::new(-dif, -adv);
        }
    }
    let burgers = matches!(params, PdeParams::Burgers1d { .. });
    let lambda = if burgers {
        let kb = kmax(&dkx) * 2.0 / 3.0;
        nu * kb * kb + umax * kb
    } else {
        dx * kmax(&kx).powi(2) + dy * kmax(&ky).powi(2) + cx.abs() * kmax(&dkx) + cy.abs() * kmax(&dky)
            + r.abs() * (1.0 + 2.0 * umax)
    };
    let dt_max = if lambda > 0.0 { 0.25 / lambda / refine as f64 } else { f64::INFINITY };

    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    if burgers {
        let mask = dealias_mask(nx);
        let mut v = forward(&grid, u0.values());
        project(&mut v);
        let mut rhs = |w: &[Complex64]| {
            let mut n = transport_rhs(w, &dkx, &mask);
            for (z, (s, x)) in n.iter_mut().zip(symbol.iter().zip(w)) {
                *z += s * x;
            }
            n
        };
        for &target in times {
            let span = target - now;
            if span > 0.0 {
                let steps = (span / dt_max).ceil().max(1.0) as u64;
                let dt = span / steps as f64;
                for s in 0..steps {
                    v = rk4(&v, dt, &mut rhs);
                    if s % 16 == 0 || s + 1 == steps {
                        let u = inverse(&grid, &v);
                        if u.iter().any(|x| !x.is_finite() || x.abs() > BLOWUP) {
                            return Err(Error::ReferenceDiverged { time: now + dt * (s + 1) as f64 });
                        }
                    }
                }
                now = target;
            }
            out.push(Field::new(grid, 1, inverse(&grid, &v))?);
        }
    } else {
        let mut u = u0.values().to_vec();
        let mut rhs = |w: &[f64]| {
            let mut spec = forward(&grid, w);
            for (z, s) in spec.iter_mut().zip(&symbol) {
                *z *= s;
            }
            let mut lin = inverse(&grid, &spec);
            if r != 0.0 {
                for (l, &x) in lin.iter_mut().zip(w) {
                    *l += r * x * (1.0 - x);
                }
            }
            lin
        };
        for &target in times {
            let span = target - now;
            if span > 0.0 {
                let steps = (span / dt_max).ceil().max(1.0) as u64;
                let dt = span / steps as f64;
                for s in 0..steps {
                    u = rk4(&u, dt, &mut rhs);
                    if u.iter().any(|x| !x.is_finite() || x.abs() > BLOWUP) {
                        return Err(Error::ReferenceDiverged { time: now + dt * (s + 1) as f64 });
                    }
                }
                now = target;
            }
            out.push(Field::new(grid, 1, u.clone())?);
        }
    }
    Ok(out)
}

/// Default ETDRK4 step for Kuramoto–Sivashinsky.
pub const KS_DT: f64 = 0.02;

const CONTOUR_POINTS: usize = 32;

/// ETDRK4 (Kassam–Trefethen) for `u_t + u u_x + u_xx + u_xxxx = 0` with
/// two-thirds dealiasing. Returns snapshots at every step, including `t = 0`.
/// The step is shrunk slightly so that an integer number of steps reaches `t`.
pub fn solve_ks_etdrk4(params: &PdeParams, u0: &Field, t: f64, dt: f64) -> Result<Trajectory> {
    check_time(t)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidDuration(dt));
    }
    if params.system() != System::Ks1d {
        return Err(Error::NotApplicable("ETDRK4 reference is specific to KS"));
    }
    check_state(System::Ks1d, u0)?;
    let grid = *u0.grid();
    if !grid.is_periodic() {
        return Err(Error::BoundaryUnsupported);
    }
    let n = grid.n(0);
    let steps = (t / dt).ceil() as usize;
    let mut traj = Trajectory { times: vec![0.0], fields: vec![u0.clone()] };
    if steps == 0 {
        return Ok(traj);
    }
    let h = t / steps as f64;
    let k = wavenumbers(n, grid.length(0));
    let dk = derivative_wavenumbers(n, grid.length(0));
    let mask = dealias_mask(n);
    let coeffs = EtdCoefficients::new(&k.iter().map(|k| k * k - k.powi(4)).collect::<Vec<_>>(), h);
    let nl = |w: &[Complex64]| transport_rhs(w, &dk, &mask);

    let mut v = forward(&grid, u0.values());
    project(&mut v);
    for s in 1..=steps {
        let nv = nl(&v);
        let a: Vec<Complex64> = (0..n).map(|j| coeffs.e2[j] * v[j] + coeffs.q[j] * nv[j]).collect();
        let na = nl(&a);
        let b: Vec<Complex64> = (0..n).map(|j| coeffs.e2[j] * v[j] + coeffs.q[j] * na[j]).collect();
        let nb = nl(&b);
        let c: Vec<Complex64> = (0..n).map(|j| coeffs.e2[j] * a[j] + coeffs.q[j] * (nb[j] * 2.0 - nv[j])).collect();
        let nc = nl(&c);
        for j in 0..n {
            v[j] = coeffs.e[j] * v[j]
                + coeffs.f1[j] * nv[j]
                + coeffs.f2[j] * (na[j] + nb[j]) * 2.0
                + coeffs.f3[j] * nc[j];
        }
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::ReferenceDiverged { time: s as f64 * h });
        }
        traj.times.push(if s == steps { t } else { s as f64 * h });
        traj.fields.push(Field::new(grid, 1, inverse(&grid, &v))?);
    }
    Ok(traj)
}

/// Per-mode ETDRK4 coefficients for a diagonal linear operator `L`.
struct EtdCoefficients {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl EtdCoefficients {
    fn new(l: &[f64], h: f64) -> Self {
        let roots: Vec<Complex64> = (1..=CONTOUR_POINTS)
            .map(|j| Complex64::from_polar(1.0, std::f64::consts::PI * (j as f64 - 0.5) / CONTOUR_POINTS as f64))
            .collect();
        let m = CONTOUR_POINTS as f64;
        let mut c = EtdCoefficients {
            e: Vec::with_capacity(l.len()),
            e2: Vec::with_capacity(l.len()),
            q: Vec::with_capacity(l.len()),
            f1: Vec::with_capacity(l.len()),
            f2: Vec::with_capacity(l.len()),
            f3: Vec::with_capacity(l.len()),
        };
        for &lk in l {
            let hl = h * lk;
            c.e.push(hl.exp());
            c.e2.push((hl / 2.0).exp());
            let (mut q, mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0, 0.0);
            for r in &roots {
                let z = Complex64::new(hl, 0.0) + r;
                let ez = z.exp();
                let z3 = z * z * z;
                q += (((z / 2.0).exp() - 1.0) / z).re;
                f1 += ((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3).re;
                f2 += ((2.0 + z + ez * (z - 2.0)) / z3).re;
                f3 += ((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3).re;
            }
            c.q.push(h * q / m);
            c.f1.push(h * f1 / m);
            c.f2.push(h * f2 / m);
            c.f3.push(h * f3 / m);
        }
        c
    }
}

/// Grid-point total variation of a 1D periodic channel.
pub fn total_variation(grid: &Grid, data: &[f64]) -> f64 {
    let n = grid.n(0);
    (0..n).map(|i| (data[(i + 1) % n] - data[i]).abs()).sum()
}
