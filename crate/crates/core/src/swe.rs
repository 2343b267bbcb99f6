//! Finite-volume kernels for the 1D shallow-water system.
//!
//! State is `[h..., hu...]`. Interface fluxes use local Lax–Friedrichs with the
//! flux and dissipation split between the transport and gravity parts so that
//! the two split right-hand sides sum to the coupled one.

use crate::field::Boundary;

pub(crate) const H_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Part {
    Transport,
    Gravity,
    Coupled,
}

fn velocity(h: f64, hu: f64) -> f64 {
    hu / h.max(H_FLOOR)
}

fn celerity(g: f64, h: f64) -> f64 {
    (g * h.max(0.0)).sqrt()
}

/// Largest signal speed used for the CFL estimate of `part`.
pub(crate) fn max_speed(state: &[f64], g: f64, part: Part) -> f64 {
    let n = state.len() / 2;
    let (h, hu) = state.split_at(n);
    let mut s: f64 = 0.0;
    for i in 0..n {
        let u = velocity(h[i], hu[i]).abs();
        let c = celerity(g, h[i]);
        let v = match part {
            Part::Transport => u,
            Part::Gravity => c,
            Part::Coupled => u + c,
        };
        s = s.max(v);
    }
    s
}

fn flux(part: Part, g: f64, h: f64, hu: f64) -> (f64, f64) {
    let u = velocity(h, hu);
    match part {
        Part::Transport => (hu, hu * u),
        Part::Gravity => (0.0, 0.5 * g * h * h),
        Part::Coupled => (hu, hu * u + 0.5 * g * h * h),
    }
}

fn dissipation(part: Part, g: f64, l: (f64, f64), r: (f64, f64)) -> f64 {
    let a = velocity(l.0, l.1).abs().max(velocity(r.0, r.1).abs());
    let c = celerity(g, l.0).max(celerity(g, r.0));
    match part {
        Part::Transport => a,
        Part::Gravity => c,
        Part::Coupled => a + c,
    }
}

/// Semi-discrete right-hand side `dU/dt = -(F_{i+1/2} - F_{i-1/2}) / dx`.
pub(crate) fn rhs(state: &[f64], g: f64, dx: f64, part: Part, boundary: Boundary) -> Vec<f64> {
    let n = state.len() / 2;
    let (h, hu) = state.split_at(n);
    let cell = |i: isize| -> (f64, f64) {
        match boundary {
            Boundary::Periodic => {
                let j = i.rem_euclid(n as isize) as usize;
                (h[j], hu[j])
            }
            Boundary::ReflectiveWall => {
                if i < 0 {
                    (h[0], -hu[0])
                } else if i >= n as isize {
                    (h[n - 1], -hu[n - 1])
                } else {
                    (h[i as usize], hu[i as usize])
                }
            }
        }
    };
    // interface j sits between cells j-1 and j, j = 0..=n
    let mut fh = vec![0.0; n + 1];
    let mut fq = vec![0.0; n + 1];
    for j in 0..=n {
        let l = cell(j as isize - 1);
        let r = cell(j as isize);
        let fl = flux(part, g, l.0, l.1);
        let fr = flux(part, g, r.0, r.1);
        let a = dissipation(part, g, l, r);
        fh[j] = 0.5 * (fl.0 + fr.0) - 0.5 * a * (r.0 - l.0);
        fq[j] = 0.5 * (fl.1 + fr.1) - 0.5 * a * (r.1 - l.1);
    }
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[i] = -(fh[i + 1] - fh[i]) / dx;
        out[n + i] = -(fq[i + 1] - fq[i]) / dx;
    }
    out
}
