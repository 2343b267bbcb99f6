//! Evaluation metrics, attractor statistics and the two-term error decomposition.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::executor::{execute_with, Dictionary};
use crate::field::Field;
use crate::policy::Program;
use crate::primitives::Substeps;
use crate::spectral::{forward, integrate_channel, mode_numbers};
use crate::system::{PdeParams, System};

/// Band edges on the radial wavenumber, Nyquist at 0.5.
pub const BAND_EDGES: [f64; 2] = [0.1, 0.3];
pub const KL_BINS: usize = 64;
pub const KL_SMOOTHING: f64 = 1e-10;
/// Substep multiplier of the fine run in the error decomposition.
pub const FINE_REFINE: u64 = 10;

fn check(pred: &Field, reference: &Field) -> Result<()> {
    if !pred.same_shape(reference) {
        let shape = |f: &Field| format!("{} x {:?}", f.channels(), f.grid());
        return Err(Error::StateShape { expected: shape(reference), found: shape(pred) });
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `||pred - ref||_2 / ||ref||_2` over all points and channels.
pub fn rel_l2(pred: &Field, reference: &Field) -> Result<f64> {
    check(pred, reference)?;
    let den = reference.values().iter().map(|v| v * v).sum::<f64>();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((sq_dist(pred.values(), reference.values()) / den).sqrt())
}

/// Root mean of the squared pointwise channel-norm error.
pub fn rmse(pred: &Field, reference: &Field) -> Result<f64> {
    check(pred, reference)?;
    let n = reference.grid().total_points() as f64;
    Ok((sq_dist(pred.values(), reference.values()) / n).sqrt())
}

fn point_errors(pred: &Field, reference: &Field) -> Vec<f64> {
    let n = reference.grid().total_points();
    let mut e = vec![0.0; n];
    for c in 0..reference.channels() {
        for ((ei, p), r) in e.iter_mut().zip(pred.channel(c)).zip(reference.channel(c)) {
            *ei += (p - r) * (p - r);
        }
    }
    e
}

/// Largest pointwise channel-norm error.
pub fn max_err(pred: &Field, reference: &Field) -> Result<f64> {
    check(pred, reference)?;
    Ok(point_errors(pred, reference).into_iter().fold(0.0, f64::max).sqrt())
}

/// Radial wavenumber of every FFT slot, normalized so Nyquist is 0.5.
pub fn radial_wavenumbers(field: &Field) -> Vec<f64> {
    let g = field.grid();
    let nx = g.n(0);
    let mx = mode_numbers(nx);
    if g.dim() == 1 {
        return mx.iter().map(|&m| (m as f64 / nx as f64).abs()).collect();
    }
    let ny = g.n(1);
    let my = mode_numbers(ny);
    let mut out = Vec::with_capacity(nx * ny);
    for &a in &mx {
        for &b in &my {
            let (x, y) = (a as f64 / nx as f64, b as f64 / ny as f64);
            out.push((x * x + y * y).sqrt());
        }
    }
    out
}

pub fn band_of(k: f64) -> usize {
    if k < BAND_EDGES[0] {
        0
    } else if k < BAND_EDGES[1] {
        1
    } else {
        2
    }
}

/// Band-wise RMS of Fourier magnitude differences `||F pred| - |F ref||`, with
/// coefficients scaled by the point count. Modes are pooled over channels.
pub fn frmse_bands(pred: &Field, reference: &Field) -> Result<[f64; 3]> {
    check(pred, reference)?;
    let g = reference.grid();
    if !g.is_periodic() {
        return Err(Error::BoundaryUnsupported);
    }
    let k = radial_wavenumbers(reference);
    let scale = 1.0 / g.total_points() as f64;
    let mut sum = [0.0; 3];
    let mut count = [0usize; 3];
    for c in 0..reference.channels() {
        let a = forward(g, pred.channel(c));
        let b = forward(g, reference.channel(c));
        for ((x, y), &kk) in a.iter().zip(&b).zip(&k) {
            let d = (x.norm() - y.norm()) * scale;
            let j = band_of(kk);
            sum[j] += d * d;
            count[j] += 1;
        }
    }
    Ok(std::array::from_fn(|j| if count[j] > 0 { (sum[j] / count[j] as f64).sqrt() } else { 0.0 }))
}

/// Cells in the outer boundary band: `max(1, floor(0.05 N))` per side per axis.
pub fn boundary_band(field: &Field) -> Vec<bool> {
    let g = field.grid();
    let width = |n: usize| ((n as f64 * 0.05).floor() as usize).max(1);
    let nx = g.n(0);
    let wx = width(nx);
    let edge = |i: usize, n: usize, w: usize| i < w || i + w >= n;
    if g.dim() == 1 {
        return (0..nx).map(|i| edge(i, nx, wx)).collect();
    }
    let ny = g.n(1);
    let wy = width(ny);
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            out.push(edge(i, nx, wx) || edge(j, ny, wy));
        }
    }
    out
}

pub fn brmse(pred: &Field, reference: &Field) -> Result<f64> {
    check(pred, reference)?;
    let band = boundary_band(reference);
    let e = point_errors(pred, reference);
    let (s, n) = e.iter().zip(&band).filter(|(_, b)| **b).fold((0.0, 0usize), |(s, n), (e, _)| (s + e, n + 1));
    Ok((s / n as f64).sqrt())
}

/// Conserved diagnostics: total mass, plus total momentum for shallow water.
pub fn invariants(system: System, u: &Field) -> Result<Vec<f64>> {
    match system {
        System::Adr2d => Err(Error::NotApplicable("cRMSE is not defined for reacting flows")),
        System::Swe1d => Ok(vec![integrate_channel(u, 0), integrate_channel(u, 1)]),
        _ => Ok(vec![integrate_channel(u, 0)]),
    }
}

pub fn crmse(pred: &Field, reference: &Field, system: System) -> Result<f64> {
    check(pred, reference)?;
    let a = invariants(system, pred)?;
    let b = invariants(system, reference)?;
    Ok((sq_dist(&a, &b) / a.len() as f64).sqrt())
}

/// One row of the metric table. Entries that do not apply are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub rel_l2: f64,
    pub frmse: Option<[f64; 3]>,
    pub rmse: f64,
    pub max_err: f64,
    pub brmse: f64,
    pub crmse: Option<f64>,
}

impl Metrics {
    pub fn compute(pred: &Field, reference: &Field, system: System) -> Result<Self> {
        Ok(Metrics {
            rel_l2: rel_l2(pred, reference)?,
            frmse: frmse_bands(pred, reference).ok(),
            rmse: rmse(pred, reference)?,
            max_err: max_err(pred, reference)?,
            brmse: brmse(pred, reference)?,
            crmse: crmse(pred, reference, system).ok(),
        })
    }

    /// Column-wise mean; optional columns average over the rows that have them.
    pub fn mean(rows: &[Metrics]) -> Metrics {
        let n = rows.len().max(1) as f64;
        let avg = |f: &dyn Fn(&Metrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let fr: Vec<[f64; 3]> = rows.iter().filter_map(|r| r.frmse).collect();
        let cr: Vec<f64> = rows.iter().filter_map(|r| r.crmse).collect();
        Metrics {
            rel_l2: avg(&|r| r.rel_l2),
            frmse: (!fr.is_empty()).then(|| {
                std::array::from_fn(|j| fr.iter().map(|v| v[j]).sum::<f64>() / fr.len() as f64)
            }),
            rmse: avg(&|r| r.rmse),
            max_err: avg(&|r| r.max_err),
            brmse: avg(&|r| r.brmse),
            crmse: (!cr.is_empty()).then(|| cr.iter().sum::<f64>() / cr.len() as f64),
        }
    }
}

pub const CSV_HEADER: &str = "model,split,RelL2,fRMSE_low,fRMSE_mid,fRMSE_high,RMSE,MaxErr,bRMSE,cRMSE";

fn num(v: f64) -> String {
    format!("{v:.6e}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), num)
}

pub fn csv_row(model: &str, split: &str, m: &Metrics) -> String {
    let f = m.frmse;
    [
        model.to_string(),
        split.to_string(),
        num(m.rel_l2),
        opt(f.map(|v| v[0])),
        opt(f.map(|v| v[1])),
        opt(f.map(|v| v[2])),
        num(m.rmse),
        num(m.max_err),
        num(m.brmse),
        opt(m.crmse),
    ]
    .join(",")
}

/// Full table with header.
pub fn csv_table(rows: &[(String, String, Metrics)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    for (model, split, m) in rows {
        let _ = writeln!(s, "{}", csv_row(model, split, m));
    }
    s
}

/// Time-averaged energy of modes `1..=N/3` over the snapshots.
fn mean_spectrum(traj: &[Field]) -> Vec<f64> {
    let g = traj[0].grid();
    let n = g.n(0);
    let keep = n / 3;
    let mut e = vec![0.0; keep];
    let norm = 1.0 / (n as f64 * n as f64);
    for f in traj {
        let s = forward(g, f.channel(0));
        for (m, em) in e.iter_mut().enumerate() {
            *em += s[m + 1].norm_sqr() * norm;
        }
    }
    e.iter_mut().for_each(|v| *v /= traj.len() as f64);
    e
}

fn histogram(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut h = vec![0.0; KL_BINS];
    let w = (hi - lo) / KL_BINS as f64;
    for &v in values {
        let b = if w > 0.0 { (((v - lo) / w) as usize).min(KL_BINS - 1) } else { 0 };
        h[b] += 1.0;
    }
    let total = values.len() as f64;
    let p: Vec<f64> = h.iter().map(|c| c / total + KL_SMOOTHING).collect();
    let z: f64 = p.iter().sum();
    p.into_iter().map(|v| v / z).collect()
}

/// `KL(p || q)` of two discrete distributions.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0)
}

/// Attractor statistics after dropping the first tenth of each trajectory:
/// mean absolute log10 spectrum gap (SE) and histogram KL(ref || pred).
pub fn ks_attractor_metrics(pred: &[Field], reference: &[Field]) -> Result<(f64, f64)> {
    let cut = |t: &[Field]| t.len() / 10;
    let p = &pred[cut(pred).min(pred.len())..];
    let r = &reference[cut(reference).min(reference.len())..];
    if p.is_empty() || r.is_empty() {
        return Err(Error::InsufficientTrajectory);
    }
    let ep = mean_spectrum(p);
    let er = mean_spectrum(r);
    let floor = 1e-300;
    let se = if ep.is_empty() {
        0.0
    } else {
        ep.iter().zip(&er).map(|(a, b)| (a.max(floor).log10() - b.max(floor).log10()).abs()).sum::<f64>()
            / ep.len() as f64
    };
    let vp: Vec<f64> = p.iter().flat_map(|f| f.channel(0).iter().copied()).collect();
    let vr: Vec<f64> = r.iter().flat_map(|f| f.channel(0).iter().copied()).collect();
    let lo = vp.iter().chain(&vr).copied().fold(f64::INFINITY, f64::min);
    let hi = vp.iter().chain(&vr).copied().fold(f64::NEG_INFINITY, f64::max);
    let kl = kl_divergence(&histogram(&vr, lo, hi), &histogram(&vp, lo, hi));
    Ok((se, kl))
}

/// Relative split of a program's error into schedule and primitive parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposition {
    pub total: f64,
    pub splitting_est: f64,
    pub primitive_est: f64,
}

impl Decomposition {
    /// `total - (splitting + primitive)`, never positive beyond rounding.
    pub fn residual(&self) -> f64 {
        self.total - (self.splitting_est + self.primitive_est)
    }
}

/// Runs `program` as is and with every substep count multiplied by
/// [`FINE_REFINE`]; norms are relative to `||u_ref||`.
pub fn error_decomposition(
    program: &Program,
    dict: &Dictionary,
    params: &PdeParams,
    u0: &Field,
    u_ref: &Field,
) -> Result<Decomposition> {
    let coarse = execute_with(program, dict, params, u0, Substeps::default())?;
    let fine = execute_with(program, dict, params, u0, Substeps::Auto { refine: FINE_REFINE })?;
    Ok(Decomposition {
        total: rel_l2(&coarse, u_ref)?,
        splitting_est: rel_l2(&fine, u_ref)?,
        primitive_est: coarse.l2_distance(&fine) / u_ref.l2_norm(),
    })
}
