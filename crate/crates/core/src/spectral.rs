//! Discrete Fourier transforms on periodic grids, derivatives and quadrature.
//!
//! Forward transforms are unnormalized; inverse transforms divide by the
//! number of points, so `idft(dft(u)) == u`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{Field, Grid};

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((n, inverse))
            .or_insert_with(|| if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) })
            .clone()
    })
}

/// Unnormalized in-place 1D FFT.
pub fn fft_inplace(buf: &mut [Complex64], inverse: bool) {
    plan(buf.len(), inverse).process(buf);
}

/// Unnormalized in-place 2D FFT on an `nx * ny` row-major buffer.
pub fn fft2_inplace(buf: &mut [Complex64], nx: usize, ny: usize, inverse: bool) {
    let row = plan(ny, inverse);
    row.process(buf);
    let col = plan(nx, inverse);
    let mut tmp = vec![Complex64::new(0.0, 0.0); nx];
    for j in 0..ny {
        for i in 0..nx {
            tmp[i] = buf[i * ny + j];
        }
        col.process(&mut tmp);
        for i in 0..nx {
            buf[i * ny + j] = tmp[i];
        }
    }
}

fn require_periodic(grid: &Grid) -> Result<()> {
    if grid.is_periodic() {
        Ok(())
    } else {
        Err(Error::BoundaryUnsupported)
    }
}

/// Forward transform of raw channel data on a periodic grid.
pub fn forward(grid: &Grid, data: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    match grid.dim() {
        1 => fft_inplace(&mut buf, false),
        _ => fft2_inplace(&mut buf, grid.n(0), grid.n(1), false),
    }
    buf
}

/// Inverse transform returning the real part, scaled by `1/points`.
pub fn inverse(grid: &Grid, spec: &[Complex64]) -> Vec<f64> {
    let mut buf = spec.to_vec();
    match grid.dim() {
        1 => fft_inplace(&mut buf, true),
        _ => fft2_inplace(&mut buf, grid.n(0), grid.n(1), true),
    }
    let scale = 1.0 / buf.len() as f64;
    buf.iter().map(|z| z.re * scale).collect()
}

/// Spectrum of one channel of `f`.
pub fn dft(f: &Field, channel: usize) -> Result<Vec<Complex64>> {
    require_periodic(f.grid())?;
    Ok(forward(f.grid(), f.channel(channel)))
}

pub fn idft(grid: &Grid, spec: &[Complex64]) -> Result<Vec<f64>> {
    require_periodic(grid)?;
    if spec.len() != grid.total_points() {
        return Err(Error::StateShape {
            expected: format!("{} modes", grid.total_points()),
            found: format!("{} modes", spec.len()),
        });
    }
    Ok(inverse(grid, spec))
}

/// Signed integer mode numbers in FFT order; the Nyquist mode is reported as `+n/2`.
pub fn mode_numbers(n: usize) -> Vec<i64> {
    (0..n).map(|j| if j <= n / 2 { j as i64 } else { j as i64 - n as i64 }).collect()
}

/// Angular wavenumbers `2*pi*m/L` in FFT order.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    mode_numbers(n).into_iter().map(|m| 2.0 * PI * m as f64 / length).collect()
}

/// Wavenumbers for first derivatives: the Nyquist entry of an even grid is zeroed.
pub fn derivative_wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let mut k = wavenumbers(n, length);
    if n % 2 == 0 {
        k[n / 2] = 0.0;
    }
    k
}

/// Modes kept by the two-thirds rule: `|m| <= n/3`.
pub fn dealias_mask(n: usize) -> Vec<bool> {
    let cut = (n / 3) as i64;
    mode_numbers(n).into_iter().map(|m| m.abs() <= cut).collect()
}

/// Spectrum of `u^2` from the spectrum of `u` using 3/2-rule zero padding (1D).
///
/// The Nyquist coefficient of the input is dropped.
pub fn square_padded(uhat: &[Complex64]) -> Vec<Complex64> {
    let n = uhat.len();
    let m = (3 * n).div_ceil(2);
    let half = (n - 1) / 2;
    let zero = Complex64::new(0.0, 0.0);
    let mut pad = vec![zero; m];
    pad[0] = uhat[0];
    for j in 1..=half {
        pad[j] = uhat[j];
        pad[m - j] = uhat[n - j];
    }
    fft_inplace(&mut pad, true);
    let inv_n = 1.0 / n as f64;
    for z in pad.iter_mut() {
        let v = z.re * inv_n;
        *z = Complex64::new(v * v, 0.0);
    }
    fft_inplace(&mut pad, false);
    let s = n as f64 / m as f64;
    let mut out = vec![zero; n];
    out[0] = pad[0] * s;
    for j in 1..=half {
        out[j] = pad[j] * s;
        out[n - j] = pad[m - j] * s;
    }
    out
}

/// Derivative of one channel along `axis`. Spectral on periodic grids;
/// second-order central differences with one-sided closure on wall grids.
pub fn gradient(f: &Field, channel: usize, axis: usize) -> Vec<f64> {
    let grid = *f.grid();
    let data = f.channel(channel);
    if grid.is_periodic() {
        let mut spec = forward(&grid, data);
        let nx = grid.n(0);
        let ny = if grid.dim() == 2 { grid.n(1) } else { 1 };
        let k = derivative_wavenumbers(grid.n(axis), grid.length(axis));
        for ix in 0..nx {
            for iy in 0..ny {
                let kk = if axis == 0 { k[ix] } else { k[iy] };
                let z = &mut spec[ix * ny + iy];
                *z *= Complex64::new(0.0, kk);
            }
        }
        inverse(&grid, &spec)
    } else {
        fd_gradient(&grid, data, axis)
    }
}

fn fd_gradient(grid: &Grid, data: &[f64], axis: usize) -> Vec<f64> {
    let nx = grid.n(0);
    let ny = if grid.dim() == 2 { grid.n(1) } else { 1 };
    let (n, stride) = if axis == 0 { (nx, ny) } else { (ny, 1) };
    let h = grid.spacing(axis);
    let mut out = vec![0.0; data.len()];
    let lines: Vec<usize> = if axis == 0 { (0..ny).collect() } else { (0..nx).map(|i| i * ny).collect() };
    for start in lines {
        let at = |i: usize| data[start + i * stride];
        for i in 0..n {
            let d = if i == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
            } else {
                (at(i + 1) - at(i - 1)) / (2.0 * h)
            };
            out[start + i * stride] = d;
        }
    }
    out
}

/// Midpoint-rule integral of channel data over the grid.
pub fn integrate(grid: &Grid, data: &[f64]) -> f64 {
    data.iter().sum::<f64>() * grid.cell_volume()
}

/// Integral of one channel of a field.
pub fn integrate_channel(f: &Field, channel: usize) -> f64 {
    integrate(f.grid(), f.channel(channel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Boundary;
    use proptest::prelude::*;

    fn grid(n: usize, l: f64) -> Grid {
        Grid::new_1d(n, l, Boundary::Periodic).unwrap()
    }

    #[test]
    fn round_trip_smooth_field() {
        let g = grid(64, 10.0);
        let f = Field::from_fn_1d(g, |x| (2.0 * PI * x / 10.0).sin() + 0.3 * (6.0 * PI * x / 10.0).cos());
        let back = idft(&g, &dft(&f, 0).unwrap()).unwrap();
        for (a, b) in back.iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_has_only_dc() {
        let g = grid(32, 3.0);
        let f = Field::from_fn_1d(g, |_| 2.5);
        let s = dft(&f, 0).unwrap();
        assert!((s[0].re - 2.5 * 32.0).abs() < 1e-12);
        assert!(s[1..].iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn pure_tone_lives_in_first_modes() {
        let g = grid(64, 10.0);
        let f = Field::from_fn_1d(g, |x| (2.0 * PI * x / 10.0).sin());
        let s = dft(&f, 0).unwrap();
        let peak = s[1].norm().max(s[63].norm());
        assert!((peak - 32.0).abs() < 1e-10);
        for (j, z) in s.iter().enumerate() {
            if j != 1 && j != 63 {
                assert!(z.norm() < 1e-12 * peak);
            }
        }
    }

    #[test]
    fn wall_grid_is_rejected() {
        let g = Grid::new_1d(16, 1.0, Boundary::ReflectiveWall).unwrap();
        let f = Field::zeros(g, 1);
        assert!(matches!(dft(&f, 0), Err(Error::BoundaryUnsupported)));
    }

    #[test]
    fn spectral_derivative_of_sine() {
        let l = 10.0;
        let k = 2.0 * PI / l;
        let g = grid(64, l);
        let f = Field::from_fn_1d(g, |x| (k * x).sin());
        let d = gradient(&f, 0, 0);
        for (x, v) in g.coords(0).iter().zip(&d) {
            assert!((v - k * (k * x).cos()).abs() < 1e-10);
        }
        let c = Field::from_fn_1d(g, |_| 4.0);
        assert!(gradient(&c, 0, 0).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn spectral_derivative_2d_axes() {
        let g = Grid::new_2d(16, 16, 1.0, 1.0, Boundary::Periodic).unwrap();
        let f = Field::from_fn_2d(g, |x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).cos());
        let dx = gradient(&f, 0, 0);
        let dy = gradient(&f, 0, 1);
        let xs = g.coords(0);
        let ys = g.coords(1);
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                let ex = 2.0 * PI * (2.0 * PI * x).cos() * (4.0 * PI * y).cos();
                let ey = -4.0 * PI * (2.0 * PI * x).sin() * (4.0 * PI * y).sin();
                assert!((dx[i * 16 + j] - ex).abs() < 1e-10);
                assert!((dy[i * 16 + j] - ey).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn wall_ramp_and_second_order_convergence() {
        let ramp = |n: usize| {
            let g = Grid::new_1d(n, 1.0, Boundary::ReflectiveWall).unwrap();
            let f = Field::from_fn_1d(g, |x| 3.0 * x);
            gradient(&f, 0, 0)
        };
        assert!(ramp(16).iter().all(|v| (v - 3.0).abs() < 1e-12));

        let err = |n: usize| {
            let g = Grid::new_1d(n, 1.0, Boundary::ReflectiveWall).unwrap();
            let f = Field::from_fn_1d(g, |x| (2.0 * x).sin());
            let d = gradient(&f, 0, 0);
            g.coords(0).iter().zip(&d).map(|(x, v)| (v - 2.0 * (2.0 * x).cos()).abs()).fold(0.0, f64::max)
        };
        let order = (err(32) / err(64)).log2();
        assert!((1.8..2.3).contains(&order), "order {order}");
    }

    #[test]
    fn quadrature() {
        let g = grid(64, 10.0);
        assert_eq!(integrate(&g, &vec![0.0; 64]), 0.0);
        assert!((integrate(&g, &vec![1.0; 64]) - 10.0).abs() < 1e-14);
        let s = Field::from_fn_1d(g, |x| (2.0 * PI * x / 10.0).sin());
        assert!(integrate_channel(&s, 0).abs() < 1e-12);
        let g2 = Grid::new_2d(8, 4, 2.0, 3.0, Boundary::Periodic).unwrap();
        assert!((integrate(&g2, &vec![1.5; 32]) - 9.0).abs() < 1e-14);
    }

    #[test]
    fn padded_square_is_exact_for_band_limited_input() {
        let n = 48;
        let g = grid(n, 2.0 * PI);
        let f = Field::from_fn_1d(g, |x| x.sin() + 0.5 * (7.0 * x).cos());
        let sq = square_padded(&dft(&f, 0).unwrap());
        let direct: Vec<f64> = f.values().iter().map(|v| v * v).collect();
        let back = idft(&g, &sq).unwrap();
        for (a, b) in back.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_keeps_lower_two_thirds() {
        let m = dealias_mask(12);
        let kept: Vec<i64> = mode_numbers(12).into_iter().zip(m).filter(|(_, k)| *k).map(|(j, _)| j).collect();
        assert_eq!(kept, vec![0, 1, 2, 3, 4, -4, -3, -2, -1]);
    }

    proptest! {
        #[test]
        fn round_trip_random(values in proptest::collection::vec(-100.0f64..100.0, 16)) {
            let g = grid(16, 1.0);
            let f = Field::new(g, 1, values.clone()).unwrap();
            let back = idft(&g, &dft(&f, 0).unwrap()).unwrap();
            let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, b) in back.iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn parseval(values in proptest::collection::vec(-10.0f64..10.0, 8..40)) {
            let n = values.len();
            let g = grid(n, 7.0);
            let f = Field::new(g, 1, values.clone()).unwrap();
            let s = dft(&f, 0).unwrap();
            let h = g.spacing(0);
            let lhs = h * values.iter().map(|v| v * v).sum::<f64>();
            let rhs = h * s.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1.0));
        }

        #[test]
        fn gradient_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            u in proptest::collection::vec(-1.0f64..1.0, 16),
            v in proptest::collection::vec(-1.0f64..1.0, 16),
            wall in any::<bool>(),
        ) {
            let bnd = if wall { Boundary::ReflectiveWall } else { Boundary::Periodic };
            let g = Grid::new_1d(16, 2.0, bnd).unwrap();
            let fu = Field::new(g, 1, u.clone()).unwrap();
            let fv = Field::new(g, 1, v.clone()).unwrap();
            let comb = Field::new(g, 1, u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect()).unwrap();
            let lhs = gradient(&comb, 0, 0);
            let gu = gradient(&fu, 0, 0);
            let gv = gradient(&fv, 0, 0);
            for i in 0..16 {
                prop_assert!((lhs[i] - (a * gu[i] + b * gv[i])).abs() < 1e-12);
            }
        }
    }
}
