//! Explicit Runge–Kutta steps shared by primitives and reference solvers.

use std::ops::{Add, Mul};

pub trait State: Copy + Add<Output = Self> + Mul<f64, Output = Self> {}
impl<T: Copy + Add<Output = T> + Mul<f64, Output = T>> State for T {}

fn axpy<T: State>(a: &[T], b: &[T], s: f64) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y * s).collect()
}

/// Three-stage strong-stability-preserving Runge–Kutta (Shu–Osher form).
pub fn ssprk3<T: State>(u: &[T], dt: f64, rhs: &mut impl FnMut(&[T]) -> Vec<T>) -> Vec<T> {
    let k1 = rhs(u);
    let u1 = axpy(u, &k1, dt);
    let k2 = rhs(&u1);
    let u2: Vec<T> = u.iter().zip(&u1).zip(&k2).map(|((&a, &b), &k)| a * 0.75 + (b + k * dt) * 0.25).collect();
    let k3 = rhs(&u2);
    u.iter()
        .zip(&u2)
        .zip(&k3)
        .map(|((&a, &b), &k)| a * (1.0 / 3.0) + (b + k * dt) * (2.0 / 3.0))
        .collect()
}

/// Classical fourth-order Runge–Kutta.
pub fn rk4<T: State>(u: &[T], dt: f64, rhs: &mut impl FnMut(&[T]) -> Vec<T>) -> Vec<T> {
    let k1 = rhs(u);
    let k2 = rhs(&axpy(u, &k1, 0.5 * dt));
    let k3 = rhs(&axpy(u, &k2, 0.5 * dt));
    let k4 = rhs(&axpy(u, &k3, dt));
    (0..u.len()).map(|i| u[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay_error(fourth: bool, n: usize) -> f64 {
        let mut u = vec![1.0];
        let dt = 1.0 / n as f64;
        let mut f = |v: &[f64]| vec![-v[0]];
        for _ in 0..n {
            u = if fourth { rk4(&u, dt, &mut f) } else { ssprk3(&u, dt, &mut f) };
        }
        (u[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn orders_on_linear_decay() {
        let o3 = (decay_error(false, 20) / decay_error(false, 40)).log2();
        let o4 = (decay_error(true, 20) / decay_error(true, 40)).log2();
        assert!((o3 - 3.0).abs() < 0.2, "{o3}");
        assert!((o4 - 4.0).abs() < 0.2, "{o4}");
    }
}
