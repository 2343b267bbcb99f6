//! Uniform grids and multi-channel fields.
//!
//! Values are stored channel-major; within a channel, 2D data is row-major
//! with the x axis varying slowest (`index = ix * ny + iy`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    ReflectiveWall,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Periodic => f.write_str("periodic"),
            Boundary::ReflectiveWall => f.write_str("reflective-wall"),
        }
    }
}

/// Uniform 1D or 2D grid. Periodic grids place nodes at `i * h`; wall grids
/// use cell centres at `(i + 1/2) * h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: [usize; 2],
    length: [f64; 2],
    boundary: Boundary,
}

pub const MIN_POINTS: usize = 4;

impl Grid {
    pub fn new_1d(n: usize, length: f64, boundary: Boundary) -> Result<Self> {
        Self::check_axis(n, length)?;
        Ok(Self { dim: 1, n: [n, 1], length: [length, 1.0], boundary })
    }

    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64, boundary: Boundary) -> Result<Self> {
        Self::check_axis(nx, lx)?;
        Self::check_axis(ny, ly)?;
        Ok(Self { dim: 2, n: [nx, ny], length: [lx, ly], boundary })
    }

    fn check_axis(n: usize, length: f64) -> Result<()> {
        if n < MIN_POINTS {
            return Err(Error::InvalidGrid(format!("need at least {MIN_POINTS} points per axis, got {n}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("domain length must be positive, got {length}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.length[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.length[axis] / self.n[axis] as f64
    }

    /// Smallest spacing over the active axes.
    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    /// Same domain and boundary, different resolution on every axis.
    pub fn with_points(&self, n: usize) -> Result<Self> {
        match self.dim {
            1 => Self::new_1d(n, self.length[0], self.boundary),
            _ => Self::new_2d(n, n, self.length[0], self.length[1], self.boundary),
        }
    }

    pub fn total_points(&self) -> usize {
        self.n[0] * if self.dim == 2 { self.n[1] } else { 1 }
    }

    /// Measure of one grid cell (h in 1D, hx*hy in 2D).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.length[a]).product()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let h = self.spacing(axis);
        match self.boundary {
            Boundary::Periodic => i as f64 * h,
            Boundary::ReflectiveWall => (i as f64 + 0.5) * h,
        }
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|i| self.coord(axis, i)).collect()
    }
}

/// Discretised multi-channel state on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    channels: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::StateShape { expected: "at least one channel".into(), found: "0".into() });
        }
        let expected = channels * grid.total_points();
        if values.len() != expected {
            return Err(Error::StateShape {
                expected: format!("{expected} values"),
                found: format!("{} values", values.len()),
            });
        }
        Ok(Self { grid, channels, values })
    }

    pub fn zeros(grid: Grid, channels: usize) -> Self {
        Self { grid, channels, values: vec![0.0; channels * grid.total_points()] }
    }

    /// Single-channel 1D field sampled from `f(x)`.
    pub fn from_fn_1d(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.coords(0).into_iter().map(f).collect();
        Self { grid, channels: 1, values }
    }

    /// Single-channel 2D field sampled from `f(x, y)`.
    pub fn from_fn_2d(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let xs = grid.coords(0);
        let ys = grid.coords(1);
        let mut values = Vec::with_capacity(xs.len() * ys.len());
        for &x in &xs {
            for &y in &ys {
                values.push(f(x, y));
            }
        }
        Self { grid, channels: 1, values }
    }

    /// Stacks single-channel fields on the same grid.
    pub fn stack(parts: &[Field]) -> Result<Self> {
        let grid = parts.first().map(|p| p.grid).ok_or_else(|| Error::StateShape {
            expected: "at least one channel".into(),
            found: "none".into(),
        })?;
        let mut values = Vec::new();
        for p in parts {
            if p.grid != grid {
                return Err(Error::StateShape { expected: format!("{grid:?}"), found: format!("{:?}", p.grid) });
            }
            values.extend_from_slice(&p.values);
        }
        Self::new(grid, values.len() / grid.total_points(), values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.total_points();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.total_points();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn channel_field(&self, c: usize) -> Field {
        Field { grid: self.grid, channels: 1, values: self.channel(c).to_vec() }
    }

    pub fn with_grid(mut self, grid: Grid) -> Result<Self> {
        if grid.total_points() != self.grid.total_points() {
            return Err(Error::StateShape { expected: format!("{:?}", self.grid), found: format!("{grid:?}") });
        }
        self.grid = grid;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field { grid: self.grid, channels: self.channels, values: self.values.iter().map(|v| a * v).collect() }
    }

    /// Discrete L2 norm, `sqrt(cell_volume * sum v^2)` over all channels.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Discrete L2 distance to another field on the same grid.
    pub fn l2_distance(&self, other: &Field) -> f64 {
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum();
        (self.grid.cell_volume() * s).sqrt()
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.channels == other.channels && self.grid.n == other.grid.n && self.grid.dim == other.grid.dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_tiny_or_degenerate_axes() {
        assert!(Grid::new_1d(3, 1.0, Boundary::Periodic).is_err());
        assert!(Grid::new_1d(8, 0.0, Boundary::Periodic).is_err());
        assert!(Grid::new_2d(8, 8, 1.0, -1.0, Boundary::Periodic).is_err());
        let g = Grid::new_1d(64, 10.0, Boundary::Periodic).unwrap();
        assert!(g.spacing(0) > 0.0);
        assert_eq!(g.total_points(), 64);
    }

    #[test]
    fn wall_grid_uses_cell_centres() {
        let g = Grid::new_1d(4, 1.0, Boundary::ReflectiveWall).unwrap();
        assert_eq!(g.coords(0), vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn field_length_is_checked() {
        let g = Grid::new_2d(4, 5, 1.0, 1.0, Boundary::Periodic).unwrap();
        assert!(Field::new(g, 2, vec![0.0; 40]).is_ok());
        assert!(matches!(Field::new(g, 2, vec![0.0; 39]), Err(Error::StateShape { .. })));
    }

    #[test]
    fn stack_and_split_channels() {
        let g = Grid::new_1d(8, 1.0, Boundary::Periodic).unwrap();
        let a = Field::from_fn_1d(g, |x| x);
        let b = Field::from_fn_1d(g, |x| 2.0 * x);
        let s = Field::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.channels(), 2);
        assert_eq!(s.channel_field(1), b);
        assert_eq!(s.channel_field(0), a);
    }
}
