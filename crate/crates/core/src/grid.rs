//! Uniform spatial grids and the quadrature helpers shared by every module.
//!
//! The one-dimensional grid has `n_x` nodes `x_i = i * dx` on `[0, ell]`.
//! The triangular grid reuses the same nodes in both coordinates and stores
//! only the pairs `(x_i, xi_j)` with `j <= i`, packed row by row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform node set on `[0, ell]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    n_x: usize,
    ell: f64,
}

impl UniformGrid {
    pub fn new(n_x: usize, ell: f64) -> Result<Self> {
        if n_x < 3 {
            return Err(Error::InvalidGrid(format!(
                "n_x = {n_x} must be at least 3"
            )));
        }
        if !(ell.is_finite() && ell > 0.0) {
            return Err(Error::InvalidGrid(format!("ell = {ell} must be positive")));
        }
        Ok(Self { n_x, ell })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn dx(&self) -> f64 {
        self.ell / (self.n_x - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        // Exact at both ends; `i * dx` can overshoot ell by an ulp.
        if i + 1 == self.n_x {
            self.ell
        } else {
            i as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    pub fn triangular(&self) -> TriangularGrid {
        TriangularGrid { line: *self }
    }
}

/// Triangular node set `0 <= xi_j <= x_i <= ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangularGrid {
    line: UniformGrid,
}

impl TriangularGrid {
    pub fn new(n_x: usize, ell: f64) -> Result<Self> {
        Ok(UniformGrid::new(n_x, ell)?.triangular())
    }

    pub fn line(&self) -> &UniformGrid {
        &self.line
    }

    pub fn n_x(&self) -> usize {
        self.line.n_x
    }

    pub fn ell(&self) -> f64 {
        self.line.ell
    }

    pub fn dx(&self) -> f64 {
        self.line.dx()
    }

    /// Number of stored nodes, `n_x (n_x + 1) / 2`.
    pub fn len(&self) -> usize {
        self.n_x() * (self.n_x() + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Packed index of node `(x_i, xi_j)`; requires `j <= i`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i < self.n_x());
        i * (i + 1) / 2 + j
    }

    /// Contiguous storage range of row `i` (all `j = 0..=i`).
    #[inline]
    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        let start = i * (i + 1) / 2;
        start..start + i + 1
    }

    /// Iterator over `(i, j)` in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n_x();
        (0..n).flat_map(|i| (0..=i).map(move |j| (i, j)))
    }
}

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dx * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Trapezoid rule of the pointwise product `a * b`.
pub fn trapezoid_product(a: &[f64], b: &[f64], dx: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    match a.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = a[1..n - 1]
                .iter()
                .zip(&b[1..n - 1])
                .map(|(p, q)| p * q)
                .sum();
            dx * (inner + 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]))
        }
    }
}

/// Derivative of uniformly sampled data: central differences inside,
/// second-order one-sided differences at the two ends.
pub fn derivative(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        if n == 2 {
            let s = (values[1] - values[0]) / dx;
            out.fill(s);
        }
        return out;
    }
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) / (2.0 * dx);
    }
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dx);
    out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * dx);
    out
}

/// Linear interpolation of uniformly sampled data at `x` (clamped to the grid).
pub fn interp_uniform(values: &[f64], dx: f64, x: f64) -> f64 {
    let n = values.len();
    let s = (x / dx).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    let w = s - i as f64;
    (1.0 - w) * values[i] + w * values[i + 1]
}
