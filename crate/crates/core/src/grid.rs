//! Uniform periodic space-time grids and the finite-difference calculus on them.
//!
//! Only the `n_x` independent nodes of a period are stored; the node at
//! `x_hi` is node 0. All sums run over the stored nodes, so `<1, 1>` equals
//! the domain length.
//!
//! The one-sided operators `D+`, `D-`, the averaged `Dc`, the Laplacian
//! `(D+ - D-)/dx` and the adjoint divergence
//! `D*(v) = -(D- v+ + D+ v-)/2` satisfy `<u, D*(v)> = <(Du), (v)>` under the
//! weighted inner products defined here, which is what makes the HJB/FP
//! pair discretely adjoint.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_x: usize,
    n_t: usize,
    x_lo: f64,
    x_hi: f64,
    t_final: f64,
}

impl Grid {
    pub fn new(n_x: usize, n_t: usize, x_lo: f64, x_hi: f64, t_final: f64) -> Result<Self> {
        if n_x == 0 || n_t == 0 {
            return Err(MfgError::InvalidGrid(format!(
                "n_x and n_t must be positive (got n_x={n_x}, n_t={n_t})"
            )));
        }
        if !(x_lo.is_finite() && x_hi.is_finite()) || x_hi <= x_lo {
            return Err(MfgError::InvalidGrid(format!(
                "need finite x_lo < x_hi (got [{x_lo}, {x_hi}])"
            )));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(MfgError::InvalidGrid(format!(
                "terminal time must be positive (got {t_final})"
            )));
        }
        Ok(Self {
            n_x,
            n_t,
            x_lo,
            x_hi,
            t_final,
        })
    }

    /// Unit torus `[0, 1)` over `[0, t_final]`.
    pub fn unit(n_x: usize, n_t: usize, t_final: f64) -> Result<Self> {
        Self::new(n_x, n_t, 0.0, 1.0, t_final)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn length(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n_x as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_t as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.dx()
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_x).map(move |i| self.x(i))
    }

    /// Number of space-time nodes carried by a [`SpaceTimeField`].
    pub fn node_count(&self) -> usize {
        (self.n_t + 1) * self.n_x
    }

    /// The grid with twice as many cells in both space and time.
    pub fn refined(&self) -> Self {
        Self {
            n_x: 2 * self.n_x,
            n_t: 2 * self.n_t,
            ..*self
        }
    }

    /// The grid with half as many cells in both space and time.
    pub fn coarsened(&self) -> Result<Self> {
        if self.n_x % 2 != 0 || self.n_t % 2 != 0 {
            return Err(MfgError::InvalidGrid(format!(
                "cannot coarsen n_x={}, n_t={}: both must be even",
                self.n_x, self.n_t
            )));
        }
        Ok(Self {
            n_x: self.n_x / 2,
            n_t: self.n_t / 2,
            ..*self
        })
    }

    pub(crate) fn ensure_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(MfgError::ShapeMismatch(format!(
                "{what}: grid n_x={}, n_t={} on [{}, {}] vs n_x={}, n_t={} on [{}, {}]",
                self.n_x, self.n_t, self.x_lo, self.x_hi, other.n_x, other.n_t, other.x_lo, other.x_hi
            )))
        }
    }
}

/// Slice-level stencils shared by the field API and the PDE solvers.
pub(crate) mod stencil {
    #[inline]
    pub fn next(i: usize, n: usize) -> usize {
        if i + 1 == n {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    pub fn prev(i: usize, n: usize) -> usize {
        if i == 0 {
            n - 1
        } else {
            i - 1
        }
    }

    pub fn dx_plus(u: &[f64], dx: f64, out: &mut [f64]) {
        let n = u.len();
        for i in 0..n {
            out[i] = (u[next(i, n)] - u[i]) / dx;
        }
    }

    pub fn dx_minus(u: &[f64], dx: f64, out: &mut [f64]) {
        let n = u.len();
        for i in 0..n {
            out[i] = (u[i] - u[prev(i, n)]) / dx;
        }
    }

    pub fn laplacian(u: &[f64], dx: f64, out: &mut [f64]) {
        let n = u.len();
        let inv = 1.0 / (dx * dx);
        for i in 0..n {
            out[i] = (u[next(i, n)] - 2.0 * u[i] + u[prev(i, n)]) * inv;
        }
    }

    pub fn dot(u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// A scalar function on the spatial nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    grid: Grid,
    values: Vec<f64>,
}

impl SpatialField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_x() {
            return Err(MfgError::ShapeMismatch(format!(
                "spatial field needs {} values, got {}",
                grid.n_x(),
                values.len()
            )));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(MfgError::NonfiniteValue {
                what: "spatial field",
                level: 0,
                node,
            });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_x());
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(grid, grid.xs().map(f).collect())
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_vec(grid, vec![c; grid.n_x()])
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination. Panics if the grids differ.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "zip_map on fields from different grids");
        Self::from_vec(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn offset(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cyclic shift: `out[i] = self[i - k]`.
    pub fn shifted(&self, k: usize) -> Self {
        let n = self.len();
        let k = k % n;
        let mut out = vec![0.0; n];
        for (i, &v) in self.values.iter().enumerate() {
            out[(i + k) % n] = v;
        }
        Self::from_vec(self.grid, out)
    }

    pub fn dx_plus(&self) -> Self {
        let mut out = vec![0.0; self.len()];
        stencil::dx_plus(&self.values, self.grid.dx(), &mut out);
        Self::from_vec(self.grid, out)
    }

    pub fn dx_minus(&self) -> Self {
        let mut out = vec![0.0; self.len()];
        stencil::dx_minus(&self.values, self.grid.dx(), &mut out);
        Self::from_vec(self.grid, out)
    }

    pub fn dx_central(&self) -> Self {
        let plus = self.dx_plus();
        let minus = self.dx_minus();
        plus.zip_map(&minus, |a, b| 0.5 * (a + b))
    }

    /// `(D+ u, D- u)`.
    pub fn gradient(&self) -> OneSided<SpatialField> {
        OneSided {
            plus: self.dx_plus(),
            minus: self.dx_minus(),
        }
    }

    pub fn laplacian(&self) -> Self {
        let mut out = vec![0.0; self.len()];
        stencil::laplacian(&self.values, self.grid.dx(), &mut out);
        Self::from_vec(self.grid, out)
    }

    /// `dx * sum_i u_i v_i`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "inner product of fields from different grids");
        self.grid.dx() * stencil::dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Rectangle rule over one period, exact for trigonometric polynomials of
    /// degree below `n_x`.
    pub fn integrate(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }

    /// Domain average `integrate / length`.
    pub fn mean(&self) -> f64 {
        self.integrate() / self.grid.length()
    }

    /// Linear interpolation onto the grid refined by two; coincident nodes
    /// are copied exactly.
    pub fn refine(&self) -> Self {
        let n = self.len();
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            out.push(self.values[i]);
            out.push(0.5 * (self.values[i] + self.values[stencil::next(i, n)]));
        }
        Self::from_vec(self.grid.refined(), out)
    }

    /// Injection onto the grid coarsened by two.
    pub fn restrict(&self) -> Result<Self> {
        let coarse = self.grid.coarsened()?;
        Ok(Self::from_vec(
            coarse,
            self.values.iter().step_by(2).copied().collect(),
        ))
    }
}

impl OneSided<SpatialField> {
    /// `D*(v) = -(D- v+ + D+ v-)/2`, minus the discrete divergence.
    pub fn divergence_adjoint(&self) -> SpatialField {
        let dm = self.plus.dx_minus();
        let dp = self.minus.dx_plus();
        dm.zip_map(&dp, |a, b| -0.5 * (a + b))
    }

    /// `(<u+, v+> + <u-, v->) / 2`.
    pub fn inner(&self, other: &Self) -> f64 {
        0.5 * (self.plus.inner(&other.plus) + self.minus.inner(&other.minus))
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

/// A pair of one-sided quantities (gradients or velocities) sharing a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OneSided<F> {
    pub plus: F,
    pub minus: F,
}

/// A scalar function on all `(n_t + 1) * n_x` space-time nodes, stored time
/// level by time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(MfgError::ShapeMismatch(format!(
                "space-time field needs {} values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(MfgError::NonfiniteValue {
                what: "space-time field",
                level: pos / grid.n_x(),
                node: pos % grid.n_x(),
            });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_vec(grid, vec![0.0; grid.node_count()])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.node_count());
        for n in 0..=grid.n_t() {
            let t = grid.t(n);
            values.extend(grid.xs().map(|x| f(x, t)));
        }
        Self::from_vec(grid, values)
    }

    /// The same spatial profile at every time level.
    pub fn static_flow(field: &SpatialField) -> Self {
        let grid = *field.grid();
        let mut values = Vec::with_capacity(grid.node_count());
        for _ in 0..=grid.n_t() {
            values.extend_from_slice(field.values());
        }
        Self::from_vec(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn slice(&self, n: usize) -> &[f64] {
        let nx = self.grid.n_x();
        &self.values[n * nx..(n + 1) * nx]
    }

    pub(crate) fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        let nx = self.grid.n_x();
        &mut self.values[n * nx..(n + 1) * nx]
    }

    pub fn level(&self, n: usize) -> SpatialField {
        SpatialField::from_vec(self.grid, self.slice(n).to_vec())
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.values[n * self.grid.n_x() + i]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination. Panics if the grids differ.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "zip_map on fields from different grids");
        Self::from_vec(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// `(1 - w) * self + w * other`.
    pub fn blend(&self, other: &Self, w: f64) -> Self {
        self.zip_map(other, |a, b| (1.0 - w) * a + w * b)
    }

    /// `dt * dx * sum_{n,i} u v`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "inner product of fields from different grids");
        self.grid.dt() * self.grid.dx() * stencil::dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `dx * sum_i u_{i,n}` for every level.
    pub fn masses(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        (0..=self.grid.n_t())
            .map(|n| dx * self.slice(n).iter().sum::<f64>())
            .collect()
    }

    /// Linear interpolation in space and time onto the grid refined by two.
    pub fn refine(&self) -> Self {
        let nx = self.grid.n_x();
        let nt = self.grid.n_t();
        let fine = self.grid.refined();
        let mut values = Vec::with_capacity(fine.node_count());
        let refine_row = |row: &[f64], out: &mut Vec<f64>| {
            for i in 0..nx {
                out.push(row[i]);
                out.push(0.5 * (row[i] + row[stencil::next(i, nx)]));
            }
        };
        for n in 0..=nt {
            refine_row(self.slice(n), &mut values);
            if n < nt {
                let mid: Vec<f64> = self
                    .slice(n)
                    .iter()
                    .zip(self.slice(n + 1))
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                refine_row(&mid, &mut values);
            }
        }
        Self::from_vec(fine, values)
    }

    /// Injection onto the grid coarsened by two.
    pub fn restrict(&self) -> Result<Self> {
        let coarse = self.grid.coarsened()?;
        let mut values = Vec::with_capacity(coarse.node_count());
        for n in (0..=self.grid.n_t()).step_by(2) {
            values.extend(self.slice(n).iter().step_by(2));
        }
        Ok(Self::from_vec(coarse, values))
    }
}
