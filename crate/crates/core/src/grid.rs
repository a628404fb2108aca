//! Spatial and temporal grids and the monotone interpolation operators used
//! by the semi-Lagrangian schemes.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Relative tolerance used to flag a grid as uniform.
const UNIFORM_TOL: f64 = 1e-12;

/// Sorted one-dimensional node set `x_0 < x_1 < ... < x_J`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1d {
    nodes: Vec<f64>,
    uniform: bool,
    max_spacing: f64,
    min_spacing: f64,
}

impl Grid1d {
    /// `intervals + 1` equally spaced nodes on `[xmin, xmax]`.
    pub fn uniform(xmin: f64, xmax: f64, intervals: usize) -> Result<Self> {
        if !xmin.is_finite() || !xmax.is_finite() {
            return Err(Error::NonFinite("grid bounds"));
        }
        if intervals < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 intervals, got {intervals}"
            )));
        }
        if xmax <= xmin {
            return Err(Error::InvalidGrid(format!(
                "empty interval [{xmin}, {xmax}]"
            )));
        }
        let h = (xmax - xmin) / intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|i| xmin + i as f64 * h).collect();
        nodes[intervals] = xmax;
        Self::from_nodes(nodes)
    }

    /// Piecewise-uniform mesh on `[0, 200]` refined around the strike region,
    /// with `60 * 2^level` intervals. Each level halves every spacing.
    pub fn butterfly(level: u32) -> Self {
        // (start, end, spacing at level 0)
        const SEGMENTS: [(f64, f64, f64); 9] = [
            (0.0, 40.0, 10.0),
            (40.0, 80.0, 5.0),
            (80.0, 88.0, 2.0),
            (88.0, 98.0, 1.0),
            (98.0, 102.0, 0.5),
            (102.0, 112.0, 1.0),
            (112.0, 120.0, 2.0),
            (120.0, 160.0, 5.0),
            (160.0, 200.0, 10.0),
        ];
        let scale = (1u64 << level) as f64;
        let mut nodes = vec![0.0];
        for &(start, end, step) in &SEGMENTS {
            let count = ((end - start) / step).round() as usize * (1usize << level);
            let h = step / scale;
            for m in 1..=count {
                nodes.push(if m == count { end } else { start + m as f64 * h });
            }
        }
        Self::from_nodes(nodes).expect("butterfly breakpoints are strictly increasing")
    }

    /// Builds a grid from arbitrary strictly increasing nodes.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("grid nodes"));
        }
        let mut max_spacing = 0.0_f64;
        let mut min_spacing = f64::INFINITY;
        for w in nodes.windows(2) {
            let h = w[1] - w[0];
            if h <= 0.0 {
                return Err(Error::InvalidGrid("nodes must be strictly increasing".into()));
            }
            max_spacing = max_spacing.max(h);
            min_spacing = min_spacing.min(h);
        }
        let h0 = nodes[1] - nodes[0];
        let uniform = nodes
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h0).abs() <= UNIFORM_TOL * h0);
        Ok(Self {
            nodes,
            uniform,
            max_spacing,
            min_spacing,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of nodes, `J + 1`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of intervals `J`.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// `h_i = x_{i+1} - x_i`.
    #[inline]
    pub fn spacing(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Largest spacing, `Δx`.
    pub fn max_spacing(&self) -> f64 {
        self.max_spacing
    }

    /// Smallest spacing, `Δx_min`.
    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
    }

    pub fn lower(&self) -> f64 {
        self.nodes[0]
    }

    pub fn upper(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Cell index `i` and local coordinate `θ ∈ [0, 1]` with
    /// `x = (1 - θ) x_i + θ x_{i+1}`. Points outside the grid are clamped.
    #[inline]
    pub(crate) fn locate(&self, x: f64) -> (usize, f64) {
        let last = self.nodes.len() - 1;
        if x <= self.nodes[0] {
            return (0, 0.0);
        }
        if x >= self.nodes[last] {
            return (last - 1, 1.0);
        }
        let i = if self.uniform {
            let h = self.nodes[1] - self.nodes[0];
            (((x - self.nodes[0]) / h) as usize).min(last - 1)
        } else {
            // first index with nodes[idx] > x, minus one
            self.nodes.partition_point(|&n| n <= x) - 1
        };
        let i = i.min(last - 1);
        let theta = ((x - self.nodes[i]) / (self.nodes[i + 1] - self.nodes[i])).clamp(0.0, 1.0);
        (i, theta)
    }

    /// Trapezoidal quadrature weights `(h_{i-1} + h_i) / 2` with half cells at the ends.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.spacing(i - 1) } else { 0.0 };
                let right = if i + 1 < n { self.spacing(i) } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    }

    /// Index of the node closest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let (i, theta) = self.locate(x);
        if theta <= 0.5 {
            i
        } else {
            i + 1
        }
    }
}

/// Uniform time grid `t_n = n τ`, `τ = T / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("need at least one time step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.tau()
        }
    }
}

/// Uniform periodic tensor grid on `[-π, π)²` with `J` nodes per axis.
///
/// Values are stored row-major: node `(i, j)` (first and second coordinate
/// index) lives at `i * J + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicGrid2d {
    points: usize,
}

impl PeriodicGrid2d {
    pub fn new(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidGrid(format!(
                "periodic grid needs at least 2 points per axis, got {points}"
            )));
        }
        Ok(Self { points })
    }

    /// Nodes per axis, `J`.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Total number of nodes, `J²`.
    pub fn len(&self) -> usize {
        self.points * self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    /// `Δx₁ = Δx₂ = 2π / J`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.points as f64
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -PI + i as f64 * self.spacing()
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.coordinate(i), self.coordinate(j)]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.points + j
    }

    /// Periodic index reduction, `wrap(i + J) = wrap(i)`.
    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.points as isize) as usize
    }

    /// `(i, j)` for a flat index.
    #[inline]
    pub fn split(&self, k: usize) -> (usize, usize) {
        (k / self.points, k % self.points)
    }

    /// Cell-average weights `Δx²` for every node.
    pub fn node_weights(&self) -> Vec<f64> {
        vec![self.spacing() * self.spacing(); self.len()]
    }

    /// Cell index and local coordinate along one periodic axis.
    #[inline]
    pub(crate) fn locate_axis(&self, x: f64) -> (usize, usize, f64) {
        let h = self.spacing();
        let s = (x + PI) / h;
        let fl = s.floor();
        let theta = s - fl;
        let i0 = self.wrap(fl as isize);
        let i1 = if i0 + 1 == self.points { 0 } else { i0 + 1 };
        (i0, i1, theta)
    }
}

/// Piecewise-linear interpolation of nodal `values` at `x`, clamped to the
/// boundary values outside `[x_0, x_J]`.
pub fn interp_linear(grid: &Grid1d, values: &[f64], x: f64) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("interpolation point"));
    }
    Ok(interp_linear_unchecked(grid, values, x))
}

#[inline]
pub(crate) fn interp_linear_unchecked(grid: &Grid1d, values: &[f64], x: f64) -> f64 {
    let (i, theta) = grid.locate(x);
    (1.0 - theta) * values[i] + theta * values[i + 1]
}

/// Bilinear (Q1) interpolation on the periodic grid; `p` is reduced modulo 2π
/// on each axis.
pub fn interp_bilinear_periodic(grid: &PeriodicGrid2d, values: &[f64], p: [f64; 2]) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    if !(p[0].is_finite() && p[1].is_finite()) {
        return Err(Error::NonFinite("interpolation point"));
    }
    Ok(interp_bilinear_unchecked(grid, values, p))
}

#[inline]
pub(crate) fn interp_bilinear_unchecked(grid: &PeriodicGrid2d, values: &[f64], p: [f64; 2]) -> f64 {
    let (i0, i1, s) = grid.locate_axis(p[0]);
    let (j0, j1, t) = grid.locate_axis(p[1]);
    let v00 = values[grid.index(i0, j0)];
    let v01 = values[grid.index(i0, j1)];
    let v10 = values[grid.index(i1, j0)];
    let v11 = values[grid.index(i1, j1)];
    (1.0 - s) * ((1.0 - t) * v00 + t * v01) + s * ((1.0 - t) * v10 + t * v11)
}

/// Weights `(w_{i-1}, w_i, w_{i+1})` of the three-point second difference on
/// a possibly non-uniform grid.
#[inline]
pub fn d2_weights(grid: &Grid1d, i: usize) -> (f64, f64, f64) {
    let hm = grid.spacing(i - 1);
    let hp = grid.spacing(i);
    let s = 2.0 / (hm + hp);
    (s / hm, -s * (1.0 / hm + 1.0 / hp), s / hp)
}

/// Second difference
/// `2/(h_{i-1}+h_i) · (u_{i-1}/h_{i-1} − (1/h_{i-1} + 1/h_i) u_i + u_{i+1}/h_i)`.
pub fn d2_nonuniform(values: &[f64], grid: &Grid1d, i: usize) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    let last = grid.intervals();
    if i == 0 || i >= last {
        return Err(Error::IndexOutOfRange {
            index: i,
            lo: 1,
            hi: last - 1,
        });
    }
    let (wm, w0, wp) = d2_weights(grid, i);
    Ok(wm * values[i - 1] + w0 * values[i] + wp * values[i + 1])
}
