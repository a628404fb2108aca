//! Policy iteration for `sup_a (Mᵃ x - Gᵃ) = 0` over a finite control set.

pub mod linear;

use std::sync::Arc;

use arrayvec::ArrayVec;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stencil::{StencilRow, MAX_STENCIL};
use linear::SparseRows;

/// Rows shorter than this are improved sequentially.
const PAR_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HowardConfig {
    /// Absolute tolerance on `‖x_{k+1} - x_k‖∞`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for HowardConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 100,
        }
    }
}

/// Coefficients of `Mᵃ` for every control, stored row-major with all
/// controls of one row adjacent.
#[derive(Debug, Clone)]
pub struct ControlledMatrix {
    n: usize,
    controls: usize,
    width: usize,
    cols: Vec<u32>,
    coefs: Vec<f64>,
    /// Rows whose controls all use the same column list.
    shared: Vec<bool>,
}

impl ControlledMatrix {
    pub fn new(n: usize, controls: usize, width: usize) -> Self {
        assert!(width <= MAX_STENCIL && width > 0);
        let mut cols = vec![0u32; n * controls * width];
        for (k, c) in cols.chunks_mut(controls * width).enumerate() {
            c.fill(k as u32);
        }
        Self {
            n,
            controls,
            width,
            cols,
            coefs: vec![0.0; n * controls * width],
            shared: vec![true; n],
        }
    }

    /// Rewrites each row so that all its controls share one column list when
    /// the union of their columns fits in the stencil width.
    fn unify_columns(&mut self) {
        let (controls, width) = (self.controls, self.width);
        let stride = controls * width;
        self.cols
            .par_chunks_mut(stride)
            .zip(self.coefs.par_chunks_mut(stride))
            .zip(self.shared.par_iter_mut())
            .for_each(|((cols, coefs), shared)| {
                let mut union: ArrayVec<u32, MAX_STENCIL> = ArrayVec::new();
                for (k, &c) in cols.iter().enumerate() {
                    if coefs[k] != 0.0 && !union.contains(&c) {
                        if union.len() == width {
                            *shared = false;
                            return;
                        }
                        union.push(c);
                    }
                }
                if union.is_empty() {
                    union.push(cols[0]);
                }
                let fill = union[0];
                while union.len() < width {
                    union.push(fill);
                }
                for p in 0..controls {
                    let mut vals = [0.0; MAX_STENCIL];
                    for k in 0..width {
                        let v = coefs[p * width + k];
                        if v != 0.0 {
                            let pos = union.iter().position(|&u| u == cols[p * width + k]).unwrap_or(0);
                            vals[pos] += v;
                        }
                    }
                    cols[p * width..(p + 1) * width].copy_from_slice(&union);
                    coefs[p * width..(p + 1) * width].copy_from_slice(&vals[..width]);
                }
                *shared = true;
            });
    }

    /// Assembles all rows in parallel; the right-hand sides of the rows are returned
    /// alongside, laid out as `rhs[i * controls + p]`.
    pub fn assemble<F>(n: usize, controls: usize, width: usize, row: F) -> Result<(Self, Vec<f64>)>
    where
        F: Fn(usize, usize) -> StencilRow + Sync,
    {
        let mut m = Self::new(n, controls, width);
        let mut rhs = vec![0.0; n * controls];
        let stride = controls * width;
        let failures: Vec<String> = m
            .cols
            .par_chunks_mut(stride)
            .zip(m.coefs.par_chunks_mut(stride))
            .zip(rhs.par_chunks_mut(controls))
            .enumerate()
            .filter_map(|(i, ((cols, coefs), g))| {
                for p in 0..controls {
                    let r = row(i, p);
                    if r.row != i || r.entries.len() > width {
                        return Some(format!("row {i} control {p}: bad stencil"));
                    }
                    let c = &mut cols[p * width..(p + 1) * width];
                    let v = &mut coefs[p * width..(p + 1) * width];
                    c.fill(i as u32);
                    v.fill(0.0);
                    for (k, &(j, m)) in r.entries.iter().enumerate() {
                        if j >= n || !m.is_finite() {
                            return Some(format!("row {i} control {p}: entry ({j}, {m})"));
                        }
                        c[k] = j as u32;
                        v[k] = m;
                    }
                    if !r.rhs.is_finite() {
                        return Some(format!("row {i} control {p}: non-finite right-hand side"));
                    }
                    g[p] = r.rhs;
                }
                None
            })
            .collect();
        if let Some(f) = failures.into_iter().next() {
            return Err(Error::InvalidProblem(f));
        }
        m.unify_columns();
        Ok((m, rhs))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn controls(&self) -> usize {
        self.controls
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn row(&self, i: usize, p: usize) -> (&[u32], &[f64]) {
        let s = (i * self.controls + p) * self.width;
        (&self.cols[s..s + self.width], &self.coefs[s..s + self.width])
    }

    /// The row as a [`StencilRow`] with zero entries dropped.
    pub fn stencil_row(&self, i: usize, p: usize, rhs: f64) -> StencilRow {
        let (c, v) = self.row(i, p);
        let mut r = StencilRow::new(i);
        for (&j, &m) in c.iter().zip(v) {
            if m != 0.0 {
                r.add(j as usize, m);
            }
        }
        r.rhs = rhs;
        r.sort();
        r
    }

    #[inline]
    pub fn apply_row(&self, i: usize, p: usize, x: &[f64]) -> f64 {
        let (c, v) = self.row(i, p);
        c.iter().zip(v).map(|(&j, &m)| m * x[j as usize]).sum()
    }

    /// Matrix of a fixed policy.
    pub fn select(&self, policy: &[usize]) -> SparseRows {
        let mut m = SparseRows::new(self.n, self.width);
        for (i, &p) in policy.iter().enumerate() {
            let (c, v) = self.row(i, p);
            let (dc, dv) = m.row_mut(i);
            dc.copy_from_slice(c);
            dv.copy_from_slice(v);
        }
        m
    }
}

/// The nonlinear system `F(x) = max_a (Mᵃ x - Gᵃ) = 0` for one time level.
#[derive(Debug, Clone)]
pub struct PolicyProblem {
    matrix: Arc<ControlledMatrix>,
    /// `Gᵃ_i` at `i * controls + a`.
    rhs: Vec<f64>,
}

impl PolicyProblem {
    pub fn new(matrix: Arc<ControlledMatrix>, rhs: Vec<f64>) -> Result<Self> {
        let expected = matrix.dim() * matrix.controls();
        if rhs.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: rhs.len(),
            });
        }
        Ok(Self { matrix, rhs })
    }

    /// Builds the problem from a row-assembly callable `(i, control index) -> row`
    /// whose rows have at most `width` entries.
    pub fn assemble<F>(n: usize, controls: usize, width: usize, row: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> StencilRow + Sync,
    {
        let (m, rhs) = ControlledMatrix::assemble(n, controls, width, row)?;
        Self::new(Arc::new(m), rhs)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn controls(&self) -> usize {
        self.matrix.controls()
    }

    pub fn matrix(&self) -> &ControlledMatrix {
        &self.matrix
    }

    pub fn rhs(&self, i: usize, p: usize) -> f64 {
        self.rhs[i * self.matrix.controls + p]
    }

    /// The full row `(Mᵃ, Gᵃ)_i`.
    pub fn row(&self, i: usize, p: usize) -> StencilRow {
        self.matrix.stencil_row(i, p, self.rhs(i, p))
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Per-row maximum of `Mᵃx - Gᵃ` and its smallest maximizing control index.
    fn improve_into(&self, x: &[f64], policy: &mut [usize], value: &mut [f64]) {
        let controls = self.controls();
        let m = &*self.matrix;
        let width = m.width;
        let body = |offset: usize, pol: &mut [usize], val: &mut [f64]| {
            for (k, (pi, vi)) in pol.iter_mut().zip(val.iter_mut()).enumerate() {
                let i = offset + k;
                let g = &self.rhs[i * controls..(i + 1) * controls];
                if m.shared[i] {
                    let base = i * controls * width;
                    let mut xs = [0.0; MAX_STENCIL];
                    for (xk, &c) in xs.iter_mut().zip(&m.cols[base..base + width]) {
                        *xk = x[c as usize];
                    }
                    let xs = &xs[..width];
                    let coefs = &m.coefs[base..base + controls * width];
                    let mut best = f64::NEG_INFINITY;
                    let mut arg = 0;
                    for (p, (row, gp)) in coefs.chunks_exact(width).zip(g).enumerate() {
                        let r = row.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>() - gp;
                        if r > best || p == 0 {
                            best = r;
                            arg = p;
                        }
                    }
                    *pi = arg;
                    *vi = best;
                    continue;
                }
                let mut best = self.matrix.apply_row(i, 0, x) - g[0];
                let mut arg = 0;
                for (p, gp) in g.iter().enumerate().skip(1) {
                    let r = self.matrix.apply_row(i, p, x) - gp;
                    if r > best {
                        best = r;
                        arg = p;
                    }
                }
                *pi = arg;
                *vi = best;
            }
        };
        let n = self.dim();
        if n * controls < PAR_ROWS {
            body(0, policy, value);
        } else {
            let chunk = (PAR_ROWS / controls).max(64);
            policy
                .par_chunks_mut(chunk)
                .zip(value.par_chunks_mut(chunk))
                .enumerate()
                .for_each(|(c, (pol, val))| body(c * chunk, pol, val));
        }
    }

    /// `F(x)_i = max_a (Mᵃx - Gᵃ)_i`.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let mut policy = vec![0; self.dim()];
        let mut value = vec![0.0; self.dim()];
        self.improve_into(x, &mut policy, &mut value);
        Ok(value)
    }

    /// Rowwise argmax of the residual, ties going to the smallest control index.
    pub fn improve_policy(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.check_len(x)?;
        let mut policy = vec![0; self.dim()];
        let mut value = vec![0.0; self.dim()];
        self.improve_into(x, &mut policy, &mut value);
        Ok(policy)
    }

    /// Solves `Mᵖ x = Gᵖ` for a fixed policy.
    pub fn solve_policy_linear(&self, policy: &[usize]) -> Result<Vec<f64>> {
        if policy.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: policy.len(),
            });
        }
        let controls = self.controls();
        if let Some(&p) = policy.iter().find(|&&p| p >= controls) {
            return Err(Error::IndexOutOfRange {
                index: p,
                lo: 0,
                hi: controls - 1,
            });
        }
        let m = self.matrix.select(policy);
        let b: Vec<f64> = policy
            .iter()
            .enumerate()
            .map(|(i, &p)| self.rhs[i * controls + p])
            .collect();
        linear::solve(&m, &b)
    }

    /// Howard's algorithm started from `x0` (and optionally a previous policy).
    pub fn howard_solve(
        &self,
        x0: &[f64],
        warm_policy: Option<&[usize]>,
        cfg: &HowardConfig,
    ) -> Result<PolicyIterationResult> {
        self.check_len(x0)?;
        if !(cfg.tol > 0.0) || cfg.max_iters == 0 {
            return Err(Error::Config(format!(
                "Howard tolerance {} / iteration cap {} invalid",
                cfg.tol, cfg.max_iters
            )));
        }
        let n = self.dim();
        let mut value = vec![0.0; n];
        let mut policy = match warm_policy {
            Some(p) if p.len() == n && p.iter().all(|&a| a < self.controls()) => p.to_vec(),
            _ => {
                let mut p = vec![0; n];
                self.improve_into(x0, &mut p, &mut value);
                p
            }
        };
        let mut x = x0.to_vec();
        let mut next = vec![0; n];
        let mut increments = Vec::new();
        let mut iterations = 0;
        loop {
            let x_new = self.solve_policy_linear(&policy)?;
            iterations += 1;
            let diff = x_new
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            increments.push(diff);
            x = x_new;
            self.improve_into(&x, &mut next, &mut value);
            let residual = value.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let repeated = next == policy;
            let scale = 1.0 + x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let converged = repeated || (diff <= cfg.tol && residual <= 10.0 * cfg.tol * scale);
            std::mem::swap(&mut policy, &mut next);
            if converged || iterations >= cfg.max_iters {
                if !converged {
                    log::warn!(
                        "policy iteration stopped after {iterations} iterations, residual {residual:.3e}"
                    );
                }
                return Ok(PolicyIterationResult {
                    x,
                    iterations,
                    residual,
                    policy,
                    converged,
                    increments,
                });
            }
        }
    }
}

/// Outcome of [`PolicyProblem::howard_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyIterationResult {
    pub x: Vec<f64>,
    /// Number of fixed-policy linear solves.
    pub iterations: usize,
    /// `‖F(x)‖∞`.
    pub residual: f64,
    /// Argmax policy at `x`.
    pub policy: Vec<usize>,
    pub converged: bool,
    /// `‖x_{k+1} - x_k‖∞` per iteration.
    pub increments: Vec<f64>,
}

impl PolicyIterationResult {
    /// Turns a non-converged result into an error.
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::HowardNotConverged {
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }
}
