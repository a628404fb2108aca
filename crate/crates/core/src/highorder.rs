//! Non-monotone second-order schemes: BDF2, Crank-Nicolson (optionally with
//! Rannacher start-up) and the implicit nine-point scheme on the periodic square.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid1d, PeriodicGrid2d};
use crate::howard::{ControlledMatrix, HowardConfig, PolicyProblem};
use crate::monotone::ImplicitEuler;
use crate::problem::{Boundary, Control, HjbProblem};
use crate::scheme::{
    assemble_operator_1d, check_levels, operator_row_1d, one_sided_weights, standard_rhs,
    Discretization, DriftRule, Levels, MatrixCache, Scheme, SchemeKind,
};
use crate::stencil::StencilRow;

/// Side of a one-sided difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

/// Second-order one-sided first derivative on a uniform grid:
/// `(3v_i - 4v_{i-1} + v_{i-2}) / 2Δx` or `-(3v_i - 4v_{i+1} + v_{i+2}) / 2Δx`.
pub fn bdf2_d1(values: &[f64], dx: f64, i: usize, side: Side) -> Result<f64> {
    let last = values.len().saturating_sub(1);
    match side {
        Side::Minus if i >= 2 && i <= last => {
            Ok((3.0 * values[i] - 4.0 * values[i - 1] + values[i - 2]) / (2.0 * dx))
        }
        Side::Plus if i + 2 <= last => {
            Ok(-(3.0 * values[i] - 4.0 * values[i + 1] + values[i + 2]) / (2.0 * dx))
        }
        _ => Err(Error::IndexOutOfRange {
            index: i,
            lo: if side == Side::Minus { 2 } else { 0 },
            hi: if side == Side::Minus { last } else { last.saturating_sub(2) },
        }),
    }
}

/// Non-uniform version of [`bdf2_d1`] using the local spacings.
pub fn bdf2_d1_nonuniform(values: &[f64], grid: &Grid1d, i: usize, side: Side) -> Result<f64> {
    let last = grid.intervals();
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    match side {
        Side::Minus if i >= 2 && i <= last => {
            let w = one_sided_weights(grid.spacing(i - 1), grid.spacing(i - 2));
            Ok(w[0] * values[i] + w[1] * values[i - 1] + w[2] * values[i - 2])
        }
        Side::Plus if i + 2 <= last => {
            let w = one_sided_weights(grid.spacing(i), grid.spacing(i + 1));
            Ok(-(w[0] * values[i] + w[1] * values[i + 1] + w[2] * values[i + 2]))
        }
        _ => Err(Error::IndexOutOfRange {
            index: i,
            lo: 0,
            hi: last,
        }),
    }
}

/// `uⁿ`, `u^{n-1}` and the step index of a two-step scheme.
#[derive(Debug, Clone, Copy)]
pub struct TwoStepState<'a> {
    pub current: &'a [f64],
    pub previous: &'a [f64],
    pub n: usize,
}

fn boundary_value(problem: &HjbProblem, grid: &Grid1d, i: usize, t: f64) -> Option<f64> {
    let side = match i {
        0 => 0,
        i if i == grid.intervals() => 1,
        _ => return None,
    };
    match &problem.boundary[side] {
        Boundary::Dirichlet(g) => Some(g(t)),
        _ => None,
    }
}

fn row_from_operator(
    problem: &HjbProblem,
    grid: &Grid1d,
    t: f64,
    i: usize,
    a: Control,
    diag: f64,
    scale: f64,
    rule: DriftRule,
) -> StencilRow {
    let mut row = StencilRow::new(i);
    row.add(i, diag);
    for (j, v) in operator_row_1d(problem, grid, t, i, a, rule) {
        row.add(j, scale * v);
    }
    row.sort();
    row
}

/// BDF2 row: `M = 3/2 I + τLᵃ(t_{n+1})` with one-sided second-order drift,
/// `G_i = (4uⁿ_i - u^{n-1}_i)/2 - τℓ`.
pub fn assemble_bdf2_row(
    problem: &HjbProblem,
    grid: &Grid1d,
    tau: f64,
    t_next: f64,
    i: usize,
    a: Control,
    state: &TwoStepState<'_>,
) -> Result<StencilRow> {
    if state.n < 1 {
        return Err(Error::InvalidProblem("BDF2 rows need two time levels".into()));
    }
    if let Some(g) = boundary_value(problem, grid, i, t_next) {
        return Ok(StencilRow::identity(i, g));
    }
    let mut row = row_from_operator(problem, grid, t_next, i, a, 1.5, tau, DriftRule::Bdf2);
    row.rhs = 0.5 * (4.0 * state.current[i] - state.previous[i])
        - tau * (problem.running_cost)(t_next, [grid.x(i), 0.0], a);
    Ok(row)
}

/// Crank-Nicolson row for a fixed control: `M = I + (τ/2)Lᵃ(t_{n+1})`,
/// `G_i = uⁿ_i - (τ/2)(Lᵃ(t_n)uⁿ + ℓᵃ(t_n) + ℓᵃ(t_{n+1}))_i`. With several
/// controls [`CrankNicolson`] takes a separate supremum in the explicit half.
pub fn assemble_cn_row(
    problem: &HjbProblem,
    grid: &Grid1d,
    tau: f64,
    t_next: f64,
    i: usize,
    a: Control,
    un: &[f64],
) -> Result<StencilRow> {
    if let Some(g) = boundary_value(problem, grid, i, t_next) {
        return Ok(StencilRow::identity(i, g));
    }
    let t_n = t_next - tau;
    let row = row_from_operator(problem, grid, t_next, i, a, 1.0, 0.5 * tau, DriftRule::CentralIfMonotone);
    let explicit: f64 = operator_row_1d(problem, grid, t_n, i, a, DriftRule::CentralIfMonotone)
        .iter()
        .map(|&(j, v)| v * un[j])
        .sum();
    let mut row = row;
    let x = [grid.x(i), 0.0];
    row.rhs = un[i]
        - 0.5 * tau * (explicit + (problem.running_cost)(t_n, x, a) + (problem.running_cost)(t_next, x, a));
    Ok(row)
}

/// BDF2 in time and space; the first step is implicit Euler in time with the
/// same spatial discretization.
pub struct Bdf2 {
    disc: Arc<Discretization>,
    first: MatrixCache,
    main: MatrixCache,
}

impl Bdf2 {
    pub fn new(disc: Arc<Discretization>) -> Self {
        Self {
            disc,
            first: MatrixCache::default(),
            main: MatrixCache::default(),
        }
    }
}

impl Scheme for Bdf2 {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Bdf2
    }

    fn discretization(&self) -> &Discretization {
        &self.disc
    }

    fn policy_problem(&self, n: usize, levels: Levels<'_>) -> Result<PolicyProblem> {
        check_levels(&self.disc, &levels)?;
        let d = &self.disc;
        let t = d.time.t(n + 1);
        let ti = d.problem.time_independent;
        match levels.previous {
            Some(prev) if n >= 1 => {
                let m = self
                    .main
                    .get(ti, || assemble_operator_1d(d, t, 1.5, d.tau(), DriftRule::Bdf2))?;
                let base: Vec<f64> = levels
                    .current
                    .iter()
                    .zip(prev)
                    .map(|(u, v)| 0.5 * (4.0 * u - v))
                    .collect();
                PolicyProblem::new(m, standard_rhs(d, &base, t, t))
            }
            _ => {
                let m = self
                    .first
                    .get(ti, || assemble_operator_1d(d, t, 1.0, d.tau(), DriftRule::Bdf2))?;
                PolicyProblem::new(m, standard_rhs(d, levels.current, t, t))
            }
        }
    }
}

/// `u¹` from `u⁰` by the BDF2 start-up rule.
pub fn bdf2_first_step(disc: Arc<Discretization>, u0: &[f64], cfg: &HowardConfig) -> Result<Vec<f64>> {
    Bdf2::new(disc)
        .step(0, Levels::one(u0), None, cfg)
        .map(|o| o.values)
}

/// Crank-Nicolson with centred drift where it keeps the M-matrix sign pattern,
/// optionally started with two implicit Euler steps:
/// `(u^{n+1} - uⁿ)/τ + ½H(t_{n+1}, u^{n+1}) + ½H(t_n, uⁿ) = 0` with
/// `H(t, u) = sup_a (Lᵃ(t)u + ℓᵃ(t))`, each half optimised on its own.
pub struct CrankNicolson {
    disc: Arc<Discretization>,
    rannacher: bool,
    ie: ImplicitEuler,
    left: MatrixCache,
    right: MatrixCache,
}

impl CrankNicolson {
    pub fn new(disc: Arc<Discretization>, rannacher: bool) -> Self {
        Self {
            ie: ImplicitEuler::new(disc.clone()),
            disc,
            rannacher,
            left: MatrixCache::default(),
            right: MatrixCache::default(),
        }
    }

    /// Steps `n = 0, 1` use implicit Euler rows in Rannacher mode.
    pub fn uses_euler(&self, n: usize) -> bool {
        self.rannacher && n < 2
    }
}

impl Scheme for CrankNicolson {
    fn kind(&self) -> SchemeKind {
        if self.rannacher {
            SchemeKind::CnRannacher
        } else {
            SchemeKind::Cn
        }
    }

    fn discretization(&self) -> &Discretization {
        &self.disc
    }

    fn policy_problem(&self, n: usize, levels: Levels<'_>) -> Result<PolicyProblem> {
        if self.uses_euler(n) {
            return self.ie.policy_problem(n, levels);
        }
        check_levels(&self.disc, &levels)?;
        let d = &self.disc;
        let (t_n, t_next, tau) = (d.time.t(n), d.time.t(n + 1), d.tau());
        let ti = d.problem.time_independent;
        let left = self.left.get(ti, || {
            assemble_operator_1d(d, t_next, 1.0, 0.5 * tau, DriftRule::CentralIfMonotone)
        })?;
        let right = self.right.get(ti, || {
            assemble_operator_1d(d, t_n, 0.0, 1.0, DriftRule::CentralIfMonotone)
        })?;
        let p = d.controls.len();
        let cost_n = d.running_costs(t_n);
        let cost_next = d.running_costs(t_next);
        let un = levels.current;
        let mut rhs = vec![0.0; d.len() * p];
        rhs.par_chunks_mut(p).enumerate().for_each(|(k, g)| {
            if let Some(v) = d.dirichlet(k, t_next) {
                g.fill(v);
                return;
            }
            // sup_a (Lᵃ(t_n)uⁿ + ℓᵃ(t_n))_k
            let h = (0..p)
                .map(|a| right.apply_row(k, a, un) + cost_n[k * p + a])
                .fold(f64::NEG_INFINITY, f64::max);
            for (a, gi) in g.iter_mut().enumerate() {
                *gi = un[k] - 0.5 * tau * (h + cost_next[k * p + a]);
            }
        });
        PolicyProblem::new(left, rhs)
    }
}

/// Nine-point row of the implicit scheme on the periodic square:
/// `M = I + τ(-½(s₁²D_xx + 2s₁s₂D_xy + s₂²D_yy) + b·D⁰ + f)`, `G = uⁿ - τℓ(t_{n+1})`.
pub fn assemble_fd2d_row(
    problem: &HjbProblem,
    grid: &PeriodicGrid2d,
    tau: f64,
    t_next: f64,
    (i, j): (usize, usize),
    a: Control,
    un: &[f64],
) -> Result<StencilRow> {
    let n = grid.points();
    if i >= n || j >= n || un.len() != grid.len() {
        return Err(Error::IndexOutOfRange {
            index: i.max(j),
            lo: 0,
            hi: n - 1,
        });
    }
    let mut row = fd2d_matrix_row(problem, grid, tau, t_next, i, j, a);
    row.rhs = un[grid.index(i, j)] - tau * (problem.running_cost)(t_next, grid.point(i, j), a);
    Ok(row)
}

fn fd2d_matrix_row(
    problem: &HjbProblem,
    grid: &PeriodicGrid2d,
    tau: f64,
    t: f64,
    i: usize,
    j: usize,
    a: Control,
) -> StencilRow {
    let h = grid.spacing();
    let c = problem.coefficients(t, grid.point(i, j), a);
    let [s1, s2] = c.sigma;
    let [b1, b2] = c.drift;
    let at = |di: isize, dj: isize| {
        grid.index(
            grid.wrap(i as isize + di),
            grid.wrap(j as isize + dj),
        )
    };
    let k = tau / (h * h);
    let mut row = StencilRow::new(grid.index(i, j));
    row.add(at(0, 0), 1.0 + k * (s1 * s1 + s2 * s2) + tau * c.discount);
    row.add(at(1, 0), -0.5 * k * s1 * s1 + tau * b1 / (2.0 * h));
    row.add(at(-1, 0), -0.5 * k * s1 * s1 - tau * b1 / (2.0 * h));
    row.add(at(0, 1), -0.5 * k * s2 * s2 + tau * b2 / (2.0 * h));
    row.add(at(0, -1), -0.5 * k * s2 * s2 - tau * b2 / (2.0 * h));
    let corner = 0.25 * k * s1 * s2;
    row.add(at(1, 1), -corner);
    row.add(at(-1, -1), -corner);
    row.add(at(1, -1), corner);
    row.add(at(-1, 1), corner);
    row.sort();
    row
}

/// Implicit Euler with the nine-point centred stencil on the periodic square.
pub struct NinePoint {
    disc: Arc<Discretization>,
}

impl NinePoint {
    pub fn new(disc: Arc<Discretization>) -> Self {
        Self { disc }
    }

    fn grid(&self) -> Result<&PeriodicGrid2d> {
        self.disc
            .space
            .torus()
            .ok_or_else(|| Error::InvalidGrid("periodic 2D grid required".into()))
    }
}

impl Scheme for NinePoint {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Fd2d
    }

    fn discretization(&self) -> &Discretization {
        &self.disc
    }

    fn policy_problem(&self, n: usize, levels: Levels<'_>) -> Result<PolicyProblem> {
        check_levels(&self.disc, &levels)?;
        let d = &self.disc;
        let grid = self.grid()?;
        let t = d.time.t(n + 1);
        let (m, _) = ControlledMatrix::assemble(d.len(), d.controls.len(), 9, |k, p| {
            let (i, j) = grid.split(k);
            fd2d_matrix_row(&d.problem, grid, d.tau(), t, i, j, d.controls[p])
        })?;
        PolicyProblem::new(Arc::new(m), standard_rhs(d, levels.current, t, t))
    }
}
