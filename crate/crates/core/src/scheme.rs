//! Shared discretization context and the one-step scheme interface.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use arrayvec::ArrayVec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{d2_weights, Grid1d, PeriodicGrid2d, TimeGrid};
use crate::howard::{ControlledMatrix, HowardConfig, PolicyProblem};
use crate::problem::{Boundary, Control, HjbProblem, Point};

/// Spatial mesh of a discretization.
#[derive(Debug, Clone)]
pub enum SpaceGrid {
    Line(Grid1d),
    Torus(PeriodicGrid2d),
}

impl SpaceGrid {
    pub fn len(&self) -> usize {
        match self {
            SpaceGrid::Line(g) => g.len(),
            SpaceGrid::Torus(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, k: usize) -> Point {
        match self {
            SpaceGrid::Line(g) => [g.x(k), 0.0],
            SpaceGrid::Torus(g) => {
                let (i, j) = g.split(k);
                g.point(i, j)
            }
        }
    }

    /// `Δx`: largest spacing.
    pub fn dx(&self) -> f64 {
        match self {
            SpaceGrid::Line(g) => g.max_spacing(),
            SpaceGrid::Torus(g) => g.spacing(),
        }
    }

    pub fn dx_min(&self) -> f64 {
        match self {
            SpaceGrid::Line(g) => g.min_spacing(),
            SpaceGrid::Torus(g) => g.spacing(),
        }
    }

    /// Quadrature weights used by the error norms.
    pub fn weights(&self) -> Vec<f64> {
        match self {
            SpaceGrid::Line(g) => g.trapezoid_weights(),
            SpaceGrid::Torus(g) => g.node_weights(),
        }
    }

    pub fn line(&self) -> Option<&Grid1d> {
        match self {
            SpaceGrid::Line(g) => Some(g),
            SpaceGrid::Torus(_) => None,
        }
    }

    pub fn torus(&self) -> Option<&PeriodicGrid2d> {
        match self {
            SpaceGrid::Torus(g) => Some(g),
            SpaceGrid::Line(_) => None,
        }
    }
}

/// A problem together with its space, time and control meshes.
pub struct Discretization {
    pub problem: Arc<HjbProblem>,
    pub space: SpaceGrid,
    pub time: TimeGrid,
    pub controls: Vec<Control>,
    running: OnceLock<Vec<f64>>,
}

impl fmt::Debug for Discretization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Discretization")
            .field("problem", &self.problem.name)
            .field("nodes", &self.space.len())
            .field("steps", &self.time.steps())
            .field("controls", &self.controls.len())
            .finish()
    }
}

impl Discretization {
    pub fn new(problem: Arc<HjbProblem>, space: SpaceGrid, time: TimeGrid) -> Result<Self> {
        problem.validate()?;
        match (&space, problem.dim) {
            (SpaceGrid::Line(g), 1) => {
                let [lo, hi] = problem.domain[0];
                let tol = 1e-12 * (hi - lo).abs().max(1.0);
                if (g.lower() - lo).abs() > tol || (g.upper() - hi).abs() > tol {
                    return Err(Error::InvalidGrid(format!(
                        "grid [{}, {}] does not span the domain [{lo}, {hi}]",
                        g.lower(),
                        g.upper()
                    )));
                }
                if problem.boundary.iter().any(|b| matches!(b, Boundary::Periodic)) {
                    return Err(Error::InvalidProblem(
                        "periodic boundaries are only supported in two dimensions".into(),
                    ));
                }
            }
            (SpaceGrid::Torus(_), 2) => {}
            _ => {
                return Err(Error::InvalidGrid(format!(
                    "grid does not match a {}-dimensional problem",
                    problem.dim
                )))
            }
        }
        if (time.horizon() - problem.horizon).abs() > 1e-12 * problem.horizon {
            return Err(Error::InvalidGrid(format!(
                "time grid horizon {} differs from problem horizon {}",
                time.horizon(),
                problem.horizon
            )));
        }
        let controls = problem.controls.discretize();
        Ok(Self {
            problem,
            space,
            time,
            controls,
            running: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.time.tau()
    }

    pub fn point(&self, k: usize) -> Point {
        self.space.point(k)
    }

    pub fn initial_values(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.problem.initial_value(self.point(k)))
            .collect()
    }

    /// Exact solution at `t` sampled on the nodes, when the problem has one.
    pub fn exact_values(&self, t: f64) -> Option<Vec<f64>> {
        let exact = self.problem.exact.as_ref()?;
        Some((0..self.len()).map(|k| exact(t, self.point(k))).collect())
    }

    /// Boundary condition governing node `k`, if it is a boundary node of a 1D grid.
    pub fn boundary_at(&self, k: usize) -> Option<&Boundary> {
        match &self.space {
            SpaceGrid::Line(g) if k == 0 => Some(&self.problem.boundary[0]),
            SpaceGrid::Line(g) if k == g.intervals() => Some(&self.problem.boundary[1]),
            _ => None,
        }
    }

    /// Dirichlet value at node `k` and time `t`, if node `k` carries one.
    pub fn dirichlet(&self, k: usize, t: f64) -> Option<f64> {
        match self.boundary_at(k) {
            Some(Boundary::Dirichlet(g)) => Some(g(t)),
            _ => None,
        }
    }

    /// `ℓ(t, x_k, a_p)` for all nodes and controls at `k * P + p`; cached for
    /// time-independent problems.
    pub fn running_costs(&self, t: f64) -> std::borrow::Cow<'_, [f64]> {
        let compute = || {
            let p = self.controls.len();
            let mut out = vec![0.0; self.len() * p];
            out.par_chunks_mut(p).enumerate().for_each(|(k, row)| {
                let x = self.point(k);
                for (v, a) in row.iter_mut().zip(&self.controls) {
                    *v = (self.problem.running_cost)(t, x, *a);
                }
            });
            out
        };
        if self.problem.time_independent {
            std::borrow::Cow::Borrowed(self.running.get_or_init(compute))
        } else {
            std::borrow::Cow::Owned(compute())
        }
    }
}

/// Scheme identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Ie,
    Sl,
    Bdf2,
    Cn,
    CnRannacher,
    Fd2d,
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Ie => "ie",
            SchemeKind::Sl => "sl",
            SchemeKind::Bdf2 => "bdf2",
            SchemeKind::Cn => "cn",
            SchemeKind::CnRannacher => "cn-rannacher",
            SchemeKind::Fd2d => "fd2d",
        }
    }

    pub fn is_monotone(&self) -> bool {
        matches!(self, SchemeKind::Ie | SchemeKind::Sl)
    }

    pub fn is_two_step(&self) -> bool {
        matches!(self, SchemeKind::Bdf2)
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ie" => SchemeKind::Ie,
            "sl" => SchemeKind::Sl,
            "bdf2" => SchemeKind::Bdf2,
            "cn" => SchemeKind::Cn,
            "cn-rannacher" | "cnr" => SchemeKind::CnRannacher,
            "fd2d" => SchemeKind::Fd2d,
            other => return Err(Error::Config(format!("unknown scheme '{other}'"))),
        })
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Time levels consumed by a step: `uⁿ` and, for two-step schemes, `u^{n-1}`.
#[derive(Debug, Clone, Copy)]
pub struct Levels<'a> {
    pub current: &'a [f64],
    pub previous: Option<&'a [f64]>,
}

impl<'a> Levels<'a> {
    pub fn one(current: &'a [f64]) -> Self {
        Self {
            current,
            previous: None,
        }
    }

    pub fn two(current: &'a [f64], previous: &'a [f64]) -> Self {
        Self {
            current,
            previous: Some(previous),
        }
    }
}

/// Result of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub values: Vec<f64>,
    /// Optimal control index per node.
    pub policy: Vec<usize>,
    /// Howard iterations (0 for explicit schemes).
    pub iterations: usize,
    /// `‖F(u^{n+1})‖∞` of the solved system.
    pub residual: f64,
}

/// A one-step (or two-step) scheme in the form `sup_a (Mᵃ u^{n+1} - Gᵃ) = 0`.
pub trait Scheme: Send + Sync {
    fn kind(&self) -> SchemeKind;

    fn discretization(&self) -> &Discretization;

    /// Explicit schemes have `Mᵃ = I`.
    fn is_explicit(&self) -> bool {
        false
    }

    /// The system producing `u^{n+1}` from the given levels (`n` indexes `t_n`).
    fn policy_problem(&self, n: usize, levels: Levels<'_>) -> Result<PolicyProblem>;

    /// Advances from `t_n` to `t_{n+1}`.
    fn step(
        &self,
        n: usize,
        levels: Levels<'_>,
        warm_policy: Option<&[usize]>,
        cfg: &HowardConfig,
    ) -> Result<StepOutcome> {
        let pp = self.policy_problem(n, levels)?;
        let res = pp
            .howard_solve(levels.current, warm_policy, cfg)?
            .into_converged()?;
        Ok(StepOutcome {
            values: res.x,
            policy: res.policy,
            iterations: res.iterations,
            residual: res.residual,
        })
    }
}

/// Builds a scheme of the given kind on a shared discretization.
pub fn build_scheme(kind: SchemeKind, disc: Arc<Discretization>) -> Result<Box<dyn Scheme>> {
    use crate::highorder::{Bdf2, CrankNicolson, NinePoint};
    use crate::monotone::{ImplicitEuler, SemiLagrangian};
    let two_d = matches!(disc.space, SpaceGrid::Torus(_));
    let s: Box<dyn Scheme> = match kind {
        SchemeKind::Ie if !two_d => Box::new(ImplicitEuler::new(disc)),
        SchemeKind::Sl => Box::new(SemiLagrangian::new(disc)),
        SchemeKind::Bdf2 if !two_d => Box::new(Bdf2::new(disc)),
        SchemeKind::Cn if !two_d => Box::new(CrankNicolson::new(disc, false)),
        SchemeKind::CnRannacher if !two_d => Box::new(CrankNicolson::new(disc, true)),
        SchemeKind::Fd2d if two_d => Box::new(NinePoint::new(disc)),
        _ => {
            return Err(Error::Config(format!(
                "scheme '{kind}' is not available in {} dimension(s)",
                if two_d { 2 } else { 1 }
            )))
        }
    };
    Ok(s)
}

/// Drift discretization of a 1D operator row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftRule {
    /// First-order upwind differences over the local spacing.
    Upwind,
    /// Second-order one-sided three-point differences, upwind where they do not fit.
    Bdf2,
    /// Centred differences where the row stays an M-matrix row, upwind elsewhere.
    CentralIfMonotone,
}

pub type OperatorRow = ArrayVec<(usize, f64), 5>;

fn push(row: &mut OperatorRow, j: usize, v: f64) {
    if v == 0.0 {
        return;
    }
    if let Some(e) = row.iter_mut().find(|e| e.0 == j) {
        e.1 += v;
    } else {
        row.push((j, v));
    }
}

/// Weights of the backward three-point derivative at `i`
/// (on `u_i, u_{i-1}, u_{i-2}`); mirrored with a sign flip for the forward one.
pub fn one_sided_weights(h1: f64, h2: f64) -> [f64; 3] {
    [
        (2.0 * h1 + h2) / (h1 * (h1 + h2)),
        -(h1 + h2) / (h1 * h2),
        h1 / (h2 * (h1 + h2)),
    ]
}

/// Row `k` of `Lᵃ(t) u = -½σ²D²u + b⁺D⁻u - b⁻D⁺u + f u` on a 1D grid.
/// Boundary nodes (influx rows) keep only the one-sided interior drift and `f`.
pub fn operator_row_1d(
    problem: &HjbProblem,
    grid: &Grid1d,
    t: f64,
    k: usize,
    a: Control,
    rule: DriftRule,
) -> OperatorRow {
    let last = grid.intervals();
    let x = [grid.x(k), 0.0];
    let c = problem.coefficients(t, x, a);
    let s2 = c.sigma[0] * c.sigma[0];
    let b = c.drift[0];
    let (bp, bm) = (b.max(0.0), (-b).max(0.0));
    let mut row = OperatorRow::new();
    push(&mut row, k, c.discount);
    let interior = k > 0 && k < last;
    let mut d2 = (0.0, 0.0, 0.0);
    if interior {
        d2 = d2_weights(grid, k);
        push(&mut row, k - 1, -0.5 * s2 * d2.0);
        push(&mut row, k, -0.5 * s2 * d2.1);
        push(&mut row, k + 1, -0.5 * s2 * d2.2);
    }
    if interior && rule == DriftRule::CentralIfMonotone && b != 0.0 {
        let hm = grid.spacing(k - 1);
        let hp = grid.spacing(k);
        let wm = -hp / (hm * (hm + hp));
        let w0 = (hp - hm) / (hm * hp);
        let wp = hm / (hp * (hm + hp));
        let lower = -0.5 * s2 * d2.0 + b * wm;
        let upper = -0.5 * s2 * d2.2 + b * wp;
        if lower <= 0.0 && upper <= 0.0 {
            push(&mut row, k - 1, b * wm);
            push(&mut row, k, b * w0);
            push(&mut row, k + 1, b * wp);
            return row;
        }
    }
    if bp > 0.0 && k > 0 {
        if rule == DriftRule::Bdf2 && k >= 2 {
            let w = one_sided_weights(grid.spacing(k - 1), grid.spacing(k - 2));
            push(&mut row, k, bp * w[0]);
            push(&mut row, k - 1, bp * w[1]);
            push(&mut row, k - 2, bp * w[2]);
        } else {
            let h = grid.spacing(k - 1);
            push(&mut row, k, bp / h);
            push(&mut row, k - 1, -bp / h);
        }
    }
    if bm > 0.0 && k < last {
        if rule == DriftRule::Bdf2 && k + 2 <= last {
            let w = one_sided_weights(grid.spacing(k), grid.spacing(k + 1));
            push(&mut row, k, bm * w[0]);
            push(&mut row, k + 1, bm * w[1]);
            push(&mut row, k + 2, bm * w[2]);
        } else {
            let h = grid.spacing(k);
            push(&mut row, k, bm / h);
            push(&mut row, k + 1, -bm / h);
        }
    }
    row
}

/// Matrices `diag·I + scale·Lᵃ(t)` for all controls on a 1D grid, with identity
/// rows at Dirichlet nodes.
pub(crate) fn assemble_operator_1d(
    disc: &Discretization,
    t: f64,
    diag: f64,
    scale: f64,
    rule: DriftRule,
) -> Result<ControlledMatrix> {
    let grid = disc
        .space
        .line()
        .ok_or_else(|| Error::InvalidGrid("one-dimensional grid required".into()))?;
    let width = if rule == DriftRule::Bdf2 { 5 } else { 3 };
    let (m, _) = ControlledMatrix::assemble(disc.len(), disc.controls.len(), width, |k, p| {
        let mut r = crate::stencil::StencilRow::new(k);
        if matches!(disc.boundary_at(k), Some(Boundary::Dirichlet(_))) {
            r.add(k, 1.0);
            return r;
        }
        r.add(k, diag);
        for (j, v) in operator_row_1d(&disc.problem, grid, t, k, disc.controls[p], rule) {
            r.add(j, scale * v);
        }
        r
    })?;
    Ok(m)
}

/// Cache for matrices that only need rebuilding when coefficients depend on time.
#[derive(Default)]
pub(crate) struct MatrixCache {
    cell: OnceLock<Arc<ControlledMatrix>>,
}

impl MatrixCache {
    pub(crate) fn get(
        &self,
        time_independent: bool,
        build: impl FnOnce() -> Result<ControlledMatrix>,
    ) -> Result<Arc<ControlledMatrix>> {
        if !time_independent {
            return build().map(Arc::new);
        }
        if let Some(m) = self.cell.get() {
            return Ok(m.clone());
        }
        let m = Arc::new(build()?);
        Ok(self.cell.get_or_init(|| m).clone())
    }
}

/// Right-hand sides `Gᵃ_k = base_k - τ ℓ(t, x_k, a)` with Dirichlet rows set to `g(t_dirichlet)`.
pub(crate) fn standard_rhs(disc: &Discretization, base: &[f64], t_cost: f64, t_dirichlet: f64) -> Vec<f64> {
    let p = disc.controls.len();
    let tau = disc.tau();
    let costs = disc.running_costs(t_cost);
    let mut rhs = vec![0.0; base.len() * p];
    rhs.par_chunks_mut(p)
        .zip(costs.par_chunks(p))
        .zip(base.par_iter())
        .enumerate()
        .for_each(|(k, ((g, l), &b))| {
            if let Some(v) = disc.dirichlet(k, t_dirichlet) {
                g.fill(v);
            } else {
                for (gi, li) in g.iter_mut().zip(l) {
                    *gi = b - tau * li;
                }
            }
        });
    rhs
}

pub(crate) fn check_levels(disc: &Discretization, levels: &Levels<'_>) -> Result<()> {
    let n = disc.len();
    if levels.current.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: levels.current.len(),
        });
    }
    if let Some(p) = levels.previous {
        if p.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: p.len(),
            });
        }
    }
    Ok(())
}
