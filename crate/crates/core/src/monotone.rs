//! Monotone schemes: implicit Euler finite differences and semi-Lagrangian.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{interp_bilinear_unchecked, interp_linear_unchecked, Grid1d};
use crate::howard::{ControlledMatrix, HowardConfig, PolicyProblem};
use crate::problem::{Boundary, Control, HjbProblem};
use crate::scheme::{
    assemble_operator_1d, check_levels, operator_row_1d, standard_rhs, Discretization, DriftRule,
    Levels, MatrixCache, Scheme, SchemeKind, SpaceGrid, StepOutcome,
};
pub use crate::stencil::StencilRow;

fn dirichlet_1d(problem: &HjbProblem, grid: &Grid1d, i: usize, t: f64) -> Option<f64> {
    let side = if i == 0 {
        0
    } else if i == grid.intervals() {
        1
    } else {
        return None;
    };
    match &problem.boundary[side] {
        Boundary::Dirichlet(g) => Some(g(t)),
        _ => None,
    }
}

/// Row `i` of the implicit Euler scheme: `M = I + τLᵃ(t_{n+1})` with upwind
/// drift, `G_i = uⁿ_i - τℓ(t_{n+1})`.
pub fn assemble_ie_row(
    problem: &HjbProblem,
    grid: &Grid1d,
    tau: f64,
    t_next: f64,
    i: usize,
    a: Control,
    un: &[f64],
) -> Result<StencilRow> {
    if i >= grid.len() || un.len() != grid.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            lo: 0,
            hi: grid.len().saturating_sub(1),
        });
    }
    if let Some(g) = dirichlet_1d(problem, grid, i, t_next) {
        return Ok(StencilRow::identity(i, g));
    }
    let mut row = StencilRow::new(i);
    row.add(i, 1.0);
    for (j, v) in operator_row_1d(problem, grid, t_next, i, a, DriftRule::Upwind) {
        row.add(j, tau * v);
    }
    row.rhs = un[i] - tau * (problem.running_cost)(t_next, [grid.x(i), 0.0], a);
    row.sort();
    Ok(row)
}

/// Implicit Euler with upwind drift on a 1D grid.
pub struct ImplicitEuler {
    disc: Arc<Discretization>,
    cache: MatrixCache,
}

impl ImplicitEuler {
    pub fn new(disc: Arc<Discretization>) -> Self {
        Self {
            disc,
            cache: MatrixCache::default(),
        }
    }

    pub(crate) fn matrix(&self, n: usize) -> Result<Arc<ControlledMatrix>> {
        let d = &self.disc;
        self.cache.get(d.problem.time_independent, || {
            assemble_operator_1d(d, d.time.t(n + 1), 1.0, d.tau(), DriftRule::Upwind)
        })
    }
}

impl Scheme for ImplicitEuler {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Ie
    }

    fn discretization(&self) -> &Discretization {
        &self.disc
    }

    fn policy_problem(&self, n: usize, levels: Levels<'_>) -> Result<PolicyProblem> {
        check_levels(&self.disc, &levels)?;
        let t = self.disc.time.t(n + 1);
        PolicyProblem::new(
            self.matrix(n)?,
            standard_rhs(&self.disc, levels.current, t, t),
        )
    }
}

/// Value `½Σ± uⁿ(x - τb ± √τσ) - τ f uⁿ_k - τℓ` of the semi-Lagrangian
/// scheme for one node and control, coefficients frozen at `t_n`.
fn sl_value(problem: &HjbProblem, space: &SpaceGrid, tau: f64, t: f64, k: usize, a: Control, un: &[f64]) -> f64 {
    let x = space.point(k);
    let c = problem.coefficients(t, x, a);
    let sq = tau.sqrt();
    let mean = match space {
        SpaceGrid::Line(g) => {
            let base = x[0] - tau * c.drift[0];
            let s = sq * c.sigma[0];
            0.5 * (interp_linear_unchecked(g, un, base + s) + interp_linear_unchecked(g, un, base - s))
        }
        SpaceGrid::Torus(g) => {
            let base = [x[0] - tau * c.drift[0], x[1] - tau * c.drift[1]];
            let s = [sq * c.sigma[0], sq * c.sigma[1]];
            0.5 * (interp_bilinear_unchecked(g, un, [base[0] + s[0], base[1] + s[1]])
                + interp_bilinear_unchecked(g, un, [base[0] - s[0], base[1] - s[1]]))
        }
    };
    mean - tau * c.discount * un[k] - tau * c.running
}

fn sl_dirichlet(problem: &HjbProblem, space: &SpaceGrid, k: usize, t: f64) -> Option<f64> {
    match space {
        SpaceGrid::Line(g) => dirichlet_1d(problem, g, k, t),
        SpaceGrid::Torus(_) => None,
    }
}

/// One semi-Lagrangian step: componentwise infimum over `controls` (ties to
/// the smallest index), with the minimizing control indices.
pub fn sl_step_with_policy(
    problem: &HjbProblem,
    space: &SpaceGrid,
    tau: f64,
    t_n: f64,
    un: &[f64],
    controls: &[Control],
) -> Result<(Vec<f64>, Vec<usize>)> {
    if un.len() != space.len() {
        return Err(Error::LengthMismatch {
            expected: space.len(),
            got: un.len(),
        });
    }
    if controls.is_empty() {
        return Err(Error::EmptySelection);
    }
    let t_next = t_n + tau;
    let out: Vec<(f64, usize)> = (0..un.len())
        .into_par_iter()
        .map(|k| {
            if let Some(g) = sl_dirichlet(problem, space, k, t_next) {
                return (g, 0);
            }
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for (p, a) in controls.iter().enumerate() {
                let v = sl_value(problem, space, tau, t_n, k, *a, un);
                if v < best {
                    best = v;
                    arg = p;
                }
            }
            (best, arg)
        })
        .collect();
    Ok(out.into_iter().unzip())
}

/// One semi-Lagrangian step from `uⁿ` at `t_n`.
pub fn sl_step(
    problem: &HjbProblem,
    space: &SpaceGrid,
    tau: f64,
    t_n: f64,
    un: &[f64],
    controls: &[Control],
) -> Result<Vec<f64>> {
    sl_step_with_policy(problem, space, tau, t_n, un, controls).map(|r| r.0)
}

/// Explicit semi-Lagrangian scheme (1D clamped linear or 2D periodic bilinear interpolation).
pub struct SemiLagrangian {
    disc: Arc<Discretization>,
    identity: MatrixCache,
}

impl SemiLagrangian {
    pub fn new(disc: Arc<Discretization>) -> Self {
        Self {
            disc,
            identity: MatrixCache::default(),
        }
    }
}

impl Scheme for SemiLagrangian {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Sl
    }

    fn discretization(&self) -> &Discretization {
        &self.disc
    }

    fn is_explicit(&self) -> bool {
        true
    }

    fn policy_problem(&self, n: usize, levels: Levels<'_>) -> Result<PolicyProblem> {
        check_levels(&self.disc, &levels)?;
        let d = &self.disc;
        let p = d.controls.len();
        let m = self.identity.get(true, || {
            ControlledMatrix::assemble(d.len(), p, 1, |k, _| StencilRow::identity(k, 0.0)).map(|r| r.0)
        })?;
        let (t, tau) = (d.time.t(n), d.tau());
        let mut rhs = vec![0.0; d.len() * p];
        rhs.par_chunks_mut(p).enumerate().for_each(|(k, g)| {
            if let Some(v) = sl_dirichlet(&d.problem, &d.space, k, t + tau) {
                g.fill(v);
            } else {
                for (gi, a) in g.iter_mut().zip(&d.controls) {
                    *gi = sl_value(&d.problem, &d.space, tau, t, k, *a, levels.current);
                }
            }
        });
        PolicyProblem::new(m, rhs)
    }

    fn step(
        &self,
        n: usize,
        levels: Levels<'_>,
        _warm_policy: Option<&[usize]>,
        _cfg: &HowardConfig,
    ) -> Result<StepOutcome> {
        check_levels(&self.disc, &levels)?;
        let d = &self.disc;
        let (values, policy) =
            sl_step_with_policy(&d.problem, &d.space, d.tau(), d.time.t(n), levels.current, &d.controls)?;
        Ok(StepOutcome {
            values,
            policy,
            iterations: 0,
            residual: 0.0,
        })
    }
}

/// `u^{n+1} = S_M(uⁿ)`: direct evaluation for explicit schemes, policy iteration otherwise.
pub fn monotone_step(scheme: &dyn Scheme, n: usize, un: &[f64], cfg: &HowardConfig) -> Result<Vec<f64>> {
    scheme.step(n, Levels::one(un), None, cfg).map(|o| o.values)
}

/// A structural defect found by [`validate_a1`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum A1Violation {
    PositiveOffDiagonal { row: usize, control: usize, col: usize, value: f64 },
    NonPositiveDiagonal { row: usize, control: usize, value: f64 },
    NotDiagonallyDominant { row: usize, control: usize, margin: f64 },
    RhsNotMonotone { row: usize, control: usize, drop: f64 },
}

/// Outcome of the M-matrix / monotonicity audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A1Report {
    pub scheme: String,
    pub rows_checked: usize,
    /// Smallest `M_ii - Σ_{j≠i}|M_ij|` over checked rows.
    pub dominance_margin: f64,
    /// Largest `|Gᵃ(ψ) - Gᵃ(φ)| / ‖ψ - φ‖∞` observed.
    pub lipschitz: f64,
    pub violations: Vec<A1Violation>,
}

impl A1Report {
    pub fn sign_violations(&self) -> usize {
        self.violations
            .iter()
            .filter(|v| matches!(v, A1Violation::PositiveOffDiagonal { .. }))
            .count()
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audits off-diagonal signs, diagonal dominance and monotonicity of `Gᵃ` on
/// `sample_count` random (row, control) pairs (all pairs when `sample_count` is 0).
pub fn validate_a1(scheme: &dyn Scheme, sample_count: usize, seed: u64) -> Result<A1Report> {
    let d = scheme.discretization();
    let n_nodes = d.len();
    let p = d.controls.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 2.min(d.time.steps().saturating_sub(1));
    let base = d.initial_values();
    let scale = base.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let phi: Vec<f64> = base
        .iter()
        .map(|v| v + 0.1 * scale * rng.gen_range(-1.0..1.0))
        .collect();
    let psi: Vec<f64> = phi
        .iter()
        .map(|v| v + 0.1 * scale * rng.gen_range(0.0..1.0))
        .collect();
    let levels = |u: &[f64]| -> Vec<f64> { u.to_vec() };
    let (phi_prev, psi_prev) = (levels(&base), levels(&base));
    let pp_phi = scheme.policy_problem(step, Levels::two(&phi, &phi_prev))?;
    let pp_psi = scheme.policy_problem(step, Levels::two(&psi, &psi_prev))?;
    let dist = phi
        .iter()
        .zip(&psi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let pairs: Vec<(usize, usize)> = if sample_count == 0 || sample_count >= n_nodes * p {
        (0..n_nodes).flat_map(|i| (0..p).map(move |a| (i, a))).collect()
    } else {
        (0..sample_count)
            .map(|_| (rng.gen_range(0..n_nodes), rng.gen_range(0..p)))
            .collect()
    };
    let mut report = A1Report {
        scheme: scheme.kind().to_string(),
        rows_checked: pairs.len(),
        dominance_margin: f64::INFINITY,
        lipschitz: 0.0,
        violations: Vec::new(),
    };
    for (i, a) in pairs {
        let row = pp_phi.row(i, a);
        let diag = row.diagonal();
        if diag <= 0.0 {
            report.violations.push(A1Violation::NonPositiveDiagonal {
                row: i,
                control: a,
                value: diag,
            });
        }
        let mut off = 0.0;
        for (j, v) in row.off_diagonal() {
            off += v.abs();
            if v > 0.0 {
                report.violations.push(A1Violation::PositiveOffDiagonal {
                    row: i,
                    control: a,
                    col: j,
                    value: v,
                });
            }
        }
        let margin = diag - off;
        report.dominance_margin = report.dominance_margin.min(margin);
        if margin <= 0.0 {
            report.violations.push(A1Violation::NotDiagonallyDominant {
                row: i,
                control: a,
                margin,
            });
        }
        let dg = pp_psi.rhs(i, a) - pp_phi.rhs(i, a);
        let tol = 1e-12 * (1.0 + pp_phi.rhs(i, a).abs());
        if dg < -tol {
            report.violations.push(A1Violation::RhsNotMonotone {
                row: i,
                control: a,
                drop: -dg,
            });
        }
        if dist > 0.0 {
            report.lipschitz = report.lipschitz.max(dg.abs() / dist);
        }
    }
    Ok(report)
}

/// Outcome of stepping random ordered pairs `φ ≤ ψ` through a scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub scheme: String,
    pub pairs: usize,
    /// Pairs with `S(φ)_i > S(ψ)_i` for some `i`.
    pub order_violations: usize,
    /// Largest `‖S(φ) - S(ψ)‖∞ / ‖φ - ψ‖∞`.
    pub max_expansion: f64,
}

impl ComparisonReport {
    /// `C` in `‖S(φ) - S(ψ)‖∞ ≤ (1 + Cτ)‖φ - ψ‖∞`.
    pub fn fitted_constant(&self, tau: f64) -> f64 {
        ((self.max_expansion - 1.0) / tau).max(0.0)
    }
}

/// Steps `pairs` random comparable pairs around the initial data at step
/// `min(2, N - 1)` and checks the discrete comparison principle componentwise.
pub fn comparison_audit(scheme: &dyn Scheme, pairs: usize, seed: u64, cfg: &HowardConfig) -> Result<ComparisonReport> {
    let d = scheme.discretization();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 2.min(d.time.steps().saturating_sub(1));
    let base = d.initial_values();
    let scale = base.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut report = ComparisonReport {
        scheme: scheme.kind().to_string(),
        pairs,
        order_violations: 0,
        max_expansion: 0.0,
    };
    for _ in 0..pairs {
        let amp = scale * rng.gen_range(0.01..0.5);
        let phi: Vec<f64> = base.iter().map(|v| v + amp * rng.gen_range(-1.0..1.0)).collect();
        let psi: Vec<f64> = phi.iter().map(|v| v + amp * rng.gen_range(0.0..1.0)).collect();
        let sp = monotone_step(scheme, step, &phi, cfg)?;
        let ss = monotone_step(scheme, step, &psi, cfg)?;
        if sp.iter().zip(&ss).any(|(a, b)| a > b) {
            report.order_violations += 1;
        }
        let num = sp.iter().zip(&ss).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let den = phi.iter().zip(&psi).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if den > 0.0 {
            report.max_expansion = report.max_expansion.max(num / den);
        }
    }
    Ok(report)
}
