//! Truncation-error ratio tests on a manufactured smooth solution.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid1d, TimeGrid};
use crate::problem::{Boundary, Control, ControlSet, HjbProblem};
use crate::scheme::{build_scheme, Discretization, Levels, SchemeKind, SpaceGrid};

const SIGMA: f64 = 0.5;
const DISCOUNT: f64 = 0.2;
const HORIZON: f64 = 0.5;

fn v(t: f64, x: f64) -> f64 {
    (-t).exp() * (x.sin() + 0.5 * (2.0 * x).cos())
}

fn drift(x: f64) -> f64 {
    x.cos()
}

/// `v = e^{-t}(sin x + ½cos 2x)` on `[0, 2π]` with `σ = ½`, `b = cos x`,
/// `f = 0.2`, Dirichlet data from `v`, and the running cost that makes `v` exact.
pub fn manufactured_1d() -> HjbProblem {
    let ell = |t: f64, x: f64, _: Control| {
        let e = (-t).exp();
        let vt = -v(t, x);
        let vx = e * (x.cos() - (2.0 * x).sin());
        let vxx = e * (-x.sin() - 2.0 * (2.0 * x).cos());
        -vt + 0.5 * SIGMA * SIGMA * vxx - drift(x) * vx - DISCOUNT * v(t, x)
    };
    let upper = 2.0 * std::f64::consts::PI;
    HjbProblem::one_d(
        "manufactured",
        HORIZON,
        [0.0, upper],
        |x| v(0.0, x),
        ControlSet::Finite(vec![Control::scalar(0.0)]),
        [
            Boundary::Dirichlet(Arc::new(|t| v(t, 0.0))),
            Boundary::Dirichlet(Arc::new(move |t| v(t, upper))),
        ],
    )
    .with_sigma_1d(|_, _, _| SIGMA)
    .with_drift_1d(|_, x, _| drift(x))
    .with_discount_1d(|_, _, _| DISCOUNT)
    .with_running_cost_1d(ell)
    .with_exact_1d(v)
    .time_dependent()
}

/// `J = 40·2^k` intervals and `N = 10·2^k` steps, so `τ` and `Δx` halve together.
pub fn manufactured_discretization(level: u32) -> Result<Arc<Discretization>> {
    let s = 1usize << level;
    let problem = manufactured_1d();
    Ok(Arc::new(Discretization::new(
        Arc::new(problem),
        SpaceGrid::Line(Grid1d::uniform(0.0, 2.0 * std::f64::consts::PI, 40 * s)?),
        TimeGrid::new(HORIZON, 10 * s)?,
    )?))
}

/// `max_i |sup_a (Mᵃ v^{n+1} - Gᵃ(vⁿ, v^{n-1}))_i| / τ` over rows at least
/// `margin` nodes away from either end, with `v` the exact solution.
pub fn truncation_residual(kind: SchemeKind, disc: Arc<Discretization>, n: usize, margin: usize) -> Result<f64> {
    if n >= disc.time.steps() {
        return Err(Error::Config(format!("step {n} is past the last step")));
    }
    let exact = |m: usize| {
        disc.exact_values(disc.time.t(m))
            .ok_or_else(|| Error::Config("problem has no exact solution".into()))
    };
    let next = exact(n + 1)?;
    let cur = exact(n)?;
    let prev = if n > 0 { Some(exact(n - 1)?) } else { None };
    let scheme = build_scheme(kind, disc.clone())?;
    let levels = match (&prev, kind.is_two_step()) {
        (Some(p), true) => Levels::two(&cur, p),
        _ => Levels::one(&cur),
    };
    let r = scheme.policy_problem(n, levels)?.residual(&next)?;
    let len = r.len();
    if 2 * margin >= len {
        return Err(Error::EmptySelection);
    }
    let worst = r[margin..len - margin].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(worst / disc.tau())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyRow {
    pub level: u32,
    pub tau: f64,
    pub dx: f64,
    pub residual: f64,
    /// `residual_{k-1} / residual_k`.
    pub ratio: Option<f64>,
}

/// Truncation residual at `t = T/2` on the manufactured problem, per level.
/// Two nodes at each end are skipped, where the one-sided drift stencils
/// degrade to first order.
pub fn consistency_study(kind: SchemeKind, levels: &[u32]) -> Result<Vec<ConsistencyRow>> {
    let mut rows: Vec<ConsistencyRow> = Vec::with_capacity(levels.len());
    for &k in levels {
        let disc = manufactured_discretization(k)?;
        let residual = truncation_residual(kind, disc.clone(), disc.time.steps() / 2, 2)?;
        let ratio = rows.last().map(|r| r.residual / residual);
        rows.push(ConsistencyRow {
            level: k,
            tau: disc.tau(),
            dx: disc.space.dx(),
            residual,
            ratio,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_solution_satisfies_the_equation() {
        // v_t + (-½σ²v_xx + b v_x + f v + ℓ) at a sample point, by central differences
        let p = manufactured_1d();
        let (t, x, h) = (0.2, 1.3, 1e-4);
        let c = p.coefficients(t, [x, 0.0], Control::scalar(0.0));
        let vt = (v(t + h, x) - v(t - h, x)) / (2.0 * h);
        let vx = (v(t, x + h) - v(t, x - h)) / (2.0 * h);
        let vxx = (v(t, x + h) - 2.0 * v(t, x) + v(t, x - h)) / (h * h);
        let lhs = vt - 0.5 * c.sigma[0].powi(2) * vxx + c.drift[0] * vx + c.discount * v(t, x) + c.running;
        assert!(lhs.abs() < 1e-5, "{lhs}");
    }

    #[test]
    fn implicit_euler_is_first_order() {
        let rows = consistency_study(SchemeKind::Ie, &[0, 1, 2]).unwrap();
        let r = rows[2].ratio.unwrap();
        assert!((r - 2.0).abs() < 0.3, "{rows:?}");
    }
}
