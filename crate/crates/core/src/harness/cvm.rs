//! Estimates of the consistency constant `C^v_M` of the monotone schemes,
//! which sets the scale below which `c0` must not go.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::d2_nonuniform;
use crate::scheme::{Discretization, SpaceGrid};

/// Sup norms of the derivatives entering the truncation bounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DerivativeNorms {
    /// `‖v_tt‖∞`.
    pub vtt: f64,
    /// `max_k ‖∂²v / ∂x^k ∂y^{2-k}‖∞`.
    pub d2: f64,
    /// `max_k ‖∂⁴v / ∂x^k ∂y^{4-k}‖∞`.
    pub d4: f64,
    /// `‖max_a |b(·, a)| v_xx‖∞` (1D only).
    pub drift_vxx: f64,
}

/// Truncation bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CvmFormula {
    /// Implicit Euler with upwind drift: `½‖v_tt‖ + ½‖|b| v_xx‖`.
    ImplicitEulerUpwind,
    /// Semi-Lagrangian in 2D with `Δx = κτ`: `½‖v_tt‖ + ⅔‖D⁴v‖ + (κ²/8)‖D²v‖`.
    SemiLagrangian2d { dx_over_tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvmEstimate {
    pub value: f64,
    pub norms: DerivativeNorms,
    /// Set when the derivatives were taken from a numerical solution by
    /// finite differences (the estimate is then only indicative).
    pub rough: bool,
}

pub fn cvm_from_norms(formula: CvmFormula, n: &DerivativeNorms) -> f64 {
    match formula {
        CvmFormula::ImplicitEulerUpwind => 0.5 * n.vtt + 0.5 * n.drift_vxx,
        CvmFormula::SemiLagrangian2d { dx_over_tau } => {
            0.5 * n.vtt + 2.0 / 3.0 * n.d4 + dx_over_tau * dx_over_tau / 8.0 * n.d2
        }
    }
}

/// Derivative norms of a 1D numerical trajectory `u⁰ … u^N` by finite differences.
pub fn derivative_norms_1d(disc: &Discretization, trajectory: &[Vec<f64>]) -> Result<DerivativeNorms> {
    let grid = disc
        .space
        .line()
        .ok_or_else(|| Error::InvalidGrid("one-dimensional grid required".into()))?;
    if trajectory.len() < 3 {
        return Err(Error::Config("need at least three time levels".into()));
    }
    let tau = disc.tau();
    let mut out = DerivativeNorms::default();
    for w in trajectory.windows(3) {
        for k in 0..grid.len() {
            let vtt = (w[2][k] - 2.0 * w[1][k] + w[0][k]) / (tau * tau);
            out.vtt = out.vtt.max(vtt.abs());
        }
    }
    for (n, u) in trajectory.iter().enumerate() {
        let t = disc.time.t(n);
        for k in 1..grid.intervals() {
            let vxx = d2_nonuniform(u, grid, k)?;
            let x = [grid.x(k), 0.0];
            let b = disc
                .controls
                .iter()
                .map(|a| disc.problem.coefficients(t, x, *a).drift[0].abs())
                .fold(0.0, f64::max);
            out.d2 = out.d2.max(vxx.abs());
            out.drift_vxx = out.drift_vxx.max(b * vxx.abs());
        }
    }
    Ok(out)
}

/// Derivative norms of a function on the periodic square, from its nodal values
/// at every time level, by centred finite differences.
pub fn derivative_norms_2d(disc: &Discretization, trajectory: &[Vec<f64>]) -> Result<DerivativeNorms> {
    let g = disc
        .space
        .torus()
        .ok_or_else(|| Error::InvalidGrid("periodic 2D grid required".into()))?;
    if trajectory.len() < 3 {
        return Err(Error::Config("need at least three time levels".into()));
    }
    let tau = disc.tau();
    let h = g.spacing();
    let mut out = DerivativeNorms::default();
    for w in trajectory.windows(3) {
        for k in 0..g.len() {
            out.vtt = out.vtt.max(((w[2][k] - 2.0 * w[1][k] + w[0][k]) / (tau * tau)).abs());
        }
    }
    // 1D weights of the centred second and fourth differences
    let d2w = [1.0, -2.0, 1.0];
    let d4w = [1.0, -4.0, 6.0, -4.0, 1.0];
    let mixed = |u: &[f64], i: usize, j: usize, wx: &[f64], wy: &[f64]| -> f64 {
        let (ox, oy) = ((wx.len() / 2) as isize, (wy.len() / 2) as isize);
        let mut s = 0.0;
        for (a, cx) in wx.iter().enumerate() {
            for (b, cy) in wy.iter().enumerate() {
                let ii = g.wrap(i as isize + a as isize - ox);
                let jj = g.wrap(j as isize + b as isize - oy);
                s += cx * cy * u[g.index(ii, jj)];
            }
        }
        s
    };
    let d1w = [-0.5, 0.0, 0.5];
    let d3w = [-0.5, 1.0, 0.0, -1.0, 0.5];
    let one = [1.0];
    for u in trajectory {
        for i in 0..g.points() {
            for j in 0..g.points() {
                let second = [
                    mixed(u, i, j, &d2w, &one),
                    mixed(u, i, j, &d1w, &d1w),
                    mixed(u, i, j, &one, &d2w),
                ];
                let fourth = [
                    mixed(u, i, j, &d4w, &one),
                    mixed(u, i, j, &d3w, &d1w),
                    mixed(u, i, j, &d2w, &d2w),
                    mixed(u, i, j, &d1w, &d3w),
                    mixed(u, i, j, &one, &d4w),
                ];
                for s in second {
                    out.d2 = out.d2.max(s.abs() / (h * h));
                }
                for f in fourth {
                    out.d4 = out.d4.max(f.abs() / (h * h * h * h));
                }
            }
        }
    }
    Ok(out)
}

/// `C^v_M` from a stored numerical trajectory.
pub fn estimate_cvm(disc: &Discretization, trajectory: &[Vec<f64>], formula: CvmFormula) -> Result<CvmEstimate> {
    let norms = match disc.space {
        SpaceGrid::Line(_) => derivative_norms_1d(disc, trajectory)?,
        SpaceGrid::Torus(_) => derivative_norms_2d(disc, trajectory)?,
    };
    Ok(CvmEstimate {
        value: cvm_from_norms(formula, &norms),
        norms,
        rough: true,
    })
}

/// The bound for the periodic 2D problem from its analytic derivatives:
/// `v_tt = 0` and `‖D²v‖ = ‖D⁴v‖ = 2`, with `Δx = 4πτ`.
pub fn diffusion_2d_analytic_cvm() -> CvmEstimate {
    let norms = DerivativeNorms {
        vtt: 0.0,
        d2: 2.0,
        d4: 2.0,
        drift_vxx: 0.0,
    };
    let formula = CvmFormula::SemiLagrangian2d {
        dx_over_tau: 4.0 * std::f64::consts::PI,
    };
    CvmEstimate {
        value: cvm_from_norms(formula, &norms),
        norms,
        rough: false,
    }
}
