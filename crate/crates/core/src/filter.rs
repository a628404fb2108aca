//! The filter function, the ε rules and the filtered time loop.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::howard::HowardConfig;
use crate::scheme::{Levels, Scheme, StepOutcome};

/// `F(x) = x` for `|x| ≤ 1`, `0` otherwise.
#[inline]
pub fn filter_fn(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        x
    } else {
        0.0
    }
}

/// How ε scales with the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsRule {
    /// `ε = c0·max(τ, Δx)`.
    MaxTauDx,
    /// `ε = c0·Δx_min`.
    DxMin,
    /// `ε = c0·τ`.
    Tau,
}

impl FromStr for EpsRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-tau-dx" => Ok(EpsRule::MaxTauDx),
            "dx-min" => Ok(EpsRule::DxMin),
            "tau" => Ok(EpsRule::Tau),
            other => Err(Error::Config(format!("unknown epsilon rule '{other}'"))),
        }
    }
}

impl fmt::Display for EpsRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpsRule::MaxTauDx => "max-tau-dx",
            EpsRule::DxMin => "dx-min",
            EpsRule::Tau => "tau",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub c0: f64,
    pub rule: EpsRule,
}

impl FilterConfig {
    pub fn new(c0: f64, rule: EpsRule) -> Result<Self> {
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(Error::Config(format!("c0 must be positive and finite, got {c0}")));
        }
        Ok(Self { c0, rule })
    }
}

/// `ε` for the given mesh; `dx` is `Δx` or `Δx_min` depending on the rule.
pub fn epsilon(cfg: &FilterConfig, tau: f64, dx: f64) -> f64 {
    match cfg.rule {
        EpsRule::MaxTauDx => cfg.c0 * tau.max(dx),
        EpsRule::DxMin => cfg.c0 * dx,
        EpsRule::Tau => cfg.c0 * tau,
    }
}

/// `u = s_M + ετ F((s_H - s_M)/(ετ))` and the mask of nodes where the
/// monotone value was kept.
pub fn filtered_step(sm: &[f64], sh: &[f64], eps: f64, tau: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    if sm.len() != sh.len() {
        return Err(Error::LengthMismatch {
            expected: sm.len(),
            got: sh.len(),
        });
    }
    let et = eps * tau;
    if !(et > 0.0) {
        return Err(Error::Config(format!("ε·τ must be positive, got {et}")));
    }
    let mut mask = vec![false; sm.len()];
    let values = sm
        .iter()
        .zip(sh)
        .zip(mask.iter_mut())
        .map(|((&m, &h), active)| {
            let f = filter_fn((h - m) / et);
            *active = f == 0.0 && h != m;
            m + et * f
        })
        .collect();
    Ok((values, mask))
}

/// Nodes where the filter fell back to the monotone value, per time step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterActivity {
    pub nodes: usize,
    /// Active node indices of step `n` (producing `u^{n+1}`).
    pub steps: Vec<Vec<u32>>,
}

impl FilterActivity {
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, mask: &[bool]) {
        debug_assert_eq!(mask.len(), self.nodes);
        self.steps.push(
            mask.iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(i, _)| i as u32)
                .collect(),
        );
    }

    pub fn mask(&self, step: usize) -> Vec<bool> {
        let mut m = vec![false; self.nodes];
        for &i in &self.steps[step] {
            m[i as usize] = true;
        }
        m
    }

    pub fn counts(&self) -> Vec<usize> {
        self.steps.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Nodes active at least once.
    pub fn ever_active(&self) -> Vec<bool> {
        let mut m = vec![false; self.nodes];
        for s in &self.steps {
            for &i in s {
                m[i as usize] = true;
            }
        }
        m
    }

    /// Fraction of nodes active at least once.
    pub fn ever_active_fraction(&self) -> f64 {
        if self.nodes == 0 {
            return 0.0;
        }
        self.ever_active().iter().filter(|&&b| b).count() as f64 / self.nodes as f64
    }

    /// Mean over steps of the active-node fraction.
    pub fn mean_fraction(&self) -> f64 {
        if self.steps.is_empty() || self.nodes == 0 {
            return 0.0;
        }
        self.total() as f64 / (self.steps.len() * self.nodes) as f64
    }

    /// Sparse CSV `step,node,active` listing active entries only.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,node,active")?;
        for (n, s) in self.steps.iter().enumerate() {
            for i in s {
                writeln!(w, "{},{},1", n + 1, i)?;
            }
        }
        Ok(())
    }
}

/// Policy-iteration effort over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HowardStats {
    pub steps: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
}

impl HowardStats {
    fn record(&mut self, o: &StepOutcome) {
        self.steps += 1;
        self.total_iterations += o.iterations;
        self.max_iterations = self.max_iterations.max(o.iterations);
        self.max_residual = self.max_residual.max(o.residual);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub total: Duration,
    pub monotone: Duration,
    pub high: Duration,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub store_trajectory: bool,
}

/// Result of a time-stepping run.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    /// `u^N`.
    pub values: Vec<f64>,
    /// `u⁰ … u^N` when requested.
    pub trajectory: Option<Vec<Vec<f64>>>,
    pub activity: FilterActivity,
    /// `ε` used by the filter (0 for monotone runs).
    pub epsilon: f64,
    /// `max_n ‖u^{n+1} - S_M(uⁿ)‖∞ / (ετ)`.
    pub max_proximity: f64,
    /// `max_n ‖S_H - S_M‖∞ / τ`: the filter stays inactive for any `ε` above it.
    pub max_gap: f64,
    pub monotone_stats: HowardStats,
    pub high_stats: HowardStats,
    pub timings: Timings,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn step_error(step: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::StepFailed {
        step,
        source: Box::new(e),
    }
}

fn check_pair(monotone: &dyn Scheme, high: &dyn Scheme) -> Result<()> {
    let (a, b) = (monotone.discretization(), high.discretization());
    if a.len() != b.len() || a.time.steps() != b.time.steps() || a.tau() != b.tau() {
        return Err(Error::Config(
            "monotone and high-order schemes must share the space and time grids".into(),
        ));
    }
    Ok(())
}

/// Filtered time loop: at every step `S_M(uⁿ)` and `S_H(uⁿ, u^{n-1})` are
/// computed independently and blended by [`filtered_step`].
pub fn run_filtered(
    monotone: &dyn Scheme,
    high: &dyn Scheme,
    cfg: &FilterConfig,
    howard: &HowardConfig,
    opts: RunOptions,
) -> Result<SolveOutput> {
    check_pair(monotone, high)?;
    let start = Instant::now();
    let d = monotone.discretization();
    let tau = d.tau();
    let dx = match cfg.rule {
        EpsRule::DxMin => d.space.dx_min(),
        _ => d.space.dx(),
    };
    let eps = epsilon(cfg, tau, dx);
    let et = eps * tau;
    let mut u = d.initial_values();
    let mut prev: Option<Vec<f64>> = None;
    let mut trajectory = opts.store_trajectory.then(|| vec![u.clone()]);
    let mut activity = FilterActivity::new(u.len());
    let (mut ms, mut hs) = (HowardStats::default(), HowardStats::default());
    let mut timings = Timings::default();
    let (mut warm_m, mut warm_h): (Option<Vec<usize>>, Option<Vec<usize>>) = (None, None);
    let mut max_prox = 0.0_f64;
    let mut max_gap = 0.0_f64;
    for n in 0..d.time.steps() {
        let levels = match &prev {
            Some(p) => Levels::two(&u, p),
            None => Levels::one(&u),
        };
        let ((sm, tm), (sh, th)) = rayon::join(
            || timed(|| monotone.step(n, Levels::one(&u), warm_m.as_deref(), howard)),
            || timed(|| high.step(n, levels, warm_h.as_deref(), howard)),
        );
        timings.monotone += tm;
        timings.high += th;
        let sm = sm.map_err(step_error(n))?;
        let sh = sh.map_err(step_error(n))?;
        ms.record(&sm);
        hs.record(&sh);
        let (next, mask) = filtered_step(&sm.values, &sh.values, eps, tau)?;
        let prox = next
            .iter()
            .zip(&sm.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        max_prox = max_prox.max(prox / et);
        let gap = sh
            .values
            .iter()
            .zip(&sm.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        max_gap = max_gap.max(gap / tau);
        activity.push(&mask);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(step_error(n)(Error::NonFinite("filtered solution")));
        }
        warm_m = Some(sm.policy);
        warm_h = Some(sh.policy);
        if let Some(t) = trajectory.as_mut() {
            t.push(next.clone());
        }
        prev = Some(std::mem::replace(&mut u, next));
    }
    timings.total = start.elapsed();
    log::debug!(
        "filtered run {}+{}: {} steps, {} active node-steps",
        monotone.kind(),
        high.kind(),
        d.time.steps(),
        activity.total()
    );
    Ok(SolveOutput {
        values: u,
        trajectory,
        activity,
        epsilon: eps,
        max_proximity: max_prox,
        max_gap,
        monotone_stats: ms,
        high_stats: hs,
        timings,
    })
}

/// Plain time loop `u^{n+1} = S(uⁿ[, u^{n-1}])` for a single scheme, monotone or not.
pub fn run_monotone(scheme: &dyn Scheme, howard: &HowardConfig, opts: RunOptions) -> Result<SolveOutput> {
    let start = Instant::now();
    let d = scheme.discretization();
    let mut u = d.initial_values();
    let mut prev: Option<Vec<f64>> = None;
    let mut trajectory = opts.store_trajectory.then(|| vec![u.clone()]);
    let mut stats = HowardStats::default();
    let mut warm: Option<Vec<usize>> = None;
    for n in 0..d.time.steps() {
        let levels = match &prev {
            Some(p) => Levels::two(&u, p),
            None => Levels::one(&u),
        };
        let out = scheme
            .step(n, levels, warm.as_deref(), howard)
            .map_err(step_error(n))?;
        stats.record(&out);
        if out.values.iter().any(|v| !v.is_finite()) {
            return Err(step_error(n)(Error::NonFinite("solution")));
        }
        warm = Some(out.policy);
        if let Some(t) = trajectory.as_mut() {
            t.push(out.values.clone());
        }
        prev = Some(std::mem::replace(&mut u, out.values));
    }
    let elapsed = start.elapsed();
    Ok(SolveOutput {
        activity: FilterActivity::new(u.len()),
        values: u,
        trajectory,
        epsilon: 0.0,
        max_proximity: 0.0,
        max_gap: 0.0,
        monotone_stats: stats,
        high_stats: HowardStats::default(),
        timings: Timings {
            total: elapsed,
            monotone: elapsed,
            high: Duration::ZERO,
        },
    })
}
