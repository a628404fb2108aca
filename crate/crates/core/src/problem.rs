//! HJB problem descriptions
//! `v_t + sup_a(-½ Tr(σσᵀ D²v) + b·Dv + f v + ℓ) = 0`, `v(0, ·) = v0`,
//! and the three benchmark problems.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// State-space point; one-dimensional problems only use the first coordinate.
pub type Point = [f64; 2];

/// A control value. Scalar controls use the first component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control(pub [f64; 2]);

impl Control {
    pub fn scalar(a: f64) -> Self {
        Control([a, 0.0])
    }

    pub fn vector(a1: f64, a2: f64) -> Self {
        Control([a1, a2])
    }

    /// First component.
    #[inline]
    pub fn a(&self) -> f64 {
        self.0[0]
    }
}

pub type ScalarFn = Arc<dyn Fn(f64, Point, Control) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(f64, Point, Control) -> [f64; 2] + Send + Sync>;
pub type InitialFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type SolutionFn = Arc<dyn Fn(f64, Point) -> f64 + Send + Sync>;
pub type BoundaryFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The admissible controls and their discretization.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSet {
    /// Explicit finite list.
    Finite(Vec<Control>),
    /// Scalar interval `[lo, hi]` sampled at `count` equally spaced points.
    Interval { lo: f64, hi: f64, count: usize },
    /// Unit circle sampled at `a_k = (cos 2kπ/P, sin 2kπ/P)`, `k < P`.
    UnitCircle { count: usize },
}

impl ControlSet {
    pub fn discretize(&self) -> Vec<Control> {
        match *self {
            ControlSet::Finite(ref list) => list.clone(),
            ControlSet::Interval { lo, hi, count } => {
                if count == 1 {
                    return vec![Control::scalar(lo)];
                }
                let step = (hi - lo) / (count - 1) as f64;
                (0..count)
                    .map(|k| Control::scalar(if k + 1 == count { hi } else { lo + k as f64 * step }))
                    .collect()
            }
            ControlSet::UnitCircle { count } => (0..count)
                .map(|k| {
                    let theta = 2.0 * PI * k as f64 / count as f64;
                    Control::vector(theta.cos(), theta.sin())
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ControlSet::Finite(list) => list.len(),
            ControlSet::Interval { count, .. } | ControlSet::UnitCircle { count } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Control mesh step: `2π/P` on the circle, `(hi - lo)/(P - 1)` on an interval.
    pub fn mesh_step(&self) -> Option<f64> {
        match *self {
            ControlSet::Finite(_) => None,
            ControlSet::Interval { lo, hi, count } if count > 1 => Some((hi - lo) / (count - 1) as f64),
            ControlSet::Interval { .. } => None,
            ControlSet::UnitCircle { count } => Some(2.0 * PI / count as f64),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ControlSet::Finite(ref list) if list.is_empty() => {
                Err(Error::InvalidProblem("control set is empty".into()))
            }
            ControlSet::Interval { lo, hi, count } => {
                if !(lo.is_finite() && hi.is_finite()) || hi < lo || count == 0 {
                    Err(Error::InvalidProblem(format!(
                        "invalid control interval [{lo}, {hi}] with {count} points"
                    )))
                } else if count > 1 && hi == lo {
                    Err(Error::InvalidProblem("degenerate control interval".into()))
                } else {
                    Ok(())
                }
            }
            ControlSet::UnitCircle { count } if count == 0 => {
                Err(Error::InvalidProblem("need at least one circle control".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Treatment of one end of a one-dimensional domain, or of a periodic axis.
#[derive(Clone)]
pub enum Boundary {
    /// Prescribed value `g(t)`.
    Dirichlet(BoundaryFn),
    /// Inflow boundary: the equation degenerates to transport into the domain
    /// and is discretized with one-sided interior differences only.
    Influx,
    Periodic,
}

impl fmt::Debug for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Dirichlet(_) => f.write_str("Dirichlet"),
            Boundary::Influx => f.write_str("Influx"),
            Boundary::Periodic => f.write_str("Periodic"),
        }
    }
}

/// Coefficients evaluated at one `(t, x, a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub sigma: [f64; 2],
    pub drift: [f64; 2],
    pub discount: f64,
    pub running: f64,
}

/// A controlled HJB problem on a bounded domain.
#[derive(Clone)]
pub struct HjbProblem {
    pub name: String,
    pub dim: usize,
    pub horizon: f64,
    /// Per-axis `[lo, hi]`; only the first entry is used in 1D.
    pub domain: [[f64; 2]; 2],
    pub sigma: VectorFn,
    pub drift: VectorFn,
    pub discount: ScalarFn,
    pub running_cost: ScalarFn,
    pub initial: InitialFn,
    pub controls: ControlSet,
    /// `[left, right]` in 1D, `[Periodic, Periodic]` in 2D.
    pub boundary: [Boundary; 2],
    pub exact: Option<SolutionFn>,
    /// Coefficients do not depend on `t`; lets schemes reuse assembled matrices.
    pub time_independent: bool,
}

impl fmt::Debug for HjbProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HjbProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("domain", &self.domain)
            .field("controls", &self.controls)
            .field("boundary", &self.boundary)
            .field("exact", &self.exact.is_some())
            .field("time_independent", &self.time_independent)
            .finish()
    }
}

impl HjbProblem {
    /// One-dimensional problem with zero coefficients and the given datum;
    /// set the coefficients with the `with_*` methods.
    pub fn one_d(
        name: impl Into<String>,
        horizon: f64,
        domain: [f64; 2],
        initial: impl Fn(f64) -> f64 + Send + Sync + 'static,
        controls: ControlSet,
        boundary: [Boundary; 2],
    ) -> Self {
        Self {
            name: name.into(),
            dim: 1,
            horizon,
            domain: [domain, [0.0, 0.0]],
            sigma: Arc::new(|_, _, _| [0.0, 0.0]),
            drift: Arc::new(|_, _, _| [0.0, 0.0]),
            discount: Arc::new(|_, _, _| 0.0),
            running_cost: Arc::new(|_, _, _| 0.0),
            initial: Arc::new(move |x: Point| initial(x[0])),
            controls,
            boundary,
            exact: None,
            time_independent: true,
        }
    }

    /// Scalar diffusion `σ(t, x, a)` of a 1D problem.
    pub fn with_sigma_1d(mut self, f: impl Fn(f64, f64, Control) -> f64 + Send + Sync + 'static) -> Self {
        self.sigma = Arc::new(move |t, x: Point, a| [f(t, x[0], a), 0.0]);
        self
    }

    pub fn with_drift_1d(mut self, f: impl Fn(f64, f64, Control) -> f64 + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(move |t, x: Point, a| [f(t, x[0], a), 0.0]);
        self
    }

    pub fn with_discount_1d(mut self, f: impl Fn(f64, f64, Control) -> f64 + Send + Sync + 'static) -> Self {
        self.discount = Arc::new(move |t, x: Point, a| f(t, x[0], a));
        self
    }

    pub fn with_running_cost_1d(
        mut self,
        f: impl Fn(f64, f64, Control) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.running_cost = Arc::new(move |t, x: Point, a| f(t, x[0], a));
        self
    }

    pub fn with_exact_1d(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.exact = Some(Arc::new(move |t, x: Point| f(t, x[0])));
        self
    }

    pub fn time_dependent(mut self) -> Self {
        self.time_independent = false;
        self
    }

    #[inline]
    pub fn coefficients(&self, t: f64, x: Point, a: Control) -> Coefficients {
        Coefficients {
            sigma: (self.sigma)(t, x, a),
            drift: (self.drift)(t, x, a),
            discount: (self.discount)(t, x, a),
            running: (self.running_cost)(t, x, a),
        }
    }

    pub fn initial_value(&self, x: Point) -> f64 {
        (self.initial)(x)
    }

    /// Checks structural invariants and samples the coefficients for
    /// finiteness on the domain.
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        self.controls.validate()?;
        match self.dim {
            1 => {
                if self.boundary.iter().any(|b| matches!(b, Boundary::Periodic)) {
                    return Err(Error::InvalidProblem(
                        "periodic boundaries are only supported in 2D".into(),
                    ));
                }
            }
            2 => {
                if !self.boundary.iter().all(|b| matches!(b, Boundary::Periodic)) {
                    return Err(Error::InvalidProblem("2D problems must be periodic".into()));
                }
            }
            d => return Err(Error::InvalidProblem(format!("unsupported dimension {d}"))),
        }
        let controls = self.controls.discretize();
        let samples = 17;
        for it in 0..samples {
            let s = it as f64 / (samples - 1) as f64;
            let t = s * self.horizon;
            let x = [
                self.domain[0][0] + s * (self.domain[0][1] - self.domain[0][0]),
                self.domain[1][0] + (1.0 - s) * (self.domain[1][1] - self.domain[1][0]),
            ];
            for a in &controls {
                let c = self.coefficients(t, x, *a);
                let finite = c.sigma.iter().chain(c.drift.iter()).all(|v| v.is_finite())
                    && c.discount.is_finite()
                    && c.running.is_finite();
                if !finite {
                    return Err(Error::InvalidProblem(format!(
                        "non-finite coefficient at t={t}, x={x:?}, a={a:?}"
                    )));
                }
            }
            if !self.initial_value(x).is_finite() {
                return Err(Error::InvalidProblem(format!("non-finite initial value at {x:?}")));
            }
        }
        Ok(())
    }
}

/// Parameters of the mean-variance asset allocation problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanVarianceParams {
    pub r: f64,
    pub sigma: f64,
    pub xi: f64,
    pub c: f64,
    pub horizon: f64,
    pub gamma: f64,
    pub a_max: f64,
    pub x_max: f64,
    pub controls: usize,
}

impl Default for MeanVarianceParams {
    fn default() -> Self {
        Self {
            r: 0.03,
            sigma: 0.15,
            xi: 0.33,
            c: 0.1,
            horizon: 20.0,
            gamma: 14.47,
            a_max: 1.5,
            x_max: 5.0,
            controls: 61,
        }
    }
}

impl MeanVarianceParams {
    /// Dirichlet value at `x_max` from transporting the datum along the
    /// characteristics of `v_t - (c + r x) v_x = 0`.
    pub fn right_boundary(&self, t: f64) -> f64 {
        let x = ((self.r * t).exp() * (self.c + self.r * self.x_max) - self.c) / self.r;
        let d = x - 0.5 * self.gamma;
        d * d
    }

    pub fn initial(&self, x: f64) -> f64 {
        let d = x - 0.5 * self.gamma;
        d * d
    }

    /// Upper bound of `|b|` over the controls: `c + x (r + a_max σ ξ)`.
    pub fn max_drift(&self, x: f64) -> f64 {
        self.c + x * (self.r + self.a_max * self.sigma * self.xi)
    }
}

/// Mean-variance asset allocation on `(0, x_max)` with controls in `[0, a_max]`.
pub fn mean_variance(params: MeanVarianceParams) -> Result<HjbProblem> {
    if !(params.horizon.is_finite() && params.horizon > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "horizon must be positive, got {}",
            params.horizon
        )));
    }
    if !(params.a_max > 0.0) || params.controls == 0 {
        return Err(Error::InvalidProblem("empty control interval".into()));
    }
    let p = params;
    let problem = HjbProblem::one_d(
        "mean-variance",
        p.horizon,
        [0.0, p.x_max],
        move |x| p.initial(x),
        ControlSet::Interval {
            lo: 0.0,
            hi: p.a_max,
            count: p.controls,
        },
        [
            Boundary::Influx,
            Boundary::Dirichlet(Arc::new(move |t| p.right_boundary(t))),
        ],
    )
    .with_sigma_1d(move |_, x, a| p.sigma * a.a() * x)
    .with_drift_1d(move |_, x, a| -(p.c + x * (p.r + a.a() * p.sigma * p.xi)));
    problem.validate()?;
    Ok(problem)
}

/// Parameters of the uncertain-volatility butterfly problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertainVolParams {
    pub r: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub horizon: f64,
    pub k1: f64,
    pub k2: f64,
    pub x_max: f64,
}

impl Default for UncertainVolParams {
    fn default() -> Self {
        Self {
            r: 0.1,
            sigma_min: 0.15,
            sigma_max: 0.25,
            horizon: 0.1,
            k1: 90.0,
            k2: 110.0,
            x_max: 200.0,
        }
    }
}

impl UncertainVolParams {
    /// Butterfly spread payoff.
    pub fn payoff(&self, x: f64) -> f64 {
        let mid = 0.5 * (self.k1 + self.k2);
        (x - self.k1).max(0.0) - 2.0 * (x - mid).max(0.0) + (x - self.k2).max(0.0)
    }
}

/// Worst-case butterfly price under volatility in `{σ_min, σ_max}`.
pub fn uncertain_vol(params: UncertainVolParams) -> Result<HjbProblem> {
    let p = params;
    if p.sigma_min > p.sigma_max {
        return Err(Error::InvalidProblem(format!(
            "sigma_min {} exceeds sigma_max {}",
            p.sigma_min, p.sigma_max
        )));
    }
    if !(p.horizon > 0.0) {
        return Err(Error::InvalidProblem("horizon must be positive".into()));
    }
    let zero: BoundaryFn = Arc::new(|_| 0.0);
    let problem = HjbProblem::one_d(
        "uncertain-vol",
        p.horizon,
        [0.0, p.x_max],
        move |x| p.payoff(x),
        ControlSet::Finite(vec![Control::scalar(p.sigma_min), Control::scalar(p.sigma_max)]),
        [Boundary::Dirichlet(zero.clone()), Boundary::Dirichlet(zero)],
    )
    .with_sigma_1d(|_, x, a| a.a() * x)
    .with_drift_1d(move |_, x, _| -p.r * x)
    .with_discount_1d(move |_, _, _| p.r);
    problem.validate()?;
    Ok(problem)
}

/// Source term `(1 - t) sin x₁ sin x₂ + (2 - t)(a₁² cos² x₁ + a₂² cos² x₂)` of
/// the periodic 2D problem. It enters the equation with a minus sign, so the
/// problem's running cost is its negative.
pub fn diffusion_2d_source(t: f64, x: Point, a: Control) -> f64 {
    let (s1, c1) = x[0].sin_cos();
    let (s2, c2) = x[1].sin_cos();
    let [a1, a2] = a.0;
    (1.0 - t) * s1 * s2 + (2.0 - t) * (a1 * a1 * c1 * c1 + a2 * a2 * c2 * c2)
}

/// Exact solution `(2 - t) sin x₁ sin x₂` of the periodic 2D problem.
pub fn diffusion_2d_exact(t: f64, x: Point) -> f64 {
    (2.0 - t) * x[0].sin() * x[1].sin()
}

/// Degenerate periodic diffusion on `(-π, π)²` with `σ_a = √2 a`, `|a| = 1`,
/// horizon 0.5, and `P` circle controls.
pub fn diffusion_2d(controls: usize) -> Result<HjbProblem> {
    if controls == 0 {
        return Err(Error::InvalidProblem("need at least one control".into()));
    }
    let problem = HjbProblem {
        name: "diffusion-2d".into(),
        dim: 2,
        horizon: 0.5,
        domain: [[-PI, PI], [-PI, PI]],
        sigma: Arc::new(|_, _, a: Control| [SQRT_2 * a.0[0], SQRT_2 * a.0[1]]),
        drift: Arc::new(|_, _, _| [0.0, 0.0]),
        discount: Arc::new(|_, _, _| 0.0),
        running_cost: Arc::new(|t, x, a| -diffusion_2d_source(t, x, a)),
        initial: Arc::new(|x: Point| diffusion_2d_exact(0.0, x)),
        controls: ControlSet::UnitCircle { count: controls },
        boundary: [Boundary::Periodic, Boundary::Periodic],
        exact: Some(Arc::new(diffusion_2d_exact)),
        time_independent: false,
    };
    problem.validate()?;
    Ok(problem)
}

/// Benchmark problems selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    MeanVariance,
    UncertainVol,
    Diffusion2d,
}

impl Benchmark {
    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::MeanVariance => "mean-variance",
            Benchmark::UncertainVol => "uncertain-vol",
            Benchmark::Diffusion2d => "diffusion-2d",
        }
    }
}

impl std::str::FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-variance" => Ok(Benchmark::MeanVariance),
            "uncertain-vol" => Ok(Benchmark::UncertainVol),
            "diffusion-2d" => Ok(Benchmark::Diffusion2d),
            other => Err(Error::Config(format!("unknown problem '{other}'"))),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_variance_examples() {
        let p = MeanVarianceParams::default();
        assert_relative_eq!(p.right_boundary(0.0), 4.995225, max_relative = 1e-12);
        assert_eq!(p.initial(p.gamma / 2.0), 0.0);
        let prob = mean_variance(p).unwrap();
        for a in prob.controls.discretize() {
            let b = (prob.drift)(3.0, [0.0, 0.0], a)[0];
            assert_relative_eq!(b, -0.1, max_relative = 1e-15);
            // degenerate diffusion at the influx boundary
            assert_eq!((prob.sigma)(0.0, [0.0, 0.0], a)[0], 0.0);
        }
        assert!(matches!(prob.boundary[0], Boundary::Influx));
        assert_eq!(prob.controls.len(), 61);
        let bad = MeanVarianceParams { horizon: 0.0, ..p };
        assert!(mean_variance(bad).is_err());
        let bad = MeanVarianceParams { a_max: 0.0, ..p };
        assert!(mean_variance(bad).is_err());
    }

    #[test]
    fn mean_variance_datum_convex_nonnegative() {
        let p = MeanVarianceParams::default();
        let h = 1e-2;
        let mut x = h;
        while x < p.x_max - h {
            assert!(p.initial(x) >= 0.0);
            let second = p.initial(x - h) - 2.0 * p.initial(x) + p.initial(x + h);
            assert!(second >= 0.0);
            x += 0.05;
        }
    }

    #[test]
    fn uncertain_vol_examples() {
        let p = UncertainVolParams::default();
        assert_eq!(p.payoff(100.0), 10.0);
        assert_eq!(p.payoff(90.0), 0.0);
        assert_eq!(p.payoff(110.0), 0.0);
        let prob = uncertain_vol(p).unwrap();
        assert_eq!(prob.controls.len(), 2);
        let bad = UncertainVolParams {
            sigma_min: 0.3,
            ..p
        };
        assert!(uncertain_vol(bad).is_err());
    }

    #[test]
    fn butterfly_payoff_shape() {
        let p = UncertainVolParams::default();
        let mut x = 0.0;
        while x <= 200.0 {
            let v = p.payoff(x);
            if x <= p.k1 || x >= p.k2 {
                assert_eq!(v, 0.0);
            } else {
                assert!(v > 0.0);
            }
            // piecewise linear: second difference vanishes away from kinks
            let h = 0.01;
            if [p.k1, 100.0, p.k2].iter().all(|k| (x - k).abs() > 2.0 * h) {
                let d2 = p.payoff(x - h) - 2.0 * v + p.payoff(x + h);
                assert!(d2.abs() < 1e-9);
            }
            // Lipschitz continuity with constant 1
            assert!((p.payoff(x + 1e-3) - v).abs() <= 1e-3 + 1e-12);
            x += 0.37;
        }
    }

    #[test]
    fn diffusion_2d_examples() {
        let prob = diffusion_2d(8).unwrap();
        let exact = prob.exact.clone().unwrap();
        assert_relative_eq!(exact(0.5, [PI / 2.0, PI / 2.0]), 1.5, max_relative = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
            assert_eq!(exact(0.0, x), prob.initial_value(x));
        }
        for a in prob.controls.discretize() {
            assert!((a.0[0].powi(2) + a.0[1].powi(2) - 1.0).abs() < 1e-12);
            assert_relative_eq!(diffusion_2d_source(0.0, [0.0, 0.0], a), 2.0, max_relative = 1e-12);
        }
        assert!(diffusion_2d(0).is_err());
    }

    #[test]
    fn diffusion_2d_residual_vanishes_at_optimal_control() {
        // v_t + sup_a(-(a₁² v_11 + 2 a₁ a₂ v_12 + a₂² v_22) - ℓ) = 0 with
        // the maximizer orthogonal to (cos x₁, cos x₂).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let t = rng.gen_range(0.0..0.5);
            let x = [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)];
            let (s1, c1) = x[0].sin_cos();
            let (s2, c2) = x[1].sin_cos();
            let v_t = -s1 * s2;
            let v11 = -(2.0 - t) * s1 * s2;
            let v22 = v11;
            let v12 = (2.0 - t) * c1 * c2;
            let norm = (c1 * c1 + c2 * c2).sqrt();
            let a = if norm < 1e-14 {
                Control::vector(1.0, 0.0)
            } else {
                Control::vector(-c2 / norm, c1 / norm)
            };
            let [a1, a2] = a.0;
            let h = -(a1 * a1 * v11 + 2.0 * a1 * a2 * v12 + a2 * a2 * v22) - diffusion_2d_source(t, x, a);
            assert!((v_t + h).abs() <= 1e-10);
        }
    }

    #[test]
    fn control_sets() {
        let set = ControlSet::Interval {
            lo: 0.0,
            hi: 1.5,
            count: 61,
        };
        let d = set.discretize();
        assert_eq!(d.len(), 61);
        assert_eq!(d[60].a(), 1.5);
        assert_relative_eq!(set.mesh_step().unwrap(), 0.025, max_relative = 1e-14);
        let circle = ControlSet::UnitCircle { count: 16 };
        assert_relative_eq!(circle.mesh_step().unwrap(), PI / 8.0);
        assert!(ControlSet::Finite(vec![]).validate().is_err());
    }

    #[test]
    fn benchmark_names_round_trip() {
        for b in [Benchmark::MeanVariance, Benchmark::UncertainVol, Benchmark::Diffusion2d] {
            assert_eq!(b.name().parse::<Benchmark>().unwrap(), b);
        }
        assert!("heat".parse::<Benchmark>().is_err());
    }
}
