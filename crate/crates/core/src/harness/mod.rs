//! Benchmark levels, reference solutions and convergence studies.

pub mod consistency;
pub mod cvm;
pub mod norms;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{run_filtered, run_monotone, EpsRule, FilterConfig, RunOptions, SolveOutput};
use crate::grid::{interp_linear, Grid1d, PeriodicGrid2d, TimeGrid};
use crate::howard::HowardConfig;
use crate::problem::{
    diffusion_2d, mean_variance, uncertain_vol, Benchmark, MeanVarianceParams, UncertainVolParams,
};
use crate::scheme::{build_scheme, Discretization, SchemeKind, SpaceGrid};

pub use consistency::{consistency_study, manufactured_1d, ConsistencyRow};
pub use cvm::{estimate_cvm, CvmEstimate, CvmFormula, DerivativeNorms};
pub use norms::{error_norms, observed_order, restrict, ErrorTriple, Norm};

/// Problem parameters that can be overridden from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProblemParams {
    pub mean_variance: MeanVarianceParams,
    pub uncertain_vol: UncertainVolParams,
}

/// Mesh sizes of one refinement level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSize {
    pub level: u32,
    /// Time steps `N`.
    pub steps: usize,
    /// Space intervals `J` (points per axis in 2D).
    pub intervals: usize,
    /// Control points `P`.
    pub controls: usize,
}

/// `N = J = 40·2^k` (mean-variance), `N = 25·2^k` on the butterfly mesh with
/// `60·2^k` intervals (uncertain-vol), `N = J = P = 4·2^k` (2D).
pub fn level_size(benchmark: Benchmark, level: u32, params: &ProblemParams) -> LevelSize {
    let s = 1usize << level;
    match benchmark {
        Benchmark::MeanVariance => LevelSize {
            level,
            steps: 40 * s,
            intervals: 40 * s,
            controls: params.mean_variance.controls,
        },
        Benchmark::UncertainVol => LevelSize {
            level,
            steps: 25 * s,
            intervals: 60 * s,
            controls: 2,
        },
        Benchmark::Diffusion2d => LevelSize {
            level,
            steps: 4 * s,
            intervals: 4 * s,
            controls: 4 * s,
        },
    }
}

/// Discretization of a benchmark at refinement level `level`.
pub fn benchmark_discretization(
    benchmark: Benchmark,
    level: u32,
    params: &ProblemParams,
) -> Result<Arc<Discretization>> {
    if level > 16 {
        return Err(Error::Config(format!("level {level} is too fine")));
    }
    let size = level_size(benchmark, level, params);
    let disc = match benchmark {
        Benchmark::MeanVariance => {
            let p = params.mean_variance;
            let problem = mean_variance(p)?;
            Discretization::new(
                Arc::new(problem),
                SpaceGrid::Line(Grid1d::uniform(0.0, p.x_max, size.intervals)?),
                TimeGrid::new(p.horizon, size.steps)?,
            )?
        }
        Benchmark::UncertainVol => {
            let p = params.uncertain_vol;
            let problem = uncertain_vol(p)?;
            Discretization::new(
                Arc::new(problem),
                SpaceGrid::Line(Grid1d::butterfly(level)),
                TimeGrid::new(p.horizon, size.steps)?,
            )?
        }
        Benchmark::Diffusion2d => {
            let problem = diffusion_2d(size.controls)?;
            let horizon = problem.horizon;
            Discretization::new(
                Arc::new(problem),
                SpaceGrid::Torus(PeriodicGrid2d::new(size.intervals)?),
                TimeGrid::new(horizon, size.steps)?,
            )?
        }
    };
    Ok(Arc::new(disc))
}

/// Which schemes a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RunSpec {
    /// Monotone scheme filtered against a high-order one.
    Filtered {
        monotone: SchemeKind,
        high: SchemeKind,
        filter: FilterConfig,
    },
    /// A single scheme on its own.
    Single(SchemeKind),
}

impl RunSpec {
    /// Short identifier used in file names.
    pub fn tag(&self) -> String {
        match self {
            RunSpec::Filtered { monotone, high, filter } => {
                format!("{monotone}+{high}-c{}-{}", filter.c0, filter.rule)
            }
            RunSpec::Single(k) => k.to_string(),
        }
    }

    pub fn run(&self, disc: Arc<Discretization>, howard: &HowardConfig, opts: RunOptions) -> Result<SolveOutput> {
        match self {
            RunSpec::Filtered { monotone, high, filter } => {
                let m = build_scheme(*monotone, disc.clone())?;
                let h = build_scheme(*high, disc)?;
                run_filtered(m.as_ref(), h.as_ref(), filter, howard, opts)
            }
            RunSpec::Single(k) => {
                let s = build_scheme(*k, disc)?;
                run_monotone(s.as_ref(), howard, opts)
            }
        }
    }
}

/// Solves one level of a benchmark.
pub fn solve_level(
    benchmark: Benchmark,
    level: u32,
    spec: &RunSpec,
    params: &ProblemParams,
    howard: &HowardConfig,
    opts: RunOptions,
) -> Result<(Arc<Discretization>, SolveOutput)> {
    let disc = benchmark_discretization(benchmark, level, params)?;
    let out = spec.run(disc.clone(), howard, opts)?;
    Ok((disc, out))
}

/// Where errors are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReferenceMode {
    /// The problem's exact solution.
    Exact,
    /// A fine-level run; `spec = None` reuses the study's own schemes.
    Fine { level: u32, spec: Option<RunSpec> },
    /// No reference; only probe values are recorded.
    None,
}

/// Final-time field on the grid it was computed on.
#[derive(Debug, Clone)]
pub struct Reference {
    pub space: SpaceGrid,
    pub values: Vec<f64>,
}

impl Reference {
    /// Reference values at the nodes of `space`.
    pub fn on(&self, space: &SpaceGrid) -> Result<Vec<f64>> {
        restrict(&self.space, &self.values, space)
    }
}

fn cache_file(dir: &Path, benchmark: Benchmark, spec: &RunSpec, level: u32) -> PathBuf {
    let tag: String = spec
        .tag()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    dir.join(format!("{}-{}-k{}.ref", benchmark.name(), tag, level))
}

/// Fine-level reference solution, read from / written to `cache_dir` when given.
pub fn compute_reference(
    benchmark: Benchmark,
    spec: &RunSpec,
    level: u32,
    params: &ProblemParams,
    howard: &HowardConfig,
    cache_dir: Option<&Path>,
) -> Result<Reference> {
    let disc = benchmark_discretization(benchmark, level, params)?;
    if let Some(dir) = cache_dir {
        let path = cache_file(dir, benchmark, spec, level);
        if let Ok(text) = fs::read_to_string(&path) {
            let values: std::result::Result<Vec<f64>, _> = text.lines().map(str::parse).collect();
            match values {
                Ok(v) if v.len() == disc.len() => {
                    log::info!("reference loaded from {}", path.display());
                    return Ok(Reference {
                        space: disc.space.clone(),
                        values: v,
                    });
                }
                _ => log::warn!("ignoring unreadable reference cache {}", path.display()),
            }
        }
    }
    let start = Instant::now();
    let out = spec.run(disc.clone(), howard, RunOptions::default())?;
    log::info!(
        "reference {} {} level {level} computed in {:.1} s",
        benchmark,
        spec.tag(),
        start.elapsed().as_secs_f64()
    );
    if let Some(dir) = cache_dir {
        fs::create_dir_all(dir)?;
        let mut text = String::with_capacity(out.values.len() * 25);
        for v in &out.values {
            let _ = writeln!(text, "{v:e}");
        }
        fs::write(cache_file(dir, benchmark, spec, level), text)?;
    }
    Ok(Reference {
        space: disc.space.clone(),
        values: out.values,
    })
}

/// Configuration of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub benchmark: Benchmark,
    pub spec: RunSpec,
    pub levels: Vec<u32>,
    pub reference: ReferenceMode,
    /// Interval removed from the local norms.
    pub exclude: Option<(f64, f64)>,
    /// Point whose value is tracked across levels (1D).
    pub probe: Option<f64>,
    pub params: ProblemParams,
    pub howard: HowardConfig,
    pub cache_dir: Option<PathBuf>,
}

impl StudyConfig {
    pub fn new(benchmark: Benchmark, spec: RunSpec, levels: Vec<u32>, reference: ReferenceMode) -> Self {
        Self {
            benchmark,
            spec,
            levels,
            reference,
            exclude: None,
            probe: None,
            params: ProblemParams::default(),
            howard: HowardConfig::default(),
            cache_dir: None,
        }
    }
}

/// Orders per norm, defined from the second level on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Orders {
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub linf: Option<f64>,
}

impl Orders {
    fn between(coarse: &ErrorTriple, fine: &ErrorTriple) -> Self {
        Self {
            l1: observed_order(coarse.l1, fine.l1, 2.0),
            l2: observed_order(coarse.l2, fine.l2, 2.0),
            linf: observed_order(coarse.linf, fine.linf, 2.0),
        }
    }

    pub fn get(&self, norm: Norm) -> Option<f64> {
        match norm {
            Norm::L1 => self.l1,
            Norm::L2 => self.l2,
            Norm::Linf => self.linf,
        }
    }
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelResult {
    pub size: LevelSize,
    pub global: Option<ErrorTriple>,
    pub global_orders: Orders,
    pub local: Option<ErrorTriple>,
    pub local_orders: Orders,
    pub probe: Option<f64>,
    /// `|probe - reference probe|`.
    pub probe_error: Option<f64>,
    /// `log2` ratio of successive probe differences.
    pub probe_order: Option<f64>,
    /// Nodes where the filter was active at least once.
    pub active_nodes: usize,
    /// `active_nodes` over the number of nodes.
    pub active_fraction: f64,
    pub max_proximity: f64,
    pub howard_iterations: usize,
    pub cpu_s: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub benchmark: Benchmark,
    pub spec: String,
    pub rows: Vec<LevelResult>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.5e}")).unwrap_or_default()
}

impl ConvergenceTable {
    pub fn row(&self, level: u32) -> Option<&LevelResult> {
        self.rows.iter().find(|r| r.size.level == level)
    }

    /// Comma-separated table with a header row and six significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let has_local = self.rows.iter().any(|r| r.local.is_some());
        let has_probe = self.rows.iter().any(|r| r.probe.is_some());
        let mut header = String::from("N,J,P,errL1,ordL1,errL2,ordL2,errLinf,ordLinf");
        if has_local {
            header.push_str(",locL1,locOrdL1,locL2,locOrdL2,locLinf,locOrdLinf");
        }
        if has_probe {
            header.push_str(",probe,probeErr,probeOrd");
        }
        header.push_str(",filter_active_nodes,cpu_s");
        writeln!(w, "{header}")?;
        for r in &self.rows {
            let mut line = format!("{},{},{}", r.size.steps, r.size.intervals, r.size.controls);
            let g = r.global;
            for (norm, ord) in Norm::ALL.iter().zip([r.global_orders.l1, r.global_orders.l2, r.global_orders.linf]) {
                let _ = write!(line, ",{},{}", fmt_opt(g.map(|e| e.get(*norm))), fmt_opt(ord));
            }
            if has_local {
                let l = r.local;
                for norm in Norm::ALL {
                    let _ = write!(line, ",{},{}", fmt_opt(l.map(|e| e.get(norm))), fmt_opt(r.local_orders.get(norm)));
                }
            }
            if has_probe {
                let _ = write!(line, ",{},{},{}", fmt_opt(r.probe), fmt_opt(r.probe_error), fmt_opt(r.probe_order));
            }
            let _ = write!(line, ",{},{:.5e}", r.active_nodes, r.cpu_s);
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn probe_value(space: &SpaceGrid, values: &[f64], x: f64) -> Result<f64> {
    match space {
        SpaceGrid::Line(g) => interp_linear(g, values, x),
        SpaceGrid::Torus(_) => Err(Error::Config("probe points are only supported in 1D".into())),
    }
}

/// Runs every level of the study. Level failures are recorded and the study
/// continues; activity histories are returned per level.
pub fn run_convergence_study(cfg: &StudyConfig) -> Result<(ConvergenceTable, Vec<SolveOutput>)> {
    if cfg.levels.is_empty() {
        return Err(Error::Config("no levels requested".into()));
    }
    let reference = match cfg.reference {
        ReferenceMode::Fine { level, spec } => Some(compute_reference(
            cfg.benchmark,
            &spec.unwrap_or(cfg.spec),
            level,
            &cfg.params,
            &cfg.howard,
            cfg.cache_dir.as_deref(),
        )?),
        _ => None,
    };
    let mut rows: Vec<LevelResult> = Vec::new();
    let mut outputs = Vec::new();
    for &level in &cfg.levels {
        let size = level_size(cfg.benchmark, level, &cfg.params);
        let mut row = LevelResult {
            size,
            global: None,
            global_orders: Orders::default(),
            local: None,
            local_orders: Orders::default(),
            probe: None,
            probe_error: None,
            probe_order: None,
            active_nodes: 0,
            active_fraction: 0.0,
            max_proximity: 0.0,
            howard_iterations: 0,
            cpu_s: 0.0,
            failure: None,
        };
        let attempt = (|| -> Result<SolveOutput> {
            let disc = benchmark_discretization(cfg.benchmark, level, &cfg.params)?;
            let start = Instant::now();
            let out = cfg.spec.run(disc.clone(), &cfg.howard, RunOptions::default())?;
            row.cpu_s = start.elapsed().as_secs_f64();
            let ref_values = match (&cfg.reference, &reference) {
                (ReferenceMode::Exact, _) => Some(disc.exact_values(disc.time.horizon()).ok_or_else(|| {
                    Error::Config(format!("{} has no exact solution", cfg.benchmark))
                })?),
                (_, Some(r)) => Some(r.on(&disc.space)?),
                _ => None,
            };
            if let Some(rv) = &ref_values {
                row.global = Some(error_norms(&out.values, rv, &disc.space, None)?);
                if let Some(ex) = cfg.exclude {
                    row.local = Some(error_norms(&out.values, rv, &disc.space, Some(ex))?);
                }
            }
            if let Some(x) = cfg.probe {
                let p = probe_value(&disc.space, &out.values, x)?;
                row.probe = Some(p);
                if let Some(r) = &reference {
                    row.probe_error = Some((p - probe_value(&r.space, &r.values, x)?).abs());
                } else if let Some(rv) = &ref_values {
                    row.probe_error = Some((p - probe_value(&disc.space, rv, x)?).abs());
                }
            }
            let ever = out.activity.ever_active();
            row.active_nodes = ever.iter().filter(|&&b| b).count();
            row.active_fraction = out.activity.ever_active_fraction();
            row.max_proximity = out.max_proximity;
            row.howard_iterations = out.monotone_stats.total_iterations + out.high_stats.total_iterations;
            Ok(out)
        })();
        match attempt {
            Ok(out) => outputs.push(out),
            Err(e) => {
                log::error!("level {level} failed: {e}");
                row.failure = Some(e.to_string());
            }
        }
        if let Some(prev) = rows.last() {
            if let (Some(a), Some(b)) = (prev.global, row.global) {
                row.global_orders = Orders::between(&a, &b);
            }
            if let (Some(a), Some(b)) = (prev.local, row.local) {
                row.local_orders = Orders::between(&a, &b);
            }
        }
        if rows.len() >= 2 {
            let (a, b) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
            if let (Some(p0), Some(p1), Some(p2)) = (a.probe, b.probe, row.probe) {
                row.probe_order = observed_order((p1 - p0).abs(), (p2 - p1).abs(), 2.0);
            }
        }
        rows.push(row);
    }
    Ok((
        ConvergenceTable {
            benchmark: cfg.benchmark,
            spec: cfg.spec.tag(),
            rows,
        },
        outputs,
    ))
}

/// Default filtered pair for a benchmark.
pub fn default_spec(benchmark: Benchmark) -> RunSpec {
    match benchmark {
        Benchmark::MeanVariance => RunSpec::Filtered {
            monotone: SchemeKind::Ie,
            high: SchemeKind::Bdf2,
            filter: FilterConfig { c0: 5.0, rule: EpsRule::MaxTauDx },
        },
        Benchmark::UncertainVol => RunSpec::Filtered {
            monotone: SchemeKind::Ie,
            high: SchemeKind::Bdf2,
            filter: FilterConfig { c0: 50.0, rule: EpsRule::DxMin },
        },
        Benchmark::Diffusion2d => RunSpec::Filtered {
            monotone: SchemeKind::Sl,
            high: SchemeKind::Fd2d,
            filter: FilterConfig { c0: 0.8, rule: EpsRule::MaxTauDx },
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_sizes() {
        let p = ProblemParams::default();
        let s = level_size(Benchmark::MeanVariance, 2, &p);
        assert_eq!((s.steps, s.intervals, s.controls), (160, 160, 61));
        let s = level_size(Benchmark::UncertainVol, 1, &p);
        assert_eq!((s.steps, s.intervals), (50, 120));
        let d = benchmark_discretization(Benchmark::UncertainVol, 1, &p).unwrap();
        assert_eq!(d.space.line().unwrap().intervals(), 120);
        let s = level_size(Benchmark::Diffusion2d, 3, &p);
        assert_eq!((s.steps, s.intervals, s.controls), (32, 32, 32));
        let d = benchmark_discretization(Benchmark::MeanVariance, 0, &p).unwrap();
        assert!((d.tau() - 4.0 * d.space.dx()).abs() < 1e-12);
        let d = benchmark_discretization(Benchmark::Diffusion2d, 1, &p).unwrap();
        assert!((d.tau() - d.space.dx() / (4.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn exact_reference_study_is_deterministic() {
        let spec = default_spec(Benchmark::Diffusion2d);
        let cfg = StudyConfig::new(Benchmark::Diffusion2d, spec, vec![0, 1], ReferenceMode::Exact);
        let (a, _) = run_convergence_study(&cfg).unwrap();
        let (b, _) = run_convergence_study(&cfg).unwrap();
        let csv = |t: &ConvergenceTable| {
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let strip = |s: String| -> Vec<String> {
            s.lines()
                .map(|l| l.rsplit_once(',').unwrap().0.to_string())
                .collect()
        };
        assert_eq!(strip(csv(&a)), strip(csv(&b)));
        assert!(a.rows[1].global_orders.linf.is_some());
        assert!(csv(&a).starts_with("N,J,P,errL1,ordL1,errL2,ordL2,errLinf,ordLinf,filter_active_nodes,cpu_s\n"));
    }
}
