use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use filtered_hjb::filter::{EpsRule, FilterConfig, RunOptions};
use filtered_hjb::harness::{
    benchmark_discretization, consistency_study, default_spec, estimate_cvm, level_size,
    run_convergence_study, CvmFormula, ProblemParams, ReferenceMode, RunSpec, StudyConfig,
};
use filtered_hjb::howard::HowardConfig;
use filtered_hjb::monotone::{comparison_audit, validate_a1};
use filtered_hjb::problem::Benchmark;
use filtered_hjb::scheme::{build_scheme, SchemeKind, SpaceGrid};

#[derive(Parser, Debug)]
#[command(name = "fhjb", version, about = "Filtered schemes for time-dependent HJB equations")]
struct Cli {
    /// Flat TOML file with defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized audits.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One run at the first requested level; writes the solution and filter activity.
    Solve(RunArgs),
    /// Convergence table over the requested levels.
    Study(RunArgs),
    /// Structural and consistency audits of the schemes on a problem.
    Validate(RunArgs),
    /// Rough truncation constant from a numerical solution.
    EstimateCvm(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    #[arg(long)]
    problem: Option<String>,
    /// ie | sl | none (run the high-order scheme alone)
    #[arg(long)]
    monotone: Option<String>,
    /// bdf2 | cn | cn-rannacher | fd2d | none
    #[arg(long)]
    high: Option<String>,
    #[arg(long)]
    c0: Option<f64>,
    /// max-tau-dx | dx-min | tau
    #[arg(long = "eps-rule")]
    eps_rule: Option<String>,
    /// `k` or `k0..k1` (inclusive).
    #[arg(long)]
    levels: Option<String>,
    /// `lo:hi`, removed from the local norms.
    #[arg(long)]
    exclude: Option<String>,
    #[arg(long)]
    probe: Option<f64>,
    /// exact | none | fine:<level>[:<scheme>]
    #[arg(long = "ref")]
    reference: Option<String>,
}

/// Keys of the configuration file; problem parameters use a `mv_` / `uv_` prefix.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    problem: Option<String>,
    monotone: Option<String>,
    high: Option<String>,
    c0: Option<f64>,
    eps_rule: Option<String>,
    levels: Option<String>,
    exclude: Option<String>,
    probe: Option<f64>,
    #[serde(rename = "ref")]
    reference: Option<String>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    seed: Option<u64>,
    cache_dir: Option<PathBuf>,
    howard_tol: Option<f64>,
    howard_max_iters: Option<usize>,
    mv_r: Option<f64>,
    mv_sigma: Option<f64>,
    mv_xi: Option<f64>,
    mv_c: Option<f64>,
    mv_horizon: Option<f64>,
    mv_gamma: Option<f64>,
    mv_a_max: Option<f64>,
    mv_x_max: Option<f64>,
    mv_controls: Option<usize>,
    uv_r: Option<f64>,
    uv_sigma_min: Option<f64>,
    uv_sigma_max: Option<f64>,
    uv_horizon: Option<f64>,
    uv_k1: Option<f64>,
    uv_k2: Option<f64>,
    uv_x_max: Option<f64>,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn params(&self) -> ProblemParams {
        let mut p = ProblemParams::default();
        let mv = &mut p.mean_variance;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(mv.r, self.mv_r);
        set!(mv.sigma, self.mv_sigma);
        set!(mv.xi, self.mv_xi);
        set!(mv.c, self.mv_c);
        set!(mv.horizon, self.mv_horizon);
        set!(mv.gamma, self.mv_gamma);
        set!(mv.a_max, self.mv_a_max);
        set!(mv.x_max, self.mv_x_max);
        set!(mv.controls, self.mv_controls);
        let uv = &mut p.uncertain_vol;
        set!(uv.r, self.uv_r);
        set!(uv.sigma_min, self.uv_sigma_min);
        set!(uv.sigma_max, self.uv_sigma_max);
        set!(uv.horizon, self.uv_horizon);
        set!(uv.k1, self.uv_k1);
        set!(uv.k2, self.uv_k2);
        set!(uv.x_max, self.uv_x_max);
        p
    }
}

/// Flags merged over the configuration file.
#[derive(Debug)]
struct Settings {
    benchmark: Benchmark,
    spec: RunSpec,
    levels: Vec<u32>,
    exclude: Option<(f64, f64)>,
    probe: Option<f64>,
    reference: ReferenceMode,
    out: PathBuf,
    seed: u64,
    params: ProblemParams,
    howard: HowardConfig,
    cache_dir: Option<PathBuf>,
}

fn parse_levels(s: &str) -> Result<Vec<u32>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u32, u32) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty level range {s}");
        }
        Ok((a..=b).collect())
    } else {
        s.split(',')
            .map(|x| x.trim().parse::<u32>().map_err(|e| anyhow!("bad level '{x}': {e}")))
            .collect()
    }
}

fn parse_exclude(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').ok_or_else(|| anyhow!("exclude must be lo:hi"))?;
    let (lo, hi): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
    if !(lo <= hi) {
        bail!("exclude interval {s} is empty");
    }
    Ok((lo, hi))
}

fn parse_reference(s: &str) -> Result<ReferenceMode> {
    match s {
        "exact" => Ok(ReferenceMode::Exact),
        "none" => Ok(ReferenceMode::None),
        _ => {
            let rest = s
                .strip_prefix("fine:")
                .ok_or_else(|| anyhow!("reference must be exact, none or fine:<level>[:<scheme>]"))?;
            let (level, scheme) = match rest.split_once(':') {
                Some((l, k)) => (l, Some(k)),
                None => (rest, None),
            };
            let level = level.parse()?;
            let spec = scheme
                .map(|k| k.parse::<SchemeKind>().map(RunSpec::Single))
                .transpose()?;
            Ok(ReferenceMode::Fine { level, spec })
        }
    }
}

fn default_reference(b: Benchmark) -> ReferenceMode {
    match b {
        Benchmark::MeanVariance => ReferenceMode::Fine { level: 8, spec: None },
        Benchmark::UncertainVol => ReferenceMode::Fine {
            level: 7,
            spec: Some(RunSpec::Single(SchemeKind::CnRannacher)),
        },
        Benchmark::Diffusion2d => ReferenceMode::Exact,
    }
}

fn settings(cli: &Cli, args: &RunArgs) -> Result<Settings> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let pick = |flag: &Option<String>, key: &Option<String>| flag.clone().or_else(|| key.clone());
    let benchmark: Benchmark = pick(&args.problem, &file.problem)
        .ok_or_else(|| anyhow!("--problem is required (mean-variance, uncertain-vol, diffusion-2d)"))?
        .parse()?;
    let base = default_spec(benchmark);
    let (def_m, def_h, def_f) = match base {
        RunSpec::Filtered { monotone, high, filter } => (monotone, Some(high), filter),
        RunSpec::Single(k) => (k, None, FilterConfig { c0: 1.0, rule: EpsRule::MaxTauDx }),
    };
    let monotone = match pick(&args.monotone, &file.monotone).as_deref() {
        Some("none") => None,
        Some(s) => Some(s.parse::<SchemeKind>()?),
        None => Some(def_m),
    };
    if let Some(m) = monotone.filter(|m| !m.is_monotone()) {
        bail!("{m} is not a monotone scheme");
    }
    let high = match pick(&args.high, &file.high).as_deref() {
        Some("none") => None,
        Some(s) => Some(s.parse::<SchemeKind>()?),
        None => def_h,
    };
    let c0 = args.c0.or(file.c0).unwrap_or(def_f.c0);
    let rule = match pick(&args.eps_rule, &file.eps_rule) {
        Some(s) => s.parse()?,
        None => def_f.rule,
    };
    let spec = match (monotone, high) {
        (Some(m), Some(h)) => RunSpec::Filtered {
            monotone: m,
            high: h,
            filter: FilterConfig::new(c0, rule)?,
        },
        (Some(k), None) | (None, Some(k)) => RunSpec::Single(k),
        (None, None) => bail!("--monotone none needs a --high scheme"),
    };
    let levels = match pick(&args.levels, &file.levels) {
        Some(s) => parse_levels(&s)?,
        None => vec![0, 1, 2],
    };
    let exclude = pick(&args.exclude, &file.exclude).map(|s| parse_exclude(&s)).transpose()?;
    let reference = match pick(&args.reference, &file.reference) {
        Some(s) => parse_reference(&s)?,
        None => default_reference(benchmark),
    };
    let mut howard = HowardConfig::default();
    if let Some(t) = file.howard_tol {
        howard.tol = t;
    }
    if let Some(m) = file.howard_max_iters {
        howard.max_iters = m;
    }
    Ok(Settings {
        benchmark,
        spec,
        levels,
        exclude,
        probe: args.probe.or(file.probe),
        reference,
        out: cli.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        seed: cli.seed.or(file.seed).unwrap_or(0),
        params: file.params(),
        howard,
        cache_dir: file.cache_dir.clone(),
    })
}

fn threads(cli: &Cli) -> Result<Option<usize>> {
    Ok(match cli.threads {
        Some(n) => Some(n),
        None => match &cli.config {
            Some(p) => FileConfig::load(p)?.threads,
            None => None,
        },
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_solve(s: &Settings) -> Result<()> {
    let level = s.levels[0];
    let disc = benchmark_discretization(s.benchmark, level, &s.params)?;
    let out = s.spec.run(disc.clone(), &s.howard, RunOptions::default())?;
    let exact = disc.exact_values(disc.time.horizon());
    let stem = format!("{}-k{level}", s.benchmark);
    let mut w = create(&s.out, &format!("{stem}-solution.csv"))?;
    let two_d = matches!(disc.space, SpaceGrid::Torus(_));
    let mut header = String::from(if two_d { "x,y,value" } else { "x,value" });
    if exact.is_some() {
        header.push_str(",exact");
    }
    writeln!(w, "{header}")?;
    for k in 0..disc.len() {
        let p = disc.point(k);
        if two_d {
            write!(w, "{:.5e},{:.5e},{:.5e}", p[0], p[1], out.values[k])?;
        } else {
            write!(w, "{:.5e},{:.5e}", p[0], out.values[k])?;
        }
        if let Some(e) = &exact {
            write!(w, ",{:.5e}", e[k])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    let mut a = create(&s.out, &format!("{stem}-activity.csv"))?;
    out.activity.write_csv(&mut a)?;
    a.flush()?;
    let size = level_size(s.benchmark, level, &s.params);
    println!(
        "{} {} N={} J={} P={}: eps={:.3e} active nodes={} ({:.1}%) howard iters={}+{} time={:.2}s",
        s.benchmark,
        s.spec.tag(),
        size.steps,
        size.intervals,
        size.controls,
        out.epsilon,
        out.activity.ever_active().iter().filter(|&&b| b).count(),
        100.0 * out.activity.ever_active_fraction(),
        out.monotone_stats.total_iterations,
        out.high_stats.total_iterations,
        out.timings.total.as_secs_f64()
    );
    if let Some(e) = &exact {
        let err = out.values.iter().zip(e).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        println!("max error against exact solution: {err:.5e}");
    }
    if out.max_gap > 0.0 {
        println!(
            "max |S_H - S_M| / tau = {:.4e} (c0 = {:.4} with max-tau-dx, {:.4} with tau)",
            out.max_gap,
            out.max_gap / disc.tau().max(disc.space.dx()),
            out.max_gap / disc.tau()
        );
    }
    Ok(())
}

fn cmd_study(s: &Settings) -> Result<()> {
    let mut cfg = StudyConfig::new(s.benchmark, s.spec, s.levels.clone(), s.reference);
    cfg.exclude = s.exclude;
    cfg.probe = s.probe;
    cfg.params = s.params;
    cfg.howard = s.howard;
    cfg.cache_dir = Some(s.cache_dir.clone().unwrap_or_else(|| s.out.join("reference")));
    let (table, outputs) = run_convergence_study(&cfg)?;
    let stem = format!("{}-{}", s.benchmark, s.spec.tag());
    let mut w = create(&s.out, &format!("{stem}.csv"))?;
    table.write_csv(&mut w)?;
    w.flush()?;
    let ok_levels = table.rows.iter().filter(|r| r.failure.is_none());
    for (row, out) in ok_levels.zip(&outputs) {
        let mut a = create(&s.out, &format!("{stem}-activity-k{}.csv", row.size.level))?;
        out.activity.write_csv(&mut a)?;
        a.flush()?;
    }
    table.write_csv(std::io::stdout().lock())?;
    for r in &table.rows {
        if let Some(f) = &r.failure {
            eprintln!("level {} failed: {f}", r.size.level);
        }
    }
    Ok(())
}

fn cmd_validate(s: &Settings) -> Result<()> {
    let level = s.levels[0];
    let disc = benchmark_discretization(s.benchmark, level, &s.params)?;
    let two_d = matches!(disc.space, SpaceGrid::Torus(_));
    let kinds: &[SchemeKind] = if two_d {
        &[SchemeKind::Sl, SchemeKind::Fd2d]
    } else {
        &[SchemeKind::Ie, SchemeKind::Sl, SchemeKind::Bdf2, SchemeKind::Cn]
    };
    let mut w = create(&s.out, &format!("{}-k{level}-validate.csv", s.benchmark))?;
    writeln!(w, "scheme,rows,sign_violations,violations,dominance_margin,lipschitz")?;
    println!("structural audit, {} level {level}:", s.benchmark);
    for &k in kinds {
        let scheme = build_scheme(k, disc.clone())?;
        let r = validate_a1(scheme.as_ref(), 0, s.seed)?;
        println!(
            "  {:<6} rows={} sign violations={} other={} dominance margin={:.3e} lipschitz={:.4}",
            k,
            r.rows_checked,
            r.sign_violations(),
            r.violations.len() - r.sign_violations(),
            r.dominance_margin,
            r.lipschitz
        );
        writeln!(
            w,
            "{},{},{},{},{:.5e},{:.5e}",
            k,
            r.rows_checked,
            r.sign_violations(),
            r.violations.len(),
            r.dominance_margin,
            r.lipschitz
        )?;
    }
    w.flush()?;
    println!("comparison principle, 200 random ordered pairs:");
    let monotone: &[SchemeKind] = if two_d { &[SchemeKind::Sl] } else { &[SchemeKind::Ie, SchemeKind::Sl] };
    for &k in monotone {
        let scheme = build_scheme(k, disc.clone())?;
        let r = comparison_audit(scheme.as_ref(), 200, s.seed, &s.howard)?;
        println!(
            "  {:<6} order violations={} max expansion={:.6} (C ≈ {:.3})",
            k,
            r.order_violations,
            r.max_expansion,
            r.fitted_constant(disc.tau())
        );
    }
    println!("truncation ratios on a manufactured solution (levels 0..3):");
    for k in [SchemeKind::Ie, SchemeKind::Bdf2, SchemeKind::Cn] {
        let rows = consistency_study(k, &[0, 1, 2, 3])?;
        let ratios: Vec<String> = rows
            .iter()
            .filter_map(|r| r.ratio.map(|x| format!("{x:.3}")))
            .collect();
        println!("  {:<6} {}", k, ratios.join(" "));
    }
    Ok(())
}

fn cmd_estimate_cvm(s: &Settings) -> Result<()> {
    let level = s.levels[0];
    let disc = benchmark_discretization(s.benchmark, level, &s.params)?;
    let opts = RunOptions { store_trajectory: true };
    let out = s.spec.run(disc.clone(), &s.howard, opts)?;
    let traj = out.trajectory.ok_or_else(|| anyhow!("trajectory was not stored"))?;
    let formula = match disc.space {
        SpaceGrid::Line(_) => CvmFormula::ImplicitEulerUpwind,
        SpaceGrid::Torus(_) => CvmFormula::SemiLagrangian2d {
            dx_over_tau: disc.space.dx() / disc.tau(),
        },
    };
    let e = estimate_cvm(&disc, &traj, formula)?;
    println!(
        "C_M estimate for {} at level {level}: {:.4} (|v_tt|={:.4e} |D2v|={:.4e} |D4v|={:.4e} |b v_xx|={:.4e}){}",
        s.benchmark,
        e.value,
        e.norms.vtt,
        e.norms.d2,
        e.norms.d4,
        e.norms.drift_vxx,
        if e.rough { ", rough" } else { "" }
    );
    if matches!(s.benchmark, Benchmark::Diffusion2d) {
        let a = filtered_hjb::harness::cvm::diffusion_2d_analytic_cvm();
        println!("from analytic derivatives: {:.6}", a.value);
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = threads(&cli)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let args = match &cli.command {
        Command::Solve(a) | Command::Study(a) | Command::Validate(a) | Command::EstimateCvm(a) => a,
    };
    let s = settings(&cli, args)?;
    match &cli.command {
        Command::Solve(_) => cmd_solve(&s),
        Command::Study(_) => cmd_study(&s),
        Command::Validate(_) => cmd_validate(&s),
        Command::EstimateCvm(_) => cmd_estimate_cvm(&s),
    }
}
