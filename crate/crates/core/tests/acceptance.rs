//! Acceptance criteria, one PASS/FAIL line per criterion.
//!
//! Fine-grid references are cached under the cargo target directory, so only
//! the first run pays for them.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use filtered_hjb::filter::{EpsRule, FilterConfig};
use filtered_hjb::harness::{
    benchmark_discretization, consistency_study, cvm::diffusion_2d_analytic_cvm, observed_order,
    run_convergence_study, ConvergenceTable, ProblemParams, ReferenceMode, RunSpec, StudyConfig,
};
use filtered_hjb::howard::linear::{self, SparseRows};
use filtered_hjb::howard::{HowardConfig, PolicyProblem};
use filtered_hjb::monotone::{comparison_audit, validate_a1};
use filtered_hjb::problem::Benchmark;
use filtered_hjb::scheme::{build_scheme, SchemeKind};
use filtered_hjb::stencil::StencilRow;

// Criterion 1
const MV_LEVELS: [u32; 5] = [0, 1, 2, 3, 4];
const MV_REF_LEVEL: u32 = 8;
const MV_GLOBAL_ORDER: (f64, f64) = (1.85, 2.15);
const MV_LOCAL_LINF_ORDER: (f64, f64) = (1.80, 2.15);
const MV_EXCLUDE: (f64, f64) = (2.3, 2.7);
const MV_BUDGET_S: f64 = 120.0;
// Criterion 2
const SWEEP_C0: [f64; 4] = [5.0, 10.0, 20.0, 40.0];
const SWEEP_SPREAD: f64 = 0.10;
const SMALL_C0: f64 = 0.01;
const SMALL_C0_ORDER: (f64, f64) = (0.8, 1.3);
const MV_PROBE: f64 = 1.0;
// Criterion 3
const UV_REF_LEVEL: u32 = 8;
const UV_CN_LEVELS: [u32; 8] = [0, 1, 2, 3, 4, 5, 6, 7];
const UV_LEVELS: [u32; 7] = [0, 1, 2, 3, 4, 5, 6];
const UV_PROBE: f64 = 100.0;
const UV_CN_MAX_ORDER: f64 = 0.8;
const UV_HIGH_ORDER: (f64, f64) = (1.6, 2.2);
const UV_HIGH_MIN_N: usize = 100;
const UV_FILTER_C0: f64 = 50.0;
const UV_FILTER_ORDER: (f64, f64) = (0.7, 1.6);
// Criterion 4
const D2_LEVELS: [u32; 4] = [0, 1, 2, 3];
const D2_C0: f64 = 0.8;
const D2_TABLE_LINF: [f64; 4] = [5.57e-1, 1.08e-1, 3.13e-2, 8.82e-3];
const D2_FACTOR: f64 = 2.0;
const D2_ORDER: (f64, f64) = (1.5, 2.5);
const D2_BUDGET_S: f64 = 900.0;
// Criterion 5
const AUDIT_PAIRS: usize = 200;
const IE_RATIO: (f64, f64) = (2.0, 0.3);
const HIGH_RATIO: (f64, f64) = (4.0, 0.6);
const SINGLE_CONTROL_TOL: f64 = 1e-12;
const UNIQUENESS_TOL: f64 = 1e-8;
const CVM_TOL: f64 = 1e-9;

struct Report {
    failures: Vec<String>,
    max_proximity: f64,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String) {
        println!("[{}] criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures.push(id.to_string());
        }
    }

    fn note(&mut self, tables: &[&ConvergenceTable]) {
        for t in tables {
            for r in &t.rows {
                self.max_proximity = self.max_proximity.max(r.max_proximity);
            }
        }
    }
}

fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("references")
}

fn within(x: Option<f64>, (lo, hi): (f64, f64)) -> bool {
    x.is_some_and(|v| lo <= v && v <= hi)
}

fn fmt_orders(v: &[Option<f64>]) -> String {
    let s: Vec<String> = v
        .iter()
        .map(|o| o.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into()))
        .collect();
    s.join(" ")
}

fn study(
    benchmark: Benchmark,
    spec: RunSpec,
    levels: &[u32],
    reference: ReferenceMode,
    exclude: Option<(f64, f64)>,
    probe: Option<f64>,
) -> ConvergenceTable {
    let mut cfg = StudyConfig::new(benchmark, spec, levels.to_vec(), reference);
    cfg.exclude = exclude;
    cfg.probe = probe;
    cfg.cache_dir = Some(cache_dir());
    let (table, _) = run_convergence_study(&cfg).expect("study");
    for r in &table.rows {
        if let Some(f) = &r.failure {
            println!("    level {} failed: {f}", r.size.level);
        }
    }
    table
}

fn filtered(monotone: SchemeKind, high: SchemeKind, c0: f64, rule: EpsRule) -> RunSpec {
    RunSpec::Filtered {
        monotone,
        high,
        filter: FilterConfig::new(c0, rule).unwrap(),
    }
}

fn mv_reference() -> ReferenceMode {
    ReferenceMode::Fine {
        level: MV_REF_LEVEL,
        spec: Some(filtered(SchemeKind::Ie, SchemeKind::Bdf2, 5.0, EpsRule::MaxTauDx)),
    }
}

fn criterion_1(rep: &mut Report) {
    let spec = filtered(SchemeKind::Ie, SchemeKind::Bdf2, 5.0, EpsRule::MaxTauDx);
    let t = study(Benchmark::MeanVariance, spec, &MV_LEVELS, mv_reference(), Some(MV_EXCLUDE), None);
    rep.note(&[&t]);
    let rows = &t.rows[1..];
    let l1: Vec<_> = rows.iter().map(|r| r.global_orders.l1).collect();
    let l2: Vec<_> = rows.iter().map(|r| r.global_orders.l2).collect();
    let loc: Vec<_> = rows.iter().map(|r| r.local_orders.linf).collect();
    let cpu: f64 = t.rows.iter().map(|r| r.cpu_s).sum();
    let pass = l1.iter().chain(&l2).all(|o| within(*o, MV_GLOBAL_ORDER))
        && loc.iter().all(|o| within(*o, MV_LOCAL_LINF_ORDER))
        && cpu < MV_BUDGET_S
        && t.rows.iter().all(|r| r.failure.is_none());
    rep.line(
        "1",
        pass,
        format!(
            "mean-variance IE+BDF2 c0=5, N=J=40..640 vs N=J=10240: L1 orders [{}], L2 orders [{}], local Linf orders [{}], cpu {:.2}s",
            fmt_orders(&l1),
            fmt_orders(&l2),
            fmt_orders(&loc),
            cpu
        ),
    );
}

fn criterion_2(rep: &mut Report) {
    let mut errors: Vec<Vec<f64>> = Vec::new();
    for &c0 in &SWEEP_C0 {
        let spec = filtered(SchemeKind::Ie, SchemeKind::Bdf2, c0, EpsRule::MaxTauDx);
        let t = study(Benchmark::MeanVariance, spec, &MV_LEVELS, mv_reference(), None, Some(MV_PROBE));
        rep.note(&[&t]);
        errors.push(t.rows.iter().map(|r| r.probe_error.unwrap_or(f64::NAN)).collect());
    }
    let spread: Vec<f64> = (0..MV_LEVELS.len())
        .map(|k| {
            let col: Vec<f64> = errors.iter().map(|e| e[k]).collect();
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            hi / lo - 1.0
        })
        .collect();
    let spec = filtered(SchemeKind::Ie, SchemeKind::Bdf2, SMALL_C0, EpsRule::MaxTauDx);
    let t = study(Benchmark::MeanVariance, spec, &MV_LEVELS, mv_reference(), None, Some(MV_PROBE));
    rep.note(&[&t]);
    let small: Vec<Option<f64>> = t
        .rows
        .windows(2)
        .map(|w| observed_order(w[0].probe_error?, w[1].probe_error?, 2.0))
        .collect();
    let finest = &small[small.len() - 2..];
    let pass = spread.iter().all(|s| s.is_finite() && *s <= SWEEP_SPREAD)
        && finest.iter().all(|o| within(*o, SMALL_C0_ORDER));
    let spread_s: Vec<String> = spread.iter().map(|s| format!("{:.1}%", 100.0 * s)).collect();
    rep.line(
        "2",
        pass,
        format!(
            "x=1 error spread over c0 in {{5,10,20,40}} per level [{}]; c0=0.01 orders [{}]",
            spread_s.join(" "),
            fmt_orders(&small)
        ),
    );
}

fn criterion_3(rep: &mut Report) {
    let reference = ReferenceMode::Fine {
        level: UV_REF_LEVEL,
        spec: Some(RunSpec::Single(SchemeKind::Bdf2)),
    };
    let b = Benchmark::UncertainVol;
    let cn = study(b, RunSpec::Single(SchemeKind::Cn), &UV_CN_LEVELS, ReferenceMode::None, None, Some(UV_PROBE));
    let cn_orders: Vec<Option<f64>> = cn.rows.iter().skip(2).map(|r| r.probe_order).collect();
    let a = cn_orders.iter().all(|o| o.is_some_and(|v| v <= UV_CN_MAX_ORDER));

    let high_orders = |kind: SchemeKind| -> Vec<Option<f64>> {
        let t = study(b, RunSpec::Single(kind), &UV_LEVELS, reference, None, None);
        t.rows
            .iter()
            .filter(|r| r.size.steps >= UV_HIGH_MIN_N)
            .map(|r| r.global_orders.linf)
            .collect()
    };
    let cnr = high_orders(SchemeKind::CnRannacher);
    let bdf = high_orders(SchemeKind::Bdf2);
    let bb = cnr.iter().chain(&bdf).all(|o| within(*o, UV_HIGH_ORDER));

    let spec = filtered(SchemeKind::Ie, SchemeKind::Bdf2, UV_FILTER_C0, EpsRule::DxMin);
    let f = study(b, spec, &UV_LEVELS, reference, None, None);
    rep.note(&[&f]);
    let errs: Vec<f64> = f.rows.iter().map(|r| r.global.map_or(f64::NAN, |e| e.linf)).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let late: Vec<Option<f64>> = f.rows[f.rows.len() - 2..].iter().map(|r| r.global_orders.linf).collect();
    let c = decreasing && late.iter().all(|o| within(*o, UV_FILTER_ORDER));

    let frac: Vec<f64> = f.rows.iter().map(|r| r.active_fraction).collect();
    let d = frac[1..].iter().all(|&x| x > 0.0) && frac[2..].windows(2).all(|w| w[1] >= 0.9 * w[0]);

    let frac_s: Vec<String> = frac.iter().map(|x| format!("{x:.3}")).collect();
    rep.line(
        "3",
        a && bb && c && d,
        format!(
            "uncertain-vol: (a) CN probe orders [{}] {}; (b) CN-R [{}] BDF2 [{}] {}; (c) filtered Linf [{}] late orders [{}] {}; (d) active fractions [{}] {}",
            fmt_orders(&cn_orders),
            ok(a),
            fmt_orders(&cnr),
            fmt_orders(&bdf),
            ok(bb),
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" "),
            fmt_orders(&late),
            ok(c),
            frac_s.join(" "),
            ok(d)
        ),
    );
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn criterion_4(rep: &mut Report) {
    let spec = filtered(SchemeKind::Sl, SchemeKind::Fd2d, D2_C0, EpsRule::MaxTauDx);
    let start = Instant::now();
    let t = study(Benchmark::Diffusion2d, spec, &D2_LEVELS, ReferenceMode::Exact, None, None);
    let elapsed = start.elapsed().as_secs_f64();
    rep.note(&[&t]);
    let errs: Vec<f64> = t.rows.iter().map(|r| r.global.map_or(f64::NAN, |e| e.linf)).collect();
    let factor_ok = errs
        .iter()
        .zip(D2_TABLE_LINF)
        .all(|(e, p)| *e <= D2_FACTOR * p && *e >= p / D2_FACTOR);
    let orders: Vec<Option<f64>> = t.rows[1..].iter().map(|r| r.global_orders.linf).collect();
    let orders_ok = orders.iter().all(|o| within(*o, D2_ORDER));
    let active: Vec<usize> = t.rows.iter().map(|r| r.active_nodes).collect();
    let mask_ok = t.rows.iter().filter(|r| r.size.intervals >= 16).all(|r| r.active_nodes == 0);
    rep.line(
        "4",
        factor_ok && orders_ok && mask_ok && elapsed <= D2_BUDGET_S,
        format!(
            "diffusion-2d SL+FD2D c0=0.8: Linf [{}] (table x2 {}), orders [{}] {}, active nodes [{}] (empty for J>=16 {}), {:.1}s",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" "),
            ok(factor_ok),
            fmt_orders(&orders),
            ok(orders_ok),
            active.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" "),
            ok(mask_ok),
            elapsed
        ),
    );
}

/// `sup_a (m_a x - g_a) = 0` in one unknown: the root is the candidate
/// `g_a / m_a` at which every affine piece is non-positive.
fn enumeration_oracle(seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..100).all(|_| {
        let p = rng.gen_range(1..6);
        let m: Vec<f64> = (0..p).map(|_| rng.gen_range(0.5..3.0)).collect();
        let g: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let oracle = (0..p)
            .map(|a| g[a] / m[a])
            .find(|&x| (0..p).all(|b| m[b] * x - g[b] <= 1e-12))
            .unwrap();
        let pp = PolicyProblem::assemble(1, p, 1, |i, a| {
            let mut r = StencilRow::new(i);
            r.add(0, m[a]);
            r.rhs = g[a];
            r
        })
        .unwrap();
        let res = pp.howard_solve(&[0.0], None, &HowardConfig::default()).unwrap();
        res.converged && (res.x[0] - oracle).abs() <= 1e-12 * (1.0 + oracle.abs())
    })
}

/// Random tridiagonal M-matrix families with `controls` members.
fn random_family(n: usize, controls: usize, rng: &mut ChaCha8Rng) -> PolicyProblem {
    let coef: Vec<[f64; 4]> = (0..n * controls)
        .map(|_| {
            [
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.01..0.5),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    PolicyProblem::assemble(n, controls, 3, |i, a| {
        let [l, r, extra, g] = coef[i * controls + a];
        let mut row = StencilRow::new(i);
        row.add(i, l + r + extra);
        if i > 0 {
            row.add(i - 1, -l);
        }
        if i + 1 < n {
            row.add(i + 1, -r);
        }
        row.rhs = g;
        row
    })
    .unwrap()
}

fn howard_checks(seed: u64) -> (bool, f64, f64) {
    let enumeration = enumeration_oracle(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut single = 0.0_f64;
    for _ in 0..20 {
        let pp = random_family(200, 1, &mut rng);
        let res = pp.howard_solve(&vec![0.0; 200], None, &HowardConfig::default()).unwrap();
        let mut m = SparseRows::new(200, 3);
        for i in 0..200 {
            let (c, v) = pp.matrix().row(i, 0);
            let (dc, dv) = m.row_mut(i);
            dc.copy_from_slice(c);
            dv.copy_from_slice(v);
        }
        let b: Vec<f64> = (0..200).map(|i| pp.rhs(i, 0)).collect();
        let direct = linear::solve(&m, &b).unwrap();
        for (x, y) in res.x.iter().zip(&direct) {
            single = single.max((x - y).abs() / (1.0 + y.abs()));
        }
    }
    let mut spread = 0.0_f64;
    for _ in 0..20 {
        let pp = random_family(150, 5, &mut rng);
        let base = pp.howard_solve(&vec![0.0; 150], None, &HowardConfig::default()).unwrap();
        for _ in 0..5 {
            let x0: Vec<f64> = (0..150).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let r = pp.howard_solve(&x0, None, &HowardConfig::default()).unwrap();
            for (a, b) in r.x.iter().zip(&base.x) {
                spread = spread.max((a - b).abs());
            }
        }
    }
    (enumeration, single, spread)
}

fn criterion_5(rep: &mut Report) {
    let params = ProblemParams::default();
    let cfg = HowardConfig::default();
    let disc = |b: Benchmark, k: u32| benchmark_discretization(b, k, &params).unwrap();
    let mut order_violations = 0;
    let mut audits = 0;
    for (b, k, kind) in [
        (Benchmark::MeanVariance, 0, SchemeKind::Ie),
        (Benchmark::UncertainVol, 0, SchemeKind::Ie),
        (Benchmark::MeanVariance, 0, SchemeKind::Sl),
        (Benchmark::Diffusion2d, 1, SchemeKind::Sl),
    ] {
        let s = build_scheme(kind, disc(b, k)).unwrap();
        let r = comparison_audit(s.as_ref(), AUDIT_PAIRS, 7, &cfg).unwrap();
        order_violations += r.order_violations;
        audits += 1;
    }
    let comparison = order_violations == 0;

    let mut ie_sign = 0;
    for b in [Benchmark::MeanVariance, Benchmark::UncertainVol] {
        for k in 0..3 {
            let s = build_scheme(SchemeKind::Ie, disc(b, k)).unwrap();
            ie_sign += validate_a1(s.as_ref(), 0, 1).unwrap().sign_violations();
        }
    }
    let high_sign: Vec<usize> = [
        (Benchmark::MeanVariance, SchemeKind::Bdf2),
        (Benchmark::UncertainVol, SchemeKind::Bdf2),
        (Benchmark::Diffusion2d, SchemeKind::Fd2d),
    ]
    .iter()
    .map(|&(b, kind)| {
        let s = build_scheme(kind, disc(b, 1)).unwrap();
        validate_a1(s.as_ref(), 0, 1).unwrap().sign_violations()
    })
    .collect();
    let mmatrix = ie_sign == 0 && high_sign.iter().all(|&v| v >= 1);

    let proximity = rep.max_proximity <= 1.0;

    let (enumeration, single, spread) = howard_checks(11);
    let howard = enumeration && single <= SINGLE_CONTROL_TOL && spread <= UNIQUENESS_TOL;

    let ratio = |kind| {
        consistency_study(kind, &[0, 1, 2, 3])
            .unwrap()
            .last()
            .and_then(|r| r.ratio)
            .unwrap_or(f64::NAN)
    };
    let (ie, bdf2, cn) = (ratio(SchemeKind::Ie), ratio(SchemeKind::Bdf2), ratio(SchemeKind::Cn));
    let ratios = (ie - IE_RATIO.0).abs() <= IE_RATIO.1
        && (bdf2 - HIGH_RATIO.0).abs() <= HIGH_RATIO.1
        && (cn - HIGH_RATIO.0).abs() <= HIGH_RATIO.1;

    let cvm = diffusion_2d_analytic_cvm().value;
    let cvm_exact = 4.0 / 3.0 + 4.0 * std::f64::consts::PI.powi(2);
    let cvm_ok = (cvm - cvm_exact).abs() <= CVM_TOL;

    rep.line(
        "5",
        comparison && mmatrix && proximity && howard && ratios && cvm_ok,
        format!(
            "properties: comparison {} ({} audits x {} pairs, {} violations); IE sign violations {} / BDF2, BDF2, FD2D {:?} {}; max proximity {:.6} {}; Howard enumeration {} single-control {:.1e} uniqueness {:.1e} {}; truncation ratios IE {:.3} BDF2 {:.3} CN {:.3} {}; C_M {:.12} {}",
            ok(comparison),
            audits,
            AUDIT_PAIRS,
            order_violations,
            ie_sign,
            high_sign,
            ok(mmatrix),
            rep.max_proximity,
            ok(proximity),
            ok(enumeration),
            single,
            spread,
            ok(howard),
            ie,
            bdf2,
            cn,
            ok(ratios),
            cvm,
            ok(cvm_ok)
        ),
    );
}

fn main() -> ExitCode {
    // `cargo test` passes libtest flags; listing asks for the test names only.
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut rep = Report {
        failures: Vec::new(),
        max_proximity: 0.0,
    };
    let start = Instant::now();
    criterion_1(&mut rep);
    criterion_2(&mut rep);
    criterion_3(&mut rep);
    criterion_4(&mut rep);
    criterion_5(&mut rep);
    println!(
        "acceptance: {} of 5 criteria passed in {:.0}s",
        5 - rep.failures.len(),
        start.elapsed().as_secs_f64()
    );
    if rep.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing: {}", rep.failures.join(", "));
        ExitCode::FAILURE
    }
}
