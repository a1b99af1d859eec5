//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! The process exits successfully once every check has run, whatever the
//! verdicts; set `MGIPM_ACCEPTANCE_STRICT=1` to turn any FAIL into a failing
//! exit status.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use mgipm_cli::output::PerOuterRow;
use mgipm_cli::{run, ExperimentConfig};
use mgipm_core::diagnostics::{eigenvalues, materialize_g, spectral_distance_table};
use mgipm_core::ipm::solve;
use mgipm_core::linalg::{dot, norm2, rel_diff, DenseMatrix};
use mgipm_core::operators::{convergence_probe, ProbeReference};
use mgipm_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<Outcome, String>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Check {
    Ok(Outcome { pass, detail })
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Published `d_h` for `h = 1/80 .. 1/640`, per `β`.
const REFERENCE_DH: [(f64, [f64; 4]); 3] = [
    (1.0, [0.0206, 0.0066, 0.0020, 0.0006]),
    (0.1, [0.1127, 0.0363, 0.0102, 0.0027]),
    (0.01, [0.2812, 0.1270, 0.0445, 0.0123]),
];

/// Published fine mat-vec totals, keyed by `(n, levels)`.
const REFERENCE_1D: [((usize, usize), u64); 9] = [
    ((1024, 1), 728),
    ((1024, 2), 581),
    ((1024, 3), 661),
    ((2048, 1), 740),
    ((2048, 2), 463),
    ((2048, 3), 489),
    ((4096, 1), 764),
    ((4096, 2), 403),
    ((4096, 3), 425),
];
const REFERENCE_2D: [((usize, usize), u64); 2] = [((256, 1), 354), ((256, 2), 282)];

struct RunInfo {
    total: u64,
    outer: usize,
    converged: bool,
    fallbacks: usize,
    rows: Vec<PerOuterRow>,
}

#[derive(Default)]
struct Context {
    spectral: Vec<Report>,
    runs_1d: BTreeMap<(usize, usize), RunInfo>,
}

fn ipm_run(text: &str) -> std::result::Result<RunInfo, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut cfg = ExperimentConfig::parse(text).map_err(err)?;
    cfg.output_dir = dir.path().to_path_buf();
    cfg.write_solution = false;
    let art = run(&cfg).map_err(err)?;
    let s = art.summary_row.ok_or("no summary")?;
    let res = art.result.ok_or("no result")?;
    Ok(RunInfo {
        total: s.total_fine_matvecs,
        outer: s.outer_iterations,
        converged: s.converged,
        fallbacks: res.inner_fallbacks,
        rows: art.per_outer_rows,
    })
}

fn parabolic_text(n: usize, levels: usize) -> String {
    format!("experiment = parabolic-1d\nfinest_n = {n}\nlevels = {levels}\nbeta = 1e-3\nlo = 0\nhi = 1\n")
}

fn elliptic_text(n: usize, levels: usize) -> String {
    format!("experiment = elliptic-2d\nfinest_n = {n}\nlevels = {levels}\nbeta = 1e-6\nlo = -1\nhi = 1\n")
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn spectral_table(ctx: &mut Context) -> Check {
    let cfg = ExperimentConfig::defaults(mgipm_cli::Experiment::SpectralTable);
    let par = cfg.parabolic;
    let builder = move |l: &Level| -> Result<Box<dyn ForwardOperator<f64>>> {
        Ok(Box::new(ParabolicOperator::build(l, &par)?))
    };
    let rule = cfg.lambda_rule;
    let lambda = move |x: f64, _y: f64| rule.eval(x);
    let threads = mgipm_cli::experiments::worker_count();
    ctx.spectral = spectral_distance_table(
        &builder,
        GridKind::PeriodicInterval,
        &lambda,
        &[80, 160, 320, 640],
        &[1.0, 0.1, 0.01],
        threads,
    )
    .map_err(err)?;

    let mut within_25 = true;
    let mut decreasing = true;
    let mut rates_primary = true;
    let mut rates_fallback = true;
    let mut lines = Vec::new();
    for (k, (beta, reference)) in REFERENCE_DH.iter().enumerate() {
        let rows = &ctx.spectral[4 * k..4 * k + 4];
        let d: Vec<f64> = rows.iter().map(|r| r.d_h).collect();
        let rates: Vec<f64> = rows.iter().filter_map(|r| r.rate_vs_previous).collect();
        let worst = d.iter().zip(reference).map(|(x, p)| (x - p).abs() / p).fold(0.0, f64::max);
        within_25 &= worst <= 0.25;
        decreasing &= strictly_decreasing(&d);
        if *beta >= 0.1 {
            let increasing = rates.windows(2).all(|w| w[1] > w[0]);
            rates_primary &= increasing && *rates.last().unwrap() >= 3.3;
        }
        rates_fallback &= rates.iter().all(|r| (2.0..=4.2).contains(r));
        let imag = rows.iter().map(|r| r.max_imag_ratio).fold(0.0, f64::max);
        lines.push(format!(
            "beta={beta}: d_h={:.4?} rates={:.3?} worst_rel_dev={worst:.2} max_imag_ratio={imag:.1e}",
            d, rates
        ));
    }
    let pass = decreasing && rates_primary && (within_25 || rates_fallback);
    outcome(
        pass,
        format!(
            "within_25%={within_25} decreasing={decreasing} rates_increasing_final>=3.3={rates_primary} \
             rates_in_[2,4.2]={rates_fallback}\n      {}",
            lines.join("\n      ")
        ),
    )
}

fn lemma_bound(ctx: &mut Context) -> Check {
    if ctx.spectral.is_empty() {
        return Err("spectral table unavailable".into());
    }
    let worst = ctx
        .spectral
        .iter()
        .map(|r| r.rho - r.lemma_bound)
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = ctx.spectral.iter().all(|r| r.lemma_holds(1e-6));
    outcome(pass, format!("{} cells, max(rho - bound) = {worst:.3e}", ctx.spectral.len()))
}

fn operator_orders(_: &mut Context) -> Check {
    let par_cfg = ParabolicConfig::<f64>::default();
    let parabolic = move |l: &Level| -> Result<Box<dyn ForwardOperator<f64>>> {
        Ok(Box::new(ParabolicOperator::build(l, &par_cfg)?))
    };
    let elliptic = |l: &Level| -> Result<Box<dyn ForwardOperator<f64>>> {
        Ok(Box::new(EllipticOperator::build(l, &EllipticConfig::default())?))
    };
    let smooth_1d = |x: f64, _: f64| (2.0 * PI * x).cos() + 0.5 * (4.0 * PI * x).sin();
    let fourier = move |x: f64, _: f64| {
        let mode = |k: f64, amp: f64, phase: f64| {
            let w = 2.0 * PI * k;
            amp * (-(par_cfg.a * w * w + par_cfg.c) * par_cfg.t_end).exp()
                * (w * (x + par_cfg.b * par_cfg.t_end) + phase).cos()
        };
        mode(1.0, 1.0, 0.0) + mode(2.0, 0.5, -PI / 2.0)
    };
    let u2 = |x: f64, y: f64| (PI * x).sin() * (2.0 * PI * y).sin();
    let exact2 = move |x: f64, y: f64| -u2(x, y) / (5.0 * PI * PI);
    let smooth_2d = |x: f64, y: f64| x * (1.0 - x) * (3.0 * y).sin() * (1.0 - y);

    let h1 = Hierarchy::build(GridKind::PeriodicInterval, 32, 8).map_err(err)?;
    let h2 = Hierarchy::build(GridKind::DirichletSquare, 8, 7).map_err(err)?;
    let probes = [
        (
            "parabolic self",
            convergence_probe(&parabolic, smooth_1d, &h1.levels()[..4], ProbeReference::Level(h1.finest())),
        ),
        (
            "parabolic analytic",
            convergence_probe(&parabolic, smooth_1d, &h1.levels()[..4], ProbeReference::Exact(&fourier)),
        ),
        (
            "elliptic analytic",
            convergence_probe(&elliptic, u2, &h2.levels()[..4], ProbeReference::Exact(&exact2)),
        ),
        (
            "elliptic self",
            convergence_probe(&elliptic, smooth_2d, &h2.levels()[..4], ProbeReference::Level(h2.finest())),
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, errs) in probes {
        let errs = errs.map_err(err)?;
        let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
        pass &= ratios.iter().all(|q| (3.2..=4.8).contains(q));
        parts.push(format!("{name} {ratios:.2?}"));
    }
    outcome(pass, parts.join("; "))
}

fn identities(_: &mut Context) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut random = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let mut worst_pair = 0.0f64;
    let mut worst_sa = 0.0f64;
    let mut worst_proj = 0.0f64;
    let mut min_re = f64::INFINITY;
    for (kind, n) in [(GridKind::PeriodicInterval, 160), (GridKind::DirichletSquare, 16)] {
        let h = Hierarchy::build(kind, n, 1).map_err(err)?;
        let l = h.finest();
        let ops: Vec<Box<dyn ForwardOperator<f64>>> = match kind {
            GridKind::PeriodicInterval => [ParabolicScheme::TimeStepping, ParabolicScheme::Spectral]
                .into_iter()
                .map(|scheme| {
                    let cfg = ParabolicConfig { scheme, ..Default::default() };
                    ParabolicOperator::build(l, &cfg).map(|o| Box::new(o) as Box<dyn ForwardOperator<f64>>)
                })
                .collect::<Result<_>>()
                .map_err(err)?,
            GridKind::DirichletSquare => vec![Box::new(EllipticOperator::build(l, &EllipticConfig::default()).map_err(err)?)],
        };
        for op in &ops {
            for _ in 0..5 {
                let x = random(op.dim());
                let y = random(op.dim());
                let lhs = dot(&op.apply(&x), &y);
                let rhs = dot(&x, &op.apply_transpose(&y));
                worst_pair = worst_pair.max((lhs - rhs).abs() / (norm2(&x) * norm2(&y)));
            }
            let beta = 1e-3;
            let lambda: Vec<f64> = random(l.n_dof()).iter().map(|r| beta + 50.0 * r * r).collect();
            let sys = ScaledSystem::new(l, op.as_ref(), lambda, beta).map_err(err)?;
            for _ in 0..5 {
                let u = random(l.n_dof());
                let v = random(l.n_dof());
                let a = l.inner_values(&sys.g_apply(&u), &v);
                let b = l.inner_values(&u, &sys.g_apply(&v));
                let scale = l.inner_values(&u, &u).sqrt() * l.inner_values(&v, &v).sqrt();
                worst_sa = worst_sa.max((a - b).abs() / scale);
            }
            let g = materialize_g(&sys).map_err(err)?;
            let spec = eigenvalues(&g).map_err(err)?;
            min_re = spec.iter().map(|z| z.re).fold(min_re, f64::min);
        }
    }
    for (kind, n0) in [(GridKind::PeriodicInterval, 20), (GridKind::DirichletSquare, 8)] {
        let h = Hierarchy::build(kind, n0, 4).map_err(err)?;
        for fine in 1..h.n_levels() {
            let u = random(h.level(fine - 1).n_dof());
            let back = h.l2_project_values(fine, &h.prolong_values(fine - 1, &u)).map_err(err)?;
            worst_proj = worst_proj.max(rel_diff(&back, &u));
        }
    }
    let pass = worst_pair <= 1e-11 && worst_sa <= 1e-11 && worst_proj <= 1e-10 && min_re >= 1.0 - 1e-9;
    outcome(
        pass,
        format!(
            "transpose {worst_pair:.1e}, G self-adjoint {worst_sa:.1e}, projection {worst_proj:.1e}, min Re sigma(G) {min_re:.12}"
        ),
    )
}

/// Enumerates free / lower / upper patterns and keeps the best feasible one.
fn active_set_oracle(a: &DenseMatrix<f64>, b: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        let pattern: Vec<usize> = (0..n).map(|i| (code / 3usize.pow(i as u32)) % 3).collect();
        let mut u: Vec<f64> = (0..n)
            .map(|i| match pattern[i] {
                1 => lo[i],
                2 => hi[i],
                _ => 0.0,
            })
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 0).collect();
        if !free.is_empty() {
            let sub = DenseMatrix::from_fn(free.len(), |i, j| a[(free[i], free[j])]);
            let rhs: Vec<f64> = free
                .iter()
                .map(|&i| b[i] - (0..n).filter(|&j| pattern[j] != 0).map(|j| a[(i, j)] * u[j]).sum::<f64>())
                .collect();
            let x = sub.lu().unwrap().solve(&rhs);
            for (k, &i) in free.iter().enumerate() {
                u[i] = x[k];
            }
        }
        if (0..n).any(|i| u[i] < lo[i] - 1e-14 || u[i] > hi[i] + 1e-14) {
            continue;
        }
        let obj = 0.5 * dot(&u, &a.matvec(&u)) - dot(b, &u);
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, u));
        }
    }
    best.unwrap().1
}

fn ipm_desk(_: &mut Context) -> Check {
    let k = DenseMatrix::from_rows(&[vec![1.0, 0.4, -0.2], vec![0.3, 0.8, 0.5], vec![-0.6, 0.2, 1.1]]);
    let w = vec![0.5, 0.3, 0.2];
    let f = vec![2.0, -1.5, 0.4];
    let beta = 0.05;
    let (lo, hi) = (vec![-0.5, -1.0, 0.0], vec![1.0, 0.5, 0.3]);
    let a = k
        .transpose()
        .matmul(&k.scale_rows(&w))
        .add(&DenseMatrix::diagonal(&w.iter().map(|v| v * beta).collect::<Vec<_>>()));
    let b = k.transpose().matvec(&f.iter().zip(&w).map(|(x, y)| x * y).collect::<Vec<_>>());
    let oracle = active_set_oracle(&a, &b, &lo, &hi);
    let toy = ControlProblem::single_level(w, Box::new(DenseOperator::new(k)), f, beta, lo, hi).map_err(err)?;
    let res = solve(&toy, &IpmOptions::default()).map_err(err)?;
    let toy_dev = res.state.u.iter().zip(&oracle).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let toy_ok = res.converged && toy_dev <= 1e-7;

    let dir = tempfile::tempdir().map_err(err)?;
    let mut cfg = ExperimentConfig::parse(&parabolic_text(1024, 1)).map_err(err)?;
    cfg.output_dir = dir.path().to_path_buf();
    let art = run(&cfg).map_err(err)?;
    let res = art.result.ok_or("no result")?;
    let st = &res.state;
    let mu_ok = st.mu <= 1e-10 * res.mu0;
    let in_box = st.u.iter().all(|&u| (-1e-6..=1.0 + 1e-6).contains(&u));
    let comp = (0..st.u.len())
        .map(|i| (st.v1[i] * st.u[i]).max(st.v2[i] * (1.0 - st.u[i])))
        .fold(0.0, f64::max);
    let comp_ok = comp <= 1e-8;
    outcome(
        toy_ok && res.converged && mu_ok && in_box && comp_ok,
        format!(
            "toy max dev {toy_dev:.1e}; 1D h=2^-10: converged={} outer={} mu/mu0={:.1e} u in [{:.3e}, {:.6}] complementarity {:.1e}",
            res.converged,
            res.records.len(),
            st.mu / res.mu0,
            st.u.iter().cloned().fold(f64::INFINITY, f64::min),
            st.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            comp
        ),
    )
}

fn corridor(reference: &[((usize, usize), u64)], runs: &BTreeMap<(usize, usize), RunInfo>) -> String {
    reference
        .iter()
        .filter_map(|(key, r)| {
            runs.get(key).map(|x| {
                let ratio = x.total as f64 / *r as f64;
                let tag = if (0.5..=2.0).contains(&ratio) { "in" } else { "out" };
                format!("{}/{}L {} vs {r} ({tag})", key.0, key.1, x.total)
            })
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn trend_1d(ctx: &mut Context) -> Check {
    for n in [1024, 2048, 4096] {
        for levels in 1..=3 {
            ctx.runs_1d.insert((n, levels), ipm_run(&parabolic_text(n, levels))?);
        }
    }
    let t = |n, l| ctx.runs_1d[&(n, l)].total;
    let all_converged = ctx.runs_1d.values().all(|r| r.converged);
    let ratio_ok = [2048, 4096].iter().all(|&n| t(n, 2) as f64 <= 0.85 * t(n, 1) as f64);
    let monotone = t(2048, 2) <= t(1024, 2) && t(4096, 2) <= t(2048, 2);
    let table: Vec<String> = [1024, 2048, 4096]
        .iter()
        .map(|&n| {
            let r = |l| &ctx.runs_1d[&(n, l)];
            format!("{n}: {}/{}/{} (outer {}/{}/{})", r(1).total, r(2).total, r(3).total, r(1).outer, r(2).outer, r(3).outer)
        })
        .collect();
    outcome(
        all_converged && ratio_ok && monotone,
        format!(
            "totals 1/2/3 levels {}; 2L<=0.85*1L={ratio_ok} 2L monotone={monotone}\n      corridor (reported only): {}",
            table.join("; "),
            corridor(&REFERENCE_1D, &ctx.runs_1d)
        ),
    )
}

fn trend_2d(_: &mut Context) -> Check {
    let mut runs = BTreeMap::new();
    for n in [64, 128, 256] {
        for levels in 1..=2 {
            runs.insert((n, levels), ipm_run(&elliptic_text(n, levels))?);
        }
    }
    let ratio = |n| runs[&(n, 2)].total as f64 / runs[&(n, 1)].total as f64;
    let ratios = [ratio(64), ratio(128), ratio(256)];
    let all_converged = runs.values().all(|r| r.converged);
    let pass = all_converged && ratios[2] < 1.0 && strictly_decreasing(&ratios);
    let table: Vec<String> = [64, 128, 256]
        .iter()
        .map(|&n| format!("{n}: {}/{} (fallback solves {})", runs[&(n, 1)].total, runs[&(n, 2)].total, runs[&(n, 2)].fallbacks))
        .collect();
    outcome(
        pass,
        format!(
            "totals 1/2 levels {}; ratios {ratios:.3?}\n      corridor (reported only): {}",
            table.join("; "),
            corridor(&REFERENCE_2D, &runs)
        ),
    )
}

fn multilevel_consistency(ctx: &mut Context) -> Check {
    let h = Hierarchy::with_finest(GridKind::PeriodicInterval, 4096, 2).map_err(err)?;
    let par = ParabolicConfig {
        scheme: ParabolicScheme::Spectral,
        ..Default::default()
    };
    let ops: Vec<Box<dyn ForwardOperator<f64>>> = h
        .levels()
        .iter()
        .map(|l| ParabolicOperator::build(l, &par).map(|o| Box::new(o) as Box<dyn ForwardOperator<f64>>))
        .collect::<Result<_>>()
        .map_err(err)?;
    let beta = 1e-3;
    let lambda = h.finest().interpolate(|x, _| 40.0 * (5.0 * x).sin().powi(2) + beta);
    let mg = MgPreconditioner::build(&h, &ops, &lambda, beta, PrecondMode::WCycle, &CoarseOptions::default()).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r: Vec<f64> = (0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dev = rel_diff(&mg.mg_apply(&r).map_err(err)?, &mg.two_grid_apply(&r).map_err(err)?);

    let two = ctx.runs_1d.get(&(4096, 2)).ok_or("4096 two-level run unavailable")?;
    let three = ctx.runs_1d.get(&(4096, 3)).ok_or("4096 three-level run unavailable")?;
    let mut excess = i64::MIN;
    for (a, b) in two.rows.iter().zip(&three.rows) {
        excess = excess
            .max(b.predictor_iters as i64 - a.predictor_iters as i64)
            .max(b.corrector_iters as i64 - a.corrector_iters as i64);
    }
    let matched = two.rows.len().min(three.rows.len());
    outcome(
        dev <= 1e-13 && excess <= 3,
        format!("mg vs two-grid rel diff {dev:.1e}; max 3L-2L CGS iterations over {matched} matched outer iterations: {excess}"),
    )
}

fn files_in(dir: &Path) -> std::io::Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p)?);
    }
    Ok(out)
}

fn determinism(_: &mut Context) -> Check {
    let configs = [
        parabolic_text(1024, 2) + "write_solution = true\n",
        elliptic_text(64, 2) + "write_solution = true\n",
        "experiment = spectral-table\nh_list = 40,80\nbeta_list = 1,0.01\n".to_string(),
    ];
    let mut compared = 0;
    for text in &configs {
        let mut snapshots = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(err)?;
            let mut cfg = ExperimentConfig::parse(text).map_err(err)?;
            cfg.output_dir = dir.path().to_path_buf();
            run(&cfg).map_err(err)?;
            snapshots.push(files_in(dir.path()).map_err(err)?);
        }
        if snapshots[0] != snapshots[1] {
            return outcome(false, format!("outputs differ for config:\n{text}"));
        }
        compared += snapshots[0].len();
    }
    outcome(true, format!("{compared} CSV files byte-identical across reruns"))
}

fn main() {
    let checks: [(&str, fn(&mut Context) -> Check); 9] = [
        ("two-grid spectral distance table", spectral_table),
        ("rho <= ((e^d - 1)/d) d_h at every table cell", lemma_bound),
        ("second-order forward operators", operator_orders),
        ("adjoint and projection identities", identities),
        ("interior point correctness at desk scale", ipm_desk),
        ("1D preconditioner trend", trend_1d),
        ("2D preconditioner trend", trend_2d),
        ("multilevel consistency", multilevel_consistency),
        ("determinism", determinism),
    ];
    let mut ctx = Context::default();
    let mut failures = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t0 = Instant::now();
        let res = check(&mut ctx);
        let secs = t0.elapsed().as_secs_f64();
        let (verdict, detail) = match res {
            Ok(o) => (if o.pass { "PASS" } else { "FAIL" }, o.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if verdict == "FAIL" {
            failures += 1;
        }
        println!("criterion {} [{verdict}] {name} ({secs:.1}s)\n      {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failures} failed", checks.len() - failures);
    if failures > 0 && std::env::var("MGIPM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
