//! Acceptance battery: one PASS/FAIL line per criterion.
//!
//! Criteria whose targets are analytically out of reach on the stated
//! windows are listed in `KNOWN_RED`. They still run and print FAIL. For
//! each, an oracle check confirms that the measured value is the correct
//! one, so a broken computation cannot hide behind the known failure. The
//! process exits nonzero on any other failure.

use nalgebra::DVector;
use neumann_core::eigen::{lowest_eigenpairs, Method, SolverOptions, SpectrumResult};
use neumann_core::geometry::{collar_measure, geometric_grid, minkowski_dimension, Domain, LipBoundaryAtlas};
use neumann_core::heat::{box_heat_trace, semigroup_apply, trace_slope, ultracontractivity_fit};
use neumann_core::inequalities::{cusp_power_membership, sobolev_refinement, AscentOptions, Refinement};
use neumann_core::linalg::dense_stiffness;
use neumann_core::operator::DiscreteOperator;
use neumann_core::perturbation::{
    collar_removal, deformation_study, stability_sweep, verify_restriction_upper_bound, Family, StabilityReport,
    SweepOptions,
};
use neumann_core::whitney::{build_whitney, check_point_cube_distance, verify_whitney};
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

/// Sub-checks expected to fail, with the reason recorded in the project notes.
const KNOWN_RED: &[&str] = &["3b", "6a", "8b"];

/// Log-log slope of `(Σ_{k≥0} e^{-k²π²t})²` fitted on 12 geometric times in
/// [0.01, 0.1], from an independent theta-series evaluation.
const SQUARE_TRACE_SLOPE: f64 = -0.7567003318842839;

/// Largest per-halving growth of the q = 8 quotient on the γ = 1/2 cusp:
/// `2^(2(δ - 3/q))` at δ = 1/2.
const CUSP_Q8_GROWTH_CAP: f64 = 1.189_207_115_002_721;

struct Criterion {
    id: &'static str,
    title: &'static str,
    subs: Vec<(String, bool, String)>,
}

impl Criterion {
    fn new(id: &'static str, title: &'static str) -> Self {
        Criterion {
            id,
            title,
            subs: Vec::new(),
        }
    }

    fn check(&mut self, sub: &str, ok: bool, detail: String) {
        println!("    {} {sub}: {detail}", if ok { "ok " } else { "NOT" });
        self.subs.push((sub.to_string(), ok, detail));
    }
}

#[derive(Default)]
struct Battery {
    lines: Vec<(String, bool)>,
    unexpected: Vec<String>,
}

impl Battery {
    fn run(&mut self, id: &'static str, title: &'static str, f: impl FnOnce(&mut Criterion)) {
        println!("[{id}] {title}");
        let start = Instant::now();
        let mut c = Criterion::new(id, title);
        f(&mut c);
        let failed: Vec<&str> = c.subs.iter().filter(|s| !s.1).map(|s| s.0.as_str()).collect();
        let ok = failed.is_empty() && !c.subs.is_empty();
        for s in &failed {
            if !KNOWN_RED.contains(s) {
                self.unexpected.push(s.to_string());
            }
        }
        let line = if ok {
            format!("PASS [{}] {} ({:.1} s)", c.id, c.title, start.elapsed().as_secs_f64())
        } else {
            format!(
                "FAIL [{}] {} ({:.1} s; not met: {})",
                c.id,
                c.title,
                start.elapsed().as_secs_f64(),
                failed.join(", ")
            )
        };
        println!("{line}\n");
        self.lines.push((line, ok));
    }
}

fn solve(domain: &Domain, h: f64, m: usize) -> (DiscreteOperator, SpectrumResult) {
    let op = DiscreteOperator::assemble(domain.rasterize(h).expect("raster")).expect("operator");
    let spec = lowest_eigenpairs(&op, m, &SolverOptions::default()).expect("eigenpairs");
    (op, spec)
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

fn builtin(name: &str) -> Domain {
    neumann_cli::domains::builtin(name).expect("builtin").expect("domain")
}

fn sweep(domain: &Domain, family: Family, n_max: usize) -> StabilityReport {
    let opts = SweepOptions {
        eps: vec![0.01, 0.02, 0.04, 0.08],
        n_max,
        h: Some(1.0 / 200.0),
        ..SweepOptions::default()
    };
    stability_sweep(domain, family, &opts).expect("sweep")
}

fn square_spectrum(c: &mut Criterion) {
    let start = Instant::now();
    let (_, spec) = solve(&Domain::unit_square(), 1.0 / 128.0, 10);
    let secs = start.elapsed().as_secs_f64();
    let exact: Vec<f64> = [0.0, 1.0, 1.0, 2.0, 4.0, 4.0, 5.0, 5.0, 8.0, 9.0].iter().map(|k| k * PI * PI).collect();
    let lam0 = spec.eigenvalues[0].abs();
    c.check("1a", lam0 <= 1e-10, format!("|λ_0| = {lam0:.2e} (≤ 1e-10)"));
    let err = max_of((1..10).map(|n| (spec.eigenvalues[n] - exact[n]).abs() / exact[n]));
    c.check("1b", err <= 0.01, format!("max relative error {err:.3e} on modes 1..9 (≤ 1e-2)"));
    c.check("1c", secs <= 60.0, format!("solve took {secs:.1} s (≤ 60 s)"));
}

fn rectangle_shrink(c: &mut Criterion) {
    let r = sweep(&builtin("rectangle"), Family::GraphShrink, 8);
    let err = max_of(r.rows.iter().map(|x| x.analytic_error.unwrap_or(f64::INFINITY)));
    c.check("2a", err <= 0.01, format!("max error against π²(j² + k²/(1-ε)²) {err:.3e} (≤ 1e-2)"));
    let bounded = r.rows.iter().all(|x| x.bounded);
    c.check("2b", bounded, format!("two-sided bound holds on all {} rows: {bounded}", r.rows.len()));
    // modes with k = 0 do not move under a vertical shrink; they carry no constant
    let spreads: Vec<(usize, f64)> = r.constants.iter().filter_map(|k| k.spread.map(|s| (k.n, s))).collect();
    let worst = spreads.iter().map(|s| s.1).fold(1.0, f64::max);
    let flat = r
        .constants
        .iter()
        .filter(|k| k.spread.is_none())
        .all(|k| r.rows.iter().filter(|x| x.n == k.n).all(|x| !x.above_floor));
    c.check(
        "2c",
        !spreads.is_empty() && worst <= 1.3 && flat,
        format!(
            "fitted b spread max {worst:.3} over modes {:?} (≤ 1.3); remaining modes below the discretization floor: {flat}",
            spreads.iter().map(|s| s.0).collect::<Vec<_>>()
        ),
    );
    let mono = r.rows.iter().all(|x| x.monotone == Some(true));
    c.check("2d", mono, format!("λ_(n,1) ≤ λ_(n,3) for every n: {mono}"));
}

fn sweep_exponents(c: &mut Criterion) {
    let saw = sweep(&builtin("sawtooth"), Family::GraphOffset, 8);
    let fitted: Vec<(usize, f64)> = saw.constants.iter().filter_map(|k| k.exponent.map(|e| (k.n, e))).collect();
    let lo = fitted.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    let floored: Vec<usize> = saw.constants.iter().filter(|k| k.exponent.is_none()).map(|k| k.n).collect();
    c.check(
        "3a",
        fitted.len() >= 4 && lo >= 0.8,
        format!(
            "sawtooth offset exponents {:?}, min {lo:.3} (≥ 0.8); below floor {floored:?}",
            fitted.iter().map(|f| (f.0, (f.1 * 1000.0).round() / 1000.0)).collect::<Vec<_>>()
        ),
    );
    let cusp = sweep(&Domain::cusp(2, 0.5).unwrap(), Family::CollarRemoval, 8);
    let ex: Vec<f64> = cusp.constants.iter().filter_map(|k| k.exponent).collect();
    let inside = !ex.is_empty() && ex.iter().all(|e| (0.35..=0.75).contains(e));
    c.check(
        "3b",
        inside,
        format!(
            "cusp collar-removal exponents {:?} (target [0.35, 0.75])",
            ex.iter().map(|e| (e * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    );
    // oracle for the known red: first-order shift from a rectifiable boundary
    let first_order = ex.len() >= 4 && ex.iter().all(|e| (0.9..=1.4).contains(e));
    let bounded = cusp.rows.iter().all(|r| r.bounded);
    c.check(
        "3b-oracle",
        first_order && bounded,
        format!("cusp exponents near 1 (rectifiable boundary, |collar| ~ ε): {first_order}; growth bounded: {bounded}"),
    );
}

fn whitney_invariants(c: &mut Criterion) {
    for (name, dom) in [
        ("square", Domain::unit_square()),
        ("disc", Domain::unit_disc()),
        ("cusp", Domain::cusp(2, 0.5).unwrap()),
    ] {
        let cov = build_whitney(&dom, 10).expect("covering");
        let rep = verify_whitney(&dom, &cov).expect("whitney report");
        let pts = check_point_cube_distance(&dom, &cov, 3);
        let ok = rep.overlaps == 0
            && rep.separation_violations == 0
            && rep.count_violations.is_empty()
            && pts.violations.is_empty()
            && pts.points > 0;
        c.check(
            &format!("4-{name}"),
            ok,
            format!(
                "{} cubes: {} overlaps, {} separation violations, count violations {:?}, {} of {} points outside [diam, 5 diam] (ratios {:.3}..{:.3})",
                rep.cubes,
                rep.overlaps,
                rep.separation_violations,
                rep.count_violations,
                pts.violations.len(),
                pts.points,
                pts.min_ratio,
                pts.max_ratio
            ),
        );
    }
}

fn minkowski(c: &mut Criterion) {
    let eps = geometric_grid(1e-3, 1e-1, 8);
    let sq = minkowski_dimension(&Domain::unit_square(), &eps).unwrap().estimate;
    c.check("5a", (sq - 1.0).abs() <= 0.1, format!("square estimate {sq:.4} (1 ± 0.1)"));
    let disc = Domain::unit_disc();
    let d = minkowski_dimension(&disc, &eps).unwrap().estimate;
    c.check("5b", (d - 1.0).abs() <= 0.1, format!("disc estimate {d:.4} (1 ± 0.1)"));
    let err = max_of(eps.iter().map(|&e| {
        let exact = PI * (1.0 - (1.0 - e) * (1.0 - e));
        (collar_measure(&disc, e).unwrap() - exact).abs() / exact
    }));
    c.check("5c", err <= 0.05, format!("disc collar vs π(1-(1-ε)²): max relative error {err:.3e} (≤ 5e-2)"));
    let cu = minkowski_dimension(&Domain::cusp(2, 0.5).unwrap(), &eps).unwrap().estimate;
    c.check("5d", cu <= 1.6, format!("cusp estimate {cu:.4} (≤ 1.6)"));
}

fn neumann_bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_neumann"));
    cmd.env_remove(neumann_cli::cache::CACHE_ENV);
    cmd
}

fn report_verdict(path: &Path) -> String {
    let text = std::fs::read_to_string(path).expect("report");
    let v: serde_json::Value = serde_json::from_str(&text).expect("json");
    v["verdict"].as_str().unwrap_or("missing").to_string()
}

fn heat(c: &mut Criterion) {
    let (_, spec) = solve(&Domain::unit_square(), 1.0 / 64.0, 100);
    let fit = trace_slope(&spec, 0.01, 0.1, 12).unwrap();
    c.check(
        "6a",
        (fit.slope + 1.0).abs() <= 0.15,
        format!("square trace slope {:.4} on [0.01, 0.1] (target -1 ± 0.15)", fit.slope),
    );
    let ts: Vec<f64> = fit.samples.iter().map(|s| s.t).collect();
    let theta: Vec<f64> = ts.iter().map(|&t| box_heat_trace(&[1.0, 1.0], t)).collect();
    let theta_slope = neumann_core::fit::power_law_fit(&ts, &theta).unwrap().slope;
    let dz = max_of(fit.samples.iter().zip(&theta).map(|(s, z)| (s.z - z).abs() / z));
    c.check(
        "6a-oracle",
        (fit.slope - SQUARE_TRACE_SLOPE).abs() <= 0.01 && (theta_slope - SQUARE_TRACE_SLOPE).abs() <= 1e-6 && dz <= 0.01,
        format!(
            "computed slope {:.4}, theta-series slope {theta_slope:.6}, independent oracle {SQUARE_TRACE_SLOPE:.6}; trace deviation {dz:.2e}",
            fit.slope
        ),
    );

    let dense = SolverOptions {
        method: Method::Dense,
        ..SolverOptions::default()
    };
    let mut worst: f64 = 0.0;
    let mut sizes = Vec::new();
    for (dom, h) in [
        (Domain::unit_square(), 1.0 / 14.0),
        (Domain::unit_disc(), 0.15),
        (Domain::cusp(2, 0.5).unwrap(), 1.0 / 11.0),
        (Domain::unit_interval(), 1.0 / 150.0),
    ] {
        let op = DiscreteOperator::assemble(dom.rasterize(h).unwrap()).unwrap();
        let n = op.n();
        sizes.push(n);
        let spec = lowest_eigenpairs(&op, n, &dense).unwrap();
        let f: Vec<f64> = (0..n).map(|i| ((i * 11 + 5) % 7) as f64 - 2.9).collect();
        for t in [0.01, 0.1, 1.0] {
            let r = semigroup_apply(&spec, &f, t).unwrap();
            let e = (-t * dense_stiffness(&op) / op.cell_volume()).exp();
            let oracle = &e * DVector::from_vec(f.clone());
            worst = worst.max(max_of(r.values.iter().zip(oracle.iter()).map(|(a, b)| (a - b).abs())));
        }
    }
    let small = sizes.iter().all(|&n| n <= 200);
    c.check(
        "6b",
        worst <= 1e-8 && small,
        format!("semigroup vs dense exponential max deviation {worst:.2e} on rasters of {sizes:?} cells (≤ 1e-8)"),
    );

    for (name, m) in [("interval", "1"), ("square", "2.5"), ("cusp", "3")] {
        let dir = tempfile::tempdir().unwrap();
        let status = neumann_bin()
            .args(["heatkernel", "--domain", name, "--exponent", m, "--out"])
            .arg(dir.path())
            .output()
            .expect("run neumann");
        let verdict = report_verdict(&dir.path().join("heatkernel.json"));
        c.check(
            &format!("6c-{name}"),
            status.status.code() == Some(0) && verdict == "pass",
            format!("heat report on {name} with M = {m}: {verdict} (exit {:?})", status.status.code()),
        );
    }
}

fn restriction_chain(c: &mut Criterion) {
    let square = Domain::unit_square();
    let h = 1.0 / 64.0;
    let (_, spec1) = solve(&square, h, 100);
    let c5 = ultracontractivity_fit(&spec1, 2.5, 16).unwrap().c5;
    let inner = collar_removal(&square, h, 1.0 / 32.0).unwrap();
    let op2 = DiscreteOperator::assemble(inner.sub.raster.clone()).unwrap();
    let spec2 = lowest_eigenpairs(&op2, 9, &SolverOptions::default()).unwrap();
    let rep = verify_restriction_upper_bound(&spec1, &op2, &inner.sub.map, &spec2, c5, 8).unwrap();
    let worst = rep
        .rows
        .iter()
        .map(|r| (r.mu2 - r.lambda2) / r.lambda2)
        .fold(f64::INFINITY, f64::min);
    c.check(
        "7",
        rep.chain_holds && rep.rows.len() == 8,
        format!(
            "λ_(n,2) ≤ μ_(n,2) ≤ (1 + b|Ω₁\\Ω₂|)λ_(n,1) for n = 1..{}: {}; c5 = {c5:.4}, removed {:.4}, min (μ-λ)/λ = {worst:.2e}",
            rep.rows.len(),
            rep.chain_holds,
            rep.removed_measure
        ),
    );
}

fn sobolev_sharpness(c: &mut Criterion) {
    let cusp = Domain::cusp(2, 0.5).unwrap();
    let hs = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let opts = AscentOptions::default();
    let q4 = sobolev_refinement(&cusp, 4.0, &hs, &opts).unwrap();
    c.check(
        "8a",
        q4.study.classification == Refinement::Stable,
        format!("q = 4 per-halving ratios {:?} ({:?}; ±5%)", round(&q4.study.ratios), q4.study.classification),
    );
    let q8 = sobolev_refinement(&cusp, 8.0, &hs, &opts).unwrap();
    c.check(
        "8b",
        q8.study.ratios.iter().all(|&r| r >= 1.5),
        format!("q = 8 per-halving ratios {:?} (target ≥ 1.5)", round(&q8.study.ratios)),
    );
    let cap = q8.study.ratios.iter().all(|&r| r <= CUSP_Q8_GROWTH_CAP * 1.05);
    c.check(
        "8b-oracle",
        cap,
        format!("q = 8 growth within the extremal-family cap {CUSP_Q8_GROWTH_CAP:.4} per halving: {cap}"),
    );
    let mut exact = true;
    for q in [2.5, 4.0, 6.0, 8.0, 12.0] {
        let m = cusp_power_membership(0.5, 2, 0.0, q).unwrap();
        exact &= m.w12_threshold == 0.5 && m.lq_threshold == 3.0 / q;
        for k in 0..=100 {
            let delta = k as f64 / 100.0;
            let m = cusp_power_membership(0.5, 2, delta, q).unwrap();
            exact &= m.in_w12 == (delta < 0.5) && m.in_lq == (delta < 3.0 / q);
        }
    }
    c.check("8c", exact, format!("membership thresholds δ < 1/2 and δ < 3/q exact: {exact}"));
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

fn deformation(c: &mut Criterion) {
    let square = Domain::unit_square();
    let atlas = LipBoundaryAtlas::square_corners([0.0, 0.0], 1.0, 0.15).unwrap();
    let study = deformation_study(&atlas, &square, &[0.003, 0.006, 0.012], 8.0).unwrap();
    let pou = max_of(study.reports.iter().map(|r| r.diagnostics.partition_residual));
    c.check("9a", pou <= 1e-9, format!("partition-of-unity residual {pou:.2e} (≤ 1e-9)"));
    let a1: Vec<f64> = study.reports.iter().map(|r| r.diagnostics.a1).collect();
    let a1_ok = study.a1_spread.is_some_and(|s| s <= 1.3);
    c.check("9b", a1_ok, format!("A_1 per ε {:?}, spread {:?} (≤ 1.3)", round(&a1), study.a1_spread));
    let incl = study
        .reports
        .iter()
        .all(|r| r.deep_missing == 0 && r.escaped == 0 && r.unresolved == 0 && r.diagnostics.injective);
    let cells: usize = study.reports.iter().map(|r| r.deep_cells).sum();
    c.check("9c", incl, format!("Ω\\∂_εΩ ⊂ T_ε(Ω) ⊂ Ω on every cell ({cells} deep cells checked): {incl}"));
    let a5: Vec<f64> = study.reports.iter().filter_map(|r| r.a5).collect();
    let a5_ok = a5.len() == 3 && study.a5_spread.is_some_and(|s| s <= 1.3);
    c.check("9d", a5_ok, format!("A_5 per ε {:?}, spread {:?} (≤ 1.3)", round(&a5), study.a5_spread));
}

fn determinism(c: &mut Criterion) {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut codes = Vec::new();
    for d in &dirs {
        let out = neumann_bin()
            .args(["verify-all", "--domain", "square", "--seed", "7", "--out"])
            .arg(d.path())
            .output()
            .expect("run neumann");
        codes.push(out.status.code());
    }
    let mut names: Vec<String> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") && n != "manifest.json")
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(dirs[0].path().join(n)).ok() != std::fs::read(dirs[1].path().join(n)).ok())
        .collect();
    c.check(
        "10",
        codes.iter().all(|c| matches!(c, Some(0..=2))) && names.len() >= 7 && differing.is_empty(),
        format!("exit codes {codes:?}; {} report files compared, differing: {differing:?}", names.len()),
    );
}

fn main() {
    // the harness flags (--nocapture, filters) do not apply to this target
    let mut b = Battery::default();
    b.run("1", "square spectrum", square_spectrum);
    b.run("2", "rectangle shrink family", rectangle_shrink);
    b.run("3", "stability exponents (sawtooth offset, cusp collar removal)", sweep_exponents);
    b.run("4", "Whitney invariants", whitney_invariants);
    b.run("5", "Minkowski dimension", minkowski);
    b.run("6", "heat checks", heat);
    b.run("7", "restriction chain, square to inner square", restriction_chain);
    b.run("8", "Sobolev sharpness on the cusp", sobolev_sharpness);
    b.run("9", "deformation map on the corner atlas", deformation);
    b.run("10", "verify-all determinism", determinism);

    println!("acceptance summary");
    for (line, _) in &b.lines {
        println!("{line}");
    }
    let passed = b.lines.iter().filter(|l| l.1).count();
    println!("{passed} of {} criteria pass; known red sub-checks: {}", b.lines.len(), KNOWN_RED.join(", "));
    if !b.unexpected.is_empty() {
        println!("unexpected failures: {}", b.unexpected.join(", "));
        std::process::exit(1);
    }
}
