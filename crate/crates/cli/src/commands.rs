//! Command pipelines. Each command computes a [`Part`] (checks, report data
//! and auxiliary files); `verify-all` runs several parts into one summary.

use crate::cache::{self, SpectrumCache};
use crate::config::{check_count, check_grid, check_range, ExperimentConfig};
use crate::manifest::{Check, Report, StepTiming, VERSION};
use crate::output::{csv, gnuplot, num, Emitter};
use anyhow::{bail, Result};
use nalgebra::DVector;
use neumann_core::eigen::{lowest_eigenpairs, Method, SolverOptions, SpectrumResult};
use neumann_core::geometry::{ball_volume, geometric_grid, minkowski_dimension, Domain, DomainSpec};
use neumann_core::heat::{
    box_heat_trace, semigroup_apply, trace_slope, ultracontractivity_fit, verify_eigenfunction_sup_bound,
    verify_eigenvalue_growth_bound, verify_reconstructed_bounds,
};
use neumann_core::inequalities::{
    cusp_power_membership, cusp_power_norms, sobolev_refinement, AscentOptions, Refinement,
};
use neumann_core::linalg::dense_stiffness;
use neumann_core::operator::DiscreteOperator;
use neumann_core::perturbation::{
    collar_removal, rectangle_sides, stability_sweep_from, verify_restriction_upper_bound, verify_two_sided_bound,
    Family, SweepOptions,
};
use neumann_core::report::Verdict;
use neumann_core::whitney::{build_whitney, check_point_cube_distance, cube_count_dimension, verify_whitney};
use serde::Serialize;
use serde_json::{json, Value};
use std::time::Instant;

pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub domain: Domain,
    pub seed: u64,
    pub config_hash: String,
    pub cache: Option<SpectrumCache>,
    pub out: Emitter,
    pub steps: Vec<StepTiming>,
    pub cache_hits: usize,
}

/// Checks, report data and extra files produced by one pipeline.
pub struct Part {
    pub checks: Vec<Check>,
    pub data: Value,
    pub files: Vec<(String, String)>,
}

impl Part {
    pub fn verdict(&self) -> Verdict {
        Verdict::all(self.checks.iter().map(|c| c.verdict))
    }
}

impl Ctx {
    fn record(&mut self, step: &str, start: Instant) {
        self.steps.push(StepTiming {
            step: step.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    fn solver(&self, tol: f64, method: Method) -> SolverOptions {
        SolverOptions {
            tol,
            seed: self.seed,
            method,
            ..SolverOptions::default()
        }
    }

    fn operator(&self, h: f64) -> Result<DiscreteOperator> {
        Ok(DiscreteOperator::assemble(self.domain.rasterize(h)?)?)
    }

    fn spectrum(&mut self, op: &DiscreteOperator, m: usize, opts: &SolverOptions) -> Result<SpectrumResult> {
        let (s, hit) = cache::spectrum(self.cache.as_ref(), op, m, opts)?;
        if hit {
            self.cache_hits += 1;
        }
        Ok(s)
    }

    fn report<T: Serialize>(&self, command: &str, checks: &[Check], data: T) -> Report<T> {
        Report {
            command: command.to_string(),
            version: VERSION.to_string(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            domain_id: self.domain.id().to_string(),
            domain: self.domain.spec().clone(),
            verdict: Verdict::all(checks.iter().map(|c| c.verdict)),
            checks: checks.to_vec(),
            data,
        }
    }

    /// Writes `<name>.json` and the part's files; returns the part verdict.
    pub fn emit(&mut self, command: &str, name: &str, part: Part) -> Result<Verdict> {
        let verdict = part.verdict();
        let report = self.report(command, &part.checks, part.data);
        self.out.json(&format!("{name}.json"), &report)?;
        for (file, text) in &part.files {
            self.out.write(file, text)?;
        }
        Ok(verdict)
    }
}

fn pass_fail(ok: bool) -> Verdict {
    Verdict::from_bool(ok)
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

/// Lowest `count` Neumann eigenvalues `π² Σ k_i²/L_i²` of a box.
pub fn box_eigenvalues(sides: &[f64], count: usize) -> Vec<f64> {
    let pi2 = std::f64::consts::PI.powi(2);
    let n = sides.len();
    let mut kmax = (count as f64).powf(1.0 / n as f64).ceil() as usize + 1;
    loop {
        let mut vals = Vec::new();
        let total = (kmax + 1).pow(n as u32);
        for lin in 0..total {
            let mut r = lin;
            let mut v = 0.0;
            for s in sides {
                let k = (r % (kmax + 1)) as f64;
                r /= kmax + 1;
                v += pi2 * k * k / (s * s);
            }
            vals.push(v);
        }
        vals.sort_by(|a, b| a.total_cmp(b));
        vals.truncate(count);
        let top = *vals.last().unwrap_or(&0.0);
        let next = (kmax + 1) as f64;
        if sides.iter().all(|s| pi2 * next * next / (s * s) > top) {
            return vals;
        }
        kmax *= 2;
    }
}

fn box_sides(domain: &Domain) -> Option<Vec<f64>> {
    match domain.spec() {
        DomainSpec::Box { lo, hi } => Some(lo.iter().zip(hi).map(|(a, b)| b - a).collect()),
        _ => rectangle_sides(domain).map(|(w, h)| vec![w, h]),
    }
}

// ---------------------------------------------------------------- spectrum

pub fn spectrum_part(ctx: &mut Ctx) -> Result<Part> {
    let sc = ctx.cfg.spectrum.clone();
    let h = check_range("spectrum.h", sc.h.unwrap_or(1.0 / 64.0), 0.0, 0.5)?;
    let m = check_count("spectrum.m", sc.m.unwrap_or(10), 1, 400)?;
    let tol = check_range("spectrum.tol", sc.tol.unwrap_or(1e-8), 0.0, 1e-3)?;
    let opts = ctx.solver(tol, sc.method.unwrap_or(Method::Auto));
    let t = Instant::now();
    let op = ctx.operator(h)?;
    let spec = ctx.spectrum(&op, m, &opts)?;
    ctx.record("spectrum", t);

    let lam = &spec.eigenvalues;
    let mut checks = vec![
        Check::new(
            "constant mode",
            "lowest Neumann eigenvalue is zero with constant eigenfunction",
            pass_fail(lam[0].abs() <= 1e-10),
            format!("lambda_0 = {:e}", lam[0]),
        ),
        Check::new(
            "eigensolver residuals",
            "relative residual |K u - lambda B u| / (lambda + 1) within tolerance",
            pass_fail(spec.residuals.iter().all(|r| *r <= tol)),
            format!("max residual {:e} (tol {tol:e})", max_of(spec.residuals.iter().copied())),
        ),
    ];
    let analytic = box_sides(&ctx.domain).map(|s| box_eigenvalues(&s, m));
    let rel: Option<Vec<f64>> = analytic.as_ref().map(|a| {
        lam.iter()
            .zip(a)
            .map(|(l, e)| if *e > 0.0 { (l - e).abs() / e } else { 0.0 })
            .collect()
    });
    if let Some(r) = &rel {
        let worst = max_of(r.iter().copied());
        checks.push(Check::new(
            "separable box spectrum",
            "Neumann eigenvalues of a box are pi^2 sum k_i^2 / L_i^2",
            pass_fail(worst <= 0.01),
            format!("max relative error {worst:.3e} on nonzero modes (tolerance 1e-2)"),
        ));
    }

    let rows = (0..spec.len()).map(|n| {
        vec![
            n.to_string(),
            num(lam[n]),
            analytic.as_ref().map(|a| num(a[n])).unwrap_or_default(),
            rel.as_ref().map(|r| num(r[n])).unwrap_or_default(),
            num(spec.residuals[n]),
            num(spec.sup_norms[n]),
        ]
    });
    let table = csv(&["n", "lambda", "analytic", "rel_error", "residual", "sup_norm"], rows);
    let mut series = vec![(1, 2, "linespoints")];
    if analytic.is_some() {
        series.push((1, 3, "points"));
    }
    let mut files = vec![
        ("eigenvalues.csv".to_string(), table),
        (
            "spectrum.gp".to_string(),
            gnuplot("Neumann eigenvalues", "eigenvalues.csv", "n", "lambda_n", "", &series),
        ),
        ("raster.pgm".to_string(), op.raster().to_pgm(None)),
    ];
    if spec.len() > 1 && op.dim() >= 2 {
        files.push(("mode1.pgm".to_string(), op.raster().to_pgm(Some(&spec.eigenvectors[1]))));
    }
    let data = json!({
        "h": h,
        "m": m,
        "tol": tol,
        "n_cells": op.n(),
        "measure": op.measure(),
        "analytic": analytic,
        "relative_error": rel,
        "spectrum": spec,
    });
    Ok(Part { checks, data, files })
}

// ---------------------------------------------------------------- whitney

pub fn whitney_part(ctx: &mut Ctx) -> Result<Part> {
    let wc = ctx.cfg.whitney.clone();
    let k_max = wc.k_max.unwrap_or(8);
    if !(3..=12).contains(&k_max) {
        bail!("whitney.k_max = {k_max} is outside [3, 12]");
    }
    let per_axis = check_count("whitney.per_axis", wc.per_axis.unwrap_or(3), 2, 9)?;
    let t = Instant::now();
    let cov = build_whitney(&ctx.domain, k_max)?;
    let rep = verify_whitney(&ctx.domain, &cov)?;
    let pts = check_point_cube_distance(&ctx.domain, &cov, per_axis);
    let dim = cube_count_dimension(&cov).ok();
    ctx.record("whitney", t);

    let checks = vec![
        Check::new(
            "Whitney disjointness",
            "Whitney cubes have pairwise disjoint interiors",
            pass_fail(rep.overlaps == 0),
            format!("{} overlapping pairs among {} cubes", rep.overlaps, rep.cubes),
        ),
        Check::new(
            "Whitney separation",
            "diam Q <= dist(Q, boundary) <= 4 diam Q",
            pass_fail(rep.separation_violations == 0),
            format!("{} violations", rep.separation_violations),
        ),
        Check::new(
            "Whitney neighbors",
            "touching cubes differ by at most two levels; at most 12^N neighbors",
            pass_fail(rep.neighbor_level_violations == 0 && rep.max_neighbors <= rep.neighbor_bound),
            format!(
                "{} level violations, max {} neighbors (bound {})",
                rep.neighbor_level_violations, rep.max_neighbors, rep.neighbor_bound
            ),
        ),
        Check::new(
            "Whitney cube counts",
            "n(k) <= c1 2^(Nk) cubes of side 2^-k",
            pass_fail(rep.count_violations.is_empty()),
            format!("violating levels {:?}", rep.count_violations),
        ),
        Check::new(
            "Whitney covering",
            "cubes cover the domain up to the collar below the finest level",
            pass_fail(rep.measure_ok),
            format!(
                "union {:.6} of {:.6}, truncation collar {:.3e}",
                rep.union_measure, rep.domain_measure, rep.truncation_collar
            ),
        ),
        Check::new(
            "Whitney point distance",
            "diam Q <= d(x) <= 5 diam Q for x in Q",
            pts.verdict,
            format!(
                "{} points, d/diam in [{:.3}, {:.3}], {} violations",
                pts.points,
                pts.min_ratio,
                pts.max_ratio,
                pts.violations.len()
            ),
        ),
    ];
    let bound_c1 = ctx.domain.bbox().volume() + 1.0;
    let n = cov.dim as i32;
    let rows = cov.counts.iter().map(|(k, c)| {
        vec![
            k.to_string(),
            c.to_string(),
            num(bound_c1 * 2f64.powi(n * k)),
        ]
    });
    let mut files = vec![
        ("whitney_cubes.csv".to_string(), cov.to_csv()),
        ("cube_counts.csv".to_string(), csv(&["level", "count", "bound"], rows)),
        (
            "cube_counts.gp".to_string(),
            gnuplot("Whitney cube counts", "cube_counts.csv", "level k", "n(k)", "y", &[(1, 2, "linespoints"), (1, 3, "lines")]),
        ),
    ];
    if let Ok(script) = cov.gnuplot_script() {
        files.push(("whitney.gp".to_string(), script));
    }
    let data = json!({
        "k_max": k_max,
        "k_min": cov.k_min,
        "counts": cov.counts,
        "covered_depth": cov.covered_depth,
        "distance_error": cov.distance_error,
        "report": rep,
        "points": pts,
        "cube_count_dimension": dim,
    });
    Ok(Part { checks, data, files })
}

// ---------------------------------------------------------------- dimension

/// Exact collar measure of a box or ball, when the domain is one.
fn exact_collar(domain: &Domain, eps: f64) -> Option<f64> {
    match domain.spec() {
        DomainSpec::Box { lo, hi } => {
            let full: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
            let inner: f64 = lo.iter().zip(hi).map(|(a, b)| (b - a - 2.0 * eps).max(0.0)).product();
            Some(full - inner)
        }
        DomainSpec::Ball { center, radius } => {
            let n = center.len() as i32;
            Some(ball_volume(center.len()) * (radius.powi(n) - (radius - eps).max(0.0).powi(n)))
        }
        _ => None,
    }
}

pub fn dimension_part(ctx: &mut Ctx) -> Result<Part> {
    let dc = ctx.cfg.dimension.clone();
    let lo = check_range("dimension.eps_min", dc.eps_min.unwrap_or(1e-3), 0.0, 0.5)?;
    let hi = check_range("dimension.eps_max", dc.eps_max.unwrap_or(1e-1), lo, 0.5)?;
    let count = check_count("dimension.count", dc.count.unwrap_or(8), 6, 40)?;
    let t = Instant::now();
    let est = minkowski_dimension(&ctx.domain, &geometric_grid(lo, hi, count))?;
    ctx.record("dimension", t);
    let n = ctx.domain.dim() as f64;
    let mut checks = vec![Check::new(
        "boundary dimension below N",
        "Minkowski dimension of the boundary is below N (collar measure -> 0)",
        pass_fail(est.estimate < n),
        format!("estimate {:.4}, N = {n}", est.estimate),
    )];
    let lipschitz = match ctx.domain.spec() {
        DomainSpec::Box { .. } | DomainSpec::Ball { .. } => true,
        DomainSpec::Graph(g) => g.gamma >= 1.0,
        _ => false,
    };
    if lipschitz {
        checks.push(Check::new(
            "Lipschitz boundary dimension",
            "Minkowski dimension equals N-1 for cone-condition domains",
            pass_fail((est.estimate - (n - 1.0)).abs() <= 0.1),
            format!("estimate {:.4} vs {} (tolerance 0.1)", est.estimate, n - 1.0),
        ));
    }
    let exact: Vec<Option<f64>> = est.table.eps.iter().map(|&e| exact_collar(&ctx.domain, e)).collect();
    if exact.iter().all(Option::is_some) {
        let worst = max_of(
            est.table
                .measure
                .iter()
                .zip(&exact)
                .map(|(m, e)| (m - e.unwrap()).abs() / e.unwrap()),
        );
        checks.push(Check::new(
            "collar measure vs exact",
            "collar measure of a box or ball in closed form",
            pass_fail(worst <= 0.05),
            format!("max relative error {worst:.3e} (tolerance 5e-2)"),
        ));
    }
    let rows = est.table.eps.iter().zip(&est.table.measure).zip(&exact).map(|((e, m), x)| {
        vec![num(*e), num(*m), x.map(num).unwrap_or_default()]
    });
    let files = vec![
        ("collar.csv".to_string(), csv(&["eps", "measure", "exact"], rows)),
        (
            "collar.gp".to_string(),
            gnuplot("Collar measure", "collar.csv", "eps", "|collar|", "xy", &[(1, 2, "linespoints")]),
        ),
    ];
    let data = json!({ "estimate": est.estimate, "table": est.table, "exact": exact });
    Ok(Part { checks, data, files })
}

// ---------------------------------------------------------------- heat

pub struct HeatOutcome {
    pub part: Part,
    pub c5: f64,
}

/// Largest raster of the domain with at most `limit` cells.
fn small_operator(domain: &Domain, limit: usize) -> Result<DiscreteOperator> {
    let mut h = domain.bbox().max_extent() / 4.0;
    let mut best = None;
    for _ in 0..12 {
        if let Ok(r) = domain.rasterize(h) {
            if r.n_cells() > limit {
                break;
            }
            if r.n_cells() >= 2 {
                best = Some(r);
            }
        }
        h /= 2.0;
    }
    match best {
        Some(r) => Ok(DiscreteOperator::assemble(r)?),
        None => bail!("no raster with 2..={limit} cells for the dense semigroup check"),
    }
}

/// Largest deviation between the spectral semigroup and a dense matrix
/// exponential on a small raster.
fn dense_semigroup_deviation(domain: &Domain, seed: u64) -> Result<(usize, f64)> {
    let op = small_operator(domain, 200)?;
    let n = op.n();
    let opts = SolverOptions {
        method: Method::Dense,
        seed,
        ..SolverOptions::default()
    };
    let spec = lowest_eigenpairs(&op, n, &opts)?;
    let f: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 5) as f64 - 1.7).collect();
    let t = 0.3;
    let r = semigroup_apply(&spec, &f, t)?;
    let e = (-t * dense_stiffness(&op) / op.cell_volume()).exp();
    let oracle = &e * DVector::from_vec(f);
    Ok((n, max_of(r.values.iter().zip(oracle.iter()).map(|(a, b)| (a - b).abs()))))
}

/// Allowed shortfall of the fitted exponent below `N/4`.
pub const EXPONENT_TOL: f64 = 0.1;

/// Decay exponent of the semigroup norm over the first decade of the fit
/// window. Towards `t = 1` the norm flattens onto the constant mode, so the
/// whole-window slope understates the short-time exponent that `M ≥ N`
/// constrains.
pub fn short_time_exponent(times: &[f64], ratios: &[f64]) -> Result<f64> {
    let t0 = times.first().copied().unwrap_or(1.0);
    let (ts, rs): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(ratios)
        .filter(|(t, _)| **t <= 10.0 * t0 * (1.0 + 1e-12))
        .map(|(t, r)| (*t, *r))
        .unzip();
    Ok(-neumann_core::fit::power_law_fit(&ts, &rs)?.slope)
}

pub fn heat_part(ctx: &mut Ctx) -> Result<HeatOutcome> {
    let hc = ctx.cfg.heat.clone();
    let default_h = match ctx.domain.dim() {
        1 => 1.0 / 400.0,
        2 => 1.0 / 32.0,
        _ => 1.0 / 12.0,
    };
    let h = check_range("heat.h", hc.h.unwrap_or(default_h), 0.0, 0.5)?;
    let m = check_count("heat.m", hc.m.unwrap_or(100), 4, 400)?;
    let exponent = check_range(
        "heat.exponent",
        hc.exponent.unwrap_or_else(|| crate::domains::default_heat_exponent(&ctx.domain)),
        0.0,
        20.0,
    )?;
    let t_min = check_range("heat.t_min", hc.t_min.unwrap_or(0.01), 0.0, 1.0)?;
    let t_max = check_range("heat.t_max", hc.t_max.unwrap_or(0.1), t_min, 10.0)?;
    let samples = check_count("heat.samples", hc.samples.unwrap_or(12), 2, 200)?;
    let times = check_grid("heat.times", &hc.times.unwrap_or_else(|| vec![0.01, 0.1, 1.0]), 0.0, 1.0, 1)?;
    let n_dim = ctx.domain.dim() as f64;

    let t = Instant::now();
    let op = ctx.operator(h)?;
    let opts = ctx.solver(1e-8, Method::Auto);
    let spec = ctx.spectrum(&op, m, &opts)?;
    ctx.record("heat spectrum", t);

    let t = Instant::now();
    let trace = trace_slope(&spec, t_min, t_max, samples)?;
    let sides = box_sides(&ctx.domain);
    let analytic: Option<Vec<f64>> = sides
        .as_ref()
        .map(|s| trace.samples.iter().map(|x| box_heat_trace(s, x.t)).collect());
    let analytic_slope = match &analytic {
        Some(z) => {
            let ts: Vec<f64> = trace.samples.iter().map(|s| s.t).collect();
            Some(neumann_core::fit::power_law_fit(&ts, z)?.slope)
        }
        None => None,
    };
    let fit = ultracontractivity_fit(&spec, exponent, samples)?;
    let short = short_time_exponent(&fit.times, &fit.ratios)?;
    let sup = verify_eigenfunction_sup_bound(&spec, fit.c5, exponent);
    let growth = verify_eigenvalue_growth_bound(&spec, fit.c6, spec.measure(), exponent)?;
    let rec = verify_reconstructed_bounds(&spec, std::f64::consts::E * fit.c5, exponent, growth.n0, &times)?;
    let (dense_cells, dense_dev) = dense_semigroup_deviation(&ctx.domain, ctx.seed)?;
    ctx.record("heat checks", t);

    let mut checks = Vec::new();
    if let Some(z) = &analytic {
        let worst = max_of(
            trace
                .samples
                .iter()
                .zip(z)
                .map(|(s, a)| ((s.z - a).abs() - s.tail_bound).max(0.0) / a),
        );
        checks.push(Check::new(
            "heat trace vs theta series",
            "heat trace of a box is the product of one-dimensional theta series",
            pass_fail(worst <= 0.01),
            format!(
                "max relative deviation {worst:.3e} beyond the tail bound; slopes {:.4} computed, {:.4} analytic",
                trace.slope,
                analytic_slope.unwrap_or(f64::NAN)
            ),
        ));
    }
    checks.push(Check::new(
        "semigroup vs dense exponential",
        "spectral semigroup equals the matrix exponential of the discrete Laplacian",
        pass_fail(dense_dev <= 1e-8),
        format!("max deviation {dense_dev:.3e} on {dense_cells} cells at t = 0.3"),
    ));
    checks.push(Check::new(
        "ultracontractivity exponent",
        "L2 -> Linf norm of e^(-Ht) decays like c5 t^(-M/4) with M >= N",
        pass_fail(short >= n_dim / 4.0 - EXPONENT_TOL),
        format!(
            "short-time exponent {short:.4} vs N/4 = {}; whole-window exponent {:.4} (M = {:.4}); c5 = {:.4e}, c6 = {:.4e}",
            n_dim / 4.0,
            fit.fitted_exponent,
            fit.fitted_m,
            fit.c5,
            fit.c6
        ),
    ));
    checks.push(Check::new(
        "eigenfunction sup-norm bound",
        "|f_n|_inf <= e c5 max(1, lambda_n)^(M/4)",
        sup.verdict,
        format!(
            "min margin {:.4} over {} modes",
            sup.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min),
            sup.rows.len()
        ),
    ));
    checks.push(Check::new(
        "eigenvalue growth bound",
        "lambda_n >= (n/n0)^(2/M) for n >= n0 = floor(e c6 c10) + 1",
        growth.verdict,
        format!("n0 = {}, {} rows checked", growth.n0, growth.rows.len()),
    ));
    checks.push(Check::new(
        "reconstructed kernel bounds",
        "sup-norm and growth bounds give the kernel and ultracontractive bounds with 2M",
        rec.verdict,
        format!("c6' = {:.4e} at {} times", rec.c6_prime, rec.rows.len()),
    ));

    let trace_rows = trace.samples.iter().enumerate().map(|(i, s)| {
        vec![
            num(s.t),
            num(s.z),
            analytic.as_ref().map(|a| num(a[i])).unwrap_or_default(),
            num(s.tail_bound),
        ]
    });
    let uc_rows = fit
        .times
        .iter()
        .zip(&fit.ratios)
        .zip(&fit.kernel_sup)
        .map(|((t, r), k)| vec![num(*t), num(*r), num(*k)]);
    let mut trace_series = vec![(1, 2, "linespoints")];
    if analytic.is_some() {
        trace_series.push((1, 3, "lines"));
    }
    let files = vec![
        ("trace.csv".to_string(), csv(&["t", "z", "z_analytic", "tail_bound"], trace_rows)),
        (
            "trace.gp".to_string(),
            gnuplot("Heat trace", "trace.csv", "t", "Z(t)", "xy", &trace_series),
        ),
        (
            "ultracontractivity.csv".to_string(),
            csv(&["t", "ratio", "kernel_sup"], uc_rows),
        ),
        (
            "ultracontractivity.gp".to_string(),
            gnuplot(
                "Semigroup L2 to Linf norm",
                "ultracontractivity.csv",
                "t",
                "norm",
                "xy",
                &[(1, 2, "linespoints"), (1, 3, "linespoints")],
            ),
        ),
    ];
    let data = json!({
        "h": h,
        "m": m,
        "exponent": exponent,
        "n_cells": op.n(),
        "eigenvalues": spec.eigenvalues,
        "trace": trace,
        "analytic_trace": analytic,
        "analytic_slope": analytic_slope,
        "ultracontractivity": fit,
        "short_time_exponent": short,
        "sup_bound": sup,
        "growth": growth,
        "reconstruction": rec,
        "dense_check": { "cells": dense_cells, "max_deviation": dense_dev },
    });
    Ok(HeatOutcome {
        c5: fit.c5,
        part: Part { checks, data, files },
    })
}

// ---------------------------------------------------------------- sobolev

/// Largest `q` with `W^{1,2} ⊂ L^q` on the domain.
pub fn critical_sobolev_exponent(domain: &Domain) -> f64 {
    let n = domain.dim() as f64;
    match domain.spec() {
        DomainSpec::Cusp { gamma, .. } if n - 1.0 > *gamma => 2.0 * (gamma + n - 1.0) / (n - 1.0 - gamma),
        DomainSpec::Cusp { .. } => f64::INFINITY,
        _ if n > 2.0 => 2.0 * n / (n - 2.0),
        _ => f64::INFINITY,
    }
}

pub fn sobolev_part(ctx: &mut Ctx) -> Result<Part> {
    let sc = ctx.cfg.sobolev.clone();
    let qs = check_grid("sobolev.q", &sc.q.unwrap_or_else(|| vec![4.0, 8.0]), 2.0, neumann_core::inequalities::MAX_Q, 1)?;
    let levels = check_grid(
        "sobolev.levels",
        &sc.levels.unwrap_or_else(|| vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]),
        0.0,
        0.5,
        2,
    )?;
    let ascent = AscentOptions {
        max_iter: check_count("sobolev.max_iter", sc.max_iter.unwrap_or(400), 1, 100_000)?,
        random_starts: check_count("sobolev.restarts", sc.restarts.unwrap_or(2), 0, 64)?,
        seed: ctx.seed,
        ..AscentOptions::default()
    };
    let q_max = critical_sobolev_exponent(&ctx.domain);
    let cusp = match ctx.domain.spec() {
        DomainSpec::Cusp { gamma, dim } => Some((*gamma, *dim)),
        _ => None,
    };
    let delta = match sc.delta {
        Some(d) => Some(check_range("sobolev.delta", d, 0.0, 10.0)?),
        None => cusp.map(|_| 0.45),
    };

    let t = Instant::now();
    let domain = &ctx.domain;
    let studies = {
        use rayon::prelude::*;
        qs.par_iter()
            .map(|&q| sobolev_refinement(domain, q, &levels, &ascent))
            .collect::<std::result::Result<Vec<_>, _>>()?
    };
    ctx.record("sobolev refinement", t);

    let mut checks = Vec::new();
    let mut power = Vec::new();
    for s in &studies {
        let above = s.q > q_max;
        let verdict = match (s.study.classification, above) {
            (Refinement::Divergent, _) => Verdict::Fail,
            (Refinement::Stable, false) => Verdict::Pass,
            _ => Verdict::Inconclusive,
        };
        let expectation = if above {
            format!("q above the critical exponent {q_max:.4}: the inequality fails on this domain")
        } else {
            format!("q within the critical exponent {q_max:.4}")
        };
        checks.push(Check::new(
            &format!("Sobolev quotient q={}", s.q),
            "Sobolev inequality |f|_q <= c |f|_W12; cusp sharpness at q = 2(gamma+N-1)/(N-1-gamma)",
            verdict,
            format!(
                "{:?}, per-halving ratios {:?}; {expectation}",
                s.study.classification,
                s.study.ratios.iter().map(|r| (r * 1e4).round() / 1e4).collect::<Vec<_>>()
            ),
        ));
    }
    if let (Some((gamma, dim)), Some(delta)) = (cusp, delta) {
        let t = Instant::now();
        for &q in &qs {
            let membership = cusp_power_membership(gamma, dim, delta, q)?;
            let study = cusp_power_norms(&ctx.domain, delta, q, &levels)?;
            checks.push(Check::new(
                &format!("power function norms q={q}"),
                "x^-delta on the cusp: in W12 iff delta < -1 + (1+(N-1)/gamma)/2, in Lq iff delta < (1+(N-1)/gamma)/q",
                if study.consistent { Verdict::Pass } else { Verdict::Inconclusive },
                format!(
                    "delta = {delta}: in W12 {} (threshold {:.4}), in Lq {} (threshold {:.4}); refinement W12 {:?}, Lq {:?}",
                    membership.in_w12,
                    membership.w12_threshold,
                    membership.in_lq,
                    membership.lq_threshold,
                    study.w12.classification,
                    study.lq.classification
                ),
            ));
            power.push(study);
        }
        ctx.record("power norms", t);
    }

    let mut rows = Vec::new();
    for s in &studies {
        for (e, h) in s.estimates.iter().zip(&s.study.h) {
            rows.push(vec![num(s.q), num(*h), num(e.constant), e.n_cells.to_string()]);
        }
    }
    let files = vec![
        ("sobolev.csv".to_string(), csv(&["q", "h", "constant", "n_cells"], rows)),
        (
            "sobolev.gp".to_string(),
            format!(
                "set datafile separator ','\nset logscale xy\nset xlabel 'h'\nset ylabel 'quotient'\n\
                 plot for [q in \"{}\"] 'sobolev.csv' using 2:($1 == q ? $3 : NaN) with linespoints title 'q='.q\n",
                qs.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" ")
            ),
        ),
    ];
    let data = json!({
        "levels": levels,
        "critical_exponent": if q_max.is_finite() { Some(q_max) } else { None },
        "studies": studies,
        "power_norms": power,
    });
    Ok(Part { checks, data, files })
}

// ---------------------------------------------------------------- perturb

pub fn default_family(domain: &Domain) -> Family {
    if rectangle_sides(domain).is_some() {
        Family::GraphShrink
    } else if domain.as_graph().is_some() {
        Family::GraphOffset
    } else {
        Family::CollarRemoval
    }
}

fn sweep_part(ctx: &mut Ctx, family: Family, opts: SweepOptions) -> Result<Part> {
    let h = opts.h.expect("sweep cell size resolved");
    let t = Instant::now();
    let op = ctx.operator(h)?;
    let spec1 = ctx.spectrum(&op, opts.n_max + 1, &opts.solver)?;
    let rep = stability_sweep_from(&ctx.domain, family, &opts, &spec1)?;
    ctx.record("stability sweep", t);
    let failing: Vec<String> = rep
        .rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("(n={}, eps={})", r.n, r.eps))
        .collect();
    let decays = rep.constants.iter().all(|c| c.decays);
    let checks = vec![Check::new(
        &format!("eigenvalue stability ({})", family.name()),
        "|lambda_n2 / lambda_n1 - 1| <= b_n eps^gamma with b_n bounded as eps -> 0",
        rep.verdict,
        format!(
            "exponent {}, {} of {} rows pass, deviations decay: {decays}; failing {:?}",
            rep.exponent,
            rep.rows.iter().filter(|r| r.pass).count(),
            rep.rows.len(),
            failing
        ),
    )];
    let const_rows = rep.constants.iter().map(|c| {
        vec![
            c.n.to_string(),
            num(c.b),
            c.spread.map(num).unwrap_or_default(),
            c.stable.map(|s| s.to_string()).unwrap_or_default(),
            c.exponent.map(num).unwrap_or_default(),
            c.decays.to_string(),
        ]
    });
    let files = vec![
        ("stability.csv".to_string(), rep.to_csv()),
        ("stability.gp".to_string(), rep.gnuplot_script("stability.csv")),
        (
            "stability_constants.csv".to_string(),
            csv(&["n", "b", "spread", "stable", "exponent", "decays"], const_rows),
        ),
    ];
    let data = serde_json::to_value(&rep)?;
    Ok(Part { checks, data, files })
}

pub fn perturb_part(ctx: &mut Ctx) -> Result<Part> {
    let pc = ctx.cfg.perturb.clone();
    let family = pc.family.unwrap_or_else(|| default_family(&ctx.domain));
    let mut eps = check_grid("perturb.eps", &pc.eps.unwrap_or_else(|| vec![0.01, 0.02, 0.04, 0.08]), 0.0, 0.5, 2)?;
    eps.sort_by(|a, b| a.total_cmp(b));
    let n_max = check_count("perturb.n_max", pc.n_max.unwrap_or(8), 1, 50)?;
    let h = check_range("perturb.h", pc.h.unwrap_or(eps[0] / 8.0), 0.0, 0.5)?;
    let exponent = match pc.exponent {
        Some(g) => Some(check_range("perturb.exponent", g, 0.0, 1.0)?),
        None => None,
    };
    let tol = check_range("perturb.tol", pc.tol.unwrap_or(1e-8), 0.0, 1e-3)?;
    let opts = SweepOptions {
        eps,
        n_max,
        h: Some(h),
        exponent,
        solver: ctx.solver(tol, Method::Auto),
        atlas: None,
    };
    sweep_part(ctx, family, opts)
}

// ---------------------------------------------------------------- verify-all

struct VerifyParams {
    h: f64,
    n_max: usize,
    eps: Vec<f64>,
    sigma: Option<f64>,
}

fn verify_params(cfg: &ExperimentConfig) -> Result<VerifyParams> {
    let vc = &cfg.verify;
    let mut eps = check_grid(
        "verify.eps",
        &vc.eps.clone().unwrap_or_else(|| vec![1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0]),
        0.0,
        0.5,
        2,
    )?;
    eps.sort_by(|a, b| a.total_cmp(b));
    Ok(VerifyParams {
        h: check_range("verify.h", vc.h.unwrap_or(1.0 / 64.0), 0.0, 0.5)?,
        n_max: check_count("verify.n_max", vc.n_max.unwrap_or(6), 1, 50)?,
        eps,
        sigma: match vc.sigma {
            Some(s) => Some(check_range("verify.sigma", s, 0.0, 1.0)?),
            None => None,
        },
    })
}

fn restriction_part(ctx: &mut Ctx, p: &VerifyParams, c5: f64) -> Result<Part> {
    let t = Instant::now();
    let opts = ctx.solver(1e-8, Method::Auto);
    let op1 = ctx.operator(p.h)?;
    let spec1 = ctx.spectrum(&op1, p.n_max + 1, &opts)?;
    let collar = collar_removal(&ctx.domain, p.h, p.eps[0])?;
    let op2 = DiscreteOperator::assemble(collar.sub.raster.clone())?;
    let spec2 = ctx.spectrum(&op2, p.n_max + 1, &opts)?;
    let rep = verify_restriction_upper_bound(&spec1, &op2, &collar.sub.map, &spec2, c5, p.n_max)?;
    ctx.record("restriction bound", t);
    let checks = vec![Check::new(
        "restriction upper bound",
        "lambda_n2 <= mu_n2 <= (1 + b_n1 |O1 \\ O2|) lambda_n1 with b_n1 = 2 c5^2 e^(2 lambda_n1)",
        rep.verdict,
        format!(
            "inner region: collar removed at eps = {}; chain holds: {}; {}",
            p.eps[0],
            rep.chain_holds,
            rep.note.clone().unwrap_or_default()
        ),
    )];
    Ok(Part {
        checks,
        data: serde_json::to_value(&rep)?,
        files: Vec::new(),
    })
}

fn two_sided_part(ctx: &mut Ctx, p: &VerifyParams, c5: f64) -> Result<Part> {
    let sigma = p.sigma.unwrap_or(match ctx.domain.spec() {
        DomainSpec::Graph(g) => g.gamma,
        DomainSpec::Cusp { gamma, .. } => *gamma,
        _ => 1.0,
    });
    let t = Instant::now();
    let opts = ctx.solver(1e-8, Method::Auto);
    let rep = verify_two_sided_bound(&ctx.domain, p.h, &p.eps, sigma, p.n_max, c5, &opts)?;
    ctx.record("two-sided bound", t);
    let checks = vec![Check::new(
        "two-sided eigenvalue bound",
        "(1 - b eps^sigma) lambda_n1 <= lambda_n2 <= (1 + b eps^sigma) lambda_n1 for collar-trimmed regions",
        rep.verdict,
        format!(
            "{} of {} rows hold, one-sided: {}; {}",
            rep.rows.iter().filter(|r| r.holds).count(),
            rep.rows.len(),
            rep.one_sided,
            rep.note.clone().unwrap_or_default()
        ),
    )];
    Ok(Part {
        checks,
        data: serde_json::to_value(&rep)?,
        files: Vec::new(),
    })
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    part: &'a str,
    #[serde(flatten)]
    check: &'a Check,
}

pub fn verify_all(ctx: &mut Ctx) -> Result<Verdict> {
    let p = verify_params(&ctx.cfg)?;
    let mut parts: Vec<(&str, Part)> = Vec::new();
    let heat = heat_part(ctx)?;
    let c5 = heat.c5;
    parts.push(("heat", heat.part));
    parts.push(("restriction", restriction_part(ctx, &p, c5)?));
    parts.push(("two_sided", two_sided_part(ctx, &p, c5)?));
    let family = default_family(&ctx.domain);
    let opts = SweepOptions {
        eps: p.eps.clone(),
        n_max: p.n_max,
        h: Some(p.h),
        exponent: None,
        solver: ctx.solver(1e-8, Method::Auto),
        atlas: None,
    };
    parts.push(("stability", sweep_part(ctx, family, opts)?));
    parts.push(("whitney", whitney_part(ctx)?));
    parts.push(("dimension", dimension_part(ctx)?));

    let mut rows: Vec<(String, Check)> = Vec::new();
    for (name, part) in parts {
        for c in &part.checks {
            rows.push((name.to_string(), c.clone()));
        }
        ctx.emit("verify-all", name, part)?;
    }
    let summary: Vec<SummaryRow> = rows.iter().map(|(p, c)| SummaryRow { part: p, check: c }).collect();
    let checks: Vec<Check> = rows.iter().map(|(_, c)| c.clone()).collect();
    let verdict = Verdict::all(checks.iter().map(|c| c.verdict));
    let report = ctx.report("verify-all", &checks, json!({ "rows": summary }));
    ctx.out.json("summary.json", &report)?;
    let table = csv(
        &["part", "check", "verdict", "reference"],
        rows.iter().map(|(p, c)| {
            vec![
                p.clone(),
                c.check.clone(),
                c.verdict.to_string(),
                format!("\"{}\"", c.reference.replace('"', "'")),
            ]
        }),
    );
    ctx.out.write("summary.csv", &table)?;
    Ok(verdict)
}

/// Human-readable verdict table for the terminal.
pub fn render_checks(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.check.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!("{:<width$}  {:<12}  {}\n", c.check, c.verdict.to_string(), c.detail));
    }
    s
}

/// Reads back the checks of an emitted report.
pub fn checks_of(path: &std::path::Path) -> Result<Vec<Check>> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(serde_json::from_value(v["checks"].clone())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_eigenvalue_enumeration() {
        let pi2 = std::f64::consts::PI.powi(2);
        let v = box_eigenvalues(&[1.0, 1.0], 10);
        let want = [0.0, 1.0, 1.0, 2.0, 4.0, 4.0, 5.0, 5.0, 8.0, 9.0];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b * pi2).abs() < 1e-12);
        }
        let v = box_eigenvalues(&[1.0], 5);
        assert!((v[4] - 16.0 * pi2).abs() < 1e-9);
        // long thin box: many modes along the long side first
        let v = box_eigenvalues(&[4.0, 0.5], 6);
        assert!((v[5] - 25.0 * pi2 / 16.0).abs() < 1e-9);
        let v = box_eigenvalues(&[1.0, 1.0, 1.0], 7);
        assert_eq!(v.len(), 7);
        assert!((v[6] - 2.0 * pi2).abs() < 1e-9);
    }

    #[test]
    fn critical_exponents() {
        let cusp = Domain::cusp(2, 0.5).unwrap();
        assert!((critical_sobolev_exponent(&cusp) - 6.0).abs() < 1e-12);
        assert!(critical_sobolev_exponent(&Domain::unit_square()).is_infinite());
        let cube = Domain::new(DomainSpec::Box {
            lo: vec![0.0; 3],
            hi: vec![1.0; 3],
        })
        .unwrap();
        assert!((critical_sobolev_exponent(&cube) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn exact_collars() {
        let d = Domain::unit_disc();
        let e = exact_collar(&d, 0.1).unwrap();
        assert!((e - std::f64::consts::PI * (1.0 - 0.81)).abs() < 1e-12);
        assert!((exact_collar(&Domain::unit_square(), 0.1).unwrap() - 0.36).abs() < 1e-12);
        assert!(exact_collar(&Domain::cusp(2, 0.5).unwrap(), 0.1).is_none());
    }
}
