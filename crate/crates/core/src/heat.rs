//! Heat semigroup and kernel from spectral data, ultracontractivity fits and
//! the eigenfunction / eigenvalue-growth / kernel-reconstruction bounds.
//!
//! With mass-normalized eigenvectors `u_n`, the truncated kernel is
//! `K_m(t,x,y) = Σ_{n<m} e^(-λ_n t) u_n(x) u_n(y)`, a density with respect to
//! the cell measure. Tail bounds use `|u_n(x)| ≤ h^(-N/2)` and
//! `λ_n ≥ λ_{m-1}` for the discarded modes.

use crate::eigen::SpectrumResult;
use crate::error::{Error, Result};
use crate::fit::{power_law_fit, LinearFit};
use crate::geometry::geometric_grid;
use crate::linalg::{dense_stiffness, symmetric_eigen_sorted};
use crate::operator::DiscreteOperator;
use crate::report::Verdict;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("heat time must be positive, got {t}")));
    }
    Ok(())
}

fn last_eigenvalue(spec: &SpectrumResult) -> f64 {
    spec.eigenvalues.last().copied().unwrap_or(0.0)
}

fn discarded(spec: &SpectrumResult) -> f64 {
    spec.n_cells.saturating_sub(spec.len()) as f64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemigroupApply {
    pub t: f64,
    pub values: Vec<f64>,
    /// `L^2` bound on the discarded modes: `e^(-λ_{m-1} t) ‖f - P_m f‖_2`.
    pub truncation_bound: f64,
}

/// `e^(-Ht) f = Σ_n e^(-λ_n t) (f, u_n) u_n` over the computed modes.
pub fn semigroup_apply(spec: &SpectrumResult, f: &[f64], t: f64) -> Result<SemigroupApply> {
    check_time(t)?;
    if f.len() != spec.n_cells {
        return Err(Error::DimensionMismatch {
            expected: spec.n_cells,
            got: f.len(),
        });
    }
    let mut values = vec![0.0; f.len()];
    let mut captured = 0.0;
    for (lam, u) in spec.eigenvalues.iter().zip(&spec.eigenvectors) {
        let c = spec.inner(f, u);
        captured += c * c;
        let w = (-lam * t).exp() * c;
        for (v, x) in values.iter_mut().zip(u) {
            *v += w * x;
        }
    }
    let rest = (spec.inner(f, f) - captured).max(0.0).sqrt();
    Ok(SemigroupApply {
        t,
        values,
        truncation_bound: (-last_eigenvalue(spec) * t).exp() * rest,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    /// `Z_m(t) = Σ_{n<m} e^(-λ_n t)`.
    pub z: f64,
    /// Bound on the discarded part of the trace of the discrete semigroup.
    pub tail_bound: f64,
}

pub fn kernel_diag_trace(spec: &SpectrumResult, t: f64) -> Result<TraceSample> {
    check_time(t)?;
    let z = spec.eigenvalues.iter().map(|l| (-l * t).exp()).sum();
    Ok(TraceSample {
        t,
        z,
        tail_bound: discarded(spec) * (-last_eigenvalue(spec) * t).exp(),
    })
}

/// `K_m(t, x, x)` for every cell.
pub fn kernel_diagonal(spec: &SpectrumResult, t: f64) -> Result<Vec<f64>> {
    check_time(t)?;
    let mut d = vec![0.0; spec.n_cells];
    for (lam, u) in spec.eigenvalues.iter().zip(&spec.eigenvectors) {
        let w = (-lam * t).exp();
        for (v, x) in d.iter_mut().zip(u) {
            *v += w * x * x;
        }
    }
    Ok(d)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeatKernelSlice {
    pub t: f64,
    pub m: usize,
    pub pairs: Vec<(usize, usize)>,
    pub values: Vec<f64>,
    /// Pointwise bound on the discarded modes.
    pub truncation_bound: f64,
}

pub fn heat_kernel_slice(spec: &SpectrumResult, t: f64, pairs: &[(usize, usize)]) -> Result<HeatKernelSlice> {
    check_time(t)?;
    if let Some(&(x, y)) = pairs.iter().find(|&&(x, y)| x.max(y) >= spec.n_cells) {
        return Err(Error::InvalidParameter(format!(
            "kernel pair ({x}, {y}) outside a raster of {} cells",
            spec.n_cells
        )));
    }
    let weights: Vec<f64> = spec.eigenvalues.iter().map(|l| (-l * t).exp()).collect();
    let values = pairs
        .iter()
        .map(|&(x, y)| {
            // symmetric by construction: the same product in either order
            let (a, b) = (x.min(y), x.max(y));
            weights
                .iter()
                .zip(&spec.eigenvectors)
                .map(|(w, u)| w * u[a] * u[b])
                .sum()
        })
        .collect();
    Ok(HeatKernelSlice {
        t,
        m: spec.len(),
        pairs: pairs.to_vec(),
        values,
        truncation_bound: discarded(spec) * (-last_eigenvalue(spec) * t).exp() / spec.cell_volume,
    })
}

/// Full kernel `K(t, x_i, x_j)` of the discrete operator by dense
/// diagonalization; intended for small rasters.
pub fn dense_heat_kernel(op: &DiscreteOperator, t: f64) -> Result<DMatrix<f64>> {
    check_time(t)?;
    let c = op.cell_volume();
    let (vals, vecs) = symmetric_eigen_sorted(dense_stiffness(op) / c);
    let n = op.n();
    let mut k = DMatrix::zeros(n, n);
    for (p, lam) in vals.iter().enumerate() {
        let w = (-lam.max(0.0) * t).exp() / c;
        let col = vecs.column(p);
        for i in 0..n {
            for j in i..n {
                k[(i, j)] += w * col[i] * col[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            k[(i, j)] = k[(j, i)];
        }
    }
    Ok(k)
}

/// Neumann heat trace of the box with the given side lengths,
/// `Π_i Σ_{j≥0} e^(-π² j² t / L_i²)`.
pub fn box_heat_trace(sides: &[f64], t: f64) -> f64 {
    sides
        .iter()
        .map(|l| {
            let a = std::f64::consts::PI * std::f64::consts::PI * t / (l * l);
            let mut s = 1.0;
            let mut j = 1.0f64;
            loop {
                let term = (-a * j * j).exp();
                s += term;
                if term < 1e-18 * s {
                    break s;
                }
                j += 1.0;
            }
        })
        .product()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceFit {
    pub samples: Vec<TraceSample>,
    /// Slope of `log Z` against `log t`.
    pub slope: f64,
    pub fit: LinearFit,
}

/// Log-log slope of the heat trace over `count` geometric times in `[t_lo, t_hi]`.
pub fn trace_slope(spec: &SpectrumResult, t_lo: f64, t_hi: f64, count: usize) -> Result<TraceFit> {
    if !(t_lo > 0.0 && t_hi > t_lo) || count < 2 {
        return Err(Error::InvalidParameter(format!(
            "trace fit needs 0 < t_lo < t_hi and 2+ samples, got [{t_lo}, {t_hi}] x {count}"
        )));
    }
    let samples = geometric_grid(t_lo, t_hi, count)
        .into_iter()
        .map(|t| kernel_diag_trace(spec, t))
        .collect::<Result<Vec<_>>>()?;
    for s in &samples {
        if s.tail_bound > 0.01 * s.z {
            log::warn!("trace at t = {} has a tail bound of {:.2e}; request more modes", s.t, s.tail_bound);
        }
    }
    let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let zs: Vec<f64> = samples.iter().map(|s| s.z).collect();
    let fit = power_law_fit(&ts, &zs)?;
    Ok(TraceFit {
        samples,
        slope: fit.slope,
        fit,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UltracontractivityFit {
    pub times: Vec<f64>,
    /// `sup_f ‖e^(-Ht) f‖_∞ / ‖f‖_2 = sqrt(sup_x K(2t, x, x))`.
    pub ratios: Vec<f64>,
    /// `sup_x K(t, x, x)` at the same times.
    pub kernel_sup: Vec<f64>,
    /// Fitted `M/4` from the log-log slope of the ratios.
    pub fitted_exponent: f64,
    pub fitted_m: f64,
    /// The `M` the constants below are computed for.
    pub m: f64,
    /// `max_t ratio(t) t^(M/4)`.
    pub c5: f64,
    /// `max_t sup_x K(t,x,x) t^(M/2)`.
    pub c6: f64,
    pub t_min: f64,
    pub fit: LinearFit,
}

/// Samples the `L^2 → L^∞` norm of the semigroup at `count` geometric times
/// in `[4/λ_{m-1}, 1]`, where truncation error stays below about 1%.
pub fn ultracontractivity_fit(spec: &SpectrumResult, m: f64, count: usize) -> Result<UltracontractivityFit> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("exponent M must be positive, got {m}")));
    }
    let lam = last_eigenvalue(spec);
    if !(lam > 4.0) {
        return Err(Error::InsufficientData(format!(
            "largest computed eigenvalue {lam:.3} gives no time window below t = 1; request more modes"
        )));
    }
    let t_min = 4.0 / lam;
    let times = geometric_grid(t_min, 1.0, count.max(2));
    let mut ratios = Vec::new();
    let mut kernel_sup = Vec::new();
    for &t in &times {
        let sup2 = kernel_diagonal(spec, 2.0 * t)?.into_iter().fold(0.0, f64::max);
        ratios.push(sup2.sqrt());
        kernel_sup.push(kernel_diagonal(spec, t)?.into_iter().fold(0.0, f64::max));
    }
    let fit = power_law_fit(&times, &ratios)?;
    let c5 = times
        .iter()
        .zip(&ratios)
        .map(|(t, r)| r * t.powf(m / 4.0))
        .fold(0.0, f64::max);
    let c6 = times
        .iter()
        .zip(&kernel_sup)
        .map(|(t, k)| k * t.powf(m / 2.0))
        .fold(0.0, f64::max);
    Ok(UltracontractivityFit {
        fitted_exponent: -fit.slope,
        fitted_m: -4.0 * fit.slope,
        times,
        ratios,
        kernel_sup,
        m,
        c5,
        c6,
        t_min,
        fit,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupBoundRow {
    pub n: usize,
    pub eigenvalue: f64,
    pub sup_norm: f64,
    pub bound: f64,
    /// `bound / sup_norm`; below 1 is a violation.
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupBoundReport {
    pub c5: f64,
    pub m: f64,
    pub rows: Vec<SupBoundRow>,
    pub verdict: Verdict,
}

/// `‖f_n‖_∞ ≤ e c5` when `λ_n ≤ 1` and `≤ e c5 λ_n^(M/4)` otherwise.
pub fn verify_eigenfunction_sup_bound(spec: &SpectrumResult, c5: f64, m: f64) -> SupBoundReport {
    let c9 = std::f64::consts::E * c5;
    let rows: Vec<SupBoundRow> = spec
        .eigenvalues
        .iter()
        .zip(&spec.sup_norms)
        .enumerate()
        .map(|(n, (&lam, &sup))| {
            let bound = if lam <= 1.0 { c9 } else { c9 * lam.powf(m / 4.0) };
            SupBoundRow {
                n,
                eigenvalue: lam,
                sup_norm: sup,
                bound,
                margin: bound / sup,
            }
        })
        .collect();
    let verdict = Verdict::from_bool(rows.iter().all(|r| r.sup_norm <= r.bound));
    SupBoundReport { c5, m, rows, verdict }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n: usize,
    pub eigenvalue: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthReport {
    pub c6: f64,
    pub c10: f64,
    pub m: f64,
    /// `floor(e c6 c10) + 1`.
    pub n0: usize,
    pub rows: Vec<GrowthRow>,
    pub verdict: Verdict,
}

/// `λ_n ≥ (n / n0)^(2/M)` for every computed `n ≥ n0`; inconclusive when no
/// computed index reaches `n0`.
pub fn verify_eigenvalue_growth_bound(spec: &SpectrumResult, c6: f64, c10: f64, m: f64) -> Result<GrowthReport> {
    if c10 < spec.measure() * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "c10 = {c10} must be at least the measure {}",
            spec.measure()
        )));
    }
    let n0 = (std::f64::consts::E * c6 * c10).floor() as usize + 1;
    let rows: Vec<GrowthRow> = spec
        .eigenvalues
        .iter()
        .enumerate()
        .skip(n0)
        .map(|(n, &lam)| {
            let bound = (n as f64 / n0 as f64).powf(2.0 / m);
            GrowthRow {
                n,
                eigenvalue: lam,
                bound,
                holds: lam >= bound,
            }
        })
        .collect();
    let verdict = if rows.is_empty() {
        Verdict::Inconclusive
    } else {
        Verdict::from_bool(rows.iter().all(|r| r.holds))
    };
    Ok(GrowthReport {
        c6,
        c10,
        m,
        n0,
        rows,
        verdict,
    })
}

/// `∫_0^∞ e^(-s^(2/M)/2) ds` by the trapezoid rule in `log s`.
pub fn stretched_exponential_integral(m: f64) -> f64 {
    let hi = 0.5 * m * 120f64.ln();
    let lo = -40.0;
    let steps = 20_000;
    let dv = (hi - lo) / steps as f64;
    let g = |v: f64| {
        let s = v.exp();
        s * (-0.5 * s.powf(2.0 / m)).exp()
    };
    let mut acc = 0.5 * (g(lo) + g(hi));
    for i in 1..steps {
        acc += g(lo + dv * i as f64);
    }
    acc * dv
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructionRow {
    pub t: f64,
    /// `Σ_{n<m} e^(-λ_n t) ‖f_n‖_∞²`.
    pub weighted_sum: f64,
    pub tail_bound: f64,
    /// `c6' t^(-M)`.
    pub kernel_bound: f64,
    /// `sqrt(sup_x K(2t, x, x))`.
    pub semigroup_norm: f64,
    /// `(2^(-M) c6')^(1/2) t^(-M/2)`.
    pub semigroup_bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub c9: f64,
    pub m: f64,
    pub n0: usize,
    /// `(M / 2e)^(M/2)`.
    pub c11: f64,
    /// `c11 n0 ∫_0^∞ e^(-s^(2/M)/2) ds`.
    pub c12: f64,
    /// `c9² (n0 + c12)`.
    pub c6_prime: f64,
    pub rows: Vec<ReconstructionRow>,
    pub verdict: Verdict,
}

/// Rebuilds the kernel and ultracontractive bounds (with `2M` in place of
/// `M`) from the sup-norm bound `c9` and the growth index `n0`.
pub fn verify_reconstructed_bounds(
    spec: &SpectrumResult,
    c9: f64,
    m: f64,
    n0: usize,
    times: &[f64],
) -> Result<ReconstructionReport> {
    let c11 = (m / (2.0 * std::f64::consts::E)).powf(m / 2.0);
    let c12 = c11 * n0 as f64 * stretched_exponential_integral(m);
    let c6_prime = c9 * c9 * (n0 as f64 + c12);
    let mut rows = Vec::new();
    for &t in times {
        check_time(t)?;
        if t > 1.0 {
            return Err(Error::InvalidParameter(format!("reconstruction times lie in (0, 1], got {t}")));
        }
        let weighted_sum: f64 = spec
            .eigenvalues
            .iter()
            .zip(&spec.sup_norms)
            .map(|(l, s)| (-l * t).exp() * s * s)
            .sum();
        let tail_bound = discarded(spec) * (-last_eigenvalue(spec) * t).exp() / spec.cell_volume;
        let kernel_bound = c6_prime * t.powf(-m);
        let semigroup_norm = kernel_diagonal(spec, 2.0 * t)?.into_iter().fold(0.0, f64::max).sqrt();
        let semigroup_bound = (2f64.powf(-m) * c6_prime).sqrt() * t.powf(-m / 2.0);
        rows.push(ReconstructionRow {
            t,
            weighted_sum,
            tail_bound,
            kernel_bound,
            semigroup_norm,
            semigroup_bound,
            holds: weighted_sum <= kernel_bound && semigroup_norm <= semigroup_bound,
        });
    }
    let verdict = Verdict::from_bool(rows.iter().all(|r| r.holds));
    Ok(ReconstructionReport {
        c9,
        m,
        n0,
        c11,
        c12,
        c6_prime,
        rows,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{lowest_eigenpairs, SolverOptions};
    use crate::geometry::Domain;
    use std::f64::consts::PI;

    fn spectrum(d: &Domain, h: f64, m: usize) -> (DiscreteOperator, SpectrumResult) {
        let op = DiscreteOperator::assemble(d.rasterize(h).unwrap()).unwrap();
        let s = lowest_eigenpairs(&op, m, &SolverOptions::default()).unwrap();
        (op, s)
    }

    #[test]
    fn semigroup_on_eigenvectors_and_constants() {
        let (_, s) = spectrum(&Domain::unit_square(), 1.0 / 16.0, 8);
        let f3 = s.eigenvectors[3].clone();
        let r = semigroup_apply(&s, &f3, 0.2).unwrap();
        let w = (-s.eigenvalues[3] * 0.2).exp();
        for (a, b) in r.values.iter().zip(&f3) {
            assert!((a - w * b).abs() < 1e-12);
        }
        let one = vec![1.0; s.n_cells];
        for t in [0.01, 1.0, 30.0] {
            let r = semigroup_apply(&s, &one, t).unwrap();
            assert!(r.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
            assert!(r.truncation_bound < 1e-12);
        }
        assert!(semigroup_apply(&s, &one, 0.0).is_err());
    }

    #[test]
    fn semigroup_matches_dense_exponential() {
        let (op, s) = spectrum(&Domain::unit_interval(), 0.1, 10);
        let f: Vec<f64> = (0..10).map(|i| ((i * 7 + 3) % 5) as f64 - 1.7).collect();
        let r = semigroup_apply(&s, &f, 0.3).unwrap();
        let a = -0.3 * dense_stiffness(&op) / op.cell_volume();
        let e = a.exp();
        let oracle = &e * nalgebra::DVector::from_vec(f.clone());
        for (x, y) in r.values.iter().zip(oracle.iter()) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn semigroup_property_and_mass_conservation() {
        let (_, s) = spectrum(&Domain::unit_disc(), 1.0 / 12.0, 20);
        let f: Vec<f64> = (0..s.n_cells).map(|i| ((i * 13) % 7) as f64).collect();
        let a = semigroup_apply(&s, &f, 0.05).unwrap();
        let b = semigroup_apply(&s, &a.values, 0.07).unwrap();
        let c = semigroup_apply(&s, &f, 0.12).unwrap();
        for (x, y) in b.values.iter().zip(&c.values) {
            assert!((x - y).abs() < 1e-10);
        }
        let one = vec![1.0; s.n_cells];
        assert!((s.inner(&c.values, &one) - s.inner(&f, &one)).abs() < 1e-10 * s.inner(&f, &one));
    }

    #[test]
    fn dense_kernel_is_positive_and_symmetric() {
        let d = Domain::cusp(2, 0.5).unwrap();
        let op = DiscreteOperator::assemble(d.rasterize(1.0 / 10.0).unwrap()).unwrap();
        assert!(op.n() <= 200);
        for t in [0.001, 0.05, 1.0] {
            let k = dense_heat_kernel(&op, t).unwrap();
            let oracle = (-t * dense_stiffness(&op) / op.cell_volume()).exp() / op.cell_volume();
            assert!((&k - &oracle).amax() < 1e-8 * oracle.amax());
            for i in 0..op.n() {
                for j in 0..op.n() {
                    assert_eq!(k[(i, j)], k[(j, i)]);
                }
            }
            // positivity from the oracle: round-off in the eigen sum can
            // flip signs of entries far below machine precision
            assert!(oracle.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn trace_consistency() {
        let (_, s) = spectrum(&Domain::unit_square(), 1.0 / 16.0, 12);
        let t = 0.05;
        let diag = kernel_diagonal(&s, t).unwrap();
        let tr: f64 = diag.iter().sum::<f64>() * s.cell_volume;
        assert!((tr - kernel_diag_trace(&s, t).unwrap().z).abs() < 1e-10);
        let slice = heat_kernel_slice(&s, t, &[(3, 40), (40, 3)]).unwrap();
        assert_eq!(slice.values[0], slice.values[1]);
        // interval: only the constant mode survives
        let (_, s1) = spectrum(&Domain::unit_interval(), 0.01, 4);
        assert!((kernel_diag_trace(&s1, 20.0).unwrap().z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_decreasing_and_convex() {
        let (_, s) = spectrum(&Domain::unit_square(), 1.0 / 16.0, 12);
        let ts = geometric_grid(0.01, 3.0, 30);
        let z: Vec<f64> = ts.iter().map(|&t| kernel_diag_trace(&s, t).unwrap().z).collect();
        for w in z.windows(2) {
            assert!(w[1] < w[0]);
        }
        for k in 1..ts.len() - 1 {
            let interp = z[k - 1] + (z[k + 1] - z[k - 1]) * (ts[k] - ts[k - 1]) / (ts[k + 1] - ts[k - 1]);
            assert!(z[k] <= interp);
        }
    }

    #[test]
    fn square_trace_matches_theta_series_at_one() {
        let (_, s) = spectrum(&Domain::unit_square(), 1.0 / 64.0, 10);
        let z = kernel_diag_trace(&s, 1.0).unwrap();
        let analytic = box_heat_trace(&[1.0, 1.0], 1.0);
        assert!((z.z - analytic).abs() / analytic < 0.01, "{} vs {analytic}", z.z);
        assert!(z.tail_bound < 1e-3);
    }

    #[test]
    fn stretched_integral_closed_form() {
        // ∫ e^(-s^(2/M)/2) ds = M 2^(M/2 - 1) Γ(M/2)
        assert!((stretched_exponential_integral(1.0) - (PI / 2.0).sqrt()).abs() < 1e-9);
        assert!((stretched_exponential_integral(2.0) - 2.0).abs() < 1e-9);
        assert!((stretched_exponential_integral(4.0) - 8.0).abs() < 1e-8);
        assert!((stretched_exponential_integral(3.0) - 3.0 * 2f64.sqrt() * PI.sqrt() / 2.0).abs() < 1e-8);
    }

    #[test]
    fn interval_bounds_with_m_one() {
        let (_, s) = spectrum(&Domain::unit_interval(), 1.0 / 400.0, 40);
        for n in 1..10 {
            assert!((s.sup_norms[n] - 2f64.sqrt()).abs() < 1e-3);
        }
        let fit = ultracontractivity_fit(&s, 1.0, 16).unwrap();
        assert!(fit.fitted_exponent >= 0.25 - 0.1, "{}", fit.fitted_exponent);
        let sup = verify_eigenfunction_sup_bound(&s, fit.c5, 1.0);
        assert!(sup.verdict.passed());
        let growth = verify_eigenvalue_growth_bound(&s, fit.c6, 1.0, 1.0).unwrap();
        assert!(growth.verdict.passed(), "{growth:?}");
        let rec = verify_reconstructed_bounds(&s, std::f64::consts::E * fit.c5, 1.0, growth.n0, &[0.01, 0.1, 1.0]).unwrap();
        assert!(rec.verdict.passed(), "{rec:?}");
    }

    #[test]
    fn single_cell_reconstruction() {
        let d = Domain::new(crate::geometry::DomainSpec::Box {
            lo: vec![0.0, 0.0],
            hi: vec![0.5, 0.5],
        })
        .unwrap();
        let op = DiscreteOperator::assemble(d.rasterize(0.5).unwrap()).unwrap();
        let s = lowest_eigenpairs(&op, 1, &SolverOptions::default()).unwrap();
        let rec = verify_reconstructed_bounds(&s, 2.0 * std::f64::consts::E, 2.0, 1, &[0.01, 0.1, 1.0]).unwrap();
        for r in &rec.rows {
            assert!((r.weighted_sum - 4.0).abs() < 1e-12);
        }
        assert!(rec.verdict.passed());
    }
}
