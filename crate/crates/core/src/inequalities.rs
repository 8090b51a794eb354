//! Discrete Sobolev and Hardy constants, the exponent maps between them,
//! the cusp power-function membership test and the Hardy/Sobolev/dimension
//! equivalence check (all for `p = 2` in the numeric parts).
//!
//! Constants are estimated by a nonlinear power iteration that increases the
//! quotient monotonically, so every value reported is a lower bound on the
//! discrete best constant. Divergence is detected by refinement growth.

use crate::error::{Error, Result};
use crate::geometry::{geometric_grid, minkowski_dimension, Domain, DomainTag};
use crate::linalg::{dot, EnvelopeCholesky};
use crate::operator::DiscreteOperator;
use crate::report::Verdict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Largest Sobolev exponent accepted.
pub const MAX_Q: f64 = 10.0;
/// Per-halving change treated as refinement-stable.
pub const STABLE_TOL: f64 = 0.05;
/// Per-halving growth factor treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1.5;

#[derive(Clone, Debug)]
pub struct AscentOptions {
    pub max_iter: usize,
    /// Stop when the relative quotient gain of one step falls below this.
    pub tol: f64,
    pub seed: u64,
    pub random_starts: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions {
            max_iter: 400,
            tol: 1e-10,
            seed: 0x5eed,
            random_starts: 2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartResult {
    pub start: String,
    pub initial: f64,
    pub value: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SobolevEstimate {
    pub q: f64,
    /// Best `‖f‖_q / ‖f‖_{W^{1,2}}` found.
    pub constant: f64,
    /// Quotient of the constant function, `|Ω|^(1/q - 1/2)`.
    pub constant_function_value: f64,
    pub restarts: Vec<RestartResult>,
    pub h: f64,
    pub n_cells: usize,
    #[serde(skip)]
    pub maximizer: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HardyEstimate {
    pub alpha: f64,
    /// Best `‖d^-α f‖_2 / ‖f‖_{W^{1,2}}` found.
    pub constant: f64,
    /// `∫ d^(-2α)` over the raster.
    pub weight_integral: f64,
    /// Quotient of `f ≡ 1`: `(∫ d^(-2α))^(1/2) / |Ω|^(1/2)`.
    pub constant_function_value: f64,
    pub restarts: Vec<RestartResult>,
    pub h: f64,
    pub n_cells: usize,
    #[serde(skip)]
    pub maximizer: Vec<f64>,
}

/// Maximizes `F(f) / ‖f‖_A²` for a convex `F` by `f ← A^-1 ∇F(f)`, which
/// never decreases the quotient. `A = K + B` is the `W^{1,2}` Gram matrix.
struct Ascent<'a> {
    op: &'a DiscreteOperator,
    chol: EnvelopeCholesky,
    opts: &'a AscentOptions,
}

impl<'a> Ascent<'a> {
    fn new(op: &'a DiscreteOperator, opts: &'a AscentOptions) -> Result<Self> {
        Ok(Ascent {
            op,
            chol: EnvelopeCholesky::factor(op, 1.0)?,
            opts,
        })
    }

    fn a_norm(&self, f: &[f64]) -> f64 {
        let kf = self.op.stiffness_times(f);
        (dot(f, &kf) + self.op.cell_volume() * dot(f, f)).sqrt()
    }

    /// `value` is the quotient numerator (a norm); `grad` the Euclidean
    /// gradient direction of its power.
    fn run(
        &self,
        label: &str,
        start: Vec<f64>,
        value: &dyn Fn(&[f64]) -> f64,
        grad: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> (RestartResult, Vec<f64>) {
        let mut f = start;
        let nrm = self.a_norm(&f);
        f.iter_mut().for_each(|v| *v /= nrm);
        let initial = value(&f);
        let mut best = initial;
        let mut iterations = 0;
        for it in 0..self.opts.max_iter {
            iterations = it + 1;
            let mut g = self.chol.solve(&grad(&f));
            let nrm = self.a_norm(&g);
            if !(nrm > 0.0 && nrm.is_finite()) {
                break;
            }
            g.iter_mut().for_each(|v| *v /= nrm);
            let v = value(&g);
            f = g;
            let gain = (v - best) / best;
            best = best.max(v);
            if gain.abs() < self.opts.tol {
                break;
            }
        }
        (
            RestartResult {
                start: label.to_string(),
                initial,
                value: best,
                iterations,
            },
            f,
        )
    }
}

fn random_starts(n: usize, count: usize, seed: u64) -> Vec<(String, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let v: Vec<f64> = (0..n).map(|_| 1.0 + rng.gen_range(-0.9..0.9)).collect();
            (format!("random {k}"), v)
        })
        .collect()
}

fn sobolev_starts(op: &DiscreteOperator, opts: &AscentOptions) -> Vec<(String, Vec<f64>)> {
    let n = op.n();
    let mut starts = vec![("constant".to_string(), vec![1.0; n])];
    let r = op.raster();
    for axis in 0..op.dim() {
        let x = op.coordinate(axis);
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            // a ramp that is small at the far end, bulk near the low end
            starts.push((format!("ramp axis {axis}"), x.iter().map(|v| 1.0 + (hi - v) / (hi - lo)).collect()));
        }
    }
    if let DomainTag::Cusp { .. } = r.tag() {
        // the tip sits at x = 0; powers x^-δ concentrate there
        let x = op.coordinate(0);
        let x0 = x.iter().copied().fold(f64::INFINITY, f64::min);
        for delta in [0.25, 0.45, 0.6, 1.0, 2.0] {
            starts.push((format!("x^-{delta}"), x.iter().map(|v| v.powf(-delta)).collect()));
        }
        for c in [1.5, 3.0] {
            starts.push((
                format!("tip x < {c} x_min"),
                x.iter().map(|&v| if v < c * x0 { 1.0 } else { 1e-9 }).collect(),
            ));
        }
    }
    starts.extend(random_starts(n, opts.random_starts, opts.seed));
    starts
}

/// Lower bound on the best discrete constant in `‖f‖_q ≤ c ‖f‖_{W^{1,2}}`.
pub fn estimate_sobolev_constant(op: &DiscreteOperator, q: f64, opts: &AscentOptions) -> Result<SobolevEstimate> {
    if !(q > 2.0 && q <= MAX_Q) {
        return Err(Error::InvalidParameter(format!("Sobolev exponent must lie in (2, {MAX_Q}], got {q}")));
    }
    let c = op.cell_volume();
    let ascent = Ascent::new(op, opts)?;
    let value = |f: &[f64]| op.lq_norm(f, q);
    let grad = |f: &[f64]| f.iter().map(|v| c * v.abs().powf(q - 2.0) * v).collect::<Vec<f64>>();
    let mut restarts = Vec::new();
    let mut best = (0.0, Vec::new());
    for (label, start) in sobolev_starts(op, opts) {
        let (res, f) = ascent.run(&label, start, &value, &grad);
        if res.value > best.0 {
            best = (res.value, f);
        }
        restarts.push(res);
    }
    let measure = op.measure();
    Ok(SobolevEstimate {
        q,
        constant: best.0,
        constant_function_value: measure.powf(1.0 / q - 0.5),
        restarts,
        h: op.h(),
        n_cells: op.n(),
        maximizer: best.1,
    })
}

/// Boundary distance of every cell center.
pub fn cell_distances(domain: &Domain, op: &DiscreteOperator) -> Vec<f64> {
    (0..op.n())
        .map(|i| domain.boundary_distance(&op.raster().center(i)))
        .collect()
}

/// Lower bound on the best discrete constant in `‖d^-α f‖_2 ≤ c ‖f‖_{W^{1,2}}`.
pub fn estimate_hardy_constant(
    op: &DiscreteOperator,
    dist: &[f64],
    alpha: f64,
    opts: &AscentOptions,
) -> Result<HardyEstimate> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("Hardy exponent must be positive, got {alpha}")));
    }
    if dist.len() != op.n() {
        return Err(Error::DimensionMismatch {
            expected: op.n(),
            got: dist.len(),
        });
    }
    if let Some(i) = dist.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::InvalidParameter(format!("cell {i} has nonpositive boundary distance")));
    }
    let c = op.cell_volume();
    let weight: Vec<f64> = dist.iter().map(|d| d.powf(-2.0 * alpha)).collect();
    let weight_integral = c * weight.iter().sum::<f64>();
    let ascent = Ascent::new(op, opts)?;
    let value = |f: &[f64]| {
        (c * f.iter().zip(&weight).map(|(v, w)| w * v * v).sum::<f64>()).sqrt()
    };
    let grad = |f: &[f64]| f.iter().zip(&weight).map(|(v, w)| c * w * v).collect::<Vec<f64>>();
    let mut starts = vec![("constant".to_string(), vec![1.0; op.n()])];
    starts.push(("weight".to_string(), weight.clone()));
    starts.extend(random_starts(op.n(), opts.random_starts, opts.seed));
    let mut restarts = Vec::new();
    let mut best = (0.0, Vec::new());
    for (label, start) in starts {
        let (res, f) = ascent.run(&label, start, &value, &grad);
        if res.value > best.0 {
            best = (res.value, f);
        }
        restarts.push(res);
    }
    Ok(HardyEstimate {
        alpha,
        constant: best.0,
        weight_integral,
        constant_function_value: (weight_integral / op.measure()).sqrt(),
        restarts,
        h: op.h(),
        n_cells: op.n(),
        maximizer: best.1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    Stable,
    Divergent,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub h: Vec<f64>,
    pub values: Vec<f64>,
    /// `value(h/2) / value(h)` for consecutive levels.
    pub ratios: Vec<f64>,
    pub classification: Refinement,
}

/// Stable when every per-halving change is within 5%, divergent when every
/// per-halving growth is at least 1.5x.
pub fn classify_refinement(h: &[f64], values: &[f64]) -> Result<RefinementStudy> {
    if h.len() != values.len() || h.len() < 2 {
        return Err(Error::InsufficientData("a refinement study needs 2+ matching levels".into()));
    }
    let mut idx: Vec<usize> = (0..h.len()).collect();
    idx.sort_by(|&a, &b| h[b].total_cmp(&h[a]));
    let h: Vec<f64> = idx.iter().map(|&i| h[i]).collect();
    let values: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
    let ratios: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
    let classification = if ratios.iter().all(|r| (r - 1.0).abs() <= STABLE_TOL) {
        Refinement::Stable
    } else if ratios.iter().all(|&r| r >= DIVERGENCE_FACTOR) {
        Refinement::Divergent
    } else {
        Refinement::Inconclusive
    };
    Ok(RefinementStudy {
        h,
        values,
        ratios,
        classification,
    })
}

fn operator_at(domain: &Domain, h: f64) -> Result<DiscreteOperator> {
    DiscreteOperator::assemble(domain.rasterize(h)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SobolevRefinement {
    pub q: f64,
    pub estimates: Vec<SobolevEstimate>,
    pub study: RefinementStudy,
}

pub fn sobolev_refinement(domain: &Domain, q: f64, hs: &[f64], opts: &AscentOptions) -> Result<SobolevRefinement> {
    let estimates = hs
        .iter()
        .map(|&h| estimate_sobolev_constant(&operator_at(domain, h)?, q, opts))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = estimates.iter().map(|e| e.constant).collect();
    Ok(SobolevRefinement {
        q,
        study: classify_refinement(hs, &values)?,
        estimates,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HardyRefinement {
    pub alpha: f64,
    pub estimates: Vec<HardyEstimate>,
    pub constant: RefinementStudy,
    /// Refinement of the `f ≡ 1` probe `∫ d^(-2α)`.
    pub probe: RefinementStudy,
}

pub fn hardy_refinement(domain: &Domain, alpha: f64, hs: &[f64], opts: &AscentOptions) -> Result<HardyRefinement> {
    let estimates = hs
        .iter()
        .map(|&h| {
            let op = operator_at(domain, h)?;
            let dist = cell_distances(domain, &op);
            estimate_hardy_constant(&op, &dist, alpha, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = estimates.iter().map(|e| e.constant).collect();
    let probes: Vec<f64> = estimates.iter().map(|e| e.weight_integral).collect();
    let probe = classify_refinement(hs, &probes)?;
    if probe.classification != Refinement::Stable {
        log::warn!("weight integral of d^-{} is not refinement-stable", 2.0 * alpha);
    }
    Ok(HardyRefinement {
        alpha,
        constant: classify_refinement(hs, &values)?,
        probe,
        estimates,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SobolevExponent {
    Exact { q: f64 },
    /// Any `q` in the open interval.
    Open { lo: f64, hi: f64 },
}

/// Sobolev exponent implied by a Hardy inequality with exponent `α`:
/// `q = Mp/(M-p)` with `M = N(1+α)` when `N > p`, else any
/// `q ∈ (p, p(1 + αp/N))`.
pub fn hardy_to_sobolev_exponent(alpha: f64, n: usize, p: f64) -> Result<SobolevExponent> {
    if !(alpha >= 0.0 && p >= 1.0 && n >= 1) {
        return Err(Error::InvalidParameter(format!("need α ≥ 0, p ≥ 1, N ≥ 1; got α={alpha}, p={p}, N={n}")));
    }
    let nf = n as f64;
    if nf > p {
        let m = nf * (1.0 + alpha);
        Ok(SobolevExponent::Exact { q: m * p / (m - p) })
    } else {
        Ok(SobolevExponent::Open {
            lo: p,
            hi: p * (1.0 + alpha * p / nf),
        })
    }
}

/// Hardy exponent `α = σ(1/p - 1/q)` implied by `∫ d^-σ < ∞` and a Sobolev
/// inequality with exponent `q`.
pub fn sobolev_to_hardy_exponent(sigma: f64, p: f64, q: f64) -> Result<f64> {
    if !(q > p && p >= 1.0 && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("need q > p ≥ 1 and σ > 0; got σ={sigma}, p={p}, q={q}")));
    }
    Ok(sigma * (1.0 / p - 1.0 / q))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InterpolationExponents {
    pub lambda: f64,
    pub q: f64,
    /// `|1/q - (1-λ)/p - λ/r|`.
    pub identity_residual: f64,
}

/// Hölder interpolation between `‖d^-α f‖_p` and `‖d^(N(1/p-1/r)) f‖_r`.
pub fn hardy_interpolation(alpha: f64, n: usize, p: f64, r: f64) -> Result<InterpolationExponents> {
    if !(alpha > 0.0 && r > p && p >= 1.0) {
        return Err(Error::InvalidParameter(format!("need α > 0 and r > p ≥ 1; got α={alpha}, p={p}, r={r}")));
    }
    let a = alpha / n as f64;
    let s = 1.0 / p - 1.0 / r;
    let lambda = a / (a + s);
    let q = (a + s) / ((a + s) / p - a * s);
    Ok(InterpolationExponents {
        lambda,
        q,
        identity_residual: (1.0 / q - (1.0 - lambda) / p - lambda / r).abs(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerMembership {
    pub in_w12: bool,
    pub in_lq: bool,
    /// `δ` bound for `x^-δ ∈ W^{1,2}`: `-1 + (1 + (N-1)/γ)/2`.
    pub w12_threshold: f64,
    /// `δ` bound for `x^-δ ∈ L^q`: `(1 + (N-1)/γ)/q`.
    pub lq_threshold: f64,
}

/// Membership of `x^-δ` on the cusp `{|y|^γ < x < 1}` in `W^{1,2}` and `L^q`.
pub fn cusp_power_membership(gamma: f64, n: usize, delta: f64, q: f64) -> Result<PowerMembership> {
    if !(gamma > 0.0 && gamma <= 1.0) || n < 2 || (n == 2 && gamma >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < γ ≤ 1 (γ < 1 for N = 2) and N ≥ 2; got γ={gamma}, N={n}"
        )));
    }
    if !(delta >= 0.0 && q > 0.0) {
        return Err(Error::InvalidParameter(format!("need δ ≥ 0 and q > 0; got δ={delta}, q={q}")));
    }
    let e = 1.0 + (n - 1) as f64 / gamma;
    let w12_threshold = -1.0 + 0.5 * e;
    let lq_threshold = e / q;
    Ok(PowerMembership {
        in_w12: delta < w12_threshold,
        in_lq: delta < lq_threshold,
        w12_threshold,
        lq_threshold,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PowerNormStudy {
    pub delta: f64,
    pub q: f64,
    pub membership: PowerMembership,
    pub w12: RefinementStudy,
    pub lq: RefinementStudy,
    /// Numerics agree with the analytic booleans: a norm is refinement-
    /// stable where membership holds and not stable where it fails.
    pub consistent: bool,
}

/// Discrete `W^{1,2}` and `L^q` norms of `x^-δ` on cusp rasters.
pub fn cusp_power_norms(domain: &Domain, delta: f64, q: f64, hs: &[f64]) -> Result<PowerNormStudy> {
    let gamma = match domain.tag() {
        DomainTag::Cusp { gamma } => gamma,
        _ => return Err(Error::InvalidParameter("power-function norms need a cusp domain".into())),
    };
    let membership = cusp_power_membership(gamma, domain.dim(), delta, q)?;
    let mut w = Vec::new();
    let mut l = Vec::new();
    for &h in hs {
        let op = operator_at(domain, h)?;
        let f: Vec<f64> = op.coordinate(0).iter().map(|x| x.powf(-delta)).collect();
        w.push(op.sobolev_norm(&f)?);
        l.push(op.lq_norm(&f, q));
    }
    let w12 = classify_refinement(hs, &w)?;
    let lq = classify_refinement(hs, &l)?;
    let agrees = |s: &RefinementStudy, member: bool| {
        if member {
            s.classification != Refinement::Divergent
        } else {
            s.classification != Refinement::Stable
        }
    };
    Ok(PowerNormStudy {
        delta,
        q,
        consistent: agrees(&w12, membership.in_w12) && agrees(&lq, membership.in_lq),
        membership,
        w12,
        lq,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegStatus {
    Positive,
    Negative,
    Inconclusive,
}

fn leg_from(r: Refinement) -> LegStatus {
    match r {
        Refinement::Stable => LegStatus::Positive,
        Refinement::Divergent => LegStatus::Negative,
        Refinement::Inconclusive => LegStatus::Inconclusive,
    }
}

fn both(a: LegStatus, b: LegStatus) -> LegStatus {
    use LegStatus::*;
    match (a, b) {
        (Negative, _) | (_, Negative) => Negative,
        (Positive, Positive) => Positive,
        _ => Inconclusive,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub q: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub hardy: HardyRefinement,
    pub sobolev: SobolevRefinement,
    /// Refinement of `∫ d^-σ`.
    pub integrability: RefinementStudy,
    pub minkowski_estimate: f64,
    /// (a) Hardy inequality with exponent α.
    pub leg_a: LegStatus,
    /// (b) `∫ d^-σ < ∞` and the Sobolev inequality with exponent q.
    pub leg_b: LegStatus,
    /// (c) `M(∂Ω) < N` and the Sobolev inequality with exponent q.
    pub leg_c: LegStatus,
    /// Pass when the three legs agree, inconclusive otherwise.
    pub verdict: Verdict,
}

#[derive(Clone, Debug)]
pub struct EquivalenceOptions {
    pub hs: Vec<f64>,
    /// Collar widths for the Minkowski estimate.
    pub eps: Vec<f64>,
    pub ascent: AscentOptions,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        EquivalenceOptions {
            hs: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            eps: geometric_grid(0.002, 0.2, 8),
            ascent: AscentOptions::default(),
        }
    }
}

/// Cross-checks the three equivalent conditions relating Hardy and Sobolev
/// inequalities to the boundary dimension, each leg by refinement.
pub fn verify_hardy_sobolev_equivalence(
    domain: &Domain,
    q: f64,
    alpha: f64,
    sigma: f64,
    opts: &EquivalenceOptions,
) -> Result<EquivalenceReport> {
    if opts.hs.len() < 2 {
        return Err(Error::InsufficientData("the equivalence check needs operators at 2+ resolutions".into()));
    }
    let hardy = hardy_refinement(domain, alpha, &opts.hs, &opts.ascent)?;
    let sobolev = sobolev_refinement(domain, q, &opts.hs, &opts.ascent)?;
    let mut integrals = Vec::new();
    for &h in &opts.hs {
        let op = operator_at(domain, h)?;
        let c = op.cell_volume();
        integrals.push(cell_distances(domain, &op).iter().map(|d| c * d.powf(-sigma)).sum::<f64>());
    }
    let integrability = classify_refinement(&opts.hs, &integrals)?;
    let mink = minkowski_dimension(domain, &opts.eps)?;
    let n = domain.dim() as f64;
    let sob = leg_from(sobolev.study.classification);
    let leg_a = both(leg_from(hardy.constant.classification), leg_from(hardy.probe.classification));
    let leg_b = both(leg_from(integrability.classification), sob);
    let dim_leg = if mink.estimate < n - 0.05 {
        LegStatus::Positive
    } else if mink.estimate > n + 0.05 {
        LegStatus::Negative
    } else {
        LegStatus::Inconclusive
    };
    let leg_c = both(dim_leg, sob);
    let verdict = if leg_a == leg_b && leg_b == leg_c && leg_a != LegStatus::Inconclusive {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    Ok(EquivalenceReport {
        q,
        alpha,
        sigma,
        hardy,
        sobolev,
        integrability,
        minkowski_estimate: mink.estimate,
        leg_a,
        leg_b,
        leg_c,
        verdict,
    })
}
