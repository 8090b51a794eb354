//! Lowest eigenpairs of `K u = λ B u`, Rayleigh–Ritz bounds and the
//! inradius (Dirichlet ball) upper bound.
//!
//! The sparse path is a shift-invert block Lanczos iteration with full
//! reorthogonalization on `(A + σ)^(-1)`, `A = B^(-1/2) K B^(-1/2)`, with the
//! constant vector deflated analytically so `λ_0 = 0` exactly.

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::linalg::{axpy_sub, dense_stiffness, dot, norm, symmetric_eigen_sorted, EnvelopeCholesky};
use crate::operator::DiscreteOperator;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Dense for small rasters, Lanczos otherwise.
    Auto,
    Dense,
    Lanczos,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Bound on `‖K u - λ B u‖_{B^-1} / (λ + 1)`.
    pub tol: f64,
    /// Block steps before giving up; defaults to `50 m`.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub method: Method,
    pub block: usize,
    /// Largest cell count solved densely under `Method::Auto`.
    pub dense_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_steps: None,
            seed: 0x5eed,
            method: Method::Auto,
            block: 4,
            dense_limit: 500,
        }
    }
}

/// Relative gap below which neighboring eigenvalues form a cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    /// Mass-orthonormal eigenvectors, one per eigenvalue.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    /// `max |u_n|` for the mass-normalized `u_n`.
    pub sup_norms: Vec<f64>,
    /// Relative residuals `‖K u - λ B u‖_{B^-1} / (λ + 1)`.
    pub residuals: Vec<f64>,
    /// Index groups of eigenvalues closer than the cluster tolerance.
    pub clusters: Vec<Vec<usize>>,
    pub iterations: usize,
    pub tol: f64,
    pub method: Method,
    pub h: f64,
    pub dim: usize,
    pub n_cells: usize,
    pub cell_volume: f64,
    pub domain_id: String,
}

impl SpectrumResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.n_cells as f64 * self.cell_volume
    }

    /// Mass inner product.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.cell_volume * dot(f, g)
    }

    /// Keeps the first `m` pairs.
    pub fn truncated(&self, m: usize) -> SpectrumResult {
        let m = m.min(self.len());
        let mut s = self.clone();
        s.eigenvalues.truncate(m);
        s.eigenvectors.truncate(m);
        s.sup_norms.truncate(m);
        s.residuals.truncate(m);
        s.clusters = clusters(&s.eigenvalues);
        s
    }
}

fn clusters(vals: &[f64]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in vals.iter().enumerate() {
        match out.last_mut() {
            Some(c) if (v - vals[*c.last().unwrap()]).abs() <= CLUSTER_TOL * v.abs().max(1e-300) => {
                c.push(i)
            }
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = (0.0f64, 0usize);
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best.0 * (1.0 + 1e-9) {
            best = (x.abs(), i);
        }
    }
    if v[best.1] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn finish(
    op: &DiscreteOperator,
    mut pairs: Vec<(f64, Vec<f64>)>,
    iterations: usize,
    opts: &SolverOptions,
    method: Method,
) -> SpectrumResult {
    // `pairs` hold Euclidean-unit vectors; mass normalization divides by sqrt(h^N)
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let c = op.cell_volume();
    let scale = 1.0 / c.sqrt();
    let mut eigenvalues = Vec::new();
    let mut eigenvectors = Vec::new();
    let mut residuals = Vec::new();
    let mut sup_norms = Vec::new();
    for (lam, mut y) in pairs {
        fix_sign(&mut y);
        let r = relative_residual(op, &y, lam);
        let u: Vec<f64> = y.iter().map(|v| v * scale).collect();
        sup_norms.push(u.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        eigenvalues.push(lam);
        residuals.push(r);
        eigenvectors.push(u);
    }
    SpectrumResult {
        clusters: clusters(&eigenvalues),
        eigenvalues,
        eigenvectors,
        sup_norms,
        residuals,
        iterations,
        tol: opts.tol,
        method,
        h: op.h(),
        dim: op.dim(),
        n_cells: op.n(),
        cell_volume: c,
        domain_id: op.domain_id().to_string(),
    }
}

/// `‖A y - λ y‖ / (λ + 1)` for a Euclidean-unit `y`, `A = K / h^N`.
fn relative_residual(op: &DiscreteOperator, y: &[f64], lam: f64) -> f64 {
    let ky = op.stiffness_times(y);
    let c = op.cell_volume();
    let r: f64 = ky
        .iter()
        .zip(y)
        .map(|(k, v)| {
            let d = k / c - lam * v;
            d * d
        })
        .sum::<f64>()
        .sqrt();
    r / (lam + 1.0)
}

/// Lowest `m` eigenpairs, deterministic for a fixed seed.
pub fn lowest_eigenpairs(op: &DiscreteOperator, m: usize, opts: &SolverOptions) -> Result<SpectrumResult> {
    let n = op.n();
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "requested {m} eigenpairs from a raster with {n} cells"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("solver tolerance must be positive".into()));
    }
    let method = match opts.method {
        Method::Auto if n <= opts.dense_limit => Method::Dense,
        Method::Auto => Method::Lanczos,
        other => other,
    };
    let z0 = vec![1.0 / (n as f64).sqrt(); n];
    if n == 1 || m == 1 {
        return Ok(finish(op, vec![(0.0, z0)], 0, opts, method));
    }
    let res = match method {
        Method::Dense => {
            let pairs = dense_pairs(op, m, &z0);
            Ok(finish(op, pairs, 1, opts, method))
        }
        _ => lanczos(op, m, opts, &z0),
    }?;
    let worst = res.residuals.iter().copied().fold(0.0, f64::max);
    if worst > opts.tol {
        return Err(Error::NonConvergence {
            iterations: res.iterations,
            worst,
            residuals: res.residuals,
        });
    }
    Ok(res)
}

fn dense_pairs(op: &DiscreteOperator, m: usize, z0: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let a = dense_stiffness(op) / op.cell_volume();
    let (vals, vecs) = symmetric_eigen_sorted(a);
    let mut pairs = vec![(0.0, z0.to_vec())];
    for k in 1..m {
        let mut y: Vec<f64> = vecs.column(k).iter().copied().collect();
        let p = dot(&y, z0);
        axpy_sub(&mut y, p, z0);
        let nr = norm(&y);
        y.iter_mut().for_each(|v| *v /= nr);
        pairs.push((vals[k].max(0.0), y));
    }
    pairs
}

/// Orthonormalizes `block` against `basis` and itself (two Gram–Schmidt
/// passes). Returns the coefficient matrix of the in-block pass; columns that
/// collapse are replaced by fresh random directions.
fn orthonormalize(block: &mut [Vec<f64>], basis: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let p = block.len();
    let mut r = vec![vec![0.0; p]; p];
    for j in 0..p {
        for _ in 0..2 {
            for v in basis {
                let c = dot(v, &block[j]);
                axpy_sub(&mut block[j], c, v);
            }
        }
        let before = norm(&block[j]);
        for _ in 0..2 {
            for i in 0..j {
                let c = dot(&block[i], &block[j]);
                r[i][j] += c;
                let (lo, hi) = block.split_at_mut(j);
                axpy_sub(&mut hi[0], c, &lo[i]);
            }
        }
        let nr = norm(&block[j]);
        r[j][j] = nr;
        if nr <= 1e-10 * before.max(1e-300) || nr == 0.0 {
            r[j][j] = 0.0;
            // rank loss: continue with a random direction
            let len = block[j].len();
            let mut fresh: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for _ in 0..2 {
                for v in basis.iter().chain(block[..j].iter()) {
                    let c = dot(v, &fresh);
                    axpy_sub(&mut fresh, c, v);
                }
            }
            let f = norm(&fresh);
            block[j] = fresh.into_iter().map(|v| v / f).collect();
        } else {
            block[j].iter_mut().for_each(|v| *v /= nr);
        }
    }
    r
}

fn lanczos(op: &DiscreteOperator, m: usize, opts: &SolverOptions, z0: &[f64]) -> Result<SpectrumResult> {
    let n = op.n();
    let c = op.cell_volume();
    let ext = op
        .raster()
        .grid
        .dims
        .iter()
        .map(|&k| k as f64 * op.h())
        .fold(0.0, f64::max);
    let sigma = 1.0 / (ext * ext);
    let chol = EnvelopeCholesky::factor(op, sigma)?;
    // S y = (A + σ)^(-1) y = c (K + σ B)^(-1) y
    let apply_s = |y: &[f64]| -> Vec<f64> {
        let mut w = chol.solve(y);
        w.iter_mut().for_each(|v| *v *= c);
        let p = dot(&w, z0);
        axpy_sub(&mut w, p, z0);
        w
    };
    let want = m - 1;
    let space = n - 1;
    let p = opts.block.max(1).min(space);
    let max_steps = opts.max_steps.unwrap_or(50 * m).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let zbasis = vec![z0.to_vec()];
    let mut q: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    orthonormalize(&mut q, &zbasis, &mut rng);

    let mut v: Vec<Vec<f64>> = Vec::new();
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut best: Option<(Vec<(f64, Vec<f64>)>, f64)> = None;
    let mut steps = 0;
    while steps < max_steps {
        steps += 1;
        let k_old = v.len();
        let mut w: Vec<Vec<f64>> = q.iter().map(|col| apply_s(col)).collect();
        v.extend(q.iter().cloned());
        let k = v.len();
        for row in h.iter_mut() {
            row.resize(k, 0.0);
        }
        h.resize(k, vec![0.0; k]);
        for (cj, wj) in w.iter().enumerate() {
            let col = k_old + cj;
            for i in 0..k {
                let val = dot(&v[i], wj);
                if i >= k_old {
                    h[i][col] += 0.5 * val;
                    h[col][i] += 0.5 * val;
                } else {
                    h[i][col] = val;
                    h[col][i] = val;
                }
            }
        }
        let exhausted = k >= space;
        let r = if exhausted {
            vec![vec![0.0; q.len()]; q.len()]
        } else {
            let mut basis = zbasis.clone();
            basis.extend(v.iter().cloned());
            let keep = q.len().min(space - k);
            let r = orthonormalize(&mut w, &basis, &mut rng);
            w.truncate(keep);
            r
        };

        if k < want && !exhausted {
            q = w;
            continue;
        }
        let hm = DMatrix::from_fn(k, k, |i, j| h[i][j]);
        let (theta, s) = symmetric_eigen_sorted(hm);
        // largest θ = smallest λ
        let top: Vec<usize> = (0..k).rev().take(want).collect();
        let bq = q.len();
        let optimistic = top.iter().all(|&col| {
            let th = theta[col];
            let lam = 1.0 / th - sigma;
            let mut est: f64 = 0.0;
            for i in 0..bq {
                let mut acc = 0.0;
                for j in 0..bq {
                    acc += r[i][j] * s[(k - bq + j, col)];
                }
                est += acc * acc;
            }
            est.sqrt() * (lam + sigma) / th <= 0.1 * opts.tol * (lam + 1.0)
        });
        if optimistic || exhausted || steps == max_steps {
            let mut pairs = vec![(0.0, z0.to_vec())];
            let mut worst: f64 = 0.0;
            for &col in &top {
                let mut y = vec![0.0; n];
                for (i, vi) in v.iter().enumerate() {
                    let coef = s[(i, col)];
                    if coef != 0.0 {
                        for (a, b) in y.iter_mut().zip(vi) {
                            *a += coef * b;
                        }
                    }
                }
                let ny = norm(&y);
                y.iter_mut().for_each(|x| *x /= ny);
                let lam = (op.quadratic_form(&y)? / c).max(0.0);
                worst = worst.max(relative_residual(op, &y, lam));
                pairs.push((lam, y));
            }
            if best.as_ref().map_or(true, |b| worst < b.1) {
                best = Some((pairs, worst));
            }
            if worst <= opts.tol || exhausted {
                break;
            }
        }
        q = w;
    }
    let (pairs, _) = best.ok_or_else(|| Error::NonConvergence {
        iterations: steps,
        worst: f64::INFINITY,
        residuals: vec![],
    })?;
    Ok(finish(op, pairs, steps, opts, Method::Lanczos))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RayleighRitzEstimate {
    pub description: String,
    /// Ritz values, ascending.
    pub mu: Vec<f64>,
    pub requested: usize,
    pub dim: usize,
    pub rank_deficient: bool,
}

impl RayleighRitzEstimate {
    /// `μ(L) = sup` of the form quotient over the span.
    pub fn top(&self) -> f64 {
        self.mu.last().copied().unwrap_or(0.0)
    }
}

/// Ritz values of `K` on the span of `basis` (mass-orthonormalized first).
pub fn rayleigh_ritz(op: &DiscreteOperator, basis: &[Vec<f64>], description: &str) -> Result<RayleighRitzEstimate> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for b in basis {
        if b.len() != op.n() {
            return Err(Error::DimensionMismatch {
                expected: op.n(),
                got: b.len(),
            });
        }
        let mut v = b.clone();
        let before = norm(&v);
        for _ in 0..2 {
            for u in &q {
                let c = dot(u, &v);
                axpy_sub(&mut v, c, u);
            }
        }
        let nr = norm(&v);
        if nr > 1e-10 * before && nr > 0.0 {
            v.iter_mut().for_each(|x| *x /= nr);
            q.push(v);
        }
    }
    let rank_deficient = q.len() < basis.len();
    if rank_deficient {
        log::warn!(
            "Rayleigh-Ritz basis '{description}' has rank {} < {}; using the reduced span",
            q.len(),
            basis.len()
        );
    }
    let k = q.len();
    let kq: Vec<Vec<f64>> = q.iter().map(|v| op.stiffness_times(v)).collect();
    let c = op.cell_volume();
    let hm = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&q[i], &kq[j]) + dot(&q[j], &kq[i])) / c);
    let (mu, _) = if k > 0 { symmetric_eigen_sorted(hm) } else { (vec![], DMatrix::zeros(0, 0)) };
    Ok(RayleighRitzEstimate {
        description: description.to_string(),
        mu: mu.into_iter().map(|x: f64| x.max(0.0)).collect(),
        requested: basis.len(),
        dim: k,
        rank_deficient,
    })
}

/// Dirichlet eigenvalues of the unit ball, ascending with multiplicity,
/// as (root, multiplicity) of the Bessel-type zero whose square is the value.
fn ball_roots(dim: usize) -> &'static [(f64, usize)] {
    match dim {
        2 => &[
            (2.404_825_557_695_772_4, 1),
            (3.831_705_970_207_512_5, 2),
            (5.135_622_301_840_683, 2),
            (5.520_078_110_286_311, 1),
            (6.380_161_895_923_984, 2),
            (7.015_586_669_815_619, 2),
            (7.588_342_434_503_804, 2),
            (8.417_244_140_399_866, 2),
            (8.653_727_912_911_013, 1),
            (8.771_483_815_959_954, 2),
            (9.761_023_129_981_67, 2),
            (9.936_109_524_217_686, 2),
            (10.173_468_135_062_722, 2),
        ],
        3 => &[
            (std::f64::consts::PI, 1),
            (4.493_409_457_909_064, 3),
            (5.763_459_196_894_55, 5),
            (std::f64::consts::TAU, 1),
            (6.987_932_000_500_52, 7),
            (7.725_251_836_937_707, 3),
            (8.182_561_452_571_242, 9),
        ],
        _ => &[],
    }
}

pub const BALL_TABLE_MAX: usize = 20;

/// `n`-th (0-indexed, with multiplicity) Dirichlet eigenvalue of the unit ball.
pub fn dirichlet_ball_eigenvalue(dim: usize, n: usize) -> Result<f64> {
    if n > BALL_TABLE_MAX {
        return Err(Error::TableLimit { n, max: BALL_TABLE_MAX });
    }
    if dim == 1 {
        let k = (n + 1) as f64 * std::f64::consts::FRAC_PI_2;
        return Ok(k * k);
    }
    let mut seen = 0;
    for &(root, mult) in ball_roots(dim) {
        seen += mult;
        if n < seen {
            return Ok(root * root);
        }
    }
    Err(Error::InvalidParameter(format!("no Dirichlet ball table for dimension {dim}")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InradiusBound {
    pub n: usize,
    pub inradius: f64,
    pub unit_ball_eigenvalue: f64,
    pub bound: f64,
}

/// `λ_n ≤ γ_n(unit ball) r^-2` with `r` the largest boundary distance over
/// the cell centers of the raster at cell size `h`.
pub fn inradius_upper_bound(domain: &Domain, h: f64, n: usize) -> Result<InradiusBound> {
    let gamma = dirichlet_ball_eigenvalue(domain.dim(), n)?;
    let r = domain.rasterize(h)?;
    let inradius = (0..r.n_cells())
        .map(|i| domain.boundary_distance(&r.center(i)))
        .fold(0.0, f64::max);
    Ok(InradiusBound {
        n,
        inradius,
        unit_ball_eigenvalue: gamma,
        bound: gamma / (inradius * inradius),
    })
}
