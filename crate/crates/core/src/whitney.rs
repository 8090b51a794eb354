//! Whitney coverings by dyadic cubes, their invariant checks and the
//! boundary-dimension estimate from the level counts `n(k)`.
//!
//! Cubes are integer lattice pairs `(k, i)` with lower corner `i 2^-k` and
//! edge `2^-k`. Construction is top-down: a cube is kept when
//! `diam Q ≤ dist(Q, ∂Ω) ≤ 4 diam Q` holds with conservative bounds
//! `dist ≥ d(c) - diam/2 - e` and `dist ≤ d(c) + e`, where `e` is the
//! distance evaluation error; otherwise it is split, down to level `k_max`.

use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::geometry::{collar_measure, Domain};
use crate::report::Verdict;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cube {
    pub level: i32,
    pub index: Vec<i64>,
}

impl Cube {
    pub fn side(&self) -> f64 {
        (-self.level as f64).exp2()
    }

    pub fn diam(&self) -> f64 {
        self.side() * (self.index.len() as f64).sqrt()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.index.iter().map(|&i| i as f64 * self.side()).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.index.iter().map(|&i| (i as f64 + 0.5) * self.side()).collect()
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.index.len() as i32)
    }

    pub fn parent(&self) -> Cube {
        Cube {
            level: self.level - 1,
            index: self.index.iter().map(|i| i >> 1).collect(),
        }
    }

    fn children(&self) -> Vec<Cube> {
        let n = self.index.len();
        (0..1usize << n)
            .map(|mask| Cube {
                level: self.level + 1,
                index: (0..n).map(|a| 2 * self.index[a] + ((mask >> a) & 1) as i64).collect(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhitneyCovering {
    pub domain_id: String,
    pub dim: usize,
    pub k_min: i32,
    pub k_max: i32,
    pub cubes: Vec<Cube>,
    /// `n(k)` for every level that holds cubes.
    pub counts: BTreeMap<i32, usize>,
    /// Distance evaluation error included in the conservative bounds.
    pub distance_error: f64,
    /// Points with `d(x)` above this are covered.
    pub covered_depth: f64,
}

enum Decision {
    Keep,
    Split,
    Drop,
}

fn classify(domain: &Domain, cube: &Cube, err: f64) -> Decision {
    let c = cube.center();
    let diam = cube.diam();
    let d = domain.boundary_distance(&c);
    if !domain.contains(&c) {
        return if d - err > 0.5 * diam { Decision::Drop } else { Decision::Split };
    }
    if d - 0.5 * diam - err >= diam && d + err <= 4.0 * diam {
        Decision::Keep
    } else {
        Decision::Split
    }
}

pub fn build_whitney(domain: &Domain, k_max: i32) -> Result<WhitneyCovering> {
    if k_max < 3 {
        return Err(Error::InvalidParameter(format!("k_max must be at least 3, got {k_max}")));
    }
    let bb = domain.bbox();
    let n = domain.dim();
    let err = domain.distance_error();
    // coarsest level: one edge spans the largest extent
    let k_min = (-bb.max_extent().log2()).floor() as i32;
    if k_min > k_max {
        return Err(Error::Construction(format!("k_max = {k_max} is coarser than the domain")));
    }
    let side = (-k_min as f64).exp2();
    let lo: Vec<i64> = bb.lo.iter().map(|v| (v / side).floor() as i64).collect();
    let hi: Vec<i64> = bb.hi.iter().map(|v| (v / side).ceil() as i64).collect();
    let mut frontier: Vec<Cube> = Vec::new();
    let mut idx = lo.clone();
    'outer: loop {
        frontier.push(Cube {
            level: k_min,
            index: idx.clone(),
        });
        for a in (0..n).rev() {
            idx[a] += 1;
            if idx[a] < hi[a] {
                continue 'outer;
            }
            idx[a] = lo[a];
        }
        break;
    }
    let mut cubes = Vec::new();
    let mut counts = BTreeMap::new();
    for level in k_min..=k_max {
        let mut next = Vec::new();
        for cube in frontier {
            match classify(domain, &cube, err) {
                Decision::Keep => {
                    *counts.entry(level).or_insert(0) += 1;
                    cubes.push(cube);
                }
                Decision::Split if level < k_max => next.extend(cube.children()),
                _ => {}
            }
        }
        frontier = next;
    }
    if cubes.is_empty() {
        return Err(Error::Construction(format!(
            "no Whitney cube fits at levels up to {k_max}; raise k_max"
        )));
    }
    let finest = (-k_max as f64).exp2() * (n as f64).sqrt();
    Ok(WhitneyCovering {
        domain_id: domain.id().to_string(),
        dim: n,
        k_min,
        k_max,
        cubes,
        counts,
        distance_error: err,
        covered_depth: 2.0 * finest + 2.0 * err,
    })
}

impl WhitneyCovering {
    /// A covering from explicit cubes (for checks on hand-built families).
    pub fn from_cubes(domain: &Domain, cubes: Vec<Cube>) -> Result<Self> {
        let n = domain.dim();
        if cubes.iter().any(|c| c.index.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: cubes.iter().map(|c| c.index.len()).find(|&l| l != n).unwrap_or(0),
            });
        }
        let mut counts = BTreeMap::new();
        for c in &cubes {
            *counts.entry(c.level).or_insert(0) += 1;
        }
        let k_min = counts.keys().next().copied().unwrap_or(0);
        let k_max = counts.keys().last().copied().unwrap_or(0);
        Ok(WhitneyCovering {
            domain_id: domain.id().to_string(),
            dim: n,
            k_min,
            k_max,
            cubes,
            counts,
            distance_error: domain.distance_error(),
            covered_depth: f64::NAN,
        })
    }

    pub fn union_measure(&self) -> f64 {
        self.cubes.iter().map(|c| c.volume()).sum()
    }

    /// `level,i_0,..,i_{N-1}` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level");
        for a in 0..self.dim {
            let _ = write!(s, ",i{a}");
        }
        s.push('\n');
        for c in &self.cubes {
            let _ = write!(s, "{}", c.level);
            for i in &c.index {
                let _ = write!(s, ",{i}");
            }
            s.push('\n');
        }
        s
    }

    /// Gnuplot script drawing the cubes (intervals as thin boxes in 1D).
    pub fn gnuplot_script(&self) -> Result<String> {
        if self.dim > 2 {
            return Err(Error::InvalidParameter("gnuplot export covers 1D and 2D coverings".into()));
        }
        let mut s = String::from("set size ratio -1\nunset key\n");
        for (k, c) in self.cubes.iter().enumerate() {
            let lo = c.lower();
            let side = c.side();
            let (x0, x1) = (lo[0], lo[0] + side);
            let (y0, y1) = if self.dim == 2 { (lo[1], lo[1] + side) } else { (0.0, side) };
            let _ = writeln!(s, "set object {} rect from {x0},{y0} to {x1},{y1} fs empty", k + 1);
        }
        let _ = writeln!(s, "plot [{}:{}] [{}:{}] NaN", self.bounds(0).0, self.bounds(0).1, self.bounds(1).0, self.bounds(1).1);
        Ok(s)
    }

    fn bounds(&self, axis: usize) -> (f64, f64) {
        if axis >= self.dim {
            return (0.0, 1.0);
        }
        let lo = self.cubes.iter().map(|c| c.lower()[axis]).fold(f64::INFINITY, f64::min);
        let hi = self
            .cubes
            .iter()
            .map(|c| c.lower()[axis] + c.side())
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CubeCountDimension {
    pub estimate: f64,
    pub levels: Vec<i32>,
    pub counts: Vec<usize>,
    /// Fit of `log2 n(k)` against `k` on the finer half of the levels.
    pub fit: LinearFit,
}

pub fn cube_count_dimension(cov: &WhitneyCovering) -> Result<CubeCountDimension> {
    let levels: Vec<(i32, usize)> = cov.counts.iter().filter(|(_, &n)| n > 0).map(|(&k, &n)| (k, n)).collect();
    if levels.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "need at least 5 populated levels, got {}",
            levels.len()
        )));
    }
    let half = &levels[levels.len() / 2..];
    let ks: Vec<f64> = half.iter().map(|(k, _)| *k as f64).collect();
    let ys: Vec<f64> = half.iter().map(|(_, n)| (*n as f64).log2()).collect();
    let fit = linear_fit(&ks, &ys)?;
    Ok(CubeCountDimension {
        estimate: fit.slope,
        levels: half.iter().map(|(k, _)| *k).collect(),
        counts: half.iter().map(|(_, n)| *n).collect(),
        fit,
    })
}

type Key = (i32, [i64; 3]);

/// Visits the lattice points on the boundary of the box `[lo, hi]`.
fn shell_points(lo: &[i64], hi: &[i64], mut f: impl FnMut(&[i64])) {
    let n = lo.len();
    let last = n - 1;
    let mut p = lo.to_vec();
    loop {
        if (0..last).any(|a| p[a] == lo[a] || p[a] == hi[a]) {
            for v in lo[last]..=hi[last] {
                p[last] = v;
                f(&p);
            }
        } else {
            p[last] = lo[last];
            f(&p);
            p[last] = hi[last];
            f(&p);
        }
        let mut a = last;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            p[a] += 1;
            if p[a] <= hi[a] {
                break;
            }
            p[a] = lo[a];
        }
    }
}

fn key(c: &Cube) -> Key {
    let mut a = [0i64; 3];
    a[..c.index.len()].copy_from_slice(&c.index);
    (c.level, a)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhitneyReport {
    pub cubes: usize,
    /// Pairs of cubes with overlapping interiors (or duplicates).
    pub overlaps: usize,
    /// Cubes failing `diam ≤ dist(Q, ∂Ω) ≤ 4 diam` under the conservative bounds.
    pub separation_violations: usize,
    /// Touching pairs whose levels differ by more than 2.
    pub neighbor_level_violations: usize,
    pub max_neighbors: usize,
    /// `12^N`.
    pub neighbor_bound: usize,
    /// Levels with `n(k) > c1 2^(Nk)`, `c1 = |box| + 1`.
    pub count_violations: Vec<i32>,
    pub union_measure: f64,
    pub domain_measure: f64,
    /// `|∂_ε Ω|` at `ε = 6 2^-k_max`.
    pub truncation_collar: f64,
    pub measure_ok: bool,
    pub verdict: Verdict,
}

/// Checks disjointness, the separation condition, neighbor levels and
/// counts, the cube-count bound and the covered measure.
pub fn verify_whitney(domain: &Domain, cov: &WhitneyCovering) -> Result<WhitneyReport> {
    let n = cov.dim;
    let err = cov.distance_error;
    let map: HashMap<Key, usize> = cov.cubes.iter().enumerate().map(|(i, c)| (key(c), i)).collect();
    let mut overlaps = cov.cubes.len() - map.len();
    for c in &cov.cubes {
        let mut a = c.parent();
        while a.level >= cov.k_min {
            if map.contains_key(&key(&a)) {
                overlaps += 1;
            }
            a = a.parent();
        }
    }
    let separation_violations = cov
        .cubes
        .iter()
        .filter(|c| {
            let d = domain.boundary_distance(&c.center());
            let diam = c.diam();
            !(domain.contains(&c.center()) && d - 0.5 * diam - err >= diam && d + err <= 4.0 * diam)
        })
        .count();

    // neighbors: look up the cube holding each finest-level cell in the
    // one-cell shell around every cube
    let kf = cov.k_max;
    let lookup = |p: &[i64]| -> Option<usize> {
        for lev in cov.k_min..=kf {
            let shift = (kf - lev) as u32;
            let mut a = [0i64; 3];
            for (ax, v) in p.iter().enumerate() {
                a[ax] = v >> shift;
            }
            if let Some(&i) = map.get(&(lev, a)) {
                return Some(i);
            }
        }
        None
    };
    let mut max_neighbors = 0;
    let mut neighbor_level_violations = 0;
    for c in &cov.cubes {
        let s = 1i64 << (kf - c.level);
        let lo: Vec<i64> = c.index.iter().map(|i| i * s - 1).collect();
        let hi: Vec<i64> = c.index.iter().map(|i| (i + 1) * s).collect();
        let mut found: HashSet<usize> = HashSet::new();
        shell_points(&lo, &hi, |p| {
            if let Some(j) = lookup(p) {
                found.insert(j);
            }
        });
        max_neighbors = max_neighbors.max(found.len());
        neighbor_level_violations += found
            .iter()
            .filter(|&&j| (cov.cubes[j].level - c.level).abs() > 2)
            .count();
    }
    // each violating pair was seen from both sides
    neighbor_level_violations /= 2;

    let c1 = domain.bbox().volume() + 1.0;
    let count_violations: Vec<i32> = cov
        .counts
        .iter()
        .filter(|(&k, &cnt)| cnt as f64 > c1 * (n as f64 * k as f64).exp2())
        .map(|(&k, _)| k)
        .collect();
    let union_measure = cov.union_measure();
    let domain_measure = match domain.exact_measure() {
        Some(m) => m,
        None => domain.rasterize(domain.distance_error() / (n as f64).sqrt())?.measure(),
    };
    let eps = 6.0 * (-cov.k_max as f64).exp2();
    let truncation_collar = collar_measure(domain, eps)?;
    let slack = if domain.exact_measure().is_some() { 1e-12 } else { 0.01 * domain_measure };
    let measure_ok = union_measure <= domain_measure + slack && union_measure >= domain_measure - truncation_collar - slack;
    let neighbor_bound = 12usize.pow(n as u32);
    let verdict = Verdict::from_bool(
        overlaps == 0
            && separation_violations == 0
            && neighbor_level_violations == 0
            && max_neighbors <= neighbor_bound
            && count_violations.is_empty()
            && measure_ok,
    );
    Ok(WhitneyReport {
        cubes: cov.cubes.len(),
        overlaps,
        separation_violations,
        neighbor_level_violations,
        max_neighbors,
        neighbor_bound,
        count_violations,
        union_measure,
        domain_measure,
        truncation_collar,
        measure_ok,
        verdict,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointViolation {
    pub cube: usize,
    pub point: Vec<f64>,
    pub distance: f64,
    pub diam: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointDistanceReport {
    pub points: usize,
    /// Smallest and largest `d(x) / diam Q` seen.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub violations: Vec<PointViolation>,
    pub verdict: Verdict,
}

/// Samples a `per_axis^N` lattice (corners included) in every cube and
/// checks `diam Q ≤ d(x) ≤ 5 diam Q`, widened by the distance error.
pub fn check_point_cube_distance(domain: &Domain, cov: &WhitneyCovering, per_axis: usize) -> PointDistanceReport {
    let per = per_axis.max(2);
    let n = cov.dim;
    let err = cov.distance_error;
    let mut points = 0;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    let mut violations = Vec::new();
    for (ci, c) in cov.cubes.iter().enumerate() {
        let lo = c.lower();
        let side = c.side();
        let diam = c.diam();
        for lin in 0..per.pow(n as u32) {
            let mut r = lin;
            let mut p = lo.clone();
            for x in p.iter_mut() {
                *x += side * (r % per) as f64 / (per - 1) as f64;
                r /= per;
            }
            let d = domain.boundary_distance(&p);
            points += 1;
            min_ratio = min_ratio.min(d / diam);
            max_ratio = max_ratio.max(d / diam);
            if d + err < diam || d - err > 5.0 * diam {
                violations.push(PointViolation {
                    cube: ci,
                    point: p,
                    distance: d,
                    diam,
                });
            }
        }
    }
    PointDistanceReport {
        points,
        min_ratio,
        max_ratio,
        verdict: Verdict::from_bool(violations.is_empty()),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    #[test]
    fn interval_has_two_cubes_per_fine_level() {
        let d = Domain::unit_interval();
        let cov = build_whitney(&d, 8).unwrap();
        // hand enumeration: level 2 keeps [1/4,1/2) and [1/2,3/4); every
        // finer level keeps the second cube from each end
        let expected: BTreeMap<i32, usize> = (2..=8).map(|k| (k, 2)).collect();
        assert_eq!(cov.counts, expected);
        assert!(cov.cubes.contains(&Cube { level: 3, index: vec![1] }));
        assert!(cov.cubes.contains(&Cube { level: 3, index: vec![6] }));
        let dim = cube_count_dimension(&cov).unwrap();
        assert!(dim.estimate.abs() < 0.1);
        assert!(verify_whitney(&d, &cov).unwrap().verdict.passed());
    }

    #[test]
    fn square_covering_passes_all_checks() {
        let d = Domain::unit_square();
        let cov = build_whitney(&d, 8).unwrap();
        let rep = verify_whitney(&d, &cov).unwrap();
        assert!(rep.verdict.passed(), "{rep:?}");
        assert!(rep.union_measure >= 1.0 - rep.truncation_collar);
        let pts = check_point_cube_distance(&d, &cov, 3);
        assert!(pts.verdict.passed());
        let dim = cube_count_dimension(&cov).unwrap();
        assert!((dim.estimate - 1.0).abs() < 0.15, "{}", dim.estimate);
    }

    #[test]
    fn cusp_covering_passes_all_checks() {
        let d = Domain::cusp(2, 0.5).unwrap();
        let cov = build_whitney(&d, 9).unwrap();
        let rep = verify_whitney(&d, &cov).unwrap();
        assert!(rep.verdict.passed(), "{rep:?}");
        assert!(check_point_cube_distance(&d, &cov, 3).verdict.passed());
        assert!(cube_count_dimension(&cov).unwrap().estimate <= 2.15);
    }

    #[test]
    fn overlap_and_separation_are_detected() {
        let d = Domain::unit_square();
        let mut cov = build_whitney(&d, 6).unwrap();
        let extra = cov.cubes[0].children()[0].clone();
        cov.cubes.push(extra);
        // a corner cube touching the boundary
        cov.cubes.push(Cube { level: 6, index: vec![0, 0] });
        let rep = verify_whitney(&d, &cov).unwrap();
        assert!(rep.overlaps >= 1 && rep.separation_violations >= 1 && !rep.verdict.passed());
    }

    #[test]
    fn point_bound_endpoints_are_attained() {
        let d = Domain::new(DomainSpec::Box {
            lo: vec![0.0],
            hi: vec![10.0],
        })
        .unwrap();
        // [1, 2): dist to the boundary equals the diameter
        let near = WhitneyCovering::from_cubes(&d, vec![Cube { level: 0, index: vec![1] }]).unwrap();
        let r = check_point_cube_distance(&d, &near, 9);
        assert!((r.min_ratio - 1.0).abs() < 1e-12 && r.verdict.passed());
        // [4, 5): dist is 4 diam, and x = 5 sits at 5 diam
        let far = WhitneyCovering::from_cubes(&d, vec![Cube { level: 0, index: vec![4] }]).unwrap();
        let r = check_point_cube_distance(&d, &far, 9);
        assert!((r.max_ratio - 5.0).abs() < 1e-12 && r.verdict.passed());
        let bad = WhitneyCovering::from_cubes(&d, vec![Cube { level: 0, index: vec![0] }]).unwrap();
        assert!(!check_point_cube_distance(&d, &bad, 3).violations.is_empty());
    }

    #[test]
    fn exports() {
        let d = Domain::unit_square();
        let cov = build_whitney(&d, 4).unwrap();
        let csv = cov.to_csv();
        assert!(csv.starts_with("level,i0,i1\n"));
        assert_eq!(csv.lines().count(), cov.cubes.len() + 1);
        assert!(cov.gnuplot_script().unwrap().contains("set object 1 rect"));
        assert!(build_whitney(&d, 2).is_err());
    }
}
