//! Boundary atlases of Hölder graph charts.

use super::{Domain, GraphDomain, Profile};
use crate::error::{Error, Result};
use crate::expr::Expr;
use serde::{Deserialize, Serialize};

/// One chart: rotated coordinates `z = R x`, the cuboid `V = (lo, hi)` in
/// those coordinates, and the profile `φ(z_1..z_{N-1})` whose subgraph is
/// `Ω ∩ V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chart {
    /// Rows of the orthogonal matrix `R`.
    pub rotation: Vec<Vec<f64>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub profile: Expr,
}

impl Chart {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn to_chart(&self, x: &[f64]) -> Vec<f64> {
        self.rotation
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Unit vector `R^T e_N`, the chart's "up" direction in world coordinates.
    pub fn direction(&self) -> Vec<f64> {
        self.rotation[self.dim() - 1].clone()
    }

    /// Whether `z` (chart coordinates) lies in `V` shrunk by `margin`.
    pub fn inside(&self, z: &[f64], margin: f64) -> bool {
        (0..self.dim()).all(|i| z[i] > self.lo[i] + margin && z[i] < self.hi[i] - margin)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipBoundaryAtlas {
    pub gamma: f64,
    pub holder_constant: f64,
    pub delta: f64,
    pub charts: Vec<Chart>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtlasReport {
    pub samples: usize,
    /// Sampled points of Ω not covered by any shrunken chart.
    pub uncovered: usize,
    /// Charts whose shrunken cuboid misses Ω.
    pub empty_charts: Vec<usize>,
    /// Sampled points in some `V_j` where membership disagrees with the subgraph.
    pub graph_mismatches: usize,
    /// Profile values outside `[a_N + δ, b_N - δ]`.
    pub height_violations: usize,
    pub holder_quotient: f64,
    pub passed: bool,
}

impl LipBoundaryAtlas {
    /// Four corner charts of the square `[lo, lo + side]^2`, each rotated by
    /// 45 degrees so the corner is a Lipschitz graph `φ(u) = c - |u - u0|`.
    /// Side charts cannot cover the corners with the required margin, so the
    /// corners get the charts.
    pub fn square_corners(lo: [f64; 2], side: f64, delta: f64) -> Result<Self> {
        // with half-width 0.53 side every point of the square is at depth
        // at least 0.177 side inside some chart cuboid
        if !(delta > 0.0 && delta <= 0.15 * side) {
            return Err(Error::InvalidParameter(format!(
                "square atlas needs 0 < delta <= 0.15 side, got {delta}"
            )));
        }
        let s2 = std::f64::consts::SQRT_2;
        let w = 0.53 * side;
        let mut charts = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            let c = [lo[0] + cx * side, lo[1] + cy * side];
            let n = [(2.0 * cx - 1.0) / s2, (2.0 * cy - 1.0) / s2];
            let t = [n[1], -n[0]];
            let nc = n[0] * c[0] + n[1] * c[1];
            let tc = t[0] * c[0] + t[1] * c[1];
            charts.push(Chart {
                rotation: vec![t.to_vec(), n.to_vec()],
                lo: vec![tc - w, nc - s2 * side + w],
                hi: vec![tc + w, nc + 2.0 * delta],
                profile: Expr::parse(&format!("{nc:?} - abs(x - ({tc:?}))"))?,
            });
        }
        Ok(LipBoundaryAtlas {
            gamma: 1.0,
            holder_constant: 1.0,
            delta,
            charts,
        })
    }

    /// One unrotated chart whose shrunken cuboid contains the whole graph
    /// domain; the deformation is then a pure translation on the domain.
    pub fn single_graph_chart(g: &GraphDomain, delta: f64) -> Result<Self> {
        let profile = match &g.profile {
            Profile::Expr(e) => Expr::parse(&format!("{:?} * ({})", g.scale, e.source()))?,
            Profile::Sampled { .. } => {
                return Err(Error::InvalidParameter(
                    "single-chart atlas needs an expression profile".into(),
                ))
            }
        };
        let bb = g.base.bbox();
        let n = bb.dim() + 1;
        let mut rotation = vec![vec![0.0; n]; n];
        for (i, row) in rotation.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut lo: Vec<f64> = bb.lo.iter().map(|v| v - 2.0 * delta).collect();
        let mut hi: Vec<f64> = bb.hi.iter().map(|v| v + 2.0 * delta).collect();
        lo.push(-2.0 * delta);
        hi.push(g.k_hi * g.scale + 2.0 * delta);
        Ok(LipBoundaryAtlas {
            gamma: g.gamma,
            holder_constant: g.holder_constant * g.scale,
            delta,
            charts: vec![Chart {
                rotation,
                lo,
                hi,
                profile,
            }],
        })
    }

    pub fn dim(&self) -> usize {
        self.charts.first().map_or(0, |c| c.dim())
    }

    /// Checks chart coverage, the subgraph property, the height margins and
    /// the Hölder bound by sampling a regular grid with `per_axis` points
    /// per axis over the domain's box padded by `2δ`.
    pub fn validate(&self, domain: &Domain, per_axis: usize) -> AtlasReport {
        let n = domain.dim();
        let bb = domain.bbox();
        let pad = 2.0 * self.delta;
        let total = per_axis.pow(n as u32);
        let mut uncovered = 0;
        let mut hit = vec![false; self.charts.len()];
        let mut mismatches = 0;
        let mut samples = 0;
        let mut p = vec![0.0; n];
        for lin in 0..total {
            let mut r = lin;
            for i in (0..n).rev() {
                let k = r % per_axis;
                r /= per_axis;
                let lo = bb.lo[i] - pad;
                let hi = bb.hi[i] + pad;
                p[i] = lo + (hi - lo) * (k as f64 + 0.5) / per_axis as f64;
            }
            let inside = domain.contains(&p);
            if inside {
                samples += 1;
            }
            let mut covered = false;
            for (j, ch) in self.charts.iter().enumerate() {
                let z = ch.to_chart(&p);
                if inside && ch.inside(&z, self.delta) {
                    covered = true;
                    hit[j] = true;
                }
                if ch.inside(&z, 0.0) {
                    let phi = ch.profile.eval(&z[..n - 1]);
                    if (z[n - 1] - phi).abs() > 1e-9 && (z[n - 1] < phi) != inside {
                        mismatches += 1;
                    }
                }
            }
            if inside && !covered {
                uncovered += 1;
            }
        }

        let mut height_violations = 0;
        let mut holder: f64 = 0.0;
        for ch in &self.charts {
            let m = n - 1;
            let per: usize = if m == 1 { 400 } else { 40 };
            let mut pts = Vec::new();
            for lin in 0..per.pow(m as u32) {
                let mut r = lin;
                let mut zb = vec![0.0; m];
                for i in (0..m).rev() {
                    let k = r % per;
                    r /= per;
                    zb[i] = ch.lo[i] + (ch.hi[i] - ch.lo[i]) * (k as f64 + 0.5) / per as f64;
                }
                let phi = ch.profile.eval(&zb);
                if phi < ch.lo[m] + self.delta - 1e-12 || phi > ch.hi[m] - self.delta + 1e-12 {
                    height_violations += 1;
                }
                pts.push((zb, phi));
            }
            for a in 0..pts.len() {
                for b in (a + 1)..pts.len() {
                    let d: f64 = pts[a]
                        .0
                        .iter()
                        .zip(&pts[b].0)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt();
                    holder = holder.max((pts[a].1 - pts[b].1).abs() / d.powf(self.gamma));
                }
            }
        }
        let empty_charts: Vec<usize> = (0..hit.len()).filter(|&j| !hit[j]).collect();
        let passed = uncovered == 0
            && empty_charts.is_empty()
            && mismatches == 0
            && height_violations == 0
            && holder <= self.holder_constant * (1.0 + 1e-9);
        AtlasReport {
            samples,
            uncovered,
            empty_charts,
            graph_mismatches: mismatches,
            height_violations,
            holder_quotient: holder,
            passed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_corner_atlas_is_valid() {
        for delta in [0.05, 0.1, 0.15] {
            let atlas = LipBoundaryAtlas::square_corners([0.0, 0.0], 1.0, delta).unwrap();
            let rep = atlas.validate(&Domain::unit_square(), 120);
            assert!(rep.passed, "{rep:?}");
            for ch in &atlas.charts {
                let d = ch.direction();
                assert!(((d[0] * d[0] + d[1] * d[1]) - 1.0).abs() < 1e-15);
            }
        }
        assert!(LipBoundaryAtlas::square_corners([0.0, 0.0], 1.0, 0.2).is_err());
    }

    #[test]
    fn atlas_with_tiny_windows_fails_coverage() {
        let mut atlas = LipBoundaryAtlas::square_corners([0.0, 0.0], 1.0, 0.1).unwrap();
        for ch in &mut atlas.charts {
            let mid = 0.5 * (ch.lo[0] + ch.hi[0]);
            ch.lo[0] = mid - 0.2;
            ch.hi[0] = mid + 0.2;
        }
        let rep = atlas.validate(&Domain::unit_square(), 80);
        assert!(rep.uncovered > 0 && !rep.passed);
    }
}
