//! Domains, boundary distance, rasters, collars and boundary atlases.

mod atlas;
mod collar;
pub mod distance;
mod edt;
mod raster;

pub use atlas::{AtlasReport, Chart, LipBoundaryAtlas};
pub use collar::{
    collar_measure, collar_measure_raster, collar_table, geometric_grid, minkowski_dimension,
    CollarMeasureTable, MinkowskiEstimate,
};
pub use edt::{edt_inside, edt_outside};
pub use raster::{Grid, Raster};

use crate::error::{Error, Result};
use crate::expr::Expr;
use distance::{curve_dist2, segment_dist2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn max_extent(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max)
    }

    pub fn min_extent(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| b - a)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Base region of a graph domain, in the first N-1 coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseRegion {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Disc { center: Vec<f64>, radius: f64 },
}

impl BaseRegion {
    pub fn dim(&self) -> usize {
        match self {
            BaseRegion::Box { lo, .. } => lo.len(),
            BaseRegion::Disc { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            BaseRegion::Box { lo, hi } => (0..lo.len()).all(|i| p[i] > lo[i] && p[i] < hi[i]),
            BaseRegion::Disc { center, radius } => dist(p, center) < *radius,
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        match self {
            BaseRegion::Box { lo, hi } => BoundingBox {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            BaseRegion::Disc { center, radius } => BoundingBox {
                lo: center.iter().map(|c| c - radius).collect(),
                hi: center.iter().map(|c| c + radius).collect(),
            },
        }
    }

    fn center(&self) -> Vec<f64> {
        match self {
            BaseRegion::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            BaseRegion::Disc { center, .. } => center.clone(),
        }
    }
}

/// Height profile of a graph domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Expr(Expr),
    /// Values on a regular grid over `[lo, hi]`, multilinear interpolation.
    Sampled {
        lo: Vec<f64>,
        hi: Vec<f64>,
        shape: Vec<usize>,
        values: Vec<f64>,
    },
}

impl Profile {
    pub fn eval(&self, xbar: &[f64]) -> f64 {
        match self {
            Profile::Expr(e) => e.eval(xbar),
            Profile::Sampled {
                lo,
                hi,
                shape,
                values,
            } => {
                let d = shape.len();
                let mut base = 0usize;
                let mut frac = vec![0.0; d];
                let mut strides = vec![1usize; d];
                for i in (0..d.saturating_sub(1)).rev() {
                    strides[i] = strides[i + 1] * shape[i + 1];
                }
                for i in 0..d {
                    let n = shape[i];
                    let s = ((xbar[i] - lo[i]) / (hi[i] - lo[i]) * (n - 1) as f64)
                        .clamp(0.0, (n - 1) as f64);
                    let k = (s.floor() as usize).min(n.saturating_sub(2));
                    frac[i] = s - k as f64;
                    base += k * strides[i];
                }
                let mut acc = 0.0;
                for corner in 0..(1usize << d) {
                    let mut w = 1.0;
                    let mut idx = base;
                    for i in 0..d {
                        if corner >> i & 1 == 1 {
                            w *= frac[i];
                            idx += strides[i];
                        } else {
                            w *= 1.0 - frac[i];
                        }
                    }
                    if w != 0.0 {
                        acc += w * values[idx];
                    }
                }
                acc
            }
        }
    }
}

/// Subgraph `{(x̄, t) : x̄ in G, 0 < t < scale * φ(x̄)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDomain {
    pub base: BaseRegion,
    pub profile: Profile,
    #[serde(default = "one")]
    pub scale: f64,
    pub gamma: f64,
    pub holder_constant: f64,
    pub k_lo: f64,
    pub k_hi: f64,
}

fn one() -> f64 {
    1.0
}

impl GraphDomain {
    /// Piecewise linear profile over `(0, width)` with `teeth` valleys at
    /// height `lo` between peaks at height `hi`; Lipschitz (γ = 1).
    pub fn sawtooth(width: f64, teeth: usize, lo: f64, hi: f64) -> Result<GraphDomain> {
        if !(width > 0.0 && teeth >= 1 && lo > 0.0 && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "sawtooth needs width > 0, teeth >= 1 and 0 < lo < hi, got {width}, {teeth}, {lo}, {hi}"
            )));
        }
        let nodes = 2 * teeth + 1;
        let values = (0..nodes).map(|k| if k % 2 == 0 { hi } else { lo }).collect();
        Ok(GraphDomain {
            base: BaseRegion::Box {
                lo: vec![0.0],
                hi: vec![width],
            },
            profile: Profile::Sampled {
                lo: vec![0.0],
                hi: vec![width],
                shape: vec![nodes],
                values,
            },
            scale: 1.0,
            gamma: 1.0,
            holder_constant: (hi - lo) * (2 * teeth) as f64 / width,
            k_lo: lo,
            k_hi: hi,
        })
    }

    pub fn height(&self, xbar: &[f64]) -> f64 {
        self.scale * self.profile.eval(xbar)
    }

    /// Largest sampled Hölder quotient `|φ(a)-φ(b)| / |a-b|^γ` of the scaled
    /// profile, over a regular grid with `per_axis` points per axis.
    pub fn sampled_holder_quotient(&self, per_axis: usize) -> f64 {
        let bb = self.base.bbox();
        let d = bb.dim();
        let n = per_axis.max(2);
        let mut pts = Vec::new();
        let total = n.pow(d as u32);
        for lin in 0..total {
            let mut p = vec![0.0; d];
            let mut r = lin;
            for i in (0..d).rev() {
                let k = r % n;
                r /= n;
                p[i] = bb.lo[i] + (bb.hi[i] - bb.lo[i]) * (k as f64 + 0.5) / n as f64;
            }
            if self.base.contains(&p) {
                let v = self.height(&p);
                pts.push((p, v));
            }
        }
        let mut q: f64 = 0.0;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let r = dist(&pts[i].0, &pts[j].0);
                if r > 0.0 {
                    q = q.max((pts[i].1 - pts[j].1).abs() / r.powf(self.gamma));
                }
            }
        }
        q
    }
}

/// Serializable description of a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// Open axis-aligned box; an interval in 1D.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Open Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    Graph(GraphDomain),
    /// `{(x, y) : |y| < 1, |y|^γ < x < 1}` with `y` in R^(dim-1).
    Cusp { dim: usize, gamma: f64 },
    /// `{p in (lo, hi) : expr(p) < 0}`; distances come from a distance
    /// transform at `resolution`.
    Implicit {
        expr: Expr,
        lo: Vec<f64>,
        hi: Vec<f64>,
        resolution: f64,
        #[serde(default)]
        anchor: Option<Vec<f64>>,
    },
}

/// Coarse classification carried along with rasters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainTag {
    Box,
    Ball,
    Graph { gamma: f64 },
    Cusp { gamma: f64 },
    Implicit,
}

struct DistanceField {
    raster: Raster,
    inside: Vec<f64>,
    outside: Vec<f64>,
}

/// An immutable open set with membership and boundary-distance queries.
pub struct Domain {
    spec: DomainSpec,
    id: String,
    bbox: BoundingBox,
    field: OnceLock<Result<DistanceField>>,
    rasters: Mutex<HashMap<u64, Arc<Raster>>>,
}

impl Clone for Domain {
    fn clone(&self) -> Self {
        Domain::new(self.spec.clone()).expect("spec already validated")
    }
}

impl std::fmt::Debug for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Domain")
            .field("id", &self.id)
            .field("spec", &self.spec)
            .finish()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_dim(n: usize) -> Result<()> {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "dimension must be 1, 2 or 3, got {n}"
        )))
    }
}

fn check_box(lo: &[f64], hi: &[f64]) -> Result<()> {
    if lo.len() != hi.len() {
        return Err(Error::DimensionMismatch {
            expected: lo.len(),
            got: hi.len(),
        });
    }
    if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "box needs finite lo < hi, got {lo:?} {hi:?}"
        )));
    }
    Ok(())
}

const CURVE_SAMPLES: usize = 96;
const GRAPH_SAMPLES: usize = 768;

impl Domain {
    pub fn new(spec: DomainSpec) -> Result<Domain> {
        let bbox = match &spec {
            DomainSpec::Box { lo, hi } => {
                check_dim(lo.len())?;
                check_box(lo, hi)?;
                BoundingBox {
                    lo: lo.clone(),
                    hi: hi.clone(),
                }
            }
            DomainSpec::Ball { center, radius } => {
                check_dim(center.len())?;
                if !(*radius > 0.0) {
                    return Err(Error::InvalidParameter("ball radius must be positive".into()));
                }
                BoundingBox {
                    lo: center.iter().map(|c| c - radius).collect(),
                    hi: center.iter().map(|c| c + radius).collect(),
                }
            }
            DomainSpec::Graph(g) => {
                check_dim(g.base.dim() + 1)?;
                if let BaseRegion::Box { lo, hi } = &g.base {
                    check_box(lo, hi)?;
                }
                if !(g.gamma > 0.0 && g.gamma <= 1.0) {
                    return Err(Error::InvalidParameter("graph gamma must be in (0, 1]".into()));
                }
                if !(g.k_lo > 0.0 && g.k_lo <= g.k_hi) || !(g.scale > 0.0) {
                    return Err(Error::InvalidParameter(
                        "graph needs 0 < k_lo <= k_hi and positive scale".into(),
                    ));
                }
                if let Profile::Expr(e) = &g.profile {
                    if e.arity() > g.base.dim() {
                        return Err(Error::Expression(format!(
                            "profile {e} uses more than {} variables",
                            g.base.dim()
                        )));
                    }
                }
                let mut b = g.base.bbox();
                b.lo.push(0.0);
                b.hi.push(g.k_hi * g.scale);
                b
            }
            DomainSpec::Cusp { dim, gamma } => {
                check_dim(*dim)?;
                if *dim < 2 || !(*gamma > 0.0 && *gamma <= 1.0) {
                    return Err(Error::InvalidParameter(
                        "cusp needs dim >= 2 and gamma in (0, 1]".into(),
                    ));
                }
                let mut lo = vec![-1.0; *dim];
                let mut hi = vec![1.0; *dim];
                lo[0] = 0.0;
                hi[0] = 1.0;
                BoundingBox { lo, hi }
            }
            DomainSpec::Implicit {
                expr,
                lo,
                hi,
                resolution,
                ..
            } => {
                check_dim(lo.len())?;
                check_box(lo, hi)?;
                if expr.arity() > lo.len() {
                    return Err(Error::Expression(format!(
                        "implicit expression {expr} uses more than {} variables",
                        lo.len()
                    )));
                }
                if !(*resolution > 0.0) {
                    return Err(Error::InvalidParameter("resolution must be positive".into()));
                }
                BoundingBox {
                    lo: lo.clone(),
                    hi: hi.clone(),
                }
            }
        };
        let canonical = serde_json::to_string(&spec).expect("spec serializes");
        let id = hex::encode(Sha256::digest(canonical.as_bytes()))[..16].to_string();
        Ok(Domain {
            spec,
            id,
            bbox,
            field: OnceLock::new(),
            rasters: Mutex::new(HashMap::new()),
        })
    }

    pub fn unit_square() -> Domain {
        Domain::new(DomainSpec::Box {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        })
        .unwrap()
    }

    pub fn unit_interval() -> Domain {
        Domain::new(DomainSpec::Box {
            lo: vec![0.0],
            hi: vec![1.0],
        })
        .unwrap()
    }

    pub fn unit_disc() -> Domain {
        Domain::new(DomainSpec::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        })
        .unwrap()
    }

    pub fn cusp(dim: usize, gamma: f64) -> Result<Domain> {
        Domain::new(DomainSpec::Cusp { dim, gamma })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    /// Stable content hash of the spec.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn tag(&self) -> DomainTag {
        match &self.spec {
            DomainSpec::Box { .. } => DomainTag::Box,
            DomainSpec::Ball { .. } => DomainTag::Ball,
            DomainSpec::Graph(g) => DomainTag::Graph { gamma: g.gamma },
            DomainSpec::Cusp { gamma, .. } => DomainTag::Cusp { gamma: *gamma },
            DomainSpec::Implicit { .. } => DomainTag::Implicit,
        }
    }

    pub fn as_graph(&self) -> Option<&GraphDomain> {
        match &self.spec {
            DomainSpec::Graph(g) => Some(g),
            _ => None,
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        match &self.spec {
            DomainSpec::Box { lo, hi } => (0..lo.len()).all(|i| p[i] > lo[i] && p[i] < hi[i]),
            DomainSpec::Ball { center, radius } => dist(p, center) < *radius,
            DomainSpec::Graph(g) => {
                let n = p.len() - 1;
                g.base.contains(&p[..n]) && p[n] > 0.0 && p[n] < g.height(&p[..n])
            }
            DomainSpec::Cusp { gamma, .. } => {
                let rho = p[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                rho < 1.0 && rho.powf(*gamma) < p[0] && p[0] < 1.0
            }
            DomainSpec::Implicit { expr, lo, hi, .. } => {
                (0..lo.len()).all(|i| p[i] > lo[i] && p[i] < hi[i]) && expr.eval(p) < 0.0
            }
        }
    }

    /// Upper bound on the error of `boundary_distance`: 0 for closed forms,
    /// one cell diagonal when a distance transform is used.
    pub fn distance_error(&self) -> f64 {
        match self.field_resolution() {
            Some(h) => h * (self.dim() as f64).sqrt(),
            None => 0.0,
        }
    }

    fn field_resolution(&self) -> Option<f64> {
        match &self.spec {
            DomainSpec::Implicit { resolution, .. } => Some(*resolution),
            DomainSpec::Graph(g) if g.base.dim() >= 2 => Some(self.bbox.max_extent() / 128.0),
            _ => None,
        }
    }

    /// Distance from `p` (inside or outside) to the boundary.
    pub fn boundary_distance(&self, p: &[f64]) -> f64 {
        match &self.spec {
            DomainSpec::Box { lo, hi } => {
                if self.contains(p) {
                    (0..lo.len())
                        .map(|i| (p[i] - lo[i]).min(hi[i] - p[i]))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    let inside_slab = (0..lo.len()).all(|i| p[i] >= lo[i] && p[i] <= hi[i]);
                    if inside_slab {
                        0.0
                    } else {
                        (0..lo.len())
                            .map(|i| (lo[i] - p[i]).max(0.0).max(p[i] - hi[i]))
                            .map(|v| v * v)
                            .sum::<f64>()
                            .sqrt()
                    }
                }
            }
            DomainSpec::Ball { center, radius } => (dist(p, center) - radius).abs(),
            DomainSpec::Cusp { gamma, .. } => {
                let rho = p[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                let q = [p[0], rho];
                let inv = 1.0 / gamma;
                let curve = curve_dist2(q, |t| [t, t.powf(inv)], 0.0, 1.0, CURVE_SAMPLES, 3);
                let wall = segment_dist2(q, [1.0, 0.0], [1.0, 1.0]);
                curve.min(wall).sqrt()
            }
            DomainSpec::Graph(g) if g.base.dim() == 1 => {
                let (a, b) = match &g.base {
                    BaseRegion::Box { lo, hi } => (lo[0], hi[0]),
                    BaseRegion::Disc { center, radius } => (center[0] - radius, center[0] + radius),
                };
                let q = [p[0], p[1]];
                let top = curve_dist2(q, |t| [t, g.height(&[t])], a, b, GRAPH_SAMPLES, 4);
                let ha = g.height(&[a]);
                let hb = g.height(&[b]);
                let d2 = top
                    .min(segment_dist2(q, [a, 0.0], [b, 0.0]))
                    .min(segment_dist2(q, [a, 0.0], [a, ha]))
                    .min(segment_dist2(q, [b, 0.0], [b, hb]));
                d2.sqrt()
            }
            _ => self.field_distance(p),
        }
    }

    /// `d(x)` for a point of the domain.
    pub fn distance_to_boundary(&self, p: &[f64]) -> Result<f64> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        if !self.contains(p) {
            return Err(Error::OutsideDomain { point: p.to_vec() });
        }
        Ok(self.boundary_distance(p))
    }

    fn field(&self) -> &Result<DistanceField> {
        self.field.get_or_init(|| {
            let h = self.field_resolution().expect("field domains have a resolution");
            let raster = Raster::build(self, h)?;
            let inside = edt_inside(&raster);
            let outside = edt_outside(&raster);
            Ok(DistanceField {
                raster,
                inside,
                outside,
            })
        })
    }

    fn field_distance(&self, p: &[f64]) -> f64 {
        let f = match self.field() {
            Ok(f) => f,
            Err(_) => return 0.0,
        };
        let g = &f.raster.grid;
        let mut lin = 0usize;
        for i in 0..g.dims.len() {
            let k = ((p[i] - g.origin[i]) / g.h).floor();
            if k < 0.0 || k >= g.dims[i] as f64 {
                // outside the grid: distance to the grid box plus the
                // outside-transform value at the nearest grid cell
                let q: Vec<f64> = (0..g.dims.len())
                    .map(|j| {
                        p[j].clamp(
                            g.origin[j] + 0.5 * g.h,
                            g.origin[j] + (g.dims[j] as f64 - 0.5) * g.h,
                        )
                    })
                    .collect();
                return dist(p, &q) + self.field_distance(&q);
            }
            lin = lin * g.dims[i] + k as usize;
        }
        match f.raster.cell_at(lin) {
            Some(c) => f.inside[c],
            None => f.outside[lin],
        }
    }

    /// Point used to pick the connected component when rasterizing.
    pub fn anchor(&self) -> Vec<f64> {
        match &self.spec {
            DomainSpec::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            DomainSpec::Ball { center, .. } => center.clone(),
            DomainSpec::Graph(g) => {
                let mut c = g.base.center();
                let t = 0.5 * g.height(&c);
                c.push(t);
                c
            }
            DomainSpec::Cusp { dim, .. } => {
                let mut p = vec![0.0; *dim];
                p[0] = 0.75;
                p
            }
            DomainSpec::Implicit { anchor, lo, hi, .. } => anchor
                .clone()
                .unwrap_or_else(|| lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect()),
        }
    }

    /// Closed-form measure when available.
    pub fn exact_measure(&self) -> Option<f64> {
        match &self.spec {
            DomainSpec::Box { .. } => Some(self.bbox.volume()),
            DomainSpec::Ball { radius, center } => Some(ball_volume(center.len()) * radius.powi(center.len() as i32)),
            DomainSpec::Cusp { dim, gamma } => {
                let k = (*dim - 1) as f64 / gamma;
                Some(ball_volume(dim - 1) / (1.0 + k))
            }
            _ => None,
        }
    }

    /// Raster at cell size `h`, cached per `h`.
    pub fn rasterize(&self, h: f64) -> Result<Arc<Raster>> {
        let key = h.to_bits();
        if let Some(r) = self.rasters.lock().unwrap().get(&key) {
            return Ok(r.clone());
        }
        let r = Arc::new(Raster::build(self, h)?);
        self.rasters.lock().unwrap().insert(key, r.clone());
        Ok(r)
    }

    /// Evenly spaced points on the boundary of a 2D box, for deformation
    /// depth checks. Empty for other kinds.
    pub fn boundary_samples(&self, per_side: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        if let DomainSpec::Box { lo, hi } = &self.spec {
            if lo.len() == 2 {
                for k in 0..per_side {
                    let s = k as f64 / per_side as f64;
                    let x = lo[0] + s * (hi[0] - lo[0]);
                    let y = lo[1] + s * (hi[1] - lo[1]);
                    out.push(vec![x, lo[1]]);
                    out.push(vec![hi[0], y]);
                    out.push(vec![hi[0] - s * (hi[0] - lo[0]), hi[1]]);
                    out.push(vec![lo[0], hi[1] - s * (hi[1] - lo[1])]);
                }
            }
        }
        out
    }
}

/// Volume of the unit ball in R^n.
pub fn ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => ball_volume(n - 2) * 2.0 * PI / n as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_and_interval_distances() {
        let sq = Domain::unit_square();
        assert_eq!(sq.distance_to_boundary(&[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(sq.distance_to_boundary(&[0.1, 0.7]).unwrap(), 0.1 as f64);
        assert!(matches!(
            sq.distance_to_boundary(&[1.5, 0.5]),
            Err(Error::OutsideDomain { .. })
        ));
        assert_eq!(sq.boundary_distance(&[1.5, 0.5]), 0.5);
        let iv = Domain::unit_interval();
        assert_eq!(iv.distance_to_boundary(&[0.25]).unwrap(), 0.25);
    }

    fn cusp_brute(p: [f64; 2]) -> f64 {
        // dense polyline over the full planar boundary
        let n = 100_000;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            for s in [-1.0, 1.0] {
                let q = [t, s * t * t];
                best = best.min(((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt());
            }
            let y = -1.0 + 2.0 * t;
            best = best.min(((1.0 - p[0]).powi(2) + (y - p[1]).powi(2)).sqrt());
        }
        best
    }

    #[test]
    fn cusp_distance_matches_polyline() {
        let c = Domain::cusp(2, 0.5).unwrap();
        for p in [[0.5, 0.0], [0.3, 0.05], [0.9, -0.5], [0.05, 0.001], [0.7, 0.45]] {
            let d = c.distance_to_boundary(&p).unwrap();
            let b = cusp_brute(p);
            assert!((d - b).abs() < 1e-6, "{p:?}: {d} vs {b}");
        }
        // outside points too
        assert!((c.boundary_distance(&[0.2, 0.5]) - cusp_brute([0.2, 0.5])).abs() < 1e-6);
    }

    #[test]
    fn cusp_membership_and_measure() {
        let c = Domain::cusp(2, 0.5).unwrap();
        assert!(c.contains(&[0.5, 0.2]));
        assert!(!c.contains(&[0.5, 0.3]));
        assert!((c.exact_measure().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let c3 = Domain::cusp(3, 1.0).unwrap();
        assert!((c3.exact_measure().unwrap() - PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn graph_domain_distance_and_holder() {
        let spec: DomainSpec = serde_json::from_str(
            r#"{"kind":"graph","base":{"kind":"box","lo":[0],"hi":[1]},
                "profile":"1 + 0.1*abs(x - 0.5)","gamma":1,"holder_constant":0.1,
                "k_lo":1,"k_hi":1.05}"#,
        )
        .unwrap();
        let d = Domain::new(spec).unwrap();
        assert!(d.contains(&[0.5, 0.99]));
        assert!(!d.contains(&[0.5, 1.01]));
        assert!((d.distance_to_boundary(&[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-12);
        let g = d.as_graph().unwrap();
        assert!(g.sampled_holder_quotient(50) <= 0.1 + 1e-12);
    }

    #[test]
    fn sampled_profile_interpolates() {
        let p = Profile::Sampled {
            lo: vec![0.0],
            hi: vec![1.0],
            shape: vec![3],
            values: vec![1.0, 2.0, 1.0],
        };
        assert_eq!(p.eval(&[0.25]), 1.5);
        assert_eq!(p.eval(&[1.0]), 1.0);
    }

    #[test]
    fn spec_rejects_unknown_keys_and_ids_are_stable() {
        let bad = serde_json::from_str::<DomainSpec>(r#"{"kind":"box","lo":[0],"hi":[1],"hii":2}"#);
        assert!(bad.is_err());
        let bad = serde_json::from_str::<DomainSpec>(
            r#"{"kind":"graph","base":{"kind":"box","lo":[0],"hi":[1]},"profile":"1","gamma":1,
                "holder_constant":0,"k_lo":1,"k_hi":1,"typo":3}"#,
        );
        assert!(bad.is_err());
        assert_eq!(Domain::unit_square().id(), Domain::unit_square().id());
        assert_ne!(Domain::unit_square().id(), Domain::unit_disc().id());
    }

    #[test]
    fn implicit_disc_distance_is_raster_accurate() {
        let spec = DomainSpec::Implicit {
            expr: Expr::parse("x^2 + y^2 - 0.64").unwrap(),
            lo: vec![-1.0, -1.0],
            hi: vec![1.0, 1.0],
            resolution: 1.0 / 64.0,
            anchor: None,
        };
        let d = Domain::new(spec).unwrap();
        let err = d.distance_error();
        for p in [[0.0, 0.0], [0.5, 0.1], [-0.3, 0.6]] {
            let exact = 0.8 - (p[0] * p[0] + p[1] * p[1] as f64).sqrt();
            assert!((d.distance_to_boundary(&p).unwrap() - exact).abs() <= err);
        }
        let exact_out = (0.9f64 * 0.9 + 0.0).sqrt() - 0.8;
        assert!((d.boundary_distance(&[0.9, 0.0]) - exact_out).abs() <= err);
    }
}
