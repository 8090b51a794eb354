//! Collar measure `|{x in Ω : d(x) <= ε}|` and the Minkowski dimension fit.

use super::{Domain, DomainSpec, Raster};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use serde::{Deserialize, Serialize};

/// Cells per collar width required by the counting estimators.
pub const CELLS_PER_COLLAR: f64 = 8.0;

/// Collar measure by cell-center counting on a dyadic grid with
/// `h <= ε/8`. Cells that provably miss the boundary are classified whole,
/// which gives exactly the count of the uniform fine grid.
pub fn collar_measure(domain: &Domain, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("collar width must be positive, got {eps}")));
    }
    if let DomainSpec::Implicit { resolution, .. } = domain.spec() {
        let r = domain.rasterize(*resolution)?;
        let d: Vec<f64> = (0..r.n_cells()).map(|i| domain.boundary_distance(&r.center(i))).collect();
        return collar_measure_raster(&r, &d, eps);
    }
    let bb = domain.bbox();
    let side = bb.max_extent();
    let levels = (CELLS_PER_COLLAR * side / eps).log2().ceil().max(0.0) as u32;
    let n = domain.dim();
    let fine_h = side / 2f64.powi(levels as i32);
    let mut count: u64 = 0;
    let mut stack: Vec<(u32, Vec<u64>)> = vec![(0, vec![0; n])];
    let mut center = vec![0.0; n];
    while let Some((level, idx)) = stack.pop() {
        let s = side / 2f64.powi(level as i32);
        let mut outside_box = false;
        for i in 0..n {
            let lo = bb.lo[i] + idx[i] as f64 * s;
            if lo >= bb.hi[i] {
                outside_box = true;
            }
            center[i] = lo + 0.5 * s;
        }
        if outside_box {
            continue;
        }
        if level == levels {
            if domain.contains(&center) && domain.boundary_distance(&center) <= eps {
                count += 1;
            }
            continue;
        }
        let bd = domain.boundary_distance(&center);
        let r = 0.5 * s * (n as f64).sqrt();
        if bd > r {
            if !domain.contains(&center) || bd - r > eps {
                continue;
            }
            if bd + r <= eps {
                count += 1u64 << ((levels - level) * n as u32);
                continue;
            }
        }
        for child in 0..(1usize << n) {
            let c: Vec<u64> = (0..n).map(|i| 2 * idx[i] + ((child >> i) & 1) as u64).collect();
            stack.push((level + 1, c));
        }
    }
    Ok(count as f64 * fine_h.powi(n as i32))
}

/// Collar measure on an existing raster with per-cell distances `dist`.
/// Refuses rasters coarser than `ε/8`.
pub fn collar_measure_raster(raster: &Raster, dist: &[f64], eps: f64) -> Result<f64> {
    let max = eps / CELLS_PER_COLLAR;
    if raster.h() > max * (1.0 + 1e-12) {
        return Err(Error::ResolutionTooCoarse {
            h: raster.h(),
            eps,
            max,
        });
    }
    if dist.len() != raster.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: raster.n_cells(),
            got: dist.len(),
        });
    }
    Ok(dist.iter().filter(|&&d| d <= eps).count() as f64 * raster.cell_volume())
}

/// `count` points geometrically spaced from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (r * i as f64).exp()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CollarMeasureTable {
    pub eps: Vec<f64>,
    pub measure: Vec<f64>,
    /// `g` in `|collar| ≈ a ε^g`.
    pub exponent: f64,
    pub constant: f64,
    pub fit: LinearFit,
}

pub fn collar_table(domain: &Domain, eps: &[f64]) -> Result<CollarMeasureTable> {
    let mut pairs: Vec<(f64, f64)> = eps
        .iter()
        .map(|&e| collar_measure(domain, e).map(|m| (e, m)))
        .collect::<Result<_>>()?;
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in pairs.windows(2) {
        if w[1].1 < w[0].1 {
            return Err(Error::FitQuality(format!(
                "collar measure decreases from {} at eps {} to {} at eps {}",
                w[0].1, w[0].0, w[1].1, w[1].0
            )));
        }
    }
    if pairs.iter().any(|p| p.1 <= 0.0) {
        return Err(Error::FitQuality("empty collar; refine the eps range".into()));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(CollarMeasureTable {
        eps: pairs.iter().map(|p| p.0).collect(),
        measure: pairs.iter().map(|p| p.1).collect(),
        exponent: fit.slope,
        constant: fit.intercept.exp(),
        fit,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinkowskiEstimate {
    pub estimate: f64,
    pub table: CollarMeasureTable,
}

/// Boundary dimension `N - slope` from the log-log collar fit. Needs at
/// least 6 widths spanning two decades.
pub fn minkowski_dimension(domain: &Domain, eps: &[f64]) -> Result<MinkowskiEstimate> {
    if eps.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "need at least 6 collar widths, got {}",
            eps.len()
        )));
    }
    let lo = eps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eps.iter().copied().fold(0.0, f64::max);
    if hi / lo < 100.0 * (1.0 - 1e-9) {
        return Err(Error::InsufficientData(format!(
            "collar widths span {:.2} decades, need 2",
            (hi / lo).log10()
        )));
    }
    let table = collar_table(domain, eps)?;
    Ok(MinkowskiEstimate {
        estimate: domain.dim() as f64 - table.exponent,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_and_interval_collars() {
        let sq = Domain::unit_square();
        let m = collar_measure(&sq, 0.1).unwrap();
        assert!((m - 0.36).abs() / 0.36 < 0.02, "{m}");
        let iv = Domain::unit_interval();
        let m = collar_measure(&iv, 0.1).unwrap();
        assert!((m - 0.2).abs() / 0.2 < 0.02, "{m}");
    }

    #[test]
    fn adaptive_count_equals_uniform_count() {
        let d = Domain::cusp(2, 0.5).unwrap();
        let eps = 0.05;
        let m = collar_measure(&d, eps).unwrap();
        // uniform grid at the same dyadic resolution
        let levels = (8.0 * 2.0 / eps).log2().ceil() as i32;
        let h = 2.0 / 2f64.powi(levels);
        let mut count = 0u64;
        let nx = (1.0 / h).round() as usize;
        let ny = (2.0 / h).round() as usize;
        for i in 0..nx {
            for j in 0..ny {
                let p = [(i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h];
                if d.contains(&p) && d.boundary_distance(&p) <= eps {
                    count += 1;
                }
            }
        }
        assert_eq!(m, count as f64 * h * h);
    }

    #[test]
    fn raster_variant_refuses_coarse_grids() {
        let d = Domain::unit_square();
        let r = d.rasterize(0.05).unwrap();
        let dist: Vec<f64> = (0..r.n_cells()).map(|i| d.boundary_distance(&r.center(i))).collect();
        assert!(matches!(
            collar_measure_raster(&r, &dist, 0.1),
            Err(Error::ResolutionTooCoarse { .. })
        ));
        let r = d.rasterize(0.0125).unwrap();
        let dist: Vec<f64> = (0..r.n_cells()).map(|i| d.boundary_distance(&r.center(i))).collect();
        let m = collar_measure_raster(&r, &dist, 0.1).unwrap();
        assert!((m - 0.36).abs() < 1e-9);
    }

    #[test]
    fn minkowski_needs_enough_data() {
        let d = Domain::unit_square();
        assert!(minkowski_dimension(&d, &geometric_grid(1e-2, 1e-1, 8)).is_err());
        assert!(minkowski_dimension(&d, &geometric_grid(1e-3, 1e-1, 5)).is_err());
    }

    #[test]
    fn interval_minkowski_is_zero() {
        let d = Domain::unit_interval();
        let est = minkowski_dimension(&d, &geometric_grid(1e-3, 1e-1, 7)).unwrap();
        assert!(est.estimate.abs() < 0.1, "{}", est.estimate);
    }
}
