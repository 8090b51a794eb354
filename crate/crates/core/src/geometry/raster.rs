use super::{Domain, DomainTag};
use crate::error::{Error, Result};
use std::fmt::Write as _;

const NONE: u32 = u32::MAX;

/// Regular grid of cells over a box; cell `k` along an axis has center
/// `origin + (k + 1/2) h`. Linear indices are row-major, axis 0 slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub origin: Vec<f64>,
    pub h: f64,
    pub dims: Vec<usize>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    pub fn coords(&self, mut lin: usize) -> Vec<usize> {
        let mut c = vec![0; self.dims.len()];
        for i in (0..self.dims.len()).rev() {
            c[i] = lin % self.dims[i];
            lin /= self.dims[i];
        }
        c
    }

    pub fn linear(&self, c: &[usize]) -> usize {
        c.iter().zip(&self.dims).fold(0, |acc, (k, n)| acc * n + k)
    }

    pub fn center(&self, lin: usize) -> Vec<f64> {
        self.coords(lin)
            .iter()
            .zip(&self.origin)
            .map(|(&k, o)| o + (k as f64 + 0.5) * self.h)
            .collect()
    }
}

/// Connected set of inside cells on a grid.
#[derive(Clone, Debug)]
pub struct Raster {
    pub grid: Grid,
    cells: Vec<usize>,
    lookup: Vec<u32>,
    domain_id: String,
    tag: DomainTag,
}

impl Raster {
    /// Marks cells whose centers lie in the domain and keeps the component
    /// containing the domain's anchor point.
    pub fn build(domain: &Domain, h: f64) -> Result<Raster> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("cell size must be positive, got {h}")));
        }
        let bb = domain.bbox();
        let dims: Vec<usize> = bb
            .lo
            .iter()
            .zip(&bb.hi)
            .map(|(a, b)| (((b - a) / h) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        let total: usize = dims.iter().product();
        if total > 200_000_000 {
            return Err(Error::InvalidParameter(format!(
                "raster with {total} grid cells is too large"
            )));
        }
        let grid = Grid {
            origin: bb.lo.clone(),
            h,
            dims,
        };
        let mask: Vec<bool> = (0..total).map(|lin| domain.contains(&grid.center(lin))).collect();
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyRaster { h });
        }
        let anchor = domain.anchor();
        if !domain.contains(&anchor) {
            return Err(Error::Disconnected(format!(
                "anchor point {anchor:?} is not inside the domain"
            )));
        }
        // the cell containing the anchor, or the nearest inside cell
        let direct: Option<usize> = {
            let ks: Vec<f64> = (0..grid.dim())
                .map(|i| ((anchor[i] - grid.origin[i]) / h).floor())
                .collect();
            if ks.iter().zip(&grid.dims).all(|(&k, &n)| k >= 0.0 && k < n as f64) {
                let c: Vec<usize> = ks.iter().map(|&k| k as usize).collect();
                Some(grid.linear(&c)).filter(|&lin| mask[lin])
            } else {
                None
            }
        };
        let mut best = (f64::INFINITY, direct.unwrap_or(0));
        for (lin, &m) in mask.iter().enumerate() {
            if direct.is_some() {
                break;
            }
            if m {
                let c = grid.center(lin);
                let d: f64 = c.iter().zip(&anchor).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, lin);
                }
            }
        }
        let keep = component(&grid, &mask, best.1);
        Raster::from_mask(grid, &keep, domain.id().to_string(), domain.tag())
    }

    /// Builds a raster from an explicit mask; all marked cells must form one
    /// face-connected component.
    pub fn from_mask(grid: Grid, mask: &[bool], domain_id: String, tag: DomainTag) -> Result<Raster> {
        let cells: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        if cells.is_empty() {
            return Err(Error::EmptyRaster { h: grid.h });
        }
        let mut lookup = vec![NONE; mask.len()];
        for (i, &lin) in cells.iter().enumerate() {
            lookup[lin] = i as u32;
        }
        let r = Raster {
            grid,
            cells,
            lookup,
            domain_id,
            tag,
        };
        let reached = component(&r.grid, mask, r.cells[0]).iter().filter(|&&b| b).count();
        if reached != r.cells.len() {
            return Err(Error::Disconnected(format!(
                "{} of {} cells are not face-connected to the rest",
                r.cells.len() - reached,
                r.cells.len()
            )));
        }
        Ok(r)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid.h.powi(self.dim() as i32)
    }

    pub fn measure(&self) -> f64 {
        self.n_cells() as f64 * self.cell_volume()
    }

    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    pub fn tag(&self) -> DomainTag {
        self.tag
    }

    /// Grid linear index of each cell, ascending.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn cell_at(&self, lin: usize) -> Option<usize> {
        match self.lookup.get(lin) {
            Some(&v) if v != NONE => Some(v as usize),
            _ => None,
        }
    }

    pub fn mask(&self) -> Vec<bool> {
        self.lookup.iter().map(|&v| v != NONE).collect()
    }

    pub fn center(&self, cell: usize) -> Vec<f64> {
        self.grid.center(self.cells[cell])
    }

    pub fn coords(&self, cell: usize) -> Vec<usize> {
        self.grid.coords(self.cells[cell])
    }

    /// Calls `f(j)` for every inside face neighbor `j` of `cell`.
    pub fn for_each_neighbor(&self, cell: usize, mut f: impl FnMut(usize)) {
        let lin = self.cells[cell];
        let c = self.grid.coords(lin);
        let strides = self.grid.strides();
        for ax in 0..c.len() {
            if c[ax] > 0 {
                if let Some(j) = self.cell_at(lin - strides[ax]) {
                    f(j);
                }
            }
            if c[ax] + 1 < self.grid.dims[ax] {
                if let Some(j) = self.cell_at(lin + strides[ax]) {
                    f(j);
                }
            }
        }
    }

    /// All interior faces `(i, j)` with `i < j`.
    pub fn faces(&self) -> Vec<(u32, u32)> {
        let strides = self.grid.strides();
        let mut out = Vec::with_capacity(self.n_cells() * self.dim());
        for (i, &lin) in self.cells.iter().enumerate() {
            let c = self.grid.coords(lin);
            for ax in 0..c.len() {
                if c[ax] + 1 < self.grid.dims[ax] {
                    if let Some(j) = self.cell_at(lin + strides[ax]) {
                        out.push((i as u32, j as u32));
                    }
                }
            }
        }
        out
    }

    /// Sub-raster of the cells with `keep[i]`, on the same grid, together
    /// with the map from sub-raster cells to cells of `self`.
    pub fn subset(&self, keep: &[bool]) -> Result<(Raster, Vec<usize>)> {
        if keep.len() != self.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cells(),
                got: keep.len(),
            });
        }
        let mut mask = vec![false; self.grid.len()];
        let mut map = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                mask[self.cells[i]] = true;
                map.push(i);
            }
        }
        let r = Raster::from_mask(self.grid.clone(), &mask, self.domain_id.clone(), self.tag)?;
        Ok((r, map))
    }

    /// Plain-text greymap (P2). Without `values` inside cells are white; with
    /// values they are scaled linearly to 1..255 and outside cells are 0.
    /// One-dimensional rasters become a single row.
    pub fn to_pgm(&self, values: Option<&[f64]>) -> String {
        let (w, hgt) = match self.grid.dims.as_slice() {
            [n] => (*n, 1),
            [nx, ny] => (*nx, *ny),
            [nx, ny, _] => (*nx, *ny),
            _ => (0, 0),
        };
        let (lo, hi) = match values {
            Some(v) => v
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x))),
            None => (0.0, 1.0),
        };
        let mut out = String::new();
        let _ = writeln!(out, "P2\n{w} {hgt}\n255");
        for row in (0..hgt).rev() {
            let mut line = Vec::with_capacity(w);
            for col in 0..w {
                let lin = match self.grid.dims.len() {
                    1 => col,
                    2 => self.grid.linear(&[col, row]),
                    _ => self.grid.linear(&[col, row, self.grid.dims[2] / 2]),
                };
                let v = match (self.cell_at(lin), values) {
                    (None, _) => 0,
                    (Some(_), None) => 255,
                    (Some(c), Some(vals)) => {
                        let s = if hi > lo { (vals[c] - lo) / (hi - lo) } else { 1.0 };
                        1 + (s * 254.0).round() as u32
                    }
                };
                line.push(v.to_string());
            }
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

/// Face-connected component of `mask` containing grid cell `start`.
fn component(grid: &Grid, mask: &[bool], start: usize) -> Vec<bool> {
    let strides = grid.strides();
    let mut seen = vec![false; mask.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(lin) = stack.pop() {
        let c = grid.coords(lin);
        for ax in 0..c.len() {
            if c[ax] > 0 {
                let n = lin - strides[ax];
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
            if c[ax] + 1 < grid.dims[ax] {
                let n = lin + strides[ax];
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    #[test]
    fn square_and_interval_cell_counts() {
        let r = Domain::unit_square().rasterize(1.0 / 64.0).unwrap();
        assert_eq!(r.n_cells(), 4096);
        assert!((r.measure() - 1.0).abs() < 1e-12);
        let r = Domain::unit_interval().rasterize(0.01).unwrap();
        assert_eq!(r.n_cells(), 100);
    }

    #[test]
    fn cusp_measure_matches_quadrature() {
        let c = Domain::cusp(2, 0.5).unwrap();
        let r = c.rasterize(1.0 / 256.0).unwrap();
        // midpoint quadrature of the width 2 x^2 of the vertical slices
        let n = 100_000;
        let q: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                2.0 * x * x
            })
            .sum::<f64>()
            / n as f64;
        assert!((r.measure() - q).abs() / q < 0.01, "{} vs {q}", r.measure());
    }

    #[test]
    fn keeps_anchor_component_only() {
        // two discs joined by nothing: only the anchored one survives
        let d = Domain::new(DomainSpec::Implicit {
            expr: crate::expr::Expr::parse("min((x+0.5)^2 + y^2 - 0.09, (x-0.5)^2 + y^2 - 0.09)")
                .unwrap(),
            lo: vec![-1.0, -1.0],
            hi: vec![1.0, 1.0],
            resolution: 0.05,
            anchor: Some(vec![0.5, 0.0]),
        })
        .unwrap();
        let r = d.rasterize(0.02).unwrap();
        assert!(r.cells().iter().all(|&lin| r.grid.center(lin)[0] > 0.0));
    }

    #[test]
    fn subset_rejects_disconnection() {
        let r = Domain::unit_interval().rasterize(0.1).unwrap();
        let mut keep = vec![true; 10];
        keep[5] = false;
        assert!(matches!(r.subset(&keep), Err(Error::Disconnected(_))));
        keep[5] = true;
        keep[0] = false;
        let (s, map) = r.subset(&keep).unwrap();
        assert_eq!(s.n_cells(), 9);
        assert_eq!(map[0], 1);
    }

    #[test]
    fn pgm_header() {
        let r = Domain::unit_square().rasterize(0.25).unwrap();
        let p = r.to_pgm(None);
        assert!(p.starts_with("P2\n4 4\n255\n255 255 255 255"));
    }
}
