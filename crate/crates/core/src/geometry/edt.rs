//! Exact Euclidean distance transform (lower envelope of parabolas).

use super::Raster;

/// One-dimensional squared distance transform of `f` in place.
fn dt1(f: &mut [f64], v: &mut [usize], z: &mut [f64], d: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        if f[v[k]].is_infinite() {
            v[k] = q;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if f[v[0]].is_infinite() {
        return;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
    f.copy_from_slice(&d[..n]);
}

/// Squared distance (in cell units) from every cell of a padded grid to the
/// nearest cell with `site = true`.
fn transform(dims: &[usize], site: &[bool]) -> Vec<f64> {
    let mut f: Vec<f64> = site.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let nd = dims.len();
    let mut strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let maxn = *dims.iter().max().unwrap();
    let mut line = vec![0.0; maxn];
    let (mut v, mut z, mut d) = (vec![0usize; maxn], vec![0.0; maxn + 1], vec![0.0; maxn]);
    for ax in 0..nd {
        let n = dims[ax];
        let total: usize = dims.iter().product();
        for start in 0..total {
            // visit each line once: starting points have coordinate 0 on `ax`
            if (start / strides[ax]) % n != 0 {
                continue;
            }
            for k in 0..n {
                line[k] = f[start + k * strides[ax]];
            }
            dt1(&mut line[..n], &mut v, &mut z, &mut d);
            for k in 0..n {
                f[start + k * strides[ax]] = line[k];
            }
        }
    }
    f
}

fn padded(raster: &Raster) -> (Vec<usize>, Vec<bool>, Vec<usize>) {
    let g = &raster.grid;
    let pdims: Vec<usize> = g.dims.iter().map(|n| n + 2).collect();
    let total: usize = pdims.iter().product();
    let mut inside = vec![false; total];
    let mut map = vec![0usize; g.len()];
    for lin in 0..g.len() {
        let c = g.coords(lin);
        let p = c.iter().zip(&pdims).fold(0, |acc, (k, n)| acc * n + k + 1);
        map[lin] = p;
    }
    for &lin in raster.cells() {
        inside[map[lin]] = true;
    }
    (pdims, inside, map)
}

/// Boundary distance estimate for every raster cell: distance from the cell
/// center to the nearest outside cell center, minus half a cell.
pub fn edt_inside(raster: &Raster) -> Vec<f64> {
    let (pdims, inside, map) = padded(raster);
    let outside: Vec<bool> = inside.iter().map(|&b| !b).collect();
    let sq = transform(&pdims, &outside);
    let h = raster.h();
    raster
        .cells()
        .iter()
        .map(|&lin| (sq[map[lin]].sqrt() - 0.5) * h)
        .collect()
}

/// Same estimate for every grid cell outside the raster (indexed by grid
/// linear index; inside cells read 0).
pub fn edt_outside(raster: &Raster) -> Vec<f64> {
    let (pdims, inside, map) = padded(raster);
    let sq = transform(&pdims, &inside);
    let h = raster.h();
    (0..raster.grid.len())
        .map(|lin| {
            if raster.cell_at(lin).is_some() {
                0.0
            } else {
                (sq[map[lin]].sqrt() - 0.5).max(0.0) * h
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    #[test]
    fn square_transform_is_exact_on_aligned_grid() {
        let d = Domain::unit_square();
        let r = d.rasterize(1.0 / 32.0).unwrap();
        let e = edt_inside(&r);
        for (i, v) in e.iter().enumerate() {
            let exact = d.boundary_distance(&r.center(i));
            assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
        }
    }

    #[test]
    fn transform_within_cell_diagonal_on_disc_and_cusp() {
        for (d, h) in [(Domain::unit_disc(), 1.0 / 50.0), (Domain::cusp(2, 0.5).unwrap(), 1.0 / 128.0)] {
            let r = d.rasterize(h).unwrap();
            let e = edt_inside(&r);
            let bound = h * 2f64.sqrt();
            for (i, v) in e.iter().enumerate() {
                let exact = d.boundary_distance(&r.center(i));
                assert!((v - exact).abs() <= bound, "{v} vs {exact}");
            }
        }
    }

    #[test]
    fn brute_force_agreement_small_grid() {
        let d = Domain::unit_disc();
        let r = d.rasterize(0.2).unwrap();
        let e = edt_inside(&r);
        let g = &r.grid;
        for (i, &lin) in r.cells().iter().enumerate() {
            let c = g.coords(lin);
            // nearest outside cell, including the padding ring
            let mut best = f64::INFINITY;
            for a in -1..=(g.dims[0] as i64) {
                for b in -1..=(g.dims[1] as i64) {
                    let inside = a >= 0
                        && b >= 0
                        && (a as usize) < g.dims[0]
                        && (b as usize) < g.dims[1]
                        && r.cell_at(g.linear(&[a as usize, b as usize])).is_some();
                    if !inside {
                        let dx = a as f64 - c[0] as f64;
                        let dy = b as f64 - c[1] as f64;
                        best = best.min((dx * dx + dy * dy).sqrt());
                    }
                }
            }
            assert!((e[i] - (best - 0.5) * 0.2).abs() < 1e-12);
        }
    }
}
