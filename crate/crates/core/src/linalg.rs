//! Envelope (skyline) Cholesky factorization for the shifted stiffness
//! matrix, and small dense helpers.

use crate::error::{Error, Result};
use crate::operator::DiscreteOperator;
use nalgebra::DMatrix;

/// `P (K + σB) P^T = L L^T` with `L` stored row-wise over its envelope.
pub struct EnvelopeCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

/// Cell order for the factorization: grid axes sorted so the axis with the
/// fewest cells varies fastest, which keeps the envelope narrow.
fn best_order(op: &DiscreteOperator) -> Vec<usize> {
    let r = op.raster();
    let nd = r.dim();
    let coords: Vec<Vec<usize>> = (0..op.n()).map(|i| r.coords(i)).collect();
    let mut axes_list: Vec<Vec<usize>> = Vec::new();
    permutations(&mut (0..nd).collect(), 0, &mut axes_list);
    let mut best: Option<(usize, Vec<usize>)> = None;
    for axes in axes_list {
        let mut order: Vec<usize> = (0..op.n()).collect();
        order.sort_by(|&a, &b| {
            axes.iter()
                .map(|&ax| coords[a][ax].cmp(&coords[b][ax]))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let size = envelope_size(op, &order);
        if best.as_ref().map_or(true, |(s, _)| size < *s) {
            best = Some((size, order));
        }
    }
    best.unwrap().1
}

fn permutations(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == v.len() {
        out.push(v.clone());
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, out);
        v.swap(k, i);
    }
}

fn inverse(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

fn envelope_size(op: &DiscreteOperator, perm: &[usize]) -> usize {
    let inv = inverse(perm);
    let k = op.stiffness();
    perm.iter()
        .enumerate()
        .map(|(new, &old)| {
            let f = k.row(old).map(|(j, _)| inv[j]).min().unwrap_or(new).min(new);
            new - f + 1
        })
        .sum()
}

impl EnvelopeCholesky {
    /// Factors `K + shift * B`; `shift > 0` makes the Neumann matrix definite.
    pub fn factor(op: &DiscreteOperator, shift: f64) -> Result<Self> {
        let perm = best_order(op);
        let inv = inverse(&perm);
        let n = op.n();
        let k = op.stiffness();
        let mut first = vec![0usize; n];
        let mut start = vec![0usize; n + 1];
        for (new, &old) in perm.iter().enumerate() {
            first[new] = k.row(old).map(|(j, _)| inv[j]).min().unwrap_or(new).min(new);
            start[new + 1] = start[new] + (new - first[new] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in k.row(old) {
                let jn = inv[j];
                if jn <= new {
                    data[start[new] + (jn - first[new])] += v;
                }
            }
            data[start[new] + (new - first[new])] += shift * op.cell_volume();
        }
        for i in 0..n {
            let fi = first[i];
            let si = start[i];
            for j in fi..i {
                let fj = first[j];
                let sj = start[j];
                let lo = fi.max(fj);
                let mut s = data[si + (j - fi)];
                let a = &data[si + (lo - fi)..si + (j - fi)];
                let b = &data[sj + (lo - fj)..sj + (j - fj)];
                s -= a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                data[si + (j - fi)] = s / data[sj + (j - fj)];
            }
            let row = &data[si..si + (i - fi)];
            let diag = data[si + (i - fi)];
            let d = diag - row.iter().map(|x| x * x).sum::<f64>();
            if !(d > 1e-12 * diag) {
                return Err(Error::NotPositiveDefinite { row: i, pivot: d });
            }
            data[si + (i - fi)] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            n,
            perm,
            first,
            start,
            data,
        })
    }

    pub fn envelope_len(&self) -> usize {
        self.data.len()
    }

    /// Solves `(K + shift B) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            let row = &self.data[si..si + (i - fi)];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / self.data[si + (i - fi)];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            y[i] /= self.data[si + (i - fi)];
            let xi = y[i];
            let row = &self.data[si..si + (i - fi)];
            for (yk, l) in y[fi..i].iter_mut().zip(row) {
                *yk -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn symmetric_eigen_sorted(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Dense `K` of an operator.
pub fn dense_stiffness(op: &DiscreteOperator) -> DMatrix<f64> {
    let n = op.n();
    let k = op.stiffness();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, v) in k.row(i) {
            m[(i, j)] = v;
        }
    }
    m
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y -= alpha * x`
pub fn axpy_sub(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a -= alpha * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    #[test]
    fn solve_matches_dense() {
        let d = Domain::cusp(2, 0.5).unwrap();
        let op = DiscreteOperator::assemble(d.rasterize(1.0 / 24.0).unwrap()).unwrap();
        let shift = 0.7;
        let ch = EnvelopeCholesky::factor(&op, shift).unwrap();
        let n = op.n();
        let b: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let x = ch.solve(&b);
        let mut ax = op.stiffness_times(&x);
        for i in 0..n {
            ax[i] += shift * op.cell_volume() * x[i];
        }
        let err: f64 = ax.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn ordering_prefers_short_axis_fastest() {
        // 4 x 40 box: rows along the short axis keep the envelope ~ 4 wide
        let d = Domain::new(crate::geometry::DomainSpec::Box {
            lo: vec![0.0, 0.0],
            hi: vec![4.0, 0.4],
        })
        .unwrap();
        let op = DiscreteOperator::assemble(d.rasterize(0.1).unwrap()).unwrap();
        let ch = EnvelopeCholesky::factor(&op, 1.0).unwrap();
        assert!(ch.envelope_len() <= op.n() * 5);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let op = DiscreteOperator::assemble(Domain::unit_interval().rasterize(0.1).unwrap()).unwrap();
        assert!(matches!(
            EnvelopeCholesky::factor(&op, 0.0),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
