//! Finite-volume realization of the Neumann form `Q(f) = ∫ |∇f|^2`.
//!
//! Each interior face between inside cells contributes `h^(N-2) (f_i - f_j)^2`;
//! faces to outside cells contribute nothing, which is the natural Neumann
//! condition. The mass matrix is lumped: `B_ii = h^N`.

use crate::error::{Error, Result};
use crate::geometry::Raster;
use std::fmt::Write as _;
use std::sync::Arc;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[row.clone()].binary_search(&j) {
            Ok(k) => self.values[row.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

/// Stiffness `K` and lumped mass `B` on a raster.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    raster: Arc<Raster>,
    stiffness: CsrMatrix,
    weight: f64,
    cell_volume: f64,
}

impl DiscreteOperator {
    pub fn assemble(raster: Arc<Raster>) -> Result<DiscreteOperator> {
        let n = raster.n_cells();
        if n == 1 {
            log::warn!("raster has a single cell; the spectrum is just {{0}}");
        }
        let dim = raster.dim() as i32;
        let h = raster.h();
        let weight = h.powi(dim - 2);
        let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in raster.faces() {
            nbrs[i as usize].push(j as usize);
            nbrs[j as usize].push(i as usize);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, list) in nbrs.iter_mut().enumerate() {
            list.push(i);
            list.sort_unstable();
            let deg = (list.len() - 1) as f64;
            for &j in list.iter() {
                col_idx.push(j);
                values.push(if j == i { deg * weight } else { -weight });
            }
            row_ptr.push(col_idx.len());
        }
        Ok(DiscreteOperator {
            stiffness: CsrMatrix {
                n,
                row_ptr,
                col_idx,
                values,
            },
            weight,
            cell_volume: raster.cell_volume(),
            raster,
        })
    }

    pub fn n(&self) -> usize {
        self.stiffness.n
    }

    pub fn h(&self) -> f64 {
        self.raster.h()
    }

    pub fn dim(&self) -> usize {
        self.raster.dim()
    }

    pub fn raster(&self) -> &Arc<Raster> {
        &self.raster
    }

    pub fn domain_id(&self) -> &str {
        self.raster.domain_id()
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Diagonal of the lumped mass matrix (all equal to `h^N`).
    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn mass(&self) -> Vec<f64> {
        vec![self.cell_volume; self.n()]
    }

    /// Face weight `h^(N-2)`.
    pub fn face_weight(&self) -> f64 {
        self.weight
    }

    pub fn measure(&self) -> f64 {
        self.n() as f64 * self.cell_volume
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// `K f`, evaluated as `w Σ_j (f_i - f_j)` so constants map to exact zeros.
    pub fn apply_stiffness(&self, f: &[f64], out: &mut [f64]) {
        let k = &self.stiffness;
        for i in 0..k.n {
            let fi = f[i];
            let mut acc = 0.0;
            for p in k.row_ptr[i]..k.row_ptr[i + 1] {
                let j = k.col_idx[p];
                if j != i {
                    acc += fi - f[j];
                }
            }
            out[i] = self.weight * acc;
        }
    }

    pub fn stiffness_times(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply_stiffness(f, &mut out);
        out
    }

    /// `Σ_faces h^(N-2) (f_i - f_j)^2`.
    pub fn quadratic_form(&self, f: &[f64]) -> Result<f64> {
        self.check(f)?;
        Ok(self.form_unchecked(f))
    }

    fn form_unchecked(&self, f: &[f64]) -> f64 {
        let k = &self.stiffness;
        let mut acc = 0.0;
        for i in 0..k.n {
            for p in k.row_ptr[i]..k.row_ptr[i + 1] {
                let j = k.col_idx[p];
                if j > i {
                    let d = f[i] - f[j];
                    acc += d * d;
                }
            }
        }
        self.weight * acc
    }

    /// Mass inner product `f^T B g`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.cell_volume * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    /// Discrete `L^q` norm with the lumped mass.
    pub fn lq_norm(&self, f: &[f64], q: f64) -> f64 {
        (self.cell_volume * f.iter().map(|v| v.abs().powf(q)).sum::<f64>()).powf(1.0 / q)
    }

    /// `sqrt(f^T K f + f^T B f)`.
    pub fn sobolev_norm(&self, f: &[f64]) -> Result<f64> {
        self.check(f)?;
        Ok((self.form_unchecked(f) + self.inner(f, f)).sqrt())
    }

    /// Cell-center coordinate along `axis` as a grid function.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.raster.center(i)[axis]).collect()
    }

    /// Stiffness and mass in `row col value` text (1-based), stiffness
    /// first, then a `# mass` line and the mass diagonal.
    pub fn to_coo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# stiffness {} {} {}", self.n(), self.n(), self.stiffness.nnz());
        for i in 0..self.n() {
            for (j, v) in self.stiffness.row(i) {
                let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
            }
        }
        let _ = writeln!(s, "# mass {} {} {}", self.n(), self.n(), self.n());
        for i in 0..self.n() {
            let _ = writeln!(s, "{} {} {:e}", i + 1, i + 1, self.cell_volume);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, DomainSpec};
    use nalgebra::DMatrix;

    fn op(d: &Domain, h: f64) -> DiscreteOperator {
        DiscreteOperator::assemble(d.rasterize(h).unwrap()).unwrap()
    }

    #[test]
    fn interval_matrix_is_neumann_tridiagonal() {
        let o = op(&Domain::unit_interval(), 0.1);
        let k = o.stiffness();
        assert_eq!(k.get(0, 0), 10.0);
        assert_eq!(k.get(1, 1), 20.0);
        assert_eq!(k.get(1, 0), -10.0);
        assert_eq!(k.get(0, 2), 0.0);
        assert!((o.cell_volume() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_annihilates_constants() {
        let d = Domain::cusp(2, 0.5).unwrap();
        let o = op(&d, 1.0 / 32.0);
        let k = o.stiffness();
        for i in 0..k.n {
            for (j, v) in k.row(i) {
                assert_eq!(v, k.get(j, i));
            }
        }
        let ones = vec![1.0; o.n()];
        assert!(o.stiffness_times(&ones).iter().all(|&v| v == 0.0));
        assert_eq!(o.quadratic_form(&ones).unwrap(), 0.0);
    }

    #[test]
    fn two_by_two_square_spectrum() {
        let o = op(&Domain::unit_square(), 0.5);
        let k = o.stiffness();
        let m = DMatrix::from_fn(4, 4, |i, j| k.get(i, j));
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        // K is the 4-cycle Laplacian with face weight 1: {0, 2, 2, 4}
        let want = [0.0, 2.0, 2.0, 4.0];
        for (a, b) in ev.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn form_matches_face_enumeration_on_three_by_three() {
        let d = Domain::new(DomainSpec::Box {
            lo: vec![0.0, 0.0],
            hi: vec![0.3, 0.3],
        })
        .unwrap();
        let o = op(&d, 0.1);
        assert_eq!(o.n(), 9);
        let f: Vec<f64> = (0..9).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect();
        // faces of the 3x3 grid, directly
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let i = a * 3 + b;
                if a < 2 {
                    s += (f[i] - f[i + 3]).powi(2);
                }
                if b < 2 {
                    s += (f[i] - f[i + 1]).powi(2);
                }
            }
        }
        assert!((o.quadratic_form(&f).unwrap() - s).abs() < 1e-14);
        let kf = o.stiffness_times(&f);
        let ftkf: f64 = f.iter().zip(&kf).map(|(a, b)| a * b).sum();
        assert!((ftkf - s).abs() < 1e-13);
        assert!(o.quadratic_form(&f[..3]).is_err());
    }

    #[test]
    fn coordinate_function_norms() {
        let o = op(&Domain::unit_square(), 1.0 / 64.0);
        let x = o.coordinate(0);
        assert!((o.quadratic_form(&x).unwrap() - 1.0).abs() < 2.0 / 64.0);
        let w = o.sobolev_norm(&x).unwrap();
        assert!((w - (4.0f64 / 3.0).sqrt()).abs() / w < 0.02);
        assert!((o.sobolev_norm(&vec![1.0; o.n()]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(o.sobolev_norm(&vec![0.0; o.n()]).unwrap(), 0.0);
    }

    #[test]
    fn form_converges_for_smooth_function() {
        use std::f64::consts::PI;
        let mut errs = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            let o = op(&Domain::unit_square(), h);
            let f: Vec<f64> = (0..o.n())
                .map(|i| {
                    let c = o.raster().center(i);
                    (PI * c[0]).cos() * (PI * c[1]).cos()
                })
                .collect();
            // ∫|∇f|^2 = π^2/2
            errs.push((o.quadratic_form(&f).unwrap() - PI * PI / 2.0).abs());
        }
        assert!(errs[1] < 0.6 * errs[0] && errs[2] < 0.6 * errs[1], "{errs:?}");
    }

    #[test]
    fn coo_export_has_all_entries() {
        let o = op(&Domain::unit_interval(), 0.25);
        let s = o.to_coo();
        assert!(s.starts_with("# stiffness 4 4 10\n1 1 4e0\n"));
        assert_eq!(s.lines().count(), 1 + 10 + 1 + 4);
    }
}
