//! Randomized invariants across geometry, operator, eigensolver, heat and
//! perturbation modules.

use neumann_core::eigen::{lowest_eigenpairs, rayleigh_ritz, Method, SolverOptions};
use neumann_core::geometry::{collar_measure, edt_inside, Domain, DomainSpec, GraphDomain};
use neumann_core::heat::{dense_heat_kernel, kernel_diag_trace, semigroup_apply};
use neumann_core::operator::DiscreteOperator;
use neumann_core::perturbation::collar_removal;
use neumann_core::whitney::{build_whitney, verify_whitney};
use proptest::prelude::*;

fn boxed(a: f64, b: f64) -> Domain {
    Domain::new(DomainSpec::Box {
        lo: vec![0.0, 0.0],
        hi: vec![a, b],
    })
    .unwrap()
}

fn ball(cx: f64, cy: f64, r: f64) -> Domain {
    Domain::new(DomainSpec::Ball {
        center: vec![cx, cy],
        radius: r,
    })
    .unwrap()
}

fn operator(d: &Domain, h: f64) -> DiscreteOperator {
    DiscreteOperator::assemble(d.rasterize(h).unwrap()).unwrap()
}

fn dense() -> SolverOptions {
    SolverOptions {
        method: Method::Dense,
        ..SolverOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn distance_transform_within_cell_diagonal(cx in -1.0f64..1.0, cy in -1.0f64..1.0, r in 0.4f64..1.5, k in 12usize..40) {
        let d = ball(cx, cy, r);
        let h = r / k as f64;
        let raster = d.rasterize(h).unwrap();
        let edt = edt_inside(&raster);
        for (i, e) in edt.iter().enumerate() {
            let exact = d.boundary_distance(&raster.center(i));
            prop_assert!((exact - e).abs() <= h * 2f64.sqrt() + 1e-12, "cell {i}: {exact} vs {e}");
        }
    }

    #[test]
    fn collar_measure_is_monotone(a in 0.5f64..2.0, b in 0.5f64..2.0, e1 in 0.002f64..0.05, f in 1.05f64..3.0) {
        for d in [boxed(a, b), ball(0.0, 0.0, a)] {
            let lo = collar_measure(&d, e1).unwrap();
            let hi = collar_measure(&d, e1 * f).unwrap();
            prop_assert!(lo <= hi * (1.0 + 1e-12), "{lo} > {hi}");
        }
    }

    #[test]
    fn sawtooth_holder_quotient_within_constant(teeth in 1usize..6, lo in 0.2f64..0.6, rise in 0.05f64..0.6, w in 0.5f64..2.0) {
        let g = GraphDomain::sawtooth(w, teeth, lo, lo + rise).unwrap();
        prop_assert!(g.sampled_holder_quotient(400) <= g.holder_constant * (1.0 + 1e-9));
    }

    #[test]
    fn whitney_invariants_on_boxes(a in 0.5f64..2.0, b in 0.5f64..2.0, k_max in 5i32..8) {
        let d = boxed(a, b);
        let cov = build_whitney(&d, k_max).unwrap();
        let rep = verify_whitney(&d, &cov).unwrap();
        prop_assert_eq!(rep.overlaps, 0);
        prop_assert_eq!(rep.separation_violations, 0);
        prop_assert!(rep.count_violations.is_empty());
        prop_assert!(rep.union_measure <= a * b * (1.0 + 1e-12));
        prop_assert!(rep.union_measure >= a * b - rep.truncation_collar);
    }

    #[test]
    fn constants_span_the_null_space(a in 0.5f64..2.0, b in 0.5f64..2.0, k in 6usize..14) {
        let op = operator(&boxed(a, b), a.min(b) / k as f64);
        let kc = op.stiffness_times(&vec![1.0; op.n()]);
        prop_assert!(kc.iter().all(|v| v.abs() < 1e-10));
        let s = op.stiffness();
        for i in (0..op.n()).step_by(7) {
            for (j, v) in s.row(i) {
                prop_assert_eq!(v, s.get(j, i));
            }
        }
        let spec = lowest_eigenpairs(&op, 2, &SolverOptions::default()).unwrap();
        prop_assert!(spec.eigenvalues[0].abs() < 1e-10);
        prop_assert!(spec.eigenvalues[1] > 1e-3);
    }

    #[test]
    fn eigenvectors_are_mass_orthonormal(a in 0.5f64..2.0, b in 0.5f64..2.0) {
        let op = operator(&boxed(a, b), a.min(b) / 16.0);
        let spec = lowest_eigenpairs(&op, 6, &SolverOptions::default()).unwrap();
        for i in 0..spec.len() {
            for j in 0..=i {
                let g = spec.inner(&spec.eigenvectors[i], &spec.eigenvectors[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g - target).abs() < 1e-8, "({i},{j}) = {g}");
            }
        }
    }

    #[test]
    fn ritz_values_never_undercut_eigenvalues(seed in any::<u64>(), k in 1usize..6) {
        let op = operator(&ball(0.0, 0.0, 1.0), 0.125);
        let spec = lowest_eigenpairs(&op, k, &SolverOptions::default()).unwrap();
        let mut state = seed | 1;
        let basis: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..op.n())
                    .map(|_| {
                        state ^= state << 13;
                        state ^= state >> 7;
                        state ^= state << 17;
                        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                    })
                    .collect()
            })
            .collect();
        let rr = rayleigh_ritz(&op, &basis, "random").unwrap();
        for (mu, lam) in rr.mu.iter().zip(&spec.eigenvalues) {
            prop_assert!(*mu >= lam - 1e-8 * (1.0 + lam), "{mu} < {lam}");
        }
    }

    #[test]
    fn scaling_law_on_rescaled_rasters(c in 0.3f64..3.0) {
        let base = lowest_eigenpairs(&operator(&boxed(1.0, 0.7), 0.1), 10, &dense()).unwrap();
        let scaled = lowest_eigenpairs(&operator(&boxed(c, 0.7 * c), 0.1 * c), 10, &dense()).unwrap();
        for (l, s) in base.eigenvalues.iter().zip(&scaled.eigenvalues).skip(1) {
            prop_assert!((s * c * c - l).abs() <= 1e-9 * l);
        }
    }

    #[test]
    fn semigroup_property_and_mass(t in 0.001f64..0.5, s in 0.001f64..0.5, seed in 0usize..1000) {
        let op = operator(&ball(0.0, 0.0, 1.0), 0.2);
        let spec = lowest_eigenpairs(&op, op.n(), &dense()).unwrap();
        let f: Vec<f64> = (0..op.n()).map(|i| (((i + seed) * 2654435761) % 97) as f64 / 97.0 - 0.3).collect();
        let once = semigroup_apply(&spec, &f, t + s).unwrap().values;
        let mid = semigroup_apply(&spec, &f, t).unwrap().values;
        let twice = semigroup_apply(&spec, &mid, s).unwrap().values;
        let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
        let ones = vec![1.0; op.n()];
        let m0 = spec.inner(&f, &ones);
        prop_assert!((spec.inner(&once, &ones) - m0).abs() <= 1e-10 * (1.0 + m0.abs()));
    }

    #[test]
    fn dense_kernel_is_positive(a in 0.5f64..1.5, t in 0.001f64..1.0) {
        let op = operator(&boxed(a, 1.0), a.min(1.0) / 8.0);
        prop_assume!(op.n() <= 200);
        let k = dense_heat_kernel(&op, t).unwrap();
        prop_assert!(k.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn trace_is_decreasing_and_convex(t in 0.01f64..1.0, dt in 0.001f64..0.2) {
        let op = operator(&ball(0.0, 0.0, 1.0), 0.125);
        let spec = lowest_eigenpairs(&op, 40, &SolverOptions::default()).unwrap();
        let z: Vec<f64> = [t, t + dt, t + 2.0 * dt].iter().map(|&x| kernel_diag_trace(&spec, x).unwrap().z).collect();
        prop_assert!(z[0] > z[1] && z[1] > z[2]);
        prop_assert!(z[0] + z[2] >= 2.0 * z[1] * (1.0 - 1e-12));
    }

    #[test]
    fn collar_removal_is_a_subset_of_the_parent(eps in 0.02f64..0.2, which in 0usize..3) {
        let d = match which {
            0 => Domain::unit_square(),
            1 => Domain::unit_disc(),
            _ => Domain::cusp(2, 0.5).unwrap(),
        };
        let h = 1.0 / 64.0;
        let parent = d.rasterize(h).unwrap();
        let c = collar_removal(&d, h, eps).unwrap();
        prop_assert!(c.sub.map.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c.sub.map.iter().all(|&p| p < parent.n_cells()));
        for (i, &p) in c.sub.map.iter().enumerate() {
            prop_assert_eq!(c.sub.raster.center(i), parent.center(p));
            prop_assert!(d.boundary_distance(&parent.center(p)) > eps);
        }
        let removed = (parent.n_cells() - c.sub.raster.n_cells()) as f64 * parent.cell_volume();
        prop_assert!((c.removed_measure - removed).abs() <= 1e-12);
    }
}
