use approx::assert_abs_diff_eq;
use hamrom::basis::{complex_svd_basis, cotangent_lift_basis, SnapshotSet};
use hamrom::deim::{deim_indices, pair_indices, DeimOperator, Pairing};
use hamrom::matrix::DenseMatrix;
use hamrom::models::{GridSpec, HamiltonianModel, NlsModel, ParameterPoint, WaveModel};
use hamrom::svd::{left_singular_vectors, truncated_svd};
use hamrom::symplectic::{
    apply_j, check_symplectic, omega, sqr_decompose, symplectic_inverse, GramSchmidtOptions, SymplecticBasis,
};
use proptest::collection::vec;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix<f64>> {
    vec(-1.0..1.0f64, rows * cols).prop_map(move |d| DenseMatrix::from_col_major(rows, cols, d).unwrap())
}

/// `(n, k, candidates)` with `k <= n` random candidate vectors in `R^{2n}`.
fn enrichment_case() -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
    (2usize..=8)
        .prop_flat_map(|n| (Just(n), 1..=n))
        .prop_flat_map(|(n, k)| (Just(n), vec(vec(-1.0..1.0f64, 2 * n), k)))
}

fn enriched(n: usize, zs: &[Vec<f64>]) -> Option<SymplecticBasis<f64>> {
    let mut a = SymplecticBasis::empty(n);
    for z in zs {
        a.enrich_in_place(z, &GramSchmidtOptions::default()).ok()?;
    }
    Some(a)
}

fn eye_residual(m: &DenseMatrix<f64>) -> f64 {
    m.sub(&DenseMatrix::identity(m.rows())).unwrap().frobenius_norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn j_is_orthogonal_and_skew(v in vec(-10.0..10.0f64, 2..=16usize).prop_filter("even", |v| v.len() % 2 == 0)) {
        let jv = apply_j(&v, false).unwrap();
        let back = apply_j(&jv, true).unwrap();
        for (a, b) in v.iter().zip(&back) {
            prop_assert_eq!(a, b);
        }
        let twice = apply_j(&jv, false).unwrap();
        for (a, b) in v.iter().zip(&twice) {
            prop_assert_eq!(*a, -b);
        }
    }

    #[test]
    fn omega_is_antisymmetric((u, v) in (1usize..=8).prop_flat_map(|n| (vec(-1.0..1.0f64, 2 * n), vec(-1.0..1.0f64, 2 * n)))) {
        let a = omega(&u, &v).unwrap();
        let b = omega(&v, &u).unwrap();
        prop_assert!((a + b).abs() <= 1e-14);
        prop_assert!(omega(&u, &u).unwrap().abs() <= 1e-14);
        let jv = apply_j(&v, false).unwrap();
        let direct: f64 = u.iter().zip(&jv).map(|(x, y)| x * y).sum();
        prop_assert!((a - direct).abs() <= 1e-14);
    }

    #[test]
    fn enriched_bases_are_orthosymplectic((n, zs) in enrichment_case()) {
        let Some(a) = enriched(n, &zs) else { return Ok(()) };
        prop_assert!(a.symplectic_residual() <= 1e-10);
        prop_assert!(a.orthonormality_residual() <= 1e-10);
        let m = a.matrix();
        let inv = symplectic_inverse(&m).unwrap();
        prop_assert!(eye_residual(&inv.matmul(&m).unwrap()) <= 1e-10);
        prop_assert!(check_symplectic(&inv.transpose()).unwrap() <= 1e-10);
    }

    #[test]
    fn symplectic_projection_is_idempotent((n, zs) in enrichment_case(), seed in vec(-1.0..1.0f64, 16)) {
        let Some(a) = enriched(n, &zs) else { return Ok(()) };
        let z: Vec<f64> = (0..2 * n).map(|i| seed[i % seed.len()] * (i as f64 + 1.0)).collect();
        let p = a.project(&z).unwrap();
        let pp = a.project(&p).unwrap();
        for (x, y) in p.iter().zip(&pp) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
        }
        // reduce is a left inverse of lift
        let y: Vec<f64> = (0..2 * a.k()).map(|i| seed[i % seed.len()]).collect();
        let back = a.reduce(&a.lift(&y).unwrap()).unwrap();
        for (x, w) in y.iter().zip(&back) {
            prop_assert!((x - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn svd_matches_frobenius_oracles((s, k) in (1usize..=7, 1usize..=30).prop_flat_map(|(m, n)| (matrix(m, n), Just(m.min(n))))) {
        let r = truncated_svd(&s, k).unwrap();
        // ‖S‖_F² = Σσ², ‖SᵀS‖_F² = Σσ⁴
        let f2: f64 = r.singular_values.iter().map(|x| x * x).sum();
        let f4: f64 = r.singular_values.iter().map(|x| x.powi(4)).sum();
        let gram = s.tr_matmul(&s).unwrap().frobenius_norm().powi(2);
        prop_assert!((f2 - s.frobenius_norm().powi(2)).abs() <= 1e-10 * (1.0 + f2));
        prop_assert!((f4 - gram).abs() <= 1e-9 * (1.0 + gram));
        prop_assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(r.left.orthonormality_residual() <= 1e-10);
        prop_assert!(r.right.orthonormality_residual() <= 1e-10);
        let err = r.reconstruct().sub(&s).unwrap().max_abs();
        prop_assert!(err <= 1e-10);
        let (sv, _) = left_singular_vectors(&s, k).unwrap();
        for (a, b) in sv.iter().zip(&r.singular_values) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn deim_interpolates_its_basis(u in matrix(16, 4)) {
        let idx = match deim_indices(&u) {
            Ok(idx) => idx,
            Err(_) => return Ok(()),
        };
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), idx.len());
        let op = DeimOperator::new(u.clone(), &DenseMatrix::identity(16), Pairing::None).unwrap();
        if op.condition_number() > 1e8 {
            return Ok(());
        }
        for j in 0..4 {
            let rec = op.reconstruct(&op.sample(u.col(j)).unwrap()).unwrap();
            for (a, b) in rec.iter().zip(u.col(j)) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn paired_indices_are_closed(idx in vec(0usize..20, 0..12)) {
        let p = pair_indices(&idx, 10);
        for &i in &p {
            let partner = if i < 10 { i + 10 } else { i - 10 };
            prop_assert!(p.contains(&partner));
        }
        for i in idx {
            prop_assert!(p.contains(&i));
        }
    }

    #[test]
    fn sqr_reconstructs(m in matrix(8, 8)) {
        let Ok(f) = sqr_decompose(&m) else { return Ok(()) };
        let rel = f.a.matmul(&f.r).unwrap().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        prop_assert!(rel <= 1e-8);
        prop_assert!(check_symplectic(&f.a).unwrap() <= 1e-8);
    }

    #[test]
    fn snapshot_bases_are_orthosymplectic(s in matrix(12, 40), k in 1usize..=6) {
        let set = SnapshotSet::from_states(s);
        for a in [cotangent_lift_basis(&set, k).unwrap(), complex_svd_basis(&set, k).unwrap()] {
            prop_assert_eq!(a.k(), k);
            prop_assert!(a.symplectic_residual() <= 1e-10);
            prop_assert!(a.orthonormality_residual() <= 1e-10);
        }
    }

    #[test]
    fn model_gradients_match_energy(z in vec(-1.0..1.0f64, 24), w in 0.1..1.0f64) {
        let grid = GridSpec::new(1.0, 12, 0.01, 1.0).unwrap();
        let wave = WaveModel::new(grid.clone(), 0.1).unwrap();
        let nls = NlsModel::new(grid, 1.0).unwrap();
        let cases: [(&dyn HamiltonianModel<f64>, ParameterPoint<f64>); 2] = [
            (&wave, ParameterPoint::new(vec![w, 0.5, 0.3, 0.9])),
            (&nls, ParameterPoint::scalar(w)),
        ];
        for (model, omega) in cases {
            let g = model.gradient(&z, &omega).unwrap();
            let weight = model.energy_weight();
            let h = 1e-6;
            for i in 0..z.len() {
                let (mut up, mut down) = (z.clone(), z.clone());
                up[i] += h;
                down[i] -= h;
                let fd = (model.hamiltonian(&up, &omega).unwrap() - model.hamiltonian(&down, &omega).unwrap()) / (2.0 * h);
                assert_abs_diff_eq!(fd / weight, g[i], epsilon = 1e-5 * (1.0 + g[i].abs()));
            }
        }
    }
}
