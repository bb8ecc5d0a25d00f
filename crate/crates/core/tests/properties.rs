//! Invariants over random inputs.

use eqdiff::bundle::horizontal_lift;
use eqdiff::diffeo::{noise_split, xi_flow};
use eqdiff::geometry::{Manifold, Sphere};
use eqdiff::group::MatrixGroup;
use eqdiff::linalg;
use eqdiff::sde::sample_brownian;
use eqdiff::systems;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn vec3() -> impl Strategy<Value = DVector<f64>> {
    prop::array::uniform3(-2.0..2.0f64)
        .prop_filter("away from the origin", |v| v.iter().map(|c| c * c).sum::<f64>() > 0.1)
        .prop_map(|v| DVector::from_column_slice(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sphere_retraction_is_idempotent(v in vec3()) {
        let m = Sphere::new(3);
        let x = m.retract(&v).unwrap();
        prop_assert!(m.constraint(&x).norm() < 1e-14);
        prop_assert!((m.retract(&x).unwrap() - &x).norm() < 1e-15);
        let p = m.projector(&x);
        prop_assert!((&p * &p - &p).norm() < 1e-13);
        prop_assert!((&p - p.transpose()).norm() < 1e-14);
        prop_assert!((&p * &x).norm() < 1e-13);
    }

    #[test]
    fn polar_factor_is_orthogonal(entries in prop::array::uniform9(-1.0..1.0f64)) {
        let a = DMatrix::from_column_slice(3, 3, &entries) + DMatrix::identity(3, 3) * 2.0;
        let q = linalg::polar(&a);
        prop_assert!((q.transpose() * &q - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn so3_exponentials_stay_in_the_group(c in prop::array::uniform3(-3.0..3.0f64)) {
        let g = MatrixGroup::so(3);
        let e = g.exp(&g.element(&DVector::from_column_slice(&c)));
        prop_assert!(g.residual(&e) < 1e-12);
    }

    #[test]
    fn coarsening_preserves_path_values(seed in any::<u64>(), factor in prop::sample::select(vec![1usize, 2, 4, 8])) {
        let path = sample_brownian(2, 0.064, 1e-3, seed, 0).unwrap();
        let coarse = path.coarsen(factor).unwrap();
        let (fine_v, coarse_v) = (path.values(), coarse.values());
        for (k, v) in coarse_v.iter().enumerate() {
            prop_assert!((v - &fine_v[k * factor]).norm() < 1e-14);
        }
    }

    #[test]
    fn sphere_symbol_has_constant_rank(v in vec3()) {
        let sys = systems::s2_gradient();
        let x = sys.manifold().retract(&v).unwrap();
        let sym = sys.symbol_at(&x).unwrap();
        prop_assert_eq!(sym.rank, 2);
        let s = sym.sigma();
        prop_assert!((&s - s.transpose()).norm() < 1e-14);
        let eig = s.clone().symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&l| l > -1e-12));
        prop_assert_eq!(linalg::rank(&s, 1e-8), 2);
    }

    #[test]
    fn horizontal_lifts_project_and_commute_with_the_action(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let bs = systems::s2_frames(&mut rng).unwrap();
        let bundle = bs.bundle();
        let u = bs.sample(&mut rng);
        let x = bundle.project(&u);
        let v = bs.base().sample_e(&x, &mut rng);
        let h = horizontal_lift(&bs, &u, &v).unwrap();
        prop_assert!((bundle.tpi() * &h - &v).norm() < 1e-10);
        let g = bs.group().sample(&mut rng);
        let hg = horizontal_lift(&bs, &bundle.right_act(&u, &g), &v).unwrap();
        prop_assert!((bundle.right_action_matrix(&g) * h - hg).norm() < 1e-9 * (1.0 + v.norm()));
    }

    #[test]
    fn noise_split_reconstructs_every_driver(seed in any::<u64>()) {
        let sys = systems::s2_gradient();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x0 = sys.manifold().sample(&mut rng);
        let path = sample_brownian(3, 0.1, 1e-3, seed, 1).unwrap();
        let base = xi_flow(&sys, &x0, &[], &path).unwrap().base_path();
        let split = noise_split(&sys, &base, &path).unwrap();
        prop_assert!(split.reconstruction_defect(&path) < 1e-12);
        prop_assert!(split.orthogonality_defect() < 1e-8);
        prop_assert!(split.kernel_defect(&sys, &base) < 1e-4);
    }
}
