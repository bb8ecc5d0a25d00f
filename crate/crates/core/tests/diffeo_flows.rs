//! Flows of point clouds, noise splitting and the composite identity.

use eqdiff::bundle::{decompose, Completion, FrameBundle};
use eqdiff::diffeo::{batch_split_correlation, composite_check, diffeo_study, theta_flow, xi_flow, GridChart};
use eqdiff::frame_flow::RefinementConfig;
use eqdiff::geometry::Sphere;
use eqdiff::sde::sample_brownian;
use eqdiff::systems;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn circle(a: f64) -> DVector<f64> {
    DVector::from_column_slice(&[a.cos(), a.sin()])
}

#[test]
fn circle_composite_with_frames() {
    let sys = systems::s1_rank1(0.7);
    let mut rng = ChaCha20Rng::seed_from_u64(41);
    let dec = decompose(&FrameBundle::shared(Sphere::shared(2)).derivative_flow(&sys, &mut rng).unwrap(), Completion::Transport, &mut rng)
        .unwrap();
    let x0 = circle(1.1);
    let u0 = dec.bundle_system().bundle().join(&x0, &DMatrix::from_column_slice(2, 1, &[-1.1f64.sin(), 1.1f64.cos()]));
    for stream in 0..3 {
        let path = sample_brownian(2, 0.5, 1e-3, 41, stream).unwrap();
        let r = composite_check(&sys, GridChart::Circle { points: 256 }, &x0, &path, Some((&dec, &u0))).unwrap();
        assert!(r.base_point < 1e-10 && r.frame.unwrap() < 1e-10, "{r:?}");
        assert!(r.fixed_point_passes() && r.fibre_identity < 1e-10, "{r:?}");
    }
    let cfg = RefinementConfig { t_end: 0.4, dt_finest: 1e-3, levels: 4, paths: 8, seed: 42, orthonormal_starts: true };
    let st = diffeo_study(&sys, &dec, &x0, &u0, &cfg).unwrap();
    assert!(st.lift.passes(0.8) && st.reconstruction.passes(0.8) && st.glm.passes(0.8), "{st:?}");
}

#[test]
fn flat_torus_composite_is_exact() {
    let sys = systems::torus_flat();
    let x0 = DVector::from_column_slice(&[1.0, 2.0]);
    let path = sample_brownian(2, 0.5, 1e-3, 43, 0).unwrap();
    let r = composite_check(&sys, GridChart::Torus { side: 24 }, &x0, &path, None).unwrap();
    assert!(r.fixed_point < 1e-10 && r.fibre_identity < 1e-10, "{r:?}");
}

#[test]
fn sphere_theta_lifts_xi_at_the_base_point() {
    let sys = systems::s2_gradient();
    let m = sys.manifold();
    let x0 = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
    let mut rng = ChaCha20Rng::seed_from_u64(44);
    let cloud: Vec<_> = (0..20).map(|_| m.sample(&mut rng)).collect();
    let path = sample_brownian(3, 0.5, 1e-3, 44, 0).unwrap();
    let xi = xi_flow(&sys, &x0, &cloud, &path).unwrap();
    let theta = theta_flow(&sys, &x0, &cloud, &path).unwrap();
    for (a, b) in xi.base_path().iter().zip(theta.base_path()) {
        assert!(m.distance(a, &b) < 1e-12);
    }
    for (a, b) in xi.final_images().iter().zip(theta.final_images()) {
        assert!(m.constraint(&b).norm() < 1e-12);
        assert!(m.distance(a, &b) > 0.0);
    }
}

#[test]
fn circle_noise_parts_are_uncorrelated() {
    let sys = systems::s1_rank1(0.7);
    let c = batch_split_correlation(&sys, &circle(0.4), 0.5, 1e-3, 500, 45).unwrap();
    assert!(c.passes(), "{c:?}");
}
