//! Strong orders of the integrators against a fine-grid reference driven
//! by the same increments.

use eqdiff::geometry::fields::FnFieldMap;
use eqdiff::geometry::{FlatTorus, Sphere};
use eqdiff::group::MatrixGroup;
use eqdiff::hormander::HormanderSystem;
use eqdiff::sde::{
    convergence_order, integrate_group, integrate_stratonovich, sample_brownian, strong_error, AlgebraCoefficients,
    BrownianPath,
};
use eqdiff::systems;
use nalgebra::{DMatrix, DVector};

const COARSE: [usize; 4] = [64, 32, 16, 8];

fn dts(fine: f64) -> Vec<f64> {
    COARSE.iter().map(|&s| s as f64 * fine).collect()
}

#[test]
fn torus_drift_only_is_second_order() {
    let drift = FnFieldMap::new(2, 1, |x| DMatrix::from_column_slice(2, 1, &[1.0 + 0.5 * x[1].sin(), x[0].cos()])).shared();
    let sys = HormanderSystem::new(FlatTorus::shared(2), FnFieldMap::zero(2, 1).shared(), drift, 0).unwrap();
    let fine_dt = 1.0 / 2048.0;
    let quiet = BrownianPath::from_increments(fine_dt, vec![DVector::zeros(1); 2048]);
    let x0 = DVector::from_column_slice(&[0.2, 0.7]);
    let reference = integrate_stratonovich(&sys, &x0, &quiet).unwrap();
    let errors: Vec<f64> = COARSE
        .iter()
        .map(|&s| {
            let coarse = integrate_stratonovich(&sys, &x0, &quiet.coarsen(s).unwrap()).unwrap();
            strong_error(sys.manifold().as_ref(), &reference, &coarse).unwrap()
        })
        .collect();
    let order = convergence_order(&dts(fine_dt), &errors).unwrap();
    assert!((order - 2.0).abs() < 0.15, "order {order}, errors {errors:?}");
}

fn sphere_errors(sys: &HormanderSystem, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let m = sys.manifold();
    let fine_dt = 1.0 / 16384.0;
    let coarse = [512, 256, 128, 64];
    let x0 = DVector::from_column_slice(&[0.0, 0.6, 0.8]);
    let mut errors = vec![0.0; coarse.len()];
    let paths = 16;
    for stream in 0..paths {
        let path = sample_brownian(sys.noise_dim(), 0.5, fine_dt, seed, stream).unwrap();
        let reference = integrate_stratonovich(sys, &x0, &path).unwrap();
        for (e, &s) in errors.iter_mut().zip(&coarse) {
            let c = integrate_stratonovich(sys, &x0, &path.coarsen(s).unwrap()).unwrap();
            *e += strong_error(m.as_ref(), &reference, &c).unwrap() / paths as f64;
        }
    }
    (coarse.iter().map(|&s| s as f64 * fine_dt).collect(), errors)
}

#[test]
fn sphere_single_driver_is_first_order() {
    let field = FnFieldMap::new(3, 1, |x| {
        let r = DVector::from_column_slice(&[-x[1], x[0], 0.0]) * (1.0 + 0.3 * x[0]);
        DMatrix::from_column_slice(3, 1, r.as_slice())
    });
    let drift = FnFieldMap::new(3, 1, |x| {
        let e = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let t = &e - x * x[0];
        DMatrix::from_column_slice(3, 1, (t * 0.5).as_slice())
    });
    let sys = HormanderSystem::new(Sphere::shared(3), field.shared(), drift.shared(), 1).unwrap();
    let (dts, errors) = sphere_errors(&sys, 21);
    let order = convergence_order(&dts, &errors).unwrap();
    println!("order {order:.3}");
    assert!(order >= 0.8, "order {order}, errors {errors:?}");
}

#[test]
fn sphere_gradient_noise_is_at_least_half_order() {
    let (dts, errors) = sphere_errors(&systems::s2_gradient(), 23);
    let order = convergence_order(&dts, &errors).unwrap();
    println!("order {order:.3}");
    assert!(order >= 0.4, "order {order}, errors {errors:?}");
}

#[test]
fn abelian_group_path_is_first_order() {
    // d(angle) = (1 + 0.5 cos angle) o dB on SO(2)
    let group = MatrixGroup::so(2);
    let a = group.basis()[0].clone();
    let fine_dt = 1.0 / 4096.0;
    let run = |path: &BrownianPath| {
        let mut coeff = |_: usize, g: &DMatrix<f64>| {
            let c = 1.0 + 0.5 * g[(0, 0)];
            Ok(AlgebraCoefficients { noise: vec![&a * c], drift: DMatrix::zeros(2, 2) })
        };
        integrate_group(&group, &mut coeff, path).unwrap()
    };
    let mut errors = vec![0.0; COARSE.len()];
    let paths = 16;
    for stream in 0..paths {
        let path = sample_brownian(1, 0.5, fine_dt, 22, stream).unwrap();
        let reference = run(&path);
        for (e, &s) in errors.iter_mut().zip(&COARSE) {
            let coarse = run(&path.coarsen(s).unwrap());
            let sup = coarse
                .elements
                .iter()
                .enumerate()
                .map(|(k, g)| (g - &reference.elements[k * s]).norm())
                .fold(0.0, f64::max);
            *e += sup / paths as f64;
        }
    }
    let order = convergence_order(&dts(fine_dt), &errors).unwrap();
    assert!((order - 1.0).abs() < 0.25, "order {order}, errors {errors:?}");
}
