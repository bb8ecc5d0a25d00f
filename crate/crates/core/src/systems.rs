//! Concrete Hörmander systems and the test-function library used by the
//! scenarios.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::bundle::{BundleSystem, FrameBundle, PrincipalBundle, TrivialBundle};
use crate::error::Result;
use crate::geometry::fields::{
    ConstantForm, ExactForm, FieldRef, FnFieldMap, OneFormRef, Polynomial, ScalarRef, ScaledForm, Trig,
};
use crate::geometry::spaces::{FlatTorus, Sphere};
use crate::group::MatrixGroup;
use crate::hormander::HormanderSystem;
use crate::linalg;

/// `[v]_x`, the matrix of `w -> v x w` in `R^3`.
pub fn hat(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0])
}

/// Gradient fields of the coordinate functions, `X(x) e = e - <x, e> x`.
pub fn sphere_gradient_fields(ambient: usize) -> FieldRef {
    let n = ambient;
    FnFieldMap::new(n, n, move |x| DMatrix::identity(n, n) - x * x.transpose())
        .with_derivative(|x, v| -(v * x.transpose() + x * v.transpose()))
        .with_second_derivative(|_, v, w| -(w * v.transpose() + v * w.transpose()))
        .shared()
}

/// Rotation fields `X(x) e = e x x` on `S^2`.
pub fn sphere_killing_fields() -> FieldRef {
    FnFieldMap::new(3, 3, |x| -hat(x))
        .with_derivative(|_, v| -hat(v))
        .with_second_derivative(|_, _, _| DMatrix::zeros(3, 3))
        .shared()
}

/// Rotation drift `x -> rate * J x` on `S^1`.
pub fn circle_rotation_drift(rate: f64) -> FieldRef {
    let j = DMatrix::from_row_slice(2, 2, &[0.0, -rate, rate, 0.0]);
    let jd = j.clone();
    FnFieldMap::new(2, 1, move |x| DMatrix::from_column_slice(2, 1, (&j * x).as_slice()))
        .with_derivative(move |_, v| DMatrix::from_column_slice(2, 1, (&jd * v).as_slice()))
        .with_second_derivative(|_, _, _| DMatrix::zeros(2, 1))
        .shared()
}

/// `S^2` with the gradient system (`m = 3`, rank 2, no drift); generator
/// `1/2 Laplacian`.
pub fn s2_gradient() -> HormanderSystem {
    HormanderSystem::new(Sphere::shared(3), sphere_gradient_fields(3), FnFieldMap::zero(3, 1).shared(), 2)
        .expect("valid system")
}

/// `S^2` with the rotation (Killing) system; same generator as
/// [`s2_gradient`] but an isometric flow.
pub fn s2_killing() -> HormanderSystem {
    HormanderSystem::new(Sphere::shared(3), sphere_killing_fields(), FnFieldMap::zero(3, 1).shared(), 2)
        .expect("valid system")
}

/// `S^1` in `R^2` with the gradient system (`m = 2`, rank 1) and a rotation
/// drift of the given rate.
pub fn s1_rank1(drift_rate: f64) -> HormanderSystem {
    HormanderSystem::new(Sphere::shared(2), sphere_gradient_fields(2), circle_rotation_drift(drift_rate), 1)
        .expect("valid system")
}

/// Flat torus `T^2` with `X^1 = d_1`, `X^2 = d_2`.
pub fn torus_flat() -> HormanderSystem {
    HormanderSystem::new(
        FlatTorus::shared(2),
        FnFieldMap::constant(DMatrix::identity(2, 2)).shared(),
        FnFieldMap::zero(2, 1).shared(),
        2,
    )
    .expect("valid system")
}

/// Flat torus with `X^1 = d_1` and `X^2 = 0` (`m = 2`, rank 1).
pub fn torus_rank1() -> HormanderSystem {
    HormanderSystem::new(
        FlatTorus::shared(2),
        FnFieldMap::constant(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).shared(),
        FnFieldMap::zero(2, 1).shared(),
        1,
    )
    .expect("valid system")
}

/// Torus with a non-parallel field: `X^1 = d_1`, `X^2 = d_2`,
/// `X^3 = s sin(x_1) d_2` (`m = 3`, rank 2).
pub fn torus_shear(s: f64) -> HormanderSystem {
    let fields = FnFieldMap::new(2, 3, move |x| DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, s * x[0].sin()]))
        .with_derivative(move |x, v| {
            let mut d = DMatrix::zeros(2, 3);
            d[(1, 2)] = s * x[0].cos() * v[0];
            d
        })
        .with_second_derivative(move |x, v, w| {
            let mut d = DMatrix::zeros(2, 3);
            d[(1, 2)] = -s * x[0].sin() * v[0] * w[0];
            d
        });
    HormanderSystem::new(FlatTorus::shared(2), fields.shared(), FnFieldMap::zero(2, 1).shared(), 2).expect("valid system")
}

/// `GL(S^2)` with the derivative-flow generator of [`s2_gradient`].
pub fn s2_frames(rng: &mut dyn RngCore) -> Result<BundleSystem> {
    FrameBundle::shared(Sphere::shared(3)).derivative_flow(&s2_gradient(), rng)
}

/// `GL(S^2)` with the derivative-flow generator of [`s2_killing`], whose
/// flow preserves orthonormal frames.
pub fn s2_killing_frames(rng: &mut dyn RngCore) -> Result<BundleSystem> {
    FrameBundle::shared(Sphere::shared(3)).derivative_flow(&s2_killing(), rng)
}

/// `GL(T^2)` with the derivative flow of [`torus_flat`].
pub fn torus_frames(rng: &mut dyn RngCore) -> Result<BundleSystem> {
    FrameBundle::shared(FlatTorus::shared(2)).derivative_flow(&torus_flat(), rng)
}

/// [`trivial_bundle_so2_with`] at coupling 0.8, vertical amplitude 1 and
/// vertical drift 0.3.
pub fn trivial_bundle_so2(rng: &mut dyn RngCore) -> Result<BundleSystem> {
    trivial_bundle_so2_with(0.8, 1.0, 0.3, rng)
}

/// `T^2 x SO(2)` over [`torus_rank1`] with fields
/// `X~^1 = (d_1, c(x) g A)`, `X~^2 = (0, a(x) g A)` and drift
/// `(0, v(x) g A)`, where `A` spans `so(2)`,
/// `c = coupling sin(x_1 + 2 x_2)`, `a = vertical (1 + 0.4 cos x_2)` and
/// `v = drift (1 + 0.5 sin x_1)`.
pub fn trivial_bundle_so2_with(coupling: f64, vertical: f64, drift: f64, rng: &mut dyn RngCore) -> Result<BundleSystem> {
    let group = MatrixGroup::so(2);
    let a_gen = group.basis()[0].clone();
    let bundle = TrivialBundle::shared(FlatTorus::shared(2), group);
    let np = bundle.total().ambient_dim();

    let c = move |x: &DVector<f64>| coupling * (x[0] + 2.0 * x[1]).sin();
    let dc = move |x: &DVector<f64>, d: &DVector<f64>| coupling * (x[0] + 2.0 * x[1]).cos() * (d[0] + 2.0 * d[1]);
    let a = move |x: &DVector<f64>| vertical * (1.0 + 0.4 * x[1].cos());
    let da = move |x: &DVector<f64>, d: &DVector<f64>| -vertical * 0.4 * x[1].sin() * d[1];
    let v = move |x: &DVector<f64>| drift * (1.0 + 0.5 * x[0].sin());
    let dv = move |x: &DVector<f64>, d: &DVector<f64>| drift * 0.5 * x[0].cos() * d[0];

    let split = |u: &DVector<f64>| (u.rows(0, 2).into_owned(), linalg::unvec(&u.as_slice()[2..], 2, 2));
    let (ga, gd) = (a_gen.clone(), a_gen.clone());
    let fields = FnFieldMap::new(np, 2, move |u| {
        let (x, g) = split(u);
        let ga = linalg::vec_of(&(&g * &ga));
        let mut m = DMatrix::zeros(np, 2);
        m[(0, 0)] = 1.0;
        m.view_mut((2, 0), (4, 1)).copy_from(&(&ga * c(&x)));
        m.view_mut((2, 1), (4, 1)).copy_from(&(&ga * a(&x)));
        m
    })
    .with_derivative(move |u, d| {
        let (x, g) = split(u);
        let (dx, dg) = split(d);
        let ga = linalg::vec_of(&(&g * &gd));
        let dga = linalg::vec_of(&(&dg * &gd));
        let mut m = DMatrix::zeros(np, 2);
        m.view_mut((2, 0), (4, 1)).copy_from(&(&ga * dc(&x, &dx) + &dga * c(&x)));
        m.view_mut((2, 1), (4, 1)).copy_from(&(&ga * da(&x, &dx) + &dga * a(&x)));
        m
    })
    .shared();
    let (ha, hd) = (a_gen.clone(), a_gen);
    let drift_field = FnFieldMap::new(np, 1, move |u| {
        let (x, g) = split(u);
        let mut m = DMatrix::zeros(np, 1);
        m.view_mut((2, 0), (4, 1)).copy_from(&(linalg::vec_of(&(&g * &ha)) * v(&x)));
        m
    })
    .with_derivative(move |u, d| {
        let (x, g) = split(u);
        let (dx, dg) = split(d);
        let mut m = DMatrix::zeros(np, 1);
        let col = linalg::vec_of(&(&g * &hd)) * dv(&x, &dx) + linalg::vec_of(&(&dg * &hd)) * v(&x);
        m.view_mut((2, 0), (4, 1)).copy_from(&col);
        m
    })
    .shared();
    let system = HormanderSystem::new(bundle.total().clone(), fields, drift_field, 2)?;
    BundleSystem::new(bundle, system, torus_rank1(), rng)
}

/// Coordinate polynomials of degree at most three plus one trigonometric
/// function, for embedded spheres.
pub fn sphere_test_functions(ambient: usize) -> Vec<ScalarRef> {
    let n = ambient;
    let mut out: Vec<ScalarRef> = Vec::new();
    for i in 0..n {
        out.push(Arc::new(Polynomial::coordinate(n, i)));
    }
    for i in 0..n {
        out.push(Arc::new(Polynomial::new(n).term(1.0, &[(i, 1), ((i + 1) % n, 1)])));
    }
    out.push(Arc::new(Polynomial::new(n).term(1.0, &[(0, 2)]).term(-0.5, &[(n - 1, 2)])));
    out.push(Arc::new(Polynomial::new(n).term(1.0, &[(0, 2), (n - 1, 1)]).term(0.3, &[(1, 3)])));
    if n >= 3 {
        out.push(Arc::new(Polynomial::new(n).term(1.0, &[(0, 1), (1, 1), (2, 1)])));
    }
    let wave = DVector::from_fn(n, |i, _| 1.0 + 0.5 * i as f64);
    out.push(Arc::new(Trig { amplitude: 1.0, wave, phase: 0.3 }));
    out
}

/// Periodic trigonometric functions for the flat 2-torus.
pub fn torus_test_functions() -> Vec<ScalarRef> {
    let t = |a: f64, k1: f64, k2: f64, ph: f64| -> ScalarRef {
        Arc::new(Trig { amplitude: a, wave: DVector::from_column_slice(&[k1, k2]), phase: ph })
    };
    vec![
        t(1.0, 1.0, 0.0, 0.0),
        t(1.0, 0.0, 1.0, 0.5 * PI),
        t(0.7, 1.0, 1.0, 0.2),
        t(1.3, 2.0, -1.0, 1.1),
        t(0.5, 0.0, 3.0, -0.4),
    ]
}

/// Coordinate one-forms, weighted coordinate one-forms and exact forms.
pub fn sphere_test_one_forms(ambient: usize) -> Vec<OneFormRef> {
    let n = ambient;
    let mut out: Vec<OneFormRef> = Vec::new();
    for k in 0..n {
        out.push(Arc::new(ConstantForm::coordinate(n, k)));
    }
    let fs = sphere_test_functions(n);
    out.push(Arc::new(ScaledForm(fs[1].clone(), Arc::new(ConstantForm::coordinate(n, 0)))));
    out.push(Arc::new(ScaledForm(fs[n].clone(), Arc::new(ConstantForm::coordinate(n, n - 1)))));
    out.push(Arc::new(ExactForm(fs[2 * n + 1].clone())));
    out
}

pub fn torus_test_one_forms() -> Vec<OneFormRef> {
    let fs = torus_test_functions();
    vec![
        Arc::new(ConstantForm::coordinate(2, 0)),
        Arc::new(ConstantForm::coordinate(2, 1)),
        Arc::new(ScaledForm(fs[0].clone(), Arc::new(ConstantForm::coordinate(2, 1)))),
        Arc::new(ExactForm(fs[2].clone())),
    ]
}
