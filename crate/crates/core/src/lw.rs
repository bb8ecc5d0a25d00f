//! The metric on `E` induced by `X` and the LeJan-Watanabe connection
//! `nabla_v U = X(x) d(Y U)(v)`, with its adjoint, torsion, curvature and
//! Ricci trace.
//!
//! Vector fields are closures on ambient coordinates. Curvature uses the
//! extensions `Z^u(y) = X(y) Y_x(u)` for directions in `E_x` and `P(y) u`
//! otherwise.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::calculus::{directional_derivative, directional_derivative_vec_with, FD_STEP};
use crate::hormander::{HormanderSystem, E_MEMBERSHIP_TOL};
use crate::linalg;

/// Coarse step of the curvature stability check.
pub const CURVATURE_COARSE_STEP: f64 = 1e-3;

/// Relative change between the two curvature steps that counts as unstable.
pub const CURVATURE_MAX_CHANGE: f64 = 0.1;

/// Absolute floor below which curvature differences are not considered.
const CURVATURE_FLOOR: f64 = 1e-6;

pub type VectorField<'a> = dyn Fn(&DVector<f64>) -> DVector<f64> + 'a;

/// `<v, w>_x = <Y_x v, Y_x w>` on `E_x`.
#[derive(Clone, Debug)]
pub struct MetricE {
    system: HormanderSystem,
}

impl MetricE {
    pub fn new(system: HormanderSystem) -> Self {
        Self { system }
    }

    pub fn inner(&self, x: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
        let a = self.system.y_map(x, v)?;
        let b = self.system.y_map(x, w)?;
        Ok(a.dot(&b))
    }

    /// Gram matrix of the metric in ambient coordinates, `Y^T Y`.
    pub fn ambient_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let y = self.system.y_matrix(x);
        y.transpose() * y
    }
}

/// One evaluation of `R(u, v) w`.
#[derive(Clone, Debug)]
pub struct CurvatureSample {
    pub base: DVector<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub w: DVector<f64>,
    pub value: DVector<f64>,
    /// Difference between the fine and coarse finite-difference steps.
    pub step_change: f64,
}

fn nan_like(n: usize) -> DVector<f64> {
    DVector::from_element(n, f64::NAN)
}

fn ensure_finite(v: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(Error::Domain { what: format!("non-finite value in {what}"), residual: f64::NAN })
    }
}

/// `nabla_v U` at `x` with finite-difference step `h`.
pub fn lw_covariant_derivative_with(
    system: &HormanderSystem,
    u: &VectorField<'_>,
    x: &DVector<f64>,
    v: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let worst = Cell::new(0.0f64);
    let coeffs = |y: &DVector<f64>| {
        let xm = system.x_matrix(y);
        let uy = u(y);
        let c = linalg::pinv(&xm) * &uy;
        let res = (&xm * &c - &uy).norm() / (1.0 + uy.norm());
        if res.is_nan() {
            worst.set(f64::INFINITY);
        } else {
            worst.set(worst.get().max(res));
        }
        c
    };
    coeffs(x);
    let d = directional_derivative_vec_with(system.manifold().as_ref(), &coeffs, x, v, h)?;
    if worst.get() > E_MEMBERSHIP_TOL {
        return Err(Error::Domain {
            what: "vector field leaves E near the base point".into(),
            residual: worst.get(),
        });
    }
    ensure_finite(system.x_matrix(x) * d, "LW covariant derivative")
}

pub fn lw_covariant_derivative(
    system: &HormanderSystem,
    u: &VectorField<'_>,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    lw_covariant_derivative_with(system, u, x, v, FD_STEP)
}

/// `d/ds V` along the retraction curve through `x` with velocity `w`.
fn derivative_of(
    system: &HormanderSystem,
    field: &VectorField<'_>,
    x: &DVector<f64>,
    w: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    directional_derivative_vec_with(system.manifold().as_ref(), field, x, w, h)
}

/// Lie bracket `[U, V](x) = D_{U(x)} V - D_{V(x)} U`.
pub fn bracket(system: &HormanderSystem, u: &VectorField<'_>, v: &VectorField<'_>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let dv = derivative_of(system, v, x, &u(x), FD_STEP)?;
    let du = derivative_of(system, u, x, &v(x), FD_STEP)?;
    ensure_finite(dv - du, "Lie bracket")
}

/// The adjoint connection, `L_{Z^w} V` at `x` for `w` in `E_x`.
pub fn adjoint_covariant_derivative(
    system: &HormanderSystem,
    v: &VectorField<'_>,
    x: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    let c = system.y_map(x, w)?;
    let z = |y: &DVector<f64>| system.fields().apply(y, &c);
    let dv = derivative_of(system, v, x, w, FD_STEP)?;
    let dz = derivative_of(system, &z, x, &v(x), FD_STEP)?;
    ensure_finite(dv - dz, "adjoint covariant derivative")
}

/// An extension of `u` to a neighbourhood: `Z^u` if `u` lies in `E_x`,
/// otherwise the projected constant field.
pub fn extension<'a>(system: &'a HormanderSystem, x: &DVector<f64>, u: &DVector<f64>) -> Box<VectorField<'a>> {
    match system.y_map(x, u) {
        Ok(c) => Box::new(move |y: &DVector<f64>| system.fields().apply(y, &c)),
        Err(_) => {
            let u = u.clone();
            Box::new(move |y: &DVector<f64>| system.manifold().projector(y) * &u)
        }
    }
}

/// `T(u, v) = nabla_u V - nabla_v U - [U, V]` with `Z` extensions; `u`, `v`
/// in `E_x`.
pub fn torsion(system: &HormanderSystem, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let cu = system.y_map(x, u)?;
    let cv = system.y_map(x, v)?;
    let zu = |y: &DVector<f64>| system.fields().apply(y, &cu);
    let zv = |y: &DVector<f64>| system.fields().apply(y, &cv);
    let a = lw_covariant_derivative(system, &zv, x, u)?;
    let b = lw_covariant_derivative(system, &zu, x, v)?;
    Ok(a - b - bracket(system, &zu, &zv, x)?)
}

/// Torsion of the adjoint connection, computed from
/// [`adjoint_covariant_derivative`] with `Z` extensions.
pub fn adjoint_torsion(system: &HormanderSystem, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let cu = system.y_map(x, u)?;
    let cv = system.y_map(x, v)?;
    let zu = |y: &DVector<f64>| system.fields().apply(y, &cu);
    let zv = |y: &DVector<f64>| system.fields().apply(y, &cv);
    let a = adjoint_covariant_derivative(system, &zv, x, u)?;
    let b = adjoint_covariant_derivative(system, &zu, x, v)?;
    Ok(a - b - bracket(system, &zu, &zv, x)?)
}

/// `R(u, v) w = nabla_u nabla_v W - nabla_v nabla_u W - nabla_{[U,V]} W`
/// with step `h` for every finite difference; `w` in `E_x`.
pub fn curvature_with(
    system: &HormanderSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let n = x.len();
    let ue = extension(system, x, u);
    let ve = extension(system, x, v);
    let cw = system.y_map(x, w)?;
    let we = |y: &DVector<f64>| system.fields().apply(y, &cw);
    let inner = |dir: &VectorField<'_>, y: &DVector<f64>| {
        lw_covariant_derivative_with(system, &we, y, &dir(y), h).unwrap_or_else(|_| nan_like(n))
    };
    let nabla_v_w = |y: &DVector<f64>| inner(ve.as_ref(), y);
    let nabla_u_w = |y: &DVector<f64>| inner(ue.as_ref(), y);
    let t1 = lw_covariant_derivative_with(system, &nabla_v_w, x, u, h)?;
    let t2 = lw_covariant_derivative_with(system, &nabla_u_w, x, v, h)?;
    let uv = derivative_of(system, ve.as_ref(), x, u, h)? - derivative_of(system, ue.as_ref(), x, v, h)?;
    let t3 = lw_covariant_derivative_with(system, &we, x, &uv, h)?;
    ensure_finite(t1 - t2 - t3, "curvature")
}

/// Curvature at the default step, rejected when it moves by more than 10%
/// against the coarse step.
pub fn curvature(
    system: &HormanderSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<CurvatureSample> {
    let fine = curvature_with(system, x, u, v, w, FD_STEP)?;
    let coarse = curvature_with(system, x, u, v, w, CURVATURE_COARSE_STEP)?;
    let change = (&fine - &coarse).norm();
    if change > CURVATURE_FLOOR && change > CURVATURE_MAX_CHANGE * fine.norm() {
        return Err(Error::CurvatureUnstable { relative_change: change / fine.norm().max(f64::MIN_POSITIVE) });
    }
    Ok(CurvatureSample {
        base: x.clone(),
        u: u.clone(),
        v: v.clone(),
        w: w.clone(),
        value: fine,
        step_change: change,
    })
}

/// Orthonormal basis of `E_x` under [`MetricE`] as the columns of an
/// `N x p` matrix, by Gram-Schmidt with largest-pivot selection on the
/// columns of the symbol.
pub fn orthonormal_e_basis(system: &HormanderSystem, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let sym = system.symbol_at(x)?;
    let xm = system.x_matrix(x);
    let y = linalg::pinv(&xm);
    // Y is an isometry from (E_x, <,>_E) into R^m, so work with coefficients.
    let mut candidates: Vec<DVector<f64>> = (0..sym.matrix.ncols()).map(|j| &y * sym.matrix.column(j)).collect();
    let scale = candidates.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut chosen: Vec<DVector<f64>> = Vec::new();
    while chosen.len() < sym.rank {
        let (best, norm) = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if norm <= 1e-10 * scale {
            return Err(Error::ConstantRankViolation {
                expected: sym.rank,
                found: chosen.len(),
                point: x.iter().cloned().collect(),
            });
        }
        let e = candidates.swap_remove(best) / norm;
        for c in candidates.iter_mut() {
            let p = c.dot(&e);
            *c -= &e * p;
        }
        chosen.push(e);
    }
    let mut out = DMatrix::zeros(x.len(), chosen.len());
    for (j, c) in chosen.iter().enumerate() {
        out.set_column(j, &(&xm * c));
    }
    Ok(out)
}

/// `Ric#(v) = sum_j R(v, e_j) e_j` over an orthonormal basis of `E_x`.
pub fn ricci_sharp(system: &HormanderSystem, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let basis = orthonormal_e_basis(system, x)?;
    let mut out = DVector::zeros(x.len());
    for j in 0..basis.ncols() {
        let e = basis.column(j).into_owned();
        out += curvature(system, x, v, &e, &e)?.value;
    }
    Ok(out)
}

/// The matrix of `Ric#` on `E_x` in an orthonormal basis.
pub fn ricci_matrix(system: &HormanderSystem, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let basis = orthonormal_e_basis(system, x)?;
    let metric = MetricE::new(system.clone());
    let p = basis.ncols();
    let mut out = DMatrix::zeros(p, p);
    for k in 0..p {
        let r = ricci_sharp(system, x, &basis.column(k).into_owned())?;
        for j in 0..p {
            out[(j, k)] = metric.inner(x, &basis.column(j).into_owned(), &r)?;
        }
    }
    Ok(out)
}

/// `d<U, W>(v) - <nabla_v U, W> - <U, nabla_v W>` at `x`.
pub fn metricity_defect(
    system: &HormanderSystem,
    u: &VectorField<'_>,
    w: &VectorField<'_>,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    let metric = MetricE::new(system.clone());
    let pairing = |y: &DVector<f64>| metric.inner(y, &u(y), &w(y)).unwrap_or(f64::NAN);
    let lhs = directional_derivative(system.manifold().as_ref(), pairing, x, v)?;
    let du = lw_covariant_derivative(system, u, x, v)?;
    let dw = lw_covariant_derivative(system, w, x, v)?;
    let rhs = metric.inner(x, &du, &w(x))? + metric.inner(x, &u(x), &dw)?;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::geometry::spaces::gaussian_vector;
    use crate::systems;

    fn tangent_at(system: &HormanderSystem, x: &DVector<f64>, rng: &mut ChaCha20Rng) -> DVector<f64> {
        system.manifold().projector(x) * gaussian_vector(rng, x.len())
    }

    fn e_vector(system: &HormanderSystem, x: &DVector<f64>, rng: &mut ChaCha20Rng) -> DVector<f64> {
        system.x_matrix(x) * gaussian_vector(rng, system.noise_dim())
    }

    /// An `E`-valued field `y -> X(y) a(y)` with smooth periodic coefficients.
    fn wiggly_e_field(system: &HormanderSystem, seed: f64) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        move |y: &DVector<f64>| {
            let m = system.noise_dim();
            let a = DVector::from_fn(m, |j, _| (seed + y[j % y.len()] * (1.0 + j as f64)).sin() + 0.3 * y[0].cos());
            system.fields().apply(y, &a)
        }
    }

    #[test]
    fn metric_on_sphere_gradient_is_round() {
        let s = systems::s2_gradient();
        let metric = MetricE::new(s.clone());
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = s.manifold().sample(&mut rng);
            let a = tangent_at(&s, &x, &mut rng);
            let b = tangent_at(&s, &x, &mut rng);
            assert!((metric.inner(&x, &a, &b).unwrap() - a.dot(&b)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_field_derivative_on_sphere() {
        // By hand: Y(X^p) = P e_p, d(P e_p)(v) = -(v x^T + x v^T) e_p, and
        // X(x) kills x, leaving -x_p v.
        let s = systems::s2_gradient();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..20 {
            let x = s.manifold().sample(&mut rng);
            let v = tangent_at(&s, &x, &mut rng);
            for p in 0..3 {
                let col = |y: &DVector<f64>| s.fields().column(y, p);
                let got = lw_covariant_derivative(&s, &col, &x, &v).unwrap();
                assert!((&got + &v * x[p]).norm() < 1e-8, "{got} vs {}", -&v * x[p]);
            }
        }
    }

    #[test]
    fn constant_fields_on_torus_are_parallel() {
        let t = systems::torus_flat();
        let u = |_: &DVector<f64>| DVector::from_column_slice(&[0.3, -1.2]);
        let x = DVector::from_column_slice(&[0.4, 5.0]);
        let got = lw_covariant_derivative(&t, &u, &x, &DVector::from_column_slice(&[1.0, 2.0])).unwrap();
        assert!(got.norm() < 1e-12);
    }

    #[test]
    fn field_leaving_e_is_a_domain_error() {
        let t = systems::torus_rank1();
        let u = |y: &DVector<f64>| DVector::from_column_slice(&[1.0, y[0].sin()]);
        let x = DVector::from_column_slice(&[0.0, 1.0]);
        let err = lw_covariant_derivative(&t, &u, &x, &DVector::from_column_slice(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }

    #[test]
    fn connection_is_metric() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for s in [systems::s2_gradient(), systems::s2_killing(), systems::torus_shear(0.8), systems::s1_rank1(0.3)] {
            let u = wiggly_e_field(&s, 0.1);
            let w = wiggly_e_field(&s, 1.7);
            for _ in 0..25 {
                let x = s.manifold().sample(&mut rng);
                let v = tangent_at(&s, &x, &mut rng);
                let d = metricity_defect(&s, &u, &w, &x, &v).unwrap();
                assert!(d < 1e-5, "{s:?}: metricity defect {d}");
            }
        }
    }

    #[test]
    fn fields_orthogonal_to_kernel_are_parallel() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for s in [systems::s2_gradient(), systems::s2_killing(), systems::torus_shear(0.8), systems::s1_rank1(0.3)] {
            for _ in 0..25 {
                let x = s.manifold().sample(&mut rng);
                let (_, k_perp) = s.kernel_projection(&x);
                let e = k_perp * gaussian_vector(&mut rng, s.noise_dim());
                let field = |y: &DVector<f64>| s.fields().apply(y, &e);
                let v = tangent_at(&s, &x, &mut rng);
                let d = lw_covariant_derivative(&s, &field, &x, &v).unwrap();
                assert!(d.norm() < 1e-5, "{s:?}: {d}");
            }
        }
    }

    #[test]
    fn sphere_connections_agree_with_levi_civita() {
        // Levi-Civita of the round sphere: P(x) D_v U.
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for s in [systems::s2_gradient(), systems::s2_killing()] {
            let u = wiggly_e_field(&s, 0.4);
            for _ in 0..25 {
                let x = s.manifold().sample(&mut rng);
                let v = tangent_at(&s, &x, &mut rng);
                let lw = lw_covariant_derivative(&s, &u, &x, &v).unwrap();
                let lc = s.manifold().projector(&x) * derivative_of(&s, &u, &x, &v, FD_STEP).unwrap();
                assert!((lw - lc).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn flat_torus_curvature_vanishes() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for s in [systems::torus_flat(), systems::torus_rank1()] {
            let x = s.manifold().sample(&mut rng);
            let u = e_vector(&s, &x, &mut rng);
            let v = e_vector(&s, &x, &mut rng);
            let w = e_vector(&s, &x, &mut rng);
            assert!(curvature(&s, &x, &u, &v, &w).unwrap().value.norm() < 1e-10);
            assert!(ricci_sharp(&s, &x, &u).unwrap().norm() < 1e-10);
        }
    }

    /// Curvature of `P(x) D_v U` on the unit sphere by nested differences,
    /// with projected constant extensions.
    fn round_curvature(x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let m = crate::geometry::Sphere::new(3);
        let p = |y: &DVector<f64>| DMatrix::identity(3, 3) - y * y.transpose();
        let ext = |a: DVector<f64>| move |y: &DVector<f64>| p(y) * &a;
        let (ue, ve, we) = (ext(u.clone()), ext(v.clone()), ext(w.clone()));
        let lc = |field: &dyn Fn(&DVector<f64>) -> DVector<f64>, y: &DVector<f64>, d: &DVector<f64>| {
            p(y) * directional_derivative_vec_with(&m, field, y, d, 1e-4).unwrap()
        };
        let nv = |y: &DVector<f64>| lc(&we, y, &ve(y));
        let nu = |y: &DVector<f64>| lc(&we, y, &ue(y));
        let br = directional_derivative_vec_with(&m, &ve, x, u, 1e-4).unwrap()
            - directional_derivative_vec_with(&m, &ue, x, v, 1e-4).unwrap();
        lc(&nv, x, u) - lc(&nu, x, v) - lc(&we, x, &br)
    }

    #[test]
    fn sphere_curvature_matches_round_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for s in [systems::s2_gradient(), systems::s2_killing()] {
            for _ in 0..5 {
                let x = s.manifold().sample(&mut rng);
                let u = tangent_at(&s, &x, &mut rng);
                let v = tangent_at(&s, &x, &mut rng);
                let w = tangent_at(&s, &x, &mut rng);
                let got = curvature(&s, &x, &u, &v, &w).unwrap().value;
                let oracle = round_curvature(&x, &u, &v, &w);
                assert!((&got - &oracle).norm() < 1e-5, "{got} vs {oracle}");
                let swapped = curvature(&s, &x, &v, &u, &w).unwrap().value;
                assert!((&got + &swapped).norm() < 1e-4);
            }
        }
    }

    #[test]
    fn ricci_on_unit_sphere_is_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        for s in [systems::s2_gradient(), systems::s2_killing()] {
            for _ in 0..5 {
                let x = s.manifold().sample(&mut rng);
                let v = tangent_at(&s, &x, &mut rng);
                let r = ricci_sharp(&s, &x, &v).unwrap();
                assert!((&r - &v).norm() < 1e-5, "{r} vs {v}");
                assert!(s.y_map(&x, &r).is_ok());
            }
            let x = s.manifold().sample(&mut rng);
            let rm = ricci_matrix(&s, &x).unwrap();
            assert!((rm - DMatrix::identity(2, 2)).norm() < 1e-5);
        }
    }

    #[test]
    fn orthonormal_basis_is_orthonormal_for_the_e_metric() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for s in [systems::torus_shear(0.8), systems::s1_rank1(0.0), systems::torus_rank1()] {
            let x = s.manifold().sample(&mut rng);
            let b = orthonormal_e_basis(&s, &x).unwrap();
            let g = MetricE::new(s.clone()).ambient_matrix(&x);
            let gram = b.transpose() * g * &b;
            assert!((gram - DMatrix::identity(s.rank(), s.rank())).norm() < 1e-10);
        }
    }

    #[test]
    fn adjoint_kills_z_fields_for_torsion_free_systems() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for s in [systems::s2_gradient(), systems::s2_killing(), systems::torus_flat(), systems::s1_rank1(0.3)] {
            for _ in 0..10 {
                let x = s.manifold().sample(&mut rng);
                let w = e_vector(&s, &x, &mut rng);
                let c = s.y_map(&x, &w).unwrap();
                let z = |y: &DVector<f64>| s.fields().apply(y, &c);
                let v = e_vector(&s, &x, &mut rng);
                let vf = extension(&s, &x, &v);
                let d = adjoint_covariant_derivative(&s, &z, &x, &v).unwrap();
                assert!(d.norm() < 1e-5, "{s:?}: {d}");
                // along a general field the adjoint derivative of Z^w depends
                // only on V(x)
                let d2 = adjoint_covariant_derivative(&s, &z, &x, &vf(&x)).unwrap();
                assert!(d2.norm() < 1e-5);
            }
        }
    }

    #[test]
    fn adjoint_torsion_is_minus_lw_torsion() {
        let s = systems::torus_shear(0.8);
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let mut largest = 0.0f64;
        for _ in 0..10 {
            let x = s.manifold().sample(&mut rng);
            let u = e_vector(&s, &x, &mut rng);
            let v = e_vector(&s, &x, &mut rng);
            let t = torsion(&s, &x, &u, &v).unwrap();
            let t_hat = adjoint_torsion(&s, &x, &u, &v).unwrap();
            assert!((&t + &t_hat).norm() < 1e-6, "{t} vs {t_hat}");
            largest = largest.max(t.norm());
        }
        assert!(largest > 1e-2, "the shear system should have torsion");
    }

    #[test]
    fn adjoint_equals_lw_on_sphere_gradient() {
        let s = systems::s2_gradient();
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let u = wiggly_e_field(&s, 0.9);
        for _ in 0..10 {
            let x = s.manifold().sample(&mut rng);
            let w = tangent_at(&s, &x, &mut rng);
            let a = adjoint_covariant_derivative(&s, &u, &x, &w).unwrap();
            let b = lw_covariant_derivative(&s, &u, &x, &w).unwrap();
            assert!((a - b).norm() < 1e-5);
            assert!(torsion(&s, &x, &w, &tangent_at(&s, &x, &mut rng)).unwrap().norm() < 1e-6);
        }
    }
}
