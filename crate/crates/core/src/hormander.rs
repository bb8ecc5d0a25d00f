//! Diffusion operators in Hörmander form `1/2 sum_j L_{X^j} L_{X^j} + L_A`
//! and the objects they induce: the symbol, the sub-bundle `E` it spans,
//! the right inverse `Y`, kernel projections and the fields `Z^w`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::geometry::calculus::{self, check_tangent, directional_derivative};
use crate::geometry::fields::{FieldRef, FnForm, OneForm, ScalarField};
use crate::geometry::manifold::{ManifoldPoint, ManifoldRef, TangentVector};
use crate::geometry::spaces::gaussian_vector;
use crate::linalg;

/// Residual allowed when deciding that a vector lies in `E_x`.
pub const E_MEMBERSHIP_TOL: f64 = 1e-8;

/// Driving fields `X: M x R^m -> TM` and drift `A` on an embedded manifold.
#[derive(Clone)]
pub struct HormanderSystem {
    manifold: ManifoldRef,
    fields: FieldRef,
    drift: FieldRef,
    rank: usize,
}

/// The ambient matrix `sum_j X^j X^j^T` at a point.
#[derive(Clone, Debug)]
pub struct SymbolOperator {
    pub base: DVector<f64>,
    pub matrix: DMatrix<f64>,
    pub rank: usize,
}

impl SymbolOperator {
    /// The symbol normalized by polarization,
    /// `df(sigma dg) = 1/2 [A(fg) - A(f) g - f A(g)]`, which is half of
    /// [`matrix`](Self::matrix).
    pub fn sigma(&self) -> DMatrix<f64> {
        &self.matrix * 0.5
    }

    /// Orthogonal projector onto `E_x`, the image of the symbol.
    pub fn image_projector(&self) -> DMatrix<f64> {
        linalg::span_projector(&self.matrix)
    }
}

impl std::fmt::Debug for HormanderSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "HormanderSystem(on {}, m = {}, rank {})", self.manifold.name(), self.noise_dim(), self.rank)
    }
}

impl HormanderSystem {
    /// `rank` is the constant rank `p` of the symbol that the system must keep.
    pub fn new(manifold: ManifoldRef, fields: FieldRef, drift: FieldRef, rank: usize) -> Result<Self> {
        let n = manifold.ambient_dim();
        if fields.ambient_dim() != n || drift.ambient_dim() != n {
            return Err(Error::Config(format!(
                "fields act in R^{} and R^{}, manifold {} lives in R^{n}",
                fields.ambient_dim(),
                drift.ambient_dim(),
                manifold.name()
            )));
        }
        if fields.noise_dim() == 0 {
            return Err(Error::Config("a Hörmander system needs m >= 1 driving fields".into()));
        }
        if drift.noise_dim() != 1 {
            return Err(Error::Config("the drift must be a single vector field".into()));
        }
        Ok(Self { manifold, fields, drift, rank })
    }

    pub fn manifold(&self) -> &ManifoldRef {
        &self.manifold
    }

    pub fn fields(&self) -> &FieldRef {
        &self.fields
    }

    pub fn drift_map(&self) -> &FieldRef {
        &self.drift
    }

    pub fn noise_dim(&self) -> usize {
        self.fields.noise_dim()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `X(x)` as an `N x m` matrix.
    pub fn x_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.fields.eval(x)
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        self.drift.eval(x).column(0).into_owned()
    }

    /// Same fields with a different drift.
    pub fn with_drift(&self, drift: FieldRef) -> Result<Self> {
        Self::new(self.manifold.clone(), self.fields.clone(), drift, self.rank)
    }

    /// Check tangency of all fields and constant symbol rank at `samples`
    /// random points.
    pub fn validate(&self, samples: usize, rng: &mut dyn RngCore) -> Result<()> {
        for _ in 0..samples {
            let x = self.manifold.sample(rng);
            let xm = self.x_matrix(&x);
            let cols: Vec<_> = (0..xm.ncols()).map(|j| xm.column(j).into_owned()).collect();
            check_tangent(self.manifold.as_ref(), &x, &cols, "driving field")?;
            check_tangent(self.manifold.as_ref(), &x, &[self.drift(&x)], "drift")?;
            self.symbol_at(&x)?;
        }
        Ok(())
    }

    /// `sum_j e_j X^j(x)`.
    pub fn apply_x(&self, x: &ManifoldPoint, e: &DVector<f64>) -> TangentVector {
        let v = self.fields.apply(x.coords(), e);
        crate::geometry::tangent_project(x, &v)
    }

    pub fn symbol(&self, x: &ManifoldPoint) -> Result<SymbolOperator> {
        self.symbol_at(x.coords())
    }

    pub fn symbol_at(&self, x: &DVector<f64>) -> Result<SymbolOperator> {
        let xm = self.x_matrix(x);
        let matrix = &xm * xm.transpose();
        let found = linalg::rank(&xm, linalg::RANK_RTOL);
        if found != self.rank {
            return Err(Error::ConstantRankViolation {
                expected: self.rank,
                found,
                point: x.iter().cloned().collect(),
            });
        }
        Ok(SymbolOperator { base: x.clone(), matrix, rank: found })
    }

    /// The minimum-norm right inverse `Y_x = X(x)^+` as an `m x N` matrix.
    pub fn y_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        linalg::pinv(&self.x_matrix(x))
    }

    /// `Y_x(v)`, the minimum-norm solution of `X(x) e = v` for `v` in `E_x`.
    pub fn y_map(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        let xm = self.x_matrix(x);
        let e = linalg::pinv(&xm) * v;
        let res = (&xm * &e - v).norm();
        if res > E_MEMBERSHIP_TOL * (1.0 + v.norm()) {
            return Err(Error::Domain {
                what: "vector is not in the image E_x of X(x)".into(),
                residual: res,
            });
        }
        Ok(e)
    }

    /// `(K, K_perp)`: orthogonal projections of `R^m` onto `ker X(x)` and its
    /// complement.
    pub fn kernel_projection(&self, x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let xm = self.x_matrix(x);
        let m = xm.ncols();
        let k_perp = linalg::pinv(&xm) * &xm;
        let k_perp = linalg::sym(&k_perp);
        let k = DMatrix::identity(m, m) - &k_perp;
        (k, k_perp)
    }

    /// `Z^w(y) = X(y) Y_x(w)`.
    pub fn z_field(&self, x: &DVector<f64>, w: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.y_map(x, w)?;
        Ok(self.fields.apply(y, &c))
    }

    /// `(1/2 sum_j L_{X^j} L_{X^j} + L_A) f` at `x`.
    pub fn apply(&self, f: &dyn ScalarField, x: &DVector<f64>) -> Result<f64> {
        calculus::apply_hormander(self.manifold.as_ref(), self.fields.as_ref(), self.drift.as_ref(), f, x)
    }

    /// `delta(phi) = 1/2 sum_j d(phi(X^j))(X^j(x)) + phi(A(x))`.
    pub fn delta(&self, phi: &dyn OneForm, x: &DVector<f64>) -> Result<f64> {
        let xm = self.x_matrix(x);
        let a = self.drift(x);
        let mut second = 0.0;
        let jac = phi.jacobian(x);
        for j in 0..xm.ncols() {
            let c = xm.column(j).into_owned();
            let analytic = match (&jac, self.fields.derivative(x, &c)) {
                (Some(jp), Some(dx)) => Some((jp * &c).dot(&c) + phi.covector(x).dot(&dx.column(j))),
                _ => None,
            };
            second += match analytic {
                Some(d) => d,
                None => directional_derivative(
                    self.manifold.as_ref(),
                    |y| phi.eval(y, &self.fields.column(y, j)),
                    x,
                    &c,
                )?,
            };
        }
        Ok(0.5 * second + phi.eval(x, &a))
    }

    /// `1/2 [A(fg) - A(f) g - f A(g)]`, the symbol recovered by polarization.
    pub fn polarized_symbol(&self, f: &Arc<dyn ScalarField>, g: &Arc<dyn ScalarField>, x: &DVector<f64>) -> Result<f64> {
        let fg = crate::geometry::fields::ProductField(f.clone(), g.clone());
        let afg = self.apply(&fg, x)?;
        let af = self.apply(f.as_ref(), x)?;
        let ag = self.apply(g.as_ref(), x)?;
        Ok(0.5 * (afg - af * g.value(x) - f.value(x) * ag))
    }

    /// A random vector of `E_x`.
    pub fn sample_e(&self, x: &DVector<f64>, rng: &mut dyn RngCore) -> DVector<f64> {
        self.fields.apply(x, &gaussian_vector(rng, self.noise_dim()))
    }
}

/// Outcome of an "along S" probe.
#[derive(Clone, Debug)]
pub struct AlongReport {
    pub max_abs_delta: f64,
    pub probes: usize,
    pub pass: bool,
}

/// Tolerance of [`is_along`].
pub const ALONG_TOL: f64 = 1e-5;

/// Evaluate `delta` on one-forms vanishing on `S` and on their products
/// with the `weights`, at `samples` random points.
///
/// The generating family at `y` is `phi_k(y) = (I - Pi_S(y)) P(y) e_k`,
/// which spans the annihilator of `S_y` in `T*_yM`.
pub fn is_along<S>(
    system: &HormanderSystem,
    subbundle: S,
    weights: &[Arc<dyn ScalarField>],
    samples: usize,
    rng: &mut dyn RngCore,
) -> Result<AlongReport>
where
    S: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + Clone + 'static,
{
    let m = system.manifold().clone();
    let n = m.ambient_dim();
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    for _ in 0..samples {
        let x = m.sample(rng);
        for k in 0..n {
            let (mm, sb) = (m.clone(), subbundle.clone());
            let phi = FnForm(move |y: &DVector<f64>| {
                let pi_s = linalg::span_projector(&sb(y));
                let mut e = DVector::zeros(n);
                e[k] = 1.0;
                (DMatrix::identity(n, n) - pi_s) * mm.projector(y) * e
            });
            let d = system.delta(&phi, &x)?;
            worst = worst.max(d.abs());
            probes += 1;
            for w in weights {
                let phi_ref: Arc<dyn OneForm> = Arc::new(FnForm(phi.0.clone()));
                let fphi = crate::geometry::fields::ScaledForm(w.clone(), phi_ref);
                worst = worst.max(system.delta(&fphi, &x)?.abs());
                probes += 1;
            }
        }
    }
    Ok(AlongReport { max_abs_delta: worst, probes, pass: worst <= ALONG_TOL })
}

/// Outcome of the symbol diagram check `T pi sigma^B (T pi)^* = sigma^A`.
#[derive(Clone, Debug)]
pub struct DiagramReport {
    pub max_defect: f64,
    pub probes: usize,
}

/// Compare `T pi sigma^B (T pi)^* alpha` with `sigma^A alpha` for random
/// covectors `alpha` at each bundle probe point.
///
/// `pi` maps bundle coordinates to base coordinates and `tpi` gives the
/// matrix of its differential.
pub fn lemma_diagram_check(
    bundle_op: &HormanderSystem,
    base_op: &HormanderSystem,
    pi: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    tpi: &dyn Fn(&DVector<f64>) -> DMatrix<f64>,
    probes: &[DVector<f64>],
    covectors_per_probe: usize,
    rng: &mut dyn RngCore,
) -> Result<DiagramReport> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for u in probes {
        let x = pi(u);
        let t = tpi(u);
        let xb = bundle_op.x_matrix(u);
        let xa = base_op.x_matrix(&x);
        let sb = &xb * xb.transpose();
        let sa = &xa * xa.transpose();
        let lhs = &t * sb * t.transpose();
        for _ in 0..covectors_per_probe {
            let alpha = gaussian_vector(rng, x.len());
            let d = (&lhs * &alpha - &sa * &alpha).norm();
            worst = worst.max(d);
            count += 1;
        }
    }
    Ok(DiagramReport { max_defect: worst, probes: count })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::geometry::fields::{ConstantForm, ExactForm, FnScalar, Polynomial};
    use crate::systems;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    #[test]
    fn apply_x_examples() {
        let s2 = systems::s2_gradient();
        let x = ManifoldPoint::new(s2.manifold().clone(), v(&[0.0, 0.0, 1.0])).unwrap();
        assert_eq!(s2.apply_x(&x, &v(&[1.0, 0.0, 0.0])).vec(), &v(&[1.0, 0.0, 0.0]));
        assert_eq!(s2.apply_x(&x, &v(&[0.0, 0.0, 1.0])).vec().norm(), 0.0);
        let t = systems::torus_flat();
        let y = ManifoldPoint::new(t.manifold().clone(), v(&[1.0, 2.0])).unwrap();
        assert_eq!(t.apply_x(&y, &v(&[0.3, -0.4])).vec(), &v(&[0.3, -0.4]));
    }

    #[test]
    fn symbol_examples() {
        let s2 = systems::s2_gradient();
        let mut r = rng();
        for _ in 0..100 {
            let x = s2.manifold().sample(&mut r);
            let s = s2.symbol_at(&x).unwrap();
            // independent oracle: sum of outer products of the columns
            let xm = s2.x_matrix(&x);
            let mut direct = DMatrix::zeros(3, 3);
            for p in 0..3 {
                let c = xm.column(p);
                direct += c * c.transpose();
            }
            assert!((&s.matrix - &direct).norm() < 1e-12);
            assert!((&s.matrix - (DMatrix::identity(3, 3) - &x * x.transpose())).norm() < 1e-12);
        }
        let t1 = systems::torus_rank1();
        let s = t1.symbol_at(&v(&[0.2, 0.3])).unwrap();
        assert_eq!(s.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(s.rank, 1);
        let s = systems::torus_flat().symbol_at(&v(&[0.2, 0.3])).unwrap();
        assert_eq!(s.matrix, DMatrix::identity(2, 2));
        assert_eq!(s.rank, 2);
    }

    #[test]
    fn rank_jump_is_reported() {
        let t = systems::torus_flat();
        let wrong = HormanderSystem::new(t.manifold().clone(), t.fields().clone(), t.drift_map().clone(), 1).unwrap();
        assert!(matches!(wrong.symbol_at(&v(&[0.0, 0.0])), Err(Error::ConstantRankViolation { .. })));
    }

    #[test]
    fn y_map_examples() {
        let s2 = systems::s2_gradient();
        let mut r = rng();
        for _ in 0..50 {
            let x = s2.manifold().sample(&mut r);
            let w = s2.sample_e(&x, &mut r);
            let y = s2.y_map(&x, &w).unwrap();
            // least-squares oracle restricted to the orthogonal complement of x
            let lsq = crate::linalg::svd(&s2.x_matrix(&x)).solve(&w, 1e-12).unwrap();
            let lsq = &lsq - &x * x.dot(&lsq);
            assert!((&y - &lsq).norm() < 1e-10);
            assert!((&y - &w).norm() < 1e-10);
        }
        let t = systems::torus_flat();
        assert!((t.y_map(&v(&[1.0, 1.0]), &v(&[0.5, -2.0])).unwrap() - v(&[0.5, -2.0])).norm() < 1e-14);
        assert_eq!(s2.y_map(&v(&[0.0, 0.0, 1.0]), &v(&[0.0, 0.0, 0.0])).unwrap().norm(), 0.0);
        let t1 = systems::torus_rank1();
        assert!(matches!(t1.y_map(&v(&[0.0, 0.0]), &v(&[0.0, 1.0])), Err(Error::Domain { .. })));
    }

    #[test]
    fn kernel_projection_examples() {
        let s2 = systems::s2_gradient();
        let x = v(&[0.48, -0.6, 0.64]);
        let (k, kp) = s2.kernel_projection(&x);
        assert!((&k - &x * x.transpose()).norm() < 1e-12);
        assert!((&k + &kp - DMatrix::identity(3, 3)).norm() == 0.0);
        assert!((s2.x_matrix(&x) * &k).norm() < 1e-12);
        let (k, _) = systems::torus_flat().kernel_projection(&v(&[0.1, 0.2]));
        assert!(k.norm() < 1e-14);
        let (k, _) = systems::torus_rank1().kernel_projection(&v(&[0.1, 0.2]));
        assert!((k - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn z_field_examples() {
        let s2 = systems::s2_gradient();
        let x = v(&[0.0, 0.0, 1.0]);
        let w = v(&[1.0, 0.0, 0.0]);
        assert!((s2.z_field(&x, &w, &x).unwrap() - &w).norm() < 1e-14);
        // composed oracle: X(y) applied to Y_x(w), with y where w is normal
        let y = v(&[1.0, 0.0, 0.0]);
        let direct = s2.x_matrix(&y) * s2.y_map(&x, &w).unwrap();
        let z = s2.z_field(&x, &w, &y).unwrap();
        assert!((&z - &direct).norm() < 1e-14);
        assert!(z.norm() < 1e-14);
        let t = systems::torus_flat();
        assert_eq!(t.z_field(&v(&[0.1, 0.2]), &v(&[1.0, 2.0]), &v(&[3.0, 4.0])).unwrap(), v(&[1.0, 2.0]));
    }

    #[test]
    fn delta_examples() {
        let t = systems::torus_flat();
        // phi = x_1 dx_1, so 1/2 sum_j d_j(phi_j) = 1/2
        let phi = crate::geometry::fields::PolynomialForm(vec![Polynomial::coordinate(2, 0), Polynomial::constant(2, 0.0)]);
        assert!((t.delta(&phi, &v(&[0.4, 1.0])).unwrap() - 0.5).abs() < 1e-12);
        // same through the finite-difference route
        let phi = FnForm(|y: &DVector<f64>| v(&[y[0], 0.0]));
        assert!((t.delta(&phi, &v(&[0.4, 1.0])).unwrap() - 0.5).abs() < 1e-8);
        // delta(df) = A f for the sphere
        let s2 = systems::s2_gradient();
        let f: Arc<dyn ScalarField> = Arc::new(Polynomial::new(3).term(1.0, &[(0, 2), (2, 1)]));
        let x = v(&[0.48, -0.6, 0.64]);
        let d = s2.delta(&ExactForm(f.clone()), &x).unwrap();
        assert!((d - s2.apply(f.as_ref(), &x).unwrap()).abs() < 1e-12);
        let _ = ConstantForm::coordinate(3, 0);
    }

    #[test]
    fn along_examples() {
        let mut r = rng();
        let t1 = systems::torus_rank1();
        let s = |_: &DVector<f64>| DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let weights: Vec<Arc<dyn ScalarField>> = vec![Arc::new(FnScalar(|y: &DVector<f64>| y[1].cos()))];
        assert!(is_along(&t1, s, &weights, 10, &mut r).unwrap().pass);
        let with_drift = t1.with_drift(crate::geometry::fields::FnFieldMap::constant(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).shared()).unwrap();
        let rep = is_along(&with_drift, s, &weights, 10, &mut r).unwrap();
        assert!(!rep.pass);
        assert!((rep.max_abs_delta - 1.0).abs() < 1e-6);
        let s2 = systems::s2_gradient();
        let tm = |y: &DVector<f64>| DMatrix::identity(3, 3) - y * y.transpose() / y.norm_squared();
        assert!(is_along(&s2, tm, &[], 10, &mut r).unwrap().pass);
    }
}
