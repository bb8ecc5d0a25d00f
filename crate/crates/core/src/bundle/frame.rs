//! The linear frame bundle `GL(M)` of an embedded manifold and the lift of
//! a Hörmander system to its derivative-flow generator.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{BundleSystem, PrincipalBundle};
use crate::error::{Error, Result};
use crate::geometry::fields::{FieldMap, FieldRef};
use crate::geometry::manifold::{check_retracted, Manifold, ManifoldRef};
use crate::group::MatrixGroup;
use crate::hormander::HormanderSystem;
use crate::linalg;

/// Frames with condition number above this are not sampled.
pub const SAMPLE_CONDITION_LIMIT: f64 = 1e4;

/// `GL(M)` as `{ (x, u) : c(x) = 0, Dc(x) u = 0 }` in `R^N x R^{N x n}`.
#[derive(Debug, Clone)]
pub struct FrameManifold {
    base: ManifoldRef,
    n: usize,
}

impl FrameManifold {
    fn split(&self, p: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let nb = self.base.ambient_dim();
        (p.rows(0, nb).into_owned(), linalg::unvec(&p.as_slice()[nb..], nb, self.n))
    }

    fn join(x: &DVector<f64>, u: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).cloned())
    }
}

impl Manifold for FrameManifold {
    fn name(&self) -> String {
        format!("GL({})", self.base.name())
    }

    fn ambient_dim(&self) -> usize {
        let nb = self.base.ambient_dim();
        nb + nb * self.n
    }

    fn intrinsic_dim(&self) -> usize {
        self.n + self.n * self.n
    }

    fn constraint(&self, p: &DVector<f64>) -> DVector<f64> {
        let (x, u) = self.split(p);
        let c = self.base.constraint(&x);
        let j = self.base.constraint_jacobian(&x);
        let ju = &j * &u;
        DVector::from_iterator(c.len() + ju.len(), c.iter().chain(ju.iter()).cloned())
    }

    fn constraint_jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let (x, u) = self.split(p);
        let nb = x.len();
        let j = self.base.constraint_jacobian(&x);
        let k = j.nrows();
        let mut out = DMatrix::zeros(k + k * self.n, self.ambient_dim());
        out.view_mut((0, 0), (k, nb)).copy_from(&j);
        if k == 0 {
            return out;
        }
        let dj: Vec<DMatrix<f64>> = (0..nb)
            .map(|a| {
                let mut e = DVector::zeros(nb);
                e[a] = 1.0;
                self.base.constraint_jacobian_derivative(&x, &e)
            })
            .collect();
        for i in 0..self.n {
            let ui = u.column(i);
            let r0 = k + k * i;
            for (a, dja) in dj.iter().enumerate() {
                out.view_mut((r0, a), (k, 1)).copy_from(&(dja * ui));
            }
            out.view_mut((r0, nb + nb * i), (k, nb)).copy_from(&j);
        }
        out
    }

    /// Retract the base point, then project the frame onto the new tangent
    /// space.
    fn retract(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let (x, u) = self.split(p);
        let x = self.base.retract(&x)?;
        let u = self.base.projector(&x) * u;
        check_retracted(self, p, Self::join(&x, &u))
    }

    fn difference(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let (xa, ua) = self.split(a);
        let (xb, ub) = self.split(b);
        Self::join(&self.base.difference(&xa, &xb), &(ua - ub))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let x = self.base.sample(rng);
        let basis = linalg::column_basis(&self.base.projector(&x), linalg::RANK_RTOL);
        let g = MatrixGroup::gl(self.n).sample(rng);
        Self::join(&x, &(basis * g))
    }
}

#[derive(Debug, Clone)]
pub struct FrameBundle {
    base: ManifoldRef,
    total: ManifoldRef,
    group: MatrixGroup,
}

impl FrameBundle {
    pub fn new(base: ManifoldRef) -> Self {
        let n = base.intrinsic_dim();
        let total: ManifoldRef = Arc::new(FrameManifold { base: base.clone(), n });
        Self { base, total, group: MatrixGroup::gl(n) }
    }

    pub fn shared(base: ManifoldRef) -> Arc<Self> {
        Arc::new(Self::new(base))
    }

    /// The derivative-flow generator of `system` on `GL(M)`: fields
    /// `X~^j(x, u) = (X^j(x), DX^j(x) u)` and the same lift of the drift.
    pub fn lift_system(&self, system: &HormanderSystem) -> Result<HormanderSystem> {
        let fields: FieldRef = Arc::new(FrameLift::new(system.fields().clone(), self.group.n())?);
        let drift: FieldRef = Arc::new(FrameLift::new(system.drift_map().clone(), self.group.n())?);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let u = self.total.sample(&mut rng);
        let rank = linalg::rank(&fields.eval(&u), linalg::RANK_RTOL);
        HormanderSystem::new(self.total.clone(), fields, drift, rank)
    }

    /// [`lift_system`](Self::lift_system) packaged with the base generator.
    pub fn derivative_flow(self: &Arc<Self>, system: &HormanderSystem, rng: &mut dyn RngCore) -> Result<BundleSystem> {
        let lifted = self.lift_system(system)?;
        BundleSystem::new(self.clone(), lifted, system.clone(), rng)
    }
}

impl PrincipalBundle for FrameBundle {
    fn total(&self) -> &ManifoldRef {
        &self.total
    }

    fn base(&self) -> &ManifoldRef {
        &self.base
    }

    fn group(&self) -> &MatrixGroup {
        &self.group
    }

    fn fibre_rows(&self) -> usize {
        self.base.ambient_dim()
    }

    /// `(w, DP(x)[w] u)`: the velocity of `t -> (x_t, P(x_t) u)`.
    fn transport_lift(&self, p: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let x = self.project(p);
        let u = self.fibre_matrix(p);
        let h = 1e-6;
        let dp = (self.base.projector(&(&x + w * h)) - self.base.projector(&(&x - w * h))) / (2.0 * h);
        self.join(w, &(dp * u))
    }
}

/// `(x, u) -> (X^j(x), DX^j(x) u)` for a field map `X` with analytic
/// derivatives.
pub struct FrameLift {
    inner: FieldRef,
    n: usize,
}

impl FrameLift {
    pub fn new(inner: FieldRef, n: usize) -> Result<Self> {
        let nb = inner.ambient_dim();
        let probe = DVector::from_element(nb, 0.5);
        if inner.derivative(&probe, &probe).is_none() {
            return Err(Error::Config("frame lifts need fields with analytic derivatives".into()));
        }
        Ok(Self { inner, n })
    }

    fn split(&self, p: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let nb = self.inner.ambient_dim();
        (p.rows(0, nb).into_owned(), linalg::unvec(&p.as_slice()[nb..], nb, self.n))
    }

    fn assemble(&self, top: &DMatrix<f64>, blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
        let nb = self.inner.ambient_dim();
        let m = top.ncols();
        let mut out = DMatrix::zeros(self.ambient_dim(), m);
        out.view_mut((0, 0), (nb, m)).copy_from(top);
        for (i, b) in blocks.iter().enumerate() {
            out.view_mut((nb + nb * i, 0), (nb, m)).copy_from(b);
        }
        out
    }
}

impl FieldMap for FrameLift {
    fn ambient_dim(&self) -> usize {
        let nb = self.inner.ambient_dim();
        nb + nb * self.n
    }

    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }

    fn eval(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let (x, u) = self.split(p);
        let blocks: Vec<_> = (0..self.n)
            .map(|i| self.inner.derivative(&x, &u.column(i).into_owned()).expect("checked at construction"))
            .collect();
        self.assemble(&self.inner.eval(&x), &blocks)
    }

    fn derivative(&self, p: &DVector<f64>, v: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (x, u) = self.split(p);
        let (dx, du) = self.split(v);
        let mut blocks = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let ui = u.column(i).into_owned();
            let dui = du.column(i).into_owned();
            blocks.push(self.inner.second_derivative(&x, &ui, &dx)? + self.inner.derivative(&x, &dui)?);
        }
        Some(self.assemble(&self.inner.derivative(&x, &dx)?, &blocks))
    }
}
