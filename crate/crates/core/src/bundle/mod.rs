//! Principal bundles with matrix structure groups, equivariant generators
//! on them, the induced semi-connection and the horizontal/vertical
//! decomposition of the generator.
//!
//! Bundle points are ambient vectors `(x, vec F)` where `x` is a point of
//! the base and `F` is a matrix with `n` columns on which the group acts
//! from the right, `F -> F g`: a group element for the trivial bundle, a
//! frame `u: R^n -> T_xM` for the frame bundle.

pub mod connection;
pub mod decompose;
pub mod frame;
pub mod trivial;
pub mod weitzenbock;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::geometry::fields::{LinearPullback, Polynomial, ScalarRef};
use crate::geometry::manifold::ManifoldRef;
use crate::group::MatrixGroup;
use crate::hormander::HormanderSystem;
use crate::linalg;

pub use connection::{fundamental_field, horizontal_lift, ConnectionForm, Completion};
pub use decompose::{decompose, Decomposition, VerticalCoeffs};
pub use frame::FrameBundle;
pub use trivial::TrivialBundle;
pub use weitzenbock::{associated_covariant_derivative, lw_predicted_coeffs, weitzenbock_on_oneform, WeitzenbockReport};

/// Tolerance of the setup probes that a generator on `P` lifts the base
/// generator and commutes with right translations.
pub const EQUIVARIANCE_TOL: f64 = 1e-8;

pub trait PrincipalBundle: Send + Sync + fmt::Debug {
    /// The total space `P` as an embedded manifold.
    fn total(&self) -> &ManifoldRef;
    fn base(&self) -> &ManifoldRef;
    fn group(&self) -> &MatrixGroup;
    /// Number of rows of the fibre matrix `F`.
    fn fibre_rows(&self) -> usize;

    /// An equivariant lift of a base tangent vector `w` at `u`, used to
    /// complete the semi-connection over directions outside `E`.
    fn transport_lift(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64>;

    fn base_ambient(&self) -> usize {
        self.base().ambient_dim()
    }

    fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        u.rows(0, self.base_ambient()).into_owned()
    }

    fn fibre_matrix(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let nb = self.base_ambient();
        linalg::unvec(&u.as_slice()[nb..], self.fibre_rows(), self.group().n())
    }

    fn join(&self, x: &DVector<f64>, f: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len() + f.len(), x.iter().chain(f.iter()).cloned())
    }

    /// Matrix of `T pi`, `[I 0]`.
    fn tpi(&self) -> DMatrix<f64> {
        let nb = self.base_ambient();
        let mut t = DMatrix::zeros(nb, self.total().ambient_dim());
        t.view_mut((0, 0), (nb, nb)).fill_with_identity();
        t
    }

    /// `u g`.
    fn right_act(&self, u: &DVector<f64>, g: &DMatrix<f64>) -> DVector<f64> {
        self.join(&self.project(u), &(self.fibre_matrix(u) * g))
    }

    /// The linear map `R_g` on ambient coordinates.
    fn right_action_matrix(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let nb = self.base_ambient();
        let r = self.fibre_rows();
        let nn = self.total().ambient_dim();
        let mut out = DMatrix::zeros(nn, nn);
        out.view_mut((0, 0), (nb, nb)).fill_with_identity();
        // vec(F g) = (g^T kron I_r) vec(F)
        let block = g.transpose().kronecker(&DMatrix::<f64>::identity(r, r));
        out.view_mut((nb, nb), (nn - nb, nn - nb)).copy_from(&block);
        out
    }
}

pub type BundleRef = Arc<dyn PrincipalBundle>;

/// A Hörmander generator on the total space of a bundle that is equivariant
/// and lifts a generator on the base.
#[derive(Clone, Debug)]
pub struct BundleSystem {
    bundle: BundleRef,
    system: HormanderSystem,
    base: HormanderSystem,
    group: MatrixGroup,
}

impl BundleSystem {
    /// Checks by probing that `T pi X~(u) = X(pi u)`, `T pi A~(u) = A(pi u)`
    /// and that the fields commute with right translations.
    pub fn new(bundle: BundleRef, system: HormanderSystem, base: HormanderSystem, rng: &mut dyn RngCore) -> Result<Self> {
        if system.manifold().ambient_dim() != bundle.total().ambient_dim() {
            return Err(Error::Config("generator does not live on the total space".into()));
        }
        let group = bundle.group().clone();
        let out = Self { bundle, system, base, group };
        out.probe_lift(20, rng)?;
        out.probe_field_equivariance(20, rng)?;
        Ok(out)
    }

    /// Same generator, with the Lie algebra coordinates taken in another
    /// basis of the same algebra.
    pub fn with_group_basis(&self, group: MatrixGroup) -> Self {
        Self { group, ..self.clone() }
    }

    /// The generator on `P` replaced by `system` (for example its horizontal
    /// part); the base generator is kept.
    pub fn with_system(&self, system: HormanderSystem, rng: &mut dyn RngCore) -> Result<Self> {
        let out = Self { system, ..self.clone() };
        out.probe_lift(20, rng)?;
        Ok(out)
    }

    pub fn bundle(&self) -> &BundleRef {
        &self.bundle
    }

    pub fn system(&self) -> &HormanderSystem {
        &self.system
    }

    pub fn base(&self) -> &HormanderSystem {
        &self.base
    }

    pub fn group(&self) -> &MatrixGroup {
        &self.group
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        self.bundle.total().sample(rng)
    }

    fn probe_lift(&self, probes: usize, rng: &mut dyn RngCore) -> Result<()> {
        let t = self.bundle.tpi();
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let u = self.sample(rng);
            let x = self.bundle.project(&u);
            let fields = &t * self.system.x_matrix(&u);
            let base = self.base.x_matrix(&x);
            if fields.shape() != base.shape() {
                return Err(Error::Config(format!(
                    "bundle generator has {} driving fields, base has {}",
                    fields.ncols(),
                    base.ncols()
                )));
            }
            worst = worst.max((fields - base).norm());
            worst = worst.max((&t * self.system.drift(&u) - self.base.drift(&x)).norm());
        }
        if worst > EQUIVARIANCE_TOL {
            return Err(Error::Config(format!("bundle generator is not a lift of the base generator (defect {worst:.3e})")));
        }
        Ok(())
    }

    fn probe_field_equivariance(&self, probes: usize, rng: &mut dyn RngCore) -> Result<()> {
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let u = self.sample(rng);
            let g = self.group.sample(rng);
            let r = self.bundle.right_action_matrix(&g);
            let ug = self.bundle.right_act(&u, &g);
            let lhs = self.system.x_matrix(&ug);
            let rhs = &r * self.system.x_matrix(&u);
            worst = worst.max((lhs - rhs).norm());
            worst = worst.max((self.system.drift(&ug) - &r * self.system.drift(&u)).norm());
        }
        if worst > EQUIVARIANCE_TOL {
            return Err(Error::NotEquivariant { defect: worst });
        }
        Ok(())
    }

    /// Operator-level equivariance probe `B(f o R_g)(u) = (B f)(u g)` over
    /// random quadratic test functions on the ambient space of `P`.
    pub fn equivariance_defect(&self, probes: usize, rng: &mut dyn RngCore) -> Result<f64> {
        let dim = self.bundle.total().ambient_dim();
        let mut worst: f64 = 0.0;
        for k in 0..probes {
            let f = random_quadratic(dim, k, rng);
            let u = self.sample(rng);
            let g = self.group.sample(rng);
            let pulled = LinearPullback { inner: f.clone(), map: self.bundle.right_action_matrix(&g) };
            let lhs = self.system.apply(&pulled, &u)?;
            let rhs = self.system.apply(f.as_ref(), &self.bundle.right_act(&u, &g))?;
            worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
        }
        Ok(worst)
    }

    /// [`equivariance_defect`](Self::equivariance_defect) as a hard check.
    pub fn check_equivariant(&self, probes: usize, rng: &mut dyn RngCore) -> Result<()> {
        let d = self.equivariance_defect(probes, rng)?;
        if d > EQUIVARIANCE_TOL {
            return Err(Error::NotEquivariant { defect: d });
        }
        Ok(())
    }
}

/// A quadratic polynomial in `dim` variables with random coefficients, one
/// of a small rotating family of monomial patterns.
pub fn random_quadratic(dim: usize, k: usize, rng: &mut dyn RngCore) -> ScalarRef {
    let c = crate::geometry::spaces::gaussian_vector(rng, 4);
    let i = k % dim;
    let j = (k * 7 + 3) % dim;
    let l = (k * 5 + 1) % dim;
    Arc::new(
        Polynomial::new(dim)
            .term(c[0], &[(i, 1)])
            .term(c[1], &[(i, 1), (j, 1)])
            .term(c[2], &[(l, 2)])
            .term(c[3], &[(j, 1), (l, 1)]),
    )
}
