use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg;

/// Residual allowed on [`ManifoldPoint`] coordinates.
pub const POINT_TOL: f64 = 1e-10;
/// Residual allowed on the tangency of a [`TangentVector`].
pub const TANGENT_TOL: f64 = 1e-10;

/// An embedded manifold `M = { x in R^N : c(x) = 0 }` together with a
/// retraction back onto it.
///
/// All ambient quantities are column vectors of length [`ambient_dim`].
/// Matrices that are points (frames, group elements) are flattened
/// column-major, see [`linalg::vec_of`].
///
/// [`ambient_dim`]: Manifold::ambient_dim
pub trait Manifold: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn ambient_dim(&self) -> usize;
    fn intrinsic_dim(&self) -> usize;

    /// The defining constraint; zero exactly on the manifold.
    fn constraint(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Jacobian of [`constraint`](Manifold::constraint), `k x N`.
    fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Derivative of the constraint Jacobian along the ambient direction `v`.
    fn constraint_jacobian_derivative(&self, x: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let h = 1e-5;
        (self.constraint_jacobian(&(x + v * h)) - self.constraint_jacobian(&(x - v * h))) / (2.0 * h)
    }

    /// Map an ambient point near the manifold onto it.
    fn retract(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Orthogonal projector onto `T_xM` in ambient coordinates.
    fn projector(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.ambient_dim();
        let j = self.constraint_jacobian(x);
        if j.nrows() == 0 {
            return DMatrix::identity(n, n);
        }
        let gram = &j * j.transpose();
        let inv = linalg::pinv(&gram);
        DMatrix::identity(n, n) - j.transpose() * inv * j
    }

    /// `a - b` as an ambient displacement; overridden where coordinates wrap.
    fn difference(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        a - b
    }

    fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.difference(a, b).norm()
    }

    /// A random point, used for probing invariants.
    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64>;
}

pub type ManifoldRef = Arc<dyn Manifold>;

/// Retraction residual check shared by the concrete manifolds.
pub(crate) fn check_retracted(m: &dyn Manifold, input: &DVector<f64>, out: DVector<f64>) -> Result<DVector<f64>> {
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::RetractionFailure {
            input: input.iter().cloned().collect(),
            reason: "non-finite result".into(),
        });
    }
    let res = m.constraint(&out).norm();
    if res > 1e-12 * (1.0 + out.norm()) {
        return Err(Error::RetractionFailure {
            input: input.iter().cloned().collect(),
            reason: format!("constraint residual {res:.3e} after retraction"),
        });
    }
    Ok(out)
}

/// A point on an embedded manifold.
#[derive(Clone)]
pub struct ManifoldPoint {
    coords: DVector<f64>,
    manifold: ManifoldRef,
}

impl fmt::Debug for ManifoldPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ManifoldPoint({}, {:?})", self.manifold.name(), self.coords.as_slice())
    }
}

impl ManifoldPoint {
    pub fn new(manifold: ManifoldRef, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != manifold.ambient_dim() {
            return Err(Error::Config(format!(
                "point has {} coordinates, {} expects {}",
                coords.len(),
                manifold.name(),
                manifold.ambient_dim()
            )));
        }
        let res = manifold.constraint(&coords).norm();
        if res > POINT_TOL {
            return Err(Error::Domain {
                what: format!("point is off {}", manifold.name()),
                residual: res,
            });
        }
        Ok(Self { coords, manifold })
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn manifold(&self) -> &ManifoldRef {
        &self.manifold
    }

    pub fn projector(&self) -> DMatrix<f64> {
        self.manifold.projector(&self.coords)
    }
}

/// A tangent vector `v in T_xM`, stored in ambient coordinates.
#[derive(Clone, Debug)]
pub struct TangentVector {
    base: ManifoldPoint,
    vec: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: ManifoldPoint, vec: DVector<f64>) -> Result<Self> {
        let p = base.projector();
        let res = (&vec - &p * &vec).norm();
        if res > TANGENT_TOL * (1.0 + vec.norm()) {
            return Err(Error::Domain {
                what: "vector is not tangent".into(),
                residual: res,
            });
        }
        Ok(Self { base, vec })
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn vec(&self) -> &DVector<f64> {
        &self.vec
    }
}

/// Largest admissible Gram condition number of a frame.
pub const FRAME_MAX_CONDITION: f64 = 1e8;

/// A linear isomorphism `u: R^n -> T_xM`, stored as an `N x n` matrix whose
/// columns are tangent at the base point.
#[derive(Clone, Debug)]
pub struct Frame {
    base: ManifoldPoint,
    columns: DMatrix<f64>,
}

impl Frame {
    pub fn new(base: ManifoldPoint, columns: DMatrix<f64>) -> Result<Self> {
        let m = base.manifold().clone();
        if columns.nrows() != m.ambient_dim() || columns.ncols() != m.intrinsic_dim() {
            return Err(Error::Config(format!(
                "frame must be {}x{}, got {}x{}",
                m.ambient_dim(),
                m.intrinsic_dim(),
                columns.nrows(),
                columns.ncols()
            )));
        }
        let p = base.projector();
        let res = (&columns - &p * &columns).norm();
        if res > TANGENT_TOL * (1.0 + columns.norm()) {
            return Err(Error::Domain {
                what: "frame columns are not tangent".into(),
                residual: res,
            });
        }
        let gram = columns.transpose() * &columns;
        let cond = linalg::condition_number(&gram);
        if !(cond < FRAME_MAX_CONDITION) {
            return Err(Error::FrameDegenerate { time: 0.0, condition: cond });
        }
        Ok(Self { base, columns })
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// `u^{-1}` on `T_xM`, as an `n x N` matrix.
    pub fn inverse(&self) -> DMatrix<f64> {
        linalg::pinv(&self.columns)
    }
}

/// Project an ambient point onto the manifold.
pub fn retract(x_ambient: &DVector<f64>, m: &ManifoldRef) -> Result<ManifoldPoint> {
    let y = m.retract(x_ambient)?;
    ManifoldPoint::new(m.clone(), y)
}

/// Orthogonal projection of an ambient vector onto `T_xM`.
pub fn tangent_project(x: &ManifoldPoint, w: &DVector<f64>) -> TangentVector {
    let v = x.projector() * w;
    TangentVector { base: x.clone(), vec: v }
}
