//! Concrete embedded manifolds: round spheres, flat tori, `SO(n)` and
//! products of those.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::manifold::{check_retracted, Manifold, ManifoldRef};
use crate::error::{Error, Result};
use crate::linalg;

/// Unit sphere `S^{N-1}` in `R^N`.
#[derive(Debug, Clone)]
pub struct Sphere {
    ambient: usize,
}

impl Sphere {
    pub fn new(ambient: usize) -> Self {
        assert!(ambient >= 2, "sphere needs ambient dimension >= 2");
        Self { ambient }
    }

    pub fn shared(ambient: usize) -> ManifoldRef {
        Arc::new(Self::new(ambient))
    }
}

impl Manifold for Sphere {
    fn name(&self) -> String {
        format!("S{}", self.ambient - 1)
    }

    fn ambient_dim(&self) -> usize {
        self.ambient
    }

    fn intrinsic_dim(&self) -> usize {
        self.ambient - 1
    }

    fn constraint(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x.norm_squared() - 1.0)
    }

    fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, x.len(), (x * 2.0).as_slice())
    }

    fn constraint_jacobian_derivative(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), (v * 2.0).as_slice())
    }

    fn retract(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let r = x.norm();
        if !r.is_finite() || r < 1e-8 {
            return Err(Error::RetractionFailure {
                input: x.iter().cloned().collect(),
                reason: "radial normalization of a point at the origin".into(),
            });
        }
        check_retracted(self, x, x / r)
    }

    fn projector(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.ambient;
        DMatrix::identity(n, n) - x * x.transpose() / x.norm_squared()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        loop {
            let g = gaussian_vector(rng, self.ambient);
            let r = g.norm();
            if r > 1e-3 {
                return g / r;
            }
        }
    }
}

pub fn gaussian_vector(rng: &mut dyn RngCore, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Flat torus `R^d / 2 pi Z^d` with coordinates reduced to `[0, 2 pi)`.
#[derive(Debug, Clone)]
pub struct FlatTorus {
    dim: usize,
}

impl FlatTorus {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn shared(dim: usize) -> ManifoldRef {
        Arc::new(Self::new(dim))
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn wrapped_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

impl Manifold for FlatTorus {
    fn name(&self) -> String {
        format!("T{}", self.dim)
    }

    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn intrinsic_dim(&self) -> usize {
        self.dim
    }

    fn constraint(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn constraint_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(0, self.dim)
    }

    fn constraint_jacobian_derivative(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(0, self.dim)
    }

    fn retract(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::RetractionFailure {
                input: x.iter().cloned().collect(),
                reason: "non-finite coordinate".into(),
            });
        }
        Ok(x.map(wrap_angle))
    }

    fn projector(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }

    fn difference(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        a.zip_map(b, wrapped_difference)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_fn(self.dim, |_, _| rng.random::<f64>() * TAU)
    }
}

/// `SO(n)` as the matrix manifold `{ g : g^T g = I, det g = 1 }` in
/// `R^{n x n}` (column-major), with the polar retraction.
#[derive(Debug, Clone)]
pub struct SpecialOrthogonal {
    n: usize,
}

impl SpecialOrthogonal {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn shared(n: usize) -> ManifoldRef {
        Arc::new(Self::new(n))
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (i..self.n).map(move |j| (i, j)))
    }

    fn jacobian_of(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let rows: Vec<_> = self.pairs().collect();
        let mut jac = DMatrix::zeros(rows.len(), n * n);
        for (r, &(i, j)) in rows.iter().enumerate() {
            // c_ij = sum_k g_ki g_kj - delta_ij
            for k in 0..n {
                jac[(r, k + n * i)] += g[(k, j)];
                jac[(r, k + n * j)] += g[(k, i)];
            }
        }
        jac
    }
}

impl Manifold for SpecialOrthogonal {
    fn name(&self) -> String {
        format!("SO{}", self.n)
    }

    fn ambient_dim(&self) -> usize {
        self.n * self.n
    }

    fn intrinsic_dim(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    fn constraint(&self, x: &DVector<f64>) -> DVector<f64> {
        let g = linalg::unvec(x.as_slice(), self.n, self.n);
        let gtg = g.transpose() * &g;
        DVector::from_iterator(
            self.n * (self.n + 1) / 2,
            self.pairs().map(|(i, j)| gtg[(i, j)] - if i == j { 1.0 } else { 0.0 }),
        )
    }

    fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian_of(&linalg::unvec(x.as_slice(), self.n, self.n))
    }

    fn constraint_jacobian_derivative(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian_of(&linalg::unvec(v.as_slice(), self.n, self.n))
    }

    fn retract(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let g = linalg::unvec(x.as_slice(), self.n, self.n);
        if g.iter().any(|v| !v.is_finite()) || g.determinant() <= 0.0 {
            return Err(Error::RetractionFailure {
                input: x.iter().cloned().collect(),
                reason: "polar retraction needs a finite matrix with positive determinant".into(),
            });
        }
        let q = linalg::polar(&g);
        check_retracted(self, x, linalg::vec_of(&q))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        loop {
            let g = linalg::unvec(gaussian_vector(rng, self.n * self.n).as_slice(), self.n, self.n);
            if g.determinant() > 1e-3 {
                return linalg::vec_of(&linalg::polar(&g));
            }
        }
    }
}

/// Cartesian product `M1 x M2` with concatenated ambient coordinates.
#[derive(Debug, Clone)]
pub struct Product {
    first: ManifoldRef,
    second: ManifoldRef,
}

impl Product {
    pub fn new(first: ManifoldRef, second: ManifoldRef) -> Self {
        Self { first, second }
    }

    pub fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n1 = self.first.ambient_dim();
        (x.rows(0, n1).into_owned(), x.rows(n1, x.len() - n1).into_owned())
    }

    pub fn join(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).cloned())
    }

    pub fn first(&self) -> &ManifoldRef {
        &self.first
    }

    pub fn second(&self) -> &ManifoldRef {
        &self.second
    }

    fn block_diag(a: DMatrix<f64>, b: DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
        out.view_mut((0, 0), a.shape()).copy_from(&a);
        out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(&b);
        out
    }
}

impl Manifold for Product {
    fn name(&self) -> String {
        format!("{}x{}", self.first.name(), self.second.name())
    }

    fn ambient_dim(&self) -> usize {
        self.first.ambient_dim() + self.second.ambient_dim()
    }

    fn intrinsic_dim(&self) -> usize {
        self.first.intrinsic_dim() + self.second.intrinsic_dim()
    }

    fn constraint(&self, x: &DVector<f64>) -> DVector<f64> {
        let (a, b) = self.split(x);
        Self::join(&self.first.constraint(&a), &self.second.constraint(&b))
    }

    fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (a, b) = self.split(x);
        Self::block_diag(self.first.constraint_jacobian(&a), self.second.constraint_jacobian(&b))
    }

    fn constraint_jacobian_derivative(&self, x: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let (a, b) = self.split(x);
        let (va, vb) = self.split(v);
        Self::block_diag(
            self.first.constraint_jacobian_derivative(&a, &va),
            self.second.constraint_jacobian_derivative(&b, &vb),
        )
    }

    fn retract(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (a, b) = self.split(x);
        Ok(Self::join(&self.first.retract(&a)?, &self.second.retract(&b)?))
    }

    fn projector(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (a, b) = self.split(x);
        Self::block_diag(self.first.projector(&a), self.second.projector(&b))
    }

    fn difference(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let (a1, a2) = self.split(a);
        let (b1, b2) = self.split(b);
        Self::join(&self.first.difference(&a1, &b1), &self.second.difference(&a2, &b2))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        Self::join(&self.first.sample(rng), &self.second.sample(rng))
    }
}
