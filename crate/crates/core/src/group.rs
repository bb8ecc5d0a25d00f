//! Matrix structure groups `SO(n)` and `GL(n)` with a fixed basis of the Lie
//! algebra.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::geometry::spaces::gaussian_vector;
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKind {
    SpecialOrthogonal,
    General,
}

/// A matrix group together with a basis `A_1..A_k` of its Lie algebra.
#[derive(Clone, Debug)]
pub struct MatrixGroup {
    kind: GroupKind,
    n: usize,
    basis: Vec<DMatrix<f64>>,
    /// `n^2 x k` matrix whose columns are the vectorized basis elements.
    basis_matrix: DMatrix<f64>,
    coords_map: DMatrix<f64>,
}

impl MatrixGroup {
    fn with_basis(kind: GroupKind, n: usize, basis: Vec<DMatrix<f64>>) -> Self {
        let cols: Vec<DVector<f64>> = basis.iter().map(linalg::vec_of).collect();
        let basis_matrix = DMatrix::from_columns(&cols);
        let coords_map = linalg::pinv(&basis_matrix);
        Self { kind, n, basis, basis_matrix, coords_map }
    }

    /// `so(n)` with basis `E_ij - E_ji`, `i < j`.
    pub fn so(n: usize) -> Self {
        let mut basis = Vec::new();
        for j in 0..n {
            for i in 0..j {
                let mut a = DMatrix::zeros(n, n);
                a[(i, j)] = 1.0;
                a[(j, i)] = -1.0;
                basis.push(a);
            }
        }
        Self::with_basis(GroupKind::SpecialOrthogonal, n, basis)
    }

    /// `gl(n)` with the elementary basis `E_ij` in column-major order, so
    /// coordinates are the column-major entries.
    pub fn gl(n: usize) -> Self {
        let mut basis = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let mut a = DMatrix::zeros(n, n);
                a[(i, j)] = 1.0;
                basis.push(a);
            }
        }
        Self::with_basis(GroupKind::General, n, basis)
    }

    /// Same group with the basis replaced by `A'_l = sum_k r_kl A_k` for an
    /// invertible `k x k` matrix `r`.
    pub fn rebased(&self, r: &DMatrix<f64>) -> Self {
        let basis = (0..self.dim())
            .map(|l| (0..self.dim()).fold(DMatrix::zeros(self.n, self.n), |acc, k| acc + &self.basis[k] * r[(k, l)]))
            .collect();
        Self::with_basis(self.kind, self.n, basis)
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    /// Size of the matrices.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of the Lie algebra.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[DMatrix<f64>] {
        &self.basis
    }

    pub fn identity(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n)
    }

    /// `sum_k c_k A_k`.
    pub fn element(&self, coords: &DVector<f64>) -> DMatrix<f64> {
        linalg::unvec((&self.basis_matrix * coords).as_slice(), self.n, self.n)
    }

    /// Coordinates of a Lie-algebra element in the basis (least squares for
    /// matrices outside the algebra).
    pub fn coords(&self, a: &DMatrix<f64>) -> DVector<f64> {
        &self.coords_map * linalg::vec_of(a)
    }

    /// Distance of a matrix from the Lie algebra.
    pub fn algebra_residual(&self, a: &DMatrix<f64>) -> f64 {
        (self.element(&self.coords(a)) - a).norm()
    }

    pub fn exp(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        a.clone().exp()
    }

    pub fn bracket(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a * b - b * a
    }

    /// Structure constants `[A_i, A_j] = sum_k c^k_ij A_k`, indexed `[i][j][k]`.
    pub fn structure_constants(&self) -> Vec<Vec<DVector<f64>>> {
        self.basis
            .iter()
            .map(|a| self.basis.iter().map(|b| self.coords(&Self::bracket(a, b))).collect())
            .collect()
    }

    /// Largest distance of a basis bracket from the algebra.
    pub fn closure_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in &self.basis {
            for b in &self.basis {
                worst = worst.max(self.algebra_residual(&Self::bracket(a, b)));
            }
        }
        worst
    }

    /// `Ad(g) a = g a g^{-1}`.
    pub fn ad(&self, g: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
        let gi = g.clone().try_inverse().expect("group element is invertible");
        g * a * gi
    }

    /// Matrix of `Ad(g)` in basis coordinates.
    pub fn ad_matrix(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.basis.iter().map(|a| self.coords(&self.ad(g, a))).collect();
        DMatrix::from_columns(&cols)
    }

    /// Distance from the group: `|g^T g - I| + |det g - 1|` for `SO(n)`, zero
    /// for invertible `g` in `GL(n)`.
    pub fn residual(&self, g: &DMatrix<f64>) -> f64 {
        match self.kind {
            GroupKind::SpecialOrthogonal => {
                (g.transpose() * g - self.identity()).norm() + (g.determinant() - 1.0).abs()
            }
            GroupKind::General => {
                if g.determinant().abs() > 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Nearest group element (polar factor for `SO(n)`).
    pub fn reproject(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        match self.kind {
            GroupKind::SpecialOrthogonal => linalg::polar(g),
            GroupKind::General => g.clone(),
        }
    }

    /// A random element; for `GL(n)` with condition number below `1e2`.
    pub fn sample(&self, rng: &mut dyn RngCore) -> DMatrix<f64> {
        match self.kind {
            GroupKind::SpecialOrthogonal => {
                let mut q = linalg::polar(&linalg::unvec(gaussian_vector(rng, self.n * self.n).as_slice(), self.n, self.n));
                if q.determinant() < 0.0 {
                    q.column_mut(0).neg_mut();
                }
                q
            }
            GroupKind::General => loop {
                let a = linalg::unvec(gaussian_vector(rng, self.n * self.n).as_slice(), self.n, self.n) * 0.4;
                let g = self.identity() + a;
                if linalg::condition_number(&g) < 1e2 && g.determinant() > 0.0 {
                    break g;
                }
            },
        }
    }

    /// A random Lie-algebra element with standard Gaussian coordinates.
    pub fn sample_algebra(&self, rng: &mut dyn RngCore) -> DMatrix<f64> {
        self.element(&gaussian_vector(rng, self.dim()))
    }
}
