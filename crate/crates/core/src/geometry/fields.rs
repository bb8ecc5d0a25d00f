//! Scalar fields, one-forms and vector-field maps on an ambient
//! neighbourhood of an embedded manifold.
//!
//! Derivatives are optional. When a field supplies them, operator
//! application uses them directly; otherwise it falls back to finite
//! differences along retraction curves.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// A real function on (a neighbourhood of) the manifold.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;

    /// Ambient gradient, when known in closed form.
    fn gradient(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// Ambient Hessian, when known in closed form.
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

pub type ScalarRef = Arc<dyn ScalarField>;

/// A differential one-form, represented by an ambient covector field
/// `phi(x)` so that `phi_x(v) = <phi(x), v>` for tangent `v`.
pub trait OneForm: Send + Sync {
    fn covector(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `J[(i, j)] = d phi_i / d x_j`, when known in closed form.
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Hessian of `x -> <phi(x), w>` for a fixed `w`, when known in closed
    /// form.
    fn covector_hessian(&self, _x: &DVector<f64>, _w: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    fn eval(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.covector(x).dot(v)
    }
}

pub type OneFormRef = Arc<dyn OneForm>;

/// A family of vector fields `X(x): R^m -> R^N`, stored column-wise.
///
/// A single vector field (a drift) is a map with one column.
pub trait FieldMap: Send + Sync {
    fn ambient_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `d/ds X(x + s v)` at `s = 0`, when known in closed form.
    fn derivative(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// `d^2/ds dt X(x + s v + t w)`, when known in closed form.
    fn second_derivative(&self, _x: &DVector<f64>, _v: &DVector<f64>, _w: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// `X(x) e`.
    fn apply(&self, x: &DVector<f64>, e: &DVector<f64>) -> DVector<f64> {
        self.eval(x) * e
    }

    fn column(&self, x: &DVector<f64>, j: usize) -> DVector<f64> {
        self.eval(x).column(j).into_owned()
    }
}

pub type FieldRef = Arc<dyn FieldMap>;

type MatFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type DerivFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;
type Deriv2Fn = dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A [`FieldMap`] assembled from closures.
#[derive(Clone)]
pub struct FnFieldMap {
    ambient: usize,
    noise: usize,
    eval: Arc<MatFn>,
    derivative: Option<Arc<DerivFn>>,
    second: Option<Arc<Deriv2Fn>>,
}

impl FnFieldMap {
    pub fn new(
        ambient: usize,
        noise: usize,
        eval: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            ambient,
            noise,
            eval: Arc::new(eval),
            derivative: None,
            second: None,
        }
    }

    pub fn with_derivative(
        mut self,
        d: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.derivative = Some(Arc::new(d));
        self
    }

    pub fn with_second_derivative(
        mut self,
        d: impl Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.second = Some(Arc::new(d));
        self
    }

    /// The zero map `R^noise -> R^ambient` (all derivatives known).
    pub fn zero(ambient: usize, noise: usize) -> Self {
        Self::new(ambient, noise, move |_| DMatrix::zeros(ambient, noise))
            .with_derivative(move |_, _| DMatrix::zeros(ambient, noise))
            .with_second_derivative(move |_, _, _| DMatrix::zeros(ambient, noise))
    }

    /// Constant columns.
    pub fn constant(columns: DMatrix<f64>) -> Self {
        let (a, m) = columns.shape();
        let c = columns.clone();
        Self::new(a, m, move |_| c.clone())
            .with_derivative(move |_, _| DMatrix::zeros(a, m))
            .with_second_derivative(move |_, _, _| DMatrix::zeros(a, m))
    }

    pub fn shared(self) -> FieldRef {
        Arc::new(self)
    }
}

impl FieldMap for FnFieldMap {
    fn ambient_dim(&self) -> usize {
        self.ambient
    }

    fn noise_dim(&self) -> usize {
        self.noise
    }

    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.eval)(x)
    }

    fn derivative(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.derivative.as_ref().map(|d| d(x, v))
    }

    fn second_derivative(&self, x: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.second.as_ref().map(|d| d(x, v, w))
    }
}

/// Horizontal concatenation `[X | W]` of two field maps on the same space.
pub struct StackedFieldMap {
    parts: Vec<FieldRef>,
}

impl StackedFieldMap {
    pub fn new(parts: Vec<FieldRef>) -> Self {
        assert!(!parts.is_empty());
        Self { parts }
    }

    fn hcat(blocks: Vec<DMatrix<f64>>) -> DMatrix<f64> {
        let rows = blocks[0].nrows();
        let cols = blocks.iter().map(|b| b.ncols()).sum();
        let mut out = DMatrix::zeros(rows, cols);
        let mut c = 0;
        for b in blocks {
            out.view_mut((0, c), b.shape()).copy_from(&b);
            c += b.ncols();
        }
        out
    }
}

impl FieldMap for StackedFieldMap {
    fn ambient_dim(&self) -> usize {
        self.parts[0].ambient_dim()
    }

    fn noise_dim(&self) -> usize {
        self.parts.iter().map(|p| p.noise_dim()).sum()
    }

    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        Self::hcat(self.parts.iter().map(|p| p.eval(x)).collect())
    }

    fn derivative(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<DMatrix<f64>> {
        let blocks: Option<Vec<_>> = self.parts.iter().map(|p| p.derivative(x, v)).collect();
        blocks.map(Self::hcat)
    }

    fn second_derivative(&self, x: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> Option<DMatrix<f64>> {
        let blocks: Option<Vec<_>> = self.parts.iter().map(|p| p.second_derivative(x, v, w)).collect();
        blocks.map(Self::hcat)
    }
}

// ---------------------------------------------------------------------------
// Scalar test functions

/// Sparse polynomial in the ambient coordinates.
#[derive(Clone, Debug)]
pub struct Polynomial {
    dim: usize,
    /// (coefficient, exponent per coordinate)
    terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn new(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    /// Add `coef * prod_i x_i^{powers[i]}`; `powers` lists `(index, power)`.
    pub fn term(mut self, coef: f64, powers: &[(usize, u32)]) -> Self {
        let mut exps = vec![0u32; self.dim];
        for &(i, p) in powers {
            exps[i] += p;
        }
        self.terms.push((coef, exps));
        self
    }

    /// The coordinate function `x_i`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        Self::new(dim).term(1.0, &[(i, 1)])
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim).term(c, &[])
    }

    fn monomial(x: &DVector<f64>, exps: &[u32], skip: &[usize]) -> f64 {
        // value of the monomial after differentiating once in each index of `skip`
        let mut e = exps.to_vec();
        let mut factor = 1.0;
        for &i in skip {
            if e[i] == 0 {
                return 0.0;
            }
            factor *= e[i] as f64;
            e[i] -= 1;
        }
        factor * e.iter().enumerate().map(|(i, &p)| x[i].powi(p as i32)).product::<f64>()
    }
}

impl ScalarField for Polynomial {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().map(|(c, e)| c * Self::monomial(x, e, &[])).sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_fn(self.dim, |i, _| {
            self.terms.iter().map(|(c, e)| c * Self::monomial(x, e, &[i])).sum()
        }))
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_fn(self.dim, self.dim, |i, j| {
            self.terms.iter().map(|(c, e)| c * Self::monomial(x, e, &[i, j])).sum()
        }))
    }
}

/// `amplitude * sin(<k, x> + phase)`.
#[derive(Clone, Debug)]
pub struct Trig {
    pub amplitude: f64,
    pub wave: DVector<f64>,
    pub phase: f64,
}

impl ScalarField for Trig {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.amplitude * (self.wave.dot(x) + self.phase).sin()
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(&self.wave * (self.amplitude * (self.wave.dot(x) + self.phase).cos()))
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(&self.wave * self.wave.transpose() * (-self.amplitude * (self.wave.dot(x) + self.phase).sin()))
    }
}

/// Pointwise product `f g`.
#[derive(Clone)]
pub struct ProductField(pub ScalarRef, pub ScalarRef);

impl ScalarField for ProductField {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.0.value(x) * self.1.value(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let (gf, gg) = (self.0.gradient(x)?, self.1.gradient(x)?);
        Some(gf * self.1.value(x) + gg * self.0.value(x))
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (gf, gg) = (self.0.gradient(x)?, self.1.gradient(x)?);
        let (hf, hg) = (self.0.hessian(x)?, self.1.hessian(x)?);
        Some(hf * self.1.value(x) + hg * self.0.value(x) + &gf * gg.transpose() + &gg * gf.transpose())
    }
}

/// `f(L x)` for a fixed linear map `L` between ambient spaces.
#[derive(Clone)]
pub struct LinearPullback {
    pub inner: ScalarRef,
    pub map: DMatrix<f64>,
}

impl ScalarField for LinearPullback {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.inner.value(&(&self.map * x))
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.map.transpose() * self.inner.gradient(&(&self.map * x))?)
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.map.transpose() * self.inner.hessian(&(&self.map * x))? * &self.map)
    }
}

/// A closure with no derivative information.
pub struct FnScalar<F>(pub F);

impl<F> ScalarField for FnScalar<F>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
{
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.0)(x)
    }
}

// ---------------------------------------------------------------------------
// One-forms

/// The exact form `df`.
#[derive(Clone)]
pub struct ExactForm(pub ScalarRef);

impl OneForm for ExactForm {
    fn covector(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.gradient(x).expect("exact form needs an analytic gradient")
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.0.hessian(x)
    }
}

/// Restriction of a constant ambient covector, e.g. `dx_k`.
#[derive(Clone, Debug)]
pub struct ConstantForm(pub DVector<f64>);

impl ConstantForm {
    pub fn coordinate(dim: usize, k: usize) -> Self {
        let mut c = DVector::zeros(dim);
        c[k] = 1.0;
        Self(c)
    }
}

impl OneForm for ConstantForm {
    fn covector(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.0.clone()
    }

    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.0.len();
        Some(DMatrix::zeros(n, n))
    }

    fn covector_hessian(&self, _x: &DVector<f64>, _w: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.0.len();
        Some(DMatrix::zeros(n, n))
    }
}

/// `f * phi`.
#[derive(Clone)]
pub struct ScaledForm(pub ScalarRef, pub OneFormRef);

impl OneForm for ScaledForm {
    fn covector(&self, x: &DVector<f64>) -> DVector<f64> {
        self.1.covector(x) * self.0.value(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let g = self.0.gradient(x)?;
        let j = self.1.jacobian(x)?;
        Some(j * self.0.value(x) + self.1.covector(x) * g.transpose())
    }

    fn covector_hessian(&self, x: &DVector<f64>, w: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (s, gs, hs) = (self.0.value(x), self.0.gradient(x)?, self.0.hessian(x)?);
        let q = self.1.eval(x, w);
        let gq = self.1.jacobian(x)?.transpose() * w;
        let hq = self.1.covector_hessian(x, w)?;
        Some(hs * q + &gs * gq.transpose() + gq * gs.transpose() + hq * s)
    }
}

/// `sum_k a_k(x) dx_k` with polynomial coefficients.
#[derive(Clone)]
pub struct PolynomialForm(pub Vec<Polynomial>);

impl OneForm for PolynomialForm {
    fn covector(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|p| p.value(x)))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.0.len();
        let mut j = DMatrix::zeros(n, n);
        for (i, p) in self.0.iter().enumerate() {
            j.set_row(i, &p.gradient(x)?.transpose());
        }
        Some(j)
    }

    fn covector_hessian(&self, x: &DVector<f64>, w: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.0.len();
        let mut h = DMatrix::zeros(n, n);
        for (p, c) in self.0.iter().zip(w.iter()) {
            h += p.hessian(x)? * *c;
        }
        Some(h)
    }
}

/// A one-form from a closure giving the covector.
pub struct FnForm<F>(pub F);

impl<F> OneForm for FnForm<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn covector(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.0)(x)
    }
}
