//! Stratonovich Heun steps followed by a retraction onto the manifold.

use nalgebra::{DMatrix, DVector};

use super::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::geometry::manifold::Manifold;
use crate::hormander::HormanderSystem;

/// `dx = X(x) o dB + A(x) dt` on a manifold embedded in `R^N`.
pub trait Sde: Sync {
    fn ambient_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// `N x m` matrix of driving fields.
    fn diffusion(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;
    fn retract(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

impl Sde for HormanderSystem {
    fn ambient_dim(&self) -> usize {
        self.manifold().ambient_dim()
    }

    fn noise_dim(&self) -> usize {
        HormanderSystem::noise_dim(self)
    }

    fn diffusion(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.x_matrix(x)
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        HormanderSystem::drift(self, x)
    }

    fn retract(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.manifold().retract(x)
    }
}

/// Points `x_0..x_K` on the grid of the driving path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub t0: f64,
    pub dt: f64,
    pub points: Vec<DVector<f64>>,
    pub seed: u64,
    pub stream: u64,
}

impl PathSample {
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + self.dt * k as f64
    }

    pub fn last(&self) -> &DVector<f64> {
        self.points.last().expect("paths are never empty")
    }

    /// Apply `f` to every point.
    pub fn map(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Self {
        Self { points: self.points.iter().map(f).collect(), ..self.clone() }
    }
}

/// One Heun predictor-corrector step with retraction of the predictor and
/// of the result.
pub fn heun_step(sde: &dyn Sde, x: &DVector<f64>, db: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
    let (x0, a0) = (sde.diffusion(x), sde.drift(x));
    let pred = sde.retract(&(x + &x0 * db + &a0 * dt))?;
    let (x1, a1) = (sde.diffusion(&pred), sde.drift(&pred));
    sde.retract(&(x + (x0 + x1) * db * 0.5 + (a0 + a1) * (0.5 * dt)))
}

/// Heun integration; `inspect(k, x_k)` runs at every accepted point and may
/// abort the run.
pub fn integrate_inspected(
    sde: &dyn Sde,
    x0: &DVector<f64>,
    path: &BrownianPath,
    mut inspect: impl FnMut(usize, &DVector<f64>) -> Result<()>,
) -> Result<PathSample> {
    if path.dim() != sde.noise_dim() {
        return Err(Error::Config(format!("driver has dimension {}, system needs {}", path.dim(), sde.noise_dim())));
    }
    let mut points = Vec::with_capacity(path.steps() + 1);
    let mut x = x0.clone();
    inspect(0, &x)?;
    points.push(x.clone());
    for k in 0..path.steps() {
        x = heun_step(sde, &x, path.increment(k), path.dt())
            .and_then(|y| inspect(k + 1, &y).map(|_| y))
            .map_err(|e| Error::Integration { step: k, source: Box::new(e) })?;
        points.push(x.clone());
    }
    Ok(PathSample { t0: path.t0(), dt: path.dt(), points, seed: path.seed(), stream: path.stream() })
}

pub fn integrate_stratonovich(sde: &dyn Sde, x0: &DVector<f64>, path: &BrownianPath) -> Result<PathSample> {
    integrate_inspected(sde, x0, path, |_, _| Ok(()))
}

/// Heun for `dx/dt = f(t, x)` with retraction, `steps` steps of size `dt`.
pub fn integrate_ode(
    f: &dyn Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
    retract: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    x0: &DVector<f64>,
    t0: f64,
    dt: f64,
    steps: usize,
) -> Result<PathSample> {
    let mut points = vec![x0.clone()];
    let mut x = x0.clone();
    for k in 0..steps {
        let t = t0 + dt * k as f64;
        let step = || -> Result<DVector<f64>> {
            let f0 = f(t, &x)?;
            let pred = retract(&(&x + &f0 * dt))?;
            let f1 = f(t + dt, &pred)?;
            retract(&(&x + (f0 + f1) * (0.5 * dt)))
        };
        x = step().map_err(|e| Error::Integration { step: k, source: Box::new(e) })?;
        points.push(x.clone());
    }
    Ok(PathSample { t0, dt, points, seed: 0, stream: 0 })
}

/// `sup_k dist(fine_{k s}, coarse_k)` where `s` is the ratio of the steps.
pub fn strong_error(m: &dyn Manifold, fine: &PathSample, coarse: &PathSample) -> Result<f64> {
    let ratio = coarse.dt / fine.dt;
    let s = ratio.round() as usize;
    if s == 0 || (ratio - s as f64).abs() > 1e-9 || fine.steps() != coarse.steps() * s {
        return Err(Error::Config("paths are not on nested grids".into()));
    }
    Ok(coarse.points.iter().enumerate().map(|(k, c)| m.distance(&fine.points[k * s], c)).fold(0.0, f64::max))
}
