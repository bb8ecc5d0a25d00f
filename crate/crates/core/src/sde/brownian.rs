//! Brownian drivers on a uniform grid, reproducible from `(seed, stream)`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Increments `dB_k ~ N(0, dt I)` of an `m`-dimensional Brownian motion on
/// `t_0 < t_0 + dt < ... < t_0 + K dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    dim: usize,
    dt: f64,
    t0: f64,
    increments: Vec<DVector<f64>>,
    seed: u64,
    stream: u64,
}

/// Number of steps of `t_end / dt`, or a configuration error when that is
/// not an integer.
pub fn grid_steps(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Config(format!("grid needs dt > 0 and T >= 0, got dt = {dt}, T = {t_end}")));
    }
    let n = t_end / dt;
    let k = n.round();
    if (n - k).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::Config(format!("T = {t_end} is not an integral multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

/// Generator for stream `stream` of `seed`. Distinct streams are
/// independent ChaCha20 keystreams.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sample_brownian(m: usize, t_end: f64, dt: f64, seed: u64, stream: u64) -> Result<BrownianPath> {
    let steps = grid_steps(t_end, dt)?;
    let mut rng = stream_rng(seed, stream);
    let s = dt.sqrt();
    let increments = (0..steps)
        .map(|_| DVector::from_iterator(m, (0..m).map(|_| s * rng.sample::<f64, _>(StandardNormal))))
        .collect();
    Ok(BrownianPath { dim: m, dt, t0: 0.0, increments, seed, stream })
}

impl BrownianPath {
    /// A path with prescribed increments (derived noises, tests).
    pub fn from_increments(dt: f64, increments: Vec<DVector<f64>>) -> Self {
        let dim = increments.first().map_or(0, |v| v.len());
        Self { dim, dt, t0: 0.0, increments, seed: 0, stream: 0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.dt * self.steps() as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn increment(&self, k: usize) -> &DVector<f64> {
        &self.increments[k]
    }

    pub fn increments(&self) -> &[DVector<f64>] {
        &self.increments
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + self.dt * k as f64
    }

    /// `B_{t_k} - B_{t_0}` for `k = 0..=K`.
    pub fn values(&self) -> Vec<DVector<f64>> {
        let mut acc = DVector::zeros(self.dim);
        let mut out = Vec::with_capacity(self.steps() + 1);
        out.push(acc.clone());
        for d in &self.increments {
            acc += d;
            out.push(acc.clone());
        }
        out
    }

    /// The same path on the grid with step `factor * dt`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::Config(format!("cannot coarsen {} steps by {factor}", self.steps())));
        }
        let increments = self
            .increments
            .chunks(factor)
            .map(|c| c.iter().fold(DVector::zeros(self.dim), |a, b| a + b))
            .collect();
        Ok(Self { dt: self.dt * factor as f64, increments, ..self.clone() })
    }

    /// The increments from step `k` on, as a path starting at `t_k`.
    pub fn tail(&self, k: usize) -> Self {
        Self { t0: self.time(k), increments: self.increments[k..].to_vec(), ..self.clone() }
    }

    /// The increments of steps `0..k`.
    pub fn head(&self, k: usize) -> Self {
        Self { increments: self.increments[..k].to_vec(), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_stream_reproduce() {
        let a = sample_brownian(3, 1.0, 1e-2, 7, 4).unwrap();
        let b = sample_brownian(3, 1.0, 1e-2, 7, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_brownian(3, 1.0, 1e-2, 7, 5).unwrap());
    }

    #[test]
    fn non_integral_grid_is_rejected() {
        assert!(matches!(sample_brownian(1, 1.0, 0.3, 0, 0), Err(Error::Config(_))));
        assert_eq!(grid_steps(0.5, 1e-3).unwrap(), 500);
    }

    #[test]
    fn increment_variance_is_dt() {
        let dt = 1e-2;
        let p = sample_brownian(1, 1e3, dt, 11, 0).unwrap();
        let xs: Vec<f64> = p.increments().iter().map(|d| d[0]).collect();
        let n = xs.len() as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n;
        // var of the sample second moment of N(0, dt) is 2 dt^2 / n
        let se = (2.0 / n).sqrt() * dt;
        assert!((var - dt).abs() < 3.0 * se, "{var} vs {dt} (se {se})");
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let a = sample_brownian(1, 100.0, 1e-2, 3, 0).unwrap();
        let b = sample_brownian(1, 100.0, 1e-2, 3, 1).unwrap();
        let k = a.steps() as f64;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.increments().iter().zip(b.increments()) {
            sab += x[0] * y[0];
            saa += x[0] * x[0];
            sbb += y[0] * y[0];
        }
        let rho = sab / (saa * sbb).sqrt();
        assert!(rho.abs() < 3.0 / k.sqrt(), "{rho}");
    }

    #[test]
    fn coarsening_preserves_endpoint_values() {
        let p = sample_brownian(2, 1.0, 1.0 / 64.0, 1, 2).unwrap();
        let c = p.coarsen(8).unwrap();
        assert_eq!(c.steps(), 8);
        let (vp, vc) = (p.values(), c.values());
        for k in 0..=8 {
            assert!((&vp[8 * k] - &vc[k]).norm() < 1e-14);
        }
        assert!(p.coarsen(5).is_err());
    }

    #[test]
    fn head_and_tail_split_the_path() {
        let p = sample_brownian(2, 1.0, 0.125, 1, 2).unwrap();
        let (h, t) = (p.head(3), p.tail(3));
        assert_eq!(h.steps() + t.steps(), p.steps());
        assert_eq!(t.increment(0), p.increment(3));
        assert!((t.t0() - 0.375).abs() < 1e-15);
    }
}
