//! Built-in scenarios.

use eqdiff::bundle::{BundleSystem, FrameBundle};
use eqdiff::diffeo::GridChart;
use eqdiff::geometry::fields::{OneFormRef, ScalarRef};
use eqdiff::geometry::ManifoldRef;
use eqdiff::hormander::HormanderSystem;
use eqdiff::systems;
use nalgebra::DVector;
use rand::RngCore;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BundleKind {
    /// Frames of the base with the derivative-flow generator.
    Frames,
    /// `T^2 x SO(2)` with independent vertical noise.
    TrivialSo2,
}

/// Numeric defaults of a scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Defaults {
    pub dt: f64,
    pub t_end: f64,
    pub paths: usize,
    pub cloud: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    base: fn() -> HormanderSystem,
    pub bundle: Option<BundleKind>,
    /// Chart in which the diffeo cloud is a regular grid.
    pub chart: Option<fn(usize) -> GridChart>,
    /// `Ric# = c id` on `E` where known in closed form.
    pub ricci: Option<f64>,
    /// The derivative flow preserves the metric.
    pub isometric: bool,
    pub x0: &'static [f64],
    pub defaults: Defaults,
}

const DEFAULTS: Defaults = Defaults { dt: 1e-3, t_end: 0.4, paths: 16, cloud: 256, seed: 7 };

fn s1_rank1() -> HormanderSystem {
    systems::s1_rank1(0.7)
}

fn s2_killing() -> HormanderSystem {
    systems::s2_killing()
}

fn circle(points: usize) -> GridChart {
    GridChart::Circle { points }
}

fn torus(points: usize) -> GridChart {
    GridChart::Torus { side: (points as f64).sqrt().round().max(2.0) as usize }
}

pub fn registry() -> Vec<Scenario> {
    vec![
        Scenario {
            name: "torus-flat",
            summary: "flat 2-torus, X = (d1, d2), no drift",
            base: systems::torus_flat,
            bundle: Some(BundleKind::Frames),
            chart: Some(torus),
            ricci: Some(0.0),
            isometric: true,
            x0: &[0.5, 1.0],
            defaults: DEFAULTS,
        },
        Scenario {
            name: "torus-rank1",
            summary: "flat 2-torus, X = (d1, 0), rank one",
            base: systems::torus_rank1,
            bundle: None,
            chart: Some(torus),
            ricci: Some(0.0),
            isometric: false,
            x0: &[0.5, 1.0],
            defaults: DEFAULTS,
        },
        Scenario {
            name: "s1-rank1",
            summary: "S^1 in R^2 with two gradient fields and a rotation drift",
            base: s1_rank1,
            bundle: Some(BundleKind::Frames),
            chart: Some(circle),
            ricci: Some(0.0),
            isometric: false,
            x0: &[0.921_060_994_002_885_1, 0.389_418_342_308_650_5],
            defaults: Defaults { t_end: 0.5, ..DEFAULTS },
        },
        Scenario {
            name: "s2-gradient",
            summary: "S^2 with the gradient system, generator half the Laplacian",
            base: systems::s2_gradient,
            bundle: None,
            chart: None,
            ricci: Some(1.0),
            isometric: false,
            x0: &[0.0, 0.6, 0.8],
            defaults: DEFAULTS,
        },
        Scenario {
            name: "s2-frames",
            summary: "GL(S^2) with the derivative flow of the gradient system",
            base: systems::s2_gradient,
            bundle: Some(BundleKind::Frames),
            chart: None,
            ricci: Some(1.0),
            isometric: false,
            x0: &[0.0, 0.6, 0.8],
            defaults: DEFAULTS,
        },
        Scenario {
            name: "s2-killing-frames",
            summary: "GL(S^2) with the isometric derivative flow of the rotation system",
            base: s2_killing,
            bundle: Some(BundleKind::Frames),
            chart: None,
            ricci: Some(1.0),
            isometric: true,
            x0: &[0.0, 0.6, 0.8],
            defaults: DEFAULTS,
        },
        Scenario {
            name: "trivial-bundle-so2",
            summary: "T^2 x SO(2) over torus-rank1 with coupled vertical noise and drift",
            base: systems::torus_rank1,
            bundle: Some(BundleKind::TrivialSo2),
            chart: None,
            ricci: Some(0.0),
            isometric: false,
            x0: &[0.5, 1.0],
            defaults: DEFAULTS,
        },
    ]
}

pub fn lookup(name: &str) -> Result<Scenario> {
    registry().into_iter().find(|s| s.name == name).ok_or_else(|| {
        let known: Vec<_> = registry().iter().map(|s| s.name).collect();
        HarnessError::Usage(format!("unknown scenario `{name}` (known: {})", known.join(", ")))
    })
}

impl Scenario {
    pub fn base(&self) -> HormanderSystem {
        (self.base)()
    }

    pub fn x0(&self) -> DVector<f64> {
        DVector::from_column_slice(self.x0)
    }

    pub fn bundle_system(&self, rng: &mut dyn RngCore) -> Result<BundleSystem> {
        match self.bundle {
            Some(BundleKind::Frames) => {
                let base = self.base();
                Ok(FrameBundle::shared(base.manifold().clone()).derivative_flow(&base, rng)?)
            }
            Some(BundleKind::TrivialSo2) => Ok(systems::trivial_bundle_so2(rng)?),
            None => Err(HarnessError::Usage(format!("scenario `{}` has no bundle", self.name))),
        }
    }

    /// The frame bundle of the base with its derivative-flow generator,
    /// used by the frame-level diffeo checks.
    pub fn frame_system(&self, rng: &mut dyn RngCore) -> Result<BundleSystem> {
        let base = self.base();
        Ok(FrameBundle::shared(base.manifold().clone()).derivative_flow(&base, rng)?)
    }

    /// Test functions on the base: trigonometric on the torus, polynomial
    /// on spheres.
    pub fn test_functions(&self) -> Vec<ScalarRef> {
        let m = self.base().manifold().clone();
        if m.ambient_dim() == m.intrinsic_dim() {
            systems::torus_test_functions()
        } else {
            systems::sphere_test_functions(m.ambient_dim())
        }
    }

    pub fn test_one_forms(&self) -> Vec<OneFormRef> {
        let m = self.base().manifold().clone();
        if m.ambient_dim() == m.intrinsic_dim() {
            systems::torus_test_one_forms()
        } else {
            systems::sphere_test_one_forms(m.ambient_dim())
        }
    }

    /// An orthonormal frame of `T_{x0}M` as a point of the frame bundle.
    pub fn start_frame(&self) -> DVector<f64> {
        let x0 = self.x0();
        let m: ManifoldRef = self.base().manifold().clone();
        let p = m.projector(&x0);
        let frame = eqdiff::linalg::leading_basis(&p, m.intrinsic_dim());
        let mut u = x0.iter().cloned().collect::<Vec<_>>();
        u.extend(frame.iter());
        DVector::from_vec(u)
    }
}
