//! Symbols, horizontal lifts, the `delta` operator and the LeJan-Watanabe
//! connection of the base system.

use eqdiff::bundle::connection::{horizontal_lift, lift_covector, random_preimage};
use eqdiff::bundle::BundleSystem;
use eqdiff::geometry::calculus::directional_derivative;
use eqdiff::geometry::fields::{ExactForm, FnForm, OneForm, OneFormRef, ScalarRef, ScaledForm};
use eqdiff::geometry::spaces::gaussian_vector;
use eqdiff::hormander::{lemma_diagram_check, HormanderSystem};
use eqdiff::lw::{metricity_defect, ricci_matrix};
use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::{Group, Outcome, Suite};
use crate::error::Result;

const DIAGRAM_PROBES: usize = 500;
const COVECTORS_PER_PROBE: usize = 4;
const LIFT_PROBES: usize = 200;
const PREIMAGES: usize = 20;
const DELTA_POINTS: usize = 200;
const METRICITY_POINTS: usize = 50;
const RICCI_POINTS: usize = 10;

pub(super) fn run(s: &mut Suite<'_>) {
    let mut rng = s.rng(Group::Geometry);
    let sc = s.cfg.scenario.clone();
    let base = sc.base();
    let bundle = match sc.bundle {
        Some(_) => sc.bundle_system(&mut rng),
        None => sc.frame_system(&mut rng),
    };
    match bundle {
        Ok(bs) => {
            s.check("geometry.symbol-diagram", |tol| Ok(Outcome::new(diagram_defect(&bs, &mut rng)?, tol)));
            s.check("geometry.lift-preimage", |tol| Ok(Outcome::new(preimage_spread(&bs, &mut rng)?, tol)));
        }
        Err(e) => {
            s.fail("geometry.symbol-diagram", &e);
            s.fail("geometry.lift-preimage", &e);
        }
    }
    let fs = sc.test_functions();
    let points: Vec<DVector<f64>> = (0..DELTA_POINTS).map(|_| base.manifold().sample(&mut rng)).collect();
    s.check("geometry.delta-generator", |tol| {
        let mut worst: f64 = 0.0;
        for x in &points {
            for f in &fs {
                let af = base.apply(f.as_ref(), x)?;
                let exact = ExactForm(f.clone());
                // same form without closed-form derivatives, so delta differentiates numerically
                let numeric = FnForm(|y: &DVector<f64>| exact.covector(y));
                let d = (base.delta(&exact, x)? - af).abs().max((base.delta(&numeric, x)? - af).abs());
                worst = worst.max(d);
            }
        }
        Ok(Outcome::new(worst, tol))
    });
    s.check("geometry.delta-leibniz", |tol| Ok(Outcome::new(leibniz_defect(&base, &sc.test_one_forms(), &fs, &points)?, tol)));
    s.check("geometry.lw-metricity", |tol| Ok(Outcome::new(metricity(&base, &mut rng)?, tol)));
    match sc.ricci {
        Some(c) => s.check("geometry.ricci", |tol| {
            let mut worst: f64 = 0.0;
            for _ in 0..RICCI_POINTS {
                let x = base.manifold().sample(&mut rng);
                let r = ricci_matrix(&base, &x)?;
                let p = r.nrows();
                worst = worst.max((r - DMatrix::identity(p, p) * c).amax());
            }
            Ok(Outcome::new(worst, tol).note(format!("closed form Ric# = {c} id")))
        }),
        None => s.skip("geometry.ricci", "no closed-form Ricci curvature"),
    }
}

fn diagram_defect(bs: &BundleSystem, rng: &mut dyn RngCore) -> Result<f64> {
    let bundle = bs.bundle().clone();
    let probes: Vec<DVector<f64>> = (0..DIAGRAM_PROBES).map(|_| bs.sample(rng)).collect();
    let tpi = bundle.tpi();
    let report = lemma_diagram_check(
        bs.system(),
        bs.base(),
        &|u| bundle.project(u),
        &|_| tpi.clone(),
        &probes,
        COVECTORS_PER_PROBE,
        rng,
    )?;
    Ok(report.max_defect)
}

/// Largest spread of `X~(u) alpha` over covector preimages `alpha` of a
/// random `v` in `E_x`, including the distance to the minimum-norm lift.
fn preimage_spread(bs: &BundleSystem, rng: &mut dyn RngCore) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..LIFT_PROBES {
        let u = bs.sample(rng);
        let x = bs.bundle().project(&u);
        let v = bs.base().sample_e(&x, rng);
        let h = horizontal_lift(bs, &u, &v)?;
        for _ in 0..PREIMAGES {
            let alpha = random_preimage(bs, &x, &v, rng)?;
            worst = worst.max((lift_covector(bs, &u, &alpha) - &h).amax());
        }
    }
    Ok(worst)
}

/// `delta(f phi) - f delta(phi) - df(sigma phi)` over forms, weights and
/// points.
fn leibniz_defect(
    base: &HormanderSystem,
    forms: &[OneFormRef],
    weights: &[ScalarRef],
    points: &[DVector<f64>],
) -> Result<f64> {
    let m = base.manifold();
    let mut worst: f64 = 0.0;
    for x in points {
        let sigma = base.symbol_at(x)?.sigma();
        for phi in forms {
            let dphi = base.delta(phi.as_ref(), x)?;
            let sphi = &sigma * phi.covector(x);
            for f in weights {
                let fphi = ScaledForm(f.clone(), phi.clone());
                let df = directional_derivative(m.as_ref(), |y| f.value(y), x, &sphi)?;
                let d = base.delta(&fphi, x)? - f.value(x) * dphi - df;
                worst = worst.max(d.abs());
            }
        }
    }
    Ok(worst)
}

/// Sections of `E` of the form `X(y) a(y)` with oscillating `a`.
fn e_section(system: &HormanderSystem, phase: f64) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
    move |y: &DVector<f64>| {
        let m = system.noise_dim();
        let a = DVector::from_fn(m, |j, _| (phase + y[j % y.len()] * (1.0 + j as f64)).sin() + 0.3 * y[0].cos());
        system.fields().apply(y, &a)
    }
}

fn metricity(base: &HormanderSystem, rng: &mut dyn RngCore) -> Result<f64> {
    let m = base.manifold();
    let u = e_section(base, 0.1);
    let w = e_section(base, 1.7);
    let mut worst: f64 = 0.0;
    for _ in 0..METRICITY_POINTS {
        let x = m.sample(rng);
        let v = m.projector(&x) * gaussian_vector(rng, x.len());
        worst = worst.max(metricity_defect(base, &u, &w, &x, &v)?);
    }
    Ok(worst)
}
