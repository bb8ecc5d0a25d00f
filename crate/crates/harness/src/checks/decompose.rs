//! Horizontal and vertical parts of the bundle generator, their
//! coefficients and the Weitzenböck term on lifted one-forms.

use eqdiff::bundle::decompose::{bundle_test_functions, verticality_defect};
use eqdiff::bundle::{decompose, weitzenbock_on_oneform, BundleSystem, Completion, Decomposition};
use eqdiff::geometry::fields::ScalarField;
use nalgebra::DVector;
use rand::RngCore;

use super::{decomposition, Group, Outcome, Suite};
use crate::error::Result;
use crate::scenario::BundleKind;

const VERTICALITY_PROBES: usize = 12;
const COEFF_PROBES: usize = 20;
const REDECOMPOSE_PROBES: usize = 10;
const WEITZENBOCK_PROBES: usize = 3;

pub(super) fn run(s: &mut Suite<'_>) {
    let mut rng = s.rng(Group::Decompose);
    let sc = s.cfg.scenario.clone();
    let (bs, dec) = match decomposition(s.cfg, &mut rng) {
        Ok(p) => p,
        Err(e) => {
            for id in [
                "decompose.verticality",
                "decompose.verticality-control",
                "decompose.ad-equivariance",
                "decompose.completion-invariance",
                "decompose.horizontal-redecomposition",
            ] {
                s.fail(id, &e);
            }
            return;
        }
    };
    let probes: Vec<DVector<f64>> = (0..VERTICALITY_PROBES).map(|_| bs.sample(&mut rng)).collect();
    let f1s = bundle_test_functions(bs.bundle().as_ref(), &sc.test_functions());
    let f2s: Vec<_> = sc.test_functions().into_iter().take(4).collect();
    s.check("decompose.verticality", |tol| {
        let op = |f: &dyn ScalarField, u: &DVector<f64>| dec.apply_vertical(f, u);
        Ok(Outcome::new(verticality_defect(&op, bs.bundle().as_ref(), &f1s, &f2s, &probes)?, tol))
    });
    s.check("decompose.verticality-control", |tol| {
        let op = |f: &dyn ScalarField, u: &DVector<f64>| bs.system().apply(f, u);
        Ok(Outcome::new(verticality_defect(&op, bs.bundle().as_ref(), &f1s, &f2s, &probes)?, tol).note("B itself"))
    });
    s.check("decompose.ad-equivariance", |tol| {
        let mut worst: f64 = 0.0;
        for _ in 0..COEFF_PROBES {
            let u = bs.sample(&mut rng);
            let g = bs.group().sample(&mut rng);
            let (da, db) = dec.equivariance_alpha_beta(&u, &g)?;
            worst = worst.max(da).max(db);
        }
        Ok(Outcome::new(worst, tol))
    });
    s.check("decompose.completion-invariance", |tol| {
        let twisted = dec.with_completion(Completion::Twisted);
        let mut worst: f64 = 0.0;
        for _ in 0..COEFF_PROBES {
            let u = bs.sample(&mut rng);
            let (a, b) = (dec.coeffs(&u)?, twisted.coeffs(&u)?);
            worst = worst.max((&a.alpha - &b.alpha).amax()).max((&a.beta - &b.beta).amax());
        }
        let full = bs.base().rank() == bs.base().manifold().intrinsic_dim();
        Ok(Outcome::new(worst, tol).note(if full { "E = TM, nothing to complete" } else { "" }))
    });
    s.check("decompose.horizontal-redecomposition", |tol| Ok(Outcome::new(redecompose(&bs, &dec, &mut rng)?, tol)));
    if sc.bundle != Some(BundleKind::TrivialSo2) {
        weitzenbock(s, &dec, &mut rng);
    } else {
        s.skip("decompose.weitzenbock", "one-forms lift only to frame bundles");
    }
}

/// `max |alpha|, |beta|` of the decomposition of `A^H` itself.
fn redecompose(bs: &BundleSystem, dec: &Decomposition, rng: &mut dyn RngCore) -> Result<f64> {
    let horizontal = bs.with_system(dec.horizontal().clone(), rng)?;
    let again = decompose(&horizontal, Completion::Transport, rng)?;
    let mut worst: f64 = 0.0;
    for _ in 0..REDECOMPOSE_PROBES {
        let u = bs.sample(rng);
        let c = again.coeffs(&u)?;
        worst = worst.max(c.alpha.amax()).max(c.beta.amax());
    }
    Ok(worst)
}

fn weitzenbock(s: &mut Suite<'_>, dec: &Decomposition, rng: &mut dyn RngCore) {
    let sc = s.cfg.scenario.clone();
    let bs = dec.bundle_system();
    let probes: Vec<DVector<f64>> = (0..WEITZENBOCK_PROBES).map(|_| bs.sample(rng)).collect();
    let mut reports = Vec::new();
    for u in &probes {
        for phi in sc.test_one_forms() {
            match weitzenbock_on_oneform(dec, u, &phi) {
                Ok(r) => reports.push(r),
                Err(e) => {
                    let e = e.into();
                    s.fail("decompose.weitzenbock-two-way", &e);
                    return;
                }
            }
        }
    }
    s.check("decompose.weitzenbock-two-way", |tol| {
        let worst = reports.iter().map(|r| r.two_way_defect().max(r.direct_defect())).fold(0.0, f64::max);
        Ok(Outcome::new(worst, tol).note("coefficients vs curvature oracle and vs direct B - A^H"))
    });
    match sc.ricci {
        Some(c) => s.check("decompose.weitzenbock-ricci", |tol| {
            let worst = reports
                .iter()
                .map(|r| {
                    let target = &r.phi * (-0.5 * c);
                    (&r.coefficients - &target).amax().max((&r.ricci - &target).amax())
                })
                .fold(0.0, f64::max);
            Ok(Outcome::new(worst, tol).note(format!("target -1/2 phi with Ric# = {c} id")))
        }),
        None => s.skip("decompose.weitzenbock-ricci", "no closed-form Ricci curvature"),
    }
}
