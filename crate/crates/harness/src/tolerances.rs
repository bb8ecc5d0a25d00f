//! The check table: every check id with its anchor, bound direction and
//! default tolerance.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// Pass when `value <= tol`.
    Upper,
    /// Pass when `value >= tol`.
    Lower,
}

#[derive(Clone, Copy, Debug)]
pub struct CheckSpec {
    pub id: &'static str,
    pub anchor: &'static str,
    pub bound: Bound,
    /// For scaled checks the tolerance is this factor times a run-dependent
    /// scale (step size, standard error, interpolation bound).
    pub default: f64,
}

const fn upper(id: &'static str, anchor: &'static str, default: f64) -> CheckSpec {
    CheckSpec { id, anchor, bound: Bound::Upper, default }
}

const fn lower(id: &'static str, anchor: &'static str, default: f64) -> CheckSpec {
    CheckSpec { id, anchor, bound: Bound::Lower, default }
}

pub const CHECKS: &[CheckSpec] = &[
    upper("geometry.symbol-diagram", "lemma: T pi sigma^B (T pi)* = sigma^A for a lifted diffusion operator", 1e-8),
    upper("geometry.lift-preimage", "theorem: h_u(v) = X~(u) alpha is independent of the covector preimage alpha of v", 1e-8),
    upper("geometry.delta-generator", "proposition: delta(df) = A f for the first-order part of the generator", 1e-6),
    upper("geometry.delta-leibniz", "proposition: delta(f phi) = f delta(phi) + df(sigma phi)", 1e-6),
    upper("geometry.lw-metricity", "LeJan-Watanabe connection is metric for the metric induced on E", 1e-5),
    upper("geometry.ricci", "Ricci curvature of the LeJan-Watanabe connection equals the closed form", 1e-5),
    upper("decompose.verticality", "theorem: B - A^H is vertical, (B - A^H)(f2 o pi f1) = f2 o pi (B - A^H) f1", 1e-5),
    lower("decompose.verticality-control", "negative control: B itself is not vertical", 1e-3),
    upper("decompose.ad-equivariance", "theorem: alpha(ug) and beta(ug) transform by Ad(g^-1)", 1e-5),
    upper("decompose.completion-invariance", "theorem: alpha and beta do not depend on the extension of the semi-connection", 1e-6),
    upper("decompose.horizontal-redecomposition", "decomposing the horizontal lift A^H gives alpha = 0, beta = 0", 1e-8),
    upper("decompose.weitzenbock-two-way", "vertical part on lifted one-forms equals the LeJan-Watanabe Weitzenbock term", 1e-4),
    upper("decompose.weitzenbock-ricci", "vertical part on lifted one-forms equals -1/2 phi(Ric#)", 1e-4),
    lower("skew.reconstruction-order", "theorem: b_t = x~_t g_t pathwise (refinement order)", 0.8),
    lower("skew.concatenation-order", "theorem: g_t is multiplicative along the path (refinement order)", 0.8),
    upper("skew.adjoint-transport", "horizontal lift of the derivative flow is parallel transport of the adjoint LeJan-Watanabe connection (x dt)", 5.0),
    upper("skew.isometry", "isometric derivative flow preserves frame inner products (x dt)", 10.0),
    upper("skew.small-time", "semigroup of B on lifted one-forms: E phi~(u_t) - phi~(u_0) = t B phi~(u_0) + O(t^2) (x standard errors)", 3.0),
    lower("diffeo.lift-order", "theta_t(x0) = xi_t(x0), the flow theta lifts the base process (refinement order)", 0.8),
    upper("diffeo.noise-reconstruction", "dB = //~ d beta + //~ dB~ pathwise (x dt)", 1.0),
    upper("diffeo.kernel-transport", "//~_t maps ker X(x0) onto ker X(x_t)", 1e-4),
    upper("diffeo.transport-orthogonality", "//~_t is orthogonal", 1e-8),
    upper("diffeo.split-correlation", "relevant and redundant noise are independent (x 1/sqrt K)", 3.0),
    lower("diffeo.glm-order", "T_x0 theta_t o u_0 is the horizontal lift of the derivative flow (refinement order)", 0.8),
    upper("diffeo.composite-fixed-point", "xi_t = theta_t g_t on the cloud (x interpolation bound)", 1.0),
    upper("diffeo.fibre-identity", "g_t(x0) = x0", 1e-10),
];

pub fn spec(id: &str) -> Result<&'static CheckSpec> {
    CHECKS.iter().find(|c| c.id == id).ok_or_else(|| HarnessError::Usage(format!("unknown check id `{id}`")))
}

/// Tolerances by check id, defaults overridden from the config file.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances(BTreeMap<&'static str, f64>);

impl Default for Tolerances {
    fn default() -> Self {
        Self(CHECKS.iter().map(|c| (c.id, c.default)).collect())
    }
}

impl Tolerances {
    pub fn with_overrides(overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut t = Self::default();
        for (k, v) in overrides {
            let spec = spec(k)?;
            t.0.insert(spec.id, *v);
        }
        Ok(t)
    }

    pub fn get(&self, id: &str) -> f64 {
        self.0[id]
    }
}
