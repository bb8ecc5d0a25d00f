//! The product bundle `M x G` for `G = SO(n)`.

use std::sync::Arc;

use nalgebra::DVector;

use super::PrincipalBundle;
use crate::geometry::manifold::ManifoldRef;
use crate::geometry::spaces::{Product, SpecialOrthogonal};
use crate::group::{GroupKind, MatrixGroup};

#[derive(Debug, Clone)]
pub struct TrivialBundle {
    base: ManifoldRef,
    total: ManifoldRef,
    group: MatrixGroup,
}

impl TrivialBundle {
    pub fn new(base: ManifoldRef, group: MatrixGroup) -> Self {
        assert_eq!(group.kind(), GroupKind::SpecialOrthogonal, "trivial bundles carry a compact fibre");
        let total: ManifoldRef = Arc::new(Product::new(base.clone(), SpecialOrthogonal::shared(group.n())));
        Self { base, total, group }
    }

    pub fn shared(base: ManifoldRef, group: MatrixGroup) -> Arc<Self> {
        Arc::new(Self::new(base, group))
    }
}

impl PrincipalBundle for TrivialBundle {
    fn total(&self) -> &ManifoldRef {
        &self.total
    }

    fn base(&self) -> &ManifoldRef {
        &self.base
    }

    fn group(&self) -> &MatrixGroup {
        &self.group
    }

    fn fibre_rows(&self) -> usize {
        self.group.n()
    }

    /// `(w, 0)`.
    fn transport_lift(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        out.rows_mut(0, w.len()).copy_from(w);
        out
    }
}
