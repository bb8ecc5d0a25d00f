pub mod calculus;
pub mod fields;
pub mod manifold;
pub mod spaces;

pub use manifold::{retract, tangent_project, Frame, Manifold, ManifoldPoint, ManifoldRef, TangentVector};
pub use spaces::{wrap_angle, wrapped_difference, FlatTorus, Product, SpecialOrthogonal, Sphere};
