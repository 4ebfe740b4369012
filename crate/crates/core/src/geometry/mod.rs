//! Semi-Riemannian calculus over coordinate charts.

pub mod chart;
pub mod connection;
pub mod field;
pub mod frame;
pub mod metric;

pub use chart::{ChartDomain, Constraint, BOUNDARY_MARGIN};
pub use connection::{
    christoffel, christoffel_field, christoffel_unchecked, covariant_derivative, covariant_jacobian, divergence,
    divergence_02, exterior_derivative, gradient, lie_derivative_02, Christoffel,
};
pub use field::{partials, FdPolicy, FdValue, Field, ScalarField, TensorField, VectorField};
pub use frame::{
    adapted_form_norm, adapted_norm, frame_norm_02, mean_curvature, mean_curvature_closed_form, projected_gradient,
    DistributionField, DistributionSplit, FrameField, Part,
};
pub use metric::{inner, minkowski, DerivativeMode, MetricField, Signature};
