//! Geometry of Cartan metrics on the slit cotangent bundle.
//!
//! Given a metric function `K(x, p)` (or `K^2`) in a small expression
//! language, this crate computes the fundamental tensors, the canonical
//! nonlinear connection, the Sasaki lift and its Levi-Civita connection,
//! an adapted orthogonal frame, level-set (indicatrix) geometry including
//! the contact structure, and runs a battery of numeric verifications:
//! curvature identities, foliation properties (totally geodesic,
//! bundle-like, Killing), the constant-negative-curvature classifier and
//! the non-Sasakian obstruction. Everything is checked two ways where
//! possible: exact symbolic evaluation against independent finite
//! difference / Koszul / Riemannian oracles.

pub mod builtins;
pub mod error;
pub mod expr;
pub mod fields;
pub mod frame;
pub mod foliation;
pub mod indicatrix;
pub mod metric;
pub mod oracle;
pub mod parse;
pub mod report;
pub mod sample;
pub mod suite;
pub mod tensors;

pub use error::{Error, Result};
pub use expr::{ExprContext, ExprId, Evaluator, PhasePoint, Var, VarKind};
pub use metric::{parse_metric, MetricExpression, MetricKind};
pub use tensors::{CartanGeometry, CartanTensorSet, TangentVector};
