//! Deciding and computing EFX allocations for linear valuations.
//!
//! Four independent routes are provided and cross-checked against each other:
//!
//! * [`oracle`]: exhaustive enumeration of all `n^m` allocations.
//! * [`lovasz`]: the convex relaxation built from Lovász extensions of the
//!   pairwise envy functions.
//! * [`extension`] and [`dc`]: the continuous extension obtained from
//!   row-wise randomized rounding, its difference-of-convex limit `f(y)`,
//!   and the DC algorithm that minimizes it through a sequence of LPs.
//! * [`fixedpoint`]: the vector maps `T`, `T'` and the perturbed `T~` whose
//!   fixed points encode EFX allocations.

pub mod dc;
pub mod error;
pub mod extension;
pub mod fixedpoint;
pub mod generate;
pub mod instance;
pub mod lovasz;
pub mod lp;
pub mod oracle;
pub mod setfun;

pub use error::{Error, Result};
pub use instance::{check_efx, efx_slack, is_efx, Allocation, Instance, EFX_TOL};
