//! Numerical building blocks: Bessel functions, quadrature, scalar
//! optimization and a small dense Levenberg–Marquardt solver.

mod bessel;
pub(crate) mod lm;
mod optimize;
mod quad;

pub use bessel::{bessel_j0_j1, bessel_j0_unchecked, bessel_j1_unchecked};
pub use lm::{levenberg_marquardt, LmOptions, LmOutcome};
pub use optimize::golden_section_max;
pub use quad::{gauss_kronrod, simpson, QuadResult};
