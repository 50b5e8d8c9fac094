//! Deterministic numerical kernels shared by the solver stages.

mod integrate;
mod interp;
mod minimize;
mod normal;
mod quadrature;

pub use integrate::{cumulative_trapezoid, cumulative_trapezoid_corrected, trapezoid};
pub use interp::{Extrapolation, MonotoneCurve};
pub use minimize::minimize_convex_1d;
pub use normal::{normal_cdf, normal_pdf, normal_quantile, normal_sf, std_normal, NormalFn};
pub use quadrature::{gaussian_expectation, QuadratureRule};
