//! Continuous-time Kyle-Back equilibrium with an exponentially risk-averse insider.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`fixed_point`] finds the convex potential `φ*` whose gradient pushes the
//!    terminal law of the state variable onto the prior `ν` (Picard iteration on
//!    the one-dimensional Brenier map).
//! 2. [`pde`] solves the backward quasilinear equation for `R = ∂ξP` and assembles
//!    the price `P`, the order-flow map `χ` and the auxiliary potential `Γ`.
//! 3. [`equilibrium`] evaluates closed-form objects on top of those surfaces:
//!    transition densities, conditional laws of the value, impact and depth.
//! 4. [`simulate`] runs Monte-Carlo checks of the state diffusion and of the
//!    insider's bridge strategy.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`). The root
//! re-exports `f64` aliases for the common case.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0)` deliberately rejects NaN

pub mod beliefs;
pub mod equilibrium;
mod error;
pub mod fixed_point;
pub mod numerics;
pub mod pde;
pub mod potential;
pub mod simulate;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use error::{Error, Result};

/// Floating-point type the solver can run on.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Sum + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub(crate) fn lit<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub(crate) fn to_f64<S: Scalar>(x: S) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub type ModelParams = pde::ModelParams<f64>;
pub type BeliefDistribution = beliefs::BeliefDistribution<f64>;
pub type ConvexPotential = potential::ConvexPotential<f64>;
pub type XiGrid = potential::XiGrid<f64>;
pub type QuadratureRule = numerics::QuadratureRule<f64>;
pub type MonotoneCurve = numerics::MonotoneCurve<f64>;
pub type RepresentationPoint = fixed_point::RepresentationPoint<f64>;
pub type TerminalDensity = fixed_point::TerminalDensity<f64>;
pub type FixedPointResult = fixed_point::FixedPointResult<f64>;
pub type PricingSurface = pde::PricingSurface<f64>;
pub type EquilibriumReport = equilibrium::EquilibriumReport<f64>;
pub type SimulationBatch = simulate::SimulationBatch<f64>;
