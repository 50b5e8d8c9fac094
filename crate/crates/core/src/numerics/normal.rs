use statrs::function::erf::{erfc, erfc_inv};

use crate::{lit, to_f64, Error, Result, Scalar};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Selector for [`std_normal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalFn {
    Cdf,
    Pdf,
    Quantile,
}

/// Standard normal cdf, pdf or quantile.
pub fn std_normal<S: Scalar>(kind: NormalFn, x: S) -> Result<S> {
    match kind {
        NormalFn::Cdf => Ok(normal_cdf(x)),
        NormalFn::Pdf => Ok(normal_pdf(x)),
        NormalFn::Quantile => normal_quantile(x),
    }
}

pub fn normal_pdf<S: Scalar>(x: S) -> S {
    let x = to_f64(x);
    lit(FRAC_1_SQRT_2PI * (-0.5 * x * x).exp())
}

pub fn normal_cdf<S: Scalar>(x: S) -> S {
    lit(0.5 * erfc(-to_f64(x) / std::f64::consts::SQRT_2))
}

/// Upper tail `1 − Φ(x)`, accurate in the right tail.
pub fn normal_sf<S: Scalar>(x: S) -> S {
    lit(0.5 * erfc(to_f64(x) / std::f64::consts::SQRT_2))
}

/// `Φ⁻¹(u)` for `u ∈ (0, 1)`.
pub fn normal_quantile<S: Scalar>(u: S) -> Result<S> {
    let p = to_f64(u);
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile needs u in (0,1), got {p}")));
    }
    Ok(lit(-std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)))
}
