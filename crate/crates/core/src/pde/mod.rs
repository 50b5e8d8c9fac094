//! Backward quasilinear equation for `R = ∂ξP` and assembly of `P`, `χ`, `Γ`.
//!
//! `R` solves `∂tR + ∂ξ(σ²∂ξR / (2(1 − γσ²(T−t)R)²)) = 0` with `R(T,·) = g'`.
//! The scheme is Crank-Nicolson on the divergence form with the coefficient
//! lagged over two sweeps per step, cell-centred unknowns and zero flux at the
//! grid ends.

mod params;
mod solve;
mod surface;

pub use params::ModelParams;
pub use solve::{solve_r, solve_r_on, RSolution, SolverOptions};

pub use surface::{
    assemble_surfaces, build_surface, check_system_residual, check_system_residual_within, Anchor, Field,
    PricingSurface, SystemResidual,
};

use crate::{lit, Error, Result, Scalar};

/// Time grid `t_k = T(1 − (1 − k/M)²)`: uniform in `√(T − t)`, so steps shrink
/// linearly toward `T` and the last one is `T/M²`.
///
/// Doubling `M` keeps every old node.
pub fn time_grid<S: Scalar>(horizon: S, steps: usize) -> Result<Vec<S>> {
    if steps < 2 {
        return Err(Error::Params(format!("need at least 2 time steps, got {steps}")));
    }
    if !(horizon > S::zero()) {
        return Err(Error::Params(format!("horizon must be positive, got {horizon}")));
    }
    let m = lit::<S>(steps as f64);
    let mut t: Vec<S> = (0..=steps)
        .map(|k| {
            let s = S::one() - lit::<S>(k as f64) / m;
            horizon * (S::one() - s * s)
        })
        .collect();
    t[0] = S::zero();
    t[steps] = horizon;
    Ok(t)
}

/// Index `k` with `t_k ≤ t ≤ t_{k+1}` and the weight of `t_{k+1}`.
pub(crate) fn locate_time<S: Scalar>(t_grid: &[S], t: S) -> (usize, S) {
    let m = t_grid.len() - 1;
    let t = t.max(t_grid[0]).min(t_grid[m]);
    let k = t_grid.partition_point(|&s| s <= t).clamp(1, m) - 1;
    let w = (t - t_grid[k]) / (t_grid[k + 1] - t_grid[k]);
    (k, w)
}
