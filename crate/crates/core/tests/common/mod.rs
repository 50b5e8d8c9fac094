#![allow(dead_code)]

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kyleback::beliefs::BeliefDistribution;
use kyleback::fixed_point::{picard_solve, FixedPointResult, PicardConfig};
use kyleback::pde::{build_surface, ModelParams, PricingSurface};

pub struct Solved {
    pub nu: BeliefDistribution<f64>,
    pub params: ModelParams<f64>,
    pub fp: FixedPointResult<f64>,
    pub surface: PricingSurface<f64>,
}

fn solve(nu: BeliefDistribution<f64>, gamma: f64) -> Solved {
    let l_cap = nu.admissible_slope(1.0, 0.5);
    let params = ModelParams::new(1.0, 0.5, gamma, l_cap).unwrap();
    let fp = picard_solve(&nu, &params, &PicardConfig::default()).unwrap();
    let surface = build_surface(&fp.potential, &params, 512, Some(fp.anchor(&params))).unwrap();
    Solved { nu, params, fp, surface }
}

/// `ν = N(1,1)`, `(T,σ,γ) = (1, .5, .1)`.
pub fn gaussian() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| solve(BeliefDistribution::gaussian(1.0, 1.0).unwrap(), 0.1))
}

/// `ν = Unif(10,20)`, `(T,σ,γ) = (1, .5, .1)`.
pub fn uniform() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| solve(BeliefDistribution::uniform(10.0, 20.0).unwrap(), 0.1))
}

/// `ν = N(1,1)` with a risk-neutral insider.
pub fn neutral() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| solve(BeliefDistribution::gaussian(1.0, 1.0).unwrap(), 0.0))
}

/// Seeded generator for picking test points.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
