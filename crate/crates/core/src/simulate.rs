//! Monte-Carlo paths of the state `ξ`, unconditioned or under the insider's
//! bridge strategy, and the statistics built on them.
//!
//! Paths are stepped in `χ`-coordinates: `χ(t,ξ_t) = χ(0,0) + Y_t + ∫γσ²P ds`
//! is advanced by an Euler step and `ξ` is recovered by inverting `χ(t,·)`.
//! The same recursion drives [`recover_xi_from_flow`], so feeding a simulated
//! order flow back in reproduces the path.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::beliefs::BeliefDistribution;
use crate::fixed_point::RepresentationPoint;
use crate::pde::{time_grid, ModelParams, PricingSurface};
use crate::potential::ConvexPotential;
use crate::{lit, Error, Result, Scalar};

/// Where the bridge aims.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<S> {
    /// Every path holds this value.
    Fixed(S),
    /// Each path draws its value from the prior.
    Prior,
}

/// What to simulate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode<S> {
    /// `dξ⁰ = σ/∂ξχ dB`, i.e. `Y = σB`.
    Unconditioned,
    /// Order flow `dY = θdt + σdB` with `θ = (g⁻¹(ṽ) − ξ)/(T − t)`.
    Bridge(Target<S>),
}

#[derive(Debug, Clone)]
pub struct BatchConfig<S> {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub mode: Mode<S>,
    /// Keep `(B, Y, ξ, P)` at every step (large).
    pub record_paths: bool,
    /// Largest tolerated fraction of steps whose `χ`-inversion left the grid.
    pub max_exit_fraction: f64,
    /// Number of equally spaced martingale checkpoints in `(0, T]`.
    pub checkpoints: usize,
}

impl<S: Scalar> Default for BatchConfig<S> {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            n_steps: 512,
            seed: 0,
            mode: Mode::Unconditioned,
            record_paths: false,
            max_exit_fraction: 1e-3,
            checkpoints: 10,
        }
    }
}

/// One recorded path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord<S> {
    pub b: Vec<S>,
    pub y: Vec<S>,
    pub xi: Vec<S>,
    pub p: Vec<S>,
}

/// Output of [`simulate_xi0`] or [`simulate_bridge`].
#[derive(Debug, Clone)]
pub struct SimulationBatch<S> {
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub mode: Mode<S>,
    /// Step times `0 = t_0 < … < t_N = T`.
    pub dt_grid: Vec<S>,
    pub paths: Option<Vec<PathRecord<S>>>,
    pub xi_terminal: Vec<S>,
    /// `P(T, ξ_T) = g(ξ_T)`.
    pub p_terminal: Vec<S>,
    /// Per-path `ṽ` (bridge mode).
    pub v_targets: Vec<S>,
    /// Per-path `g⁻¹(ṽ)` (bridge mode).
    pub xi_targets: Vec<S>,
    /// `W_T = ∫(ṽ − P)dX` with `dX = θdt` (bridge mode).
    pub terminal_wealth: Vec<S>,
    /// `∫(ṽ − P)σdB` (bridge mode).
    pub noise_integral: Vec<S>,
    /// `∫(ṽ − P)²dt` (bridge mode).
    pub quadratic_integral: Vec<S>,
    pub checkpoint_times: Vec<S>,
    /// `P(t_j, ξ_{t_j})`, one row per path.
    pub checkpoint_prices: Array2<S>,
    pub exits: usize,
}

struct PathOut<S> {
    record: Option<PathRecord<S>>,
    xi_t: S,
    p_t: S,
    v: S,
    y_star: S,
    wealth: S,
    noise: S,
    quad: S,
    checkpoints: Vec<S>,
    exits: usize,
}

/// Per-path generator keyed by `(seed, path)`; serial and parallel runs agree.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn checkpoint_indices<S: Scalar>(times: &[S], count: usize) -> Vec<usize> {
    let horizon = times[times.len() - 1];
    (1..=count)
        .map(|j| {
            let target = horizon * lit::<S>(j as f64) / lit(count as f64);
            let k = times.partition_point(|&t| t < target).min(times.len() - 1);
            if k > 0 && (times[k - 1] - target).abs() < (times[k] - target).abs() {
                k - 1
            } else {
                k
            }
        })
        .collect()
}

fn run_path<S: Scalar>(
    surface: &PricingSurface<S>,
    pot: Option<&ConvexPotential<S>>,
    nu: Option<&BeliefDistribution<S>>,
    cfg: &BatchConfig<S>,
    times: &[S],
    marks: &[usize],
    path: usize,
) -> Result<PathOut<S>> {
    let p = &surface.params;
    let s2 = p.sigma * p.sigma;
    let mut rng = path_rng(cfg.seed, path);
    let (v, y_star) = match (cfg.mode, pot) {
        (Mode::Unconditioned, _) => (S::zero(), S::zero()),
        (Mode::Bridge(target), Some(pot)) => {
            let v = match target {
                Target::Fixed(v) => v,
                Target::Prior => {
                    let nu = nu.ok_or_else(|| Error::Params("bridge with prior targets needs ν".into()))?;
                    let u: f64 = rng.random_range(f64::EPSILON..1.0);
                    nu.quantile(lit(u))?
                }
            };
            (v, pot.inverse_g(v)?)
        }
        (Mode::Bridge(_), None) => return Err(Error::Params("bridge mode needs the potential".into())),
    };
    let bridge = matches!(cfg.mode, Mode::Bridge(_));
    let n = times.len() - 1;
    let mut rec = cfg.record_paths.then(|| PathRecord {
        b: Vec::with_capacity(n + 1),
        y: Vec::with_capacity(n + 1),
        xi: Vec::with_capacity(n + 1),
        p: Vec::with_capacity(n + 1),
    });
    let (mut b, mut y, mut xi) = (S::zero(), S::zero(), S::zero());
    let mut c = surface.chi_at(S::zero(), S::zero());
    let mut price = surface.p_at(S::zero(), S::zero());
    let (mut wealth, mut noise, mut quad) = (S::zero(), S::zero(), S::zero());
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut next_mark = 0usize;
    let mut exits = 0usize;
    if let Some(r) = rec.as_mut() {
        r.b.push(b);
        r.y.push(y);
        r.xi.push(xi);
        r.p.push(price);
    }
    for k in 0..n {
        let dt = times[k + 1] - times[k];
        let z: f64 = rng.sample(StandardNormal);
        let db = lit::<S>(z) * dt.sqrt();
        let theta = if bridge { (y_star - xi) / (p.horizon - times[k]) } else { S::zero() };
        let dy = theta * dt + p.sigma * db;
        if bridge {
            let gap = v - price;
            wealth = wealth + gap * theta * dt;
            noise = noise + gap * p.sigma * db;
            quad = quad + gap * gap * dt;
        }
        c = c + dy + p.gamma * s2 * price * dt;
        let (x_new, clamped) = surface.chi_inverse(times[k + 1], c);
        if clamped {
            exits += 1;
        }
        xi = x_new;
        b = b + db;
        y = y + dy;
        price = surface.p_at(times[k + 1], xi);
        while next_mark < marks.len() && marks[next_mark] == k + 1 {
            checkpoints.push(price);
            next_mark += 1;
        }
        if let Some(r) = rec.as_mut() {
            r.b.push(b);
            r.y.push(y);
            r.xi.push(xi);
            r.p.push(price);
        }
    }
    Ok(PathOut { record: rec, xi_t: xi, p_t: price, v, y_star, wealth, noise, quad, checkpoints, exits })
}

fn simulate<S: Scalar>(
    surface: &PricingSurface<S>,
    pot: Option<&ConvexPotential<S>>,
    nu: Option<&BeliefDistribution<S>>,
    cfg: &BatchConfig<S>,
) -> Result<SimulationBatch<S>> {
    if cfg.n_paths == 0 {
        return Err(Error::Params("need at least one path".into()));
    }
    let times = time_grid(surface.params.horizon, cfg.n_steps)?;
    let marks = checkpoint_indices(&times, cfg.checkpoints.max(1));
    let outs: Vec<PathOut<S>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| run_path(surface, pot, nu, cfg, &times, &marks, i))
        .collect::<Result<_>>()?;
    let exits: usize = outs.iter().map(|o| o.exits).sum();
    let steps = cfg.n_paths * cfg.n_steps;
    if exits as f64 > cfg.max_exit_fraction * steps as f64 {
        return Err(Error::GridExit { exits, steps });
    }
    let mut cp = Array2::<S>::zeros((cfg.n_paths, marks.len()));
    for (i, o) in outs.iter().enumerate() {
        for (j, v) in o.checkpoints.iter().enumerate() {
            cp[[i, j]] = *v;
        }
    }
    let bridge = matches!(cfg.mode, Mode::Bridge(_));
    let pick = |f: fn(&PathOut<S>) -> S| -> Vec<S> {
        if bridge {
            outs.iter().map(f).collect()
        } else {
            Vec::new()
        }
    };
    let v_targets = pick(|o| o.v);
    let xi_targets = pick(|o| o.y_star);
    let terminal_wealth = pick(|o| o.wealth);
    let noise_integral = pick(|o| o.noise);
    let quadratic_integral = pick(|o| o.quad);
    let xi_terminal = outs.iter().map(|o| o.xi_t).collect();
    let p_terminal = outs.iter().map(|o| o.p_t).collect();
    let paths = cfg.record_paths.then(|| outs.into_iter().filter_map(|o| o.record).collect());
    Ok(SimulationBatch {
        seed: cfg.seed,
        n_paths: cfg.n_paths,
        n_steps: cfg.n_steps,
        mode: cfg.mode,
        checkpoint_times: marks.iter().map(|&k| times[k]).collect(),
        dt_grid: times,
        paths,
        xi_terminal,
        p_terminal,
        v_targets,
        xi_targets,
        terminal_wealth,
        noise_integral,
        quadratic_integral,
        checkpoint_prices: cp,
        exits,
    })
}

/// Paths of the unconditioned state `ξ⁰`.
pub fn simulate_xi0<S: Scalar>(surface: &PricingSurface<S>, cfg: &BatchConfig<S>) -> Result<SimulationBatch<S>> {
    let mut cfg = cfg.clone();
    cfg.mode = Mode::Unconditioned;
    simulate(surface, None, None, &cfg)
}

/// Paths under the insider's bridge strategy; `cfg.mode` must be a bridge.
pub fn simulate_bridge<S: Scalar>(
    surface: &PricingSurface<S>,
    pot: &ConvexPotential<S>,
    nu: &BeliefDistribution<S>,
    cfg: &BatchConfig<S>,
) -> Result<SimulationBatch<S>> {
    if !matches!(cfg.mode, Mode::Bridge(_)) {
        return Err(Error::Params("simulate_bridge needs a bridge mode".into()));
    }
    simulate(surface, Some(pot), Some(nu), cfg)
}

/// Recovers `ξ` from a sampled order-flow path on the time grid `times`.
///
/// Returns the path and the number of steps whose root was clamped to the grid.
pub fn recover_xi_from_flow<S: Scalar>(
    surface: &PricingSurface<S>,
    times: &[S],
    y_path: &[S],
) -> Result<(Vec<S>, usize)> {
    if times.len() != y_path.len() || times.is_empty() {
        return Err(Error::Params("order flow and times must have equal nonzero length".into()));
    }
    let p = &surface.params;
    let s2 = p.sigma * p.sigma;
    let mut xi = vec![S::zero(); times.len()];
    let mut c = surface.chi_at(times[0], S::zero());
    let mut price = surface.p_at(times[0], S::zero());
    let mut exits = 0;
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        c = c + (y_path[k + 1] - y_path[k]) + p.gamma * s2 * price * dt;
        let (x, clamped) = surface.chi_inverse(times[k + 1], c);
        exits += usize::from(clamped);
        xi[k + 1] = x;
        price = surface.p_at(times[k + 1], x);
    }
    Ok((xi, exits))
}

/// Per-path wealth computed directly and through the utility expansion.
#[derive(Debug, Clone)]
pub struct WealthDecomposition<S> {
    pub direct: Vec<S>,
    pub decomposed: Vec<S>,
    /// `|direct − decomposed|`.
    pub gap: Vec<S>,
}

impl<S: Scalar> WealthDecomposition<S> {
    pub fn mean_gap(&self) -> S {
        mean(&self.gap)
    }
}

/// Rebuilds `W_T` from `−γW_T = γ(ṽχ(0,0) − Γ(0,0)) − γ(ṽξ_T − φ(ξ_T)) + ṽ²γ²σ²T/2
/// + γ∫(ṽ−P)σdB − γ²σ²/2 ∫(ṽ−P)²dt`, written in units of `W`.
pub fn wealth_decomposition<S: Scalar>(
    batch: &SimulationBatch<S>,
    pot: &ConvexPotential<S>,
    rep: &RepresentationPoint<S>,
    params: &ModelParams<S>,
) -> Result<WealthDecomposition<S>> {
    if !matches!(batch.mode, Mode::Bridge(_)) {
        return Err(Error::Params("wealth decomposition needs a bridge batch".into()));
    }
    let g = params.gamma;
    let half = lit::<S>(0.5);
    let var = params.terminal_variance();
    let s2 = params.sigma * params.sigma;
    let mut decomposed = Vec::with_capacity(batch.n_paths);
    let mut gap = Vec::with_capacity(batch.n_paths);
    for i in 0..batch.n_paths {
        let v = batch.v_targets[i];
        let x = batch.xi_terminal[i];
        let w = -((v * rep.chi00 - rep.gamma00) - (v * x - pot.eval_phi(x))
            + half * g * v * v * var
            + batch.noise_integral[i]
            - half * g * s2 * batch.quadratic_integral[i]);
        gap.push((w - batch.terminal_wealth[i]).abs());
        decomposed.push(w);
    }
    Ok(WealthDecomposition { direct: batch.terminal_wealth.clone(), decomposed, gap })
}

/// Mean of `P(t_j, ξ⁰_{t_j})` at each checkpoint and its z-score against `P(0,0)`.
#[derive(Debug, Clone)]
pub struct MartingaleCheck<S> {
    pub times: Vec<S>,
    pub means: Vec<S>,
    pub z_scores: Vec<S>,
    pub max_abs_z: S,
}

pub fn martingale_check<S: Scalar>(batch: &SimulationBatch<S>, surface: &PricingSurface<S>) -> MartingaleCheck<S> {
    let p00 = surface.p_at(S::zero(), S::zero());
    let mut means = Vec::new();
    let mut z_scores = Vec::new();
    for col in batch.checkpoint_prices.columns() {
        let xs: Vec<S> = col.to_vec();
        let (m, se) = mean_and_se(&xs);
        means.push(m);
        z_scores.push(if se > S::zero() { (m - p00) / se } else { S::zero() });
    }
    let max_abs_z = z_scores.iter().map(|z| z.abs()).fold(S::zero(), S::max);
    MartingaleCheck { times: batch.checkpoint_times.clone(), means, z_scores, max_abs_z }
}

pub fn mean<S: Scalar>(xs: &[S]) -> S {
    xs.iter().copied().sum::<S>() / lit(xs.len().max(1) as f64)
}

/// Sample mean and its standard error.
pub fn mean_and_se<S: Scalar>(xs: &[S]) -> (S, S) {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return (m, S::zero());
    }
    let ss: S = xs.iter().map(|x| (*x - m) * (*x - m)).sum();
    let var = ss / lit((n - 1) as f64);
    (m, (var / lit(n as f64)).sqrt())
}

/// One-sample Kolmogorov-Smirnov distance `sup |F_n − F|`.
pub fn ks_statistic<S: Scalar>(samples: &[S], cdf: impl Fn(S) -> S) -> S {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = lit::<S>(xs.len() as f64);
    let mut d = S::zero();
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let lo = lit::<S>(i as f64) / n;
        let hi = lit::<S>((i + 1) as f64) / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Asymptotic critical value `c_α/√n` of the one-sample KS test.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    let c = match alpha {
        a if a <= 0.01 => 1.63,
        a if a <= 0.05 => 1.36,
        _ => 1.22,
    };
    c / (n as f64).sqrt()
}

/// Mean of `|ξ_T − g⁻¹(ṽ)|` over a bridge batch.
pub fn mean_pin_gap<S: Scalar>(batch: &SimulationBatch<S>) -> S {
    let gaps: Vec<S> = batch.xi_terminal.iter().zip(&batch.xi_targets).map(|(x, y)| (*x - *y).abs()).collect();
    mean(&gaps)
}

/// Mean of `|P_T − ṽ|` over a bridge batch.
pub fn mean_price_gap<S: Scalar>(batch: &SimulationBatch<S>) -> S {
    let gaps: Vec<S> = batch.p_terminal.iter().zip(&batch.v_targets).map(|(p, v)| (*p - *v).abs()).collect();
    mean(&gaps)
}

/// `σ√Δt` for the last step, the natural pinning scale.
pub fn last_step_scale<S: Scalar>(batch: &SimulationBatch<S>, params: &ModelParams<S>) -> S {
    let n = batch.dt_grid.len();
    params.sigma * (batch.dt_grid[n - 1] - batch.dt_grid[n - 2]).sqrt()
}
