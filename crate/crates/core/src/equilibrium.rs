//! Closed-form equilibrium objects evaluated on an assembled surface.

use ndarray::Array2;

use crate::beliefs::BeliefDistribution;
use crate::fixed_point::RepresentationPoint;
use crate::numerics::{cumulative_trapezoid_corrected, Extrapolation, MonotoneCurve};
use crate::pde::{Field, ModelParams, PricingSurface};
use crate::potential::ConvexPotential;
use crate::{lit, Error, Result, Scalar};

/// `G(r,x,t,y)`, the transition density of the unconditioned state.
pub fn transition_density<S: Scalar>(surface: &PricingSurface<S>, r: S, x: S, t: S, y: S) -> Result<S> {
    if !(r < t) || r < S::zero() || t > surface.params.horizon {
        return Err(Error::Domain(format!("need 0 <= r < t <= T, got r = {r}, t = {t}")));
    }
    let p = &surface.params;
    let var = p.sigma * p.sigma * (t - r);
    let gam = p.gamma;
    let dchi = surface.chi_at(t, y) - surface.chi_at(r, x);
    let expo = gam * (surface.gamma_at(t, y) - surface.gamma_at(r, x)) - dchi * dchi / (lit::<S>(2.0) * var);
    let norm = (lit::<S>(2.0 * std::f64::consts::PI) * var).sqrt();
    Ok(surface.chi_xi_at(t, y) * expo.exp() / norm)
}

/// `sup_y |∫G(r,x,s,z)G(s,z,t,y)dz − G(r,x,t,y)|` over the given `y`, with the
/// `z`-integral taken by the trapezoid rule on the surface grid.
pub fn chapman_kolmogorov_residual<S: Scalar>(
    surface: &PricingSurface<S>,
    r: S,
    x: S,
    s: S,
    t: S,
    ys: &[S],
) -> Result<S> {
    if !(r < s && s < t) {
        return Err(Error::Domain(format!("need r < s < t, got {r}, {s}, {t}")));
    }
    let zs = surface.xi_grid.nodes();
    let h = surface.xi_grid.spacing();
    let first: Vec<S> = zs.iter().map(|&z| transition_density(surface, r, x, s, z)).collect::<Result<_>>()?;
    let mut worst = S::zero();
    for &y in ys {
        let mut acc = S::zero();
        for (k, (&z, &f)) in zs.iter().zip(&first).enumerate() {
            let w = if k == 0 || k + 1 == zs.len() { lit(0.5) } else { S::one() };
            acc = acc + w * f * transition_density(surface, s, z, t, y)?;
        }
        worst = worst.max((acc * h - transition_density(surface, r, x, t, y)?).abs());
    }
    Ok(worst)
}

/// Law of the value `ṽ` given `ξ_t = ξ`, as a CDF on the image grid `v_j = g(y_j)`.
#[derive(Debug, Clone)]
pub struct ConditionalLaw<S> {
    pub cdf: MonotoneCurve<S>,
    /// `E[ṽ | ξ_t = ξ]`.
    pub mean: S,
    /// Trapezoid mass of `G(t,ξ,T,·)` before normalization.
    pub mass: S,
}

impl<S: Scalar> ConditionalLaw<S> {
    /// Quantile by inversion of the CDF.
    pub fn quantile(&self, u: S) -> Result<S> {
        self.cdf.invert(u)
    }

    pub fn median(&self) -> Result<S> {
        self.quantile(lit(0.5))
    }

    pub fn iqr(&self) -> Result<S> {
        Ok(self.quantile(lit(0.75))? - self.quantile(lit(0.25))?)
    }
}

/// Pushes `G(t,ξ,T,·)` through `g`.
pub fn conditional_value_cdf<S: Scalar>(
    surface: &PricingSurface<S>,
    pot: &ConvexPotential<S>,
    t: S,
    xi: S,
) -> Result<ConditionalLaw<S>> {
    let horizon = surface.params.horizon;
    if t >= horizon {
        return Err(Error::Degenerate(format!("at t = T the value is the point mass g(ξ) = {}", pot.eval_g(xi))));
    }
    let ys = pot.grid().nodes();
    let h = pot.grid().spacing();
    let dens: Vec<S> = ys.iter().map(|&y| transition_density(surface, t, xi, horizon, y)).collect::<Result<_>>()?;
    let cum = cumulative_trapezoid_corrected(&dens, h);
    let mass = cum[cum.len() - 1];
    if !(mass > S::zero()) {
        return Err(Error::Degenerate(format!("transition density has mass {mass}")));
    }
    let g = pot.values();
    let weighted: Vec<S> = dens.iter().zip(g).map(|(d, v)| *d * *v).collect();
    let mean = cumulative_trapezoid_corrected(&weighted, h)[ys.len() - 1] / mass;

    let mut vs: Vec<S> = Vec::with_capacity(ys.len());
    let mut fs: Vec<S> = Vec::with_capacity(ys.len());
    let mut run = S::zero();
    for (&v, &c) in g.iter().zip(&cum) {
        run = run.max((c / mass).max(S::zero()).min(S::one()));
        match vs.last() {
            Some(&last) if v <= last => {
                // Flat stretch of g: the atom goes to the larger CDF value.
                *fs.last_mut().expect("nonempty") = run;
            }
            _ => {
                vs.push(v);
                fs.push(run);
            }
        }
    }
    let cdf = MonotoneCurve::new(vs, fs, Extrapolation::Clamp)?;
    Ok(ConditionalLaw { cdf, mean, mass })
}

/// Sup-norm distance between a conditional law and the prior over `n` points
/// spread across the image of `g`.
pub fn prior_distance<S: Scalar>(law: &ConditionalLaw<S>, nu: &BeliefDistribution<S>, n: usize) -> S {
    let xs = law.cdf.xs();
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    (0..=n)
        .map(|k| {
            let v = lo + (hi - lo) * lit::<S>(k as f64) / lit(n.max(1) as f64);
            (law.cdf.eval(v) - nu.cdf(v)).abs()
        })
        .fold(S::zero(), S::max)
}

/// Insider drift `θ = (g⁻¹(ṽ) − ξ)/(T − t)`.
pub fn insider_drift<S: Scalar>(
    pot: &ConvexPotential<S>,
    params: &ModelParams<S>,
    v_target: S,
    t: S,
    xi: S,
) -> Result<S> {
    if t >= params.horizon {
        return Err(Error::SingularDrift);
    }
    Ok((pot.inverse_g(v_target)? - xi) / (params.horizon - t))
}

/// The same drift as `σ²/∂ξχ · ∂ξG/G` with `G = G(t,ξ,T,g⁻¹(ṽ))`, spatial
/// derivatives of `Γ` and `χ` by central differences on the surface.
pub fn insider_drift_from_density<S: Scalar>(
    surface: &PricingSurface<S>,
    pot: &ConvexPotential<S>,
    v_target: S,
    t: S,
    xi: S,
) -> Result<S> {
    let p = &surface.params;
    if t >= p.horizon {
        return Err(Error::SingularDrift);
    }
    let y = pot.inverse_g(v_target)?;
    let h = surface.xi_grid.spacing();
    let two = lit::<S>(2.0);
    let d = |f: Field| (surface.interp(f, t, xi + h) - surface.interp(f, t, xi - h)) / (two * h);
    let chi_x = d(Field::Chi);
    let gam_x = d(Field::Gamma);
    let s2 = p.sigma * p.sigma;
    let dlog = -p.gamma * gam_x + (y - surface.chi_at(t, xi)) * chi_x / (s2 * (p.horizon - t));
    Ok(s2 / chi_x * dlog)
}

/// Value of the insider's expected utility and whether the conjugate was clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Utility<S> {
    pub value: S,
    pub clamped: bool,
}

/// `φ^c(v) = v·y − φ(y)` at `y = g⁻¹(v)`; outside the image of `g` the
/// maximizer is clamped to the nearest grid end and the flag is set.
pub fn conjugate<S: Scalar>(pot: &ConvexPotential<S>, v: S) -> (S, bool) {
    match pot.inverse_g(v) {
        Ok(y) => (v * y - pot.eval_phi(y), false),
        Err(_) => {
            let n = pot.grid().len();
            let y = if v <= pot.values()[0] { pot.grid().node(0) } else { pot.grid().node(n - 1) };
            (v * y - pot.eval_phi(y), true)
        }
    }
}

/// `−exp(ṽ²γ²σ²T/2 + γ(ṽχ(0,0) − Γ(0,0)) − γφ^c(ṽ))`.
pub fn expected_utility<S: Scalar>(
    pot: &ConvexPotential<S>,
    rep: &RepresentationPoint<S>,
    params: &ModelParams<S>,
    v: S,
) -> Utility<S> {
    let (conj, clamped) = conjugate(pot, v);
    let g = params.gamma;
    let expo = v * v * g * g * params.terminal_variance() / lit(2.0) + g * (v * rep.chi00 - rep.gamma00) - g * conj;
    Utility { value: -expo.exp(), clamped }
}

/// `λ = −γΣ²/2 + √(γ²Σ⁴/4 + Σ²/σ²)` for the prior `N(m, Σ²)`; `m` passes through.
pub fn gaussian_benchmark<S: Scalar>(params: &ModelParams<S>, big_sigma: S, m: S) -> Result<(S, S)> {
    if !(big_sigma > S::zero()) {
        return Err(Error::Domain(format!("prior stdev must be positive, got {big_sigma}")));
    }
    let v = big_sigma * big_sigma;
    let g = params.gamma;
    let half = lit::<S>(0.5);
    let lam = -g * v * half + (g * g * v * v / lit(4.0) + v / (params.sigma * params.sigma)).sqrt();
    Ok((lam, m))
}

/// The linear equilibrium of a Gaussian prior in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearEquilibrium<S> {
    pub lambda: S,
    pub m: S,
    pub params: ModelParams<S>,
}

impl<S: Scalar> LinearEquilibrium<S> {
    pub fn new(params: ModelParams<S>, big_sigma: S, m: S) -> Result<Self> {
        let (lambda, m) = gaussian_benchmark(&params, big_sigma, m)?;
        Ok(Self { lambda, m, params })
    }

    /// `γσ²λ(T − t)`.
    pub fn a(&self, t: S) -> S {
        self.params.risk_weight(t) * self.lambda
    }

    pub fn price(&self, _t: S, xi: S) -> S {
        self.lambda * xi + self.m
    }

    /// `(1 − a)ξ − γσ²(T−t)m`.
    pub fn chi(&self, t: S, xi: S) -> S {
        (S::one() - self.a(t)) * xi - self.params.risk_weight(t) * self.m
    }

    /// `λ(1−a)ξ²/2 + m(1−a)ξ − ln(1−a)/(2γ) − γσ²(T−t)m²/2`; the `ln` term
    /// becomes `σ²λ(T−t)/2` at `γ = 0`.
    pub fn gamma(&self, t: S, xi: S) -> S {
        let a = self.a(t);
        let half = lit::<S>(0.5);
        let f = if self.params.gamma > S::zero() {
            -(S::one() - a).ln() / (lit::<S>(2.0) * self.params.gamma)
        } else {
            half * self.params.sigma * self.params.sigma * self.lambda * (self.params.horizon - t)
        };
        half * self.lambda * (S::one() - a) * xi * xi + self.m * (S::one() - a) * xi + f
            - half * self.params.risk_weight(t) * self.m * self.m
    }

    /// Expected utility with `φ^c(v) = (v − m)²/(2λ)`.
    pub fn utility(&self, chi00: S, gamma00: S, v: S) -> S {
        let g = self.params.gamma;
        let d = v - self.m;
        -(v * v * g * g * self.params.terminal_variance() / lit(2.0) + g * (v * chi00 - gamma00)
            - g * d * d / (lit::<S>(2.0) * self.lambda))
            .exp()
    }

    /// `K(r,t)` along any path. The exponent integrates to
    /// `ln((1 − a(t))/(1 − a(r)))`, leaving `1/(1 − a(r))`.
    pub fn kernel(&self, r: S, _t: S) -> S {
        S::one() / (S::one() - self.a(r))
    }
}

/// Node-wise impact, depth and their drifts.
#[derive(Debug, Clone)]
pub struct EquilibriumReport<S> {
    pub t_grid: Vec<S>,
    pub xi: Vec<S>,
    /// `λ = R/(1 − γσ²(T−t)R)`.
    pub lambda_grid: Array2<S>,
    /// `ζ = 1/λ`, `+∞` where `R = 0`.
    pub depth_grid: Array2<S>,
    /// `dt`-coefficient of `dλ`: `−γσ²λ²`.
    pub lambda_drift_grid: Array2<S>,
    /// `dt`-coefficient of `dζ`, `+∞` where `R = 0`.
    pub depth_drift_grid: Array2<S>,
    /// `K(t,t) = 1/∂ξχ`.
    pub kernel_diagonal: Array2<S>,
    pub potential: ConvexPotential<S>,
    pub representation: RepresentationPoint<S>,
    pub params: ModelParams<S>,
}

impl<S: Scalar> EquilibriumReport<S> {
    /// Expected utility of the insider holding `ṽ = v`.
    pub fn utility(&self, v: S) -> Utility<S> {
        expected_utility(&self.potential, &self.representation, &self.params, v)
    }

    /// Largest `λ`-drift over the finite nodes.
    pub fn max_lambda_drift(&self) -> S {
        self.lambda_drift_grid.iter().copied().fold(S::neg_infinity(), S::max)
    }

    /// Smallest `ζ`-drift over nodes with `R > 0`.
    pub fn min_depth_drift(&self) -> S {
        self.depth_drift_grid.iter().copied().fold(S::infinity(), S::min)
    }

    /// `max |ζλ − 1|` over nodes with `R > 0`.
    pub fn reciprocity_error(&self) -> S {
        self.depth_grid
            .iter()
            .zip(self.lambda_grid.iter())
            .filter(|(z, _)| z.is_finite())
            .map(|(z, l)| (*z * *l - S::one()).abs())
            .fold(S::zero(), S::max)
    }
}

/// Impact, depth and drifts at every surface node.
///
/// `∂ξξP` is the central difference of the node values of `R`; the depth drift
/// is `γσ² + γσ⁴(T−t)(∂ξR/R)²/(∂ξχ)³ + σ²(∂ξR/R)²/((∂ξχ)²R)`.
pub fn impact_and_depth<S: Scalar>(
    surface: &PricingSurface<S>,
    pot: &ConvexPotential<S>,
    rep: &RepresentationPoint<S>,
) -> EquilibriumReport<S> {
    let p = surface.params;
    let (m1, n) = surface.r.dim();
    let h = surface.xi_grid.spacing();
    let s2 = p.sigma * p.sigma;
    let mut lambda = Array2::<S>::zeros((m1, n));
    let mut depth = Array2::<S>::zeros((m1, n));
    let mut ldrift = Array2::<S>::zeros((m1, n));
    let mut zdrift = Array2::<S>::zeros((m1, n));
    let mut kdiag = Array2::<S>::zeros((m1, n));
    for k in 0..m1 {
        let t = surface.t_grid[k];
        let a = p.risk_weight(t);
        for i in 0..n {
            let r = surface.r[[k, i]];
            let chi_x = S::one() - a * r;
            kdiag[[k, i]] = S::one() / chi_x;
            if r <= S::zero() {
                depth[[k, i]] = S::infinity();
                zdrift[[k, i]] = S::infinity();
                continue;
            }
            let lam = r / chi_x;
            lambda[[k, i]] = lam;
            depth[[k, i]] = S::one() / lam;
            ldrift[[k, i]] = -p.gamma * s2 * lam * lam;
            let r_x = if i == 0 {
                (surface.r[[k, 1]] - r) / h
            } else if i + 1 == n {
                (r - surface.r[[k, n - 2]]) / h
            } else {
                (surface.r[[k, i + 1]] - surface.r[[k, i - 1]]) / (lit::<S>(2.0) * h)
            };
            let q = (r_x / r) * (r_x / r);
            zdrift[[k, i]] = p.gamma * s2
                + p.gamma * s2 * s2 * (p.horizon - t) * q / (chi_x * chi_x * chi_x)
                + s2 * q / (chi_x * chi_x * r);
        }
    }
    EquilibriumReport {
        t_grid: surface.t_grid.clone(),
        xi: surface.xi_grid.nodes(),
        lambda_grid: lambda,
        depth_grid: depth,
        lambda_drift_grid: ldrift,
        depth_drift_grid: zdrift,
        kernel_diagonal: kdiag,
        potential: pot.clone(),
        representation: *rep,
        params: p,
    }
}

/// `K(r,t) = exp(∫_r^t γσ²λ(s,ξ_s) ds)/∂ξχ(t,ξ_t)` along a sampled path, the
/// integral by the trapezoid rule on the path times inside `[r, t]`.
pub fn impact_kernel_k<S: Scalar>(surface: &PricingSurface<S>, times: &[S], xis: &[S], r: S, t: S) -> Result<S> {
    if r > t {
        return Err(Error::Domain(format!("need r <= t, got r = {r}, t = {t}")));
    }
    if times.len() != xis.len() || times.is_empty() {
        return Err(Error::Params("path times and states must have equal nonzero length".into()));
    }
    if r < times[0] || t > times[times.len() - 1] {
        return Err(Error::Domain("kernel window outside the sampled path".into()));
    }
    let p = surface.params;
    let at = |s: S| -> S {
        let k = times.partition_point(|&u| u <= s).clamp(1, times.len().max(2) - 1) - 1;
        if times.len() == 1 {
            return xis[0];
        }
        let w = (s - times[k]) / (times[k + 1] - times[k]);
        xis[k] + w * (xis[k + 1] - xis[k])
    };
    let lam = |s: S| -> S {
        let x = at(s);
        let r_ = surface.r_at(s, x);
        p.gamma * p.sigma * p.sigma * r_ / (S::one() - p.risk_weight(s) * r_)
    };
    let mut knots = vec![r];
    knots.extend(times.iter().copied().filter(|&u| u > r && u < t));
    knots.push(t);
    let mut integral = S::zero();
    for w in knots.windows(2) {
        integral = integral + (w[1] - w[0]) * (lam(w[0]) + lam(w[1])) / lit(2.0);
    }
    Ok(integral.exp() / surface.chi_xi_at(t, at(t)))
}
