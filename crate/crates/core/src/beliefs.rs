//! The market maker's prior `ν` on the liquidation value `ṽ`.

use crate::numerics::{normal_cdf, normal_pdf, normal_quantile, normal_sf, trapezoid, Extrapolation, MonotoneCurve};
use crate::{lit, Error, Result, Scalar};

/// Parametric family of a prior.
#[derive(Debug, Clone, PartialEq)]
pub enum BeliefKind<S> {
    Gaussian {
        mean: S,
        stdev: S,
    },
    Uniform {
        a: S,
        b: S,
    },
    /// Lognormal restricted to `[lo, hi]` with `0 < lo < hi`.
    TruncatedLognormal {
        mu_log: S,
        sigma_log: S,
        lo: S,
        hi: S,
    },
    /// Density values on an increasing grid, renormalized on construction.
    Tabulated {
        grid: Vec<S>,
        density: Vec<S>,
    },
}

#[derive(Debug, Clone)]
enum Cache<S> {
    None,
    Lognormal { alpha: S, beta: S, mass: S, cdf_alpha: S, sf_beta: S },
    Tabulated { cdf: MonotoneCurve<S>, density: Vec<S> },
}

/// Law of `ṽ` with cdf, survival, quantile and density.
#[derive(Debug, Clone)]
pub struct BeliefDistribution<S> {
    kind: BeliefKind<S>,
    kappa: S,
    support: (S, S),
    cache: Cache<S>,
}

impl<S: Scalar> BeliefDistribution<S> {
    pub fn gaussian(mean: S, stdev: S) -> Result<Self> {
        Self::new(BeliefKind::Gaussian { mean, stdev })
    }

    pub fn uniform(a: S, b: S) -> Result<Self> {
        Self::new(BeliefKind::Uniform { a, b })
    }

    pub fn truncated_lognormal(mu_log: S, sigma_log: S, lo: S, hi: S) -> Result<Self> {
        Self::new(BeliefKind::TruncatedLognormal { mu_log, sigma_log, lo, hi })
    }

    pub fn tabulated(grid: Vec<S>, density: Vec<S>) -> Result<Self> {
        Self::new(BeliefKind::Tabulated { grid, density })
    }

    pub fn new(kind: BeliefKind<S>) -> Result<Self> {
        let bad = |m: &str| Err(Error::Params(m.to_string()));
        match &kind {
            BeliefKind::Gaussian { mean, stdev } => {
                if !mean.is_finite() || !(*stdev > S::zero()) || !stdev.is_finite() {
                    return bad("gaussian belief needs finite mean and stdev > 0");
                }
                let kappa = S::one() / (*stdev * *stdev);
                Ok(Self { support: (S::neg_infinity(), S::infinity()), kind, kappa, cache: Cache::None })
            }
            BeliefKind::Uniform { a, b } => {
                if !a.is_finite() || !b.is_finite() || !(a < b) {
                    return bad("uniform belief needs finite a < b");
                }
                Ok(Self { support: (*a, *b), kind, kappa: S::zero(), cache: Cache::None })
            }
            BeliefKind::TruncatedLognormal { mu_log, sigma_log, lo, hi } => {
                if !mu_log.is_finite()
                    || !(*sigma_log > S::zero())
                    || !(*lo > S::zero())
                    || !(lo < hi)
                    || !hi.is_finite()
                {
                    return bad("truncated lognormal needs sigma_log > 0 and 0 < lo < hi < inf");
                }
                let alpha = (lo.ln() - *mu_log) / *sigma_log;
                let beta = (hi.ln() - *mu_log) / *sigma_log;
                let cdf_alpha = normal_cdf(alpha);
                let sf_beta = normal_sf(beta);
                let mass = if beta <= S::zero() { normal_cdf(beta) - cdf_alpha } else { normal_sf(alpha) - sf_beta };
                if !(mass > S::zero()) {
                    return bad("truncation window carries no lognormal mass");
                }
                let support = (*lo, *hi);
                Ok(Self {
                    kind,
                    kappa: S::zero(),
                    support,
                    cache: Cache::Lognormal { alpha, beta, mass, cdf_alpha, sf_beta },
                })
            }
            BeliefKind::Tabulated { grid, density } => {
                let n = grid.len();
                if n < 3 || density.len() != n {
                    return bad("tabulated belief needs at least 3 matching grid/density values");
                }
                if density.iter().any(|d| !d.is_finite() || *d < S::zero()) {
                    return bad("tabulated density must be finite and nonnegative");
                }
                if grid.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("tabulated grid must be strictly increasing");
                }
                // Trapezoid over a possibly non-uniform grid.
                let mut cum = vec![S::zero(); n];
                for i in 1..n {
                    cum[i] = cum[i - 1] + (grid[i] - grid[i - 1]) * (density[i] + density[i - 1]) / lit(2.0);
                }
                let total = cum[n - 1];
                if !(total > S::zero()) {
                    return bad("tabulated density has zero mass");
                }
                let ys: Vec<S> = cum.iter().map(|c| *c / total).collect();
                let cdf = MonotoneCurve::new(grid.clone(), ys, Extrapolation::Clamp)?;
                let density = density.iter().map(|d| *d / total).collect();
                let support = (grid[0], grid[n - 1]);
                Ok(Self { kind, kappa: S::zero(), support, cache: Cache::Tabulated { cdf, density } })
            }
        }
    }

    pub fn kind(&self) -> &BeliefKind<S> {
        &self.kind
    }

    /// Strong-convexity modulus of `−ln p_ν`; zero for the non-Gaussian kinds.
    pub fn kappa(&self) -> S {
        self.kappa
    }

    pub fn support(&self) -> (S, S) {
        self.support
    }

    /// The truncated lognormal breaks the bounded-below density assumption on a
    /// wide window; it is accepted but flagged.
    pub fn assumption_violating(&self) -> bool {
        matches!(self.kind, BeliefKind::TruncatedLognormal { .. })
    }

    pub fn cdf(&self, v: S) -> S {
        let (lo, hi) = self.support;
        if v <= lo {
            return S::zero();
        }
        if v >= hi {
            return S::one();
        }
        match (&self.kind, &self.cache) {
            (BeliefKind::Gaussian { mean, stdev }, _) => normal_cdf((v - *mean) / *stdev),
            (BeliefKind::Uniform { a, b }, _) => (v - *a) / (*b - *a),
            (
                BeliefKind::TruncatedLognormal { mu_log, sigma_log, .. },
                Cache::Lognormal { beta, mass, cdf_alpha, sf_beta, .. },
            ) => {
                let z = (v.ln() - *mu_log) / *sigma_log;
                let c = if *beta <= S::zero() {
                    (normal_cdf(z) - *cdf_alpha) / *mass
                } else {
                    S::one() - (normal_sf(z) - *sf_beta) / *mass
                };
                c.max(S::zero()).min(S::one())
            }
            (BeliefKind::Tabulated { .. }, Cache::Tabulated { cdf, .. }) => cdf.eval(v),
            _ => unreachable!("cache matches kind by construction"),
        }
    }

    /// Survival function `1 − F(v)`, accurate in the upper tail.
    pub fn sf(&self, v: S) -> S {
        match (&self.kind, &self.cache) {
            (BeliefKind::Gaussian { mean, stdev }, _) => normal_sf((v - *mean) / *stdev),
            (BeliefKind::TruncatedLognormal { mu_log, sigma_log, lo, hi }, Cache::Lognormal { sf_beta, mass, .. }) => {
                if v <= *lo {
                    return S::one();
                }
                if v >= *hi {
                    return S::zero();
                }
                let z = (v.ln() - *mu_log) / *sigma_log;
                ((normal_sf(z) - *sf_beta) / *mass).max(S::zero()).min(S::one())
            }
            _ => S::one() - self.cdf(v),
        }
    }

    pub fn density(&self, v: S) -> S {
        let (lo, hi) = self.support;
        if v < lo || v > hi {
            return S::zero();
        }
        match (&self.kind, &self.cache) {
            (BeliefKind::Gaussian { mean, stdev }, _) => normal_pdf((v - *mean) / *stdev) / *stdev,
            (BeliefKind::Uniform { a, b }, _) => S::one() / (*b - *a),
            (BeliefKind::TruncatedLognormal { mu_log, sigma_log, .. }, Cache::Lognormal { mass, .. }) => {
                let z = (v.ln() - *mu_log) / *sigma_log;
                normal_pdf(z) / (v * *sigma_log * *mass)
            }
            (BeliefKind::Tabulated { .. }, Cache::Tabulated { cdf, .. }) => cdf.derivative(v),
            _ => unreachable!("cache matches kind by construction"),
        }
    }

    /// `F_ν⁻¹(u)` for `u ∈ (0,1)`.
    pub fn quantile(&self, u: S) -> Result<S> {
        if !(u > S::zero() && u < S::one()) {
            return Err(Error::Domain(format!("quantile level must lie in (0,1), got {u}")));
        }
        match (&self.kind, &self.cache) {
            (BeliefKind::Gaussian { mean, stdev }, _) => Ok(*mean + *stdev * normal_quantile(u)?),
            (BeliefKind::Uniform { a, b }, _) => Ok(*a + (*b - *a) * u),
            (
                BeliefKind::TruncatedLognormal { mu_log, sigma_log, lo, hi },
                Cache::Lognormal { cdf_alpha, mass, .. },
            ) => {
                let p = (*cdf_alpha + u * *mass).min(S::one() - S::epsilon());
                let v = (*mu_log + *sigma_log * normal_quantile(p)?).exp();
                Ok(v.max(*lo).min(*hi))
            }
            (BeliefKind::Tabulated { .. }, Cache::Tabulated { cdf, .. }) => cdf.invert(u),
            _ => unreachable!("cache matches kind by construction"),
        }
    }

    /// `F_ν⁻¹(1 − s)` computed without forming `1 − s`.
    pub fn quantile_upper(&self, s: S) -> Result<S> {
        if !(s > S::zero() && s < S::one()) {
            return Err(Error::Domain(format!("upper quantile level must lie in (0,1), got {s}")));
        }
        match (&self.kind, &self.cache) {
            (BeliefKind::Gaussian { mean, stdev }, _) => Ok(*mean - *stdev * normal_quantile(s)?),
            (BeliefKind::Uniform { a, b }, _) => Ok(*b - (*b - *a) * s),
            (BeliefKind::TruncatedLognormal { mu_log, sigma_log, lo, hi }, Cache::Lognormal { sf_beta, mass, .. }) => {
                let q = (*sf_beta + s * *mass).min(S::one() - S::epsilon());
                let v = (*mu_log - *sigma_log * normal_quantile(q)?).exp();
                Ok(v.max(*lo).min(*hi))
            }
            _ => self.quantile(S::one() - s),
        }
    }

    pub fn mean(&self) -> S {
        match (&self.kind, &self.cache) {
            (BeliefKind::Gaussian { mean, .. }, _) => *mean,
            (BeliefKind::Uniform { a, b }, _) => (*a + *b) / lit(2.0),
            (BeliefKind::TruncatedLognormal { mu_log, sigma_log, .. }, Cache::Lognormal { alpha, beta, mass, .. }) => {
                let s = *sigma_log;
                (*mu_log + s * s / lit(2.0)).exp() * (normal_cdf(*beta - s) - normal_cdf(*alpha - s)) / *mass
            }
            (BeliefKind::Tabulated { grid, .. }, Cache::Tabulated { density, .. }) => moment(grid, density, |x| x),
            _ => unreachable!("cache matches kind by construction"),
        }
    }

    pub fn variance(&self) -> S {
        match (&self.kind, &self.cache) {
            (BeliefKind::Gaussian { stdev, .. }, _) => *stdev * *stdev,
            (BeliefKind::Uniform { a, b }, _) => (*b - *a) * (*b - *a) / lit(12.0),
            (BeliefKind::TruncatedLognormal { mu_log, sigma_log, .. }, Cache::Lognormal { alpha, beta, mass, .. }) => {
                let s = *sigma_log;
                let two = lit::<S>(2.0);
                let m2 = (two * *mu_log + two * s * s).exp()
                    * (normal_cdf(*beta - two * s) - normal_cdf(*alpha - two * s))
                    / *mass;
                let m = self.mean();
                m2 - m * m
            }
            (BeliefKind::Tabulated { grid, .. }, Cache::Tabulated { density, .. }) => {
                let m = self.mean();
                moment(grid, density, |x| (x - m) * (x - m))
            }
            _ => unreachable!("cache matches kind by construction"),
        }
    }

    /// Infimum of the density over the support (zero for unbounded support).
    pub fn density_lower_bound(&self) -> S {
        match (&self.kind, &self.cache) {
            (BeliefKind::Gaussian { .. }, _) => S::zero(),
            (BeliefKind::Uniform { a, b }, _) => S::one() / (*b - *a),
            (BeliefKind::TruncatedLognormal { lo, hi, .. }, _) => {
                // Lognormal densities are unimodal: the minimum sits at an end.
                self.density(*lo).min(self.density(*hi))
            }
            (BeliefKind::Tabulated { .. }, Cache::Tabulated { density, .. }) => {
                density.iter().copied().fold(S::infinity(), S::min)
            }
            _ => unreachable!("cache matches kind by construction"),
        }
    }

    /// Admissible Lipschitz cap `l` for the Brenier map at horizon `t` and noise `σ`.
    ///
    /// Gaussian priors use `2/√(κσ²T)`, twice the Caffarelli slope bound. Compact
    /// priors use `1.25·sup f / inf p_ν`, where `sup f ≤ 1/√(2πσ²T)` holds for every
    /// terminal density whose log has second derivative at least `−1/(σ²T)`; the
    /// factor leaves room for discretization.
    pub fn admissible_slope(&self, horizon: S, sigma: S) -> S {
        let var = sigma * sigma * horizon;
        if self.kappa > S::zero() {
            return lit::<S>(2.0) / (self.kappa * var).sqrt();
        }
        let inf_p = self.density_lower_bound();
        if !(inf_p > S::zero()) {
            return S::infinity();
        }
        let sup_f = S::one() / (lit::<S>(2.0 * std::f64::consts::PI) * var).sqrt();
        lit::<S>(1.25) * sup_f / inf_p
    }

    /// The median, used as a default target in diagnostics.
    pub fn median(&self) -> S {
        self.quantile(lit(0.5)).expect("0.5 is a valid level")
    }
}

fn moment<S: Scalar>(grid: &[S], density: &[S], f: impl Fn(S) -> S) -> S {
    let mut acc = S::zero();
    for i in 1..grid.len() {
        acc = acc + (grid[i] - grid[i - 1]) * (f(grid[i]) * density[i] + f(grid[i - 1]) * density[i - 1]) / lit(2.0);
    }
    acc
}

/// Trapezoid mass of the density on a fine uniform grid across the support.
///
/// For unbounded supports the window is `mean ± 12 stdev`.
pub fn numerical_mass<S: Scalar>(nu: &BeliefDistribution<S>, nodes: usize) -> S {
    let (lo, hi) = nu.support();
    let (lo, hi) = if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        let sd = nu.variance().sqrt();
        (nu.mean() - lit::<S>(12.0) * sd, nu.mean() + lit::<S>(12.0) * sd)
    };
    let h = (hi - lo) / S::from_usize(nodes - 1).expect("node count fits");
    let ys: Vec<S> = (0..nodes).map(|i| nu.density(lo + h * S::from_usize(i).expect("index fits"))).collect();
    trapezoid(&ys, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_basics() {
        let u = BeliefDistribution::uniform(10.0f64, 20.0).unwrap();
        assert_eq!(u.cdf(15.0), 0.5);
        assert_eq!(u.cdf(9.0), 0.0);
        assert_eq!(u.quantile(0.25).unwrap(), 12.5);
        assert_eq!(u.kappa(), 0.0);
        assert!((u.quantile_upper(0.25).unwrap() - 17.5).abs() < 1e-12);
    }

    #[test]
    fn gaussian_basics() {
        let g = BeliefDistribution::gaussian(1.0f64, 1.0).unwrap();
        assert_eq!(g.cdf(1.0), 0.5);
        assert!((g.quantile(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(g.kappa(), 1.0);
        assert!((g.admissible_slope(1.0, 0.5) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters() {
        assert!(BeliefDistribution::uniform(2.0f64, 1.0).is_err());
        assert!(BeliefDistribution::gaussian(0.0f64, 0.0).is_err());
        assert!(BeliefDistribution::truncated_lognormal(1.0f64, 0.5, 0.0, 50.0).is_err());
        assert!(BeliefDistribution::uniform(0.0f64, 1.0).unwrap().quantile(1.0).is_err());
    }

    #[test]
    fn lognormal_is_flagged() {
        let l = BeliefDistribution::truncated_lognormal(1.0f64, 0.5, 0.1, 50.0).unwrap();
        assert!(l.assumption_violating());
        assert_eq!(l.kappa(), 0.0);
    }
}
