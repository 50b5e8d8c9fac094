use crate::{lit, Error, Result, Scalar};

/// Market constants: horizon `T`, noise volatility `σ`, risk aversion `γ`, and the
/// slope cap `l` of admissible Brenier maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<S> {
    pub horizon: S,
    pub sigma: S,
    pub gamma: S,
    pub l_cap: S,
}

impl<S: Scalar> ModelParams<S> {
    pub fn new(horizon: S, sigma: S, gamma: S, l_cap: S) -> Result<Self> {
        if !(horizon > S::zero()) || !horizon.is_finite() {
            return Err(Error::Params(format!("horizon T must be positive, got {horizon}")));
        }
        if !(sigma > S::zero()) || !sigma.is_finite() {
            return Err(Error::Params(format!("sigma must be positive, got {sigma}")));
        }
        if !(gamma >= S::zero()) || !gamma.is_finite() {
            return Err(Error::Params(format!("gamma must be nonnegative, got {gamma}")));
        }
        if !(l_cap > S::zero()) {
            return Err(Error::Params(format!("l_cap must be positive, got {l_cap}")));
        }
        let p = Self { horizon, sigma, gamma, l_cap };
        if !(p.budget() < S::one()) {
            return Err(Error::Budget(format!(
                "gamma*sigma^2*T*l_cap = {} must stay below 1 for the pricing equation to be \
                 uniformly parabolic; lower gamma or l_cap",
                p.budget()
            )));
        }
        Ok(p)
    }

    /// `σ²T`.
    pub fn terminal_variance(&self) -> S {
        self.sigma * self.sigma * self.horizon
    }

    /// `γσ²T·l`.
    pub fn budget(&self) -> S {
        self.gamma * self.terminal_variance() * self.l_cap
    }

    /// `γσ²(T − t)`.
    pub fn risk_weight(&self, t: S) -> S {
        self.gamma * self.sigma * self.sigma * (self.horizon - t)
    }

    /// Lower bound `1 − γσ²T·l` of `∂ξχ`.
    pub fn chi_slope_floor(&self) -> S {
        S::one() - self.budget()
    }

    /// Fails unless `γσ²T·l < 1/2`, the hypothesis of the representation of
    /// `χ(0,0)` and `Γ(0,0)` by a strongly convex minimization.
    pub fn require_representation_budget(&self) -> Result<()> {
        if self.budget() < lit(0.5) {
            Ok(())
        } else {
            Err(Error::Budget(format!(
                "gamma*sigma^2*T*l_cap = {} must stay below 1/2 for the fixed point",
                self.budget()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelParams::new(1.0f64, 0.5, 0.1, 4.0).is_ok());
        assert!(matches!(ModelParams::new(1.0f64, 0.5, 0.1, 40.0), Err(Error::Budget(_))));
        assert!(ModelParams::new(0.0f64, 0.5, 0.1, 4.0).is_err());
        assert!(ModelParams::new(1.0f64, 0.5, -0.1, 4.0).is_err());
        let p = ModelParams::new(1.0f64, 0.5, 0.1, 4.0).unwrap();
        assert!((p.budget() - 0.1).abs() < 1e-15);
        assert!(p.require_representation_budget().is_ok());
        let q = ModelParams::new(1.0f64, 0.5, 0.1, 24.0).unwrap();
        assert!(q.require_representation_budget().is_err());
    }
}
