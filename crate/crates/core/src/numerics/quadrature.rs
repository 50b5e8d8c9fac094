use crate::{lit, to_f64, Error, Result, Scalar};

/// Gauss-Hermite rule for expectations against the standard normal law.
///
/// Nodes are sorted ascending; weights are positive and sum to one.
#[derive(Debug, Clone)]
pub struct QuadratureRule<S> {
    nodes: Vec<S>,
    weights: Vec<S>,
}

impl<S: Scalar> QuadratureRule<S> {
    /// Builds the `order`-point probabilists' Gauss-Hermite rule.
    ///
    /// Roots of the physicists' Hermite polynomial are found by Newton iteration on
    /// the orthonormal three-term recurrence, then rescaled by `√2`.
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Domain("quadrature order must be positive".into()));
        }
        let n = order;
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut x = vec![0.0f64; n];
        let mut w = vec![0.0f64; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        let total: f64 = w.iter().sum();
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut pairs: Vec<(f64, f64)> = x.iter().zip(&w).map(|(&xi, &wi)| (xi * sqrt2, wi / total)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { nodes: pairs.iter().map(|p| lit(p.0)).collect(), weights: pairs.iter().map(|p| lit(p.1)).collect() })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// `E[f(mean + stdev·Z)]` for `Z ~ N(0,1)`.
    pub fn expectation<F: FnMut(S) -> S>(&self, f: F, mean: S, stdev: S) -> Result<S> {
        gaussian_expectation(f, self, mean, stdev)
    }
}

/// `Σ wᵢ f(mean + stdev·xᵢ)`.
pub fn gaussian_expectation<S: Scalar, F: FnMut(S) -> S>(
    mut f: F,
    rule: &QuadratureRule<S>,
    mean: S,
    stdev: S,
) -> Result<S> {
    if !(stdev > S::zero()) {
        return Err(Error::Domain(format!("stdev must be positive, got {stdev}")));
    }
    let mut acc = S::zero();
    for (i, (&x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let at = mean + stdev * x;
        let v = f(at);
        if !v.is_finite() {
            return Err(Error::NonFinite { what: format!("quadrature node {i} (x = {:.6e})", to_f64(at)) });
        }
        acc = acc + w * v;
    }
    Ok(acc)
}
