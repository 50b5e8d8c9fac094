use crate::{lit, Error, Result, Scalar};

/// Behaviour of a [`MonotoneCurve`] outside its knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extrapolation {
    /// Hold the end values (CDFs).
    Clamp,
    /// Continue with the end slopes (potentials).
    Linear,
}

/// Monotone piecewise-cubic Hermite interpolant with the Fritsch-Carlson limiter.
#[derive(Debug, Clone)]
pub struct MonotoneCurve<S> {
    xs: Vec<S>,
    ys: Vec<S>,
    ds: Vec<S>,
    extrapolation: Extrapolation,
}

impl<S: Scalar> MonotoneCurve<S> {
    pub fn new(xs: Vec<S>, ys: Vec<S>, extrapolation: Extrapolation) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::Domain(format!(
                "monotone curve needs at least 2 matching knots, got {} xs and {} ys",
                n,
                ys.len()
            )));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "monotone curve knots".into() });
        }
        if let Some(i) = (0..n - 1).find(|&i| !(xs[i] < xs[i + 1])) {
            return Err(Error::Domain(format!("xs not strictly increasing at knot {i}")));
        }
        if let Some(i) = (0..n - 1).find(|&i| ys[i + 1] < ys[i]) {
            return Err(Error::Domain(format!("ys decreasing at knot {i}")));
        }
        let ds = fritsch_carlson(&xs, &ys);
        Ok(Self { xs, ys, ds, extrapolation })
    }

    pub fn xs(&self) -> &[S] {
        &self.xs
    }

    pub fn ys(&self) -> &[S] {
        &self.ys
    }

    pub fn extrapolation(&self) -> Extrapolation {
        self.extrapolation
    }

    /// Index `k` with `xs[k] ≤ x < xs[k+1]`, clamped to the interior intervals.
    fn segment(&self, x: S) -> usize {
        let n = self.xs.len();
        let k = self.xs.partition_point(|&v| v <= x);
        k.saturating_sub(1).min(n - 2)
    }

    pub fn eval(&self, x: S) -> S {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return match self.extrapolation {
                Extrapolation::Clamp => self.ys[0],
                Extrapolation::Linear => self.ys[0] + self.ds[0] * (x - self.xs[0]),
            };
        }
        if x >= self.xs[n - 1] {
            return match self.extrapolation {
                Extrapolation::Clamp => self.ys[n - 1],
                Extrapolation::Linear => self.ys[n - 1] + self.ds[n - 1] * (x - self.xs[n - 1]),
            };
        }
        let k = self.segment(x);
        self.hermite(k, x)
    }

    pub fn derivative(&self, x: S) -> S {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return match self.extrapolation {
                Extrapolation::Clamp => S::zero(),
                Extrapolation::Linear if x < self.xs[0] => self.ds[0],
                Extrapolation::Linear => self.ds[n - 1],
            };
        }
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let s = (x - self.xs[k]) / h;
        let two = lit::<S>(2.0);
        let three = lit::<S>(3.0);
        let six = lit::<S>(6.0);
        let d00 = six * s * s - six * s;
        let d10 = three * s * s - lit::<S>(4.0) * s + S::one();
        let d11 = three * s * s - two * s;
        d00 * (self.ys[k] - self.ys[k + 1]) / h + d10 * self.ds[k] + d11 * self.ds[k + 1]
    }

    fn hermite(&self, k: usize, x: S) -> S {
        let h = self.xs[k + 1] - self.xs[k];
        let s = (x - self.xs[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let two = lit::<S>(2.0);
        let three = lit::<S>(3.0);
        let h00 = two * s3 - three * s2 + S::one();
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        let v = h00 * self.ys[k] + h10 * h * self.ds[k] + h01 * self.ys[k + 1] + h11 * h * self.ds[k + 1];
        // Rounding can push a limited cubic a hair outside its bracket.
        v.max(self.ys[k]).min(self.ys[k + 1])
    }

    /// Smallest `x` with `eval(x) = y` inside the knot range (or along a linear tail).
    pub fn invert(&self, y: S) -> Result<S> {
        let n = self.xs.len();
        if !y.is_finite() {
            return Err(Error::NonFinite { what: "monotone curve inversion target".into() });
        }
        if y < self.ys[0] || y > self.ys[n - 1] {
            if self.extrapolation == Extrapolation::Linear {
                let (x0, y0, d) = if y < self.ys[0] {
                    (self.xs[0], self.ys[0], self.ds[0])
                } else {
                    (self.xs[n - 1], self.ys[n - 1], self.ds[n - 1])
                };
                if d > S::zero() {
                    return Ok(x0 + (y - y0) / d);
                }
            }
            return Err(Error::Domain(format!("value {y} outside curve range [{}, {}]", self.ys[0], self.ys[n - 1])));
        }
        let k = self.ys.partition_point(|&v| v < y);
        if k == 0 {
            return Ok(self.xs[0]);
        }
        if self.ys[k] == y {
            // Leftmost knot attaining y.
            return Ok(self.xs[k]);
        }
        let k = k - 1;
        let (mut lo, mut hi) = (self.xs[k], self.xs[k + 1]);
        let mut x = lo + (hi - lo) * (y - self.ys[k]) / (self.ys[k + 1] - self.ys[k]);
        let tol = lit::<S>(4.0) * S::epsilon() * (hi.abs().max(lo.abs()).max(S::one()));
        for _ in 0..200 {
            let f = self.hermite(k, x) - y;
            if f == S::zero() {
                return Ok(x);
            }
            if f > S::zero() {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= tol {
                break;
            }
            let d = self.derivative(x);
            let newton = x - f / d;
            x = if d > S::zero() && newton > lo && newton < hi { newton } else { (lo + hi) / lit(2.0) };
        }
        Ok(x)
    }
}

fn fritsch_carlson<S: Scalar>(xs: &[S], ys: &[S]) -> Vec<S> {
    let n = xs.len();
    let delta: Vec<S> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])).collect();
    let mut d = vec![S::zero(); n];
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    for k in 1..n - 1 {
        d[k] = if delta[k - 1] == S::zero() || delta[k] == S::zero() {
            S::zero()
        } else {
            (delta[k - 1] + delta[k]) / lit(2.0)
        };
    }
    let three = lit::<S>(3.0);
    for k in 0..n - 1 {
        if delta[k] == S::zero() {
            d[k] = S::zero();
            d[k + 1] = S::zero();
            continue;
        }
        let a = d[k] / delta[k];
        let b = d[k + 1] / delta[k];
        let r = (a * a + b * b).sqrt();
        if r > three {
            let tau = three / r;
            d[k] = tau * a * delta[k];
            d[k + 1] = tau * b * delta[k];
        }
    }
    d
}
