use crate::{lit, Scalar};

/// Trapezoid rule on a uniform grid of spacing `h`.
pub fn trapezoid<S: Scalar>(ys: &[S], h: S) -> S {
    match ys.len() {
        0 | 1 => S::zero(),
        n => {
            let inner: S = ys[1..n - 1].iter().copied().sum();
            h * (inner + (ys[0] + ys[n - 1]) / lit(2.0))
        }
    }
}

/// Running trapezoid integral from the first node; output starts at zero.
pub fn cumulative_trapezoid<S: Scalar>(ys: &[S], h: S) -> Vec<S> {
    let mut out = Vec::with_capacity(ys.len());
    let mut acc = S::zero();
    out.push(acc);
    for w in ys.windows(2) {
        acc = acc + h * (w[0] + w[1]) / lit(2.0);
        out.push(acc);
    }
    out
}

/// Running trapezoid integral with the Euler-Maclaurin end correction
/// `−h²/12 (y'(x) − y'(x₀))`, derivatives by central differences.
///
/// Fourth order for smooth integrands; used for CDFs whose quantiles amplify
/// errors in the tails.
pub fn cumulative_trapezoid_corrected<S: Scalar>(ys: &[S], h: S) -> Vec<S> {
    let n = ys.len();
    let mut out = cumulative_trapezoid(ys, h);
    if n < 3 {
        return out;
    }
    let deriv = |i: usize| -> S {
        if i == 0 {
            (lit::<S>(-3.0) * ys[0] + lit::<S>(4.0) * ys[1] - ys[2]) / (lit::<S>(2.0) * h)
        } else if i == n - 1 {
            (lit::<S>(3.0) * ys[n - 1] - lit::<S>(4.0) * ys[n - 2] + ys[n - 3]) / (lit::<S>(2.0) * h)
        } else {
            (ys[i + 1] - ys[i - 1]) / (lit::<S>(2.0) * h)
        }
    };
    let d0 = deriv(0);
    let c = h * h / lit(12.0);
    for (i, o) in out.iter_mut().enumerate().skip(1) {
        *o = *o - c * (deriv(i) - d0);
    }
    out
}
