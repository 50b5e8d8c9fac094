use crate::{lit, Error, Result, Scalar};

const MAX_EXPANSIONS: usize = 80;

/// Minimizes a strongly convex function of one variable.
///
/// The derivative is bracketed by geometric expansion from `init`, then its root is
/// polished by a safeguarded secant/inverse-quadratic step (Brent) that falls back
/// to bisection whenever an interpolated step leaves the bracket. Returns
/// `(argmin, value(argmin))` once `|derivative| ≤ tol`.
pub fn minimize_convex_1d<S, V, D>(mut value: V, mut derivative: D, init: S, tol: S, max_iter: usize) -> Result<(S, S)>
where
    S: Scalar,
    V: FnMut(S) -> S,
    D: FnMut(S) -> S,
{
    if !(tol > S::zero()) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let d0 = derivative(init);
    if !d0.is_finite() {
        return Err(Error::NonFinite { what: format!("derivative at initial point {init}") });
    }
    if d0.abs() <= tol {
        return Ok((init, value(init)));
    }

    // Walk downhill until the derivative changes sign.
    let two = lit::<S>(2.0);
    let dir = if d0 > S::zero() { -S::one() } else { S::one() };
    let mut step = init.abs().max(S::one()) * lit(0.25);
    let (mut a, mut fa) = (init, d0);
    let mut bracket = None;
    for _ in 0..MAX_EXPANSIONS {
        let b = a + dir * step;
        let fb = derivative(b);
        if !fb.is_finite() {
            return Err(Error::NotConvex(format!("derivative not finite at {b} during bracketing")));
        }
        if fb.abs() <= tol {
            return Ok((b, value(b)));
        }
        if fb.signum() != fa.signum() {
            bracket = Some(if a < b { (a, fa, b, fb) } else { (b, fb, a, fa) });
            break;
        }
        if (fb - fa) * dir <= S::zero() {
            return Err(Error::NotConvex(format!("derivative not increasing between {a} and {b}")));
        }
        a = b;
        fa = fb;
        step = step * two;
    }
    let (lo, flo, hi, fhi) = bracket.ok_or_else(|| {
        Error::NotConvex(format!("no sign change of the derivative within {MAX_EXPANSIONS} expansions"))
    })?;
    brent_root(&mut derivative, lo, flo, hi, fhi, tol, max_iter).map(|x| (x, value(x)))
}

fn brent_root<S: Scalar, D: FnMut(S) -> S>(
    f: &mut D,
    a0: S,
    fa0: S,
    b0: S,
    fb0: S,
    tol: S,
    max_iter: usize,
) -> Result<S> {
    let two = lit::<S>(2.0);
    let three = lit::<S>(3.0);
    let half = lit::<S>(0.5);
    let (mut a, mut fa, mut b, mut fb) = (a0, fa0, b0, fb0);
    let (mut c, mut fc) = (b, fb);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        if fb.abs() <= tol {
            return Ok(b);
        }
        let xtol = two * S::epsilon() * b.abs() + lit(1e-300);
        let xm = half * (c - b);
        if xm.abs() <= xtol {
            // Bracket collapsed to adjacent floats: the derivative cannot be
            // resolved below this point.
            return Err(Error::NonConvergence(format!(
                "derivative {fb} above tolerance {tol} at rounding floor x = {b}"
            )));
        }
        if e.abs() >= xtol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = S::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - S::one()));
                q = (qq - S::one()) * (r - S::one()) * (s - S::one());
            }
            if p > S::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = three * xm * q - (xtol * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > xtol { b + d } else { b + xtol * xm.signum() };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::NonFinite { what: format!("derivative at {b}") });
        }
    }
    Err(Error::NonConvergence(format!("minimizer exceeded {max_iter} iterations")))
}
