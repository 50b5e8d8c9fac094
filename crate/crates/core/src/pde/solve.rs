use ndarray::Array2;

use super::{time_grid, ModelParams};
use crate::potential::{ConvexPotential, XiGrid};
use crate::{lit, Error, Result, Scalar};

/// Step control of [`solve_r_on`].
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<S> {
    /// Allowed overshoot of the discrete maximum principle, relative to `max |R|`.
    /// Defaults to `1e-10`, or `10⁴` machine epsilons if that is larger.
    pub overshoot_tol: S,
    /// Most halvings of one time step.
    pub max_halvings: u32,
    /// Lagged sweeps per step.
    pub sweeps: usize,
}

impl<S: Scalar> Default for SolverOptions<S> {
    fn default() -> Self {
        Self { overshoot_tol: lit::<S>(1e-10).max(S::epsilon() * lit(1e4)), max_halvings: 12, sweeps: 2 }
    }
}

/// `R` on cells together with the two time integrals taken along `ξ = 0`.
#[derive(Debug, Clone)]
pub struct RSolution<S> {
    pub t_grid: Vec<S>,
    pub grid: XiGrid<S>,
    /// Cell averages, shape `(M+1, N−1)`; cell `j` spans nodes `j` and `j+1`.
    pub cells: Array2<S>,
    /// `P(t,0) = g(0) + ∫_t^T σ²∂ξR/(2(1−γσ²(T−s)R)²)(s,0) ds`.
    pub price_at_zero: Vec<S>,
    /// `∫_t^T σ²R/(2(1−γσ²(T−s)R))(s,0) ds`.
    pub a_tilde: Vec<S>,
    /// Substeps used on each interval `[t_k, t_{k+1}]`.
    pub substeps: Vec<usize>,
    /// Node evaluations where the penalization floor was active.
    pub penalty_hits: usize,
}

/// Solves for `R` on the default graded grid with `t_steps` intervals.
pub fn solve_r<S: Scalar>(pot: &ConvexPotential<S>, params: &ModelParams<S>, t_steps: usize) -> Result<RSolution<S>> {
    solve_r_on(pot, params, &time_grid(params.horizon, t_steps)?, SolverOptions::default())
}

struct Stepper<'a, S> {
    params: &'a ModelParams<S>,
    h: S,
    floor: S,
    center: usize,
    penalty_hits: usize,
    // Scratch for the tridiagonal solve.
    lower: Vec<S>,
    diag: Vec<S>,
    upper: Vec<S>,
    scratch: Vec<S>,
}

impl<S: Scalar> Stepper<'_, S> {
    /// Diffusivities at the interior nodes `1..=n_cells−1`; index `i` is node `i`.
    fn diffusivity(&mut self, u: &[S], t: S, out: &mut Vec<S>) {
        let a = self.params.risk_weight(t);
        let half_s2 = self.params.sigma * self.params.sigma / lit(2.0);
        let nc = u.len();
        out.clear();
        out.push(S::zero());
        for i in 1..nc {
            let r = (u[i - 1] + u[i]) / lit(2.0);
            let mut den = S::one() - a * r;
            if den < self.floor {
                den = self.floor;
                self.penalty_hits += 1;
            }
            out.push(half_s2 / (den * den));
        }
        out.push(S::zero());
    }

    /// `(Lu)_j = (D_{j+1}(u_{j+1} − u_j) − D_j(u_j − u_{j−1}))/h²`.
    fn apply(&self, u: &[S], d: &[S], out: &mut Vec<S>) {
        let nc = u.len();
        let h2 = self.h * self.h;
        out.clear();
        for j in 0..nc {
            let right = if j + 1 < nc { d[j + 1] * (u[j + 1] - u[j]) } else { S::zero() };
            let left = if j > 0 { d[j] * (u[j] - u[j - 1]) } else { S::zero() };
            out.push((right - left) / h2);
        }
    }

    /// Solves `(I − (Δ/2)L_d) x = rhs`.
    fn solve(&mut self, d: &[S], dt: S, rhs: &[S], x: &mut [S]) {
        let nc = rhs.len();
        let r = dt / (lit::<S>(2.0) * self.h * self.h);
        self.lower.clear();
        self.diag.clear();
        self.upper.clear();
        for j in 0..nc {
            self.lower.push(-r * d[j]);
            self.upper.push(-r * d[j + 1]);
            self.diag.push(S::one() + r * (d[j] + d[j + 1]));
        }
        thomas(&self.lower, &self.diag, &self.upper, rhs, x, &mut self.scratch);
    }

    fn center_flux(&self, u: &[S], d: &[S]) -> S {
        let c = self.center;
        d[c] * (u[c] - u[c - 1]) / self.h
    }

    fn center_source(&self, u: &[S], t: S) -> S {
        let c = self.center;
        let r = (u[c - 1] + u[c]) / lit(2.0);
        let den = (S::one() - self.params.risk_weight(t) * r).max(self.floor);
        self.params.sigma * self.params.sigma * r / (lit::<S>(2.0) * den)
    }
}

/// Thomas algorithm for a diagonally dominant tridiagonal system.
fn thomas<S: Scalar>(lower: &[S], diag: &[S], upper: &[S], rhs: &[S], x: &mut [S], c: &mut Vec<S>) {
    let n = diag.len();
    c.clear();
    c.resize(n, S::zero());
    let mut beta = diag[0];
    c[0] = upper[0] / beta;
    x[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / beta;
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] = x[i] - c[i] * x[i + 1];
    }
}

/// Solves for `R` backward from `T` on the supplied time grid.
///
/// Each interval is split into `2^s` equal substeps, with `s` raised until the
/// step respects the discrete maximum principle.
pub fn solve_r_on<S: Scalar>(
    pot: &ConvexPotential<S>,
    params: &ModelParams<S>,
    t_grid: &[S],
    opts: SolverOptions<S>,
) -> Result<RSolution<S>> {
    let m = t_grid
        .len()
        .checked_sub(1)
        .filter(|&m| m >= 1)
        .ok_or_else(|| Error::Params("time grid needs two nodes".into()))?;
    if t_grid[0] != S::zero() || t_grid[m] != params.horizon || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Params("time grid must increase from 0 to T".into()));
    }
    let grid = pot.grid().clone();
    let h = grid.spacing();
    let nc = grid.len() - 1;
    let l_cap = params.l_cap;
    let init: Vec<S> = pot.cell_slopes().into_iter().map(|s| s.max(S::zero()).min(l_cap)).collect();

    let mut st = Stepper {
        params,
        h,
        floor: params.chi_slope_floor(),
        center: grid.center(),
        penalty_hits: 0,
        lower: Vec::with_capacity(nc),
        diag: Vec::with_capacity(nc),
        upper: Vec::with_capacity(nc),
        scratch: Vec::with_capacity(nc),
    };

    let mut cells = Array2::<S>::zeros((m + 1, nc));
    cells.row_mut(m).iter_mut().zip(&init).for_each(|(c, v)| *c = *v);
    let mut price_at_zero = vec![S::zero(); m + 1];
    let mut a_tilde = vec![S::zero(); m + 1];
    let mut substeps = vec![1usize; m];
    price_at_zero[m] = pot.g0();

    let mut u = init;
    let mut d_old = Vec::with_capacity(nc + 1);
    let mut d_new = Vec::with_capacity(nc + 1);
    let mut lu = Vec::with_capacity(nc);
    let mut rhs = vec![S::zero(); nc];
    let mut w = vec![S::zero(); nc];
    let mut trial = vec![S::zero(); nc];

    for k in (0..m).rev() {
        let (t_lo, t_hi) = (t_grid[k], t_grid[k + 1]);
        let mut halvings = 0u32;
        'retry: loop {
            let parts = 1usize << halvings;
            let dt = (t_hi - t_lo) / lit(parts as f64);
            trial.copy_from_slice(&u);
            let mut p0 = price_at_zero[k + 1];
            let mut at = a_tilde[k + 1];
            for s in 0..parts {
                let t1 = if s == 0 { t_hi } else { t_hi - dt * lit(s as f64) };
                let t0 = if s + 1 == parts { t_lo } else { t_hi - dt * lit((s + 1) as f64) };
                let step = t1 - t0;
                let (lo, hi) = trial.iter().fold((S::infinity(), S::neg_infinity()), |(a, b), &v| (a.min(v), b.max(v)));
                st.diffusivity(&trial, t1, &mut d_old);
                st.apply(&trial, &d_old, &mut lu);
                for j in 0..nc {
                    rhs[j] = trial[j] + step / lit(2.0) * lu[j];
                }
                let flux_old = st.center_flux(&trial, &d_old);
                let src_old = st.center_source(&trial, t1);
                w.copy_from_slice(&trial);
                for _ in 0..opts.sweeps.max(1) {
                    st.diffusivity(&w, t0, &mut d_new);
                    st.solve(&d_new, step, &rhs, &mut w);
                }
                let tol = opts.overshoot_tol * hi.abs().max(lo.abs()).max(S::one());
                if w.iter().any(|&v| !v.is_finite() || v > hi + tol || v < lo - tol) {
                    if halvings >= opts.max_halvings {
                        return Err(Error::Stepping(format!(
                            "maximum principle still violated after {halvings} halvings on [{t_lo}, {t_hi}]"
                        )));
                    }
                    halvings += 1;
                    continue 'retry;
                }
                // Restore the bound exactly; the overshoot is below `tol`.
                for v in w.iter_mut() {
                    *v = v.max(lo).min(hi);
                }
                st.diffusivity(&w, t0, &mut d_new);
                let flux_new = st.center_flux(&w, &d_new);
                let src_new = st.center_source(&w, t0);
                p0 = p0 + step * (flux_old + flux_new) / lit(2.0);
                at = at + step * (src_old + src_new) / lit(2.0);
                trial.copy_from_slice(&w);
            }
            u.copy_from_slice(&trial);
            price_at_zero[k] = p0;
            a_tilde[k] = at;
            substeps[k] = parts;
            break;
        }
        cells.row_mut(k).iter_mut().zip(&u).for_each(|(c, v)| *c = *v);
    }

    Ok(RSolution {
        t_grid: t_grid.to_vec(),
        grid,
        cells,
        price_at_zero,
        a_tilde,
        substeps,
        penalty_hits: st.penalty_hits,
    })
}
