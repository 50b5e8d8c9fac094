use std::path::Path;

use ndarray::Array2;

use super::{locate_time, solve_r, ModelParams, RSolution};
use crate::potential::{fmt_num, ConvexPotential, XiGrid};
use crate::{lit, to_f64, Error, Result, Scalar};

/// Targets for `P(0,0)` and `Γ(0,0)` taken from the representation of the fixed point.
///
/// The gaps to the values integrated along `ξ = 0` are spread linearly in time
/// and vanish at `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor<S> {
    pub price00: S,
    pub gamma00: S,
}

/// `R`, `P`, `Γ`, `χ` on the time grid times the potential's `ξ` grid.
#[derive(Debug, Clone)]
pub struct PricingSurface<S> {
    pub t_grid: Vec<S>,
    pub xi_grid: XiGrid<S>,
    /// `∂ξP` at the nodes (mean of the adjacent cells).
    pub r: Array2<S>,
    /// `∂ξP` per cell, exactly the slope of `P` between nodes.
    pub r_cells: Array2<S>,
    pub p: Array2<S>,
    pub gamma: Array2<S>,
    pub chi: Array2<S>,
    pub params: ModelParams<S>,
    /// Anchor shifts `(P, Γ)` applied at `t = 0`; zero without an anchor.
    pub anchor_gaps: (S, S),
    pub substeps: Vec<usize>,
    pub penalty_hits: usize,
}

/// Fields that can be exported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    R,
    P,
    Gamma,
    Chi,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::R => "R",
            Field::P => "P",
            Field::Gamma => "Gamma",
            Field::Chi => "Chi",
        }
    }
}

/// Builds `P`, `χ` and `Γ` from `R` and the two integrals along `ξ = 0`.
///
/// `P(t,·)` is `P(t,0)` plus the running sum of cell slopes, `χ = ξ − γσ²(T−t)P`,
/// and `Γ = Ã + ∫₀^ξ P − γσ²(T−t)P²/2`. The last slice is exactly `(g, ξ, φ)`.
pub fn assemble_surfaces<S: Scalar>(
    sol: &RSolution<S>,
    pot: &ConvexPotential<S>,
    params: &ModelParams<S>,
    anchor: Option<Anchor<S>>,
) -> Result<PricingSurface<S>> {
    let grid = sol.grid.clone();
    if pot.grid() != &grid {
        return Err(Error::Params("potential and R solution live on different grids".into()));
    }
    let m = sol.t_grid.len() - 1;
    let n = grid.len();
    let c = grid.center();
    let h = grid.spacing();
    let horizon = params.horizon;
    let half = lit::<S>(0.5);

    let (gap_p, gap_a) = match anchor {
        Some(a) => {
            let a0 = params.risk_weight(S::zero());
            let gap_p = a.price00 - sol.price_at_zero[0];
            let gap_a = a.gamma00 + half * a0 * a.price00 * a.price00 - sol.a_tilde[0];
            (gap_p, gap_a)
        }
        None => (S::zero(), S::zero()),
    };

    let mut r = Array2::<S>::zeros((m + 1, n));
    let mut p = Array2::<S>::zeros((m + 1, n));
    let mut gamma = Array2::<S>::zeros((m + 1, n));
    let mut chi = Array2::<S>::zeros((m + 1, n));
    let xs = grid.nodes();
    let g = pot.values();
    let phi = pot.phi_nodes();
    let last = sol.cells.row(m).to_owned();
    let mut dp = vec![S::zero(); n];
    let mut integral = vec![S::zero(); n];

    // Each slice is built as a deviation from the final data, so the roundoff of
    // the running sums shrinks with the distance to `T`.
    for k in 0..=m {
        let t = sol.t_grid[k];
        let a = params.risk_weight(t);
        let cells = sol.cells.row(k);
        let decay = (horizon - t) / horizon;
        let at = sol.a_tilde[k] + gap_a * decay;

        dp[c] = sol.price_at_zero[k] + gap_p * decay - pot.g0();
        for i in c..n - 1 {
            dp[i + 1] = dp[i] + h * (cells[i] - last[i]);
        }
        for i in (0..c).rev() {
            dp[i] = dp[i + 1] - h * (cells[i] - last[i]);
        }
        integral[c] = S::zero();
        for i in c..n - 1 {
            integral[i + 1] = integral[i] + half * h * (dp[i] + dp[i + 1]);
        }
        for i in (0..c).rev() {
            integral[i] = integral[i + 1] - half * h * (dp[i] + dp[i + 1]);
        }

        let mut rrow = r.row_mut(k);
        rrow[0] = cells[0];
        rrow[n - 1] = cells[n - 2];
        for i in 1..n - 1 {
            rrow[i] = half * (cells[i - 1] + cells[i]);
        }
        for i in 0..n {
            let pv = g[i] + dp[i];
            p[[k, i]] = pv;
            chi[[k, i]] = xs[i] - a * pv;
            gamma[[k, i]] = phi[i] + at + integral[i] - half * a * pv * pv;
        }
    }

    let surface = PricingSurface {
        t_grid: sol.t_grid.clone(),
        xi_grid: grid,
        r,
        r_cells: sol.cells.clone(),
        p,
        gamma,
        chi,
        params: *params,
        anchor_gaps: (gap_p, gap_a),
        substeps: sol.substeps.clone(),
        penalty_hits: sol.penalty_hits,
    };
    surface.check_invariants()?;
    Ok(surface)
}

/// `solve_r` followed by `assemble_surfaces`.
pub fn build_surface<S: Scalar>(
    pot: &ConvexPotential<S>,
    params: &ModelParams<S>,
    t_steps: usize,
    anchor: Option<Anchor<S>>,
) -> Result<PricingSurface<S>> {
    let sol = solve_r(pot, params, t_steps)?;
    assemble_surfaces(&sol, pot, params, anchor)
}

impl<S: Scalar> PricingSurface<S> {
    pub fn steps(&self) -> usize {
        self.t_grid.len() - 1
    }

    pub fn field(&self, f: Field) -> &Array2<S> {
        match f {
            Field::R => &self.r,
            Field::P => &self.p,
            Field::Gamma => &self.gamma,
            Field::Chi => &self.chi,
        }
    }

    /// `0 ≤ R ≤ l_cap` and `1 − γσ²T·l_cap ≤ ∂ξχ ≤ 1` at every node and cell.
    pub fn check_invariants(&self) -> Result<()> {
        let l_cap = self.params.l_cap;
        let tol = lit::<S>(1e-12) * l_cap.max(S::one());
        if let Some(((k, j), v)) =
            self.r_cells.indexed_iter().find(|(_, v)| !v.is_finite() || **v < -tol || **v > l_cap + tol)
        {
            return Err(Error::Assembly(format!(
                "R = {} outside [0, {}] at t = {}, cell {j}",
                to_f64(*v),
                to_f64(l_cap),
                to_f64(self.t_grid[k])
            )));
        }
        let floor = self.params.chi_slope_floor();
        let h = self.xi_grid.spacing();
        let slack = lit::<S>(1e-9);
        let mut worst: Option<(usize, usize, S)> = None;
        for k in 0..self.t_grid.len() {
            for j in 0..self.xi_grid.len() - 1 {
                let d = (self.chi[[k, j + 1]] - self.chi[[k, j]]) / h;
                if !d.is_finite() || d < floor - slack || d > S::one() + slack {
                    let excess = (floor - d).max(d - S::one());
                    if worst.is_none_or(|(_, _, e)| excess > e) {
                        worst = Some((k, j, excess));
                    }
                }
            }
        }
        if let Some((k, j, _)) = worst {
            let d = (self.chi[[k, j + 1]] - self.chi[[k, j]]) / h;
            return Err(Error::Assembly(format!(
                "dχ/dξ = {} outside [{}, 1] at t = {}, cell {j}",
                to_f64(d),
                to_f64(floor),
                to_f64(self.t_grid[k])
            )));
        }
        Ok(())
    }

    /// Bilinear interpolation of a field; `ξ` is clamped into the grid.
    pub fn interp(&self, f: Field, t: S, x: S) -> S {
        let arr = self.field(f);
        let (k, wt) = locate_time(&self.t_grid, t);
        let (i, dx) = self.xi_grid.locate(x);
        let wx = (dx / self.xi_grid.spacing()).max(S::zero()).min(S::one());
        let row = |kk: usize| arr[[kk, i]] + wx * (arr[[kk, i + 1]] - arr[[kk, i]]);
        row(k) + wt * (row(k + 1) - row(k))
    }

    pub fn p_at(&self, t: S, x: S) -> S {
        self.interp(Field::P, t, x)
    }

    pub fn chi_at(&self, t: S, x: S) -> S {
        self.interp(Field::Chi, t, x)
    }

    pub fn gamma_at(&self, t: S, x: S) -> S {
        self.interp(Field::Gamma, t, x)
    }

    pub fn r_at(&self, t: S, x: S) -> S {
        self.interp(Field::R, t, x)
    }

    /// `∂ξχ = 1 − γσ²(T−t)R`.
    pub fn chi_xi_at(&self, t: S, x: S) -> S {
        S::one() - self.params.risk_weight(t) * self.r_at(t, x)
    }

    /// Solves `χ(t, ξ) = c` for `ξ` on the bilinear interpolant.
    ///
    /// Returns the root and whether it had to be clamped to the grid ends.
    pub fn chi_inverse(&self, t: S, c: S) -> (S, bool) {
        let n = self.xi_grid.len();
        let (k, wt) = locate_time(&self.t_grid, t);
        let val = |i: usize| self.chi[[k, i]] + wt * (self.chi[[k + 1, i]] - self.chi[[k, i]]);
        if c <= val(0) {
            return (self.xi_grid.node(0), c < val(0));
        }
        if c >= val(n - 1) {
            return (self.xi_grid.node(n - 1), c > val(n - 1));
        }
        let (mut lo, mut hi) = (0usize, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if val(mid) <= c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (val(lo), val(hi));
        let w = if b > a { (c - a) / (b - a) } else { S::zero() };
        (self.xi_grid.node(lo) + w * self.xi_grid.spacing(), false)
    }

    /// Writes `(t, xi, value)` rows, keeping every `t_stride`-th time and
    /// `xi_stride`-th node (the last slice is always kept).
    pub fn write_field_csv(&self, f: Field, path: &Path, t_stride: usize, xi_stride: usize) -> Result<()> {
        let arr = self.field(f);
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "xi", f.name()])?;
        let m = self.steps();
        let ts = t_stride.max(1);
        let xs = xi_stride.max(1);
        for k in (0..=m).filter(|k| k % ts == 0 || *k == m) {
            for i in (0..self.xi_grid.len()).step_by(xs) {
                w.write_record([fmt_num(self.t_grid[k]), fmt_num(self.xi_grid.node(i)), fmt_num(arr[[k, i]])])?;
            }
        }
        w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Ok(())
    }
}

/// Sup-norm residuals of the assembled system on interior nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemResidual<S> {
    /// `∂tΓ + σ²∂ξξΓ/(2(∂ξχ)²) − γσ²P²/2`.
    pub gamma: S,
    /// `∂tχ + σ²∂ξξχ/(2(∂ξχ)²) − γσ²P`.
    pub chi: S,
    /// `P − ∂ξΓ/∂ξχ`.
    pub identity: S,
    /// `∂tP + σ²∂ξξP/(2(∂ξχ)²)`.
    pub pricing: S,
}

/// Residuals over every interior node.
pub fn check_system_residual<S: Scalar>(surface: &PricingSurface<S>) -> SystemResidual<S> {
    check_system_residual_within(surface, S::infinity())
}

/// Residuals over interior nodes with `|ξ| ≤ xi_max`.
///
/// Time derivatives use the three-point formula on the nonuniform grid, space
/// derivatives central differences.
pub fn check_system_residual_within<S: Scalar>(surface: &PricingSurface<S>, xi_max: S) -> SystemResidual<S> {
    let t = &surface.t_grid;
    let m = t.len() - 1;
    let n = surface.xi_grid.len();
    let h = surface.xi_grid.spacing();
    let two = lit::<S>(2.0);
    let s2 = surface.params.sigma * surface.params.sigma;
    let gam = surface.params.gamma;
    let (p, g, c) = (&surface.p, &surface.gamma, &surface.chi);
    let mut res = SystemResidual { gamma: S::zero(), chi: S::zero(), identity: S::zero(), pricing: S::zero() };
    for k in 1..m {
        let h1 = t[k] - t[k - 1];
        let h2 = t[k + 1] - t[k];
        let wm = -h2 / (h1 * (h1 + h2));
        let w0 = (h2 - h1) / (h1 * h2);
        let wp = h1 / (h2 * (h1 + h2));
        for i in 1..n - 1 {
            if surface.xi_grid.node(i).abs() > xi_max {
                continue;
            }
            let dt = |f: &Array2<S>| wm * f[[k - 1, i]] + w0 * f[[k, i]] + wp * f[[k + 1, i]];
            let dx = |f: &Array2<S>| (f[[k, i + 1]] - f[[k, i - 1]]) / (two * h);
            let dxx = |f: &Array2<S>| (f[[k, i + 1]] - two * f[[k, i]] + f[[k, i - 1]]) / (h * h);
            let cx = dx(c);
            let diff = s2 / (two * cx * cx);
            let pv = p[[k, i]];
            res.gamma = res.gamma.max((dt(g) + diff * dxx(g) - gam * s2 * pv * pv / two).abs());
            res.chi = res.chi.max((dt(c) + diff * dxx(c) - gam * s2 * pv).abs());
            res.identity = res.identity.max((pv - dx(g) / cx).abs());
            res.pricing = res.pricing.max((dt(p) + diff * dxx(p)).abs());
        }
    }
    res
}
