//! Candidate Brenier maps `g = ∂ξφ` on a uniform grid and their pinned
//! antiderivatives `φ` with `φ(0) = 0`.

use std::path::Path;

use crate::{lit, to_f64, Error, Result, Scalar};

/// Uniform grid on `[−Ξ, Ξ]` with an odd node count, so `ξ = 0` is a node.
#[derive(Debug, Clone, PartialEq)]
pub struct XiGrid<S> {
    half_width: S,
    h: S,
    n: usize,
}

impl<S: Scalar> XiGrid<S> {
    pub fn new(half_width: S, nodes: usize) -> Result<Self> {
        if !(half_width > S::zero()) || !half_width.is_finite() {
            return Err(Error::Params(format!("grid half-width must be positive, got {half_width}")));
        }
        if nodes < 5 || nodes.is_multiple_of(2) {
            return Err(Error::Params(format!("grid needs an odd node count >= 5 so that 0 is a node, got {nodes}")));
        }
        let h = lit::<S>(2.0) * half_width / S::from_usize(nodes - 1).expect("count fits");
        Ok(Self { half_width, h, n: nodes })
    }

    /// Default grid: half-width `8σ√T` with 2049 nodes.
    pub fn default_for(sigma: S, horizon: S) -> Self {
        Self::new(lit::<S>(8.0) * sigma * horizon.sqrt(), 2049).expect("valid default grid")
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> S {
        self.h
    }

    pub fn half_width(&self) -> S {
        self.half_width
    }

    /// Index of the node at `ξ = 0`.
    pub fn center(&self) -> usize {
        self.n / 2
    }

    /// Node `i`, computed from the center so the middle node is exactly zero.
    pub fn node(&self, i: usize) -> S {
        let c = self.center();
        if i >= c {
            S::from_usize(i - c).expect("index fits") * self.h
        } else {
            -(S::from_usize(c - i).expect("index fits") * self.h)
        }
    }

    pub fn nodes(&self) -> Vec<S> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Cell index `i` and offset `ξ − ξᵢ` with `ξ` clamped into the grid.
    pub fn locate(&self, x: S) -> (usize, S) {
        let lo = self.node(0);
        let pos = ((x - lo) / self.h).floor();
        let i = pos.to_isize().unwrap_or(0).clamp(0, self.n as isize - 2) as usize;
        (i, x - self.node(i))
    }

    /// Same grid with the spacing halved.
    pub fn refined(&self) -> Self {
        Self::new(self.half_width, 2 * self.n - 1).expect("refinement of a valid grid")
    }
}

/// Extension of `g` beyond the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailMode {
    /// `g` constant outside the grid.
    Constant,
    /// `g` continues with the end-cell slope clamped to `[0, l_cap]`.
    Linear,
}

/// Nondecreasing `g` on a grid together with `φ = ∫₀ g`.
///
/// The antiderivative is stored in centered form `ψ(ξ) = ∫₀^ξ (g − g(0))`, so
/// `φ(ξ) = ψ(ξ) + g(0)ξ` and potentials that differ by a constant share `ψ`.
#[derive(Debug, Clone)]
pub struct ConvexPotential<S> {
    grid: XiGrid<S>,
    g: Vec<S>,
    l_cap: S,
    tail: TailMode,
    psi: Vec<S>,
}

impl<S: Scalar> ConvexPotential<S> {
    pub fn new(grid: XiGrid<S>, g: Vec<S>, l_cap: S, tail: TailMode) -> Result<Self> {
        if g.len() != grid.len() {
            return Err(Error::Params(format!("potential has {} values for a grid of {} nodes", g.len(), grid.len())));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: format!("potential node {i}") });
        }
        if !(l_cap > S::zero()) {
            return Err(Error::Params(format!("slope cap must be positive, got {l_cap}")));
        }
        if let Some(i) = (0..g.len() - 1).find(|&i| g[i + 1] < g[i]) {
            return Err(Error::Domain(format!("g decreases between nodes {i} and {} (φ not convex)", i + 1)));
        }
        let h = grid.spacing();
        let slack = lit::<S>(1e-9);
        if let Some(i) = (0..g.len() - 1).find(|&i| (g[i + 1] - g[i]) / h > l_cap + slack) {
            return Err(Error::SlopeBudget {
                iteration: 0,
                node: i,
                slope: to_f64((g[i + 1] - g[i]) / h),
                l_cap: to_f64(l_cap),
                checkpoint: grid.nodes().iter().zip(&g).map(|(x, v)| (to_f64(*x), to_f64(*v))).collect(),
            });
        }
        let psi = centered_antiderivative(&grid, &g);
        Ok(Self { grid, g, l_cap, tail, psi })
    }

    pub fn from_fn(grid: XiGrid<S>, f: impl Fn(S) -> S, l_cap: S, tail: TailMode) -> Result<Self> {
        let g = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, g, l_cap, tail)
    }

    pub fn zero(grid: XiGrid<S>, l_cap: S) -> Self {
        let n = grid.len();
        Self::new(grid, vec![S::zero(); n], l_cap, TailMode::Constant).expect("zero map is admissible")
    }

    pub fn grid(&self) -> &XiGrid<S> {
        &self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.g
    }

    pub fn l_cap(&self) -> S {
        self.l_cap
    }

    pub fn tail(&self) -> TailMode {
        self.tail
    }

    /// `g(0)`.
    pub fn g0(&self) -> S {
        self.g[self.grid.center()]
    }

    /// Slopes `(g_{i+1} − g_i)/h` of the grid cells.
    pub fn cell_slopes(&self) -> Vec<S> {
        let h = self.grid.spacing();
        self.g.windows(2).map(|w| (w[1] - w[0]) / h).collect()
    }

    pub fn max_slope(&self) -> S {
        self.cell_slopes().into_iter().fold(S::zero(), S::max)
    }

    fn tail_slopes(&self) -> (S, S) {
        match self.tail {
            TailMode::Constant => (S::zero(), S::zero()),
            TailMode::Linear => {
                let s = self.cell_slopes();
                let clamp = |v: S| v.max(S::zero()).min(self.l_cap);
                (clamp(s[0]), clamp(s[s.len() - 1]))
            }
        }
    }

    /// `g(ξ)`: piecewise linear on the grid, extended by the tail mode.
    pub fn eval_g(&self, x: S) -> S {
        let n = self.grid.len();
        let lo = self.grid.node(0);
        let hi = self.grid.node(n - 1);
        let (sl, sr) = self.tail_slopes();
        if x <= lo {
            return self.g[0] + sl * (x - lo);
        }
        if x >= hi {
            return self.g[n - 1] + sr * (x - hi);
        }
        let (i, dx) = self.grid.locate(x);
        let h = self.grid.spacing();
        self.g[i] + (self.g[i + 1] - self.g[i]) * dx / h
    }

    /// `g'(ξ)` of the interpolant (right derivative at nodes).
    pub fn slope_at(&self, x: S) -> S {
        let n = self.grid.len();
        let (sl, sr) = self.tail_slopes();
        if x < self.grid.node(0) {
            return sl;
        }
        if x >= self.grid.node(n - 1) {
            return sr;
        }
        let (i, _) = self.grid.locate(x);
        (self.g[i + 1] - self.g[i]) / self.grid.spacing()
    }

    /// `∫₀^ξ (g − g(0))`, exact for the piecewise-linear interpolant.
    pub fn eval_psi(&self, x: S) -> S {
        let n = self.grid.len();
        let lo = self.grid.node(0);
        let hi = self.grid.node(n - 1);
        let g0 = self.g0();
        let half = lit::<S>(0.5);
        let (sl, sr) = self.tail_slopes();
        if x <= lo {
            let d = x - lo;
            return self.psi[0] + (self.g[0] - g0) * d + half * sl * d * d;
        }
        if x >= hi {
            let d = x - hi;
            return self.psi[n - 1] + (self.g[n - 1] - g0) * d + half * sr * d * d;
        }
        let (i, dx) = self.grid.locate(x);
        let h = self.grid.spacing();
        self.psi[i] + (self.g[i] - g0) * dx + half * (self.g[i + 1] - self.g[i]) * dx * dx / h
    }

    /// `φ(ξ) = ∫₀^ξ g`.
    pub fn eval_phi(&self, x: S) -> S {
        self.eval_psi(x) + self.g0() * x
    }

    /// Smallest `ξ` with `g(ξ) = v`; `v` must lie strictly inside the grid range.
    pub fn inverse_g(&self, v: S) -> Result<S> {
        let n = self.grid.len();
        let (lo, hi) = (self.g[0], self.g[n - 1]);
        if !(v > lo && v < hi) {
            return Err(Error::Domain(format!("value {v} outside the open range ({lo}, {hi}) of g on the grid")));
        }
        // First node with g ≥ v; the previous cell has a positive slope.
        let k = self.g.partition_point(|&x| x < v);
        if self.g[k] == v {
            return Ok(self.grid.node(k));
        }
        let i = k - 1;
        let h = self.grid.spacing();
        Ok(self.grid.node(i) + h * (v - self.g[i]) / (self.g[k] - self.g[i]))
    }

    /// Same map shifted by a constant.
    pub fn shifted(&self, c: S) -> Result<Self> {
        Self::new(self.grid.clone(), self.g.iter().map(|v| *v + c).collect(), self.l_cap, self.tail)
    }

    /// Centered antiderivative at the nodes.
    pub fn psi_nodes(&self) -> &[S] {
        &self.psi
    }

    /// `φ` at the nodes.
    pub fn phi_nodes(&self) -> Vec<S> {
        let g0 = self.g0();
        (0..self.grid.len()).map(|i| self.psi[i] + g0 * self.grid.node(i)).collect()
    }

    /// Writes the two-column `(xi, g)` checkpoint.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["xi", "g"])?;
        for (i, v) in self.g.iter().enumerate() {
            w.write_record([fmt_num(self.grid.node(i)), fmt_num(*v)])?;
        }
        w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Ok(())
    }

    /// Reads a `(xi, g)` checkpoint written on a symmetric uniform grid.
    pub fn read_csv(path: &Path, l_cap: S, tail: TailMode) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut xs = Vec::new();
        let mut gs = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Parse(format!("missing column {k}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(e.to_string()))
            };
            xs.push(parse(0)?);
            gs.push(lit::<S>(parse(1)?));
        }
        let n = xs.len();
        if n < 5 {
            return Err(Error::Parse(format!("checkpoint {} has only {n} rows", path.display())));
        }
        let half = xs[n - 1];
        if (xs[0] + half).abs() > 1e-9 * half.abs().max(1.0) {
            return Err(Error::Parse("checkpoint grid is not symmetric".into()));
        }
        let grid = XiGrid::new(lit::<S>(half), n)?;
        for (i, x) in xs.iter().enumerate() {
            if (to_f64(grid.node(i)) - x).abs() > 1e-9 * half.max(1.0) {
                return Err(Error::Parse(format!("checkpoint grid not uniform at row {i}")));
            }
        }
        Self::new(grid, gs, l_cap, tail)
    }
}

fn centered_antiderivative<S: Scalar>(grid: &XiGrid<S>, g: &[S]) -> Vec<S> {
    let n = g.len();
    let c = grid.center();
    let h = grid.spacing();
    let half = lit::<S>(0.5);
    let g0 = g[c];
    let mut psi = vec![S::zero(); n];
    for i in c + 1..n {
        psi[i] = psi[i - 1] + half * h * ((g[i - 1] - g0) + (g[i] - g0));
    }
    for i in (0..c).rev() {
        psi[i] = psi[i + 1] - half * h * ((g[i] - g0) + (g[i + 1] - g0));
    }
    psi
}

/// Decimal text with 16 significant digits.
pub(crate) fn fmt_num<S: Scalar>(x: S) -> String {
    format!("{:.15e}", to_f64(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> XiGrid<f64> {
        XiGrid::new(4.0, 2049).unwrap()
    }

    #[test]
    fn center_node_is_zero() {
        let g = grid();
        assert_eq!(g.node(g.center()), 0.0);
        assert_eq!(g.node(0), -4.0);
        assert_eq!(g.node(2048), 4.0);
        assert!(XiGrid::<f64>::new(4.0, 2048).is_err());
    }

    #[test]
    fn zero_potential() {
        let p = ConvexPotential::zero(grid(), 4.0);
        assert_eq!(p.eval_g(1.3), 0.0);
        assert_eq!(p.eval_phi(3.0), 0.0);
    }

    #[test]
    fn identity_map() {
        let p = ConvexPotential::from_fn(grid(), |x| x, 4.0, TailMode::Linear).unwrap();
        assert!((p.eval_phi(2.0) - 2.0).abs() < 1e-12);
        assert!((p.inverse_g(0.7).unwrap() - 0.7).abs() < 1e-12);
        assert!((p.eval_g(5.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_tails() {
        let p = ConvexPotential::from_fn(grid(), |x| x, 4.0, TailMode::Constant).unwrap();
        assert_eq!(p.eval_g(6.0), 4.0);
        assert!(p.inverse_g(4.0).is_err());
        assert!(p.inverse_g(-4.0).is_err());
    }

    #[test]
    fn rejects_decreasing_and_steep() {
        let gr = grid();
        assert!(ConvexPotential::from_fn(gr.clone(), |x| -x, 4.0, TailMode::Constant).is_err());
        let r = ConvexPotential::from_fn(gr, |x| 5.0 * x, 4.0, TailMode::Constant);
        assert!(matches!(r, Err(Error::SlopeBudget { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let p = ConvexPotential::from_fn(grid(), |x| 0.3 * x + 1.0, 4.0, TailMode::Constant).unwrap();
        p.write_csv(&path).unwrap();
        let q = ConvexPotential::read_csv(&path, 4.0, TailMode::Constant).unwrap();
        assert_eq!(q.grid().len(), p.grid().len());
        for (a, b) in p.values().iter().zip(q.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
