//! Dirichlet problem `S_k(D²u) = F` in the unit ball of `ℝ^n`, `u = 0` on the
//! sphere, for data depending only on `r = |x′|` and `t = |x_n|`.
//!
//! The unknown lives on the quarter disk `{r, t ≥ 0, r² + t² ≤ 1}` sampled on
//! a Cartesian grid of spacing `h = 1/N`. The Hessian of a doubly radial
//! function has the eigenvalue `u_r/r` with multiplicity `n − 2` and the two
//! eigenvalues of `[[u_rr, u_rt], [u_rt, u_tt]]`. Second and first
//! derivatives use three-point differences on non-uniform spacing where a
//! stencil arm is cut by the arc, and even reflection across both axes.
//! Every difference is exact on quadratics.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::symmetric::{binomial, ConeLevel, Spectrum};

const NONE: u32 = u32::MAX;

/// Node layout of the quarter-disk grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    /// `N = 1/h`.
    pub n_grid: usize,
    pub h: f64,
    unknown_of: Vec<u32>,
    nodes: Vec<(u32, u32)>,
}

/// Where a grid node sits relative to the arc.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    /// Exactly on `r² + t² = 1`.
    Arc,
    Outside,
}

impl Grid {
    /// `h` must be the reciprocal of an integer `N ≥ 4`.
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h <= 0.25) {
            return Err(arg(format!("spacing h = {h} must lie in (0, 1/4]")));
        }
        let n = (1.0 / h).round();
        if ((1.0 / h) - n).abs() > 1e-9 * n {
            return Err(arg(format!("spacing h = {h} is not the reciprocal of an integer")));
        }
        let n_grid = n as usize;
        if n_grid > 4096 {
            return Err(arg(format!("grid N = {n_grid} exceeds the supported 4096")));
        }
        let side = n_grid + 1;
        let mut unknown_of = vec![NONE; side * side];
        let mut nodes = Vec::new();
        for i in 0..side {
            for j in 0..side {
                if i * i + j * j < n_grid * n_grid {
                    unknown_of[i * side + j] = nodes.len() as u32;
                    nodes.push((i as u32, j as u32));
                }
            }
        }
        Ok(Self { n_grid, h: 1.0 / n, unknown_of, nodes })
    }

    pub fn side(&self) -> usize {
        self.n_grid + 1
    }

    pub fn kind(&self, i: usize, j: usize) -> NodeKind {
        let n2 = self.n_grid * self.n_grid;
        let d = i * i + j * j;
        if d < n2 {
            NodeKind::Interior
        } else if d == n2 {
            NodeKind::Arc
        } else {
            NodeKind::Outside
        }
    }

    /// Index into the unknown vector, if `(i, j)` is interior.
    pub fn unknown(&self, i: usize, j: usize) -> Option<usize> {
        let side = self.side();
        if i >= side || j >= side {
            return None;
        }
        let u = self.unknown_of[i * side + j];
        (u != NONE).then_some(u as usize)
    }

    pub fn num_unknowns(&self) -> usize {
        self.nodes.len()
    }

    /// Grid indices of unknown `idx`.
    pub fn node(&self, idx: usize) -> (usize, usize) {
        let (i, j) = self.nodes[idx];
        (i as usize, j as usize)
    }

    /// Coordinates `(r, t)` of grid node `(i, j)`.
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h, j as f64 * self.h)
    }
}

/// A doubly radial function sampled on the quarter-disk grid; zero on and
/// outside the arc.
#[derive(Clone, Debug, PartialEq)]
pub struct DoublyRadialField {
    pub grid: Grid,
    /// Ambient dimension.
    pub n: usize,
    pub k: ConeLevel,
    /// Row-major over `(i, j)`, `i` indexing `r`.
    values: Vec<f64>,
}

impl DoublyRadialField {
    /// Samples `f(r, t)` at interior nodes.
    pub fn from_fn<G: Fn(f64, f64) -> f64>(h: f64, n: usize, k: ConeLevel, f: G) -> Result<Self> {
        check_dims(n, k)?;
        let grid = Grid::new(h)?;
        let side = grid.side();
        let mut values = vec![0.0; side * side];
        for idx in 0..grid.num_unknowns() {
            let (i, j) = grid.node(idx);
            let (r, t) = grid.coords(i, j);
            values[i * side + j] = f(r, t);
        }
        Ok(Self { grid, n, k, values })
    }

    fn from_unknowns(grid: Grid, n: usize, k: ConeLevel, u: &[f64]) -> Self {
        let side = grid.side();
        let mut values = vec![0.0; side * side];
        for (idx, &v) in u.iter().enumerate() {
            let (i, j) = grid.node(idx);
            values[i * side + j] = v;
        }
        Self { grid, n, k, values }
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    /// Value at grid node `(i, j)`; zero on and outside the arc.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.side() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values at the unknowns, in unknown order.
    pub fn unknowns(&self) -> Vec<f64> {
        (0..self.grid.num_unknowns())
            .map(|idx| {
                let (i, j) = self.grid.node(idx);
                self.at(i, j)
            })
            .collect()
    }

    /// Bilinear interpolation at `(r, t)` with `r, t ≥ 0` inside the unit disk.
    pub fn interpolate(&self, r: f64, t: f64) -> f64 {
        let h = self.grid.h;
        let nmax = self.grid.n_grid;
        let (x, y) = (r.abs() / h, t.abs() / h);
        let i0 = (x.floor() as usize).min(nmax - 1);
        let j0 = (y.floor() as usize).min(nmax - 1);
        let (fx, fy) = (x - i0 as f64, y - j0 as f64);
        self.at(i0, j0) * (1.0 - fx) * (1.0 - fy)
            + self.at(i0 + 1, j0) * fx * (1.0 - fy)
            + self.at(i0, j0 + 1) * (1.0 - fx) * fy
            + self.at(i0 + 1, j0 + 1) * fx * fy
    }

    /// `max u − min u` over the closed quarter disk.
    pub fn oscillation(&self) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for idx in 0..self.grid.num_unknowns() {
            let (i, j) = self.grid.node(idx);
            let v = self.at(i, j);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }

    /// Discrete `(u_rr, u_rt, u_tt, u_r/r)` at interior node `(i, j)`.
    pub fn reduced_hessian(&self, i: usize, j: usize) -> Result<ReducedHessian> {
        let idx = self
            .grid
            .unknown(i, j)
            .ok_or_else(|| arg(format!("node ({i}, {j}) is not interior")))?;
        let st = NodeStencil::build(&self.grid, idx);
        Ok(st.apply(|c| self.at_unknown(c)))
    }

    /// Discrete `(u_r, u_t)` at interior node `(i, j)`.
    pub fn gradient(&self, i: usize, j: usize) -> Result<(f64, f64)> {
        let idx = self
            .grid
            .unknown(i, j)
            .ok_or_else(|| arg(format!("node ({i}, {j}) is not interior")))?;
        let st = NodeStencil::build(&self.grid, idx);
        Ok(st.gradient(|c| self.at_unknown(c)))
    }

    fn at_unknown(&self, c: usize) -> f64 {
        let (i, j) = self.grid.node(c);
        self.at(i, j)
    }
}

fn check_dims(n: usize, k: ConeLevel) -> Result<()> {
    if n < 2 {
        return Err(arg(format!("dimension n = {n} must be at least 2")));
    }
    if k.get() > n {
        return Err(arg(format!("k = {} exceeds n = {n}", k.get())));
    }
    Ok(())
}

/// The four independent second-order quantities of a doubly radial Hessian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReducedHessian {
    pub u_rr: f64,
    pub u_rt: f64,
    pub u_tt: f64,
    pub u_r_over_r: f64,
}

/// `C(m, j)` as a float, zero for `j` outside `0..=m`.
fn binom_signed(m: usize, j: isize) -> f64 {
    if j < 0 {
        0.0
    } else {
        binomial(m, j as usize)
    }
}

fn powi_nonneg(a: f64, e: isize) -> f64 {
    if e <= 0 {
        1.0
    } else {
        a.powi(e as i32)
    }
}

impl ReducedHessian {
    /// `S_j` of the full spectrum, expanded as
    /// `C(m,j) a^j + C(m,j−1) a^{j−1} (p+s) + C(m,j−2) a^{j−2} (ps − q²)` with `m = n − 2`.
    pub fn sigma(&self, n: usize, j: usize) -> f64 {
        let m = n - 2;
        let j = j as isize;
        let a = self.u_r_over_r;
        let e1 = self.u_rr + self.u_tt;
        let e2 = self.u_rr * self.u_tt - self.u_rt * self.u_rt;
        binom_signed(m, j) * powi_nonneg(a, j)
            + binom_signed(m, j - 1) * powi_nonneg(a, j - 1) * e1
            + binom_signed(m, j - 2) * powi_nonneg(a, j - 2) * e2
    }

    /// Partial derivatives of `S_k` in `(u_rr, u_rt, u_tt, u_r/r)`.
    pub fn sigma_gradient(&self, n: usize, k: usize) -> [f64; 4] {
        let m = n - 2;
        let k = k as isize;
        let a = self.u_r_over_r;
        let (p, q, s) = (self.u_rr, self.u_rt, self.u_tt);
        let c1 = binom_signed(m, k - 1) * powi_nonneg(a, k - 1);
        let c2 = binom_signed(m, k - 2) * powi_nonneg(a, k - 2);
        let da = |j: isize| {
            // d/da of C(m, j) a^j
            if j >= 1 {
                binom_signed(m, j) * j as f64 * powi_nonneg(a, j - 1)
            } else {
                0.0
            }
        };
        let g_a = da(k) + da(k - 1) * (p + s) + da(k - 2) * (p * s - q * q);
        [c1 + c2 * s, -2.0 * q * c2, c1 + c2 * p, g_a]
    }

    pub fn spectrum(&self, n: usize) -> Result<Spectrum> {
        reduced_spectrum(self.u_rr, self.u_rt, self.u_tt, self.u_r_over_r, n)
    }
}

/// Eigenvalues of `D²u` for `u = u(|x′|, |x_n|)` in `ℝ^n`: `u_r/r` with
/// multiplicity `n − 2` and the eigenvalues of `[[u_rr, u_rt], [u_rt, u_tt]]`.
///
/// On the axis pass `u_r/r = u_rr`.
pub fn reduced_spectrum(u_rr: f64, u_rt: f64, u_tt: f64, u_r_over_r: f64, n: usize) -> Result<Spectrum> {
    if n < 2 {
        return Err(arg(format!("dimension n = {n} must be at least 2")));
    }
    if [u_rr, u_rt, u_tt, u_r_over_r].iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite Hessian entry".into()));
    }
    let mean = 0.5 * (u_rr + u_tt);
    let half = 0.5 * (u_rr - u_tt);
    let rad = half.hypot(u_rt);
    let mut values = vec![u_r_over_r; n - 2];
    values.push(mean + rad);
    values.push(mean - rad);
    Spectrum::new(values)
}

/// Linear difference weights of one node over the unknowns it touches.
#[derive(Clone, Debug, Default)]
struct NodeStencil {
    cols: Vec<u32>,
    /// Weights for `u_rr`, `u_rt`, `u_tt`, `u_r/r`, `u_r`, `u_t`.
    w: Vec<[f64; 6]>,
}

/// Grid offset of a stencil arm: the neighbor index and its distance in units of `h`.
struct Arm {
    node: Option<(usize, usize)>,
    dist: f64,
}

impl NodeStencil {
    fn add(&mut self, grid: &Grid, node: Option<(usize, usize)>, slot: usize, w: f64) {
        let Some((i, j)) = node else { return };
        let Some(col) = grid.unknown(i, j) else { return };
        let col = col as u32;
        match self.cols.iter().position(|&c| c == col) {
            Some(p) => self.w[p][slot] += w,
            None => {
                self.cols.push(col);
                let mut row = [0.0; 6];
                row[slot] = w;
                self.w.push(row);
            }
        }
    }

    /// Arm from `(i, j)` along axis `axis` (0 for `r`, 1 for `t`) in direction `+1`.
    fn plus_arm(grid: &Grid, i: usize, j: usize, axis: usize) -> Arm {
        let n = grid.n_grid;
        let (ni, nj) = if axis == 0 { (i + 1, j) } else { (i, j + 1) };
        if ni * ni + nj * nj <= n * n {
            Arm { node: Some((ni, nj)), dist: 1.0 }
        } else {
            let (along, across) = if axis == 0 { (i, j) } else { (j, i) };
            // sqrt(N² − across²) − along, rationalized: the numerator is an exact integer
            let gap = (n * n - across * across - along * along) as f64;
            let reach = gap / (((n * n - across * across) as f64).sqrt() + along as f64);
            Arm { node: None, dist: reach }
        }
    }

    fn build(grid: &Grid, idx: usize) -> Self {
        let (i, j) = grid.node(idx);
        let h = grid.h;
        let mut st = NodeStencil::default();
        let center = Some((i, j));
        for axis in 0..2 {
            let along = if axis == 0 { i } else { j };
            let plus = Self::plus_arm(grid, i, j, axis);
            let (minus_node, hm) = if along == 0 {
                (plus.node, plus.dist)
            } else if axis == 0 {
                (Some((i - 1, j)), 1.0)
            } else {
                (Some((i, j - 1)), 1.0)
            };
            let (hp, hm) = (plus.dist * h, hm * h);
            let sum = hp + hm;
            let (wp2, wm2) = (2.0 / (hp * sum), 2.0 / (hm * sum));
            let second = if axis == 0 { 0 } else { 2 };
            st.add(grid, plus.node, second, wp2);
            st.add(grid, minus_node, second, wm2);
            st.add(grid, center, second, -(wp2 + wm2));
            let first = if axis == 0 { 4 } else { 5 };
            if along > 0 {
                let wp1 = hm / (hp * sum);
                let wm1 = -hp / (hm * sum);
                st.add(grid, plus.node, first, wp1);
                st.add(grid, minus_node, first, wm1);
                st.add(grid, center, first, (hp - hm) / (hp * hm));
            }
            if axis == 0 {
                let r = i as f64 * h;
                if i == 0 {
                    st.add(grid, plus.node, 3, wp2);
                    st.add(grid, minus_node, 3, wm2);
                    st.add(grid, center, 3, -(wp2 + wm2));
                } else {
                    st.add(grid, plus.node, 3, hm / (hp * sum) / r);
                    st.add(grid, minus_node, 3, -hp / (hm * sum) / r);
                    st.add(grid, center, 3, (hp - hm) / (hp * hm) / r);
                }
            }
        }
        if i > 0 && j > 0 {
            let n2 = grid.n_grid * grid.n_grid;
            let inside = |a: usize, b: usize| a * a + b * b <= n2;
            let quadrant_ok = |sr: isize, stt: isize| {
                let a = (i as isize + sr) as usize;
                let b = (j as isize + stt) as usize;
                inside(a, j) && inside(i, b) && inside(a, b)
            };
            let all: [(isize, isize); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
            let chosen: Vec<(isize, isize)> = if all.iter().all(|&(a, b)| quadrant_ok(a, b)) {
                all.to_vec()
            } else if quadrant_ok(1, -1) && quadrant_ok(-1, 1) {
                vec![(1, -1), (-1, 1)]
            } else if quadrant_ok(1, 1) {
                vec![(1, 1), (-1, -1)]
            } else {
                vec![(-1, -1)]
            };
            let scale = 1.0 / (chosen.len() as f64 * h * h);
            for (sr, stt) in chosen {
                let a = (i as isize + sr) as usize;
                let b = (j as isize + stt) as usize;
                let sgn = (sr * stt) as f64 * scale;
                st.add(grid, Some((a, b)), 1, sgn);
                st.add(grid, Some((a, j)), 1, -sgn);
                st.add(grid, Some((i, b)), 1, -sgn);
                st.add(grid, center, 1, sgn);
            }
        }
        // the center always carries a diagonal entry, even if all its weights cancel
        st.add(grid, center, 0, 0.0);
        st
    }

    fn dot<V: Fn(usize) -> f64>(&self, slot: usize, value: &V) -> f64 {
        self.cols.iter().zip(&self.w).map(|(&c, w)| w[slot] * value(c as usize)).sum()
    }

    fn apply<V: Fn(usize) -> f64>(&self, value: V) -> ReducedHessian {
        ReducedHessian {
            u_rr: self.dot(0, &value),
            u_rt: self.dot(1, &value),
            u_tt: self.dot(2, &value),
            u_r_over_r: self.dot(3, &value),
        }
    }

    fn gradient<V: Fn(usize) -> f64>(&self, value: V) -> (f64, f64) {
        (self.dot(4, &value), self.dot(5, &value))
    }
}

/// Nodal values on the full `(N+1)²` grid; `NaN` off the interior.
#[derive(Clone, Debug)]
pub struct NodeValues {
    pub n_grid: usize,
    pub h: f64,
    pub values: Vec<f64>,
}

impl NodeValues {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.n_grid + 1) + j]
    }

    /// Largest absolute value over interior nodes.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().filter(|v| !v.is_nan()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The discrete operator on a fixed grid.
struct Discretization {
    grid: Grid,
    n: usize,
    k: usize,
    stencils: Vec<NodeStencil>,
    rhs: Vec<f64>,
}

impl Discretization {
    fn new<F: Fn(f64, f64) -> f64 + Sync>(grid: Grid, n: usize, k: usize, f: &F) -> Self {
        let stencils: Vec<NodeStencil> =
            (0..grid.num_unknowns()).into_par_iter().map(|idx| NodeStencil::build(&grid, idx)).collect();
        let rhs: Vec<f64> = (0..grid.num_unknowns())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = grid.node(idx);
                let (r, t) = grid.coords(i, j);
                f(r, t)
            })
            .collect();
        Self { grid, n, k, stencils, rhs }
    }

    fn hessians(&self, u: &[f64]) -> Vec<ReducedHessian> {
        self.stencils.par_iter().map(|st| st.apply(|c| u[c])).collect()
    }

    /// Smallest `μ ≥ 0` such that adding `μ` to every Hessian eigenvalue puts
    /// each node in the closed cone, `S_j ≥ −slack` for `j ≤ k`.
    fn projection_shift(&self, hess: &[ReducedHessian], slack: f64) -> f64 {
        let (n, k) = (self.n, self.k);
        let ok = |hs: &ReducedHessian, mu: f64| {
            let shifted = ReducedHessian {
                u_rr: hs.u_rr + mu,
                u_rt: hs.u_rt,
                u_tt: hs.u_tt + mu,
                u_r_over_r: hs.u_r_over_r + mu,
            };
            (1..=k).all(|j| shifted.sigma(n, j) >= -slack)
        };
        hess.par_iter()
            .map(|hs| {
                if ok(hs, 0.0) {
                    return 0.0;
                }
                let rad = (0.5 * (hs.u_rr - hs.u_tt)).hypot(hs.u_rt);
                let lowest = (0.5 * (hs.u_rr + hs.u_tt) - rad).min(if n > 2 { hs.u_r_over_r } else { f64::INFINITY });
                let (mut lo, mut hi) = (0.0, (-lowest).max(0.0) * (1.0 + 1e-12) + 1e-300);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if ok(hs, mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Largest violation `max(0, −S_j)` over `j ≤ k` and all nodes.
    fn admissibility_slack(&self, hess: &[ReducedHessian]) -> f64 {
        hess.par_iter()
            .map(|hs| (1..=self.k).map(|j| (-hs.sigma(self.n, j)).max(0.0)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max)
    }
}

/// `S_k(D²u) − F` at interior nodes, with `D²u` from the grid differences.
pub fn residual<F: Fn(f64, f64) -> f64 + Sync>(field: &DoublyRadialField, f: &F) -> NodeValues {
    let disc = Discretization::new(field.grid.clone(), field.n, field.k.get(), f);
    let u = field.unknowns();
    let hess = disc.hessians(&u);
    let side = field.grid.side();
    let mut values = vec![f64::NAN; side * side];
    for (idx, hs) in hess.iter().enumerate() {
        let (i, j) = field.grid.node(idx);
        values[i * side + j] = hs.sigma(field.n, field.k.get()) - disc.rhs[idx];
    }
    NodeValues { n_grid: field.grid.n_grid, h: field.grid.h, values }
}

/// Nonlinear iteration used by [`solve`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Damped Newton, falling back to pseudo-transient steps when the line search stalls.
    Newton,
    /// Pseudo-transient continuation only.
    PseudoTransient,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton" => Ok(Scheme::Newton),
            "pseudo-transient" => Ok(Scheme::PseudoTransient),
            other => Err(Error::Config(format!("unknown scheme `{other}` (expected newton or pseudo-transient)"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Newton => "newton",
            Scheme::PseudoTransient => "pseudo-transient",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Stopping tolerance on `|S_k^{1/k} − F^{1/k}|`, raised at nodes where
    /// roundoff in `S_k` alone exceeds it (see [`SolveReport::effective_tol`]).
    pub tol: f64,
    /// Cap on linear solves over the whole run.
    pub max_iter: usize,
    /// Iterates must satisfy `S_j ≥ −slack` for `j ≤ k`.
    pub admissibility_slack: f64,
    pub scheme: Scheme,
    /// Forces sequential dense kernels inside the sparse factorization.
    pub reproducible: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, admissibility_slack: 1e-8, scheme: Scheme::Newton, reproducible: false }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    /// Nonlinear steps taken.
    pub iterations: usize,
    /// Sparse LU factorizations; chord steps reuse the previous one.
    pub factorizations: usize,
    /// `max |S_k^{1/k} − F^{1/k}|` at the returned field.
    pub final_residual: f64,
    /// Largest per-node stopping threshold: the requested tolerance, raised
    /// where roundoff in `S_k` is amplified by the `k`-th root.
    pub effective_tol: f64,
    /// `max |S_k − F|` at the returned field.
    pub polynomial_residual: f64,
    /// `max(0, −min S_j)` over `j ≤ k` and nodes.
    pub admissibility_slack: f64,
    pub continuation_steps: usize,
    pub pseudo_transient_steps: usize,
    pub unknowns: usize,
    pub wall_time: f64,
}

/// Best iterate of a run that did not reach the tolerance.
#[derive(Debug)]
pub struct ConvergenceFailure {
    pub field: DoublyRadialField,
    pub report: SolveReport,
    pub reason: String,
}

impl std::fmt::Display for ConvergenceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "no convergence after {} iterations ({}); residual {:e}",
            self.report.iterations, self.reason, self.report.final_residual
        )
    }
}

/// Fixed CSC pattern of the Jacobian with the value slot of every stencil entry.
struct JacobianPattern {
    symbolic: SymbolicSparseColMat<usize>,
    /// For each node, the CSC positions of its stencil columns.
    positions: Vec<Vec<usize>>,
    diag: Vec<usize>,
    lu_symbolic: SymbolicLu<usize>,
}

impl JacobianPattern {
    fn new(disc: &Discretization) -> Result<Self> {
        let nu = disc.grid.num_unknowns();
        let mut by_col: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); nu];
        for (row, st) in disc.stencils.iter().enumerate() {
            for (slot, &c) in st.cols.iter().enumerate() {
                by_col[c as usize].push((row, row, slot));
            }
        }
        let mut col_ptr = Vec::with_capacity(nu + 1);
        let mut row_idx = Vec::new();
        let mut positions: Vec<Vec<usize>> =
            disc.stencils.iter().map(|st| vec![0; st.cols.len()]).collect();
        let mut diag = vec![0; nu];
        col_ptr.push(0);
        for (col, entries) in by_col.iter_mut().enumerate() {
            entries.sort_unstable();
            for &(row, _, slot) in entries.iter() {
                let pos = row_idx.len();
                positions[row][slot] = pos;
                if row == col {
                    diag[row] = pos;
                }
                row_idx.push(row);
            }
            col_ptr.push(row_idx.len());
        }
        let symbolic = SymbolicSparseColMat::new_checked(nu, nu, col_ptr, None, row_idx);
        let lu_symbolic = SymbolicLu::try_new(symbolic.as_ref())
            .map_err(|e| Error::Numerical(format!("symbolic factorization failed: {e:?}")))?;
        Ok(Self { symbolic, positions, diag, lu_symbolic })
    }

    /// Factors `J − shift·I` with `J` the Jacobian of `S_k` at `hess`.
    fn factor(&self, disc: &Discretization, hess: &[ReducedHessian], shift: f64) -> Result<Lu<usize, f64>> {
        let mut vals = vec![0.0; self.symbolic.row_idx().len()];
        for (row, st) in disc.stencils.iter().enumerate() {
            let g = hess[row].sigma_gradient(disc.n, disc.k);
            for (slot, w) in st.w.iter().enumerate() {
                vals[self.positions[row][slot]] = g[0] * w[0] + g[1] * w[1] + g[2] * w[2] + g[3] * w[3];
            }
            vals[self.diag[row]] -= shift;
        }
        let mat = SparseColMat::new(self.symbolic.clone(), vals);
        Lu::try_new_with_symbolic(self.lu_symbolic.clone(), mat.as_ref())
            .map_err(|e| Error::Numerical(format!("sparse LU failed: {e:?}")))
    }
}

fn lu_apply(lu: &Lu<usize, f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let out: Vec<f64> = (0..rhs.len()).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("singular Jacobian".into()));
    }
    Ok(out)
}

/// Per-iterate diagnostics.
struct State {
    u: Vec<f64>,
    hess: Vec<ReducedHessian>,
    /// `S_k` at each node.
    sk: Vec<f64>,
    /// `F_τ` at each node.
    target: Vec<f64>,
    /// `max(S_k, 0)^{1/k} − F_τ^{1/k}`.
    root: Vec<f64>,
    merit: f64,
    max_root: f64,
    /// `max |root_i| / tol_i` over nodes; converged when at most one.
    excess: f64,
}

impl State {
    fn max_poly(&self) -> f64 {
        self.sk.iter().zip(&self.target).fold(0.0f64, |m, (s, f)| m.max((s - f).abs()))
    }
}

struct Solver<'a> {
    disc: &'a Discretization,
    pattern: JacobianPattern,
    opts: &'a SolveOptions,
    /// Constant the homotopy starts from: `F_τ = (1−τ) F + τ G`.
    g: f64,
    sk_roundoff: f64,
    iterations: usize,
    pseudo_steps: usize,
    factorizations: usize,
    /// Factorization reused by chord steps while it keeps contracting.
    lu: Option<(Lu<usize, f64>, f64)>,
    lu_fresh_enough: bool,
}

impl<'a> Solver<'a> {
    fn refactor(&mut self, st: &State, shift: f64) -> Result<()> {
        let lu = self.pattern.factor(self.disc, &st.hess, shift)?;
        self.factorizations += 1;
        self.lu = Some((lu, shift));
        self.lu_fresh_enough = true;
        Ok(())
    }

    fn state(&self, u: Vec<f64>, tau: f64) -> State {
        let (n, k) = (self.disc.n, self.disc.k);
        let hess = self.disc.hessians(&u);
        let sk: Vec<f64> = hess.par_iter().map(|hs| hs.sigma(n, k)).collect();
        let target: Vec<f64> = self.disc.rhs.iter().map(|f| (1.0 - tau) * f + tau * self.g).collect();
        let e = 1.0 / k as f64;
        let root: Vec<f64> = sk.iter().zip(&target).map(|(s, f)| s.max(0.0).powf(e) - f.powf(e)).collect();
        let merit = root.iter().map(|r| r * r).sum::<f64>().sqrt();
        let max_root = root.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let excess = root.iter().zip(self.node_tolerances(&target)).fold(0.0f64, |m, (r, t)| m.max(r.abs() / t));
        State { u, hess, sk, target, root, merit, max_root, excess }
    }

    /// Stopping threshold per node: `max(tol, δ_F)` with `δ_F` the change in
    /// `S_k^{1/k} − F^{1/k}` caused by a roundoff-sized change of `S_k`.
    fn node_tolerances<'t>(&self, target: &'t [f64]) -> impl Iterator<Item = f64> + 't {
        let (tol, d, k) = (self.opts.tol, self.sk_roundoff, self.disc.k as f64);
        let worst = d.powf(1.0 / k);
        target.iter().map(move |&f| {
            let floor = if f > 0.0 { worst.min(d / (k * f.powf(1.0 - 1.0 / k))) } else { worst };
            tol.max(floor)
        })
    }

    /// State at `u + μ(r² + t² − 1)/2` with the smallest `μ` restoring admissibility.
    fn project(&self, mut u: Vec<f64>, tau: f64) -> State {
        let hess = self.disc.hessians(&u);
        // aim inside the tolerated band so roundoff in the shifted Hessian cannot push it back out
        let mu = self.disc.projection_shift(&hess, 0.5 * self.opts.admissibility_slack);
        if mu > 0.0 {
            for (idx, v) in u.iter_mut().enumerate() {
                let (i, j) = self.disc.grid.node(idx);
                let (r, t) = self.disc.grid.coords(i, j);
                *v += 0.5 * mu * (r * r + t * t - 1.0);
            }
        }
        self.state(u, tau)
    }

    fn budget_left(&self) -> bool {
        self.iterations < self.opts.max_iter
    }

    /// Newton right-hand side of the root formulation, expressed against the Jacobian of `S_k`.
    ///
    /// Row `i` of the root Jacobian is `S_k^{1/k−1}/k` times row `i` of the
    /// polynomial Jacobian, so the root step solves `J δ = −k S_k^{1−1/k} ρ`.
    /// Nodes with `S_k ≤ 0` fall back to the polynomial residual.
    fn newton_rhs(&self, st: &State) -> Vec<f64> {
        let k = self.disc.k as f64;
        st.sk
            .iter()
            .zip(&st.root)
            .zip(&st.target)
            .map(|((&s, &r), &f)| if s > 0.0 { -k * s.powf(1.0 - 1.0 / k) * r } else { f - s })
            .collect()
    }

    /// One damped step along the (possibly shifted) Newton direction; `None` if no admissible decrease exists.
    ///
    /// A stored factorization is reused when its shift matches and the last
    /// step contracted well; a failed line search with a reused factorization
    /// is retried once with a fresh one.
    fn damped_step(&mut self, st: &State, tau: f64, shift: f64) -> Result<Option<State>> {
        let rhs = self.newton_rhs(st);
        let reusable = self.lu_fresh_enough && self.lu.as_ref().is_some_and(|(_, s)| *s == shift);
        let mut fresh = !reusable;
        if fresh {
            self.refactor(st, shift)?;
        }
        self.iterations += 1;
        loop {
            let delta = lu_apply(&self.lu.as_ref().expect("factorization present").0, &rhs)?;
            let mut alpha = 1.0;
            for _ in 0..12 {
                let trial: Vec<f64> = st.u.iter().zip(&delta).map(|(u, d)| u + alpha * d).collect();
                let next = self.project(trial, tau);
                if next.u.iter().all(|&v| v <= 0.0) && next.merit <= (1.0 - 1e-4 * alpha) * st.merit {
                    self.lu_fresh_enough = next.merit <= 0.25 * st.merit;
                    return Ok(Some(next));
                }
                alpha *= 0.5;
            }
            if fresh {
                self.lu_fresh_enough = false;
                return Ok(None);
            }
            self.refactor(st, shift)?;
            fresh = true;
        }
    }

    /// Drives the root residual at homotopy parameter `tau` below the tolerance.
    fn converge(&mut self, mut st: State, tau: f64) -> Result<(State, bool)> {
        let mut dt_inv = 0.0;
        let mut use_newton = self.opts.scheme == Scheme::Newton;
        let mut stalls = 0;
        while self.budget_left() {
            if st.excess <= 1.0 {
                return Ok((st, true));
            }
            if !use_newton && dt_inv == 0.0 {
                dt_inv = self.initial_shift(&st);
            }
            let shift = if use_newton { 0.0 } else { dt_inv };
            if !use_newton {
                self.pseudo_steps += 1;
            }
            match self.damped_step(&st, tau, shift)? {
                Some(next) => {
                    if !use_newton {
                        // switched evolution relaxation: lengthen the pseudo time step as the residual falls
                        dt_inv *= (next.merit / st.merit).powi(2).clamp(0.1, 2.0);
                        if self.opts.scheme == Scheme::Newton && dt_inv < 1e-6 * self.initial_shift(&next) {
                            use_newton = true;
                        }
                    }
                    let progress = if use_newton { next.merit < 0.9 * st.merit } else { next.merit < st.merit };
                    st = next;
                    stalls = if progress { 0 } else { stalls + 1 };
                }
                None if use_newton => {
                    use_newton = false;
                    dt_inv = self.initial_shift(&st);
                    stalls += 1;
                }
                None => {
                    dt_inv *= 4.0;
                    stalls += 1;
                }
            }
            if stalls >= 6 {
                break;
            }
        }
        let ok = st.excess <= 1.0;
        Ok((st, ok))
    }

    /// Diagonal shift comparable to the diagonal of the root-form Jacobian.
    fn initial_shift(&self, st: &State) -> f64 {
        let h2 = self.disc.grid.h * self.disc.grid.h;
        let k = self.disc.k as f64;
        let g = st
            .hess
            .iter()
            .zip(&st.sk)
            .map(|(hs, &s)| {
                let gr = hs.sigma_gradient(self.disc.n, self.disc.k);
                let chain = if s > 0.0 { s.powf(1.0 / k - 1.0) / k } else { 1.0 };
                chain * (gr[0].abs() + gr[2].abs() + gr[3].abs())
            })
            .fold(0.0f64, f64::max);
        (g / h2).max(1.0)
    }
}

/// Solves `S_k(D²u) = F` with `u = 0` on the arc.
///
/// The iteration starts from the exact discrete solution `c(r² + t² − 1)/2`
/// of the constant datum `G = C(n,k) c^k ≥ max F` and follows the homotopy
/// `F_τ = (1−τ) F + τ G` down to `τ = 0`, shrinking the step in `τ`
/// whenever an intermediate solve fails. Each solve is a damped Newton
/// iteration on `S_k^{1/k} − F_τ^{1/k}` whose line search rejects iterates
/// with `u > 0` or `S_j < −slack`; when it stalls, diagonally shifted
/// (pseudo-transient) steps take over.
pub fn solve<F: Fn(f64, f64) -> f64 + Sync>(
    f: &F,
    n: usize,
    k: ConeLevel,
    h: f64,
    opts: &SolveOptions,
) -> Result<(DoublyRadialField, SolveReport)> {
    let start = Instant::now();
    check_dims(n, k)?;
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(arg("tolerance and iteration cap must be positive"));
    }
    if opts.reproducible {
        faer::set_global_parallelism(faer::Par::Seq);
    }
    let grid = Grid::new(h)?;
    let kk = k.get();
    let disc = Discretization::new(grid.clone(), n, kk, f);
    if let Some(bad) = disc.rhs.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Data(format!("datum must be finite and non-negative on the grid, found {bad}")));
    }
    let cnk = binomial(n, kk);
    let fmax = disc.rhs.iter().cloned().fold(0.0f64, f64::max);
    let c = (fmax / cnk).powf(1.0 / kk as f64).max(1e-3);
    let g = cnk * c.powi(kk as i32);
    let pattern = JacobianPattern::new(&disc)?;
    // second differences carry relative error ε/h², so S_k is only known to about this much
    let sk_roundoff = 2.0 * (g / cnk) * f64::EPSILON / (h * h);
    let mut solver = Solver {
        disc: &disc,
        pattern,
        opts,
        g,
        sk_roundoff,
        iterations: 0,
        pseudo_steps: 0,
        factorizations: 0,
        lu: None,
        lu_fresh_enough: false,
    };

    let u0: Vec<f64> = (0..grid.num_unknowns())
        .map(|idx| {
            let (i, j) = grid.node(idx);
            let (r, t) = grid.coords(i, j);
            0.5 * c * (r * r + t * t - 1.0)
        })
        .collect();
    let mut tau = 1.0;
    let mut st = solver.state(u0, tau);
    let mut best_final: Option<State> = None;
    // below this τ the homotopy solution already meets the tolerance at τ = 0
    let tau_floor = (0.5 * opts.tol).powi(kk as i32) / g;
    let mut ratio: f64 = 0.1;
    let mut continuation_steps = 0;
    let mut reason = String::new();
    while tau > 0.0 && solver.budget_left() {
        let next_tau = if tau * ratio <= tau_floor { 0.0 } else { tau * ratio };
        let moved = solver.state(st.u.clone(), next_tau);
        let (cand, ok) = solver.converge(moved, next_tau)?;
        continuation_steps += 1;
        if ok {
            st = cand;
            tau = next_tau;
            ratio = (ratio * ratio).max(1e-4);
        } else {
            if next_tau == 0.0 && best_final.as_ref().is_none_or(|b| cand.merit < b.merit) {
                best_final = Some(cand);
            }
            ratio = ratio.sqrt();
            if ratio > 0.99 {
                reason = format!("continuation stalled at τ = {tau:e}");
                break;
            }
        }
    }
    if tau > 0.0 {
        if let Some(b) = best_final {
            st = b;
        }
    }
    let field = DoublyRadialField::from_unknowns(grid.clone(), n, k, &st.u);
    let final_st = solver.state(st.u.clone(), 0.0);
    let report = SolveReport {
        iterations: solver.iterations,
        factorizations: solver.factorizations,
        final_residual: final_st.max_root,
        effective_tol: solver.node_tolerances(&final_st.target).fold(0.0, f64::max),
        polynomial_residual: final_st.max_poly(),
        admissibility_slack: disc.admissibility_slack(&final_st.hess),
        continuation_steps,
        pseudo_transient_steps: solver.pseudo_steps,
        unknowns: grid.num_unknowns(),
        wall_time: start.elapsed().as_secs_f64(),
    };
    if tau == 0.0 && final_st.excess <= 1.0 {
        return Ok((field, report));
    }
    if reason.is_empty() {
        reason = if solver.budget_left() { format!("stopped at τ = {tau}") } else { "iteration cap reached".into() };
    }
    Err(Error::Convergence(Box::new(ConvergenceFailure { field, report, reason })))
}

/// Largest `w − u` over the grid; the pair is ordered when it is at most `tol`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ComparisonOutcome {
    pub ordered: bool,
    pub max_violation: f64,
}

/// Checks `w ≤ u + tol` at every node.
pub fn comparison_pair_check(u: &DoublyRadialField, w: &DoublyRadialField, tol: f64) -> Result<ComparisonOutcome> {
    if u.grid != w.grid || u.n != w.n {
        return Err(arg("fields live on different grids"));
    }
    let max_violation = u
        .values
        .iter()
        .zip(&w.values)
        .map(|(a, b)| b - a)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ComparisonOutcome { ordered: max_violation <= tol, max_violation })
}

/// Header written next to a field dump.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldHeader {
    pub h: f64,
    pub n_grid: usize,
    pub n: usize,
    pub k: usize,
    /// Description of the Dirichlet boundary.
    pub arc: String,
    pub columns: Vec<String>,
}

/// Writes `field.json` and `field.csv` (`i,j,r,t,u` for nodes in the closed quarter disk).
pub fn write_field(dir: &Path, field: &DoublyRadialField) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = FieldHeader {
        h: field.h(),
        n_grid: field.grid.n_grid,
        n: field.n,
        k: field.k.get(),
        arc: "r^2 + t^2 = 1, u = 0".into(),
        columns: ["i", "j", "r", "t", "u"].iter().map(|s| s.to_string()).collect(),
    };
    fs::write(dir.join("field.json"), serde_json::to_string_pretty(&header)?)?;
    let mut out = std::io::BufWriter::new(fs::File::create(dir.join("field.csv"))?);
    writeln!(out, "i,j,r,t,u")?;
    let side = field.grid.side();
    for i in 0..side {
        for j in 0..side {
            if field.grid.kind(i, j) != NodeKind::Outside {
                let (r, t) = field.grid.coords(i, j);
                writeln!(out, "{i},{j},{r:?},{t:?},{:?}", field.at(i, j))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_field(dir: &Path) -> Result<DoublyRadialField> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(dir.join("field.json"))?)?;
    let k = ConeLevel::new(header.k)?;
    let mut field = DoublyRadialField::from_fn(1.0 / header.n_grid as f64, header.n, k, |_, _| 0.0)?;
    let side = field.grid.side();
    let reader = BufReader::new(fs::File::open(dir.join("field.csv"))?);
    for (lineno, line) in reader.lines().enumerate().skip(1) {
        let line = line?;
        let parts: Vec<&str> = line.split(',').collect();
        let bad = || Error::Data(format!("field.csv line {}: malformed row", lineno + 1));
        if parts.len() != 5 {
            return Err(bad());
        }
        let i: usize = parts[0].parse().map_err(|_| bad())?;
        let j: usize = parts[1].parse().map_err(|_| bad())?;
        let u: f64 = parts[4].parse().map_err(|_| bad())?;
        if i >= side || j >= side {
            return Err(bad());
        }
        if field.grid.kind(i, j) == NodeKind::Interior {
            field.values[i * side + j] = u;
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lvl(k: usize) -> ConeLevel {
        ConeLevel::new(k).unwrap()
    }

    #[test]
    fn grid_classification() {
        let g = Grid::new(0.25).unwrap();
        assert_eq!(g.kind(0, 4), NodeKind::Arc);
        assert_eq!(g.kind(3, 3), NodeKind::Outside);
        assert_eq!(g.kind(2, 3), NodeKind::Interior);
        assert!(Grid::new(0.3).is_err());
        assert!(Grid::new(0.5).is_err());
    }

    #[test]
    fn spectra_of_model_functions() {
        let s = reduced_spectrum(1.0, 0.0, 1.0, 1.0, 4).unwrap();
        assert_eq!(s.values(), &[1.0; 4]);
        // u = r² in ℝ³
        let s = reduced_spectrum(2.0, 0.0, 0.0, 2.0, 3).unwrap();
        assert_eq!(s.values(), &[2.0, 2.0, 0.0]);
        assert!(reduced_spectrum(f64::NAN, 0.0, 0.0, 0.0, 3).is_err());
    }

    #[test]
    fn closed_form_sigma_matches_spectrum() {
        let hs = ReducedHessian { u_rr: 1.3, u_rt: -0.4, u_tt: 0.2, u_r_over_r: 0.7 };
        for n in 2..=6 {
            let spec = hs.spectrum(n).unwrap();
            for j in 0..=n {
                let want = crate::symmetric::sigma(spec.values(), j);
                assert!((hs.sigma(n, j) - want).abs() < 1e-12, "n={n} j={j}");
            }
        }
    }

    #[test]
    fn sigma_gradient_matches_finite_differences() {
        let hs = ReducedHessian { u_rr: 1.3, u_rt: -0.4, u_tt: 0.2, u_r_over_r: 0.7 };
        let eps = 1e-6;
        for n in 2..=5 {
            for k in 1..=n {
                let g = hs.sigma_gradient(n, k);
                for (slot, gv) in g.iter().enumerate() {
                    let bump = |d: f64| {
                        let mut x = hs;
                        match slot {
                            0 => x.u_rr += d,
                            1 => x.u_rt += d,
                            2 => x.u_tt += d,
                            _ => x.u_r_over_r += d,
                        }
                        x.sigma(n, k)
                    };
                    let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
                    assert!((fd - gv).abs() < 1e-6, "n={n} k={k} slot={slot}: {fd} vs {gv}");
                }
            }
        }
    }

    #[test]
    fn quadratics_are_differenced_exactly() {
        let h = 1.0 / 16.0;
        let f = DoublyRadialField::from_fn(h, 3, lvl(2), |r, t| 0.5 * (r * r + t * t - 1.0) * (1.0 + 0.0 * r))
            .unwrap();
        for idx in 0..f.grid.num_unknowns() {
            let (i, j) = f.grid.node(idx);
            let hs = f.reduced_hessian(i, j).unwrap();
            for v in [hs.u_rr, hs.u_tt, hs.u_r_over_r] {
                assert!((v - 1.0).abs() < 1e-10, "({i},{j}): {hs:?}");
            }
            assert!(hs.u_rt.abs() < 1e-10);
        }
    }

    #[test]
    fn constant_datum_reproduces_quadratic() {
        let k = lvl(2);
        let (field, report) = solve(&|_, _| 3.0, 3, k, 1.0 / 16.0, &SolveOptions::default()).unwrap();
        assert!(report.final_residual <= 1e-8);
        for idx in 0..field.grid.num_unknowns() {
            let (i, j) = field.grid.node(idx);
            let (r, t) = field.grid.coords(i, j);
            assert!((field.at(i, j) - 0.5 * (r * r + t * t - 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn comparison_of_scaled_quadratics() {
        let k = lvl(2);
        let u = DoublyRadialField::from_fn(0.125, 3, k, |r, t| 0.5 * (r * r + t * t - 1.0)).unwrap();
        let w = DoublyRadialField::from_fn(0.125, 3, k, |r, t| 0.75 * (r * r + t * t - 1.0)).unwrap();
        assert!(comparison_pair_check(&u, &w, 0.0).unwrap().ordered);
        assert!(!comparison_pair_check(&w, &u, 0.0).unwrap().ordered);
        let eq = comparison_pair_check(&u, &u, 0.0).unwrap();
        assert!(eq.ordered && eq.max_violation == 0.0);
        let other = DoublyRadialField::from_fn(0.25, 3, k, |_, _| 0.0).unwrap();
        assert!(comparison_pair_check(&u, &other, 0.0).is_err());
    }
}
