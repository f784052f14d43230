//! Linearization of `log σ_k` at a diagonal Hessian, the auxiliary test
//! functions `φ` and `ψ` used in the second-order estimate, and the algebraic
//! inequalities that estimate relies on.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{arg, Error, Result};
use crate::symmetric::{sigma, sigma_without, ConeLevel, Spectrum};

/// First and second derivatives of `log σ_k` at a diagonal matrix with eigenvalues `λ`.
#[derive(Clone, Debug, Serialize)]
pub struct LinearizationCoeffs {
    /// `S^{i ī} = σ_{k−1}(λ|i) / σ_k`.
    pub s_ii: Vec<f64>,
    /// `S^{i ī, p p̄}`, the Hessian of `log σ_k` in the eigenvalues.
    pub s_iipp: DMatrix<f64>,
    /// `S^{i p̄, p ī} = −σ_{k−2}(λ|ip) / σ_k` off the diagonal; zero on it.
    pub s_ippi: DMatrix<f64>,
    /// `𝒮 = Σ_p S^{p p̄}`.
    pub total: f64,
    pub k: ConeLevel,
}

/// `σ_m` with a negative degree read as zero.
fn sigma_signed(values: &[f64], m: isize, skip: &[usize]) -> f64 {
    if m < 0 {
        0.0
    } else {
        sigma_without(values, m as usize, skip)
    }
}

pub fn linearize(lam: &Spectrum, k: ConeLevel) -> Result<LinearizationCoeffs> {
    let n = lam.n();
    let kk = k.get();
    if kk > n {
        return Err(arg(format!("level {kk} exceeds dimension {n}")));
    }
    let l = lam.values();
    let sk = sigma(l, kk);
    if !(sk > 0.0) {
        return Err(Error::Domain(format!("σ_{kk}(λ) = {sk} is not positive")));
    }
    let km1 = kk as isize - 1;
    let km2 = kk as isize - 2;
    let d: Vec<f64> = (0..n).map(|i| sigma_signed(l, km1, &[i])).collect();
    let s_ii: Vec<f64> = d.iter().map(|x| x / sk).collect();
    let mut s_iipp = DMatrix::zeros(n, n);
    let mut s_ippi = DMatrix::zeros(n, n);
    for i in 0..n {
        for p in 0..n {
            let cross = d[i] * d[p] / (sk * sk);
            if i == p {
                s_iipp[(i, p)] = -cross;
            } else {
                let s2 = sigma_signed(l, km2, &[i, p]) / sk;
                s_iipp[(i, p)] = s2 - cross;
                s_ippi[(i, p)] = -s2;
            }
        }
    }
    let total = s_ii.iter().sum();
    Ok(LinearizationCoeffs { s_ii, s_iipp, s_ippi, total, k })
}

impl LinearizationCoeffs {
    /// `Σ S^{iī,pp̄} x_i x_p + Σ_{i≠p} S^{ip̄,pī} |y_ip|²`, the second variation of
    /// `log σ_k` along a Hermitian direction with diagonal `x` and off-diagonal `y`.
    pub fn concavity_form(&self, x: &[f64], y: &DMatrix<Complex64>) -> Result<f64> {
        let n = self.s_ii.len();
        if x.len() != n || y.nrows() != n || y.ncols() != n {
            return Err(arg("direction does not match the spectrum dimension"));
        }
        let mut q = 0.0;
        for i in 0..n {
            for p in 0..n {
                q += self.s_iipp[(i, p)] * x[i] * x[p];
                if i != p {
                    q += self.s_ippi[(i, p)] * y[(i, p)].norm_sqr();
                }
            }
        }
        Ok(q)
    }
}

/// `|Σ S^{iī} λ_i − k|`.
pub fn trace_identity_residual(lam: &Spectrum, k: ConeLevel) -> Result<f64> {
    let c = linearize(lam, k)?;
    let s: f64 = c.s_ii.iter().zip(lam.values()).map(|(s, l)| s * l).sum();
    Ok((s - k.get() as f64).abs())
}

/// The lower bound `𝒮 ≥ c λ_1^{1/(k−1)} / f^{1/(k−1)}` with the constant actually used.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GardingLowerBound {
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    /// `|Σ_p σ_{k−1}(λ|p) − (n−k+1) σ_{k−1}(λ)|` relative to the right side.
    pub sum_identity_residual: f64,
}

pub fn garding_lower_bound_check(
    lam: &Spectrum,
    k: ConeLevel,
    f_val: f64,
    c_est: f64,
) -> Result<GardingLowerBound> {
    let kk = k.get();
    if kk < 2 {
        return Err(arg("the lower bound needs k >= 2"));
    }
    if !crate::symmetric::in_cone(lam, k) {
        return Err(Error::Domain(format!("spectrum not in Γ_{kk}")));
    }
    if !(f_val > 0.0) {
        return Err(arg(format!("f must be positive, got {f_val}")));
    }
    let n = lam.n();
    let l = lam.values();
    let coeffs = linearize(lam, k)?;
    let sum_p: f64 = (0..n).map(|p| sigma_without(l, kk - 1, &[p])).sum();
    let expected = (n - kk + 1) as f64 * sigma(l, kk - 1);
    let sum_identity_residual = (sum_p - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
    let e = 1.0 / (kk as f64 - 1.0);
    let rhs = c_est * lam.max().powf(e) / f_val.powf(e);
    Ok(GardingLowerBound { lhs: coeffs.total, rhs, constant: c_est, sum_identity_residual })
}

/// Largest `δ` admitted by the key inequality; the estimate uses `δ = 1/(2A+1) ≤ 1/7`.
pub const DELTA_MAX: f64 = 1.0 / 7.0;

/// Checks `(2δλ_1 + (1−2δ)λ_p) σ_{k−1}(λ|p) ≥ λ_1 σ_{k−1}(λ|1)` for zero-based `p`.
///
/// Fails with [`Error::Precondition`] unless `λ ∈ Γ_k`, `0 < δ ≤ 1/7`,
/// `λ_n > −δ λ_1` and `σ_{k−1}(λ|p) > δ⁻¹ σ_{k−1}(λ|1)`.
pub fn hmw_key_inequality(lam: &Spectrum, k: ConeLevel, delta: f64, p: usize) -> Result<bool> {
    let l = key_inequality_sides(lam, k, delta, p)?;
    Ok(l.0 >= l.1 - 1e-12 * l.1.abs())
}

/// Both sides of the key inequality after the precondition checks.
pub fn key_inequality_sides(
    lam: &Spectrum,
    k: ConeLevel,
    delta: f64,
    p: usize,
) -> Result<(f64, f64)> {
    let n = lam.n();
    let kk = k.get();
    if p >= n {
        return Err(arg(format!("index {p} out of range for n = {n}")));
    }
    if kk < 2 || kk > n {
        return Err(arg(format!("level {kk} outside 2..={n}")));
    }
    let pre = |msg: String| Err(Error::Precondition(msg));
    if !(delta > 0.0 && delta <= DELTA_MAX) {
        return pre(format!("δ = {delta} outside (0, 1/7]"));
    }
    if !crate::symmetric::in_cone(lam, k) {
        return pre(format!("spectrum not in Γ_{kk}"));
    }
    let l = lam.values();
    let l1 = l[0];
    if !(l[n - 1] > -delta * l1) {
        return pre(format!("λ_n = {} is not above −δλ_1 = {}", l[n - 1], -delta * l1));
    }
    let sp = sigma_without(l, kk - 1, &[p]);
    let s1 = sigma_without(l, kk - 1, &[0]);
    if !(sp > s1 / delta) {
        return pre(format!("σ_{{k−1}}(λ|p) = {sp} is not above δ⁻¹σ_{{k−1}}(λ|1) = {}", s1 / delta));
    }
    let lhs = (2.0 * delta * l1 + (1.0 - 2.0 * delta) * l[p]) * sp;
    let rhs = l1 * s1;
    Ok((lhs, rhs))
}

/// Parameters of the test functions `φ(|∇u|²)` and `ψ(u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestFunctionParams {
    /// `K = sup |∇u|² + 1`.
    pub k_grad: f64,
    /// `L = sup |u| + 1`.
    pub l_osc: f64,
    /// Curvature lower bound.
    pub c0: f64,
    /// `A = 3L(2C_0 + 1)`.
    pub a: f64,
    /// `δ = 1/(2A + 1)`.
    pub delta: f64,
}

impl TestFunctionParams {
    pub fn new(k_grad: f64, l_osc: f64, c0: f64) -> Result<Self> {
        if !(k_grad >= 1.0) || !(l_osc >= 1.0) || !(c0 >= 0.0) || !c0.is_finite() {
            return Err(arg(format!(
                "need K >= 1, L >= 1, C0 >= 0; got K = {k_grad}, L = {l_osc}, C0 = {c0}"
            )));
        }
        let a = 3.0 * l_osc * (2.0 * c0 + 1.0);
        Ok(Self { k_grad, l_osc, c0, a, delta: 1.0 / (2.0 * a + 1.0) })
    }
}

/// A value with its first two derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// `φ(t) = −½ log(1 − t/(2K))` on `[0, 2K)`.
pub fn phi_eval(t: f64, params: &TestFunctionParams) -> Result<Jet2> {
    let k = params.k_grad;
    if !(t >= 0.0 && t < 2.0 * k) {
        return Err(Error::Domain(format!("φ needs 0 <= t < 2K = {}, got {t}", 2.0 * k)));
    }
    let d1 = 0.5 / (2.0 * k - t);
    Ok(Jet2 { value: -0.5 * (1.0 - t / (2.0 * k)).ln(), d1, d2: 2.0 * d1 * d1 })
}

/// `ψ(t) = −A log(1 + t/(2L))` on `[−L, L]`.
pub fn psi_eval(t: f64, params: &TestFunctionParams) -> Result<Jet2> {
    let l = params.l_osc;
    if !(t >= -l && t <= l) {
        return Err(Error::Domain(format!("ψ needs |t| <= L = {l}, got {t}")));
    }
    let a = params.a;
    let s = 2.0 * l + t;
    Ok(Jet2 { value: -a * (1.0 + t / (2.0 * l)).ln(), d1: -a / s, d2: a / (s * s) })
}

/// Result of [`sqrt_gradient_bound`].
#[derive(Clone, Debug, Serialize)]
pub struct GradientBound {
    /// `max |∇g|² / max(g, floor)` over interior nodes with `g ≥ floor`.
    pub max_ratio: f64,
    /// Interior nodes where `g` fell below the floor and were excluded.
    pub below_floor: usize,
    pub interior_nodes: usize,
}

/// Floor for `g` in the ratio; smaller values are reported, not divided by.
pub const GRADIENT_FLOOR: f64 = 1e-14;

/// Certifies `|∇g|² ≤ C g` for `g = field^{1/(k−1)}` on a row-major grid of
/// spacing `h` with the given `shape`, using central differences at nodes not
/// on the outer layer of the grid.
pub fn sqrt_gradient_bound(field: &[f64], shape: &[usize], h: f64, k: ConeLevel) -> Result<GradientBound> {
    let kk = k.get();
    if kk < 2 {
        return Err(arg("the bound is stated for k >= 2"));
    }
    if shape.is_empty() || shape.iter().product::<usize>() != field.len() {
        return Err(arg("shape does not match field length"));
    }
    if shape.iter().any(|&s| s < 3) {
        return Err(arg("every grid axis needs at least three nodes"));
    }
    if !(h > 0.0) {
        return Err(arg("spacing must be positive"));
    }
    if let Some(v) = field.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Data(format!("field value {v} is negative or NaN")));
    }
    let e = 1.0 / (kk as f64 - 1.0);
    let g: Vec<f64> = field.iter().map(|v| v.powf(e)).collect();
    let d = shape.len();
    let mut strides = vec![1usize; d];
    for ax in (0..d - 1).rev() {
        strides[ax] = strides[ax + 1] * shape[ax + 1];
    }
    let mut out = GradientBound { max_ratio: 0.0, below_floor: 0, interior_nodes: 0 };
    let mut idx = vec![0usize; d];
    for flat in 0..g.len() {
        let mut rem = flat;
        for ax in 0..d {
            idx[ax] = rem / strides[ax];
            rem %= strides[ax];
        }
        if idx.iter().zip(shape).any(|(&i, &s)| i == 0 || i + 1 == s) {
            continue;
        }
        out.interior_nodes += 1;
        if g[flat] < GRADIENT_FLOOR {
            out.below_floor += 1;
            continue;
        }
        let grad2: f64 = strides
            .iter()
            .map(|&st| {
                let c = (g[flat + st] - g[flat - st]) / (2.0 * h);
                c * c
            })
            .sum();
        out.max_ratio = out.max_ratio.max(grad2 / g[flat]);
    }
    Ok(out)
}
