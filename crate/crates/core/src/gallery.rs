//! Degenerate right-hand sides built from the cutoff `η`, their predicted
//! regularity exponents, ellipsoidal barriers, and the volume normalization
//! on `ℙ^{n−1} × ℙ¹`.
//!
//! The model datum is `F(x) = η(|x_n| / |x′|^a) |x′|^b` with
//! `η(t) = exp(−1/(1−t²))` for `t < 1` and `0` otherwise. It depends only on
//! the radii `r = |x′|` and `t = |x_n|`, and vanishes on the cusp region
//! `t ≥ r^a` around the `x_n` axis.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Rational64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::kv::KvMap;
use crate::quadrature::TanhSinh;
use crate::symmetric::{binomial, generalized_spectrum, sigma, ConeLevel, HermitianPair};

/// `exp(−1/(1−t²))` for `t < 1`, zero for `t ≥ 1`.
///
/// Only called with `t ≥ 0` by the gallery; for `t ≤ −1` the formula also
/// returns zero since the exponent tends to `−∞`.
pub fn eta(t: f64) -> f64 {
    if t >= 1.0 {
        return 0.0;
    }
    let d = 1.0 - t * t;
    if d <= 0.0 {
        0.0
    } else {
        (-1.0 / d).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    RealBall,
    ComplexBall,
    CompactProduct,
}

impl Variant {
    pub fn geometry(self) -> Geometry {
        match self {
            Variant::RealBall | Variant::ComplexBall => Geometry::Euclidean,
            Variant::CompactProduct => Geometry::FubiniStudyProduct,
        }
    }

    pub fn is_complex(self) -> bool {
        !matches!(self, Variant::RealBall)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::RealBall => "real-ball",
            Variant::ComplexBall => "complex-ball",
            Variant::CompactProduct => "compact-product",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real-ball" => Ok(Variant::RealBall),
            "complex-ball" => Ok(Variant::ComplexBall),
            "compact-product" => Ok(Variant::CompactProduct),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected real-ball, complex-ball or compact-product)"
            ))),
        }
    }
}

/// Background form against which the datum is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    /// The flat form `β` of the ball.
    Euclidean,
    /// `ω = ω_FS′ + ω_FS` on the affine chart of `ℙ^{n−1} × ℙ¹`.
    FubiniStudyProduct,
}

/// Parameters `(n, k, a, b)` of one member of the example family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExampleSpec {
    pub n: usize,
    pub k: ConeLevel,
    pub a: f64,
    pub b: f64,
    pub variant: Variant,
}

impl ExampleSpec {
    pub fn new(n: usize, k: usize, a: f64, b: f64, variant: Variant) -> Result<Self> {
        if n < 2 {
            return Err(arg(format!("dimension n = {n} must be at least 2")));
        }
        if k < 2 || k > n {
            return Err(arg(format!("k = {k} must satisfy 2 <= k <= n = {n}")));
        }
        if !(a > 1.0) || !a.is_finite() {
            return Err(arg(format!("a = {a} must be a finite number above 1")));
        }
        if !b.is_finite() {
            return Err(arg(format!("b = {b} must be finite")));
        }
        Ok(Self { n, k: ConeLevel::new(k)?, a, b, variant })
    }

    pub fn real(n: usize, k: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(n, k, a, b, Variant::RealBall)
    }

    pub fn geometry(&self) -> Geometry {
        self.variant.geometry()
    }

    fn kf(&self) -> f64 {
        self.k.get() as f64
    }

    /// `2(k−1)(a−1)`: below it (and above zero) the solution is not `C^{1,1}` near the origin.
    pub fn irregular_threshold(&self) -> f64 {
        2.0 * (self.kf() - 1.0) * (self.a - 1.0)
    }

    pub fn is_irregular(&self) -> bool {
        self.b > 0.0 && self.b < self.irregular_threshold()
    }

    /// `b < 0`: the datum is unbounded near the axis and only integrable.
    pub fn is_integrable_singular(&self) -> bool {
        self.b < 0.0
    }

    /// `(2a + 2k − 2 + b) / (ka)`.
    pub fn theta(&self) -> f64 {
        (2.0 * self.a + 2.0 * self.kf() - 2.0 + self.b) / (self.kf() * self.a)
    }

    /// `1/(k−1) + 1/((a−1)(k−1))`.
    pub fn gamma_c11(&self) -> f64 {
        1.0 / (self.kf() - 1.0) + 1.0 / ((self.a - 1.0) * (self.kf() - 1.0))
    }

    /// `F` as a function of the radii `r = |x′|`, `t = |x_n|`; zero on the axis `r = 0`.
    pub fn rhs_radial(&self, r: f64, t: f64) -> f64 {
        let r = r.abs();
        let t = t.abs();
        if r == 0.0 {
            return 0.0;
        }
        let ra = r.powf(self.a);
        if t >= ra {
            return 0.0;
        }
        eta(t / ra) * r.powf(self.b)
    }

    /// The complex datum on the affine chart from its radii; `a_norm` is the normalization `A`.
    ///
    /// The compact-product variant carries the decay factor `exp(−|z|²)`; the ball
    /// variant uses the flat datum `A·F`.
    pub fn rhs_complex_radial(&self, rho_prime: f64, rho_n: f64, a_norm: f64) -> f64 {
        let f = self.rhs_radial(rho_prime, rho_n);
        match self.variant {
            Variant::CompactProduct if f > 0.0 => {
                a_norm * (-(rho_prime * rho_prime + rho_n * rho_n)).exp() * f
            }
            _ => a_norm * f,
        }
    }

    /// Radius bounding `{f = 0, |z_n| ≤ r}` in `|z′|` within the support region: `r^{1/a}`.
    pub fn zero_set_radius(&self, r: f64) -> f64 {
        r.max(0.0).powf(1.0 / self.a)
    }
}

/// `F(x) = η(|x_n| / |x′|^a) |x′|^b` for `x ∈ ℝ^n`, the last coordinate being `x_n`.
pub fn rhs_real(x: &[f64], spec: &ExampleSpec) -> f64 {
    let (last, head) = x.split_last().expect("point must have at least one coordinate");
    let r = head.iter().map(|v| v * v).sum::<f64>().sqrt();
    spec.rhs_radial(r, *last)
}

/// `f(z) = A exp(−|z|²) η(|z_n| / |z′|^a) |z′|^b` for `z ∈ ℂ^n` (without the
/// exponential factor for the complex-ball variant).
pub fn rhs_complex(z: &[Complex64], spec: &ExampleSpec, a_norm: f64) -> f64 {
    let (last, head) = z.split_last().expect("point must have at least one coordinate");
    let rho = head.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
    spec.rhs_complex_radial(rho, last.norm(), a_norm)
}

/// Regularity regimes of the example family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `0 < b < 2(k−1)(a−1)`: no `C^{1,1}` bound near the origin.
    NotC11,
    /// `b ≤ 0`: the datum is only in `L^p`.
    LpOnly,
    /// `b = 2`: Hölder datum.
    HolderRhs,
    /// `k ≥ 3`, `b = (k−2)(a−2) − 3`: a power of the datum is Lipschitz.
    LipschitzPower,
    /// `b = 2(k−1)(a−2)`: a power of the datum is `C^{1,1}`.
    C11Power,
    /// `b ≥ 2(k−1)(a−1)`: the growth obstruction no longer applies.
    Unobstructed,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// Derived exponents for one spec.
#[derive(Clone, Debug, Serialize)]
pub struct RegularityPrediction {
    pub theta: f64,
    pub gamma_c11: f64,
    pub regime: Regime,
    /// The exponent `p` (regime `lp-only`) or `γ` (power regimes) the closed form refers to.
    pub case_parameter: Option<f64>,
    /// Closed-form `θ` for the regime when one is stated separately.
    pub theta_closed_form: Option<f64>,
    pub notes: String,
}

/// The four parameter choices of the regime table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeCase {
    /// `b = 2 − 2a/p`.
    Lp,
    /// `b = 2`.
    Holder,
    /// `b = (k−2)(a−2) − 3`, `k ≥ 3`.
    Lipschitz,
    /// `b = 2(k−1)(a−2)`.
    C11,
}

const CASE_TOL: f64 = 1e-12;

fn close(x: f64, y: f64) -> bool {
    (x - y).abs() <= CASE_TOL * (1.0 + x.abs().max(y.abs()))
}

/// Fills in `θ`, the `C^{1,1}` threshold for powers of `F`, and the regime.
///
/// `p_or_gamma` is read as `p` when `b ≤ 0` (checked against `b = 2 − 2a/p`)
/// and otherwise as a power `γ` compared with the threshold.
pub fn predict(spec: &ExampleSpec, p_or_gamma: Option<f64>) -> Result<RegularityPrediction> {
    let (a, b, k) = (spec.a, spec.b, spec.kf());
    let theta = spec.theta();
    let gamma_c11 = spec.gamma_c11();
    let mut notes = Vec::new();
    let (regime, case_parameter, theta_closed_form);
    if b <= 0.0 {
        let p_from_b = 2.0 * a / (2.0 - b);
        let p = match p_or_gamma {
            Some(p) if !(p > 1.0) => return Err(arg(format!("p = {p} must exceed 1"))),
            Some(p) if !close(b, 2.0 - 2.0 * a / p) => {
                return Err(arg(format!("b = {b} does not equal 2 − 2a/p = {} for p = {p}", 2.0 - 2.0 * a / p)))
            }
            Some(p) => p,
            None => p_from_b,
        };
        regime = Regime::LpOnly;
        case_parameter = Some(p);
        theta_closed_form = Some(2.0 / k * (1.0 - 1.0 / p) + 2.0 / a);
        notes.push(format!("datum in L^p with p = {p}; Hölder exponent of the solution at most (2/k)(1 − 1/p)"));
    } else if close(b, 2.0) {
        regime = Regime::HolderRhs;
        case_parameter = None;
        theta_closed_form = Some(2.0 / k + 2.0 / a);
        notes.push("Hölder datum; θ = 2/k + 2/a".into());
    } else if spec.k.get() >= 3 && close(b, (k - 2.0) * (a - 2.0) - 3.0) {
        regime = Regime::LipschitzPower;
        let g = a / ((k - 2.0) * (a - 1.0) - 3.0);
        case_parameter = Some(g);
        theta_closed_form = Some(1.0 - 1.0 / (a * k));
        notes.push(format!("F^γ Lipschitz for γ = {g}"));
    } else if close(b, 2.0 * (k - 1.0) * (a - 2.0)) {
        regime = Regime::C11Power;
        let g = (1.0 + 2.0 / (a - 2.0)) / (k - 1.0);
        case_parameter = Some(g);
        theta_closed_form = Some(2.0 - 2.0 * (1.0 / a - 1.0 / (k * a)));
        notes.push(format!("F^γ in C^{{1,1}} for γ = {g}"));
    } else if b < spec.irregular_threshold() {
        regime = Regime::NotC11;
        case_parameter = None;
        theta_closed_form = None;
    } else {
        regime = Regime::Unobstructed;
        case_parameter = None;
        theta_closed_form = None;
        notes.push(format!("b >= 2(k−1)(a−1) = {}: θ >= 2, no growth obstruction", spec.irregular_threshold()));
    }
    if spec.is_irregular() {
        notes.push(format!("irregular: 0 < b < {}", spec.irregular_threshold()));
    }
    if b > 0.0 {
        if let Some(g) = p_or_gamma {
            if !(g > 0.0) {
                return Err(arg(format!("γ = {g} must be positive")));
            }
            let exact = power_c11_threshold(spec);
            notes.push(format!(
                "γ = {g}: {} the stated threshold {gamma_c11}; F^γ has bounded second derivatives iff γ >= 2a/b = {exact}",
                if g > gamma_c11 { "above" } else { "not above" }
            ));
        }
    }
    Ok(RegularityPrediction { theta, gamma_c11, regime, case_parameter, theta_closed_form, notes: notes.join("; ") })
}

/// Smallest `γ` for which `F^γ` has bounded second derivatives near the cusp: `2a/b` for `b > 0`.
///
/// Along the axis `r = 0`, `∂_t² F^γ` scales like `r^{γb − 2a}`.
pub fn power_c11_threshold(spec: &ExampleSpec) -> f64 {
    if spec.b > 0.0 {
        2.0 * spec.a / spec.b
    } else {
        f64::INFINITY
    }
}

/// `b` for the chosen regime case; `p` is required for [`RegimeCase::Lp`].
pub fn case_b(k: usize, a: f64, case: RegimeCase, p: Option<f64>) -> Result<f64> {
    let kf = k as f64;
    match case {
        RegimeCase::Lp => {
            let p = p.ok_or_else(|| arg("the L^p case needs p"))?;
            if !(p > 1.0) {
                return Err(arg(format!("p = {p} must exceed 1")));
            }
            Ok(2.0 - 2.0 * a / p)
        }
        RegimeCase::Holder => Ok(2.0),
        RegimeCase::Lipschitz => {
            if k < 3 {
                return Err(arg("the Lipschitz case needs k >= 3"));
            }
            Ok((kf - 2.0) * (a - 2.0) - 3.0)
        }
        RegimeCase::C11 => Ok(2.0 * (kf - 1.0) * (a - 2.0)),
    }
}

/// Builds the spec for one case of the regime table and predicts it.
pub fn predict_case(
    n: usize,
    k: usize,
    a: f64,
    case: RegimeCase,
    p: Option<f64>,
    variant: Variant,
) -> Result<(ExampleSpec, RegularityPrediction)> {
    let b = case_b(k, a, case, p)?;
    let spec = ExampleSpec::new(n, k, a, b, variant)?;
    let pred = predict(&spec, if case == RegimeCase::Lp { p } else { None })?;
    Ok((spec, pred))
}

/// `L^p` integrability of the complex datum near the axis, measured directly:
/// `∫ |z′|^{bp} 1{|z_n| < |z′|^a}` converges iff `bp + 2a + 2(n−1) > 0`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LpAdvisory {
    pub integrable: bool,
    /// The alternative sufficient bound `b > 2a/p − 2(n−1)/p` quoted alongside the case table.
    pub quoted_bound_satisfied: bool,
}

pub fn lp_advisory(spec: &ExampleSpec, p: f64) -> LpAdvisory {
    let nm1 = spec.n as f64 - 1.0;
    LpAdvisory {
        integrable: spec.b * p + 2.0 * spec.a + 2.0 * nm1 > 0.0,
        quoted_bound_satisfied: spec.b > 2.0 * spec.a / p - 2.0 * nm1 / p,
    }
}

/// Exact rational forms of the exponent formulas.
pub mod exact {
    use num_rational::Rational64;

    fn r(n: i64) -> Rational64 {
        Rational64::from_integer(n)
    }

    pub fn theta(a: Rational64, b: Rational64, k: i64) -> Rational64 {
        (r(2) * a + r(2 * k - 2) + b) / (r(k) * a)
    }

    pub fn gamma_c11(a: Rational64, k: i64) -> Rational64 {
        r(1) / r(k - 1) + r(1) / ((a - r(1)) * r(k - 1))
    }

    pub fn b_lp(a: Rational64, p: Rational64) -> Rational64 {
        r(2) - r(2) * a / p
    }

    pub fn theta_lp(a: Rational64, p: Rational64, k: i64) -> Rational64 {
        r(2) / r(k) * (r(1) - r(1) / p) + r(2) / a
    }

    pub fn theta_holder(a: Rational64, k: i64) -> Rational64 {
        r(2) / r(k) + r(2) / a
    }

    pub fn b_lipschitz(a: Rational64, k: i64) -> Rational64 {
        r(k - 2) * (a - r(2)) - r(3)
    }

    pub fn gamma_lipschitz(a: Rational64, k: i64) -> Rational64 {
        a / (r(k - 2) * (a - r(1)) - r(3))
    }

    pub fn theta_lipschitz(a: Rational64, k: i64) -> Rational64 {
        r(1) - r(1) / (a * r(k))
    }

    pub fn b_c11(a: Rational64, k: i64) -> Rational64 {
        r(2 * (k - 1)) * (a - r(2))
    }

    pub fn gamma_c11_case(a: Rational64, k: i64) -> Rational64 {
        (r(1) + r(2) / (a - r(2))) / r(k - 1)
    }

    pub fn theta_c11(a: Rational64, k: i64) -> Rational64 {
        r(2) - r(2) * (r(1) / a - r(1) / (r(k) * a))
    }
}

/// `(2a + 2(k−1) + b) / (ka)` in exact arithmetic, for integer-valued inputs.
pub fn theta_rational(a: i64, b: i64, k: i64) -> Rational64 {
    exact::theta(Rational64::from_integer(a), Rational64::from_integer(b), k)
}

/// Ellipsoidal barrier supported in the box `P = {|x′| < ε^{1/a}, |x_n| < ε}`.
///
/// Real variant: `v = ((x_1 − ε^{1/a}/2)/(ε^{1/a}/4))² + Σ_{j=2}^{n−1} (x_j/(ε^{1/a}/2))² + (x_n/(ε/4^{a+1}))² − 1`
/// with `E = {v < 0}`. Complex variants: the same center, all `z′` semi-axes
/// `ε^{1/a}/4`, no `−1`, and `E = {v < 1}`; points are given as
/// `(Re z_1, Im z_1, …, Re z_n, Im z_n)`.
#[derive(Clone, Debug, Serialize)]
pub struct BarrierSpec {
    pub spec: ExampleSpec,
    pub epsilon: f64,
    /// Center of `E` in real coordinates.
    pub center: Vec<f64>,
    /// Semi-axes of `E` in real coordinates.
    pub semi_axes: Vec<f64>,
    /// `v` takes this value on `∂E`.
    pub level: f64,
}

pub fn barrier(spec: &ExampleSpec, epsilon: f64) -> Result<BarrierSpec> {
    let a = spec.a;
    let s = epsilon * epsilon + epsilon.powf(2.0 / a);
    let ok = match spec.variant {
        Variant::RealBall => s < 1.0,
        _ => s <= 1.0,
    };
    if !(epsilon > 0.0) || !ok {
        return Err(arg(format!("ε = {epsilon} violates ε² + ε^(2/a) < 1")));
    }
    let root = epsilon.powf(1.0 / a);
    let tail = epsilon / 4f64.powf(a + 1.0);
    let n = spec.n;
    let (center, semi_axes, level) = if spec.variant == Variant::RealBall {
        let mut c = vec![0.0; n];
        c[0] = root / 2.0;
        let mut ax = vec![root / 2.0; n];
        ax[0] = root / 4.0;
        ax[n - 1] = tail;
        (c, ax, 0.0)
    } else {
        let mut c = vec![0.0; 2 * n];
        c[0] = root / 2.0;
        let mut ax = vec![root / 4.0; 2 * n];
        ax[2 * n - 2] = tail;
        ax[2 * n - 1] = tail;
        (c, ax, 1.0)
    };
    Ok(BarrierSpec { spec: *spec, epsilon, center, semi_axes, level })
}

/// Outcome of sampling a barrier's geometry.
#[derive(Clone, Debug, Serialize)]
pub struct BarrierCheck {
    pub epsilon: f64,
    pub samples: usize,
    /// `max |x′| / ε^{1/a}` over sampled points of `∂E`.
    pub max_xprime_ratio: f64,
    /// `max |x_n| / ε` over sampled points of `∂E`.
    pub max_xn_ratio: f64,
    pub contained: bool,
    /// Smallest sampled value of the datum (with `A = 1`) inside `E`.
    pub inf_f_sampled: f64,
    pub inf_f_bound: f64,
}

impl BarrierSpec {
    fn real_dim(&self) -> usize {
        self.center.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let q: f64 = x
            .iter()
            .zip(&self.center)
            .zip(&self.semi_axes)
            .map(|((xi, c), s)| ((xi - c) / s).powi(2))
            .sum();
        if self.spec.variant == Variant::RealBall {
            q - 1.0
        } else {
            q
        }
    }

    pub fn in_e(&self, x: &[f64]) -> bool {
        self.value(x) < self.level
    }

    /// `(|x′|, |x_n|)` of a point given in real coordinates.
    pub fn radii(&self, x: &[f64]) -> (f64, f64) {
        let split = if self.spec.variant == Variant::RealBall { x.len() - 1 } else { x.len() - 2 };
        let norm = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>().sqrt();
        (norm(&x[..split]), norm(&x[split..]))
    }

    pub fn in_p(&self, x: &[f64]) -> bool {
        let (rp, rn) = self.radii(x);
        rp < self.epsilon.powf(1.0 / self.spec.a) && rn < self.epsilon
    }

    /// Diagonal of the real Hessian (real variant) or complex Hessian `v_{j k̄}` (complex variants).
    pub fn hessian_diag(&self) -> Vec<f64> {
        if self.spec.variant == Variant::RealBall {
            self.semi_axes.iter().map(|s| 2.0 / (s * s)).collect()
        } else {
            // ∂∂̄ (|z|²/s²) = 1/s² per complex coordinate
            self.semi_axes.chunks(2).map(|c| 1.0 / (c[0] * c[0])).collect()
        }
    }

    /// Exponent `(2a + 2(k−1) + b)/(ka)` of the barrier scaling.
    pub fn exponent(&self) -> f64 {
        self.spec.theta()
    }

    /// `sup_P S_k(D²v)` (real), or `sup_P` of the coefficient of `ω^n` in
    /// `(i∂∂̄v)^k ∧ ω^{n−k}` (compact product), or of `β^n` (complex ball).
    pub fn sup_sk(&self) -> Result<f64> {
        let k = self.spec.k.get();
        let d = self.hessian_diag();
        match self.spec.geometry() {
            Geometry::Euclidean if self.spec.variant == Variant::RealBall => Ok(sigma(&d, k)),
            Geometry::Euclidean => Ok(sigma(&d, k) / binomial(self.spec.n, k)),
            Geometry::FubiniStudyProduct => {
                let n = self.spec.n;
                let rmax = self.epsilon.powf(1.0 / self.spec.a);
                let hess = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)).map(Complex64::from);
                let steps = 16;
                let mut best = 0.0f64;
                for i in 0..=steps {
                    for j in 0..=steps {
                        let rp = rmax * i as f64 / steps as f64;
                        let rn = self.epsilon * j as f64 / steps as f64;
                        let g = fubini_study_metric(n, rp, rn);
                        let lam = generalized_spectrum(&HermitianPair::new(hess.clone(), g)?)?;
                        best = best.max(sigma(lam.values(), k) / binomial(n, k));
                    }
                }
                Ok(best)
            }
        }
    }

    /// `sup_P S_k(D²v) · ε^{2 + 2(k−1)/a}`, the quantity bounded by `c₁`.
    pub fn scaled_sup_sk(&self) -> Result<f64> {
        let k = self.spec.kf();
        Ok(self.sup_sk()? * self.epsilon.powf(2.0 + 2.0 * (k - 1.0) / self.spec.a))
    }

    /// Lower bound for the datum on `E`: `η(1/4) 4^{−b} ε^{b/a}`, times `e^{−2}` for the compact product.
    pub fn inf_f_bound(&self) -> f64 {
        let base = eta(0.25) * 4f64.powf(-self.spec.b) * self.epsilon.powf(self.spec.b / self.spec.a);
        if self.spec.variant == Variant::CompactProduct {
            base * (-2.0f64).exp()
        } else {
            base
        }
    }

    fn datum(&self, x: &[f64]) -> f64 {
        let (rp, rn) = self.radii(x);
        if self.spec.variant == Variant::RealBall {
            self.spec.rhs_radial(rp, rn)
        } else {
            self.spec.rhs_complex_radial(rp, rn, 1.0)
        }
    }

    /// Samples `∂E` for the containment `E ⊂ P` and the interior of `E` for the datum bound.
    pub fn check<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> BarrierCheck {
        let dim = self.real_dim();
        let root = self.epsilon.powf(1.0 / self.spec.a);
        let mut out = BarrierCheck {
            epsilon: self.epsilon,
            samples,
            max_xprime_ratio: 0.0,
            max_xn_ratio: 0.0,
            contained: true,
            inf_f_sampled: f64::INFINITY,
            inf_f_bound: self.inf_f_bound(),
        };
        let mut point = vec![0.0; dim];
        for _ in 0..samples {
            let dir = unit_vector(dim, rng);
            for i in 0..dim {
                point[i] = self.center[i] + self.semi_axes[i] * dir[i];
            }
            let (rp, rn) = self.radii(&point);
            out.max_xprime_ratio = out.max_xprime_ratio.max(rp / root);
            out.max_xn_ratio = out.max_xn_ratio.max(rn / self.epsilon);
            out.contained &= self.in_p(&point);

            let frac = rng.random::<f64>().powf(1.0 / dim as f64);
            for i in 0..dim {
                point[i] = self.center[i] + self.semi_axes[i] * frac * dir[i];
            }
            if self.in_e(&point) {
                out.inf_f_sampled = out.inf_f_sampled.min(self.datum(&point));
            }
        }
        out
    }
}

/// A uniformly distributed unit vector.
fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `g_{j k̄}` of `ω_FS′ + ω_FS` at `z′ = (ρ′, 0, …, 0)`, `z_n = ρ_n`, with
/// `ω_FS = i∂∂̄ ½ log(1 + |z|²)` on each factor.
pub fn fubini_study_metric(n: usize, rho_prime: f64, rho_n: f64) -> DMatrix<Complex64> {
    let q = 1.0 + rho_prime * rho_prime;
    let mut g = DMatrix::<f64>::zeros(n, n);
    for j in 0..n - 1 {
        g[(j, j)] = 0.5 / q;
    }
    g[(0, 0)] = 0.5 / (q * q);
    let qn = 1.0 + rho_n * rho_n;
    g[(n - 1, n - 1)] = 0.5 / (qn * qn);
    g.map(Complex64::from)
}

/// Measured `c₁` across a list of `ε`: the scaled suprema and their spread.
#[derive(Clone, Debug, Serialize)]
pub struct C1Measurement {
    pub epsilons: Vec<f64>,
    pub scaled: Vec<f64>,
    /// Value at the reference (largest) `ε`.
    pub c1: f64,
    /// `max/min − 1` over the scaled values.
    pub spread: f64,
}

pub fn measure_c1(spec: &ExampleSpec, epsilons: &[f64]) -> Result<C1Measurement> {
    if epsilons.is_empty() {
        return Err(arg("need at least one ε"));
    }
    let scaled = epsilons
        .iter()
        .map(|&e| barrier(spec, e)?.scaled_sup_sk())
        .collect::<Result<Vec<f64>>>()?;
    let reference = epsilons
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .expect("nonempty");
    let max = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let min = scaled.iter().cloned().fold(f64::MAX, f64::min);
    Ok(C1Measurement { epsilons: epsilons.to_vec(), c1: scaled[reference], spread: max / min - 1.0, scaled })
}

/// `c₂ = (η(1/4) 4^{−b} / c₁)^{1/k}`, so that `S_k(D²(c₂ ε^θ v)) ≤ inf_E F`.
pub fn barrier_c2(spec: &ExampleSpec, c1: f64) -> f64 {
    (eta(0.25) * 4f64.powf(-spec.b) / c1).powf(1.0 / spec.kf())
}

/// Maxima of centered second-difference quotients before and after one refinement.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessScan {
    pub h: f64,
    pub max_second_difference: f64,
    pub max_second_difference_refined: f64,
    /// `refined / coarse`; near 1 when bounded, about `2^s` for growth `h^{−s}`.
    pub ratio: f64,
    /// Radius of the axis cylinder left out for singular data.
    pub exclusion_radius: Option<f64>,
}

/// Max over the disk `r² + t² ≤ 1` (extended evenly across both axes) of
/// `|Δ²_e g|/|e|²` along the four directions `e ∈ {(h,0), (0,h), (h,h), (h,−h)}`.
/// Stencils reaching `|r| < exclude` are skipped.
pub fn second_difference_max<G: Fn(f64, f64) -> f64>(g: G, h: f64, exclude: f64) -> f64 {
    let n = (1.0 / h).round() as i64;
    let side = (n + 2) as usize;
    let mut vals = vec![0.0; side * side];
    for i in 0..side {
        for j in 0..side {
            vals[i * side + j] = g(i as f64 * h, j as f64 * h);
        }
    }
    let at = |i: i64, j: i64| vals[i.unsigned_abs() as usize * side + j.unsigned_abs() as usize];
    let dirs = [(1i64, 0i64, 1.0), (0, 1, 1.0), (1, 1, 2.0), (1, -1, 2.0)];
    let mut best = 0.0f64;
    for i in 0..=n {
        for j in 0..=n {
            if (i + 1) * (i + 1) + (j + 1) * (j + 1) > n * n {
                continue;
            }
            let c = at(i, j);
            for &(di, dj, len2) in &dirs {
                let nearest = (i - di).abs().min(i + di).min(i);
                if exclude > 0.0 && (nearest as f64) * h < exclude {
                    continue;
                }
                let d2 = at(i + di, j + dj) - 2.0 * c + at(i - di, j - dj);
                best = best.max(d2.abs() / (len2 * h * h));
            }
        }
    }
    best
}

/// Second-difference scan of `F^γ` at spacing `h` and `h/2`.
pub fn power_smoothness_scan(spec: &ExampleSpec, gamma: f64, h: f64) -> Result<SmoothnessScan> {
    if !(gamma > 0.0) {
        return Err(arg(format!("γ = {gamma} must be positive")));
    }
    if !(h > 0.0 && h <= 0.25) {
        return Err(arg(format!("spacing h = {h} must lie in (0, 1/4]")));
    }
    let g = |r: f64, t: f64| spec.rhs_radial(r, t).powf(gamma);
    let exclusion_radius = spec.is_integrable_singular().then_some(h);
    let coarse = second_difference_max(g, h, exclusion_radius.unwrap_or(0.0));
    let fine = second_difference_max(g, h / 2.0, exclusion_radius.unwrap_or(0.0));
    let ratio = if coarse > 0.0 { fine / coarse } else if fine > 0.0 { f64::INFINITY } else { 1.0 };
    Ok(SmoothnessScan { h, max_second_difference: coarse, max_second_difference_refined: fine, ratio, exclusion_radius })
}

/// `|S^{d−1}|`, the area of the unit sphere in `ℝ^d`.
fn sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    // |S^{d−1}| = 2 π^{d/2} / Γ(d/2), evaluated for even and odd d
    let half = d as f64 / 2.0;
    let gamma_half = if d % 2 == 0 {
        (1..d / 2).map(|j| j as f64).product::<f64>()
    } else {
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x < half - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    };
    2.0 * PI.powf(half) / gamma_half
}

/// `∫ ω^n = n π^n` over `ℙ^{n−1} × ℙ¹`.
pub fn fubini_study_total_volume(n: usize) -> f64 {
    n as f64 * std::f64::consts::PI.powi(n as i32)
}

/// `ω^n = n! (1+|z′|²)^{−n} (1+|z_n|²)^{−2} dLeb` on the affine chart.
pub fn fubini_study_density(n: usize, rho_prime: f64, rho_n: f64) -> f64 {
    let nf: f64 = (1..=n).map(|j| j as f64).product();
    nf / (1.0 + rho_prime * rho_prime).powi(n as i32) / (1.0 + rho_n * rho_n).powi(2)
}

/// Result of the normalization quadrature.
#[derive(Clone, Debug, Serialize)]
pub struct Normalization {
    /// `A` with `∫ f ω^n = ∫ ω^n`.
    pub a_norm: f64,
    /// `∫ ω^n` from the same quadrature.
    pub total_volume: f64,
    /// `∫ f ω^n` for `A = 1`.
    pub raw_integral: f64,
    pub level: u32,
    /// Relative change of `A` between `level` and `level + 1`.
    pub richardson_change: f64,
}

/// Upper bound on the quadrature level accepted by [`normalization_constant`].
pub const MAX_QUAD_LEVEL: u32 = 10;

/// Integrals over the chart in the radii `(ρ′, ρ_n)`: the outer radius is
/// mapped by `ρ′ = tan(πx/2)`, the inner one by `ρ_n = s ρ′^a` on the cutoff
/// support `s < 1`.
fn chart_integrals(spec: &ExampleSpec, level: u32) -> (f64, f64) {
    use std::f64::consts::{FRAC_PI_2, PI};
    let q = TanhSinh::new(level);
    let n = spec.n;
    let nfact: f64 = (1..=n).map(|j| j as f64).product();
    let shell = nfact * sphere_area(2 * n - 2) * 2.0 * PI;
    let (a, b) = (spec.a, spec.b);
    let tan_of = |x: f64, xc: f64| {
        if x < 0.5 {
            (FRAC_PI_2 * x).tan()
        } else {
            1.0 / (FRAC_PI_2 * xc).tan()
        }
    };
    let raw = q.integrate(|x, xc| {
        let rp = tan_of(x, xc);
        let jac = FRAC_PI_2 * (1.0 + rp * rp);
        let ra = rp.powf(a);
        if !rp.is_finite() || rp == 0.0 {
            return 0.0;
        }
        let decay = (-rp * rp).exp();
        if decay == 0.0 {
            return 0.0;
        }
        let inner = q.integrate(|s, _| {
            let rn = s * ra;
            eta(s) * (-rn * rn).exp() / (1.0 + rn * rn).powi(2) * s
        });
        let outer = rp.powi(2 * n as i32 - 3) / (1.0 + rp * rp).powi(n as i32) * decay * rp.powf(b) * ra * ra;
        shell * outer * inner * jac
    });
    let inner_vol = q.integrate(|x, xc| {
        let rn = tan_of(x, xc);
        if !rn.is_finite() {
            return 0.0;
        }
        FRAC_PI_2 * (1.0 + rn * rn) * rn / (1.0 + rn * rn).powi(2)
    });
    let outer_vol = q.integrate(|x, xc| {
        let rp = tan_of(x, xc);
        if !rp.is_finite() {
            return 0.0;
        }
        FRAC_PI_2 * (1.0 + rp * rp) * rp.powi(2 * n as i32 - 3) / (1.0 + rp * rp).powi(n as i32)
    });
    (raw, shell * inner_vol * outer_vol)
}

pub fn normalization_constant(spec: &ExampleSpec, quad_level: u32) -> Result<Normalization> {
    if spec.variant != Variant::CompactProduct {
        return Err(arg("normalization applies to the compact-product variant"));
    }
    if quad_level == 0 || quad_level >= MAX_QUAD_LEVEL {
        return Err(arg(format!("quadrature level must lie in 1..{MAX_QUAD_LEVEL}")));
    }
    let (raw, vol) = chart_integrals(spec, quad_level);
    let (raw_next, vol_next) = chart_integrals(spec, quad_level + 1);
    if !(raw > 0.0 && raw.is_finite() && raw_next > 0.0) {
        return Err(Error::Numerical(format!("datum integral {raw} is not positive and finite")));
    }
    let a_norm = vol / raw;
    let a_next = vol_next / raw_next;
    let change = (a_next - a_norm).abs() / a_next.abs();
    if !(change < 1e-6) {
        return Err(Error::Numerical(format!(
            "quadrature not converged at level {quad_level}: relative change {change:e}"
        )));
    }
    Ok(Normalization { a_norm: a_next, total_volume: vol_next, raw_integral: raw_next, level: quad_level, richardson_change: change })
}

/// Monte-Carlo estimate of `∫ f ω^n / ∫ ω^n` with its standard error, sampling the
/// normalized volume measure exactly in the radii.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

pub fn normalized_integral_monte_carlo<R: Rng + ?Sized>(
    spec: &ExampleSpec,
    a_norm: f64,
    samples: usize,
    rng: &mut R,
) -> MonteCarloEstimate {
    let nm1 = spec.n as f64 - 1.0;
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..samples {
        // ρ_n has density ∝ ρ(1+ρ²)^{−2}; w = ρ′²/(1+ρ′²) has density ∝ w^{n−2}
        let u: f64 = rng.random();
        let rho_n = (u / (1.0 - u)).sqrt();
        let w = rng.random::<f64>().powf(1.0 / nm1);
        let rho_p = (w / (1.0 - w)).sqrt();
        let f = spec.rhs_complex_radial(rho_p, rho_n, a_norm);
        sum += f;
        sum2 += f * f;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = (sum2 / m - mean * mean).max(0.0) * m / (m - 1.0).max(1.0);
    MonteCarloEstimate { mean, std_error: (var / m).sqrt(), samples }
}

/// A gallery spec plus the optional `γ` and `p`, read from flat `key = value` text
/// with keys `n, k, a, b, variant, gamma, p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GalleryConfig {
    pub spec: ExampleSpec,
    pub gamma: Option<f64>,
    pub p: Option<f64>,
}

impl GalleryConfig {
    pub fn from_kv(kv: &mut KvMap) -> Result<Self> {
        let n = kv.require("n")?;
        let k = kv.require("k")?;
        let a = kv.require("a")?;
        let variant = kv.take_parsed::<Variant>("variant")?.unwrap_or(Variant::RealBall);
        let gamma = kv.take_parsed("gamma")?;
        let p = kv.take_parsed("p")?;
        let b = match kv.take_parsed("b")? {
            Some(b) => b,
            None => case_b(k, a, RegimeCase::Lp, p).map_err(|_| Error::Config("missing key `b` (or `p`)".into()))?,
        };
        let spec = ExampleSpec::new(n, k, a, b, variant).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { spec, gamma, p })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let cfg = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.insert("n", self.spec.n);
        kv.insert("k", self.spec.k.get());
        kv.insert("a", self.spec.a);
        kv.insert("b", self.spec.b);
        kv.insert("variant", self.spec.variant);
        if let Some(g) = self.gamma {
            kv.insert("gamma", g);
        }
        if let Some(p) = self.p {
            kv.insert("p", p);
        }
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eta_values() {
        assert_eq!(eta(1.0), 0.0);
        assert_eq!(eta(3.0), 0.0);
        assert!((eta(0.0) - (-1.0f64).exp()).abs() < 1e-16);
        assert!((eta(0.25) - (-16.0f64 / 15.0).exp()).abs() < 1e-16);
        assert!((eta(0.25) - 0.344154).abs() < 1e-6);
    }

    #[test]
    fn rhs_real_values() {
        let s = ExampleSpec::real(3, 2, 3.0, 2.0).unwrap();
        assert_eq!(rhs_real(&[0.5, 0.0, 0.125], &s), 0.0);
        let v = rhs_real(&[0.3, 0.4, 0.0], &s);
        assert!((v - (-1.0f64).exp() * 0.25).abs() < 1e-15);
        assert_eq!(rhs_real(&[0.0, 0.0, 0.0], &s), 0.0);
        assert_eq!(rhs_real(&[0.0, 0.0, 0.3], &s), 0.0);
    }

    #[test]
    fn validation() {
        assert!(ExampleSpec::real(3, 1, 3.0, 2.0).is_err());
        assert!(ExampleSpec::real(3, 4, 3.0, 2.0).is_err());
        assert!(ExampleSpec::real(3, 2, 1.0, 2.0).is_err());
        assert!(ExampleSpec::real(1, 2, 3.0, 2.0).is_err());
    }

    #[test]
    fn regimes_and_closed_forms() {
        let p = predict(&ExampleSpec::real(3, 2, 4.0, 4.0).unwrap(), None).unwrap();
        assert_eq!(p.regime, Regime::C11Power);
        assert!((p.theta - 1.75).abs() < 1e-15);
        assert!((p.theta_closed_form.unwrap() - 1.75).abs() < 1e-15);

        let (spec, p) = predict_case(3, 2, 4.0, RegimeCase::Lp, Some(2.0), Variant::CompactProduct).unwrap();
        assert_eq!(spec.b, -2.0);
        assert_eq!(p.regime, Regime::LpOnly);
        assert!((p.theta - 1.0).abs() < 1e-15);

        assert!(predict_case(3, 2, 4.0, RegimeCase::Lipschitz, None, Variant::RealBall).is_err());
        let (_, p) = predict_case(4, 3, 9.0, RegimeCase::Lipschitz, None, Variant::RealBall).unwrap();
        assert_eq!(p.regime, Regime::LipschitzPower);
        assert!((p.theta - p.theta_closed_form.unwrap()).abs() < 1e-14);

        assert_eq!(predict(&ExampleSpec::real(3, 2, 3.0, 1.0).unwrap(), None).unwrap().regime, Regime::NotC11);
        assert_eq!(predict(&ExampleSpec::real(3, 2, 3.0, 5.0).unwrap(), None).unwrap().regime, Regime::Unobstructed);
    }

    #[test]
    fn exact_theta() {
        assert_eq!(theta_rational(4, 4, 2), Rational64::new(7, 4));
        assert_eq!(theta_rational(3, 2, 2), Rational64::new(5, 3));
    }

    #[test]
    fn lp_advisory_contrast() {
        let s = ExampleSpec::new(2, 2, 4.0, -2.0, Variant::CompactProduct).unwrap();
        let adv = lp_advisory(&s, 2.0);
        assert!(adv.integrable);
        assert!(!adv.quoted_bound_satisfied);
    }

    #[test]
    fn barrier_center_and_axes() {
        let s = ExampleSpec::real(3, 2, 3.0, 2.0).unwrap();
        let bar = barrier(&s, 0.1).unwrap();
        assert_eq!(bar.value(&bar.center), -1.0);
        assert!(barrier(&s, 0.9).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = bar.check(2000, &mut rng);
        assert!(c.contained);
        assert!(c.max_xprime_ratio < (7.0f64 / 12.0).sqrt() + 1e-9);
        assert!(c.inf_f_sampled >= c.inf_f_bound);
    }

    #[test]
    fn real_barrier_hessian_closed_form() {
        let s = ExampleSpec::real(3, 2, 3.0, 2.0).unwrap();
        let e: f64 = 0.05;
        let bar = barrier(&s, e).unwrap();
        let d = bar.hessian_diag();
        assert!((d[0] - 32.0 * e.powf(-2.0 / 3.0)).abs() < 1e-9 * d[0]);
        assert!((d[1] - 8.0 * e.powf(-2.0 / 3.0)).abs() < 1e-9 * d[1]);
        assert!((d[2] - 2.0 * 16f64.powi(4) / (e * e)).abs() < 1e-9 * d[2]);
        let closed = 40.0 * 131072.0 + 256.0 * e.powf(4.0 / 3.0);
        assert!((bar.scaled_sup_sk().unwrap() - closed).abs() < 1e-9 * closed);
    }

    #[test]
    fn constant_has_zero_second_differences() {
        assert_eq!(second_difference_max(|_, _| 2.5, 1.0 / 32.0, 0.0), 0.0);
        let q = second_difference_max(|r, t| r * r + 3.0 * t * t, 1.0 / 32.0, 0.0);
        assert!((q - 6.0).abs() < 1e-9);
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn kv_round_trip() {
        let cfg = GalleryConfig::parse("n = 3\nk = 2\na = 3\nb = 2\nvariant = real-ball\ngamma = 1.6").unwrap();
        assert_eq!(cfg.gamma, Some(1.6));
        let back = GalleryConfig::parse(&cfg.to_kv().to_text()).unwrap();
        assert_eq!(back, cfg);
        assert!(GalleryConfig::parse("n = 3\nk = 2\na = 3\nb = 2\ncolour = red").is_err());
        let lp = GalleryConfig::parse("n = 2\nk = 2\na = 4\np = 2\nvariant = compact-product").unwrap();
        assert_eq!(lp.spec.b, -2.0);
    }
}
