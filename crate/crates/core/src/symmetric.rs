//! Elementary symmetric functions of eigenvalue vectors, the Gårding cones
//! `Γ_m = {σ_1 > 0, …, σ_m > 0}`, and eigenvalues of a Hermitian matrix
//! measured against a positive definite background metric.
//!
//! All `σ_m` evaluations go through the incremental expansion of
//! `∏ (1 + λ_i x)`, which costs `O(n·m)` and never forms minors.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

/// Eigenvalues `λ_1 ≥ λ_2 ≥ … ≥ λ_n`, `n ≥ 2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    /// Sorts into decreasing order.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(arg(format!("spectrum needs n >= 2 entries, got {}", values.len())));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite eigenvalue {bad}")));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { values })
    }

    /// The spectrum `(1, …, 1)` of the identity.
    pub fn identity(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Largest eigenvalue.
    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn dump(&self, m: ConeLevel) -> SpectrumDump {
        SpectrumDump { lambda: self.values.clone(), n: self.n(), m: m.get() }
    }
}

/// Developer-facing JSON shape used by golden-file tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDump {
    pub lambda: Vec<f64>,
    pub n: usize,
    pub m: usize,
}

impl SpectrumDump {
    pub fn spectrum(&self) -> Result<(Spectrum, ConeLevel)> {
        if self.lambda.len() != self.n {
            return Err(Error::Data(format!(
                "dump declares n = {} but carries {} eigenvalues",
                self.n,
                self.lambda.len()
            )));
        }
        Ok((Spectrum::new(self.lambda.clone())?, ConeLevel::new(self.m)?))
    }
}

/// Cone index `m ≥ 1`; the upper bound `m ≤ n` is checked against each spectrum it meets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConeLevel(usize);

impl ConeLevel {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(arg("cone level must be at least 1"));
        }
        Ok(Self(m))
    }

    pub fn get(self) -> usize {
        self.0
    }

    fn check(self, n: usize) -> Result<()> {
        if self.0 > n {
            return Err(arg(format!("cone level {} exceeds dimension {n}", self.0)));
        }
        Ok(())
    }
}

/// `C(n, k)` as a float; zero outside `0 ≤ k ≤ n`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `[σ_0, σ_1, …, σ_m]` of `values`; entries past `values.len()` are zero.
pub fn sigma_all(values: &[f64], m: usize) -> Vec<f64> {
    let mut e = vec![0.0; m + 1];
    e[0] = 1.0;
    for (count, &lam) in values.iter().enumerate() {
        let top = m.min(count + 1);
        for j in (1..=top).rev() {
            e[j] += lam * e[j - 1];
        }
    }
    e
}

/// `σ_m(values)` with `σ_0 = 1`.
pub fn sigma(values: &[f64], m: usize) -> f64 {
    if m > values.len() {
        return 0.0;
    }
    sigma_all(values, m)[m]
}

/// `σ_m` of `values` with the listed positions removed.
pub fn sigma_without(values: &[f64], m: usize, skip: &[usize]) -> f64 {
    let kept: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, &v)| v)
        .collect();
    sigma(&kept, m)
}

/// `S_m(λ)`.
pub fn elementary_symmetric(lam: &Spectrum, m: ConeLevel) -> Result<f64> {
    m.check(lam.n())?;
    Ok(sigma(lam.values(), m.get()))
}

/// `σ_m(λ|i)`: `σ_m` with entry `i` removed (zero-based), equal to `∂σ_{m+1}/∂λ_i`.
pub fn partial_sigma(lam: &Spectrum, m: ConeLevel, i: usize) -> Result<f64> {
    let n = lam.n();
    if i >= n {
        return Err(arg(format!("index {i} out of range for n = {n}")));
    }
    if m.get() > n - 1 {
        return Err(arg(format!("level {} exceeds n - 1 = {}", m.get(), n - 1)));
    }
    Ok(sigma_without(lam.values(), m.get(), &[i]))
}

/// `σ_m(λ|ij)`: `σ_m` with entries `i ≠ j` removed (zero-based).
///
/// Satisfies `σ_m(λ|ij) = (σ_{m+1}(λ|i) − σ_{m+1}(λ|j)) / (λ_j − λ_i)` when `λ_i ≠ λ_j`.
pub fn partial_sigma2(lam: &Spectrum, m: ConeLevel, i: usize, j: usize) -> Result<f64> {
    let n = lam.n();
    if i == j {
        return Err(arg("partial_sigma2 needs two distinct indices"));
    }
    if i >= n || j >= n {
        return Err(arg(format!("index pair ({i}, {j}) out of range for n = {n}")));
    }
    if m.get() > n - 2 {
        return Err(arg(format!("level {} exceeds n - 2 = {}", m.get(), n - 2)));
    }
    Ok(sigma_without(lam.values(), m.get(), &[i, j]))
}

/// Open cone membership: `S_j(λ) > 0` for `j = 1..=m`.
pub fn in_cone(lam: &Spectrum, m: ConeLevel) -> bool {
    in_cone_values(lam.values(), m.get())
}

/// Closed cone membership with slack: `S_j(λ) ≥ −slack` for `j = 1..=m`.
pub fn in_closed_cone(lam: &Spectrum, m: ConeLevel, slack: f64) -> bool {
    m.get() <= lam.n() && sigma_all(lam.values(), m.get())[1..].iter().all(|&s| s >= -slack)
}

pub(crate) fn in_cone_values(values: &[f64], m: usize) -> bool {
    m <= values.len() && sigma_all(values, m)[1..].iter().all(|&s| s > 0.0)
}

/// Maclaurin ratios `r_j = (S_j / C(n, j))^{1/j}` for `j = 1..=m`; non-increasing on `Γ_m`.
pub fn maclaurin_ratio_chain(lam: &Spectrum, m: ConeLevel) -> Result<Vec<f64>> {
    m.check(lam.n())?;
    if !in_cone(lam, m) {
        return Err(Error::Domain(format!("spectrum not in Γ_{}", m.get())));
    }
    let n = lam.n();
    let s = sigma_all(lam.values(), m.get());
    Ok((1..=m.get()).map(|j| (s[j] / binomial(n, j)).powf(1.0 / j as f64)).collect())
}

/// Both sides of Gårding's inequality `Σ μ_i σ_{m−1}(λ|i) ≥ m σ_m(μ)^{1/m} σ_m(λ)^{(m−1)/m}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GardingPairing {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn garding_pairing(lam: &Spectrum, mu: &Spectrum, m: ConeLevel) -> Result<GardingPairing> {
    if lam.n() != mu.n() {
        return Err(arg(format!("dimension mismatch {} vs {}", lam.n(), mu.n())));
    }
    m.check(lam.n())?;
    if !in_cone(lam, m) || !in_cone(mu, m) {
        return Err(Error::Domain(format!("Gårding pairing needs both spectra in Γ_{}", m.get())));
    }
    let mm = m.get();
    let lhs = (0..lam.n())
        .map(|i| mu.values()[i] * sigma_without(lam.values(), mm - 1, &[i]))
        .sum();
    let mf = mm as f64;
    let rhs = mf
        * sigma(mu.values(), mm).powf(1.0 / mf)
        * sigma(lam.values(), mm).powf((mf - 1.0) / mf);
    Ok(GardingPairing { lhs, rhs })
}

/// Seeded rejection sampler for `Γ_m`: sorted i.i.d. uniforms on `[−1, 3]`.
#[derive(Clone, Debug)]
pub struct ConeSampler {
    n: usize,
    m: usize,
    attempts: u64,
    accepted: u64,
}

impl ConeSampler {
    pub fn new(n: usize, m: ConeLevel) -> Result<Self> {
        if n < 2 {
            return Err(arg("sampler needs n >= 2"));
        }
        m.check(n)?;
        Ok(Self { n, m: m.get(), attempts: 0, accepted: 0 })
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Spectrum {
        loop {
            self.attempts += 1;
            let values: Vec<f64> = (0..self.n).map(|_| rng.random_range(-1.0..3.0)).collect();
            if in_cone_values(&values, self.m) {
                self.accepted += 1;
                return Spectrum::new(values).expect("finite sample of length n >= 2");
            }
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            return f64::NAN;
        }
        self.accepted as f64 / self.attempts as f64
    }
}

/// Empirical estimate of the constant in `σ_{m−1} ≥ c σ_m^{(m−2)/(m−1)} σ_1^{1/(m−1)}` on `Γ_m`.
#[derive(Clone, Debug, Serialize)]
pub struct Maclaurin2Estimate {
    /// Smallest observed ratio; an upper bound for the true infimum, reported as empirical.
    pub value: f64,
    pub argmin: Vec<f64>,
    pub samples: usize,
    pub acceptance_rate: f64,
}

/// The ratio `σ_{m−1} / (σ_m^{(m−2)/(m−1)} σ_1^{1/(m−1)})`, homogeneous of degree zero.
pub fn maclaurin2_ratio(values: &[f64], m: usize) -> f64 {
    let s = sigma_all(values, m);
    let mf = m as f64;
    s[m - 1] / (s[m].powf((mf - 2.0) / (mf - 1.0)) * s[1].powf(1.0 / (mf - 1.0)))
}

pub fn maclaurin2_constant<R: Rng + ?Sized>(
    n: usize,
    m: ConeLevel,
    samples: usize,
    rng: &mut R,
) -> Result<Maclaurin2Estimate> {
    if m.get() == 1 {
        return Err(arg("Maclaurin II is vacuous for m = 1"));
    }
    if samples == 0 {
        return Err(arg("need at least one sample"));
    }
    let mm = m.get();
    let mut sampler = ConeSampler::new(n, m)?;
    let mut best = f64::INFINITY;
    let mut argmin = Vec::new();
    let mut consider = |values: Vec<f64>| {
        if in_cone_values(&values, mm) {
            let q = maclaurin2_ratio(&values, mm);
            if q.is_finite() && q < best {
                best = q;
                argmin = values;
            }
        }
    };
    for probe in boundary_probes(n, mm) {
        consider(probe);
    }
    for _ in 0..samples {
        consider(sampler.sample(rng).into_vec());
    }
    if !(best > 0.0) {
        return Err(Error::Numerical(format!("Maclaurin II estimate is not positive: {best}")));
    }
    argmin.sort_by(|a, b| b.total_cmp(a));
    Ok(Maclaurin2Estimate { value: best, argmin, samples, acceptance_rate: sampler.acceptance_rate() })
}

/// Deterministic probes: the identity, one dominant eigenvalue, truncated identities,
/// and points approaching `∂Γ_m` along `(1, …, 1, −s)`.
fn boundary_probes(n: usize, m: usize) -> Vec<Vec<f64>> {
    let mut probes = vec![vec![1.0; n]];
    for e in -3..=6 {
        let mut v = vec![1.0; n];
        v[0] = 10f64.powi(e);
        probes.push(v);
    }
    for ones in m..=n {
        let mut v = vec![0.0; n];
        v[..ones].iter_mut().for_each(|x| *x = 1.0);
        probes.push(v);
    }
    // largest s keeping (1, …, 1, −s) in the closed cone
    let edge = |s: f64| {
        let mut v = vec![1.0; n];
        v[n - 1] = -s;
        v
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while in_cone_values(&edge(hi), m) && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if in_cone_values(&edge(mid), m) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for frac in [0.5, 0.9, 0.99, 0.999_999] {
        probes.push(edge(lo * frac));
    }
    probes
}

/// A Hermitian matrix `T` paired with a positive definite Hermitian metric `V`.
#[derive(Clone, Debug)]
pub struct HermitianPair {
    t: DMatrix<Complex64>,
    v: DMatrix<Complex64>,
}

const HERMITIAN_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-12;

impl HermitianPair {
    /// Symmetrizes both inputs; asymmetry above `1e-12` relative is rejected.
    pub fn new(t: DMatrix<Complex64>, v: DMatrix<Complex64>) -> Result<Self> {
        let n = t.nrows();
        if n < 2 || t.ncols() != n || v.nrows() != n || v.ncols() != n {
            return Err(arg(format!(
                "need two square matrices of equal size n >= 2, got {}x{} and {}x{}",
                t.nrows(),
                t.ncols(),
                v.nrows(),
                v.ncols()
            )));
        }
        let t = hermitize(t, "T")?;
        let v = hermitize(v, "V")?;
        let eig = SymmetricEigen::new(v.clone()).eigenvalues;
        let max = eig.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
        let min = eig.iter().fold(f64::INFINITY, |acc, &e| acc.min(e));
        if !(min > METRIC_TOL * max.max(f64::MIN_POSITIVE)) {
            return Err(Error::Conditioning(format!(
                "metric V has minimum eigenvalue {min:e} against scale {max:e}"
            )));
        }
        Ok(Self { t, v })
    }

    pub fn real(t: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        Self::new(t.map(Complex64::from), v.map(Complex64::from))
    }

    pub fn t(&self) -> &DMatrix<Complex64> {
        &self.t
    }

    pub fn v(&self) -> &DMatrix<Complex64> {
        &self.v
    }
}

fn hermitize(a: DMatrix<Complex64>, name: &str) -> Result<DMatrix<Complex64>> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Data(format!("{name} has non-finite entries")));
    }
    let adj = a.adjoint();
    let scale = a.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    let asym = (&a - &adj).iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    if asym > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Data(format!(
            "{name} is not Hermitian: asymmetry {asym:e} against scale {scale:e}"
        )));
    }
    Ok((a + adj).scale(0.5))
}

/// Roots of `det(T − λV) = 0`, via the Cholesky factor `V = LL*` and the
/// Hermitian matrix `L⁻¹ T L⁻*`.
pub fn generalized_spectrum(pair: &HermitianPair) -> Result<Spectrum> {
    let chol = Cholesky::new(pair.v.clone())
        .ok_or_else(|| Error::Conditioning("Cholesky factorization of V failed".into()))?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&pair.t)
        .ok_or_else(|| Error::Conditioning("singular Cholesky factor".into()))?;
    let m = l
        .solve_lower_triangular(&y.adjoint())
        .ok_or_else(|| Error::Conditioning("singular Cholesky factor".into()))?;
    let m = (&m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(m).eigenvalues;
    Spectrum::new(eig.iter().copied().collect())
}

/// `σ_k(λ)` together with the top-degree coefficient of `τ^k ∧ β^{n−k}` against `β^n`
/// for the diagonal form `τ` with eigenvalues `λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FormCoefficient {
    pub sigma: f64,
    pub wedge: f64,
}

/// Largest dimension for which the exterior-algebra expansion is carried out.
pub const WEDGE_MAX_DIM: usize = 16;

pub fn sigma_k_form_coefficient(lam: &Spectrum, k: ConeLevel) -> Result<FormCoefficient> {
    k.check(lam.n())?;
    let n = lam.n();
    let s = sigma(lam.values(), k.get());
    if n > WEDGE_MAX_DIM {
        return Ok(FormCoefficient { sigma: s, wedge: s / binomial(n, k.get()) });
    }
    let wedge = wedge_coefficient(lam.values(), k.get());
    let expected = s / binomial(n, k.get());
    let scale = lam.values().iter().fold(1.0f64, |acc, v| acc.max(v.abs())).powi(k.get() as i32);
    if (wedge - expected).abs() > 1e-10 * scale {
        return Err(Error::Numerical(format!(
            "wedge coefficient {wedge} disagrees with σ_k / C(n, k) = {expected}"
        )));
    }
    Ok(FormCoefficient { sigma: s, wedge })
}

/// Expands `τ^k ∧ β^{n−k}` in the commuting nilpotent basis `e_i = i dz_i ∧ dz̄_i`
/// (indexed by bitmask) and divides by the coefficient `n!` of `β^n`.
fn wedge_coefficient(values: &[f64], k: usize) -> f64 {
    let n = values.len();
    let full = (1usize << n) - 1;
    let mut form = vec![0.0; 1 << n];
    form[0] = 1.0;
    let ones = vec![1.0; n];
    for step in 0..n {
        let factor = if step < k { values } else { &ones[..] };
        let mut next = vec![0.0; 1 << n];
        for (mask, &c) in form.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (i, &w) in factor.iter().enumerate() {
                if mask & (1 << i) == 0 {
                    next[mask | (1 << i)] += c * w;
                }
            }
        }
        form = next;
    }
    let n_factorial: f64 = (1..=n).map(|j| j as f64).product();
    form[full] / n_factorial
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    fn lvl(m: usize) -> ConeLevel {
        ConeLevel::new(m).unwrap()
    }

    #[test]
    fn construction_sorts_and_validates() {
        let s = spec(&[1.0, 3.0, -2.0]);
        assert_eq!(s.values(), &[3.0, 1.0, -2.0]);
        assert!(Spectrum::new(vec![1.0]).is_err());
        assert!(Spectrum::new(vec![1.0, f64::NAN]).is_err());
        assert!(ConeLevel::new(0).is_err());
    }

    #[test]
    fn sigma_small_cases() {
        assert_eq!(elementary_symmetric(&spec(&[1.0; 4]), lvl(2)).unwrap(), 6.0);
        assert_eq!(elementary_symmetric(&spec(&[6.0, 6.0, -2.0]), lvl(2)).unwrap(), 12.0);
        assert_eq!(elementary_symmetric(&spec(&[6.0, 6.0, -2.0]), lvl(3)).unwrap(), -72.0);
        assert!(elementary_symmetric(&spec(&[1.0, 2.0]), lvl(3)).is_err());
        assert_eq!(sigma(&[2.0, 5.0], 0), 1.0);
    }

    #[test]
    fn partial_sigmas() {
        let l = spec(&[2.0, 1.0]);
        assert_eq!(partial_sigma(&l, lvl(1), 0).unwrap(), 1.0);
        assert_eq!(partial_sigma(&l, lvl(1), 1).unwrap(), 2.0);
        assert!(partial_sigma(&l, lvl(1), 2).is_err());
        assert!(partial_sigma(&l, lvl(2), 0).is_err());

        assert_eq!(partial_sigma2(&spec(&[3.0, 2.0, 1.0]), lvl(1), 0, 1).unwrap(), 1.0);
        assert_eq!(partial_sigma2(&spec(&[1.0; 4]), lvl(2), 0, 1).unwrap(), 1.0);
        assert!(partial_sigma2(&spec(&[1.0; 4]), lvl(1), 2, 2).is_err());
    }

    #[test]
    fn cone_membership() {
        let l = spec(&[6.0, 6.0, -2.0]);
        assert!(in_cone(&l, lvl(2)));
        assert!(!in_cone(&l, lvl(3)));
        let zero = spec(&[0.0; 3]);
        assert!(!in_cone(&zero, lvl(1)));
        assert!(in_closed_cone(&zero, lvl(3), 0.0));
    }

    #[test]
    fn maclaurin_chain_hand_values() {
        let r = maclaurin_ratio_chain(&spec(&[2.0, 1.0, 1.0]), lvl(3)).unwrap();
        assert!((r[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((r[1] - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((r[2] - 2f64.cbrt()).abs() < 1e-15);
        assert!(r[0] > r[1] && r[1] > r[2]);
        let ones = maclaurin_ratio_chain(&Spectrum::identity(5).unwrap(), lvl(5)).unwrap();
        assert!(ones.iter().all(|x| (x - 1.0).abs() < 1e-15));
        assert!(matches!(
            maclaurin_ratio_chain(&spec(&[6.0, 6.0, -2.0]), lvl(3)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn garding_equality_case() {
        let l = spec(&[3.0, 1.5, 0.5, -0.2]);
        let g = garding_pairing(&l, &l, lvl(2)).unwrap();
        let s2 = sigma(l.values(), 2);
        assert!((g.lhs - 2.0 * s2).abs() < 1e-12);
        assert!((g.rhs - 2.0 * s2).abs() < 1e-12);
    }

    #[test]
    fn maclaurin2_trivial_and_identity_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = maclaurin2_constant(2, lvl(2), 100, &mut rng).unwrap();
        assert!((c.value - 1.0).abs() < 1e-12);
        assert!(maclaurin2_constant(4, lvl(1), 10, &mut rng).is_err());

        let (n, m) = (5usize, 3usize);
        let q = maclaurin2_ratio(&vec![1.0; n], m);
        let mf = m as f64;
        let closed = binomial(n, m - 1)
            / (binomial(n, m).powf((mf - 2.0) / (mf - 1.0)) * (n as f64).powf(1.0 / (mf - 1.0)));
        assert!((q - closed).abs() < 1e-12 * closed);
    }

    #[test]
    fn generalized_spectrum_reductions() {
        let t = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let same = HermitianPair::real(t.clone(), t.clone()).unwrap();
        let ones = generalized_spectrum(&same).unwrap();
        assert!(ones.values().iter().all(|x| (x - 1.0).abs() < 1e-12));

        let plain = HermitianPair::real(t.clone(), DMatrix::identity(3, 3)).unwrap();
        let got = generalized_spectrum(&plain).unwrap();
        let mut want: Vec<f64> = SymmetricEigen::new(t).eigenvalues.iter().copied().collect();
        want.sort_by(|a, b| b.total_cmp(a));
        for (g, w) in got.values().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn hermitian_pair_rejections() {
        let id = DMatrix::<f64>::identity(2, 2);
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(HermitianPair::real(skew, id.clone()), Err(Error::Data(_))));
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(HermitianPair::real(id.clone(), singular), Err(Error::Conditioning(_))));
        // sub-tolerance asymmetry is repaired silently
        let nearly = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5 + 1e-15, 1.0]);
        assert!(HermitianPair::real(nearly, id).is_ok());
    }

    #[test]
    fn form_coefficient_identity() {
        for n in 2..=5 {
            for k in 1..=n {
                let fc = sigma_k_form_coefficient(&Spectrum::identity(n).unwrap(), lvl(k)).unwrap();
                assert!((fc.sigma - binomial(n, k)).abs() < 1e-12);
                assert!((fc.wedge - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let s = spec(&[6.0, 6.0, -2.0]);
        let text = serde_json::to_string(&s.dump(lvl(2))).unwrap();
        assert_eq!(text, r#"{"lambda":[6.0,6.0,-2.0],"n":3,"m":2}"#);
        let back: SpectrumDump = serde_json::from_str(&text).unwrap();
        let (s2, m) = back.spectrum().unwrap();
        assert_eq!(s2, s);
        assert_eq!(m.get(), 2);
    }
}
