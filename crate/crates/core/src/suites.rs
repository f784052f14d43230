//! Seeded property suites over random spectra.
//!
//! [`algebra_suite`] checks the symmetric-function identities and inequalities
//! on cone samples, and [`key_inequality_fuzz`] checks the key inequality on
//! spectra drawn to satisfy its hypotheses. Both report counts rather than
//! panicking, so the runner can print them and tests can assert on them.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{arg, Error, Result};
use crate::linearization::{key_inequality_sides, linearize, trace_identity_residual, DELTA_MAX};
use crate::rng::derive_rng;
use crate::symmetric::{
    garding_pairing, in_cone, maclaurin_ratio_chain, partial_sigma, partial_sigma2, ConeLevel,
    ConeSampler, Spectrum,
};

pub const TRACE_TOL: f64 = 1e-9;
pub const DIVIDED_DIFFERENCE_TOL: f64 = 1e-10;
pub const CONCAVITY_TOL: f64 = 1e-10;
/// Roundoff allowance for the two inequalities, relative to the larger side.
pub const INEQUALITY_TOL: f64 = 1e-12;

/// Tally for one property.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    /// Largest normalized defect seen; a failure is a defect above `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
}

impl PropertyOutcome {
    fn new(name: &str, tolerance: f64) -> Self {
        Self { name: name.to_string(), checked: 0, failures: 0, worst: 0.0, tolerance }
    }

    fn record(&mut self, defect: f64) {
        self.checked += 1;
        if !(defect <= self.tolerance) {
            self.failures += 1;
        }
        if defect > self.worst || defect.is_nan() {
            self.worst = defect;
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures == 0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AlgebraSuiteReport {
    pub seed: u64,
    pub samples: usize,
    pub max_n: usize,
    pub properties: Vec<PropertyOutcome>,
}

impl AlgebraSuiteReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyOutcome::passed)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyOutcome> {
        self.properties.iter().find(|p| p.name == name)
    }
}

/// Runs every algebra property on `samples` spectra with `2 ≤ n ≤ max_n`, `1 ≤ k ≤ n`.
///
/// Defects are normalized as follows:
/// * `trace-identity`: `|Σ S^{iī} λ_i − k| / k`;
/// * `maclaurin-chain`: largest `r_{j+1}/r_j − 1`;
/// * `garding-pairing`: `(rhs − lhs) / rhs` for a second independent sample `μ`;
/// * `divided-difference`: `|(λ_j − λ_i) σ_{m−1}(λ|ij) − σ_m(λ|i) + σ_m(λ|j)|`
///   over the sum of the absolute values of the three terms, for all pairs and all `m ≤ min(k, n−1)`;
/// * `concavity-form`: positive part of the second variation over the sum of
///   the absolute values of its terms, along a random real diagonal and Hermitian off-diagonal direction.
pub fn algebra_suite(seed: u64, samples: usize, max_n: usize) -> Result<AlgebraSuiteReport> {
    if !(2..=16).contains(&max_n) {
        return Err(arg(format!("max_n = {max_n} outside 2..=16")));
    }
    let mut rng = derive_rng(seed, "algebra-suite");
    let mut trace = PropertyOutcome::new("trace-identity", TRACE_TOL);
    let mut chain = PropertyOutcome::new("maclaurin-chain", INEQUALITY_TOL);
    let mut garding = PropertyOutcome::new("garding-pairing", INEQUALITY_TOL);
    let mut divided = PropertyOutcome::new("divided-difference", DIVIDED_DIFFERENCE_TOL);
    let mut concavity = PropertyOutcome::new("concavity-form", CONCAVITY_TOL);

    for _ in 0..samples {
        let n = rng.random_range(2..=max_n);
        let k = ConeLevel::new(rng.random_range(1..=n))?;
        let mut sampler = ConeSampler::new(n, k)?;
        let lam = sampler.sample(&mut rng);
        let mu = sampler.sample(&mut rng);

        trace.record(trace_identity_residual(&lam, k)? / k.get() as f64);

        let r = maclaurin_ratio_chain(&lam, k)?;
        let rise = r.windows(2).map(|w| w[1] / w[0] - 1.0).fold(0.0, f64::max);
        chain.record(rise);

        let g = garding_pairing(&lam, &mu, k)?;
        garding.record((g.rhs - g.lhs) / g.rhs.abs().max(f64::MIN_POSITIVE));

        divided.record(divided_difference_defect(&lam, k.get())?);

        let dir = random_direction(n, &mut rng);
        concavity.record(concavity_defect(&lam, k, &dir)?);
    }
    Ok(AlgebraSuiteReport {
        seed,
        samples,
        max_n,
        properties: vec![trace, chain, garding, divided, concavity],
    })
}

fn divided_difference_defect(lam: &Spectrum, k: usize) -> Result<f64> {
    let n = lam.n();
    let l = lam.values();
    let mut worst: f64 = 0.0;
    for m in 1..=k.min(n - 1) {
        let level = ConeLevel::new(m)?;
        for i in 0..n {
            for j in i + 1..n {
                let inner = if m == 1 { 1.0 } else { partial_sigma2(lam, ConeLevel::new(m - 1)?, i, j)? };
                let left = (l[j] - l[i]) * inner;
                let si = partial_sigma(lam, level, i)?;
                let sj = partial_sigma(lam, level, j)?;
                let scale = left.abs() + si.abs() + sj.abs();
                if scale > 0.0 {
                    worst = worst.max((left - (si - sj)).abs() / scale);
                }
            }
        }
    }
    Ok(worst)
}

/// A real diagonal part and a Hermitian off-diagonal part with standard normal entries.
pub fn random_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<f64>, DMatrix<Complex64>) {
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut y = DMatrix::zeros(n, n);
    for i in 0..n {
        for p in i + 1..n {
            let z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            y[(i, p)] = z;
            y[(p, i)] = z.conj();
        }
    }
    (x, y)
}

fn concavity_defect(lam: &Spectrum, k: ConeLevel, dir: &(Vec<f64>, DMatrix<Complex64>)) -> Result<f64> {
    let c = linearize(lam, k)?;
    let (x, y) = dir;
    let q = c.concavity_form(x, y)?;
    let n = lam.n();
    let mut scale = 0.0;
    for i in 0..n {
        for p in 0..n {
            scale += (c.s_iipp[(i, p)] * x[i] * x[p]).abs() + (c.s_ippi[(i, p)] * y[(i, p)].norm_sqr()).abs();
        }
    }
    Ok(if scale > 0.0 { q.max(0.0) / scale } else { 0.0 })
}

/// A checked instance of the key inequality.
#[derive(Clone, Debug, Serialize)]
pub struct KeyWitness {
    pub lambda: Vec<f64>,
    pub k: usize,
    pub delta: f64,
    /// Zero-based index.
    pub p: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct KeyFuzzReport {
    pub seed: u64,
    /// Spectra with at least one admissible index `p`.
    pub accepted: usize,
    pub attempts: usize,
    /// Admissible `(λ, p)` pairs checked.
    pub checks: usize,
    pub violations: usize,
    /// Smallest `(lhs − rhs) / max(|lhs|, |rhs|)` over all checks.
    pub worst_margin: f64,
    pub tightest: Option<KeyWitness>,
}

impl KeyFuzzReport {
    pub fn passed(&self) -> bool {
        self.checks > 0 && self.violations == 0
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.attempts.max(1) as f64
    }
}

/// Attempts allowed per requested spectrum before the fuzz gives up.
const MAX_ATTEMPTS_PER_SAMPLE: usize = 1000;

/// Draws spectra until `samples` of them satisfy the hypotheses for some `p ≥ 2`.
///
/// Proposal: `λ_1 = 10^{U(−2,2)}`, the remaining entries uniform on
/// `(−δλ_1, sλ_1)` with `s = 10^{U(−3,0)}`, `δ` uniform on `(0, 1/7]`,
/// `2 ≤ k ≤ n ≤ max_n`. Ties in the strict hypotheses count as rejections.
pub fn key_inequality_fuzz(seed: u64, samples: usize, max_n: usize) -> Result<KeyFuzzReport> {
    if !(2..=16).contains(&max_n) {
        return Err(arg(format!("max_n = {max_n} outside 2..=16")));
    }
    let mut rng = derive_rng(seed, "key-inequality");
    let mut report = KeyFuzzReport {
        seed,
        accepted: 0,
        attempts: 0,
        checks: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
        tightest: None,
    };
    while report.accepted < samples {
        if report.attempts >= MAX_ATTEMPTS_PER_SAMPLE * samples.max(1) {
            return Err(Error::Numerical(format!(
                "only {} of {samples} spectra satisfied the hypotheses in {} attempts",
                report.accepted, report.attempts
            )));
        }
        report.attempts += 1;
        let n = rng.random_range(2..=max_n);
        let k = ConeLevel::new(rng.random_range(2..=n))?;
        let delta = DELTA_MAX * (1.0 - rng.random::<f64>());
        let l1 = 10f64.powf(rng.random_range(-2.0..2.0));
        let s = 10f64.powf(rng.random_range(-3.0..0.0));
        let mut values = vec![l1];
        values.extend((1..n).map(|_| l1 * rng.random_range(-delta..s)));
        let lam = Spectrum::new(values)?;
        if !in_cone(&lam, k) {
            continue;
        }
        let mut any = false;
        for p in 1..n {
            let (lhs, rhs) = match key_inequality_sides(&lam, k, delta, p) {
                Ok(sides) => sides,
                Err(Error::Precondition(_)) => continue,
                Err(e) => return Err(e),
            };
            any = true;
            report.checks += 1;
            let margin = (lhs - rhs) / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
            if margin < -INEQUALITY_TOL {
                report.violations += 1;
            }
            if margin < report.worst_margin {
                report.worst_margin = margin;
                report.tightest = Some(KeyWitness {
                    lambda: lam.values().to_vec(),
                    k: k.get(),
                    delta,
                    p,
                    lhs,
                    rhs,
                });
            }
        }
        if any {
            report.accepted += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_algebra_suite_passes() {
        let r = algebra_suite(7, 300, 5).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.property("trace-identity").unwrap().checked, 300);
    }

    #[test]
    fn small_key_fuzz_passes() {
        let r = key_inequality_fuzz(7, 200, 5).unwrap();
        assert_eq!(r.accepted, 200);
        assert!(r.passed(), "{r:?}");
        assert!(r.worst_margin > 0.0);
    }

    #[test]
    fn defect_counts_failures() {
        let mut p = PropertyOutcome::new("x", 1e-3);
        p.record(1e-4);
        p.record(1e-2);
        p.record(f64::NAN);
        assert_eq!((p.checked, p.failures), (3, 2));
        assert!(!p.passed());
    }
}
