//! Regularity probes on solved doubly radial fields.
//!
//! Every probe is a pure function of the field: monotonicity in `r` and `t`,
//! the growth of `u` along the axis against a tilted profile, dyadic scans of
//! second-difference quotients, and a Hessian/gradient audit across fields.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{arg, Error, Result};
use crate::gallery::{power_smoothness_scan, ExampleSpec};
use crate::radial::{DoublyRadialField, NodeKind};

/// Outcome of [`monotonicity_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Monotonicity {
    pub monotonic_in_t: bool,
    pub monotonic_in_r: bool,
    /// `u(0,0) ≤ min u + tolerance`.
    pub min_at_origin: bool,
    /// Most negative forward difference (zero if none), or the excess of `u(0,0)` over `min u`.
    pub worst_violation: f64,
    pub tolerance: f64,
}

/// Relative tolerance of the monotonicity checks, in units of `osc u`.
pub const MONOTONICITY_TOL: f64 = 1e-8;

/// Forward differences in `t` and `r` over node pairs in the closed quarter
/// disk must be `≥ −1e-8·osc u`, and the minimum must sit at the origin.
pub fn monotonicity_check(field: &DoublyRadialField) -> Monotonicity {
    let grid = &field.grid;
    let side = grid.side();
    let tol = MONOTONICITY_TOL * field.oscillation();
    let closed = |i: usize, j: usize| i < side && j < side && grid.kind(i, j) != NodeKind::Outside;
    let (mut worst_t, mut worst_r) = (0.0f64, 0.0f64);
    let mut min_u = f64::INFINITY;
    for i in 0..side {
        for j in 0..side {
            if !closed(i, j) {
                continue;
            }
            let u = field.at(i, j);
            min_u = min_u.min(u);
            if closed(i, j + 1) {
                worst_t = worst_t.min(field.at(i, j + 1) - u);
            }
            if closed(i + 1, j) {
                worst_r = worst_r.min(field.at(i + 1, j) - u);
            }
        }
    }
    let origin_excess = field.at(0, 0) - min_u;
    Monotonicity {
        monotonic_in_t: worst_t >= -tol,
        monotonic_in_r: worst_r >= -tol,
        min_at_origin: origin_excess <= tol,
        worst_violation: worst_t.min(worst_r).min(-origin_excess),
        tolerance: tol,
    }
}

/// Axis profile `s(ε) = u(0, ε) − u(0, 0)` against `ℓ(ε) = u(ε^{1/a}, ε) − u(0, 0)`.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthProfile {
    /// Decreasing probe radii.
    pub eps: Vec<f64>,
    pub s_vals: Vec<f64>,
    pub ell_vals: Vec<f64>,
    /// Indices with `|s − ℓ| ≤ contact_tolerance`.
    pub contact_indices: Vec<usize>,
    pub contact_tolerance: f64,
    /// `s ≤ ℓ + contact_tolerance` at every radius.
    pub s_below_ell: bool,
    /// `s ≥ −tol` and non-decreasing in `ε`.
    pub s_monotone: bool,
}

/// Least-squares slope and intercept of `log s` against `log ε`.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthFit {
    pub exponent: f64,
    /// `c` in `s ≈ c ε^exponent`.
    pub constant: f64,
    /// False when fewer than three contacts forced a fit over all radii.
    pub used_contacts: bool,
    pub points: usize,
}

impl GrowthProfile {
    /// Fits over the contact indices when there are at least three, otherwise over all radii.
    pub fn fit(&self) -> Result<GrowthFit> {
        let used_contacts = self.contact_indices.len() >= 3;
        let idx: Vec<usize> =
            if used_contacts { self.contact_indices.clone() } else { (0..self.eps.len()).collect() };
        let pts: Vec<(f64, f64)> = idx
            .iter()
            .filter(|&&i| self.s_vals[i] > 0.0)
            .map(|&i| (self.eps[i].ln(), self.s_vals[i].ln()))
            .collect();
        if pts.len() < 2 {
            return Err(Error::Resolution("fewer than two positive profile values to fit".into()));
        }
        let (slope, intercept) = least_squares(&pts);
        Ok(GrowthFit { exponent: slope, constant: intercept.exp(), used_contacts, points: pts.len() })
    }
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Samples `s` and `ℓ` at `ε_m = 2^{−m} ε₀`, `m = 0..=m_max`, snapped to
/// multiples of `h/2` and bilinearly interpolated.
///
/// `ε₀` is the largest power of two keeping `(ε^{1/a}, ε)` inside `r² + t² ≤ 0.8`.
pub fn growth_profile(field: &DoublyRadialField, spec: &ExampleSpec, m_max: usize) -> Result<GrowthProfile> {
    let h = field.h();
    let inv_a = 1.0 / spec.a;
    let mut eps0: f64 = 0.5;
    while eps0.powf(2.0 * inv_a) + eps0 * eps0 > 0.8 {
        eps0 *= 0.5;
    }
    let eps_min = eps0 * 0.5f64.powi(m_max as i32);
    if eps_min < 4.0 * h {
        return Err(Error::Resolution(format!(
            "ε_{m_max} = {eps_min:e} is below 4h = {:e}; lower m_max or refine the grid",
            4.0 * h
        )));
    }
    let origin = field.at(0, 0);
    let osc = field.oscillation();
    let contact_tolerance = 10.0 * h * osc;
    let half = 0.5 * h;
    let mut eps = Vec::new();
    let mut s_vals = Vec::new();
    let mut ell_vals = Vec::new();
    for m in 0..=m_max {
        let e = (eps0 * 0.5f64.powi(m as i32) / half).round() * half;
        eps.push(e);
        s_vals.push(field.interpolate(0.0, e) - origin);
        ell_vals.push(field.interpolate(e.powf(inv_a), e) - origin);
    }
    let contact_indices =
        (0..eps.len()).filter(|&i| (s_vals[i] - ell_vals[i]).abs() <= contact_tolerance).collect();
    let mono_tol = MONOTONICITY_TOL * osc;
    let s_below_ell = s_vals.iter().zip(&ell_vals).all(|(s, l)| *s <= l + contact_tolerance);
    let s_monotone = s_vals.iter().all(|s| *s >= -mono_tol) && s_vals.windows(2).all(|w| w[0] >= w[1] - mono_tol);
    Ok(GrowthProfile { eps, s_vals, ell_vals, contact_indices, contact_tolerance, s_below_ell, s_monotone })
}

/// One dyadic annulus `2^{−(j+1)} ≤ √(r²+t²) ≤ 2^{−j}` of a second-difference scan.
#[derive(Clone, Debug, Serialize)]
pub struct AnnulusLevel {
    pub level: usize,
    pub rho_outer: f64,
    pub rho_inner: f64,
    pub max_quotient: f64,
    pub nodes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct C11Scan {
    pub levels: Vec<AnnulusLevel>,
    /// `max_quotient[j+1] / max_quotient[j]`, inner over outer.
    pub ratios: Vec<f64>,
}

impl C11Scan {
    /// Slope of `log max_quotient` against `log ρ_inner`; `γ − 2` for `|x|^γ`.
    pub fn slope(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .levels
            .iter()
            .filter(|l| l.max_quotient > 0.0)
            .map(|l| (l.rho_inner.ln(), l.max_quotient.ln()))
            .collect();
        least_squares(&pts).0
    }

    /// Longest run of consecutive ratios at or above `factor`.
    pub fn longest_run_above(&self, factor: f64) -> usize {
        let (mut best, mut cur) = (0, 0);
        for &r in &self.ratios {
            cur = if r >= factor { cur + 1 } else { 0 };
            best = best.max(cur);
        }
        best
    }
}

/// Value at signed indices, mirrored across both axes; `None` outside the closed disk.
fn reflected(field: &DoublyRadialField, i: isize, j: isize) -> Option<f64> {
    let (i, j) = (i.unsigned_abs(), j.unsigned_abs());
    let side = field.grid.side();
    (i < side && j < side && field.grid.kind(i, j) != NodeKind::Outside).then(|| field.at(i, j))
}

/// Largest `|u(x+e) − 2u(x) + u(x−e)|/|e|²` at node `(i, j)` over the axis and diagonal directions.
fn max_second_quotient(field: &DoublyRadialField, i: usize, j: usize) -> Option<f64> {
    let h = field.h();
    let (ii, jj) = (i as isize, j as isize);
    let c = field.at(i, j);
    let mut best: Option<f64> = None;
    for (di, dj, len2) in [(1isize, 0isize, 1.0), (0, 1, 1.0), (1, 1, 2.0), (1, -1, 2.0)] {
        if let (Some(p), Some(m)) = (reflected(field, ii + di, jj + dj), reflected(field, ii - di, jj - dj)) {
            let q = (p - 2.0 * c + m).abs() / (len2 * h * h);
            best = Some(best.map_or(q, |b: f64| b.max(q)));
        }
    }
    best
}

/// Maximum second-difference quotient over each dyadic annulus `j = 0..levels`.
///
/// Requires `2^{−levels} ≥ 4h`.
pub fn c11_blowup_scan(field: &DoublyRadialField, levels: usize) -> Result<C11Scan> {
    let h = field.h();
    if levels == 0 {
        return Err(arg("at least one level is required"));
    }
    let inner = 0.5f64.powi(levels as i32);
    if inner < 4.0 * h * (1.0 - 1e-12) {
        return Err(Error::Resolution(format!(
            "{levels} dyadic levels reach radius {inner:e}, below 4h = {:e}",
            4.0 * h
        )));
    }
    let grid = &field.grid;
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        let rho_outer = 0.5f64.powi(level as i32);
        let rho_inner = 0.5 * rho_outer;
        let mut max_quotient = 0.0f64;
        let mut nodes = 0;
        for idx in 0..grid.num_unknowns() {
            let (i, j) = grid.node(idx);
            let (r, t) = grid.coords(i, j);
            let rho = r.hypot(t);
            if rho < rho_inner * (1.0 - 1e-12) || rho > rho_outer * (1.0 + 1e-12) {
                continue;
            }
            if let Some(q) = max_second_quotient(field, i, j) {
                max_quotient = max_quotient.max(q);
                nodes += 1;
            }
        }
        out.push(AnnulusLevel { level, rho_outer, rho_inner, max_quotient, nodes });
    }
    let ratios = out.windows(2).map(|w| w[1].max_quotient / w[0].max_quotient).collect();
    Ok(C11Scan { levels: out, ratios })
}

/// Graded outcome of the regularity probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConsistentWithC11,
    BlowupDetected,
    Inconclusive,
}

/// Factor each consecutive annulus ratio must reach for a blow-up verdict.
pub const BLOWUP_FACTOR: f64 = 1.5;
/// Consecutive ratios at or above [`BLOWUP_FACTOR`] required for a blow-up verdict.
pub const BLOWUP_RUN: usize = 3;
/// Ratios at or below this are read as a bounded Hessian.
pub const BOUNDED_FACTOR: f64 = 1.3;

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub h: f64,
    pub fitted_growth_exponent: f64,
    pub fitted_growth_constant: f64,
    pub growth_fit_used_contacts: bool,
    pub theta_predicted: f64,
    pub c11_blowup_ratio: Vec<f64>,
    pub monotonic_in_t: bool,
    pub monotonic_in_r: bool,
    pub min_at_origin: bool,
    pub verdict: Verdict,
    pub profile: GrowthProfile,
    pub scan: C11Scan,
}

/// Runs all single-field probes and grades the result.
///
/// A blow-up verdict needs [`BLOWUP_RUN`] consecutive ratios `≥ 1.5`; a
/// consistent verdict needs all ratios `≤ 1.3`. Either way the growth fit
/// must have used at least three contacts, otherwise the verdict is inconclusive.
pub fn regularity_report(
    field: &DoublyRadialField,
    spec: &ExampleSpec,
    m_max: usize,
    levels: usize,
) -> Result<RegularityReport> {
    let mono = monotonicity_check(field);
    let profile = growth_profile(field, spec, m_max)?;
    let fit = profile.fit()?;
    let scan = c11_blowup_scan(field, levels)?;
    let verdict = if !fit.used_contacts {
        Verdict::Inconclusive
    } else if scan.longest_run_above(BLOWUP_FACTOR) >= BLOWUP_RUN {
        Verdict::BlowupDetected
    } else if scan.ratios.iter().all(|&r| r <= BOUNDED_FACTOR) {
        Verdict::ConsistentWithC11
    } else {
        Verdict::Inconclusive
    };
    Ok(RegularityReport {
        h: field.h(),
        fitted_growth_exponent: fit.exponent,
        fitted_growth_constant: fit.constant,
        growth_fit_used_contacts: fit.used_contacts,
        theta_predicted: spec.theta(),
        c11_blowup_ratio: scan.ratios.clone(),
        monotonic_in_t: mono.monotonic_in_t,
        monotonic_in_r: mono.monotonic_in_r,
        min_at_origin: mono.min_at_origin,
        verdict,
        profile,
        scan,
    })
}

impl RegularityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per probe radius and per annulus: `kind,index,radius,a,b,flag`.
    ///
    /// Probe rows carry `(s, ℓ, contact)`; annulus rows carry
    /// `(max_quotient, ratio to the previous level, nodes)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,index,radius,a,b,flag\n");
        for (i, e) in self.profile.eps.iter().enumerate() {
            let contact = self.profile.contact_indices.contains(&i) as u8;
            let _ = writeln!(out, "probe,{i},{e:?},{:?},{:?},{contact}", self.profile.s_vals[i], self.profile.ell_vals[i]);
        }
        for (j, l) in self.scan.levels.iter().enumerate() {
            let ratio = if j == 0 { f64::NAN } else { self.scan.ratios[j - 1] };
            let _ = writeln!(out, "annulus,{j},{:?},{:?},{ratio:?},{}", l.rho_inner, l.max_quotient, l.nodes);
        }
        out
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        Ok(())
    }
}

/// One field entering [`hessian_vs_gradient_audit`].
#[derive(Clone, Copy, Debug)]
pub struct AuditInput<'a> {
    pub field: &'a DoublyRadialField,
    pub spec: &'a ExampleSpec,
    /// Irregular-regime fields may be included as controls; they are flagged, not rejected.
    pub control: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditRow {
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub control: bool,
    /// Largest `|λ|` of the discrete Hessian over interior nodes.
    pub max_hessian: f64,
    /// Largest `u_r² + u_t²` over interior nodes.
    pub max_gradient_sq: f64,
    /// `max_hessian / (1 + max_gradient_sq)`.
    pub ratio: f64,
    /// Refined-over-coarse ratio of `F^{1/(k−1)}` second differences at spacing `max(h, 1/256)`.
    pub rhs_power_scan_ratio: f64,
}

/// Discrete Hessian and gradient maxima of each field, with the ratio
/// `sup |D²u| / (1 + sup |Du|²)`.
///
/// Non-control entries must satisfy `b ≥ 2(k−1)(a−1)`.
pub fn hessian_vs_gradient_audit(inputs: &[AuditInput<'_>]) -> Result<Vec<AuditRow>> {
    let mut rows = Vec::with_capacity(inputs.len());
    for input in inputs {
        let spec = input.spec;
        let field = input.field;
        if !input.control && spec.b < spec.irregular_threshold() {
            return Err(arg(format!(
                "b = {} is below the regular threshold {} for a = {}",
                spec.b,
                spec.irregular_threshold(),
                spec.a
            )));
        }
        if field.n != spec.n || field.k != spec.k {
            return Err(arg("field dimensions do not match the example"));
        }
        let grid = &field.grid;
        let mut max_hessian = 0.0f64;
        let mut max_gradient_sq = 0.0f64;
        for idx in 0..grid.num_unknowns() {
            let (i, j) = grid.node(idx);
            let hs = field.reduced_hessian(i, j)?;
            let spec_vals = hs.spectrum(field.n)?;
            let norm = spec_vals.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            max_hessian = max_hessian.max(norm);
            let (gr, gt) = field.gradient(i, j)?;
            max_gradient_sq = max_gradient_sq.max(gr * gr + gt * gt);
        }
        let gamma = 1.0 / (spec.k.get() as f64 - 1.0);
        let scan_h = field.h().max(1.0 / 256.0);
        let rhs_power_scan_ratio = power_smoothness_scan(spec, gamma, scan_h)?.ratio;
        rows.push(AuditRow {
            a: spec.a,
            b: spec.b,
            h: field.h(),
            control: input.control,
            max_hessian,
            max_gradient_sq,
            ratio: max_hessian / (1.0 + max_gradient_sq),
            rhs_power_scan_ratio,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmetric::ConeLevel;

    fn field<G: Fn(f64, f64) -> f64>(h: f64, f: G) -> DoublyRadialField {
        DoublyRadialField::from_fn(h, 3, ConeLevel::new(2).unwrap(), f).unwrap()
    }

    #[test]
    fn quadratic_is_monotone_with_min_at_origin() {
        let u = field(1.0 / 32.0, |r, t| 0.5 * (r * r + t * t - 1.0));
        let m = monotonicity_check(&u);
        assert!(m.monotonic_in_t && m.monotonic_in_r && m.min_at_origin);
    }

    #[test]
    fn two_convex_non_solution_fails_in_t() {
        let u = field(1.0 / 32.0, |r, t| 3.0 * r * r - t * t);
        let m = monotonicity_check(&u);
        assert!(!m.monotonic_in_t);
    }

    #[test]
    fn quadratic_growth_exponent_two() {
        let u = field(1.0 / 256.0, |r, t| 0.5 * (r * r + t * t - 1.0));
        let spec = ExampleSpec::real(3, 2, 3.0, 2.0).unwrap();
        let p = growth_profile(&u, &spec, 4).unwrap();
        assert!(p.s_below_ell && p.s_monotone);
        let fit = p.fit().unwrap();
        assert!((fit.exponent - 2.0).abs() < 0.05, "{}", fit.exponent);
        assert!(growth_profile(&u, &spec, 9).is_err());
    }

    #[test]
    fn quadratic_scan_is_flat() {
        let u = field(1.0 / 128.0, |r, t| 0.5 * (r * r + t * t - 1.0));
        let scan = c11_blowup_scan(&u, 5).unwrap();
        for l in &scan.levels {
            assert!((l.max_quotient - 1.0).abs() < 1e-8);
        }
        assert!(c11_blowup_scan(&u, 6).is_err());
    }
}
