//! Acceptance criteria, one test each. Every test prints a `criterion N` line
//! with PASS or FAIL and the measured quantities.
//!
//! Two sub-criteria are reported but not asserted because they cannot hold
//! for a correct implementation at this resolution: the error ratio of the
//! constant-datum problem (the discrete solution is exact, so both errors are
//! roundoff) and three consecutive annulus ratios of 1.5 at `h = 1/512` (the
//! model growth `ρ^θ` gives a ratio of `2^{2−θ} ≈ 1.26` per level).

use std::sync::OnceLock;
use std::time::Instant;

use num_rational::Rational64;

use khessian::gallery::{
    barrier, barrier_c2, exact, fubini_study_total_volume, measure_c1, normalization_constant,
    normalized_integral_monte_carlo, predict, ExampleSpec, Variant,
};
use khessian::probe::{
    c11_blowup_scan, hessian_vs_gradient_audit, monotonicity_check, regularity_report, AuditInput,
};
use khessian::radial::{solve, DoublyRadialField, SolveOptions};
use khessian::rng::derive_rng;
use khessian::runner::auto_levels;
use khessian::suites::{algebra_suite, key_inequality_fuzz};
use khessian::symmetric::ConeLevel;

const SEED: u64 = 42;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn report(id: &str, ok: bool, detail: String) {
    println!("criterion {id}: {} ({detail})", verdict(ok));
}

struct Solved {
    spec: ExampleSpec,
    field: DoublyRadialField,
}

fn solve_gallery(b: f64, inv_h: u32) -> Solved {
    let spec = ExampleSpec::real(3, 2, 3.0, b).unwrap();
    let opts = SolveOptions { tol: 1e-6, ..Default::default() };
    let f = |r: f64, t: f64| spec.rhs_radial(r, t);
    let start = Instant::now();
    let (field, rep) = solve(&f, 3, spec.k, 1.0 / inv_h as f64, &opts).unwrap();
    println!(
        "solved a=3 b={b} h=1/{inv_h}: residual {:.2e} (threshold {:.2e}), {} iterations, {:.1} s",
        rep.final_residual,
        rep.effective_tol,
        rep.iterations,
        start.elapsed().as_secs_f64()
    );
    Solved { spec, field }
}

fn irregular_512() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| solve_gallery(2.0, 512))
}

fn regular_512() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| solve_gallery(5.0, 512))
}

fn regular_256() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| solve_gallery(5.0, 256))
}

#[test]
fn criterion_1_algebra_suite() {
    let start = Instant::now();
    let rep = algebra_suite(SEED, 10_000, 6).unwrap();
    let secs = start.elapsed().as_secs_f64();
    for p in &rep.properties {
        println!("  {}: {} checked, {} failures, worst {:.2e} (tolerance {:.0e})", p.name, p.checked, p.failures, p.worst, p.tolerance);
    }
    let ok = rep.passed() && secs < 30.0;
    report("1 algebra suite", ok, format!("{} samples, {secs:.1} s", rep.samples));
    assert!(ok);
}

#[test]
fn criterion_2_key_inequality_fuzz() {
    let start = Instant::now();
    let rep = key_inequality_fuzz(SEED, 10_000, 6).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = rep.accepted >= 10_000 && rep.violations == 0 && secs < 60.0;
    report(
        "2 key inequality",
        ok,
        format!(
            "{} spectra accepted of {} drawn, {} checks, {} violations, tightest margin {:.3}, {secs:.1} s",
            rep.accepted, rep.attempts, rep.checks, rep.violations, rep.worst_margin
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_3_manufactured_solution() {
    let start = Instant::now();
    let k = ConeLevel::new(2).unwrap();
    let opts = SolveOptions { tol: 1e-10, ..Default::default() };
    let error = |inv_h: u32| {
        let (u, _) = solve(&|_, _| 3.0, 3, k, 1.0 / inv_h as f64, &opts).unwrap();
        let g = &u.grid;
        (0..g.num_unknowns())
            .map(|idx| {
                let (i, j) = g.node(idx);
                let (r, t) = g.coords(i, j);
                (u.at(i, j) - 0.5 * (r * r + t * t - 1.0)).abs()
            })
            .fold(0.0, f64::max)
    };
    let e64 = error(64);
    let e128 = error(128);
    let secs = start.elapsed().as_secs_f64();
    let ok_error = e128 <= 5e-3 && secs < 300.0;
    report("3a constant-datum error", ok_error, format!("sup error {e128:.2e} at h = 1/128, {secs:.1} s"));
    let ratio = e64 / e128;
    report(
        "3b constant-datum error ratio (not asserted)",
        ratio >= 3.0,
        format!("{e64:.2e} / {e128:.2e} = {ratio:.2}; the quadratic is reproduced exactly, so both errors are roundoff"),
    );
    assert!(ok_error);
}

#[test]
fn criterion_4_exponent_cross_checks() {
    let r = Rational64::from_integer;
    let start = Instant::now();
    // closed forms written out independently of the library
    let closed_c11 = |a: i64, k: i64| r(2) - r(2) * (Rational64::new(1, a) - Rational64::new(1, k * a));
    let closed_lp = |a: i64, p: i64, k: i64| Rational64::new(2, k) * (r(1) - Rational64::new(1, p)) + Rational64::new(2, a);
    let via_general = exact::theta(r(4), r(4), 2);
    let b_lp = exact::b_lp(r(4), r(2));
    let via_lp = exact::theta(r(4), b_lp, 2);
    let float = predict(&ExampleSpec::real(3, 2, 4.0, 4.0).unwrap(), None).unwrap();
    let ok = via_general == Rational64::new(7, 4)
        && via_general == closed_c11(4, 2)
        && b_lp == r(-2)
        && via_lp == r(1)
        && via_lp == closed_lp(4, 2, 2)
        && (float.theta - 1.75).abs() < 1e-15
        && start.elapsed().as_secs_f64() < 1.0;
    report("4 exponents", ok, format!("θ(4,4,2) = {via_general}, θ(a=4,p=2,k=2) = {via_lp} with b = {b_lp}"));
    assert!(ok);
}

#[test]
fn criterion_5_sharpness() {
    let start = Instant::now();
    let irr = irregular_512();
    let h = irr.field.h();
    let levels = auto_levels(h);
    let rep = regularity_report(&irr.field, &irr.spec, 5, levels).unwrap();
    let run = rep.scan.longest_run_above(1.5);
    let ratios: Vec<String> = rep.c11_blowup_ratio.iter().map(|r| format!("{r:.3}")).collect();
    report(
        "5a blow-up ratios ≥ 1.5 on 3 consecutive levels (not asserted)",
        run >= 3,
        format!("ratios [{}], longest run {run}", ratios.join(", ")),
    );
    let theta = irr.spec.theta();
    let ok_growth = rep.growth_fit_used_contacts && rep.fitted_growth_exponent <= theta + 0.2;
    report(
        "5b growth exponent",
        ok_growth,
        format!("fitted {:.3} over contacts (used: {}), θ + 0.2 = {:.3}", rep.fitted_growth_exponent, rep.growth_fit_used_contacts, theta + 0.2),
    );

    let fine = regular_512();
    let coarse = regular_256();
    let control = c11_blowup_scan(&fine.field, levels).unwrap();
    let ok_control = control.ratios.iter().all(|&r| r <= 1.3);
    let ratios: Vec<String> = control.ratios.iter().map(|r| format!("{r:.3}")).collect();
    report("5c regular control ratios ≤ 1.3", ok_control, format!("b = 5: [{}]", ratios.join(", ")));
    let rows = hessian_vs_gradient_audit(&[
        AuditInput { field: &coarse.field, spec: &coarse.spec, control: false },
        AuditInput { field: &fine.field, spec: &fine.spec, control: false },
    ])
    .unwrap();
    let change = (rows[1].ratio / rows[0].ratio - 1.0).abs();
    let secs = start.elapsed().as_secs_f64();
    let ok_audit = change <= 0.2 && secs < 1800.0;
    report(
        "5d audit refinement stability",
        ok_audit,
        format!("ratio {:.4} at h = 1/256, {:.4} at h = 1/512, change {:.1}%, {secs:.0} s with solves", rows[0].ratio, rows[1].ratio, 100.0 * change),
    );
    assert!(ok_growth && ok_control && ok_audit);
}

#[test]
fn criterion_6_monotonicity() {
    let fields = [("b=2 h=1/512", irregular_512()), ("b=5 h=1/512", regular_512()), ("b=5 h=1/256", regular_256())];
    let start = Instant::now();
    let mut ok = true;
    for (name, s) in fields {
        let m = monotonicity_check(&s.field);
        println!("  {name}: in t {}, in r {}, min at origin {}, worst {:.2e} (tolerance {:.2e})", m.monotonic_in_t, m.monotonic_in_r, m.min_at_origin, m.worst_violation, m.tolerance);
        ok &= m.monotonic_in_t && m.monotonic_in_r;
    }
    let saddle = DoublyRadialField::from_fn(1.0 / 64.0, 3, ConeLevel::new(2).unwrap(), |r, t| 3.0 * r * r - t * t).unwrap();
    let control = monotonicity_check(&saddle);
    ok &= !control.monotonic_in_t;
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    report("6 monotonicity", ok, format!("3r² − t² monotone in t: {}, {secs:.2} s beyond solves", control.monotonic_in_t));
    assert!(ok);
}

#[test]
fn criterion_7_barrier_chain() {
    let irr = irregular_512();
    let start = Instant::now();
    let spec = &irr.spec;
    let epsilons = [0.2, 0.1, 0.05];
    let c1 = measure_c1(spec, &epsilons).unwrap();
    let c1_max = c1.scaled.iter().cloned().fold(0.0, f64::max);
    let c2 = barrier_c2(spec, c1_max);
    let u = &irr.field;
    let tol = 1e-8 * u.oscillation();
    let mut rng = derive_rng(SEED, "acceptance-barrier");
    let mut ok = c1.spread <= 0.1;
    for &eps in &epsilons {
        let bar = barrier(spec, eps).unwrap();
        let check = bar.check(20_000, &mut rng);
        // u is non-decreasing in r and t, so its supremum over P sits at the far corner
        let sup_p = u.interpolate(eps.powf(1.0 / spec.a), eps);
        let scale = c2 * eps.powf(bar.exponent());
        let g = &u.grid;
        let mut nodes = 0;
        let mut margin = f64::INFINITY;
        for idx in 0..g.num_unknowns() {
            let (i, j) = g.node(idx);
            let (r, t) = g.coords(i, j);
            let x = [r, 0.0, t];
            if !bar.in_e(&x) {
                continue;
            }
            nodes += 1;
            margin = margin.min(scale * bar.value(&x) + sup_p - u.at(i, j));
        }
        let ok_eps = check.contained && check.inf_f_sampled >= check.inf_f_bound && nodes > 0 && margin >= -tol;
        println!(
            "  ε = {eps}: E ⊂ P {}, inf_E F sampled {:.3e} ≥ {:.3e}, comparison margin {margin:.3e} over {nodes} nodes",
            check.contained, check.inf_f_sampled, check.inf_f_bound
        );
        ok &= ok_eps;
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    let scaled: Vec<String> = c1.scaled.iter().map(|s| format!("{s:.1}")).collect();
    report("7 barrier chain", ok, format!("scaled sup S_k [{}], spread {:.1e}, c₂ = {c2:.3e}, {secs:.1} s", scaled.join(", "), c1.spread));
    assert!(ok);
}

#[test]
fn criterion_8_probe_calibration() {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for gamma in [1.5f64, 1.75, 1.9] {
        let u = DoublyRadialField::from_fn(1.0 / 512.0, 3, ConeLevel::new(2).unwrap(), |r, t| r.hypot(t).powf(gamma) - 1.0)
            .unwrap();
        let slope = c11_blowup_scan(&u, 7).unwrap().slope();
        let expected = gamma - 2.0;
        ok &= (slope - expected).abs() <= 0.05 * expected.abs();
        detail.push(format!("γ = {gamma}: slope {slope:.4} vs {expected}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 10.0;
    report("8 probe calibration", ok, format!("{}, {secs:.2} s", detail.join("; ")));
    assert!(ok);
}

#[test]
fn criterion_9_normalization() {
    let start = Instant::now();
    let mut ok = true;
    let exact_volume = 2.0 * std::f64::consts::PI.powi(2);
    for (k, a, b) in [(2usize, 3.0, 2.0), (2, 4.0, 4.0), (2, 3.0, 5.0)] {
        let spec = ExampleSpec::new(2, k, a, b, Variant::CompactProduct).unwrap();
        let norm = normalization_constant(&spec, 6).unwrap();
        let vol_err = (norm.total_volume / fubini_study_total_volume(2) - 1.0).abs();
        let oracle_err = (fubini_study_total_volume(2) / exact_volume - 1.0).abs();
        // A from one quadrature level, integrals from an independent finer one
        let check = normalization_constant(&spec, 8).unwrap();
        let renormalized = norm.a_norm * check.raw_integral / check.total_volume;
        let mut rng = derive_rng(SEED, &format!("acceptance-normalization-{k}-{a}-{b}"));
        let mc = normalized_integral_monte_carlo(&spec, norm.a_norm, 400_000, &mut rng);
        let z = (mc.mean - 1.0).abs() / mc.std_error;
        let ok_spec = vol_err <= 1e-8
            && oracle_err <= 1e-15
            && (renormalized - 1.0).abs() <= 1e-6
            && norm.richardson_change <= 1e-6
            && z <= 3.0;
        println!(
            "  k={k} a={a} b={b}: A = {:.6e}, volume error {vol_err:.1e}, renormalized {renormalized:.9}, level change {:.1e}, Monte Carlo {:.4} ± {:.4} ({z:.2} SE)",
            norm.a_norm, norm.richardson_change, mc.mean, mc.std_error
        );
        ok &= ok_spec;
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 120.0;
    report("9 normalization", ok, format!("{secs:.1} s"));
    assert!(ok);
}
