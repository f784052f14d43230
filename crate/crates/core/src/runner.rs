//! Executes an [`ExperimentConfig`] and writes its artifacts.
//!
//! Every command writes `manifest.json` (config echo, version, seed),
//! `results.csv`, `report.json` and `summary.txt` into the output directory.
//! Solves add their fields under `field*/`. Wall-clock timings go to a separate
//! `timing.json` so the four main artifacts depend only on config and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_rational::Rational64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig, Rhs};
use crate::error::{Error, Result};
use crate::gallery::{exact, predict, ExampleSpec, Regime, RegularityPrediction, Variant};
use crate::probe::{regularity_report, RegularityReport, BLOWUP_FACTOR};
use crate::radial::{solve, write_field, DoublyRadialField, SolveReport};
use crate::suites::{algebra_suite, key_inequality_fuzz, INEQUALITY_TOL};
use crate::symmetric::{binomial, ConeLevel};

/// What a successful run printed to `summary.txt`.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: String,
}

struct Artifacts {
    csv: String,
    report: Value,
    summary: String,
    timing: Value,
}

/// Runs `cfg`, writing all artifacts to `out`.
///
/// Numerical failures still leave a manifest, a summary with the diagnostic
/// and whatever partial results were produced before the error is returned.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(out)?;
    write_manifest(cfg, out)?;
    let result = match cfg.command {
        Command::AlgebraSuite => run_algebra(cfg),
        Command::Solve => run_solve(cfg, out),
        Command::Probe => run_probe(cfg, out),
        Command::SharpnessSweep => run_sweep(cfg, out),
        Command::Predict => run_predict(cfg),
    };
    match result {
        Ok((art, None)) => {
            write_artifacts(out, &art)?;
            Ok(RunOutcome { summary: art.summary })
        }
        Ok((art, Some(err))) => {
            write_artifacts(out, &art)?;
            Err(err)
        }
        Err(err) => {
            let art = Artifacts {
                csv: String::new(),
                report: json!({ "status": "failed", "error": err.to_string() }),
                summary: format!("{} failed: {err}\n", cfg.command),
                timing: Value::Null,
            };
            write_artifacts(out, &art)?;
            Err(err)
        }
    }
}

/// Artifacts plus an error to report after they are written.
type Outcome = Result<(Artifacts, Option<Error>)>;

fn write_manifest(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let config: serde_json::Map<String, Value> =
        cfg.to_kv().iter().map(|(k, v)| (k.to_string(), Value::String(v.to_string()))).collect();
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command.name(),
        "seed": cfg.seed,
        "reproducible": cfg.reproducible,
        "config": config,
        "outputs": ["manifest.json", "results.csv", "report.json", "summary.txt"],
    });
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn write_artifacts(out: &Path, art: &Artifacts) -> Result<()> {
    fs::write(out.join("results.csv"), &art.csv)?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&art.report)? + "\n")?;
    fs::write(out.join("summary.txt"), &art.summary)?;
    if !art.timing.is_null() {
        fs::write(out.join("timing.json"), serde_json::to_string_pretty(&art.timing)? + "\n")?;
    }
    Ok(())
}

/// Serializes `value` without its `wall_time` entries, returning them separately.
fn split_timing<T: Serialize>(value: &T) -> Result<(Value, f64)> {
    let mut v = serde_json::to_value(value)?;
    let t = v.as_object_mut().and_then(|m| m.remove("wall_time")).and_then(|t| t.as_f64()).unwrap_or(f64::NAN);
    Ok((v, t))
}

fn run_algebra(cfg: &ExperimentConfig) -> Outcome {
    let start = std::time::Instant::now();
    let alg = algebra_suite(cfg.seed, cfg.suite.samples, cfg.suite.max_n)?;
    let key = key_inequality_fuzz(cfg.seed, cfg.suite.key_samples, cfg.suite.max_n)?;
    let mut csv = String::from("suite,property,checked,failures,worst,tolerance\n");
    let mut summary = format!("algebra suite, seed {}, {} spectra with n <= {}\n", cfg.seed, alg.samples, alg.max_n);
    for p in &alg.properties {
        let _ = writeln!(csv, "algebra,{},{},{},{:?},{:?}", p.name, p.checked, p.failures, p.worst, p.tolerance);
        let _ = writeln!(
            summary,
            "  {:<20} {:>7} checked  {:>3} failures  worst {:.3e} (tol {:.0e})  {}",
            p.name,
            p.checked,
            p.failures,
            p.worst,
            p.tolerance,
            if p.passed() { "PASS" } else { "FAIL" }
        );
    }
    let key_defect = (-key.worst_margin).max(0.0);
    let _ = writeln!(
        csv,
        "key-inequality,key-inequality,{},{},{:?},{:?}",
        key.checks, key.violations, key_defect, INEQUALITY_TOL
    );
    let _ = writeln!(
        summary,
        "key inequality: {} spectra accepted of {} drawn, {} (λ, p) pairs checked, {} violations, smallest margin {:.3e}  {}",
        key.accepted,
        key.attempts,
        key.checks,
        key.violations,
        key.worst_margin,
        if key.passed() { "PASS" } else { "FAIL" }
    );
    let passed = alg.passed() && key.passed();
    let report = json!({ "status": if passed { "passed" } else { "failed" }, "algebra": alg, "key_inequality": key });
    let err = (!passed).then(|| Error::Numerical("property suite reported failures".into()));
    let timing = json!({ "wall_time": start.elapsed().as_secs_f64() });
    Ok((Artifacts { csv, report, summary, timing }, err))
}

fn exact_quadratic_error(field: &DoublyRadialField, c: f64) -> f64 {
    let scale = (c / binomial(field.n, field.k.get())).powf(1.0 / field.k.get() as f64);
    let grid = &field.grid;
    let mut worst = 0.0f64;
    for idx in 0..grid.num_unknowns() {
        let (i, j) = grid.node(idx);
        let (r, t) = grid.coords(i, j);
        worst = worst.max((field.at(i, j) - scale * (r * r + t * t - 1.0) / 2.0).abs());
    }
    worst
}

const SOLVE_HEADER: &str = "n,k,h,unknowns,iterations,factorizations,continuation_steps,pseudo_transient_steps,final_residual,polynomial_residual,admissibility_slack,exact_error\n";

fn solve_row(cfg: &ExperimentConfig, report: &SolveReport, exact_error: f64) -> String {
    format!(
        "{},{},{:?},{},{},{},{},{},{:?},{:?},{:?},{:?}\n",
        cfg.example.n,
        cfg.example.k,
        cfg.solver.h.0,
        report.unknowns,
        report.iterations,
        report.factorizations,
        report.continuation_steps,
        report.pseudo_transient_steps,
        report.final_residual,
        report.polynomial_residual,
        report.admissibility_slack,
        exact_error
    )
}

fn real_ball_spec(cfg: &ExperimentConfig, b: f64) -> Result<ExampleSpec> {
    if cfg.example.variant != Variant::RealBall {
        return Err(Error::Config(format!(
            "the radial solver handles the real-ball variant only, got {}",
            cfg.example.variant
        )));
    }
    ExampleSpec::real(cfg.example.n, cfg.example.k, cfg.example.a, b).map_err(|e| Error::Config(e.to_string()))
}

/// Solves the configured problem; a non-converged solve is returned with its best iterate.
fn solve_configured(
    cfg: &ExperimentConfig,
    spec: &ExampleSpec,
) -> Result<(DoublyRadialField, SolveReport, Option<Error>)> {
    let k = ConeLevel::new(cfg.example.k).map_err(|e| Error::Config(e.to_string()))?;
    let opts = cfg.solve_options();
    let h = cfg.solver.h.0;
    let n = cfg.example.n;
    let outcome = match cfg.solver.rhs {
        Rhs::Gallery => solve(&|r, t| spec.rhs_radial(r, t), n, k, h, &opts),
        Rhs::Constant(c) => solve(&|_, _| c, n, k, h, &opts),
    };
    match outcome {
        Ok((field, report)) => Ok((field, report, None)),
        Err(Error::Convergence(fail)) => {
            let failure = *fail;
            let reason = failure.to_string();
            Ok((failure.field, failure.report, Some(Error::Numerical(reason))))
        }
        Err(Error::Argument(m)) | Err(Error::Resolution(m)) => Err(Error::Config(m)),
        Err(e) => Err(e),
    }
}

fn run_solve(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    let spec = real_ball_spec(cfg, cfg.example.b)?;
    let (field, report, err) = solve_configured(cfg, &spec)?;
    write_field(&out.join("field"), &field)?;
    let exact = match cfg.solver.rhs {
        Rhs::Constant(c) => exact_quadratic_error(&field, c),
        Rhs::Gallery => f64::NAN,
    };
    let csv = format!("{SOLVE_HEADER}{}", solve_row(cfg, &report, exact));
    let (mut rep, wall) = split_timing(&report)?;
    rep["status"] = json!(if err.is_none() { "converged" } else { "not-converged" });
    rep["exact_error"] = json!(if exact.is_nan() { None } else { Some(exact) });
    let mut summary = format!(
        "solve n={} k={} h={} rhs={}: {} after {} iterations, root residual {:.3e}, polynomial residual {:.3e}\n",
        cfg.example.n,
        cfg.example.k,
        cfg.solver.h,
        cfg.solver.rhs,
        if err.is_none() { "converged" } else { "NOT converged" },
        report.iterations,
        report.final_residual,
        report.polynomial_residual
    );
    if !exact.is_nan() {
        let _ = writeln!(summary, "sup error against the exact quadratic: {exact:.3e}");
    }
    if let Some(e) = &err {
        let _ = writeln!(summary, "diagnostic: {e}; the best iterate was written to field/");
    }
    Ok((Artifacts { csv, report: rep, summary, timing: json!({ "wall_time": wall }) }, err))
}

/// Dyadic levels available at spacing `h`: the largest `L` with `2^{−L} ≥ 4h`.
pub fn auto_levels(h: f64) -> usize {
    let mut levels = 0;
    while 0.5f64.powi(levels as i32 + 1) >= 4.0 * h - 1e-15 {
        levels += 1;
    }
    levels
}

fn probe_field(cfg: &ExperimentConfig, field: &DoublyRadialField, spec: &ExampleSpec) -> Result<RegularityReport> {
    let levels = cfg.probe.levels.unwrap_or_else(|| auto_levels(field.h()));
    regularity_report(field, spec, cfg.probe.m_max, levels).map_err(|e| match e {
        Error::Resolution(m) => Error::Config(format!("probe settings too fine for h: {m}")),
        other => other,
    })
}

fn run_probe(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    if cfg.solver.rhs != Rhs::Gallery {
        return Err(Error::Config("probe needs solver.rhs = gallery".into()));
    }
    let spec = real_ball_spec(cfg, cfg.example.b)?;
    let (field, report, err) = solve_configured(cfg, &spec)?;
    write_field(&out.join("field"), &field)?;
    let (solve_json, wall) = split_timing(&report)?;
    if let Some(e) = err {
        let summary = format!("probe: solve did not converge: {e}\n");
        let report = json!({ "status": "not-converged", "solve": solve_json });
        return Ok((
            Artifacts { csv: String::new(), report, summary, timing: json!({ "wall_time": wall }) },
            Some(e),
        ));
    }
    let reg = probe_field(cfg, &field, &spec)?;
    let summary = format!(
        "probe a={} b={} h={}: θ predicted {:.4}, fitted {:.4} ({}), blow-up ratios {}, verdict {:?}, monotone in t {} in r {}\n",
        spec.a,
        spec.b,
        cfg.solver.h,
        reg.theta_predicted,
        reg.fitted_growth_exponent,
        if reg.growth_fit_used_contacts { "contacts" } else { "all radii" },
        fmt_list(&reg.c11_blowup_ratio),
        reg.verdict,
        reg.monotonic_in_t,
        reg.monotonic_in_r
    );
    let report = json!({ "status": "converged", "solve": solve_json, "regularity": reg });
    Ok((Artifacts { csv: reg.to_csv(), report, summary, timing: json!({ "wall_time": wall }) }, None))
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", items.join(", "))
}

const SWEEP_HEADER: &str = "a,b,regime,theta_predicted,theta_fitted,used_contacts,max_ratio,longest_run_above_1.5,verdict,monotonic_in_t,monotonic_in_r,iterations,final_residual\n";

fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    if cfg.solver.rhs != Rhs::Gallery {
        return Err(Error::Config("sharpness-sweep needs solver.rhs = gallery".into()));
    }
    let mut points = Vec::new();
    for &a in &cfg.sweep.a {
        for b in &cfg.sweep.b {
            let mut c = cfg.clone();
            c.example.a = a;
            let spec = real_ball_spec(&c, b.resolve(cfg.example.k, a))?;
            points.push((c, spec));
        }
    }
    let results: Vec<Result<(SolveReport, Option<RegularityReport>, Option<Error>)>> = points
        .par_iter()
        .map(|(c, spec)| {
            let (field, report, err) = solve_configured(c, spec)?;
            let dir = out.join(format!("field_a{}_b{}", spec.a, spec.b));
            write_field(&dir, &field)?;
            if err.is_some() {
                return Ok((report, None, err));
            }
            Ok((report, Some(probe_field(c, &field, spec)?), None))
        })
        .collect();

    let mut csv = String::from(SWEEP_HEADER);
    let mut summary = format!(
        "sharpness sweep n={} k={} h={}\n{:>5} {:>6} {:>14} {:>8} {:>8} {:>9} {:>22}\n",
        cfg.example.n, cfg.example.k, cfg.solver.h, "a", "b", "regime", "θ pred", "θ fit", "max ratio", "verdict"
    );
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut wall = Vec::new();
    for ((_, spec), res) in points.iter().zip(results) {
        let regime = predict(spec, None)?.regime;
        let (report, reg, err) = res?;
        let (solve_json, t) = split_timing(&report)?;
        wall.push(json!({ "a": spec.a, "b": spec.b, "wall_time": t }));
        match (&reg, &err) {
            (Some(reg), _) => {
                let max_ratio = reg.c11_blowup_ratio.iter().cloned().fold(f64::NAN, f64::max);
                let verdict = serde_json::to_value(reg.verdict)?;
                let verdict = verdict.as_str().unwrap_or("?");
                let _ = writeln!(
                    csv,
                    "{:?},{:?},{regime},{:?},{:?},{},{:?},{},{verdict},{},{},{},{:?}",
                    spec.a,
                    spec.b,
                    reg.theta_predicted,
                    reg.fitted_growth_exponent,
                    reg.growth_fit_used_contacts,
                    max_ratio,
                    reg.scan.longest_run_above(BLOWUP_FACTOR),
                    reg.monotonic_in_t,
                    reg.monotonic_in_r,
                    report.iterations,
                    report.final_residual
                );
                let _ = writeln!(
                    summary,
                    "{:>5} {:>6} {:>14} {:>8.4} {:>8.4} {:>9.3} {:>22}",
                    spec.a, spec.b, regime.to_string(), reg.theta_predicted, reg.fitted_growth_exponent, max_ratio, verdict
                );
            }
            (None, Some(e)) => {
                let _ = writeln!(
                    csv,
                    "{:?},{:?},{regime},{:?},NaN,false,NaN,0,solve-failed,false,false,{},{:?}",
                    spec.a,
                    spec.b,
                    spec.theta(),
                    report.iterations,
                    report.final_residual
                );
                let _ = writeln!(summary, "{:>5} {:>6} {:>14} solve failed: {e}", spec.a, spec.b, regime.to_string());
                failures.push(format!("a={} b={}: {e}", spec.a, spec.b));
            }
            (None, None) => unreachable!("a converged solve always carries a probe report"),
        }
        rows.push(json!({ "a": spec.a, "b": spec.b, "regime": regime, "solve": solve_json, "regularity": reg }));
    }
    let err = (!failures.is_empty())
        .then(|| Error::Numerical(format!("{} sweep point(s) failed: {}", failures.len(), failures.join("; "))));
    let report = json!({ "status": if err.is_none() { "completed" } else { "partial" }, "points": rows });
    Ok((Artifacts { csv, report, summary, timing: json!({ "points": wall }) }, err))
}

fn rational(x: f64) -> Option<Rational64> {
    let r = Rational64::approximate_float(x)?;
    (*r.numer() as f64 / *r.denom() as f64 == x && r.denom().abs() <= 1 << 20).then_some(r)
}

fn fmt_rational(r: Rational64) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Exact `θ` and the regime closed form, when the inputs are representable rationals.
fn exact_prediction(spec: &ExampleSpec, pred: &RegularityPrediction) -> (Option<Rational64>, Option<Rational64>) {
    let k = spec.k.get() as i64;
    let (Some(a), Some(b)) = (rational(spec.a), rational(spec.b)) else { return (None, None) };
    let theta = exact::theta(a, b, k);
    let closed = match pred.regime {
        Regime::LpOnly => pred.case_parameter.and_then(rational).map(|p| exact::theta_lp(a, p, k)),
        Regime::HolderRhs => Some(exact::theta_holder(a, k)),
        Regime::LipschitzPower => Some(exact::theta_lipschitz(a, k)),
        Regime::C11Power => Some(exact::theta_c11(a, k)),
        Regime::NotC11 | Regime::Unobstructed => None,
    };
    (Some(theta), closed)
}

fn run_predict(cfg: &ExperimentConfig) -> Outcome {
    let spec = cfg.example_spec()?;
    let pred = predict(&spec, cfg.example.gamma.or(cfg.example.p)).map_err(|e| Error::Config(e.to_string()))?;
    let (theta_exact, closed_exact) = exact_prediction(&spec, &pred);
    let show = |x: f64, r: Option<Rational64>| r.map_or(format!("{x:?}"), fmt_rational);
    let mut csv = String::from("quantity,value,exact\n");
    let opt = |r: Option<Rational64>| r.map_or(String::new(), fmt_rational);
    let _ = writeln!(csv, "theta,{:?},{}", pred.theta, opt(theta_exact));
    if let Some(c) = pred.theta_closed_form {
        let _ = writeln!(csv, "theta_closed_form,{c:?},{}", opt(closed_exact));
    }
    let _ = writeln!(csv, "gamma_c11,{:?},", pred.gamma_c11);
    let _ = writeln!(csv, "irregular_threshold,{:?},", spec.irregular_threshold());
    let _ = writeln!(csv, "regime,{},", pred.regime);
    let mut summary = format!(
        "n={} k={} a={} b={} ({}): θ = {}\n",
        spec.n,
        spec.k.get(),
        spec.a,
        spec.b,
        spec.variant,
        show(pred.theta, theta_exact)
    );
    let _ = writeln!(summary, "regime: {}", pred.regime);
    if let Some(c) = pred.theta_closed_form {
        let _ = writeln!(summary, "regime closed form: θ = {}", show(c, closed_exact));
    }
    if !pred.notes.is_empty() {
        let _ = writeln!(summary, "notes: {}", pred.notes);
    }
    let report = json!({
        "status": "ok",
        "prediction": pred,
        "theta_exact": theta_exact.map(fmt_rational),
        "theta_closed_form_exact": closed_exact.map(fmt_rational),
    });
    Ok((Artifacts { csv, report, summary, timing: Value::Null }, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_fit_the_grid() {
        assert_eq!(auto_levels(1.0 / 512.0), 7);
        assert_eq!(auto_levels(1.0 / 128.0), 5);
        assert_eq!(auto_levels(1.0 / 16.0), 2);
    }

    #[test]
    fn rationals_round_trip() {
        assert_eq!(rational(1.75), Some(Rational64::new(7, 4)));
        assert_eq!(rational(-2.0), Some(Rational64::from_integer(-2)));
        assert_eq!(rational(std::f64::consts::PI), None);
    }
}
