//! Experiment configuration.
//!
//! A run is described by flat `key = value` text with dotted namespaces
//! (`solver.h`, `example.a`, `probe.levels`, ...). Every key has an explicit
//! default, [`ExperimentConfig::to_kv`] writes all of them, and unknown keys are
//! rejected. The short keys `n, k, a, b, variant, gamma, p, h, tol, scheme,
//! max_iter, rhs` are accepted as aliases of their namespaced forms.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gallery::{ExampleSpec, Variant};
use crate::kv::KvMap;
use crate::radial::{Scheme, SolveOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    AlgebraSuite,
    Solve,
    Probe,
    SharpnessSweep,
    Predict,
}

impl Command {
    pub const ALL: [Command; 5] =
        [Command::AlgebraSuite, Command::Solve, Command::Probe, Command::SharpnessSweep, Command::Predict];

    pub fn name(self) -> &'static str {
        match self {
            Command::AlgebraSuite => "algebra-suite",
            Command::Solve => "solve",
            Command::Probe => "probe",
            Command::SharpnessSweep => "sharpness-sweep",
            Command::Predict => "predict",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command `{s}`")))
    }
}

/// Right-hand side of the Dirichlet problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Rhs {
    /// The gallery datum of the `example.*` keys.
    Gallery,
    Constant(f64),
}

impl fmt::Display for Rhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rhs::Gallery => f.write_str("gallery"),
            Rhs::Constant(c) => write!(f, "constant:{c:?}"),
        }
    }
}

impl FromStr for Rhs {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "gallery" {
            return Ok(Rhs::Gallery);
        }
        let value = s
            .strip_prefix("constant:")
            .ok_or_else(|| Error::Config(format!("rhs must be `gallery` or `constant:<value>`, got `{s}`")))?;
        let c: f64 = value.trim().parse().map_err(|e| Error::Config(format!("rhs constant `{value}`: {e}")))?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("rhs constant must be positive, got {c}")));
        }
        Ok(Rhs::Constant(c))
    }
}

/// A sweep value of `b`, either literal or placed relative to `2(k−1)(a−1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SweepB {
    /// Half the threshold.
    Below,
    /// The threshold plus one.
    Above,
    Value(f64),
}

impl SweepB {
    pub fn resolve(self, k: usize, a: f64) -> f64 {
        let threshold = 2.0 * (k as f64 - 1.0) * (a - 1.0);
        match self {
            SweepB::Below => threshold / 2.0,
            SweepB::Above => threshold + 1.0,
            SweepB::Value(b) => b,
        }
    }
}

impl fmt::Display for SweepB {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepB::Below => f.write_str("below"),
            SweepB::Above => f.write_str("above"),
            SweepB::Value(b) => write!(f, "{b:?}"),
        }
    }
}

impl FromStr for SweepB {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "below" => Ok(SweepB::Below),
            "above" => Ok(SweepB::Above),
            _ => s
                .parse()
                .map(SweepB::Value)
                .map_err(|_| Error::Config(format!("sweep b entry `{s}` is not `below`, `above` or a number"))),
        }
    }
}

/// A grid spacing written either as a decimal or as `1/N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Spacing(pub f64);

impl fmt::Display for Spacing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inv = 1.0 / self.0;
        if inv.fract() == 0.0 && inv < 1e9 {
            write!(f, "1/{}", inv as u64)
        } else {
            write!(f, "{:?}", self.0)
        }
    }
}

impl FromStr for Spacing {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v = match s.split_once('/') {
            Some((p, q)) => {
                let p: f64 = p.trim().parse().map_err(|e| format!("{e}"))?;
                let q: f64 = q.trim().parse().map_err(|e| format!("{e}"))?;
                p / q
            }
            None => s.parse().map_err(|e| format!("{e}"))?,
        };
        if v > 0.0 && v.is_finite() {
            Ok(Spacing(v))
        } else {
            Err(format!("spacing must be positive, got {v}"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverSection {
    pub h: Spacing,
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: Scheme,
    pub slack: f64,
    pub rhs: Rhs,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExampleSection {
    pub n: usize,
    pub k: usize,
    pub a: f64,
    pub b: f64,
    pub variant: Variant,
    pub gamma: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeSection {
    /// Dyadic annuli in the blow-up scan; `None` takes as many as the grid allows.
    pub levels: Option<usize>,
    /// Probe radii `ε_0 2^{−m}` for `m ≤ m_max`.
    pub m_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSection {
    pub a: Vec<f64>,
    pub b: Vec<SweepB>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteSection {
    pub samples: usize,
    pub key_samples: usize,
    pub max_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub reproducible: bool,
    pub output_dir: PathBuf,
    pub solver: SolverSection,
    pub example: ExampleSection,
    pub probe: ProbeSection,
    pub sweep: SweepSection,
    pub suite: SuiteSection,
}

const ALIASES: [(&str, &str); 12] = [
    ("n", "example.n"),
    ("k", "example.k"),
    ("a", "example.a"),
    ("b", "example.b"),
    ("variant", "example.variant"),
    ("gamma", "example.gamma"),
    ("p", "example.p"),
    ("h", "solver.h"),
    ("tol", "solver.tol"),
    ("scheme", "solver.scheme"),
    ("max_iter", "solver.max_iter"),
    ("rhs", "solver.rhs"),
];

fn optional(kv: &mut KvMap, key: &str) -> Result<Option<f64>> {
    match kv.take(key) {
        None => Ok(None),
        Some(v) if v == "none" => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{v}`: {e}"))),
    }
}

fn list<T: FromStr>(kv: &mut KvMap, key: &str, default: Vec<T>) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let Some(text) = kv.take(key) else { return Ok(default) };
    let items: Vec<T> = text
        .split(',')
        .map(|s| s.trim().parse().map_err(|e| Error::Config(format!("key `{key}`: `{s}`: {e}"))))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("key `{key}` is empty")));
    }
    Ok(items)
}

/// The raw entries of a config file or of the `config` object of a manifest.
pub fn load_kv(path: &Path) -> Result<KvMap> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if !text.trim_start().starts_with('{') {
        return KvMap::parse(&text);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let entries = manifest
        .get("config")
        .and_then(|c| c.as_object())
        .ok_or_else(|| Error::Config(format!("{}: no `config` object", path.display())))?;
    let mut kv = KvMap::new();
    for (key, value) in entries {
        let v = value.as_str().ok_or_else(|| Error::Config(format!("manifest key `{key}` is not a string")))?;
        kv.insert(key.clone(), v);
    }
    Ok(kv)
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: Command::AlgebraSuite,
            seed: 42,
            reproducible: false,
            output_dir: PathBuf::from("out"),
            solver: SolverSection {
                h: Spacing(1.0 / 128.0),
                tol: 1e-6,
                max_iter: 500,
                scheme: Scheme::Newton,
                slack: 1e-8,
                rhs: Rhs::Gallery,
            },
            example: ExampleSection { n: 3, k: 2, a: 3.0, b: 2.0, variant: Variant::RealBall, gamma: None, p: None },
            probe: ProbeSection { levels: None, m_max: 5 },
            sweep: SweepSection { a: vec![3.0, 4.0, 5.0], b: vec![SweepB::Below, SweepB::Above] },
            suite: SuiteSection { samples: 10_000, key_samples: 10_000, max_n: 6 },
        }
    }
}

impl ExperimentConfig {
    /// Reads the keys of `kv` over the defaults and rejects anything left over.
    pub fn from_kv(mut kv: KvMap) -> Result<Self> {
        for (short, long) in ALIASES {
            if let Some(v) = kv.take(short) {
                if kv.get(long).is_some() {
                    return Err(Error::Config(format!("both `{short}` and `{long}` given")));
                }
                kv.insert(long, v);
            }
        }
        let d = Self::default();
        let command = match kv.take("command") {
            Some(c) => c.parse()?,
            None => d.command,
        };
        let levels = match kv.take("probe.levels").as_deref() {
            None | Some("auto") => None,
            Some(v) => Some(v.parse().map_err(|e| Error::Config(format!("key `probe.levels`: `{v}`: {e}")))?),
        };
        let cfg = Self {
            command,
            seed: kv.take_or("seed", d.seed)?,
            reproducible: kv.take_or("reproducible", d.reproducible)?,
            output_dir: kv.take("output_dir").map(PathBuf::from).unwrap_or(d.output_dir),
            solver: SolverSection {
                h: kv.take_or("solver.h", d.solver.h)?,
                tol: kv.take_or("solver.tol", d.solver.tol)?,
                max_iter: kv.take_or("solver.max_iter", d.solver.max_iter)?,
                scheme: match kv.take("solver.scheme") {
                    Some(s) => s.parse()?,
                    None => d.solver.scheme,
                },
                slack: kv.take_or("solver.slack", d.solver.slack)?,
                rhs: match kv.take("solver.rhs") {
                    Some(s) => s.parse()?,
                    None => d.solver.rhs,
                },
            },
            example: ExampleSection {
                n: kv.take_or("example.n", d.example.n)?,
                k: kv.take_or("example.k", d.example.k)?,
                a: kv.take_or("example.a", d.example.a)?,
                b: kv.take_or("example.b", d.example.b)?,
                variant: kv.take_or("example.variant", d.example.variant)?,
                gamma: optional(&mut kv, "example.gamma")?,
                p: optional(&mut kv, "example.p")?,
            },
            probe: ProbeSection { levels, m_max: kv.take_or("probe.m_max", d.probe.m_max)? },
            sweep: SweepSection { a: list(&mut kv, "sweep.a", d.sweep.a)?, b: list(&mut kv, "sweep.b", d.sweep.b)? },
            suite: SuiteSection {
                samples: kv.take_or("suite.samples", d.suite.samples)?,
                key_samples: kv.take_or("suite.key_samples", d.suite.key_samples)?,
                max_n: kv.take_or("suite.max_n", d.suite.max_n)?,
            },
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(KvMap::parse(text)?)
    }

    /// Reads either flat config text or the `config` object of an emitted manifest.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(load_kv(path)?)
    }

    fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if !(self.solver.tol > 0.0) {
            return cfg_err(format!("solver.tol must be positive, got {}", self.solver.tol));
        }
        if !(self.solver.slack >= 0.0) {
            return cfg_err(format!("solver.slack must be non-negative, got {}", self.solver.slack));
        }
        if self.solver.max_iter == 0 {
            return cfg_err("solver.max_iter must be positive".into());
        }
        if !(2..=16).contains(&self.suite.max_n) {
            return cfg_err(format!("suite.max_n = {} outside 2..=16", self.suite.max_n));
        }
        if self.probe.m_max < 2 {
            return cfg_err("probe.m_max must be at least 2".into());
        }
        self.example_spec()?;
        Ok(())
    }

    pub fn example_spec(&self) -> Result<ExampleSpec> {
        let e = &self.example;
        ExampleSpec::new(e.n, e.k, e.a, e.b, e.variant).map_err(|err| Error::Config(err.to_string()))
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            admissibility_slack: self.solver.slack,
            scheme: self.solver.scheme,
            reproducible: self.reproducible,
        }
    }

    /// Every key with its value, defaults included.
    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.insert("command", self.command);
        kv.insert("seed", self.seed);
        kv.insert("reproducible", self.reproducible);
        kv.insert("output_dir", self.output_dir.display());
        kv.insert("solver.h", self.solver.h);
        kv.insert("solver.tol", format!("{:?}", self.solver.tol));
        kv.insert("solver.max_iter", self.solver.max_iter);
        kv.insert("solver.scheme", self.solver.scheme);
        kv.insert("solver.slack", format!("{:?}", self.solver.slack));
        kv.insert("solver.rhs", self.solver.rhs);
        kv.insert("example.n", self.example.n);
        kv.insert("example.k", self.example.k);
        kv.insert("example.a", format!("{:?}", self.example.a));
        kv.insert("example.b", format!("{:?}", self.example.b));
        kv.insert("example.variant", self.example.variant);
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:?}"));
        kv.insert("example.gamma", opt(self.example.gamma));
        kv.insert("example.p", opt(self.example.p));
        kv.insert("probe.levels", self.probe.levels.map_or("auto".to_string(), |l| l.to_string()));
        kv.insert("probe.m_max", self.probe.m_max);
        kv.insert("sweep.a", join(&self.sweep.a.iter().map(|a| format!("{a:?}")).collect::<Vec<_>>()));
        kv.insert("sweep.b", join(&self.sweep.b));
        kv.insert("suite.samples", self.suite.samples);
        kv.insert("suite.key_samples", self.suite.key_samples);
        kv.insert("suite.max_n", self.suite.max_n);
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&cfg.to_kv().to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn short_keys_are_aliases() {
        let cfg = ExperimentConfig::parse("command = solve\nn = 3\nk = 2\nh = 1/64\nrhs = constant:3\ntol = 1e-9").unwrap();
        assert_eq!(cfg.command, Command::Solve);
        assert_eq!(cfg.solver.h, Spacing(1.0 / 64.0));
        assert_eq!(cfg.solver.rhs, Rhs::Constant(3.0));
        assert_eq!(cfg.solver.tol, 1e-9);
        assert!(ExperimentConfig::parse("h = 1/64\nsolver.h = 1/32").is_err());
    }

    #[test]
    fn unknown_and_malformed_keys_are_config_errors() {
        for text in ["solver.hh = 1", "command = nope", "solver.rhs = constant:-1", "example.k = 7", "sweep.b = sideways"] {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn sweep_b_placement() {
        assert_eq!(SweepB::Below.resolve(2, 3.0), 2.0);
        assert_eq!(SweepB::Above.resolve(2, 3.0), 5.0);
        assert_eq!(SweepB::Value(1.5).resolve(2, 3.0), 1.5);
    }
}
