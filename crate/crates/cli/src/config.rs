//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, dotted keys group related
//! settings (`kernel.kind = ou`). Every key has a default except
//! `experiment` and `seed`. Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use kasnerlab::randfield::{Kernel, NoiseMode};
use kasnerlab::stochavg::GbmConvention;
use kasnerlab::{CrossSum, KasnerExponents, OperatorCoefficients, TimeGrid};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    Kasner,
    Pulse,
    Constant,
    McAvg,
    Estimate,
    Bounds,
    Bianchi,
    Gbm,
    StableClass,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Kasner,
        Experiment::Pulse,
        Experiment::Constant,
        Experiment::McAvg,
        Experiment::Estimate,
        Experiment::Bounds,
        Experiment::Bianchi,
        Experiment::Gbm,
        Experiment::StableClass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Kasner => "kasner",
            Experiment::Pulse => "pulse",
            Experiment::Constant => "constant",
            Experiment::McAvg => "mc-avg",
            Experiment::Estimate => "estimate",
            Experiment::Bounds => "bounds",
            Experiment::Bianchi => "bianchi",
            Experiment::Gbm => "gbm",
            Experiment::StableClass => "stable-class",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::Kasner => "rolling radii, curvature and constraint residuals of a Kasner solution",
            Experiment::Pulse => "Gaussian short pulse on a static torus: radii, attractor and relaxation",
            Experiment::Constant => "constant-rate pulse: induced constant n A^2 and exponential growth",
            Experiment::McAvg => "Monte-Carlo stochastic average of the operator and the induced constant",
            Experiment::Estimate => "norm growth laws, cumulant expectation and Karhunen-Loeve bound",
            Experiment::Bounds => "Markov, Chernoff, Hoeffding and maximal bounds on synthetic ensembles",
            Experiment::Bianchi => "noise-boosted Kasner radii averaged over an ensemble",
            Experiment::Gbm => "geometric Brownian motion: Lyapunov exponent and stabilisation",
            Experiment::StableClass => "stationary perturbations: time-independent moments and sup tails",
        }
    }

    /// Numbers of the validation checks this experiment exercises.
    pub fn checks(self) -> Vec<u8> {
        match self {
            Experiment::Kasner => vec![1, 2, 3],
            Experiment::Pulse => vec![4],
            Experiment::Constant => vec![5],
            Experiment::McAvg => vec![6, 7, 8, 12, 17],
            Experiment::Estimate => vec![9, 10, 16],
            Experiment::Bounds => vec![13, 15],
            Experiment::Bianchi => vec![9],
            Experiment::Gbm => vec![11],
            Experiment::StableClass => vec![14],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseKind {
    Static,
    Kasner,
    Lambda,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kind: String,
    pub c: f64,
    pub varsigma: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub n: usize,
    pub zeta: f64,
    pub mode: NoiseMode,
    pub size: usize,
    pub t: f64,
    pub cross: CrossSum,
    pub kernel: KernelSpec,
    pub t_start: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub kasner_p: Vec<f64>,
    pub a_e: f64,
    pub pulse_amplitude: f64,
    pub pulse_theta: f64,
    pub base: BaseKind,
    pub lambda_bar: f64,
    pub gbm_alpha: f64,
    pub gbm_convention: GbmConvention,
    pub bounds_level: f64,
    pub bounds_gamma: f64,
    /// Empty means the experiment's own checks.
    pub verify_checks: Vec<u8>,
    pub verify_scale: f64,
    pub verify_corrupt_lambda: bool,
    pub output_csv: String,
    pub output_json: String,
}

/// Every accepted key with its default (`None` for required keys).
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("experiment", None),
    ("seed", None),
    ("n", Some("3")),
    ("zeta", Some("0.5")),
    ("mode", Some("iid")),
    ("size", Some("10000")),
    ("t", Some("1")),
    ("cross", Some("full")),
    ("kernel.kind", Some("ou")),
    ("kernel.c", Some("1")),
    ("kernel.varsigma", Some("1")),
    ("kernel.alpha", Some("1")),
    ("grid.t_start", Some("0")),
    ("grid.dt", Some("0.01")),
    ("grid.n_steps", Some("200")),
    ("kasner.p", Some("-0.3333333333333333,0.6666666666666666,0.6666666666666666")),
    ("a_e", Some("1")),
    ("pulse.amplitude", Some("1")),
    ("pulse.theta", Some("0.1")),
    ("base", Some("static")),
    ("lambda_bar", Some("1")),
    ("gbm.alpha", Some("0.5")),
    ("gbm.convention", Some("decaying")),
    ("bounds.level", Some("2")),
    ("bounds.gamma", Some("0.9")),
    ("verify.checks", Some("")),
    ("verify.scale", Some("1")),
    ("verify.corrupt_lambda", Some("false")),
    ("output.csv", Some("series.csv")),
    ("output.json", Some("summary.json")),
];

/// Parse `key = value` lines into a map, rejecting malformed, unknown and
/// repeated keys.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("line {}: expected 'key = value'", no + 1)))?;
        let k = k.trim();
        check_key(k)?;
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(CliError::config(format!("line {}: key '{k}' repeated", no + 1)));
        }
    }
    Ok(out)
}

fn check_key(k: &str) -> Result<(), CliError> {
    if KEYS.iter().any(|(name, _)| *name == k) {
        Ok(())
    } else {
        Err(CliError::config(format!("unknown key '{k}'")))
    }
}

/// Apply `key=value` overrides on top of parsed entries.
pub fn apply_overrides(entries: &mut BTreeMap<String, String>, overrides: &[String]) -> Result<(), CliError> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("override '{o}' is not key=value")))?;
        let k = k.trim();
        check_key(k)?;
        entries.insert(k.to_string(), v.trim().to_string());
    }
    Ok(())
}

fn get<'a>(entries: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, CliError> {
    if let Some(v) = entries.get(key) {
        return Ok(v.as_str());
    }
    match KEYS.iter().find(|(k, _)| *k == key) {
        Some((_, Some(d))) => Ok(d),
        _ => Err(CliError::config(format!("missing required key '{key}'"))),
    }
}

fn parse<T: FromStr>(entries: &BTreeMap<String, String>, key: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    let v = get(entries, key)?;
    v.parse().map_err(|e| CliError::config(format!("{key} = '{v}': {e}")))
}

fn parse_list<T: FromStr>(entries: &BTreeMap<String, String>, key: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    let v = get(entries, key)?;
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| CliError::config(format!("{key}: '{s}': {e}"))))
        .collect()
}

fn parse_mode(s: &str) -> Result<NoiseMode, CliError> {
    match s {
        "iid" => Ok(NoiseMode::Iid),
        "shared" => Ok(NoiseMode::Shared),
        _ => Err(CliError::config(format!("mode must be iid or shared, got '{s}'"))),
    }
}

fn parse_cross(s: &str) -> Result<CrossSum, CliError> {
    match s {
        "full" => Ok(CrossSum::Full),
        "diagonal" => Ok(CrossSum::Diagonal),
        _ => Err(CliError::config(format!("cross must be full or diagonal, got '{s}'"))),
    }
}

fn parse_base(s: &str) -> Result<BaseKind, CliError> {
    match s {
        "static" => Ok(BaseKind::Static),
        "kasner" => Ok(BaseKind::Kasner),
        "lambda" => Ok(BaseKind::Lambda),
        _ => Err(CliError::config(format!("base must be static, kasner or lambda, got '{s}'"))),
    }
}

fn parse_convention(s: &str) -> Result<GbmConvention, CliError> {
    match s {
        "decaying" => Ok(GbmConvention::Decaying),
        "growing" => Ok(GbmConvention::Growing),
        _ => Err(CliError::config(format!("gbm.convention must be decaying or growing, got '{s}'"))),
    }
}

impl ExperimentConfig {
    /// Parse config text, then apply `seed` (if given) and `key=value` overrides.
    pub fn load(text: &str, seed: Option<u64>, overrides: &[String]) -> Result<Self, CliError> {
        let mut e = parse_entries(text)?;
        if let Some(s) = seed {
            e.insert("seed".into(), s.to_string());
        }
        apply_overrides(&mut e, overrides)?;
        Self::from_entries(&e)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::from_entries(&parse_entries(text)?)
    }

    pub fn from_entries(e: &BTreeMap<String, String>) -> Result<Self, CliError> {
        for k in e.keys() {
            check_key(k)?;
        }
        let cfg = ExperimentConfig {
            experiment: get(e, "experiment")?.parse().map_err(CliError::config)?,
            seed: parse(e, "seed")?,
            n: parse(e, "n")?,
            zeta: parse(e, "zeta")?,
            mode: parse_mode(get(e, "mode")?)?,
            size: parse(e, "size")?,
            t: parse(e, "t")?,
            cross: parse_cross(get(e, "cross")?)?,
            kernel: KernelSpec {
                kind: get(e, "kernel.kind")?.to_string(),
                c: parse(e, "kernel.c")?,
                varsigma: parse(e, "kernel.varsigma")?,
                alpha: parse(e, "kernel.alpha")?,
            },
            t_start: parse(e, "grid.t_start")?,
            dt: parse(e, "grid.dt")?,
            n_steps: parse(e, "grid.n_steps")?,
            kasner_p: parse_list(e, "kasner.p")?,
            a_e: parse(e, "a_e")?,
            pulse_amplitude: parse(e, "pulse.amplitude")?,
            pulse_theta: parse(e, "pulse.theta")?,
            base: parse_base(get(e, "base")?)?,
            lambda_bar: parse(e, "lambda_bar")?,
            gbm_alpha: parse(e, "gbm.alpha")?,
            gbm_convention: parse_convention(get(e, "gbm.convention")?)?,
            bounds_level: parse(e, "bounds.level")?,
            bounds_gamma: parse(e, "bounds.gamma")?,
            verify_checks: parse_list(e, "verify.checks")?,
            verify_scale: parse(e, "verify.scale")?,
            verify_corrupt_lambda: parse(e, "verify.corrupt_lambda")?,
            output_csv: get(e, "output.csv")?.to_string(),
            output_json: get(e, "output.json")?.to_string(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every parameter before any computation runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::config(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.size < 100 {
            return bad(format!("size = {} is below the minimum ensemble of 100", self.size));
        }
        for (k, v) in [
            ("zeta", self.zeta),
            ("t", self.t),
            ("grid.t_start", self.t_start),
            ("pulse.amplitude", self.pulse_amplitude),
            ("lambda_bar", self.lambda_bar),
            ("gbm.alpha", self.gbm_alpha),
        ] {
            if !v.is_finite() {
                return bad(format!("{k} must be finite"));
            }
        }
        for (k, v) in [
            ("grid.dt", self.dt),
            ("a_e", self.a_e),
            ("pulse.theta", self.pulse_theta),
            ("bounds.level", self.bounds_level),
            ("verify.scale", self.verify_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{k} must be positive, got {v}"));
            }
        }
        if !(self.bounds_gamma > 0.0 && self.bounds_gamma <= 1.0) {
            return bad(format!("bounds.gamma must lie in (0, 1], got {}", self.bounds_gamma));
        }
        if self.n_steps == 0 {
            return bad("grid.n_steps must be at least 1".into());
        }
        if let Some(c) = self.verify_checks.iter().find(|c| !(1..=kasnerlab::verify::CHECK_COUNT).contains(*c)) {
            return bad(format!("verify.checks: no check numbered {c}"));
        }
        for (k, v) in [("output.csv", &self.output_csv), ("output.json", &self.output_json)] {
            if v.is_empty() || v.contains('/') || v.contains('\\') || v == "." || v == ".." {
                return bad(format!("{k} must be a plain file name, got '{v}'"));
            }
        }
        self.kernel()?;
        self.grid()?;
        let uses_p = matches!(self.experiment, Experiment::Kasner | Experiment::Pulse | Experiment::Bianchi)
            || (self.experiment == Experiment::McAvg && self.base == BaseKind::Kasner);
        if uses_p {
            if self.kasner_p.len() != self.n {
                return bad(format!("kasner.p has {} entries but n = {}", self.kasner_p.len(), self.n));
            }
            let p = KasnerExponents::new(self.kasner_p.clone()).map_err(CliError::from)?;
            if self.experiment != Experiment::McAvg && !p.is_valid() {
                return bad(format!("kasner.p violates sum p = sum p^2 (residual {:e})", p.residual()));
            }
        }
        if matches!(self.experiment, Experiment::McAvg | Experiment::Estimate | Experiment::StableClass)
            && self.kernel.kind == "white-limit"
        {
            return bad(format!("{} needs a regulated kernel (ou or squared-exp)", self.experiment));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<Kernel, CliError> {
        let k = &self.kernel;
        match k.kind.as_str() {
            "ou" => Kernel::ou(k.c, k.varsigma),
            "squared-exp" => Kernel::squared_exp(k.c, k.varsigma),
            "white-limit" => Kernel::white_limit(k.alpha),
            other => return Err(CliError::config(format!("kernel.kind must be ou, squared-exp or white-limit, got '{other}'"))),
        }
        .map_err(CliError::from)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(self.t_start, self.dt, self.n_steps).map_err(CliError::from)
    }

    pub fn coefficients(&self) -> OperatorCoefficients {
        match self.cross {
            CrossSum::Full => OperatorCoefficients::einstein(),
            CrossSum::Diagonal => OperatorCoefficients::einstein_diagonal(),
        }
    }

    /// Canonical `(key, value)` pairs in declaration order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mode = match self.mode {
            NoiseMode::Iid => "iid",
            NoiseMode::Shared => "shared",
        };
        let cross = match self.cross {
            CrossSum::Full => "full",
            CrossSum::Diagonal => "diagonal",
        };
        let base = match self.base {
            BaseKind::Static => "static",
            BaseKind::Kasner => "kasner",
            BaseKind::Lambda => "lambda",
        };
        let conv = match self.gbm_convention {
            GbmConvention::Decaying => "decaying",
            GbmConvention::Growing => "growing",
        };
        vec![
            ("experiment", self.experiment.to_string()),
            ("seed", self.seed.to_string()),
            ("n", self.n.to_string()),
            ("zeta", self.zeta.to_string()),
            ("mode", mode.into()),
            ("size", self.size.to_string()),
            ("t", self.t.to_string()),
            ("cross", cross.into()),
            ("kernel.kind", self.kernel.kind.clone()),
            ("kernel.c", self.kernel.c.to_string()),
            ("kernel.varsigma", self.kernel.varsigma.to_string()),
            ("kernel.alpha", self.kernel.alpha.to_string()),
            ("grid.t_start", self.t_start.to_string()),
            ("grid.dt", self.dt.to_string()),
            ("grid.n_steps", self.n_steps.to_string()),
            ("kasner.p", list(&self.kasner_p)),
            ("a_e", self.a_e.to_string()),
            ("pulse.amplitude", self.pulse_amplitude.to_string()),
            ("pulse.theta", self.pulse_theta.to_string()),
            ("base", base.into()),
            ("lambda_bar", self.lambda_bar.to_string()),
            ("gbm.alpha", self.gbm_alpha.to_string()),
            ("gbm.convention", conv.into()),
            ("bounds.level", self.bounds_level.to_string()),
            ("bounds.gamma", self.bounds_gamma.to_string()),
            ("verify.checks", self.verify_checks.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")),
            ("verify.scale", self.verify_scale.to_string()),
            ("verify.corrupt_lambda", self.verify_corrupt_lambda.to_string()),
            ("output.csv", self.output_csv.clone()),
            ("output.json", self.output_json.clone()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
