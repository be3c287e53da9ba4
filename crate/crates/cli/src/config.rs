//! Experiment configuration: a flat `key = value` text format whose keys
//! mirror the command-line flags.
//!
//! ```text
//! # comments start with '#'
//! geometry = stiefel
//! m = 60
//! n = 60
//! p = 3
//! sampling = 0.35
//! warmstart = 10
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fixrank::newton::StepPolicy;
use fixrank::{GeometryKind, NewtonConfig};

use crate::CliError;

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// keys are normalized to lower case with `-` read as `_`.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected `key = value`", i + 1)));
        };
        let key = k.trim().to_ascii_lowercase().replace('-', "_");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_pairs(&text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Approx,
    Completion,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Approx => "approx",
            Objective::Completion => "completion",
        }
    }
}

/// Starting point for the approximation objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Start {
    /// Truncated-SVD factors perturbed by `perturb` (relative).
    Svd,
    /// Independent Gaussian factors.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: GeometryKind,
    pub objective: Objective,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Rank of the synthetic target; `None` draws a dense Gaussian matrix.
    pub rank: Option<usize>,
    pub noise: f64,
    pub sampling: f64,
    pub start: Start,
    pub perturb: f64,
    pub newton: NewtonConfig,
}

impl ExperimentConfig {
    pub fn defaults(objective: Objective) -> Self {
        match objective {
            Objective::Approx => Self {
                geometry: GeometryKind::Balanced,
                objective,
                m: 20,
                n: 15,
                p: 3,
                seed: 1,
                input: None,
                mask: None,
                out: None,
                rank: None,
                noise: 0.0,
                sampling: 1.0,
                start: Start::Svd,
                perturb: 1e-2,
                newton: NewtonConfig::default(),
            },
            Objective::Completion => Self {
                geometry: GeometryKind::Balanced,
                objective,
                m: 60,
                n: 60,
                p: 3,
                seed: 1,
                input: None,
                mask: None,
                out: None,
                rank: Some(3),
                noise: 0.0,
                sampling: 0.35,
                start: Start::Svd,
                perturb: 0.0,
                newton: NewtonConfig {
                    warmstart_steps: 10,
                    ..NewtonConfig::default()
                },
            },
        }
    }

    /// Applies one `key = value` setting.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |what: &str| CliError::Usage(format!("invalid value `{value}` for `{key}`: {what}"));
        let uint = || value.parse::<usize>().map_err(|_| bad("expected a non-negative integer"));
        let real = || value.parse::<f64>().map_err(|_| bad("expected a number"));
        let path = || (!value.is_empty()).then(|| PathBuf::from(value));
        match key {
            "geometry" => self.geometry = value.parse().map_err(|e: String| bad(&e))?,
            "objective" => {
                self.objective = match value {
                    "approx" => Objective::Approx,
                    "completion" | "complete" => Objective::Completion,
                    _ => return Err(bad("expected approx or completion")),
                }
            }
            "m" => self.m = uint()?,
            "n" => self.n = uint()?,
            "p" => self.p = uint()?,
            "seed" => self.seed = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
            "input" => self.input = path(),
            "mask" => self.mask = path(),
            "out" => self.out = path(),
            "rank" => {
                self.rank = match value {
                    "" | "none" | "full" => None,
                    _ => Some(uint()?),
                }
            }
            "noise" => self.noise = real()?,
            "sampling" => self.sampling = real()?,
            "start" => {
                self.start = match value {
                    "svd" => Start::Svd,
                    "random" => Start::Random,
                    _ => return Err(bad("expected svd or random")),
                }
            }
            "perturb" => self.perturb = real()?,
            "max_outer" => self.newton.max_outer = uint()?,
            "grad_tol" => self.newton.grad_tol = real()?,
            "krylov_tol" => {
                self.newton.krylov_tol = match value {
                    "" | "auto" => None,
                    _ => Some(real()?),
                }
            }
            "krylov_max" => {
                self.newton.krylov_max = match value {
                    "" | "auto" => None,
                    _ => Some(uint()?),
                }
            }
            "warmstart" => self.newton.warmstart_steps = uint()?,
            "damped" => {
                let on = parse_bool(value).ok_or_else(|| bad("expected true or false"))?;
                self.newton.step_policy = if on { StepPolicy::ArmijoDamped } else { StepPolicy::FullNewton };
            }
            _ => return Err(CliError::Usage(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |s: String| Err(CliError::Usage(s));
        if self.m == 0 || self.n == 0 {
            return usage("dimensions m and n must be positive".into());
        }
        if self.p == 0 || self.p > self.m.min(self.n) {
            return usage(format!("rank p = {} must lie in 1..={}", self.p, self.m.min(self.n)));
        }
        if let Some(r) = self.rank {
            if r == 0 || r > self.m.min(self.n) {
                return usage(format!("target rank {r} must lie in 1..={}", self.m.min(self.n)));
            }
        }
        if !(self.sampling > 0.0 && self.sampling <= 1.0) {
            return usage(format!("sampling ratio {} must lie in (0, 1]", self.sampling));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return usage(format!("noise level {} must be non-negative", self.noise));
        }
        if !(self.perturb >= 0.0 && self.perturb.is_finite()) {
            return usage(format!("perturbation {} must be non-negative", self.perturb));
        }
        if self.mask.is_some() && self.input.is_none() {
            return usage("a mask needs a dense --input matrix".into());
        }
        self.newton.validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    /// The effective configuration as `key = value` lines, in a form
    /// [`parse_pairs`] reads back.
    pub fn echo(&self) -> String {
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("objective", self.objective.name().into());
        kv("geometry", self.geometry.name().into());
        kv("m", self.m.to_string());
        kv("n", self.n.to_string());
        kv("p", self.p.to_string());
        kv("seed", self.seed.to_string());
        kv("input", opt_path(&self.input));
        kv("mask", opt_path(&self.mask));
        kv("out", opt_path(&self.out));
        kv("rank", self.rank.map_or_else(|| "full".into(), |r| r.to_string()));
        kv("noise", format!("{:e}", self.noise));
        kv("sampling", format!("{}", self.sampling));
        kv(
            "start",
            match self.start {
                Start::Svd => "svd",
                Start::Random => "random",
            }
            .into(),
        );
        kv("perturb", format!("{:e}", self.perturb));
        kv("max_outer", self.newton.max_outer.to_string());
        kv("grad_tol", format!("{:e}", self.newton.grad_tol));
        kv(
            "krylov_tol",
            self.newton.krylov_tol.map_or_else(|| "auto".into(), |t| format!("{t:e}")),
        );
        kv(
            "krylov_max",
            self.newton.krylov_max.map_or_else(|| "auto".into(), |t| t.to_string()),
        );
        kv("warmstart", self.newton.warmstart_steps.to_string());
        kv(
            "damped",
            (self.newton.step_policy == StepPolicy::ArmijoDamped).to_string(),
        );
        s
    }
}

pub fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Some(true),
        "false" | "no" | "0" | "off" => Some(false),
        _ => None,
    }
}
