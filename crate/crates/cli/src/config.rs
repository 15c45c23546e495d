//! `key = value` run configuration.
//!
//! Problem keys are those of [`ProblemParams::set`]; solver and harness keys
//! are listed in [`SOLVER_KEYS`]. `#` starts a comment. Unknown keys are
//! errors.

use std::fmt;
use std::path::PathBuf;

use degenpde_core::{ProblemParams, Relaxation, SolverConfig};

pub const SOLVER_KEYS: [&str; 14] = [
    "dt",
    "t_end",
    "picard_tol",
    "picard_max",
    "support_threshold",
    "blowup_cap",
    "snapshots",
    "M",
    "R",
    "rho",
    "max_halvings",
    "relaxation",
    "lemma_trials",
    "sign_samples",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Profile,
    Solve,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Profile => "profile",
            Command::Solve => "solve",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemParams,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    pub command: Command,
    pub seed: u64,
    pub harness: HarnessConfig,
}

/// Settings read only by `verify`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessConfig {
    /// Random pairs per ordering lemma.
    pub lemma_trials: usize,
    /// Samples of the supersolution bracket.
    pub sign_samples: usize,
    /// The comparison run starts from `rho * z(t0, .)`.
    pub rho: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            lemma_trials: 20,
            sign_samples: 1000,
            rho: 0.5,
        }
    }
}

/// Parse failure, or a violated bound. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError {
                line: Some(n),
                message,
            } => write!(f, "line {n}: {message}"),
            ConfigError {
                line: None,
                message,
            } => f.write_str(message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>()
        .map_err(|_| format!("cannot parse `{v}` as a number"))
}

fn set_solver(
    cfg: &mut SolverConfig,
    extra: &mut HarnessConfig,
    key: &str,
    value: &str,
) -> Result<bool, String> {
    match key {
        "dt" => cfg.dt = num(value)?,
        "t_end" => cfg.t_end = num(value)?,
        "picard_tol" => cfg.picard_tol = num(value)?,
        "picard_max" => cfg.picard_max = num(value)?,
        "support_threshold" => cfg.support_threshold = num(value)?,
        "blowup_cap" => cfg.blowup_cap = num(value)?,
        "M" => cfg.nodes = num(value)?,
        "R" => cfg.radius = Some(num(value)?),
        "rho" => extra.rho = num(value)?,
        "max_halvings" => cfg.max_halvings = num(value)?,
        "snapshots" => {
            cfg.snapshot_times = value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(num)
                .collect::<Result<_, _>>()?;
        }
        "relaxation" => {
            cfg.relaxation = match value {
                "aitken" => Relaxation::Aitken,
                "none" => Relaxation::None,
                _ => return Err(format!("expected aitken or none, got `{value}`")),
            }
        }
        "lemma_trials" => extra.lemma_trials = num(value)?,
        "sign_samples" => extra.sign_samples = num(value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Parse and validate. `t_end` defaults to `t0 + 1` when absent.
pub fn parse_config(
    text: &str,
) -> Result<(ProblemParams, SolverConfig, HarnessConfig), ConfigError> {
    let mut problem = ProblemParams::default();
    let mut solver = SolverConfig::default();
    let mut extra = HarnessConfig::default();
    let mut t_end_given = false;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::at(n, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(ConfigError::at(n, format!("`{key}` has no value")));
        }
        let known = match problem.set(key, value) {
            Ok(true) => true,
            Ok(false) => set_solver(&mut solver, &mut extra, key, value)
                .map_err(|e| ConfigError::at(n, format!("{key}: {e}")))?,
            Err(e) => return Err(ConfigError::at(n, format!("{key}: {e}"))),
        };
        if !known {
            return Err(ConfigError::at(n, format!("unknown key `{key}`")));
        }
        t_end_given |= key == "t_end";
    }
    if !t_end_given {
        solver.t_end = problem.t0 + 1.0;
    }
    let violations = problem.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(ConfigError::global(list.join("; ")));
    }
    solver
        .validate()
        .map_err(|e| ConfigError::global(e.to_string()))?;
    if solver.t_end < problem.t0 {
        return Err(ConfigError::global(format!(
            "t_end = {} precedes t0 = {}",
            solver.t_end, problem.t0
        )));
    }
    if extra.sign_samples < 2 {
        return Err(ConfigError::global("sign_samples must be >= 2"));
    }
    if !(extra.rho > 0.0 && extra.rho <= 1.0) {
        return Err(ConfigError::global(format!(
            "rho = {} must lie in (0, 1]",
            extra.rho
        )));
    }
    Ok((problem, solver, extra))
}

impl RunConfig {
    pub fn from_text(
        text: &str,
        command: Command,
        output_dir: PathBuf,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        let (problem, solver, harness) = parse_config(text)?;
        Ok(Self {
            problem,
            solver,
            output_dir,
            command,
            seed,
            harness,
        })
    }
}
