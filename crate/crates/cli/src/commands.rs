//! Subcommands. Each writes its files under the output directory and
//! returns the process exit code.

use std::fmt;
use std::io;
use std::path::Path;
use std::thread;

use degenpde_core::params::{PhiCase, TauCase, VbarCase};
use degenpde_core::profiles::{solvability_amplitude_threshold, Profile};
use degenpde_core::solver::default_radius;
use degenpde_core::verify::{
    check_asymptotic_ratio, check_comparison, check_convergence, check_front_law,
    check_lemma_ordering, check_supersolution_sign, Approach, Lemma, StudyConfig,
};
use degenpde_core::{
    derive, run, CheckResult, DerivedConstants, Diffusion, ProblemParams, Solvability,
    SolverConfig, Termination,
};

use crate::config::RunConfig;
use crate::output::{create, finish, num};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug)]
pub enum CmdError {
    Config(String),
    Io(io::Error),
    Solver(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) | CmdError::Io(_) => EXIT_CONFIG,
            CmdError::Solver(_) => EXIT_SOLVER,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Config(m) => write!(f, "config error: {m}"),
            CmdError::Io(e) => write!(f, "i/o error: {e}"),
            CmdError::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

impl From<io::Error> for CmdError {
    fn from(e: io::Error) -> Self {
        CmdError::Io(e)
    }
}

impl From<csv::Error> for CmdError {
    fn from(e: csv::Error) -> Self {
        CmdError::Io(e.into())
    }
}

fn derived(cfg: &RunConfig) -> Result<DerivedConstants, CmdError> {
    derive(&cfg.problem).map_err(|e| CmdError::Config(e.to_string()))
}

pub fn dispatch(cfg: &RunConfig) -> Result<i32, CmdError> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    use crate::config::Command::*;
    match cfg.command {
        Analyze => analyze(cfg),
        Profile => profile(cfg),
        Solve => solve(cfg),
        Verify => verify(cfg),
    }
}

fn opt(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

/// `(name, value, branch flag)` for every derived symbol.
pub fn constant_rows(d: &DerivedConstants) -> Vec<(&'static str, f64, String)> {
    let plain = || "—".to_string();
    let when = |active: bool, tag: &str| {
        if active {
            tag.to_string()
        } else {
            "inactive".to_string()
        }
    };
    let critical = d.diffusion() == Diffusion::Critical;
    vec![
        ("m2", d.m2, plain()),
        ("k2", d.k2, plain()),
        ("beta2", d.beta2, plain()),
        (
            "similarity_beta2",
            d.similarity_beta2,
            if d.params.source {
                plain()
            } else {
                "source off: beta2_crit".into()
            },
        ),
        (
            "kappa",
            d.kappa,
            format!("{} diffusion", d.diffusion().name()),
        ),
        ("gamma1", d.gamma1, plain()),
        ("gamma2", opt(d.gamma2), when(d.gamma2.is_some(), "—")),
        ("mu", d.mu, plain()),
        ("gamma3", opt(d.gamma3), when(d.gamma3.is_some(), "—")),
        ("s", opt(d.s), when(d.s.is_some(), "—")),
        (
            "l1",
            opt(d.l1),
            when(d.vbar_case == VbarCase::Power, "vbar power branch"),
        ),
        (
            "l2",
            opt(d.l2),
            when(d.vbar_case == VbarCase::Log, "vbar log branch"),
        ),
        (
            "l3",
            opt(d.l3),
            when(d.vbar_case == VbarCase::Exp, "vbar exponential branch"),
        ),
        (
            "l4",
            d.l4,
            when(
                d.vbar_case == VbarCase::InversePower,
                "vbar inverse-power branch",
            ),
        ),
        (
            "l5",
            d.l5,
            when(d.tau_case == TauCase::Log, "tau log branch"),
        ),
        ("l6", opt(d.l6), when(d.tau_case == TauCase::Power, "—")),
        ("l7", opt(d.l7), when(d.l7.is_some(), "—")),
        (
            "b",
            d.b,
            if critical {
                "exponential profile branch".into()
            } else {
                plain()
            },
        ),
        (
            "A",
            opt(d.fast_amplitude),
            when(d.fast_amplitude.is_some(), "fast profile amplitude"),
        ),
        ("beta2_crit", d.beta2_crit, plain()),
        ("beta_crit_u", d.beta_crit_u, plain()),
        (
            "xi_b",
            d.xi_b,
            if d.xi_b.is_finite() {
                plain()
            } else {
                "no compact support".into()
            },
        ),
        (
            "a_threshold",
            opt(solvability_amplitude_threshold(d)),
            when(solvability_amplitude_threshold(d).is_some(), "—"),
        ),
        (
            "phi_log",
            f64::from(u8::from(d.phi_case == PhiCase::Log)),
            when(d.phi_case == PhiCase::Log, "log space map"),
        ),
    ]
}

/// One-line verdict on the source exponent.
pub fn verdict(d: &DerivedConstants) -> String {
    if !d.params.source {
        return format!(
            "no source term; beta2_crit = {} applies once the source is on",
            d.beta2_crit
        );
    }
    let r = d.classify();
    match r.solvability {
        Solvability::Subcritical => format!(
            "subcritical (beta2 = {} < beta2_crit = {}): nontrivial solutions blow up",
            d.beta2, d.beta2_crit
        ),
        Solvability::Supercritical => match solvability_amplitude_threshold(d) {
            Some(a) => format!("supercritical; globally solvable for a <= {a:.5}"),
            None => format!(
                "supercritical (beta2 = {} >= beta2_crit = {})",
                d.beta2, d.beta2_crit
            ),
        },
    }
}

fn analyze(cfg: &RunConfig) -> Result<i32, CmdError> {
    let d = derived(cfg)?;
    let mut w = create(
        &cfg.output_dir,
        "constants.csv",
        &["name", "value", "branch"],
    )?;
    for (name, value, flag) in constant_rows(&d) {
        w.write_record([name, &num(value), &flag])?;
    }
    finish(w)?;
    let r = d.classify();
    println!(
        "regime: {} diffusion (kappa = {})",
        r.diffusion.name(),
        d.kappa
    );
    println!("verdict: {}", verdict(&d));
    for note in cfg.problem.relaxations() {
        println!("note: {note}");
    }
    Ok(EXIT_OK)
}

pub const PROFILE_SAMPLES: usize = 1000;

fn profile(cfg: &RunConfig) -> Result<i32, CmdError> {
    let d = derived(cfg)?;
    let a = cfg.problem.a;
    let prof = Profile::for_regime(&d, a).map_err(|e| CmdError::Config(e.to_string()))?;
    let hi = if d.diffusion() == Diffusion::Slow {
        1.2 * prof.xi_b()
    } else {
        10.0
    };
    let mut w = create(&cfg.output_dir, "profile.csv", &["xi", "f"])?;
    for i in 0..=PROFILE_SAMPLES {
        let xi = hi * i as f64 / PROFILE_SAMPLES as f64;
        w.write_record([num(xi), num(prof.value(xi))])?;
    }
    finish(w)?;
    println!(
        "{} profile, a = {a}, xi in [0, {hi}], {} rows",
        prof.kind.name(),
        PROFILE_SAMPLES + 1
    );
    Ok(EXIT_OK)
}

fn solve(cfg: &RunConfig) -> Result<i32, CmdError> {
    let d = derived(cfg)?;
    let rep = run(&d, cfg.solver.clone()).map_err(|e| CmdError::Solver(e.to_string()))?;
    let dir = &cfg.output_dir;
    let radii = rep.grid.radii();
    let inv = 1.0 / (1.0 - cfg.problem.q);

    let mut w = create(dir, "snapshots.csv", &["t", "r", "v", "u"])?;
    for s in &rep.snapshots {
        let t = num(s.t);
        for (r, v) in radii.iter().zip(&s.v) {
            w.write_record([&t, &num(*r), &num(*v), &num(v.powf(inv))])?;
        }
    }
    finish(w)?;

    let mut w = create(dir, "front.csv", &["t", "tau", "r_front"])?;
    for f in &rep.front_history {
        w.write_record([num(f.t), num(f.tau), num(f.r_front)])?;
    }
    finish(w)?;

    let mut w = create(dir, "meta.csv", &["step", "t", "picard_iters"])?;
    for (i, s) in rep.steps.iter().enumerate() {
        w.write_record([(i + 1).to_string(), num(s.t), s.iterations.to_string()])?;
    }
    finish(w)?;

    let (t_event, code) = match rep.termination {
        Termination::Completed => (f64::NAN, EXIT_OK),
        Termination::Blowup { t } => (t, EXIT_OK),
        Termination::PicardFailure { t } => (t, EXIT_SOLVER),
    };
    let max_iters = rep.iterations_per_step().into_iter().max().unwrap_or(0);
    let mut w = create(dir, "summary.csv", &["key", "value"])?;
    w.write_record(["termination", rep.termination.name()])?;
    w.write_record(["t_event", &num(t_event)])?;
    w.write_record(["t_final", &num(rep.final_state().t)])?;
    w.write_record(["steps", &rep.steps.len().to_string()])?;
    w.write_record(["rejected_steps", &rep.rejected_steps.to_string()])?;
    w.write_record(["max_picard_iters", &max_iters.to_string()])?;
    w.write_record(["max_clamped_fraction", &num(rep.max_clamped_fraction)])?;
    w.write_record(["radius", &num(rep.grid.radius)])?;
    for warning in &rep.warnings {
        w.write_record(["warning", warning])?;
    }
    finish(w)?;

    match rep.termination {
        Termination::Completed => println!(
            "termination: completed at t = {}; {} steps, max {max_iters} Picard iterations",
            rep.final_state().t,
            rep.steps.len()
        ),
        Termination::Blowup { t } => println!("termination: blowup at t* = {t}"),
        Termination::PicardFailure { t } => println!("termination: picard_failure at t = {t}"),
    }
    for warning in &rep.warnings {
        println!("warning: {warning}");
    }
    Ok(code)
}

/// The run from `rho * z`, with snapshots every tenth of the run when the
/// config lists none.
fn comparison_config(cfg: &RunConfig) -> SolverConfig {
    let mut s = cfg.solver.clone();
    s.init_scale = cfg.harness.rho;
    if s.snapshot_times.is_empty() {
        let (t0, t1) = (cfg.problem.t0, s.t_end);
        s.snapshot_times = (1..=10).map(|i| t0 + (t1 - t0) * i as f64 / 10.0).collect();
    }
    s
}

fn study_config(
    cfg: &RunConfig,
    d: &DerivedConstants,
    interior: f64,
) -> degenpde_core::Result<StudyConfig> {
    let t0 = cfg.problem.t0;
    let t_end = cfg.solver.t_end.min(t0 + 0.5).max(t0 + 0.05);
    let radius = match cfg.solver.radius {
        Some(r) if d.params == cfg.problem => r,
        _ => default_radius(d, d.params.a, t_end)?,
    };
    Ok(StudyConfig {
        nodes: (cfg.solver.nodes / 4).max(16),
        dt: 4.0 * cfg.solver.dt,
        t_end,
        radius,
        interior,
    })
}

/// Heat equation in the configured dimension: the scheme's reference order.
fn classical_limit(cfg: &RunConfig) -> ProblemParams {
    ProblemParams {
        dim: cfg.problem.dim,
        t0: cfg.problem.t0,
        source: false,
        ..ProblemParams::default()
    }
}

/// Graded on the classical limit.
fn convergence_classical(cfg: &RunConfig) -> CheckResult {
    derive(&classical_limit(cfg))
        .and_then(|dh| {
            let base = study_config(cfg, &dh, 1.0)?;
            check_convergence(&dh, &base, 3)
        })
        .unwrap_or_else(|e| errored("convergence", e))
}

/// The configured problem, error measured on the inner 30% of the grid
/// (slow diffusion) to stay clear of the front. Profiles behave like
/// `r^(p/(p-1))` at the origin, so the order is graded only for `p = 2`.
fn convergence_interior(cfg: &RunConfig, d: &DerivedConstants) -> CheckResult {
    const NAME: &str = "convergence_interior";
    let interior = if d.diffusion() == Diffusion::Slow {
        0.3
    } else {
        1.0
    };
    let r = study_config(cfg, d, interior)
        .and_then(|base| check_convergence(d, &base, 3))
        .unwrap_or_else(|e| errored(NAME, e));
    let mut r = CheckResult {
        name: NAME.into(),
        ..r
    };
    if d.params.p != 2.0 && !r.is_skipped() {
        r = CheckResult {
            table: r.table.take(),
            ..CheckResult::skipped(
                NAME,
                format!(
                    "reported, not graded (p = {}, order limited to about {:.3}): {}",
                    d.params.p,
                    d.gamma1.min(2.0),
                    r.details
                ),
            )
        };
    }
    r
}

fn errored(name: &str, e: impl fmt::Display) -> CheckResult {
    CheckResult::new(name, false, f64::INFINITY, format!("error: {e}"))
}

/// All checks for the configured parameters, in a fixed order.
pub fn run_checks(cfg: &RunConfig) -> Result<Vec<CheckResult>, CmdError> {
    let d = derived(cfg)?;
    let a = cfg.problem.a;
    let d = &d;
    let results = thread::scope(|scope| {
        let mut jobs: Vec<thread::ScopedJoinHandle<'_, CheckResult>> = Vec::new();
        jobs.push(scope.spawn(move || check_supersolution_sign(d, a, cfg.harness.sign_samples)));
        jobs.push(scope.spawn(move || {
            check_comparison(d, &comparison_config(cfg))
                .unwrap_or_else(|e| errored("comparison", e))
        }));
        jobs.push(scope.spawn(move || {
            match run(d, cfg.solver.clone()) {
                Ok(rep) => check_front_law(&rep, d),
                Err(e) => Err(e),
            }
            .unwrap_or_else(|e| errored("front_law", e))
        }));
        for lemma in [Lemma::One, Lemma::Two] {
            jobs.push(scope.spawn(move || {
                check_lemma_ordering(d, a, lemma, cfg.harness.lemma_trials, cfg.seed)
                    .unwrap_or_else(|e| errored(lemma.name(), e))
            }));
        }
        let approaches: &[Approach] = if d.diffusion() == Diffusion::Slow {
            &[Approach::Forward, Approach::Backward]
        } else {
            &[Approach::Forward]
        };
        for &approach in approaches {
            jobs.push(scope.spawn(move || {
                check_asymptotic_ratio(d, a, approach)
                    .unwrap_or_else(|e| errored("asymptotic_ratio", e))
            }));
        }
        jobs.push(scope.spawn(move || convergence_classical(cfg)));
        jobs.push(scope.spawn(move || convergence_interior(cfg, d)));
        jobs.into_iter()
            .map(|j| j.join().expect("check thread panicked"))
            .collect::<Vec<_>>()
    });
    Ok(results)
}

fn write_table(dir: &Path, r: &CheckResult) -> Result<(), CmdError> {
    if let Some(t) = &r.table {
        let mut w = create(dir, &format!("{}.csv", r.name), &t.header)?;
        for row in &t.rows {
            w.write_record(row.iter().map(|x| num(*x)))?;
        }
        finish(w)?;
    }
    Ok(())
}

fn verify(cfg: &RunConfig) -> Result<i32, CmdError> {
    let results = run_checks(cfg)?;
    let dir = &cfg.output_dir;
    let checks_dir = dir.join("checks");
    std::fs::create_dir_all(&checks_dir)?;
    let mut w = create(dir, "verify.csv", &["check", "passed", "worst_violation"])?;
    let mut failed = false;
    for r in &results {
        let passed = match r.status() {
            "passed" => "true",
            "failed" => "false",
            _ => "skipped",
        };
        failed |= !r.passed() && !r.is_skipped();
        w.write_record([r.name.as_str(), passed, &num(r.worst_violation)])?;
        write_table(&checks_dir, r)?;
        println!("{:<28} {:<8} {}", r.name, r.status(), r.details);
    }
    finish(w)?;
    Ok(if failed { EXIT_VERIFY } else { EXIT_OK })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(beta: f64) -> DerivedConstants {
        derive(&ProblemParams {
            m: 2.0,
            beta,
            ..ProblemParams::default()
        })
        .unwrap()
    }

    #[test]
    fn verdicts_for_e1_and_e2() {
        assert!(verdict(&e(3.0)).starts_with("subcritical"));
        assert_eq!(
            verdict(&e(5.0)),
            "supercritical; globally solvable for a <= 0.84090"
        );
    }

    #[test]
    fn beta2_crit_row_for_e1() {
        let rows = constant_rows(&e(3.0));
        let row = rows.iter().find(|r| r.0 == "beta2_crit").unwrap();
        assert_eq!((row.1, row.2.as_str()), (4.0, "—"));
    }

    #[test]
    fn critical_diffusion_is_flagged() {
        let d = derive(&ProblemParams {
            beta: 3.0,
            ..ProblemParams::default()
        })
        .unwrap();
        let rows = constant_rows(&d);
        assert!(rows
            .iter()
            .any(|r| r.0 == "b" && r.2 == "exponential profile branch"));
    }
}
