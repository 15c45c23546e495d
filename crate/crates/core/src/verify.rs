//! Executable checks of the construction: supersolution sign, comparison
//! with the supersolution, front law, ordering of near-front trajectories,
//! asymptotic ratios and scheme convergence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ode::{
    integrate_system, integrate_with, solve_c_fast, solve_w0, FarField, IntegrateOptions,
    NearFront, OdeState, Trajectory, TrajectoryEnd,
};
use crate::params::{DerivedConstants, Diffusion};
use crate::profiles::{
    closed_form_residual_bracket, global_solvability_condition, supersolution_z,
};
use crate::solver::{run, Grid, SolveReport, Solver, SolverConfig, Termination};

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Passed,
    Failed,
    Skipped(String),
}

/// Optional tabular output of a check.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub outcome: Outcome,
    pub worst_violation: f64,
    pub details: String,
    pub table: Option<Table>,
}

impl CheckResult {
    pub fn new(name: &str, passed: bool, worst_violation: f64, details: String) -> Self {
        Self {
            name: name.to_string(),
            outcome: if passed {
                Outcome::Passed
            } else {
                Outcome::Failed
            },
            worst_violation: worst_violation.max(0.0),
            details,
            table: None,
        }
    }

    pub fn skipped(name: &str, reason: impl Into<String>) -> Self {
        let reason = reason.into();
        Self {
            name: name.to_string(),
            outcome: Outcome::Skipped(reason.clone()),
            worst_violation: 0.0,
            details: reason,
            table: None,
        }
    }

    fn with_table(mut self, table: Table) -> Self {
        self.table = Some(table);
        self
    }

    /// Skipped checks never count as passed.
    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Passed
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self.outcome, Outcome::Skipped(_))
    }

    pub fn status(&self) -> &'static str {
        match self.outcome {
            Outcome::Passed => "passed",
            Outcome::Failed => "failed",
            Outcome::Skipped(_) => "skipped",
        }
    }
}

pub const SIGN_TOL: f64 = 1e-12;
pub const COMPARISON_TOL: f64 = 1e-8;

/// The bracket of the closed-form residual must be non-positive on the
/// support whenever the global-solvability condition holds.
pub fn check_supersolution_sign(d: &DerivedConstants, a: f64, samples: usize) -> CheckResult {
    const NAME: &str = "supersolution_sign";
    if d.diffusion() != Diffusion::Slow {
        return CheckResult::skipped(NAME, format!("{} diffusion", d.diffusion().name()));
    }
    if !global_solvability_condition(d, a) {
        return CheckResult::skipped(NAME, "hypothesis not satisfied; skipped");
    }
    let samples = samples.max(2);
    let mut worst = f64::NEG_INFINITY;
    let mut rows = Vec::with_capacity(samples);
    for i in 0..samples {
        let xi = d.xi_b * i as f64 / (samples - 1) as f64;
        let br = match closed_form_residual_bracket(d, a, xi) {
            Ok(v) => v,
            Err(e) => return CheckResult::new(NAME, false, f64::INFINITY, e.to_string()),
        };
        worst = worst.max(br);
        rows.push(vec![xi, br]);
    }
    CheckResult::new(
        NAME,
        worst <= SIGN_TOL,
        worst,
        format!("max bracket {worst:.6e} over {samples} samples on [0, xi_b]"),
    )
    .with_table(Table {
        header: vec!["xi", "bracket"],
        rows,
    })
}

/// Run the solver from `init_scale * z(t0, .)`; passes iff every snapshot
/// satisfies `v <= z + COMPARISON_TOL` and the run completes. The excess
/// after every step is tabulated too, but only reported: right after `t0`
/// the discrete front leaks one cell past the common front of `v` and `z`.
pub fn check_comparison(d: &DerivedConstants, config: &SolverConfig) -> Result<CheckResult> {
    const NAME: &str = "comparison";
    let a = d.params.a;
    if !global_solvability_condition(d, a) {
        return Ok(CheckResult::skipped(
            NAME,
            "global-solvability hypothesis not satisfied",
        ));
    }
    let excess = |t: f64, radii: &[f64], v: &[f64]| -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for (r, v) in radii.iter().zip(v) {
            worst = worst.max(v - supersolution_z(d, a, t, *r)?);
        }
        Ok(worst)
    };

    let report = run(d, config.clone())?;
    let radii = report.grid.radii();
    let mut worst = f64::NEG_INFINITY;
    for snap in &report.snapshots {
        worst = worst.max(excess(snap.t, &radii, &snap.v)?);
    }

    let mut solver = Solver::new(d, config.clone())?;
    let mut step_worst = excess(solver.state.t, &radii, &solver.state.v)?;
    let mut rows = vec![vec![solver.state.t, step_worst]];
    while solver.state.t < config.t_end - 1e-12 {
        let h = config.dt.min(config.t_end - solver.state.t);
        if solver.step(h)?.is_some() {
            break;
        }
        let e = excess(solver.state.t, &radii, &solver.state.v)?;
        rows.push(vec![solver.state.t, e]);
        step_worst = step_worst.max(e);
    }
    let term = report.termination;
    Ok(CheckResult::new(
        NAME,
        term == Termination::Completed && worst <= COMPARISON_TOL,
        worst,
        format!(
            "max(v - z) = {worst:.3e} over {} snapshots to t = {:.4} ({}); after every step: {step_worst:.3e}",
            report.snapshots.len(),
            report.final_state().t,
            term.name()
        ),
    )
    .with_table(Table {
        header: vec!["t", "max_v_minus_z"],
        rows,
    }))
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Slope of `ln r_front` against `ln tau` over the second half of the run,
/// compared with `1/(p - n - n1)` (10% tolerance).
pub fn check_front_law(report: &SolveReport, d: &DerivedConstants) -> Result<CheckResult> {
    const NAME: &str = "front_law";
    if d.diffusion() != Diffusion::Slow {
        return Ok(CheckResult::skipped(
            NAME,
            format!("{} diffusion has no front", d.diffusion().name()),
        ));
    }
    let hist: Vec<(f64, f64)> = report
        .front_history
        .iter()
        .filter(|f| f.tau > 0.0 && f.r_front > 0.0)
        .map(|f| (f.tau.ln(), f.r_front.ln()))
        .collect();
    if hist.len() < 10 {
        return Err(Error::Insufficient(format!(
            "front history has {} usable points, need 10",
            hist.len()
        )));
    }
    if report.termination != Termination::Completed {
        return Ok(CheckResult::skipped(
            NAME,
            format!("run ended with {}", report.termination.name()),
        ));
    }
    let pr = &d.params;
    let target = 1.0 / (pr.p - pr.n - pr.n1);
    let slope = ls_slope(&hist[hist.len() / 2..]);
    let dev = (slope - target).abs();
    Ok(CheckResult::new(
        NAME,
        dev <= 0.1 * target,
        (dev - 0.1 * target).max(0.0),
        format!("slope {slope:.5} vs 1/(p-n-n1) = {target:.5} (allowed +-10%)"),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lemma {
    /// `0 < K1 <= K2`, `theta1 < theta2 <= 0` give `w1 <= w2`, `z1 < z2`.
    One,
    /// `0 < K1 <= K2`, `0 >= theta1 >= theta2` give `w1 <= w2`, `z1 >= z2`.
    Two,
}

impl Lemma {
    pub fn name(self) -> &'static str {
        match self {
            Lemma::One => "lemma1_ordering",
            Lemma::Two => "lemma2_ordering",
        }
    }

    /// Whether `(K1, theta1), (K2, theta2)` satisfies the hypotheses.
    pub fn admissible(self, k1: f64, th1: f64, k2: f64, th2: f64) -> bool {
        let ks = 0.0 < k1 && k1 <= k2;
        match self {
            Lemma::One => ks && th1 < th2 && th2 <= 0.0,
            Lemma::Two => ks && 0.0 >= th1 && th1 >= th2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairOutcome {
    Holds,
    Violated {
        eta: f64,
        amount: f64,
    },
    /// The pair does not satisfy the lemma's hypotheses.
    Skipped,
    TrajectoryFailure(String),
}

pub const LEMMA_WINDOW: (f64, f64) = (5.0, 25.0);
const LEMMA_TOL: f64 = 1e-9;
const LEMMA_POINTS: usize = 2001;

/// Integrate both initial data `(w, z) = (K, theta)` at `window.0` and test
/// the lemma's ordering on the common interval where both `w` stay positive.
pub fn lemma_pair(
    nf: &NearFront,
    lemma: Lemma,
    (k1, th1): (f64, f64),
    (k2, th2): (f64, f64),
    window: (f64, f64),
) -> PairOutcome {
    if !lemma.admissible(k1, th1, k2, th2) {
        return PairOutcome::Skipped;
    }
    let run = |k, th| integrate_system(nf, OdeState::new(window.0, k, th), window.1, 1e-10);
    let (t1, t2) = match (run(k1, th1), run(k2, th2)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return PairOutcome::TrajectoryFailure(e.to_string()),
    };
    let hi = t1.span().1.min(t2.span().1);
    let mut worst: Option<(f64, f64)> = None;
    for i in 0..LEMMA_POINTS {
        let eta = window.0 + (hi - window.0) * i as f64 / (LEMMA_POINTS - 1) as f64;
        let (Some(s1), Some(s2)) = (t1.at(eta), t2.at(eta)) else {
            continue;
        };
        if s1.w <= 0.0 || s2.w <= 0.0 {
            break;
        }
        let scale = |x: f64, y: f64| LEMMA_TOL * (1.0 + x.abs().max(y.abs()));
        let dw = s1.w - s2.w - scale(s1.w, s2.w);
        let dz = match lemma {
            Lemma::One => s1.z - s2.z - scale(s1.z, s2.z),
            Lemma::Two => s2.z - s1.z - scale(s1.z, s2.z),
        };
        let v = dw.max(dz);
        if v > 0.0 && worst.is_none_or(|(_, a)| v > a) {
            worst = Some((eta, v));
        }
    }
    match worst {
        None => PairOutcome::Holds,
        Some((eta, amount)) => PairOutcome::Violated { eta, amount },
    }
}

/// Random admissible pairs: `K ~ U(0, 2]`, `theta ~ U[-2, 0]`, sorted into
/// the lemma's order.
pub fn check_lemma_ordering(
    d: &DerivedConstants,
    a: f64,
    lemma: Lemma,
    trials: usize,
    seed: u64,
) -> Result<CheckResult> {
    let name = lemma.name();
    if d.diffusion() != Diffusion::Slow {
        return Ok(CheckResult::skipped(
            name,
            format!("{} diffusion", d.diffusion().name()),
        ));
    }
    let nf = NearFront::new(d, a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    let mut done = 0usize;
    while done < trials {
        let mut k = [2.0 - 2.0 * rng.gen::<f64>(), 2.0 - 2.0 * rng.gen::<f64>()];
        let mut th = [-2.0 * rng.gen::<f64>(), -2.0 * rng.gen::<f64>()];
        k.sort_by(f64::total_cmp);
        match lemma {
            Lemma::One => th.sort_by(f64::total_cmp),
            Lemma::Two => th.sort_by(|x, y| y.total_cmp(x)),
        }
        if !lemma.admissible(k[0], th[0], k[1], th[1]) {
            // ties in theta for Lemma 1
            continue;
        }
        done += 1;
        let out = lemma_pair(&nf, lemma, (k[0], th[0]), (k[1], th[1]), LEMMA_WINDOW);
        let (ok, amount, eta) = match out {
            PairOutcome::Holds => (true, 0.0, f64::NAN),
            PairOutcome::Violated { eta, amount } => (false, amount, eta),
            PairOutcome::TrajectoryFailure(_) => (false, f64::INFINITY, f64::NAN),
            PairOutcome::Skipped => unreachable!("pairs are admissible by construction"),
        };
        if !ok {
            failures += 1;
            worst = worst.max(amount);
        }
        rows.push(vec![k[0], th[0], k[1], th[1], ok as u8 as f64, amount, eta]);
    }
    Ok(CheckResult::new(
        name,
        failures == 0,
        worst,
        format!(
            "{failures}/{trials} trials violate the ordering on eta in [{}, {}] (seed {seed})",
            LEMMA_WINDOW.0, LEMMA_WINDOW.1
        ),
    )
    .with_table(Table {
        header: vec!["k1", "theta1", "k2", "theta2", "holds", "violation", "eta"],
        rows,
    }))
}

/// Direction in which near-front trajectories approach the rest point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    /// From `eta = 5` forward to `eta = 25`.
    Forward,
    /// From `eta = 45` backward to `eta = 25`; the rest point attracts in
    /// this direction.
    Backward,
}

pub const RATIO_STARTS: [f64; 3] = [0.7, 1.0, 1.3];

/// Slow diffusion: near-front trajectories started at `w = c w0` (`c` in
/// [`RATIO_STARTS`], `z` on the rest-point curve) must be within 1% of `w0`
/// at `eta = 25`. Fast diffusion: far-field trajectories from
/// `w(5) = c C`, with `z(5)` found by shooting, within 2% of `C` at 25.
pub fn check_asymptotic_ratio(
    d: &DerivedConstants,
    a: f64,
    approach: Approach,
) -> Result<CheckResult> {
    match d.diffusion() {
        Diffusion::Slow => slow_ratio(d, a, approach),
        Diffusion::Fast => fast_ratio(d, a),
        Diffusion::Critical => Ok(CheckResult::skipped(
            "asymptotic_ratio",
            "critical diffusion has no algebraic limit",
        )),
    }
}

fn slow_ratio(d: &DerivedConstants, a: f64, approach: Approach) -> Result<CheckResult> {
    let name = match approach {
        Approach::Forward => "asymptotic_ratio_forward",
        Approach::Backward => "asymptotic_ratio_backward",
    };
    let nf = NearFront::new(d, a)?;
    let w0 = solve_w0(d, a)?;
    let eta0 = match approach {
        Approach::Forward => 5.0,
        Approach::Backward => 45.0,
    };
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for c in RATIO_STARTS {
        let w = c * w0;
        let tr = integrate_system(&nf, OdeState::new(eta0, w, nf.limit_z(w)), 25.0, 1e-10)?;
        let dev = match (tr.end, tr.at(25.0)) {
            (TrajectoryEnd::Completed, Some(s)) => (s.w / w0 - 1.0).abs(),
            _ => f64::INFINITY,
        };
        notes.push(format!("w={w:.2}: {}", describe_end(&tr, w0)));
        worst = worst.max(dev);
    }
    Ok(CheckResult::new(
        name,
        worst <= 0.01,
        worst,
        format!("w0 = {w0:.12}; {}", notes.join("; ")),
    ))
}

fn describe_end(tr: &Trajectory, limit: f64) -> String {
    let last = tr.last();
    match tr.end {
        TrajectoryEnd::Completed => format!("w(25)/limit = {:.6}", last.w / limit),
        TrajectoryEnd::NonPositive => format!("w reached 0 at eta = {:.3}", last.eta),
        TrajectoryEnd::Escaped => format!("escaped at eta = {:.3} (w = {:.3e})", last.eta, last.w),
    }
}

/// Far-field end state for shooting: positive if the trajectory ends above
/// `C`, negative below.
fn shoot_sign(ff: &FarField, w: f64, z: f64, c: f64, eta_end: f64) -> Result<(f64, Trajectory)> {
    // Escaping trajectories turn stiff; w far above C settles the sign.
    let opts = IntegrateOptions {
        escape_limit: 1e3 * c.max(w),
        ..IntegrateOptions::new(1e-11)
    };
    let tr = integrate_with(ff, OdeState::new(5.0, w, z), eta_end, &opts)?;
    let s = match tr.end {
        TrajectoryEnd::NonPositive => -1.0,
        TrajectoryEnd::Escaped => 1.0,
        TrajectoryEnd::Completed => (tr.last().w - c).signum(),
    };
    Ok((s, tr))
}

fn fast_ratio(d: &DerivedConstants, a: f64) -> Result<CheckResult> {
    const NAME: &str = "asymptotic_ratio_fast";
    let ff = FarField::new(d, a)?;
    let c = solve_c_fast(d, a)?;
    let eta_end = 40.0;
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for k in RATIO_STARTS {
        let w = k * c;
        let zc = ff.limit_z(w);
        let mut span = zc.abs().max(1e-3);
        let (mut lo, mut hi) = (zc, zc);
        let mut bracketed = false;
        for _ in 0..60 {
            lo = zc - span;
            hi = zc + span;
            let (sl, _) = shoot_sign(&ff, w, lo, c, eta_end)?;
            let (sh, _) = shoot_sign(&ff, w, hi, c, eta_end)?;
            if sl < 0.0 && sh > 0.0 {
                bracketed = true;
                break;
            }
            span *= 2.0;
        }
        if !bracketed {
            notes.push(format!("w={w:.4}: no shooting bracket"));
            worst = f64::INFINITY;
            continue;
        }
        let mut best = None;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let (s, tr) = shoot_sign(&ff, w, mid, c, eta_end)?;
            if s < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            best = Some(tr);
        }
        let dev = best
            .as_ref()
            .and_then(|tr| tr.at(25.0))
            .map_or(f64::INFINITY, |s| (s.w / c - 1.0).abs());
        notes.push(format!("w={w:.4}: z(5)={lo:.10}, |w(25)/C-1|={dev:.2e}"));
        worst = worst.max(dev);
    }
    Ok(CheckResult::new(
        NAME,
        worst <= 0.02,
        worst,
        format!("C = {c:.12}; {}", notes.join("; ")),
    ))
}

/// Level differences of a refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    /// `(M, dt, |v_j - v_{j+1}|)` with `h -> h/2`, `dt -> dt/4` per level.
    pub joint: Vec<(usize, f64, f64)>,
    /// `(dt, |v_j - v_{j+1}|)` at the finest `M`, `dt -> dt/2` per level.
    pub temporal: Vec<(f64, f64)>,
    pub spatial_order: f64,
    pub temporal_order: f64,
    /// Ratios of successive joint differences (4 for second order in
    /// space, first in time).
    pub joint_ratios: Vec<f64>,
}

/// Base configuration of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub nodes: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Outer radius (fixed across levels so grids nest).
    pub radius: f64,
    /// Restrict the error norm to `r <= interior * radius`.
    pub interior: f64,
}

fn run_level(d: &DerivedConstants, base: &StudyConfig, nodes: usize, dt: f64) -> Result<Vec<f64>> {
    let cfg = SolverConfig {
        dt,
        t_end: base.t_end,
        nodes,
        radius: Some(base.radius),
        picard_tol: 1e-12,
        picard_max: 100,
        ..SolverConfig::default()
    };
    let rep = Solver::new(d, cfg)?.run()?;
    if rep.termination != Termination::Completed {
        return Err(Error::Insufficient(format!(
            "refinement run ended with {}",
            rep.termination.name()
        )));
    }
    Ok(rep.final_state().v.clone())
}

fn nested_error(coarse: &[f64], fine: &[f64], grid: &Grid, interior: f64) -> f64 {
    let stride = (fine.len() - 1) / (coarse.len() - 1);
    coarse
        .iter()
        .enumerate()
        .filter(|(i, _)| grid.r(*i) <= interior * grid.radius + 1e-12)
        .map(|(i, v)| (v - fine[i * stride]).abs())
        .fold(0.0, f64::max)
}

/// Orders from successive level differences (no reference solution), in
/// space-time jointly and in time alone. Norms are taken on the coarser
/// grid of each pair.
pub fn convergence_study(
    d: &DerivedConstants,
    base: &StudyConfig,
    levels: usize,
) -> Result<ConvergenceStudy> {
    if levels < 3 {
        return Err(Error::Insufficient(format!(
            "convergence study needs >= 3 levels, got {levels}"
        )));
    }
    let pow2 = |j: usize| (1usize << j) as f64;
    let mut joint = Vec::new();
    let mut prev: Option<(usize, f64, Vec<f64>)> = None;
    for j in 0..levels {
        let m = base.nodes << j;
        let dt = base.dt / pow2(2 * j);
        let v = run_level(d, base, m, dt)?;
        if let Some((pm, pdt, pv)) = prev.take() {
            let e = nested_error(&pv, &v, &Grid::new(pm, base.radius)?, base.interior);
            joint.push((pm, pdt, e));
        }
        prev = Some((m, dt, v));
    }
    // Temporal: finest space grid of the study, dt halved per level.
    let m_t = base.nodes << (levels - 1);
    let grid_t = Grid::new(m_t, base.radius)?;
    let mut temporal = Vec::new();
    let mut prev: Option<(f64, Vec<f64>)> = None;
    for j in 0..levels {
        let dt = base.dt / pow2(j);
        let v = run_level(d, base, m_t, dt)?;
        if let Some((pdt, pv)) = prev.take() {
            temporal.push((pdt, nested_error(&pv, &v, &grid_t, base.interior)));
        }
        prev = Some((dt, v));
    }
    let joint_ratios: Vec<f64> = joint.windows(2).map(|w| w[0].2 / w[1].2).collect();
    // h -> h/2 with dt -> dt/4 scales both error terms by 4 for a
    // (2, 1) scheme, so the spatial order is log2 of the joint ratio.
    let spatial_order = joint_ratios.last().map_or(f64::NAN, |r| r.log2());
    let temporal_order = temporal
        .windows(2)
        .last()
        .map_or(f64::NAN, |w| (w[0].1 / w[1].1).log2());
    Ok(ConvergenceStudy {
        joint,
        temporal,
        spatial_order,
        temporal_order,
        joint_ratios,
    })
}

/// Passes iff the spatial order is at least 1.5 and the temporal order at
/// least 0.8.
pub fn check_convergence(
    d: &DerivedConstants,
    base: &StudyConfig,
    levels: usize,
) -> Result<CheckResult> {
    let st = convergence_study(d, base, levels)?;
    let passed = st.spatial_order >= 1.5 && st.temporal_order >= 0.8;
    let shortfall = (1.5 - st.spatial_order)
        .max(0.8 - st.temporal_order)
        .max(0.0);
    let rows = st
        .joint
        .iter()
        .map(|&(m, dt, e)| vec![m as f64, dt, e])
        .collect();
    Ok(CheckResult::new(
        "convergence",
        passed,
        shortfall,
        format!(
            "spatial order {:.3}, temporal order {:.3}, joint ratios {:?}",
            st.spatial_order, st.temporal_order, st.joint_ratios
        ),
    )
    .with_table(Table {
        header: vec!["M", "dt", "error"],
        rows,
    }))
}
