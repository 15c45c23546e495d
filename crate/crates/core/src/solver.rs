//! Implicit finite-volume solver for the radial equation in `v = u^(1-q)`:
//!
//! ```text
//! v_t = r^(n+1-N) (r^(n1+N-1) v^(m2-1) |(v^k2)_r|^(p-2) v_r)_r + eps (1-q) t^l v^beta2
//! ```
//!
//! Implicit Euler in time, coefficients frozen by Picard iteration, one
//! tridiagonal solve per iterate.

use crate::error::{Error, Result};
use crate::ode::DEGENERACY_FLOOR;
use crate::params::{DerivedConstants, Diffusion};
use crate::profiles::{front_radius_theory, supersolution_z, Profile};
use crate::tridiag::thomas_solve;

/// Uniform radial grid `r_i = i h`, `i = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nodes: usize,
    pub radius: f64,
}

impl Grid {
    pub const MIN_NODES: usize = 16;

    pub fn new(nodes: usize, radius: f64) -> Result<Self> {
        if nodes < Self::MIN_NODES || !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParams(format!(
                "grid needs M >= {} and R > 0 (got M = {nodes}, R = {radius})",
                Self::MIN_NODES
            )));
        }
        Ok(Self { nodes, radius })
    }

    pub fn h(&self) -> f64 {
        self.radius / self.nodes as f64
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn len(&self) -> usize {
        self.nodes + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.r(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub t: f64,
    pub v: Vec<f64>,
    /// Largest `i` with `v_i` above the support threshold, `None` for zero
    /// data.
    pub front_index: Option<usize>,
}

impl GridState {
    pub fn max(&self) -> f64 {
        self.v.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Relative to the current maximum.
    pub support_threshold: f64,
    pub blowup_cap: f64,
    /// Extra snapshot times; the initial and final states are always kept.
    pub snapshot_times: Vec<f64>,
    pub nodes: usize,
    /// Outer radius; `None` picks 2.5x the predicted front at `t_end`.
    pub radius: Option<f64>,
    /// Initial data is `init_scale * z(t0, r)`.
    pub init_scale: f64,
    /// Times a failed step is retried with `dt` halved.
    pub max_halvings: u32,
    pub relaxation: Relaxation,
}

/// How a Picard iterate is formed from the frozen-coefficient solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relaxation {
    /// Take the solve as the next iterate.
    None,
    /// Aitken dynamic relaxation `v <- v + omega (solve - v)`, with `omega`
    /// updated from successive updates. Damps the oscillating mode of the
    /// frozen gradient coefficient for `p > 3`.
    Aitken,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 2.0,
            picard_tol: 1e-6,
            picard_max: 20,
            support_threshold: 1e-10,
            blowup_cap: 1e8,
            snapshot_times: Vec::new(),
            nodes: 400,
            radius: None,
            init_scale: 1.0,
            max_halvings: 20,
            relaxation: Relaxation::Aitken,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.dt > 0.0) {
            return bad(format!("dt = {} must be > 0", self.dt));
        }
        if !(self.picard_tol > 0.0) {
            return bad(format!("picard_tol = {} must be > 0", self.picard_tol));
        }
        if self.picard_max < 1 {
            return bad("picard_max must be >= 1".into());
        }
        if !(self.blowup_cap > 0.0) {
            return bad(format!("blowup_cap = {} must be > 0", self.blowup_cap));
        }
        if !(self.support_threshold >= 0.0 && self.support_threshold < 1.0) {
            return bad(format!(
                "support_threshold = {} must lie in [0, 1)",
                self.support_threshold
            ));
        }
        if !(self.init_scale >= 0.0) {
            return bad(format!("init_scale = {} must be >= 0", self.init_scale));
        }
        if self.nodes < Grid::MIN_NODES {
            return bad(format!("M = {} must be >= {}", self.nodes, Grid::MIN_NODES));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    Blowup { t: f64 },
    PicardFailure { t: f64 },
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::Blowup { .. } => "blowup",
            Termination::PicardFailure { .. } => "picard_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontRecord {
    pub t: f64,
    /// `NaN` where the rescaled time has no closed form.
    pub tau: f64,
    pub r_front: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub grid: Grid,
    pub snapshots: Vec<GridState>,
    pub steps: Vec<StepRecord>,
    pub front_history: Vec<FrontRecord>,
    pub termination: Termination,
    pub warnings: Vec<String>,
    /// Largest per-step ratio of clamped negative mass to solution mass.
    pub max_clamped_fraction: f64,
    /// Step attempts discarded and retried with half the step.
    pub rejected_steps: usize,
}

impl SolveReport {
    pub fn iterations_per_step(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.iterations).collect()
    }

    pub fn final_state(&self) -> &GridState {
        self.snapshots
            .last()
            .expect("report always holds the initial state")
    }
}

/// `v_i = vbar(t0) f(xi(t0, r_i))`, zero beyond the front and at `r = R`.
pub fn initial_condition(d: &DerivedConstants, a: f64, t0: f64, grid: &Grid) -> Result<GridState> {
    let mut v = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        v.push(supersolution_z(d, a, t0, grid.r(i))?);
    }
    v[grid.nodes] = 0.0;
    Ok(GridState {
        t: t0,
        front_index: front_index(&v, 1e-10),
        v,
    })
}

pub fn front_index(v: &[f64], threshold: f64) -> Option<usize> {
    let vmax = v.iter().cloned().fold(0.0, f64::max);
    if vmax <= 0.0 {
        return None;
    }
    v.iter().rposition(|&x| x > threshold * vmax)
}

/// Predicted front radius of `z(t, .)`.
pub fn predicted_front(d: &DerivedConstants, a: f64, t: f64) -> Result<f64> {
    front_radius_theory(d, a, d.tau(t)?)
}

pub fn default_radius(d: &DerivedConstants, a: f64, t_end: f64) -> Result<f64> {
    match d.diffusion() {
        Diffusion::Slow => Ok(2.5 * predicted_front(d, a, t_end)?),
        _ => {
            // Non-compact profiles: cut where f drops to 1e-8 of its peak.
            let prof = Profile::for_regime(d, a)?;
            let f0 = prof.value(0.0);
            let mut xi = 1.0;
            while prof.value(xi) > 1e-8 * f0 && xi < 1e8 {
                xi *= 1.5;
            }
            let tau = d.tau(t_end)?;
            d.space_map_inverse(xi * tau.powf(1.0 / d.params.p))
        }
    }
}

/// Frozen-coefficient discretization on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub grid: Grid,
    /// Control volumes with weight `r^(N-1-n)`.
    pub volumes: Vec<f64>,
    /// `r_{i+1/2}^(n1+N-1)` for `i = 0..M-1`.
    pub face_weights: Vec<f64>,
    m2: f64,
    k2: f64,
    p: f64,
    beta2: f64,
    q: f64,
    l: f64,
    epsilon: f64,
    source: bool,
}

/// Tridiagonal system `lower x_{i-1} + diag x_i + upper x_{i+1} = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl Tridiagonal {
    pub fn solve(&self) -> Result<Vec<f64>> {
        thomas_solve(&self.lower, &self.diag, &self.upper, &self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PicardOutcome {
    Converged {
        v: Vec<f64>,
        iterations: usize,
        clamped_mass: f64,
    },
    /// An iterate exceeded the blow-up cap.
    Blowup,
    NotConverged,
}

impl Discretization {
    pub fn new(d: &DerivedConstants, grid: Grid) -> Self {
        let pr = &d.params;
        let h = grid.h();
        let dn = pr.n_f64() - pr.n;
        let cap = |r: f64| r.powf(dn) / dn;
        let mut volumes = Vec::with_capacity(grid.len());
        volumes.push(cap(0.5 * h));
        for i in 1..grid.len() {
            let r = grid.r(i);
            let hi = if i == grid.nodes { r } else { r + 0.5 * h };
            volumes.push(cap(hi) - cap(r - 0.5 * h));
        }
        let fe = pr.n1 + pr.n_f64() - 1.0;
        let face_weights = (0..grid.nodes)
            .map(|i| (grid.r(i) + 0.5 * h).powf(fe))
            .collect();
        Self {
            grid,
            volumes,
            face_weights,
            m2: d.m2,
            k2: d.k2,
            p: pr.p,
            beta2: d.beta2,
            q: pr.q,
            l: pr.l,
            epsilon: pr.epsilon,
            source: pr.source,
        }
    }

    /// `D_{i+1/2} = r^(n1+N-1) vt^(m2-1) (k2 vt^(k2-1))^(p-2) |dv|^(p-2)`
    /// with `vt` the midpoint average and `dv` the difference quotient.
    pub fn flux_coefficient(&self, frozen: &[f64], i: usize) -> f64 {
        let h = self.grid.h();
        let mid = 0.5 * (frozen[i] + frozen[i + 1]);
        let dv = ((frozen[i + 1] - frozen[i]) / h).abs();
        let e = self.m2 - 1.0 + (self.k2 - 1.0) * (self.p - 2.0);
        let mid = if e < 0.0 {
            mid.max(DEGENERACY_FLOOR)
        } else {
            mid.max(0.0)
        };
        let grad = if self.p == 2.0 {
            1.0
        } else {
            (self.k2 * dv).powf(self.p - 2.0)
        };
        self.face_weights[i] * mid.powf(e) * grad
    }

    /// Implicit-Euler system for one Picard iterate, rows scaled so the
    /// diagonal is `1 + dt (D+ + D-) / (h V_i)`.
    pub fn assemble_system(
        &self,
        old: &[f64],
        frozen: &[f64],
        dt: f64,
        t_new: f64,
    ) -> Result<Tridiagonal> {
        let n = self.grid.len();
        let h = self.grid.h();
        let coeff: Vec<f64> = (0..n - 1)
            .map(|i| self.flux_coefficient(frozen, i))
            .collect();
        let src = if self.source {
            (1.0 - self.q) * t_new.powf(self.l)
        } else {
            0.0
        };
        let mut sys = Tridiagonal {
            lower: vec![0.0; n],
            diag: vec![1.0; n],
            upper: vec![0.0; n],
            rhs: old.to_vec(),
        };
        for i in 0..n - 1 {
            let scale = dt / (h * self.volumes[i]);
            let dp = coeff[i];
            let dm = if i > 0 { coeff[i - 1] } else { 0.0 };
            sys.lower[i] = -scale * dm;
            sys.upper[i] = -scale * dp;
            sys.diag[i] = 1.0 + scale * (dp + dm);
            if src != 0.0 {
                let f = frozen[i].max(0.0);
                if self.epsilon > 0.0 {
                    sys.rhs[i] += dt * src * f.powf(self.beta2);
                } else {
                    let f = if self.beta2 < 1.0 {
                        f.max(DEGENERACY_FLOOR)
                    } else {
                        f
                    };
                    sys.diag[i] += dt * src * f.powf(self.beta2 - 1.0);
                }
            }
            for (x, what) in [
                (sys.lower[i], "lower"),
                (sys.diag[i], "diag"),
                (sys.upper[i], "upper"),
                (sys.rhs[i], "rhs"),
            ] {
                if !x.is_finite() {
                    return Err(Error::NonFinite {
                        what: "assembled system",
                        detail: format!("{what} = {x} at node {i}"),
                    });
                }
            }
        }
        // Dirichlet v_M = 0.
        sys.rhs[n - 1] = 0.0;
        Ok(sys)
    }

    /// Weighted mass `sum V_i v_i`.
    pub fn mass(&self, v: &[f64]) -> f64 {
        self.volumes.iter().zip(v).map(|(w, x)| w * x).sum()
    }

    /// One implicit step with Picard iteration from `old` (time `t`) to
    /// `t + dt`.
    pub fn picard_step(
        &self,
        old: &[f64],
        t: f64,
        dt: f64,
        config: &SolverConfig,
    ) -> Result<PicardOutcome> {
        let mut frozen = old.to_vec();
        let mut omega = 1.0;
        let mut prev_update: Option<Vec<f64>> = None;
        for k in 1..=config.picard_max {
            let sys = self.assemble_system(old, &frozen, dt, t + dt)?;
            let mut v = sys.solve()?;
            let mut clamped = 0.0;
            for (x, w) in v.iter_mut().zip(&self.volumes) {
                if *x < 0.0 {
                    clamped -= *x * w;
                    *x = 0.0;
                }
            }
            let n = v.len();
            v[n - 1] = 0.0;
            let vmax = v.iter().cloned().fold(0.0, f64::max);
            if !vmax.is_finite() || vmax >= config.blowup_cap {
                return Ok(PicardOutcome::Blowup);
            }
            // Convergence is judged on the unrelaxed update.
            let update: Vec<f64> = v.iter().zip(&frozen).map(|(a, b)| a - b).collect();
            let change = update.iter().map(|x| x.abs()).fold(0.0, f64::max);
            if change <= config.picard_tol * vmax.max(1.0) {
                return Ok(PicardOutcome::Converged {
                    v,
                    iterations: k,
                    clamped_mass: clamped,
                });
            }
            match config.relaxation {
                Relaxation::None => frozen = v,
                Relaxation::Aitken => {
                    if let Some(prev) = &prev_update {
                        let (mut num, mut den) = (0.0, 0.0);
                        for (r1, r0) in update.iter().zip(prev) {
                            let dr = r1 - r0;
                            num += r0 * dr;
                            den += dr * dr;
                        }
                        if den > 0.0 {
                            let raw = -omega * num / den;
                            // raw <= 0 means a growing, non-oscillating mode
                            // (no nearby fixed point): damping cannot help.
                            omega = if raw > 0.0 {
                                raw.clamp(0.05, 10.0)
                            } else {
                                1.0
                            };
                        }
                    }
                    for (f, u) in frozen.iter_mut().zip(&update) {
                        *f = (*f + omega * u).max(0.0);
                    }
                    prev_update = Some(update);
                }
            }
        }
        Ok(PicardOutcome::NotConverged)
    }

    /// Front radius; for slow diffusion the pressure `v^(1/gamma2)` is
    /// extrapolated linearly to zero between nodes.
    pub fn front_radius(&self, v: &[f64], threshold: f64, gamma2: Option<f64>) -> f64 {
        let Some(i) = front_index(v, threshold) else {
            return 0.0;
        };
        let h = self.grid.h();
        let r = self.grid.r(i);
        match gamma2 {
            Some(g) if g > 0.0 && i > 0 && i < self.grid.nodes => {
                let pi = v[i].powf(1.0 / g);
                let pm = v[i - 1].powf(1.0 / g);
                if pm > pi {
                    r + h * (pi / (pm - pi)).min(1.0)
                } else {
                    r
                }
            }
            _ => r,
        }
    }
}

enum Advance {
    Ok,
    Blowup,
    Failed,
}

/// Relative tail size at the outer boundary that triggers a warning.
pub const TAIL_WARNING: f64 = 1e-6;

/// Time stepper holding the current state.
#[derive(Debug, Clone)]
pub struct Solver {
    pub disc: Discretization,
    pub config: SolverConfig,
    pub state: GridState,
    gamma2: Option<f64>,
    derived: DerivedConstants,
    steps: Vec<StepRecord>,
    front_history: Vec<FrontRecord>,
    max_clamped_fraction: f64,
    rejected_steps: usize,
}

impl Solver {
    /// Grid and initial data `init_scale * z(t0, .)` from the problem.
    pub fn new(d: &DerivedConstants, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let a = d.params.a;
        let radius = match config.radius {
            Some(r) => r,
            None => default_radius(d, a, config.t_end.max(d.params.t0))?,
        };
        let grid = Grid::new(config.nodes, radius)?;
        let mut state = initial_condition(d, a, d.params.t0, &grid)?;
        for x in state.v.iter_mut() {
            *x *= config.init_scale;
        }
        state.front_index = front_index(&state.v, config.support_threshold);
        Self::with_state(d, grid, config, state)
    }

    pub fn with_state(
        d: &DerivedConstants,
        grid: Grid,
        config: SolverConfig,
        state: GridState,
    ) -> Result<Self> {
        config.validate()?;
        if state.v.len() != grid.len() {
            return Err(Error::InvalidParams(format!(
                "state has {} values for {} nodes",
                state.v.len(),
                grid.len()
            )));
        }
        let mut s = Self {
            disc: Discretization::new(d, grid),
            config,
            state,
            gamma2: d.gamma2,
            derived: d.clone(),
            steps: Vec::new(),
            front_history: Vec::new(),
            max_clamped_fraction: 0.0,
            rejected_steps: 0,
        };
        s.record_front();
        Ok(s)
    }

    fn record_front(&mut self) {
        let r_front =
            self.disc
                .front_radius(&self.state.v, self.config.support_threshold, self.gamma2);
        self.front_history.push(FrontRecord {
            t: self.state.t,
            tau: self.derived.tau(self.state.t).unwrap_or(f64::NAN),
            r_front,
        });
    }

    fn advance(&mut self, dt: f64, depth: u32) -> Result<Advance> {
        let out = self
            .disc
            .picard_step(&self.state.v, self.state.t, dt, &self.config)?;
        match out {
            PicardOutcome::Converged {
                v,
                iterations,
                clamped_mass,
            } => {
                let mass = self.disc.mass(&v);
                if mass > 0.0 {
                    self.max_clamped_fraction = self.max_clamped_fraction.max(clamped_mass / mass);
                }
                self.state.t += dt;
                self.state.front_index = front_index(&v, self.config.support_threshold);
                self.state.v = v;
                self.steps.push(StepRecord {
                    t: self.state.t,
                    dt,
                    iterations,
                });
                self.record_front();
                if self.state.max() >= self.config.blowup_cap {
                    return Ok(Advance::Blowup);
                }
                Ok(Advance::Ok)
            }
            // A divergent iterate is first treated as a too-large step; only
            // at the smallest step is it taken as blow-up.
            PicardOutcome::Blowup if depth >= self.config.max_halvings => Ok(Advance::Blowup),
            PicardOutcome::NotConverged | PicardOutcome::Blowup
                if depth < self.config.max_halvings =>
            {
                self.rejected_steps += 1;
                for _ in 0..2 {
                    match self.advance(0.5 * dt, depth + 1)? {
                        Advance::Ok => {}
                        other => return Ok(other),
                    }
                }
                Ok(Advance::Ok)
            }
            PicardOutcome::NotConverged | PicardOutcome::Blowup => Ok(Advance::Failed),
        }
    }

    /// Advance by one step of (at most) `dt`, halving on Picard failure.
    /// Compact support: the front is within 0.8 R. Otherwise: the tail
    /// next to `r = R` is above `TAIL_WARNING` of the maximum.
    fn boundary_warning(&self, radius: f64) -> Option<String> {
        let t = self.state.t;
        if self.derived.diffusion() == Diffusion::Slow {
            let rf = self.front_history.last().map_or(0.0, |f| f.r_front);
            (rf >= 0.8 * radius).then(|| {
                format!("front reached {rf:.6} >= 0.8 R at t = {t:.6}; outer boundary may be felt")
            })
        } else {
            let v = &self.state.v;
            let ratio = v[v.len() - 2] / self.state.max();
            (ratio > TAIL_WARNING).then(|| {
                format!("tail at r = R is {ratio:.3e} of the maximum at t = {t:.6}; outer boundary may be felt")
            })
        }
    }

    pub fn step(&mut self, dt: f64) -> Result<Option<Termination>> {
        let t = self.state.t;
        Ok(match self.advance(dt, 0)? {
            Advance::Ok => None,
            Advance::Blowup => Some(Termination::Blowup {
                t: self.state.t.max(t),
            }),
            Advance::Failed => Some(Termination::PicardFailure { t: self.state.t }),
        })
    }

    pub fn run(mut self) -> Result<SolveReport> {
        let t_end = self.config.t_end;
        let dt = self.config.dt;
        let mut events: Vec<f64> = self
            .config
            .snapshot_times
            .iter()
            .cloned()
            .filter(|&s| s > self.state.t && s < t_end)
            .collect();
        if t_end > self.state.t {
            events.push(t_end);
        }
        events.sort_by(f64::total_cmp);
        events.dedup();

        let mut snapshots = vec![self.state.clone()];
        let mut warnings = Vec::new();
        let mut warned = false;
        let mut termination = Termination::Completed;
        let radius = self.disc.grid.radius;
        'events: for &event in &events {
            while self.state.t < event - 1e-12 * event.abs().max(1.0) {
                let mut h = dt.min(event - self.state.t);
                if event - (self.state.t + h) < 1e-9 * dt {
                    h = event - self.state.t;
                }
                if let Some(term) = self.step(h)? {
                    termination = term;
                    break 'events;
                }
                if !warned {
                    if let Some(w) = self.boundary_warning(radius) {
                        warnings.push(w);
                        warned = true;
                    }
                }
            }
            self.state.t = event;
            snapshots.push(self.state.clone());
        }
        if termination != Termination::Completed {
            snapshots.push(self.state.clone());
        }
        Ok(SolveReport {
            grid: self.disc.grid,
            snapshots,
            steps: self.steps,
            front_history: self.front_history,
            termination,
            warnings,
            max_clamped_fraction: self.max_clamped_fraction,
            rejected_steps: self.rejected_steps,
        })
    }
}

/// Build the solver from `d` and run it to `config.t_end`.
pub fn run(d: &DerivedConstants, config: SolverConfig) -> Result<SolveReport> {
    Solver::new(d, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive, ProblemParams};

    fn e2() -> ProblemParams {
        ProblemParams {
            m: 2.0,
            beta: 5.0,
            a: 0.5,
            ..ProblemParams::default()
        }
    }

    fn heat() -> ProblemParams {
        ProblemParams {
            source: false,
            ..ProblemParams::default()
        }
    }

    #[test]
    fn e2_initial_condition() {
        let d = derive(&e2()).unwrap();
        let grid = Grid::new(400, 4.0).unwrap();
        let s = initial_condition(&d, 0.5, 1.0, &grid).unwrap();
        assert!((s.v[0] - 0.35355).abs() < 1e-5);
        for (i, &v) in s.v.iter().enumerate() {
            if grid.r(i) >= 1.41422 {
                assert_eq!(v, 0.0, "r = {}", grid.r(i));
            }
        }
        let rf = predicted_front(&d, 0.5, 1.0).unwrap();
        let fi = s.front_index.unwrap() as f64 * grid.h();
        assert!((fi - rf).abs() <= grid.h());
    }

    #[test]
    fn tiny_amplitude_gives_zero_state() {
        let d = derive(&e2()).unwrap();
        let cfg = SolverConfig {
            init_scale: 0.0,
            radius: Some(4.0),
            ..SolverConfig::default()
        };
        let s = Solver::new(&d, cfg).unwrap();
        assert!(s.state.v.iter().all(|&v| v == 0.0));
        assert_eq!(s.state.front_index, None);
    }

    #[test]
    fn heat_limit_flux_is_one() {
        let d = derive(&heat()).unwrap();
        let disc = Discretization::new(&d, Grid::new(16, 1.0).unwrap());
        let v: Vec<f64> = (0..17).map(|i| (i as f64).sin()).collect();
        for i in 0..16 {
            assert_eq!(disc.flux_coefficient(&v, i), 1.0);
        }
    }

    #[test]
    fn degenerate_region_transmits_nothing() {
        let d = derive(&e2()).unwrap();
        let disc = Discretization::new(&d, Grid::new(16, 1.0).unwrap());
        assert_eq!(disc.flux_coefficient(&[0.0; 17], 3), 0.0);
        let grid = Grid::new(400, 4.0).unwrap();
        let disc = Discretization::new(&d, grid);
        let s = initial_condition(&d, 0.5, 1.0, &grid).unwrap();
        let c = disc.flux_coefficient(&s.v, 100);
        assert!(c > 0.0 && c.is_finite());
    }

    #[test]
    fn heat_limit_reproduces_textbook_stencil() {
        let d = derive(&heat()).unwrap();
        let grid = Grid::new(20, 1.0).unwrap();
        let disc = Discretization::new(&d, grid);
        let v = vec![1.0; 21];
        let (dt, h) = (1e-3, grid.h());
        let sys = disc.assemble_system(&v, &v, dt, 1.0).unwrap();
        let ratio = dt / (h * h);
        for i in 1..20 {
            assert!((sys.lower[i] + ratio).abs() < 1e-12);
            assert!((sys.upper[i] + ratio).abs() < 1e-12);
            assert!((sys.diag[i] - 1.0 - 2.0 * ratio).abs() < 1e-12);
        }
        // symmetric closure at r = 0 (half cell, one face)
        assert!((sys.upper[0] + 2.0 * ratio).abs() < 1e-12);
        assert_eq!(sys.diag[20], 1.0);
        assert_eq!(sys.rhs[20], 0.0);
    }

    #[test]
    fn vanishing_dt_gives_identity() {
        let d = derive(&e2()).unwrap();
        let grid = Grid::new(100, 4.0).unwrap();
        let disc = Discretization::new(&d, grid);
        let s = initial_condition(&d, 0.5, 1.0, &grid).unwrap();
        let sys = disc.assemble_system(&s.v, &s.v, 1e-15, 1.0).unwrap();
        for i in 0..100 {
            assert!((sys.diag[i] - 1.0).abs() < 1e-10);
            assert!(sys.lower[i].abs() < 1e-10 && sys.upper[i].abs() < 1e-10);
            assert!((sys.rhs[i] - s.v[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn absorption_is_diagonally_dominant() {
        // eps = -1 needs beta2 < 1 for real time factors; the data are E2's.
        let pr = ProblemParams {
            epsilon: -1.0,
            beta: 0.5,
            ..e2()
        };
        let d = derive(&pr).unwrap();
        let grid = Grid::new(400, 4.0).unwrap();
        let disc = Discretization::new(&d, grid);
        let s = initial_condition(&derive(&e2()).unwrap(), 0.5, 1.0, &grid).unwrap();
        let sys = disc.assemble_system(&s.v, &s.v, 1e-2, 1.0).unwrap();
        for i in 0..grid.len() {
            assert!(sys.diag[i].abs() >= sys.lower[i].abs() + sys.upper[i].abs());
        }
    }

    #[test]
    fn zero_state_converges_immediately() {
        let d = derive(&e2()).unwrap();
        let disc = Discretization::new(&d, Grid::new(50, 4.0).unwrap());
        let out = disc
            .picard_step(&[0.0; 51], 1.0, 1e-3, &SolverConfig::default())
            .unwrap();
        match out {
            PicardOutcome::Converged { v, iterations, .. } => {
                assert_eq!(iterations, 1);
                assert!(v.iter().all(|&x| x == 0.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_length_run_keeps_initial_state() {
        let d = derive(&e2()).unwrap();
        let cfg = SolverConfig {
            t_end: 1.0,
            radius: Some(4.0),
            ..SolverConfig::default()
        };
        let rep = run(&d, cfg).unwrap();
        assert_eq!(rep.snapshots.len(), 1);
        assert!(rep.steps.is_empty());
        assert_eq!(rep.termination, Termination::Completed);
    }

    #[test]
    fn snapshots_land_on_requested_times() {
        let d = derive(&e2()).unwrap();
        let cfg = SolverConfig {
            t_end: 1.1,
            dt: 0.003,
            nodes: 100,
            snapshot_times: vec![1.05, 1.0, 1.2],
            ..SolverConfig::default()
        };
        let rep = run(&d, cfg).unwrap();
        let ts: Vec<f64> = rep.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![1.0, 1.05, 1.1]);
        assert!(rep.steps.iter().all(|s| s.dt <= 0.003 + 1e-15));
    }

    #[test]
    fn bad_config_is_rejected() {
        let d = derive(&e2()).unwrap();
        for cfg in [
            SolverConfig {
                dt: 0.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                picard_max: 0,
                ..SolverConfig::default()
            },
            SolverConfig {
                nodes: 8,
                ..SolverConfig::default()
            },
        ] {
            assert!(Solver::new(&d, cfg).is_err());
        }
    }

    #[test]
    fn source_free_barenblatt_is_tracked() {
        // Source-free porous medium: the self-similar profile is an exact
        // solution, so the discrete solution stays close to it.
        let pr = ProblemParams {
            m: 2.0,
            source: false,
            ..ProblemParams::default()
        };
        let d = derive(&pr).unwrap();
        let cfg = SolverConfig {
            t_end: 2.0,
            dt: 1e-3,
            nodes: 400,
            ..SolverConfig::default()
        };
        let rep = run(&d, cfg).unwrap();
        let last = rep.final_state();
        let grid = rep.grid;
        let err = (0..grid.len())
            .map(|i| (last.v[i] - supersolution_z(&d, 1.0, 2.0, grid.r(i)).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(err < 5e-3 * last.max(), "max error {err}");
    }
}
