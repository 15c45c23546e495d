//! The self-similar profile equation and its first-order reductions near
//! the front and in the far field.
//!
//! Near the front of a compactly supported profile the unknown is written as
//! `f = (a - b xi^gamma1)^gamma2 w(eta)` with `eta = -ln(a - b xi^gamma1)`;
//! in the fast-diffusion far field as `f = A (a + xi^gamma1)^gamma2 w(eta)`
//! with `eta = ln(a + xi^gamma1)`. In both cases `z = w^mu |Lw|^(p-2) Lw`
//! turns the second-order equation into a planar system for `(w, z)`.

use crate::error::{Error, Result};
use crate::params::{DerivedConstants, Diffusion, BRANCH_TOL};

/// Operands raised to negative powers are floored here.
pub const DEGENERACY_FLOOR: f64 = 1e-14;

/// Trajectories stop once `|w|` or `|z|` exceeds this.
/// `w / |w'|` below which an underflowing step counts as extinction.
pub const COLLAPSE_HORIZON: f64 = 1e-3;
pub const ESCAPE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeState {
    pub eta: f64,
    pub w: f64,
    pub z: f64,
}

impl OdeState {
    pub fn new(eta: f64, w: f64, z: f64) -> Self {
        Self { eta, w, z }
    }
}

/// A planar, non-autonomous system `(w, z)' = F(eta, w, z)`.
pub trait PlanarSystem {
    fn rhs(&self, eta: f64, w: f64, z: f64) -> Result<(f64, f64)>;
}

impl<F> PlanarSystem for F
where
    F: Fn(f64, f64, f64) -> Result<(f64, f64)>,
{
    fn rhs(&self, eta: f64, w: f64, z: f64) -> Result<(f64, f64)> {
        self(eta, w, z)
    }
}

/// `Lw = w^(-mu/(p-1)) |z|^(gamma1-2) z`, the inverse of the flux map.
fn flux_inverse(w: f64, z: f64, mu: f64, p: f64, gamma1: f64) -> f64 {
    let we = -mu / (p - 1.0);
    let w = if we < 0.0 { w.max(DEGENERACY_FLOOR) } else { w };
    let ze = gamma1 - 2.0;
    let za = if ze < 0.0 {
        z.abs().max(DEGENERACY_FLOOR)
    } else {
        z.abs()
    };
    w.powf(we) * za.powf(ze) * z
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearFrontCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

/// Near-front system for slow diffusion:
///
/// ```text
/// w' = gamma2 w + Lw
/// z' = -a1 z - a2 Lw - a3 w - a4 w^beta2
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearFront {
    pub a: f64,
    pub p: f64,
    pub s: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub mu: f64,
    pub l7: f64,
    pub beta2: f64,
    pub source: bool,
}

impl NearFront {
    pub fn new(d: &DerivedConstants, a: f64) -> Result<Self> {
        let gamma2 = match d.gamma2 {
            Some(g) if g > 0.0 => g,
            _ => {
                return Err(Error::Regime {
                    what: "near-front system",
                    regime: d.diffusion().name(),
                })
            }
        };
        Ok(Self {
            a,
            p: d.params.p,
            s: d.s()?,
            gamma1: d.gamma1,
            gamma2,
            gamma3: d.gamma3.ok_or(Error::Regime {
                what: "gamma3",
                regime: d.diffusion().name(),
            })?,
            mu: d.mu,
            l7: d.l7()?,
            beta2: d.beta2,
            source: d.params.source,
        })
    }

    /// `e^(-eta) / (a - e^(-eta))`; the pole sits at `eta = -ln a`.
    pub fn a0(&self, eta: f64) -> Result<f64> {
        let x = (-eta).exp();
        let den = self.a - x;
        if den <= 0.0 {
            return Err(Error::Domain {
                what: "a0",
                detail: format!("eta = {eta} is not beyond -ln a = {}", -self.a.ln()),
            });
        }
        Ok(x / den)
    }

    pub fn coefficients(&self, eta: f64) -> Result<NearFrontCoefficients> {
        let a0 = self.a0(eta)?;
        let a3 = self.gamma3 / self.l7 * a0;
        let a4 = if self.source {
            a3 * (self.gamma2 * (1.0 - self.beta2) * eta).exp()
        } else {
            0.0
        };
        Ok(NearFrontCoefficients {
            a0,
            a1: self.s / self.gamma1 * a0 - self.gamma2,
            a2: self.gamma1 * self.gamma3 / self.p,
            a3,
            a4,
        })
    }

    /// The fixed point `(w0, z0)` reached as `eta -> infinity` when the
    /// limit of `a4` vanishes.
    pub fn limit_z(&self, w: f64) -> f64 {
        -self.gamma2.powf(self.p - 1.0) * w.powf(self.mu + self.p - 1.0)
    }
}

impl PlanarSystem for NearFront {
    fn rhs(&self, eta: f64, w: f64, z: f64) -> Result<(f64, f64)> {
        let c = self.coefficients(eta)?;
        let lw = flux_inverse(w, z, self.mu, self.p, self.gamma1);
        let dw = self.gamma2 * w + lw;
        let mut dz = -c.a1 * z - c.a2 * lw - c.a3 * w;
        if c.a4 != 0.0 {
            dz -= c.a4 * w.powf(self.beta2);
        }
        check_finite("near-front rhs", eta, dw, dz)?;
        Ok((dw, dz))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarFieldCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

/// Far-field system for fast diffusion:
///
/// ```text
/// w' = -gamma2 w + Lw
/// z' = -b1 z - b2 Lw - b3 w - b4 w^beta2
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarField {
    pub a: f64,
    pub p: f64,
    pub s: f64,
    pub k2: f64,
    pub kappa: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub amplitude: f64,
    pub mu: f64,
    pub l7: f64,
    pub beta2: f64,
    pub source: bool,
}

impl FarField {
    pub fn new(d: &DerivedConstants, a: f64) -> Result<Self> {
        let (gamma2, amplitude) = match (d.gamma2, d.fast_amplitude) {
            (Some(g), Some(amp)) if g < 0.0 => (g, amp),
            _ => {
                return Err(Error::Regime {
                    what: "far-field system",
                    regime: d.diffusion().name(),
                })
            }
        };
        Ok(Self {
            a,
            p: d.params.p,
            s: d.s()?,
            k2: d.k2,
            kappa: d.kappa,
            gamma1: d.gamma1,
            gamma2,
            amplitude,
            mu: d.mu,
            l7: d.l7()?,
            beta2: d.beta2,
            source: d.params.source,
        })
    }

    /// `1 / (1 - a e^(-eta))`; the pole sits at `eta = ln a`.
    pub fn b0(&self, eta: f64) -> Result<f64> {
        let den = 1.0 - self.a * (-eta).exp();
        if den <= 0.0 {
            return Err(Error::Domain {
                what: "b0",
                detail: format!("eta = {eta} is not beyond ln a = {}", self.a.ln()),
            });
        }
        Ok(1.0 / den)
    }

    /// `gamma1^(-p) A^(-kappa) k2^(2-p)`, the common scale of `b3`, `b4`.
    fn scale(&self) -> f64 {
        self.gamma1.powf(-self.p) * self.amplitude.powf(-self.kappa) * self.k2.powf(2.0 - self.p)
    }

    pub fn coefficients(&self, eta: f64) -> Result<FarFieldCoefficients> {
        let b0 = self.b0(eta)?;
        let scale = self.scale();
        let b4 = if self.source {
            scale * self.amplitude.powf(self.beta2 - 1.0) * b0 / self.l7
                * (self.gamma2 * (self.beta2 - 1.0) * eta).exp()
        } else {
            0.0
        };
        Ok(FarFieldCoefficients {
            b0,
            b1: self.s / self.gamma1 * b0 + self.gamma2,
            b2: scale * self.gamma1 / self.p,
            b3: scale * b0 / self.l7,
            b4,
        })
    }

    /// `z` at a rest point `w' = 0`, where `Lw = gamma2 w`.
    pub fn limit_z(&self, w: f64) -> f64 {
        let g = self.gamma2;
        g * g.abs().powf(self.p - 2.0) * w.powf(self.mu + self.p - 1.0)
    }
}

impl PlanarSystem for FarField {
    fn rhs(&self, eta: f64, w: f64, z: f64) -> Result<(f64, f64)> {
        let c = self.coefficients(eta)?;
        let lw = flux_inverse(w, z, self.mu, self.p, self.gamma1);
        let dw = -self.gamma2 * w + lw;
        let mut dz = -c.b1 * z - c.b2 * lw - c.b3 * w;
        if c.b4 != 0.0 {
            dz -= c.b4 * w.powf(self.beta2);
        }
        check_finite("far-field rhs", eta, dw, dz)?;
        Ok((dw, dz))
    }
}

fn check_finite(what: &'static str, eta: f64, dw: f64, dz: f64) -> Result<()> {
    if dw.is_finite() && dz.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what,
            detail: format!("eta = {eta}: dw = {dw}, dz = {dz}"),
        })
    }
}

const NON_POSITIVE: &str = "w left the positive half-plane";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryEnd {
    Completed,
    /// `w` reached zero.
    NonPositive,
    /// `|w|` or `|z|` exceeded [`ESCAPE_LIMIT`].
    Escaped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    state: OdeState,
    dw: f64,
    dz: f64,
}

/// Accepted integration steps with cubic Hermite dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    nodes: Vec<Node>,
    pub end: TrajectoryEnd,
}

impl Trajectory {
    pub fn first(&self) -> OdeState {
        self.nodes[0].state
    }

    pub fn last(&self) -> OdeState {
        self.nodes[self.nodes.len() - 1].state
    }

    pub fn states(&self) -> impl Iterator<Item = OdeState> + '_ {
        self.nodes.iter().map(|n| n.state)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Covered `eta` interval, ordered.
    pub fn span(&self) -> (f64, f64) {
        let (a, b) = (self.first().eta, self.last().eta);
        (a.min(b), a.max(b))
    }

    /// Interpolated state; `None` outside the covered interval.
    pub fn at(&self, eta: f64) -> Option<OdeState> {
        let (lo, hi) = self.span();
        if eta < lo || eta > hi {
            return None;
        }
        let forward = self.last().eta >= self.first().eta;
        let idx = self.nodes.partition_point(|n| {
            if forward {
                n.state.eta < eta
            } else {
                n.state.eta > eta
            }
        });
        if idx == 0 {
            return Some(self.nodes[0].state);
        }
        let (n0, n1) = (
            &self.nodes[idx - 1],
            &self.nodes[idx.min(self.nodes.len() - 1)],
        );
        let h = n1.state.eta - n0.state.eta;
        if h == 0.0 {
            return Some(n1.state);
        }
        let t = (eta - n0.state.eta) / h;
        let herm = |y0: f64, y1: f64, d0: f64, d1: f64| {
            let t2 = t * t;
            let t3 = t2 * t;
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                + (t3 - 2.0 * t2 + t) * h * d0
                + (-2.0 * t3 + 3.0 * t2) * y1
                + (t3 - t2) * h * d1
        };
        Some(OdeState {
            eta,
            w: herm(n0.state.w, n1.state.w, n0.dw, n1.dw),
            z: herm(n0.state.z, n1.state.z, n0.dz, n1.dz),
        })
    }
}

fn rk4<S: PlanarSystem + ?Sized>(sys: &S, s: OdeState, h: f64) -> Result<(f64, f64)> {
    let positive = |w: f64| {
        if w > 0.0 {
            Ok(w)
        } else {
            Err(Error::Domain {
                what: NON_POSITIVE,
                detail: format!("stage w = {w}"),
            })
        }
    };
    let (k1w, k1z) = sys.rhs(s.eta, s.w, s.z)?;
    let w2 = positive(s.w + 0.5 * h * k1w)?;
    let (k2w, k2z) = sys.rhs(s.eta + 0.5 * h, w2, s.z + 0.5 * h * k1z)?;
    let w3 = positive(s.w + 0.5 * h * k2w)?;
    let (k3w, k3z) = sys.rhs(s.eta + 0.5 * h, w3, s.z + 0.5 * h * k2z)?;
    let w4 = positive(s.w + h * k3w)?;
    let (k4w, k4z) = sys.rhs(s.eta + h, w4, s.z + h * k3z)?;
    Ok((
        s.w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
        s.z + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z),
    ))
}

/// Adaptive RK4 with step-doubling error control from `initial` to
/// `eta_end` (either direction). Stops early when `w` reaches zero or the
/// state escapes.
pub fn integrate_system<S: PlanarSystem + ?Sized>(
    sys: &S,
    initial: OdeState,
    eta_end: f64,
    tolerance: f64,
) -> Result<Trajectory> {
    integrate_with(sys, initial, eta_end, &IntegrateOptions::new(tolerance))
}

/// As [`integrate_system`] with `|step| <= max_step`. Small caps make the
/// dense output smooth enough to be differentiated twice.
pub fn integrate_system_capped<S: PlanarSystem + ?Sized>(
    sys: &S,
    initial: OdeState,
    eta_end: f64,
    tolerance: f64,
    max_step: f64,
) -> Result<Trajectory> {
    let opts = IntegrateOptions {
        max_step,
        ..IntegrateOptions::new(tolerance)
    };
    integrate_with(sys, initial, eta_end, &opts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub tolerance: f64,
    pub max_step: f64,
    /// Stop with [`TrajectoryEnd::Escaped`] once `|w|` or `|z|` exceeds this.
    pub escape_limit: f64,
}

impl IntegrateOptions {
    pub fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            max_step: f64::INFINITY,
            escape_limit: ESCAPE_LIMIT,
        }
    }
}

pub fn integrate_with<S: PlanarSystem + ?Sized>(
    sys: &S,
    initial: OdeState,
    eta_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let IntegrateOptions {
        tolerance,
        max_step,
        escape_limit,
    } = *opts;
    if !(initial.w > 0.0) {
        return Err(Error::Domain {
            what: "integrate_system",
            detail: format!("initial w = {} must be > 0", initial.w),
        });
    }
    if !(tolerance > 0.0) {
        return Err(Error::Domain {
            what: "integrate_system",
            detail: format!("tolerance = {tolerance} must be > 0"),
        });
    }
    let span = eta_end - initial.eta;
    let dir = if span >= 0.0 { 1.0 } else { -1.0 };
    let (dw, dz) = sys.rhs(initial.eta, initial.w, initial.z)?;
    let mut nodes = vec![Node {
        state: initial,
        dw,
        dz,
    }];
    if span == 0.0 {
        return Ok(Trajectory {
            nodes,
            end: TrajectoryEnd::Completed,
        });
    }
    let mut h = dir * (span.abs() / 100.0).min(0.1).min(max_step);
    let mut cur = initial;
    let end = loop {
        if (eta_end - cur.eta) * dir <= 0.0 {
            break TrajectoryEnd::Completed;
        }
        if (cur.eta + h - eta_end) * dir > 0.0 {
            h = eta_end - cur.eta;
        }
        let hmin = 1e-13 * (1.0 + cur.eta.abs());
        let attempt = (|| -> Result<(f64, f64, f64)> {
            let full = rk4(sys, cur, h)?;
            let mid = rk4(sys, cur, 0.5 * h)?;
            if !(mid.0 > 0.0) {
                return Err(Error::Domain {
                    what: NON_POSITIVE,
                    detail: format!("midpoint w = {}", mid.0),
                });
            }
            let half = rk4(sys, OdeState::new(cur.eta + 0.5 * h, mid.0, mid.1), 0.5 * h)?;
            let ew = (half.0 - full.0).abs() / (tolerance * (1.0 + half.0.abs()));
            let ez = (half.1 - full.1).abs() / (tolerance * (1.0 + half.1.abs()));
            Ok((
                half.0 + (half.0 - full.0) / 15.0,
                half.1 + (half.1 - full.1) / 15.0,
                ew.max(ez) / 15.0,
            ))
        })();
        match attempt {
            Ok((w, z, err)) if err <= 1.0 && w > 0.0 && w.is_finite() && z.is_finite() => {
                let eta = cur.eta + h;
                cur = OdeState::new(eta, w, z);
                let (dw, dz) = sys.rhs(eta, w, z)?;
                nodes.push(Node { state: cur, dw, dz });
                if w.abs() > escape_limit || z.abs() > escape_limit {
                    break TrajectoryEnd::Escaped;
                }
                let grow = if err == 0.0 {
                    4.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 4.0)
                };
                h = (h * grow).clamp(-max_step, max_step);
            }
            Ok((w, _, err)) if err <= 1.0 && !(w > 0.0) => {
                if h.abs() <= hmin {
                    break TrajectoryEnd::NonPositive;
                }
                h *= 0.25;
            }
            Ok((_, _, err)) if err.is_finite() => {
                if h.abs() <= hmin {
                    // Unresolvable collapse of w onto zero is an extinction,
                    // not a failure.
                    let last = nodes.last().expect("nonempty");
                    if last.dw * dir < 0.0 && cur.w <= COLLAPSE_HORIZON * last.dw.abs() {
                        break TrajectoryEnd::NonPositive;
                    }
                    return Err(Error::StepUnderflow { eta: cur.eta });
                }
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
            }
            Err(Error::Domain {
                what: NON_POSITIVE, ..
            }) => {
                // w hits zero inside the step: shrink onto the crossing.
                if h.abs() <= hmin {
                    break TrajectoryEnd::NonPositive;
                }
                h *= 0.25;
            }
            _ => {
                if h.abs() <= hmin {
                    return Err(Error::StepUnderflow { eta: cur.eta });
                }
                h *= 0.25;
            }
        }
    };
    Ok(Trajectory { nodes, end })
}

/// Limit of `a4` as `eta -> infinity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Limit {
    Zero,
    Finite(f64),
    Infinite,
}

impl Limit {
    pub fn value(self) -> f64 {
        match self {
            Limit::Zero => 0.0,
            Limit::Finite(v) => v,
            Limit::Infinite => f64::INFINITY,
        }
    }
}

/// Three-way limit of `a4`: `gamma3/(a l7)` when `gamma2 (1-beta2) = 1`,
/// zero below, infinite above.
pub fn slow_limit_a4(d: &DerivedConstants, a: f64) -> Result<Limit> {
    let nf = NearFront::new(d, a)?;
    if !nf.source {
        return Ok(Limit::Zero);
    }
    let e = nf.gamma2 * (1.0 - nf.beta2);
    Ok(if (e - 1.0).abs() <= BRANCH_TOL {
        Limit::Finite(nf.gamma3 / (a * nf.l7))
    } else if e < 1.0 {
        Limit::Zero
    } else {
        Limit::Infinite
    })
}

/// Left-hand side of the algebraic equation for the near-front limit `w0`:
/// `gamma2^p w^kappa - a2 gamma2 + a4_lim w^(beta2-1)`.
pub fn w0_equation(d: &DerivedConstants, a: f64, w: f64) -> Result<f64> {
    let nf = NearFront::new(d, a)?;
    let lim = slow_limit_a4(d, a)?.value();
    let a2 = nf.gamma1 * nf.gamma3 / nf.p;
    let mut v = nf.gamma2.powf(nf.p) * w.powf(d.kappa) - a2 * nf.gamma2;
    if lim != 0.0 {
        v += lim * w.powf(nf.beta2 - 1.0);
    }
    Ok(v)
}

/// Positive root of [`w0_equation`].
pub fn solve_w0(d: &DerivedConstants, a: f64) -> Result<f64> {
    if d.diffusion() != Diffusion::Slow {
        return Err(Error::Regime {
            what: "w0",
            regime: d.diffusion().name(),
        });
    }
    if slow_limit_a4(d, a)? == Limit::Infinite {
        return Err(Error::Regime {
            what: "w0 (a4 limit is infinite)",
            regime: "gamma2 (1 - beta2) > 1",
        });
    }
    positive_root("w0", |w| w0_equation(d, a, w).unwrap_or(f64::NAN))
}

/// Closed form of `w0` when the `a4` limit vanishes.
pub fn w0_single_term(d: &DerivedConstants, a: f64) -> Result<f64> {
    let nf = NearFront::new(d, a)?;
    let a2 = nf.gamma1 * nf.gamma3 / nf.p;
    Ok((a2 / nf.gamma2.powf(nf.p - 1.0)).powf(1.0 / d.kappa))
}

/// Limit of `b4`: nonzero only when `gamma2 (beta2 - 1) = 0`.
pub fn fast_limit_b4(d: &DerivedConstants, a: f64) -> Result<Limit> {
    let ff = FarField::new(d, a)?;
    if !ff.source {
        return Ok(Limit::Zero);
    }
    let e = ff.gamma2 * (ff.beta2 - 1.0);
    Ok(if e.abs() <= BRANCH_TOL {
        Limit::Finite(ff.scale() * ff.amplitude.powf(ff.beta2 - 1.0) / ff.l7)
    } else if e < 0.0 {
        Limit::Zero
    } else {
        Limit::Infinite
    })
}

/// Left-hand side of the far-field algebraic equation for `C`:
/// `(s/gamma1 + gamma2) gamma2 |gamma2|^(p-2) C^kappa
///  + gamma1^(-p) A^(-kappa) k2^(2-p) (gamma1 gamma2/p + 1/l7) + b4_lim C^(beta2-1)`.
pub fn c_equation(d: &DerivedConstants, a: f64, c: f64) -> Result<f64> {
    let ff = FarField::new(d, a)?;
    let lim = fast_limit_b4(d, a)?.value();
    let (lead, constant) = c_equation_terms(&ff);
    let mut v = lead * c.powf(ff.kappa) + constant;
    if lim != 0.0 {
        v += lim * c.powf(ff.beta2 - 1.0);
    }
    Ok(v)
}

fn c_equation_terms(ff: &FarField) -> (f64, f64) {
    let g = ff.gamma2;
    let lead = (ff.s / ff.gamma1 + g) * g * g.abs().powf(ff.p - 2.0);
    let constant = ff.scale() * (ff.gamma1 * g / ff.p + 1.0 / ff.l7);
    (lead, constant)
}

/// Positive root `C` of [`c_equation`] (requires `gamma2 (beta2 - 1) <= 0`).
pub fn solve_c_fast(d: &DerivedConstants, a: f64) -> Result<f64> {
    if fast_limit_b4(d, a)? == Limit::Infinite {
        return Err(Error::Regime {
            what: "C",
            regime: "gamma2 (beta2 - 1) > 0",
        });
    }
    positive_root("C", |c| c_equation(d, a, c).unwrap_or(f64::NAN))
}

/// Closed form of `C` when the `b4` limit vanishes.
pub fn c_single_term(d: &DerivedConstants, a: f64) -> Result<f64> {
    let ff = FarField::new(d, a)?;
    let (lead, constant) = c_equation_terms(&ff);
    let ratio = -constant / lead;
    if !(ratio > 0.0) {
        return Err(Error::NoBracket {
            what: "C (no positive root)",
            limit: f64::NAN,
        });
    }
    Ok(ratio.powf(1.0 / ff.kappa))
}

/// Bracket a sign change on `(0, 1e6]` by doubling (and halving below 1),
/// then bisect.
pub fn positive_root(what: &'static str, f: impl Fn(f64) -> f64) -> Result<f64> {
    const HI: f64 = 1e6;
    let mut grid = Vec::new();
    let mut x = 1.0;
    while x > 1e-12 {
        grid.push(x);
        x *= 0.5;
    }
    grid.reverse();
    let mut x = 2.0;
    while x <= HI {
        grid.push(x);
        x *= 2.0;
    }
    grid.push(HI);
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    for (i, &fx) in values.iter().enumerate() {
        if fx == 0.0 {
            return Ok(grid[i]);
        }
    }
    let pair = values
        .windows(2)
        .position(|w| w[0].is_finite() && w[1].is_finite() && w[0].signum() != w[1].signum())
        .ok_or(Error::NoBracket { what, limit: HI })?;
    let (mut lo, mut hi) = (grid[pair], grid[pair + 1]);
    let mut flo = values[pair];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    // Return whichever endpoint has the smaller residual.
    Ok(if f(lo).abs() <= f(hi).abs() { lo } else { hi })
}

/// Second-order finite-difference evaluation of the self-similar operator
///
/// ```text
/// Af = xi^(1-s) (xi^(s-1) f^(m2-1) |(f^k2)'|^(p-2) f')' + xi f'/p + (f + f^beta2)/l7
/// ```
///
/// on the uniform grid `xi_i = xi0 + i h`. Endpoint values are linearly
/// extrapolated from the interior.
pub fn residual_numeric(d: &DerivedConstants, f: &[f64], xi0: f64, h: f64) -> Result<Vec<f64>> {
    let n = f.len();
    if n < 4 {
        return Err(Error::Insufficient(format!(
            "residual needs at least 4 samples, got {n}"
        )));
    }
    let p = d.params.p;
    let s = d.s()?;
    let l7 = d.l7()?;
    let (m2, k2) = (d.m2, d.k2);
    let xi = |i: f64| xi0 + i * h;
    let flux: Vec<f64> = (0..n - 1)
        .map(|i| {
            let mid = 0.5 * (f[i] + f[i + 1]);
            let mid = if m2 < 1.0 {
                mid.max(DEGENERACY_FLOOR)
            } else {
                mid.max(0.0)
            };
            let dfk = (f[i + 1].max(0.0).powf(k2) - f[i].max(0.0).powf(k2)) / h;
            let df = (f[i + 1] - f[i]) / h;
            xi(i as f64 + 0.5).powf(s - 1.0) * mid.powf(m2 - 1.0) * dfk.abs().powf(p - 2.0) * df
        })
        .collect();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let x = xi(i as f64);
        let div = x.powf(1.0 - s) * (flux[i] - flux[i - 1]) / h;
        let drift = x * (f[i + 1] - f[i - 1]) / (2.0 * h * p);
        let fi = f[i].max(0.0);
        let mut react = fi;
        if d.params.source {
            react += fi.powf(d.beta2);
        }
        out[i] = div + drift + react / l7;
    }
    out[0] = 2.0 * out[1] - out[2];
    out[n - 1] = 2.0 * out[n - 2] - out[n - 3];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive, ProblemParams};
    use crate::profiles::{closed_form_residual, Profile};

    fn e1() -> ProblemParams {
        ProblemParams {
            m: 2.0,
            beta: 3.0,
            ..ProblemParams::default()
        }
    }

    fn e2() -> ProblemParams {
        ProblemParams {
            beta: 5.0,
            a: 0.5,
            ..e1()
        }
    }

    fn e3(beta: f64) -> ProblemParams {
        ProblemParams {
            m: 0.5,
            dim: 3,
            beta,
            ..e1()
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn near_front_e2_constants() {
        let d = derive(&e2()).unwrap();
        let nf = NearFront::new(&d, 0.5).unwrap();
        assert!(close(nf.mu, 1.0, 1e-15));
        assert!(close(nf.gamma3, 1.0, 1e-15));
        let c = nf.coefficients(3.0).unwrap();
        assert!(close(c.a2, 1.0, 1e-15));
        let nf1 = NearFront::new(&d, 1.0).unwrap();
        assert!(close(nf1.a0(2f64.ln()).unwrap(), 1.0, 1e-15));
        assert!(nf.a0(2f64.ln()).is_err());
    }

    #[test]
    fn near_front_pure_drift_when_z_vanishes() {
        let d = derive(&e2()).unwrap();
        let nf = NearFront::new(&d, 0.5).unwrap();
        let (dw, _) = nf.rhs(60.0, 1.0, 0.0).unwrap();
        assert!(close(dw, 1.0, 1e-15));
    }

    #[test]
    fn far_field_e3_constants() {
        let d = derive(&e3(2.0)).unwrap();
        let ff = FarField::new(&d, 1.0).unwrap();
        assert!(close(
            ff.amplitude.powf((1.0 - ff.p) / ff.gamma2),
            8.0,
            1e-14
        ));
        let c = ff.coefficients(40.0).unwrap();
        assert_eq!(c.b0, 1.0);
        assert!(ff.b0(0.0).is_err());
        let ff2 = FarField::new(&d, 2.0).unwrap();
        assert!(ff2.b0(2f64.ln()).is_err());
        assert!(NearFront::new(&d, 1.0).is_err());
    }

    #[test]
    fn coefficient_limits() {
        let d = derive(&e2()).unwrap();
        let nf = NearFront::new(&d, 0.5).unwrap();
        let c = nf.coefficients(40.0).unwrap();
        assert!(c.a0.abs() <= 1e-15);
        assert!(c.a3.abs() <= 1e-15);
        assert!((c.a1 + nf.gamma2).abs() <= 1e-15);
        let d3 = derive(&e3(2.0)).unwrap();
        let ff = FarField::new(&d3, 1.0).unwrap();
        assert!((ff.b0(40.0).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn constant_rhs_gives_constant_trajectory() {
        let zero = |_: f64, _: f64, _: f64| Ok((0.0, 0.0));
        let tr = integrate_system(&zero, OdeState::new(0.0, 2.0, -1.0), 5.0, 1e-8).unwrap();
        assert_eq!(tr.end, TrajectoryEnd::Completed);
        assert!(tr.states().all(|s| s.w == 2.0 && s.z == -1.0));
    }

    #[test]
    fn integrator_matches_exponential() {
        let sys = |_: f64, w: f64, z: f64| Ok((-w, z));
        let tr = integrate_system(&sys, OdeState::new(0.0, 1.0, 1.0), 3.0, 1e-10).unwrap();
        let last = tr.last();
        assert!(close(last.w, (-3f64).exp(), 1e-8));
        assert!(close(last.z, 3f64.exp(), 1e-8));
        let mid = tr.at(1.234).unwrap();
        assert!(close(mid.w, (-1.234f64).exp(), 1e-7));
        // backward
        let back = integrate_system(&sys, last, 0.0, 1e-10).unwrap();
        assert!(close(back.last().w, 1.0, 1e-8));
    }

    #[test]
    fn halving_tolerance_is_stable() {
        let sys = |eta: f64, w: f64, z: f64| Ok((z, -w * (1.0 + 0.1 * eta.sin())));
        let a = integrate_system(&sys, OdeState::new(0.0, 1.0, 0.0), 10.0, 1e-8).unwrap();
        let b = integrate_system(&sys, OdeState::new(0.0, 1.0, 0.0), 10.0, 5e-9).unwrap();
        assert!((a.last().w - b.last().w).abs() <= 10.0 * 1e-8);
    }

    #[test]
    fn integrator_stops_at_zero_and_escape() {
        let decay = |_: f64, _: f64, _: f64| Ok((-1.0, 0.0));
        let tr = integrate_system(&decay, OdeState::new(0.0, 1.0, 0.0), 5.0, 1e-8).unwrap();
        assert_eq!(tr.end, TrajectoryEnd::NonPositive);
        assert!(tr.last().eta < 1.0 + 1e-6);
        let blow = |_: f64, w: f64, _: f64| Ok((w * w, 0.0));
        let tr = integrate_system(&blow, OdeState::new(0.0, 1.0, 0.0), 5.0, 1e-8).unwrap();
        assert_eq!(tr.end, TrajectoryEnd::Escaped);
        assert!(integrate_system(&blow, OdeState::new(0.0, 0.0, 0.0), 5.0, 1e-8).is_err());
    }

    #[test]
    fn near_front_rest_point_attracts_backward() {
        let d = derive(&e2()).unwrap();
        let nf = NearFront::new(&d, 0.5).unwrap();
        let start = OdeState::new(40.0, 1.0, nf.limit_z(1.0));
        let tr = integrate_system(&nf, start, 5.0, 1e-10).unwrap();
        assert_eq!(tr.end, TrajectoryEnd::Completed);
        for eta in [15.0, 10.0] {
            assert!((tr.at(eta).unwrap().w - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn slow_a4_limit_cases() {
        let d = derive(&e2()).unwrap();
        assert_eq!(slow_limit_a4(&d, 0.5).unwrap(), Limit::Zero);
        // gamma2 (1 - beta2) = 1 with gamma2 = 1: beta2 = 0
        // (absorption keeps l1 real for beta2 < 1)
        let d0 = derive(&ProblemParams {
            beta: 0.0,
            epsilon: -1.0,
            ..e1()
        })
        .unwrap();
        let nf = NearFront::new(&d0, 0.5).unwrap();
        assert_eq!(
            slow_limit_a4(&d0, 0.5).unwrap(),
            Limit::Finite(nf.gamma3 / (0.5 * nf.l7))
        );
        // gamma2 = 4 (m = 1.25) and beta2 = 0: gamma2 (1 - beta2) = 4 > 1
        let dinf = derive(&ProblemParams {
            m: 1.25,
            beta: 0.0,
            epsilon: -1.0,
            ..e1()
        })
        .unwrap();
        assert_eq!(slow_limit_a4(&dinf, 0.5).unwrap(), Limit::Infinite);
        assert!(solve_w0(&dinf, 0.5).is_err());
    }

    #[test]
    fn w0_examples() {
        let d = derive(&e2()).unwrap();
        let w0 = solve_w0(&d, 0.5).unwrap();
        assert!((w0 - 1.0).abs() <= 1e-10);
        assert!(w0_equation(&d, 0.5, w0).unwrap().abs() <= 1e-12);
        assert!((w0_single_term(&d, 0.5).unwrap() - w0).abs() <= 1e-12);
    }

    #[test]
    fn w0_is_one_whenever_a4_vanishes() {
        for (m, k, p, q, dim) in [
            (2.0, 1.5, 3.0, 0.0, 1),
            (1.5, 2.0, 2.5, 0.3, 2),
            (3.0, 3.2, 4.0, 0.0, 2),
        ] {
            let pr = ProblemParams {
                m,
                k,
                p,
                q,
                dim,
                beta: 40.0,
                ..ProblemParams::default()
            };
            let d = derive(&pr).unwrap();
            let w0 = solve_w0(&d, 1.0).unwrap();
            assert!((w0 - 1.0).abs() < 1e-12, "w0 = {w0} for {pr:?}");
        }
    }

    #[test]
    fn c_examples() {
        // gamma2 (beta2 - 1) < 0: single-term solve
        let d = derive(&e3(2.0)).unwrap();
        let c = solve_c_fast(&d, 1.0).unwrap();
        assert!(c_equation(&d, 1.0, c).unwrap().abs() <= 1e-12);
        assert!(close(c, c_single_term(&d, 1.0).unwrap(), 1e-12));
        // l7 = 1.5 for beta2 = 2: C^(-1/2) = 4 - 2/l7
        assert!(close(c, (4.0f64 - 2.0 / 1.5).powi(-2), 1e-12));
        // beta2 = 1: finite b4 limit
        // (with N = 5 so that the equation still has a positive root)
        let d1 = derive(&ProblemParams { dim: 5, ..e3(1.0) }).unwrap();
        assert!(matches!(fast_limit_b4(&d1, 1.0).unwrap(), Limit::Finite(_)));
        let c1 = solve_c_fast(&d1, 1.0).unwrap();
        assert!(c_equation(&d1, 1.0, c1).unwrap().abs() <= 1e-12);
        // gamma2 (beta2 - 1) > 0 violates the hypothesis
        let dbad = derive(&e3(0.5)).unwrap();
        assert!(solve_c_fast(&dbad, 1.0).is_err());
    }

    #[test]
    fn mu_identity() {
        let d = derive(&e2()).unwrap();
        let g2 = d.gamma2.unwrap();
        let p = d.params.p;
        let mu_printed = 1.0 - (p - 1.0) * (1.0 - 1.0 / g2);
        assert!((mu_printed + p - 2.0 - (p - 1.0) / g2).abs() < 1e-12);
        assert!((d.mu - mu_printed).abs() < 1e-12);
    }

    fn sample(prof: &Profile, lo: f64, hi: f64, h: f64) -> (Vec<f64>, f64) {
        let n = ((hi - lo) / h).round() as usize + 1;
        ((0..n).map(|i| prof.value(lo + i as f64 * h)).collect(), lo)
    }

    fn max_rel_err(d: &DerivedConstants, a: f64, lo: f64, hi: f64, h: f64) -> f64 {
        let prof = Profile::for_regime(d, a).unwrap();
        let (f, xi0) = sample(&prof, lo, hi, h);
        let num = residual_numeric(d, &f, xi0, h).unwrap();
        let mut worst = 0.0f64;
        for (i, v) in num.iter().enumerate().skip(1).take(f.len() - 2) {
            let xi = xi0 + i as f64 * h;
            let exact = closed_form_residual(d, a, xi).unwrap();
            // the bracket may change sign, so scale by f as well
            worst = worst.max((v - exact).abs() / (exact.abs() + f[i]));
        }
        worst
    }

    #[test]
    fn residual_of_zkb_matches_closed_form_e2() {
        let d = derive(&e2()).unwrap();
        let err = max_rel_err(&d, 0.5, 0.1, 0.9 * d.xi_b, 1e-3);
        assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn residual_of_zkb_matches_closed_form_general() {
        // p = 3, k2 != 1 and N = 2 exercise the corrected b and the missing
        // xi^(s-1) factor.
        let pr = ProblemParams {
            m: 1.5,
            k: 1.3,
            p: 3.0,
            dim: 2,
            n: 0.3,
            n1: 0.4,
            beta: 9.0,
            a: 0.7,
            ..ProblemParams::default()
        };
        let d = derive(&pr).unwrap();
        let err = max_rel_err(&d, 0.7, 0.1, 0.8 * d.xi_b, 5e-4);
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn residual_of_exponential_profile_is_reaction_bracket() {
        let d = derive(&ProblemParams { m: 1.0, ..e1() }).unwrap();
        let err = max_rel_err(&d, 1.0, 0.1, 3.0, 1e-3);
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn residual_of_fast_profile_is_reaction_bracket() {
        let d = derive(&e3(2.0)).unwrap();
        let err = max_rel_err(&d, 1.0, 0.2, 5.0, 1e-3);
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn residual_of_zero_is_zero() {
        let d = derive(&e2()).unwrap();
        let r = residual_numeric(&d, &[0.0; 50], 0.0, 0.01).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn near_front_system_reproduces_profile_equation() {
        // Integrate the near-front system backward from its rest point, map
        // (w, eta) back to f(xi) and check the profile operator vanishes.
        let pr = ProblemParams {
            m: 1.5,
            k: 1.3,
            p: 3.0,
            dim: 2,
            beta: 9.0,
            a: 0.7,
            ..ProblemParams::default()
        };
        let d = derive(&pr).unwrap();
        let a = 0.7;
        let nf = NearFront::new(&d, a).unwrap();
        let w0 = solve_w0(&d, a).unwrap();
        let start = OdeState::new(30.0, w0, nf.limit_z(w0));
        let tr = integrate_system_capped(&nf, start, -a.ln() + 0.05, 1e-12, 2e-3).unwrap();
        let prof = Profile::for_regime(&d, a).unwrap();
        let h = 1e-4;
        let (lo, hi) = (0.55 * d.xi_b, 0.75 * d.xi_b);
        let n = ((hi - lo) / h) as usize;
        let f: Vec<f64> = (0..n)
            .map(|i| {
                let xi = lo + i as f64 * h;
                let eta = -(a - d.b * xi.powf(d.gamma1)).ln();
                prof.value(xi) * tr.at(eta).unwrap().w
            })
            .collect();
        let res = residual_numeric(&d, &f, lo, h).unwrap();
        // scale: size of the reaction term
        let scale = f.iter().cloned().fold(0.0, f64::max) / d.l7.unwrap();
        let worst = res[2..n - 2].iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(worst < 1e-5 * scale.max(1.0), "residual {worst}");
    }

    #[test]
    fn far_field_system_reproduces_profile_equation() {
        let d = derive(&e3(2.0)).unwrap();
        let a = 1.0;
        let ff = FarField::new(&d, a).unwrap();
        let c = solve_c_fast(&d, a).unwrap();
        // The far-field rest point is a saddle: integrate backward from it.
        let start = OdeState::new(30.0, c, ff.limit_z(c));
        let tr = integrate_system_capped(&ff, start, 1.0, 1e-12, 2e-3).unwrap();
        assert_eq!(tr.end, TrajectoryEnd::Completed);
        let prof = Profile::for_regime(&d, a).unwrap();
        let h = 1e-3;
        let (lo, hi) = (1.5, 3.0);
        let n = ((hi - lo) / h) as usize;
        let f: Vec<f64> = (0..n)
            .map(|i| {
                let xi: f64 = lo + i as f64 * h;
                let eta = (a + xi.powf(d.gamma1)).ln();
                prof.value(xi) * tr.at(eta).unwrap().w
            })
            .collect();
        let res = residual_numeric(&d, &f, lo, h).unwrap();
        let scale = f.iter().cloned().fold(0.0, f64::max);
        let worst = res[2..n - 2].iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(worst < 1e-5 * scale, "residual {worst} (scale {scale})");
    }
}
