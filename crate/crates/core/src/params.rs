//! Problem parameters, derived self-similar constants and the time/space
//! similarity maps.
//!
//! The equation is solved in the variable `v = u^(1-q)`, for which the
//! exponents become `m2 = m/(1-q)`, `k2 = k/(1-q)` and
//! `beta2 = (beta-q)/(1-q)`. Every other constant here is a closed form in
//! those three and the geometric exponents `n`, `n1`, `N`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Branch decisions (`kappa == 0`, `beta2 == 1`, ...) use this tolerance.
pub const BRANCH_TOL: f64 = 1e-12;

/// Raw parameters of the Cauchy problem plus artifact switches.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    pub k: f64,
    pub m: f64,
    pub p: f64,
    pub q: f64,
    /// `+1` source, `-1` absorption.
    pub epsilon: f64,
    /// Density exponent on the time derivative.
    pub n: f64,
    /// Density exponent inside the flux.
    pub n1: f64,
    pub l: f64,
    pub beta: f64,
    /// Spatial dimension `N`.
    pub dim: u32,
    pub t0: f64,
    /// Profile amplitude `a`.
    pub a: f64,
    /// When false the reaction term is dropped and the time factors are
    /// built for the source-free (Barenblatt) solution.
    pub source: bool,
    /// Request the `p = n + n1` logarithmic space map.
    pub log_branch: bool,
    /// Allow `l = -1` so the degenerate time-factor branches are reachable.
    pub permissive: bool,
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self {
            k: 1.0,
            m: 1.0,
            p: 2.0,
            q: 0.0,
            epsilon: 1.0,
            n: 0.0,
            n1: 0.0,
            l: 0.0,
            beta: 0.0,
            dim: 1,
            t0: 1.0,
            a: 1.0,
            source: true,
            log_branch: false,
            permissive: false,
        }
    }
}

/// One violated bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub bound: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: requires {}", self.field, self.bound)
    }
}

impl ProblemParams {
    /// Keys accepted by [`ProblemParams::set`], in serialization order.
    pub const KEYS: [&'static str; 15] = [
        "k",
        "m",
        "p",
        "q",
        "epsilon",
        "n",
        "n1",
        "l",
        "beta",
        "N",
        "t0",
        "a",
        "source",
        "log_branch",
        "permissive",
    ];

    pub fn n_f64(&self) -> f64 {
        f64::from(self.dim)
    }

    /// Every violated invariant; empty when the parameters are admissible.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut check = |ok: bool, field: &'static str, bound: &'static str| {
            if !ok {
                out.push(Violation { field, bound });
            }
        };
        let all = [
            self.k,
            self.m,
            self.p,
            self.q,
            self.epsilon,
            self.n,
            self.n1,
            self.l,
            self.beta,
            self.t0,
            self.a,
        ];
        check(all.iter().all(|x| x.is_finite()), "params", "finite values");
        check(self.p >= 2.0, "p", "p >= 2");
        check((0.0..1.0).contains(&self.q), "q", "0 <= q < 1");
        check(
            self.epsilon == 1.0 || self.epsilon == -1.0,
            "epsilon",
            "epsilon in {+1, -1}",
        );
        check(self.dim >= 1, "N", "N >= 1");
        check(self.n >= 0.0, "n", "n >= 0");
        if self.permissive {
            check(self.l >= -1.0, "l", "l >= -1 (permissive)");
        } else {
            check(self.l >= 0.0, "l", "l >= 0");
        }
        check(self.beta >= 0.0, "beta", "beta >= 0");
        check(self.a > 0.0, "a", "a > 0");
        check(self.t0 > 0.0, "t0", "t0 > 0");
        check(self.n < self.n_f64(), "n", "n < N");
        if self.log_branch {
            check(
                (self.p - self.n - self.n1).abs() <= BRANCH_TOL,
                "p",
                "p = n + n1 (log branch)",
            );
        } else {
            check(self.p > self.n + self.n1, "p", "p > n + n1");
        }
        check(self.k > 0.0, "k", "k > 0");
        check(self.m > 0.0, "m", "m > 0");
        out
    }

    /// Bounds of the original problem that are accepted in relaxed form.
    pub fn relaxations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.k < 1.0 || self.m < 1.0 {
            out.push("paper-constraint relaxed: k, m >= 1 relaxed to k, m > 0");
        }
        if self.q == 0.0 {
            out.push("paper-constraint relaxed: 0 < q relaxed to 0 <= q");
        }
        if self.permissive && self.l < 0.0 {
            out.push("paper-constraint relaxed: l >= 0 relaxed to l >= -1");
        }
        out
    }

    /// Set one field from its textual value. Returns `Ok(false)` for an
    /// unknown key.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse::<T>()
                .map_err(|_| format!("cannot parse `{v}` as a number"))
        }
        fn flag(v: &str) -> std::result::Result<bool, String> {
            match v {
                "on" | "true" | "yes" | "1" => Ok(true),
                "off" | "false" | "no" | "0" => Ok(false),
                _ => Err(format!("expected on/off, got `{v}`")),
            }
        }
        match key {
            "k" => self.k = num(value)?,
            "m" => self.m = num(value)?,
            "p" => self.p = num(value)?,
            "q" => self.q = num(value)?,
            "epsilon" => self.epsilon = num(value)?,
            "n" => self.n = num(value)?,
            "n1" => self.n1 = num(value)?,
            "l" => self.l = num(value)?,
            "beta" => self.beta = num(value)?,
            "N" => self.dim = num(value)?,
            "t0" => self.t0 = num(value)?,
            "a" => self.a = num(value)?,
            "source" => self.source = flag(value)?,
            "log_branch" => self.log_branch = flag(value)?,
            "permissive" => self.permissive = flag(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parse the `key = value` form written by `Display`.
    pub fn from_kv_text(text: &str) -> std::result::Result<Self, String> {
        let mut out = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            let key = key.trim();
            if !out
                .set(key, value.trim())
                .map_err(|e| format!("line {}: {e}", i + 1))?
            {
                return Err(format!("line {}: unknown key `{key}`", i + 1));
            }
        }
        Ok(out)
    }
}

impl fmt::Display for ProblemParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let onoff = |b: bool| if b { "on" } else { "off" };
        // `{:?}` on f64 prints the shortest representation that round-trips.
        writeln!(f, "k = {:?}", self.k)?;
        writeln!(f, "m = {:?}", self.m)?;
        writeln!(f, "p = {:?}", self.p)?;
        writeln!(f, "q = {:?}", self.q)?;
        writeln!(f, "epsilon = {:?}", self.epsilon)?;
        writeln!(f, "n = {:?}", self.n)?;
        writeln!(f, "n1 = {:?}", self.n1)?;
        writeln!(f, "l = {:?}", self.l)?;
        writeln!(f, "beta = {:?}", self.beta)?;
        writeln!(f, "N = {}", self.dim)?;
        writeln!(f, "t0 = {:?}", self.t0)?;
        writeln!(f, "a = {:?}", self.a)?;
        writeln!(f, "source = {}", onoff(self.source))?;
        writeln!(f, "log_branch = {}", onoff(self.log_branch))?;
        writeln!(f, "permissive = {}", onoff(self.permissive))
    }
}

/// `base^exponent` over the reals: negative bases are allowed only with
/// integer exponents.
pub fn pow_real(base: f64, exponent: f64, symbol: &'static str) -> Result<f64> {
    if base >= 0.0 {
        return Ok(base.powf(exponent));
    }
    if exponent.fract() != 0.0 {
        return Err(Error::UndefinedConstant {
            symbol,
            base,
            exponent,
        });
    }
    let mag = (-base).powf(exponent);
    // Integer-valued f64 beyond 2^53 is always even.
    let odd = exponent.abs() < 9.0e15 && (exponent as i64) % 2 != 0;
    Ok(if odd { -mag } else { mag })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbarCase {
    /// `l1 t^((1+l)/(1-beta2))`
    Power,
    /// `l2 (ln t)^(1/(1-beta2))`, `l = -1`
    Log,
    /// `exp(-l3 t^(l+1))`, `beta2 = 1`
    Exp,
    /// `t^(-l4)`, `beta2 = -l = 1`
    InversePower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauCase {
    Power,
    /// `l5 = beta2 - 1`
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiCase {
    Power,
    /// `p = n + n1`
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diffusion {
    Slow,
    Critical,
    Fast,
}

impl Diffusion {
    pub fn name(self) -> &'static str {
        match self {
            Diffusion::Slow => "slow",
            Diffusion::Critical => "critical",
            Diffusion::Fast => "fast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solvability {
    /// `beta2 >= beta2_crit`
    Supercritical,
    Subcritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Degeneracies {
    pub l_minus_one: bool,
    pub beta2_one: bool,
    pub l5_eq_beta2_minus_one: bool,
    pub log_space: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regime {
    pub diffusion: Diffusion,
    pub solvability: Solvability,
    pub degeneracies: Degeneracies,
}

/// Every derived symbol of the self-similar construction.
///
/// Branch-specific constants are `None` when their branch is inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedConstants {
    pub params: ProblemParams,
    pub m2: f64,
    pub k2: f64,
    pub beta2: f64,
    /// Exponent used by the time factors: `beta2`, or `beta2_crit` for
    /// source-free runs.
    pub similarity_beta2: f64,
    /// `m2 + k2 (p-2) - 1`; its sign decides slow/critical/fast diffusion.
    pub kappa: f64,
    pub gamma1: f64,
    pub gamma2: Option<f64>,
    /// `1 - (p-1)(1 - 1/gamma2)`, written as `kappa - p + 2`.
    pub mu: f64,
    pub gamma3: Option<f64>,
    pub s: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub l3: Option<f64>,
    pub l4: f64,
    pub l5: f64,
    pub l6: Option<f64>,
    pub l7: Option<f64>,
    /// ZKB slope (slow), Gaussian-type slope (critical); negative for fast.
    pub b: f64,
    /// Fast-diffusion amplitude `A`.
    pub fast_amplitude: Option<f64>,
    pub beta2_crit: f64,
    pub beta_crit_u: f64,
    /// Front coordinate `(a/b)^(1/gamma1)`; infinite without compact support.
    pub xi_b: f64,
    pub vbar_case: VbarCase,
    pub tau_case: TauCase,
    pub phi_case: PhiCase,
}

fn near(x: f64, y: f64) -> bool {
    (x - y).abs() <= BRANCH_TOL * (1.0 + y.abs())
}

/// `1 + (1+l)[m2 + k2(p-2) + (p-n1-N)/(N-n)]`.
pub fn beta2_crit(m2: f64, k2: f64, pr: &ProblemParams) -> f64 {
    let nn = pr.n_f64();
    1.0 + (1.0 + pr.l) * (m2 + k2 * (pr.p - 2.0) + (pr.p - pr.n1 - nn) / (nn - pr.n))
}

/// Compute all derived constants.
pub fn derive(params: &ProblemParams) -> Result<DerivedConstants> {
    let pr = params;
    let errors = pr.validate();
    if !errors.is_empty() {
        let msg: Vec<String> = errors.iter().map(|v| v.to_string()).collect();
        return Err(Error::InvalidParams(msg.join("; ")));
    }
    let p = pr.p;
    let nn = pr.n_f64();
    let m2 = pr.m / (1.0 - pr.q);
    let k2 = pr.k / (1.0 - pr.q);
    let beta2 = (pr.beta - pr.q) / (1.0 - pr.q);
    let kappa = m2 + k2 * (p - 2.0) - 1.0;
    let kappa = if near(kappa, 0.0) { 0.0 } else { kappa };
    let gamma1 = p / (p - 1.0);
    let gamma2 = (kappa != 0.0).then(|| (p - 1.0) / kappa);
    let mu = kappa - p + 2.0;

    let phi_case = if pr.log_branch {
        PhiCase::Log
    } else {
        PhiCase::Power
    };
    let s = (phi_case == PhiCase::Power).then(|| p * (nn - pr.n) / (p - pr.n - pr.n1));

    let b2c = beta2_crit(m2, k2, pr);
    let beta_crit_u = pr.q + (1.0 - pr.q) * b2c;
    let sb2 = if pr.source { beta2 } else { b2c };

    let l_m1 = near(pr.l, -1.0);
    let b2_one = near(sb2, 1.0);
    let vbar_case = match (l_m1, b2_one) {
        (true, true) => VbarCase::InversePower,
        (true, false) => VbarCase::Log,
        (false, true) => VbarCase::Exp,
        (false, false) => VbarCase::Power,
    };

    let l4 = pr.epsilon * (1.0 - pr.q);
    let l3 = (!l_m1).then(|| l4 / (1.0 + pr.l));
    let l1 = match (vbar_case, l3) {
        (VbarCase::Power, Some(l3)) => Some(pow_real(l3 * (sb2 - 1.0), 1.0 / (1.0 - sb2), "l1")?),
        _ => None,
    };
    let l2 = match vbar_case {
        VbarCase::Log => Some(pow_real(l4 * (sb2 - 1.0), 1.0 / (1.0 - sb2), "l2")?),
        _ => None,
    };
    let l5 = (1.0 + pr.l) * kappa;
    let l6 = match l1 {
        Some(l1) => Some(pow_real(l1, kappa, "l6")?),
        None => None,
    };
    let l7 = (!l_m1).then(|| -(l5 + 1.0 - sb2) / (1.0 + pr.l));
    let tau_case = if near(l5, sb2 - 1.0) {
        TauCase::Log
    } else {
        TauCase::Power
    };

    let coeff = (p * k2.powf(p - 2.0)).powf(-1.0 / (p - 1.0));
    let b = match gamma2 {
        Some(g2) => coeff / (gamma1 * g2),
        None => coeff / gamma1,
    };
    let gamma3 = (b > 0.0).then(|| b.powf(-p / gamma1) * gamma1.powf(-p) * k2.powf(2.0 - p));
    let fast_amplitude = match gamma2 {
        Some(g2) if g2 < 0.0 => {
            let base = (gamma1 * g2).abs().powf(1.0 - p) * k2.powf(2.0 - p) / p;
            Some(base.powf(g2 / (p - 1.0)))
        }
        _ => None,
    };
    let xi_b = match gamma2 {
        Some(g2) if g2 > 0.0 => (pr.a / b).powf(1.0 / gamma1),
        _ => f64::INFINITY,
    };

    Ok(DerivedConstants {
        params: pr.clone(),
        m2,
        k2,
        beta2,
        similarity_beta2: sb2,
        kappa,
        gamma1,
        gamma2,
        mu,
        gamma3,
        s,
        l1,
        l2,
        l3,
        l4,
        l5,
        l6,
        l7,
        b,
        fast_amplitude,
        beta2_crit: b2c,
        beta_crit_u,
        xi_b,
        vbar_case,
        tau_case,
        phi_case,
    })
}

impl DerivedConstants {
    pub fn diffusion(&self) -> Diffusion {
        if self.kappa > 0.0 {
            Diffusion::Slow
        } else if self.kappa == 0.0 {
            Diffusion::Critical
        } else {
            Diffusion::Fast
        }
    }

    pub fn classify(&self) -> Regime {
        let solvability = if self.beta2 >= self.beta2_crit - BRANCH_TOL {
            Solvability::Supercritical
        } else {
            Solvability::Subcritical
        };
        Regime {
            diffusion: self.diffusion(),
            solvability,
            degeneracies: Degeneracies {
                l_minus_one: near(self.params.l, -1.0),
                beta2_one: near(self.similarity_beta2, 1.0),
                l5_eq_beta2_minus_one: self.tau_case == TauCase::Log,
                log_space: self.phi_case == PhiCase::Log,
            },
        }
    }

    /// `(beta2_crit, beta_crit_u)`.
    pub fn fujita_exponent(&self) -> (f64, f64) {
        (self.beta2_crit, self.beta_crit_u)
    }

    pub fn gamma2(&self) -> Result<f64> {
        self.gamma2.ok_or(Error::Regime {
            what: "gamma2",
            regime: "critical",
        })
    }

    pub fn s(&self) -> Result<f64> {
        self.s.ok_or(Error::Regime {
            what: "effective dimension s",
            regime: "p = n + n1",
        })
    }

    pub fn l7(&self) -> Result<f64> {
        self.l7.ok_or(Error::Regime {
            what: "l7",
            regime: "l = -1",
        })
    }

    /// Amplitude factor `vbar(t)`.
    pub fn vbar(&self, t: f64) -> Result<f64> {
        let sb2 = self.similarity_beta2;
        let l = self.params.l;
        let v = match self.vbar_case {
            VbarCase::Power => {
                if t <= 0.0 {
                    return Err(domain("vbar", format!("t = {t} must be > 0")));
                }
                self.l1.unwrap_or(f64::NAN) * t.powf((1.0 + l) / (1.0 - sb2))
            }
            VbarCase::Log => {
                if t <= 1.0 {
                    return Err(domain("vbar", format!("ln t <= 0 at t = {t}")));
                }
                self.l2.unwrap_or(f64::NAN) * t.ln().powf(1.0 / (1.0 - sb2))
            }
            VbarCase::Exp => {
                if t < 0.0 {
                    return Err(domain("vbar", format!("t = {t} must be >= 0")));
                }
                (-self.l3.unwrap_or(f64::NAN) * t.powf(l + 1.0)).exp()
            }
            VbarCase::InversePower => {
                if t <= 0.0 {
                    return Err(domain("vbar", format!("t = {t} must be > 0")));
                }
                t.powf(-self.l4)
            }
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(domain("vbar", format!("value {v} at t = {t}")));
        }
        Ok(v)
    }

    /// Rescaled time `tau(t)`; only the power branch of `vbar` has a closed
    /// form.
    pub fn tau(&self, t: f64) -> Result<f64> {
        if self.vbar_case != VbarCase::Power {
            return Err(Error::Regime {
                what: "tau(t)",
                regime: "non-power vbar",
            });
        }
        let sb2 = self.similarity_beta2;
        let l6 = self.l6.unwrap_or(f64::NAN);
        let tau = match self.tau_case {
            TauCase::Power => {
                if t <= 0.0 {
                    return Err(domain("tau", format!("t = {t} must be > 0")));
                }
                let l5 = self.l5;
                l6 * (1.0 - sb2) * t.powf(l5 / (1.0 - sb2) + 1.0) / (l5 + 1.0 - sb2)
            }
            TauCase::Log => {
                if t <= 1.0 {
                    return Err(domain("tau", format!("ln t <= 0 at t = {t}")));
                }
                l6 * t.ln()
            }
        };
        if !(tau.is_finite() && tau > 0.0) {
            return Err(domain("tau", format!("tau = {tau} at t = {t}")));
        }
        Ok(tau)
    }

    /// `(vbar(t), tau(t))`.
    pub fn time_factors(&self, t: f64) -> Result<(f64, f64)> {
        Ok((self.vbar(t)?, self.tau(t)?))
    }

    /// Space map `phi(r)`.
    pub fn space_map(&self, r: f64) -> Result<f64> {
        let pr = &self.params;
        match self.phi_case {
            PhiCase::Power => {
                if r < 0.0 {
                    return Err(domain("phi", format!("r = {r} must be >= 0")));
                }
                let e = pr.p - pr.n - pr.n1;
                Ok(pr.p * r.powf(e / pr.p) / e)
            }
            PhiCase::Log => {
                if r <= 0.0 {
                    return Err(domain("phi", format!("ln r undefined at r = {r}")));
                }
                Ok(r.ln())
            }
        }
    }

    /// Inverse of the power branch of `phi`.
    pub fn space_map_inverse(&self, phi: f64) -> Result<f64> {
        let pr = &self.params;
        match self.phi_case {
            PhiCase::Power => {
                let e = pr.p - pr.n - pr.n1;
                Ok((phi * e / pr.p).max(0.0).powf(pr.p / e))
            }
            PhiCase::Log => Ok(phi.exp()),
        }
    }

    /// Similarity coordinate `xi = phi(r) tau(t)^(-1/p)`.
    pub fn similarity_coord(&self, t: f64, r: f64) -> Result<f64> {
        let tau = self.tau(t)?;
        Ok(self.space_map(r)? * tau.powf(-1.0 / self.params.p))
    }
}

fn domain(what: &'static str, detail: String) -> Error {
    Error::Domain { what, detail }
}
