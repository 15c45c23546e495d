//! Self-similar profiles, the supersolution built from them, and the
//! closed-form quantities attached to the compactly supported case.

use crate::error::{Error, Result};
use crate::params::{DerivedConstants, Diffusion};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// `(a - b xi^gamma1)_+^gamma2`, compact support.
    Zkb,
    /// `exp(-b xi^gamma1)`, the `kappa = 0` case.
    Exponential,
    /// `A (a + xi^gamma1)^gamma2` with `gamma2 < 0`.
    Fast,
}

impl ProfileKind {
    pub fn for_regime(d: Diffusion) -> Self {
        match d {
            Diffusion::Slow => ProfileKind::Zkb,
            Diffusion::Critical => ProfileKind::Exponential,
            Diffusion::Fast => ProfileKind::Fast,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Zkb => "zkb",
            ProfileKind::Exponential => "exponential",
            ProfileKind::Fast => "fast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub kind: ProfileKind,
    pub a: f64,
    b: f64,
    gamma1: f64,
    gamma2: f64,
    amplitude: f64,
    xi_b: f64,
}

impl Profile {
    pub fn new(d: &DerivedConstants, kind: ProfileKind, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::Domain {
                what: "profile",
                detail: format!("amplitude a = {a} must be > 0"),
            });
        }
        let mismatch = |regime| Error::Regime {
            what: "profile",
            regime,
        };
        let (gamma2, amplitude) = match kind {
            ProfileKind::Zkb => match d.gamma2 {
                Some(g2) if g2 > 0.0 => (g2, 1.0),
                _ => return Err(mismatch("non-slow (zkb needs gamma2 > 0)")),
            },
            ProfileKind::Exponential => {
                if d.diffusion() != Diffusion::Critical {
                    return Err(mismatch("non-critical"));
                }
                (f64::NAN, 1.0)
            }
            ProfileKind::Fast => match (d.gamma2, d.fast_amplitude) {
                (Some(g2), Some(amp)) if g2 < 0.0 => (g2, amp),
                _ => return Err(mismatch("non-fast (fast profile needs gamma2 < 0)")),
            },
        };
        let xi_b = match kind {
            ProfileKind::Zkb => (a / d.b).powf(1.0 / d.gamma1),
            _ => f64::INFINITY,
        };
        Ok(Self {
            kind,
            a,
            b: d.b,
            gamma1: d.gamma1,
            gamma2,
            amplitude,
            xi_b,
        })
    }

    /// The profile matching the diffusion regime of `d`.
    pub fn for_regime(d: &DerivedConstants, a: f64) -> Result<Self> {
        Self::new(d, ProfileKind::for_regime(d.diffusion()), a)
    }

    /// Edge of the support (infinite for the non-compact kinds).
    pub fn xi_b(&self) -> f64 {
        self.xi_b
    }

    pub fn value(&self, xi: f64) -> f64 {
        debug_assert!(xi >= 0.0);
        match self.kind {
            ProfileKind::Zkb => {
                let base = self.a - self.b * xi.powf(self.gamma1);
                if base <= 0.0 || xi >= self.xi_b {
                    0.0
                } else {
                    base.powf(self.gamma2)
                }
            }
            ProfileKind::Exponential => (-self.b * xi.powf(self.gamma1)).exp(),
            ProfileKind::Fast => self.amplitude * (self.a + xi.powf(self.gamma1)).powf(self.gamma2),
        }
    }
}

/// Profile value at `xi` for the profile kind matching the regime.
pub fn profile_value(d: &DerivedConstants, a: f64, xi: f64) -> Result<f64> {
    if xi < 0.0 {
        return Err(Error::Domain {
            what: "profile",
            detail: format!("xi = {xi} must be >= 0"),
        });
    }
    Ok(Profile::for_regime(d, a)?.value(xi))
}

/// `z(t, r) = vbar(t) f(xi(t, r))` in v-variables.
pub fn supersolution_z(d: &DerivedConstants, a: f64, t: f64, r: f64) -> Result<f64> {
    let profile = Profile::for_regime(d, a)?;
    let vbar = d.vbar(t)?;
    let xi = d.similarity_coord(t, r)?;
    Ok(vbar * profile.value(xi))
}

/// `z` converted back to the original unknown, `u = v^(1/(1-q))`.
pub fn supersolution_u(d: &DerivedConstants, a: f64, t: f64, r: f64) -> Result<f64> {
    let z = supersolution_z(d, a, t, r)?;
    Ok(z.powf(1.0 / (1.0 - d.params.q)))
}

/// `1/l7 - s/p + (a - b xi^gamma1)_+^(gamma2 (beta2-1)) / l7`.
///
/// For the ZKB profile the self-similar operator evaluates to
/// `f(xi) * bracket(xi)`; without a source the last term is absent.
pub fn closed_form_residual_bracket(d: &DerivedConstants, a: f64, xi: f64) -> Result<f64> {
    let g2 = d.gamma2()?;
    let l7 = d.l7()?;
    let s = d.s()?;
    let mut bracket = 1.0 / l7 - s / d.params.p;
    if d.params.source {
        let base = (a - d.b * xi.powf(d.gamma1)).max(0.0);
        bracket += base.powf(g2 * (d.beta2 - 1.0)) / l7;
    }
    Ok(bracket)
}

/// Closed form of the self-similar operator applied to the regime's profile:
/// `f(xi) * (1/l7 - s/p + f(xi)^(beta2-1)/l7)`.
pub fn closed_form_residual(d: &DerivedConstants, a: f64, xi: f64) -> Result<f64> {
    let f = profile_value(d, a, xi)?;
    let l7 = d.l7()?;
    let s = d.s()?;
    let mut bracket = 1.0 / l7 - s / d.params.p;
    if d.params.source {
        bracket += f.powf(d.beta2 - 1.0) / l7;
    }
    Ok(f * bracket)
}

/// `s/p >= (a^(gamma2 (beta2-1)) + 1) / l7` with `l7 > 0`.
pub fn global_solvability_condition(d: &DerivedConstants, a: f64) -> bool {
    let (Some(g2), Some(l7), Some(s)) = (d.gamma2, d.l7, d.s) else {
        return false;
    };
    if d.diffusion() != Diffusion::Slow || g2 <= 0.0 || l7 <= 0.0 {
        return false;
    }
    s / d.params.p >= (a.powf(g2 * (d.beta2 - 1.0)) + 1.0) / l7
}

/// Largest `a` for which the global-solvability condition holds, when the
/// condition is monotone in `a` (`gamma2 (beta2 - 1) > 0`).
pub fn solvability_amplitude_threshold(d: &DerivedConstants) -> Option<f64> {
    let (g2, l7, s) = (d.gamma2?, d.l7?, d.s?);
    let e = g2 * (d.beta2 - 1.0);
    let slack = s / d.params.p * l7 - 1.0;
    (d.diffusion() == Diffusion::Slow && l7 > 0.0 && e > 0.0 && slack > 0.0)
        .then(|| slack.powf(1.0 / e))
}

/// Radius bounding the set `D`:
/// `((a/b)^(p-1) ((p-n-n1)/p)^p tau)^(1/(p-n-n1))`.
pub fn front_radius_theory(d: &DerivedConstants, a: f64, tau: f64) -> Result<f64> {
    let pr = &d.params;
    let e = pr.p - pr.n - pr.n1;
    if !(tau > 0.0) || !(e > 0.0) || !(d.b > 0.0) {
        return Err(Error::Domain {
            what: "front radius",
            detail: format!("needs tau > 0, p > n + n1, b > 0 (tau = {tau})"),
        });
    }
    Ok(((a / d.b).powf(pr.p - 1.0) * (e / pr.p).powf(pr.p) * tau).powf(1.0 / e))
}

/// Large-time absorption asymptote
/// `((T+t) ln(T+t))^(-1/(beta_c-1)) exp(-r^2/t)`, with `beta_c` the
/// critical exponent in u-variables.
pub fn absorption_asymptote(d: &DerivedConstants, shift: f64, t: f64, r: f64) -> Result<f64> {
    let bc = d.beta_crit_u;
    let tt = shift + t;
    if !(bc > 1.0) {
        return Err(Error::Domain {
            what: "absorption asymptote",
            detail: format!("beta_c = {bc} must exceed 1"),
        });
    }
    if !(t > 0.0) || !(tt > 1.0) {
        return Err(Error::Domain {
            what: "absorption asymptote",
            detail: format!("needs t > 0 and T + t > 1 (T = {shift}, t = {t})"),
        });
    }
    Ok((tt * tt.ln()).powf(-1.0 / (bc - 1.0)) * (-r * r / t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive, ProblemParams};

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

    fn e3() -> ProblemParams {
        ProblemParams {
            m: 0.5,
            dim: 3,
            beta: 2.0,
            ..e1()
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn zkb_values() {
        let d = derive(&e2()).unwrap();
        assert_eq!(profile_value(&d, 0.5, 0.0).unwrap(), 0.5);
        assert!(close(d.xi_b, 2f64.sqrt(), 1e-15));
        assert_eq!(profile_value(&d, 0.5, 2f64.sqrt()).unwrap(), 0.0);
        assert_eq!(profile_value(&d, 0.5, 3.0).unwrap(), 0.0);
        assert!(profile_value(&d, 0.5, 1.4).unwrap() > 0.0);
        assert!(profile_value(&d, 0.5, -1.0).is_err());
    }

    #[test]
    fn fast_values() {
        let d = derive(&e3()).unwrap();
        assert!(close(profile_value(&d, 1.0, 1.0).unwrap(), 16.0, 1e-14));
        assert!(Profile::new(&d, ProfileKind::Zkb, 1.0).is_err());
    }

    #[test]
    fn supersolution_examples() {
        let d = derive(&e2()).unwrap();
        assert!(close(
            supersolution_z(&d, 0.5, 1.0, 0.0).unwrap(),
            0.35355,
            1e-5
        ));
        assert_eq!(supersolution_z(&d, 0.5, 1.0, 5.0).unwrap(), 0.0);
        let z1 = supersolution_z(&d, 0.5, 1.0, 0.0).unwrap();
        let z2 = supersolution_z(&d, 1.0, 1.0, 0.0).unwrap();
        assert!(close(z2, 2.0 * z1, 1e-15));
    }

    #[test]
    fn bracket_examples() {
        let d = derive(&e2()).unwrap();
        let v = closed_form_residual_bracket(&d, 0.5, 0.0).unwrap();
        assert!(close(v, 1.0 / 3.0 - 0.5 + 0.0625 / 3.0, 1e-15));
        assert!(close(v, -0.14583, 1e-5));
        let edge = closed_form_residual_bracket(&d, 0.5, d.xi_b).unwrap();
        assert!(close(edge, 1.0 / 3.0 - 0.5, 1e-15));
        let d1 = derive(&e1()).unwrap();
        assert!(close(
            closed_form_residual_bracket(&d1, 1.0, 0.0).unwrap(),
            1.5,
            1e-15
        ));
    }

    #[test]
    fn solvability_examples() {
        let d = derive(&e2()).unwrap();
        assert!(global_solvability_condition(&d, 0.5));
        assert!(!global_solvability_condition(&d, 1.0));
        let thr = solvability_amplitude_threshold(&d).unwrap();
        assert!(close(thr, 0.84090, 1e-5));
        let d1 = derive(&e1()).unwrap();
        for a in [1e-3, 0.1, 0.5, 1.0, 5.0] {
            assert!(!global_solvability_condition(&d1, a));
        }
        assert!(solvability_amplitude_threshold(&d1).is_none());
    }

    #[test]
    fn front_radius_examples() {
        let d = derive(&e2()).unwrap();
        assert!(close(
            front_radius_theory(&d, 0.5, 1.0).unwrap(),
            2f64.sqrt(),
            1e-15
        ));
        assert!(close(
            front_radius_theory(&d, 0.5, 2.0).unwrap(),
            2.0,
            1e-15
        ));
        for tau in [0.3, 1.0, 7.5] {
            let r = front_radius_theory(&d, 0.5, tau).unwrap();
            let xi = d.space_map(r).unwrap() * tau.powf(-1.0 / d.params.p);
            assert!(close(xi, d.xi_b, 1e-12));
        }
    }

    #[test]
    fn absorption_examples() {
        let d = derive(&e1()).unwrap();
        let e = std::f64::consts::E;
        let v0 = absorption_asymptote(&d, 0.0, e, 0.0).unwrap();
        assert!(close(v0, e.powf(-1.0 / 3.0), 1e-14));
        assert!(close(v0, 0.71653, 1e-5));
        let v1 = absorption_asymptote(&d, 0.0, e, e.sqrt()).unwrap();
        assert!(close(v1, v0 / e, 1e-14));
        assert!(absorption_asymptote(&d, 0.0, e, 1e3).unwrap() < 1e-300);
        assert!(absorption_asymptote(&d, 0.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn profiles_are_monotone() {
        let cases = [
            (derive(&e2()).unwrap(), 0.5),
            (derive(&ProblemParams { m: 1.0, ..e1() }).unwrap(), 1.0),
            (derive(&e3()).unwrap(), 1.0),
        ];
        for (d, a) in cases {
            let prof = Profile::for_regime(&d, a).unwrap();
            let hi = if prof.xi_b().is_finite() {
                1.2 * prof.xi_b()
            } else {
                10.0
            };
            let mut prev = f64::INFINITY;
            for i in 0..=10_000 {
                let v = prof.value(hi * i as f64 / 10_000.0);
                assert!(v <= prev, "{:?} not monotone", prof.kind);
                prev = v;
            }
        }
    }

    #[test]
    fn zkb_support_is_exact() {
        let d = derive(&e2()).unwrap();
        let prof = Profile::for_regime(&d, 0.5).unwrap();
        for i in 0..1000 {
            let xi = prof.xi_b() * i as f64 / 1000.0;
            assert!(prof.value(xi) > 0.0);
            assert_eq!(prof.value(prof.xi_b() * (1.0 + i as f64 / 1000.0)), 0.0);
        }
    }
}
