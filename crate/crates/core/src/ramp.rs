//! Scalar control schedules `g(t)` on `[0, τ]`.
//!
//! Every ramp exposes its value together with closed-form first and second
//! time derivatives. Local counterdiabatic driving needs `g̈`, so derivatives
//! are never obtained by differencing.

use std::f64::consts::{FRAC_2_PI, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value and time derivatives of a ramp at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RampPoint {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl RampPoint {
    /// Multiply value and both derivatives by `k`.
    pub fn scaled(self, k: f64) -> Self {
        RampPoint {
            value: k * self.value,
            d1: k * self.d1,
            d2: k * self.d2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampKind {
    Polynomial,
    Bob,
    Fourier,
    TanOptimal,
    TanhOptimal,
    Blended,
}

/// One `a_n sin(nπt/τ + φ_n)` component of a Fourier ramp.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub amplitude: f64,
    pub phase: f64,
}

/// Bang-off-bang field: a kick of `+g_Q` at the start, free evolution, and a
/// kick of `-g_Q` at the end. Kicks are rectangles whose areas are the kick
/// angles `φ_i = g_Q τ_bi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BobPulse {
    pub g_q: f64,
    pub tau: f64,
    /// Duration of the opening kick.
    pub kick1: f64,
    /// Duration of the closing kick.
    pub kick2: f64,
}

impl BobPulse {
    /// Build a pulse from kick angles in `[0, 2π)`.
    pub fn from_angles(g_q: f64, tau: f64, angles: (f64, f64)) -> Result<Self> {
        if !(g_q > 0.0 && g_q.is_finite()) {
            return Err(Error::invalid(format!("kick amplitude must be positive, got {g_q}")));
        }
        check_duration(tau)?;
        for phi in [angles.0, angles.1] {
            if !(0.0..TAU).contains(&phi) {
                return Err(Error::invalid(format!("kick angle {phi} outside [0, 2π)")));
            }
        }
        let pulse = BobPulse {
            g_q,
            tau,
            kick1: angles.0 / g_q,
            kick2: angles.1 / g_q,
        };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn validate(&self) -> Result<()> {
        check_duration(self.tau)?;
        if !(self.g_q > 0.0) {
            return Err(Error::invalid("kick amplitude must be positive"));
        }
        if self.kick1 < 0.0 || self.kick2 < 0.0 {
            return Err(Error::invalid("kick durations must be non-negative"));
        }
        if self.kick1 >= 0.5 * self.tau || self.kick2 >= 0.5 * self.tau {
            return Err(Error::invalid(format!(
                "kicks of {} and {} overlap within τ = {}",
                self.kick1, self.kick2, self.tau
            )));
        }
        Ok(())
    }

    pub fn angles(&self) -> (f64, f64) {
        (self.g_q * self.kick1, self.g_q * self.kick2)
    }

    /// Length of the field-free window between the kicks.
    pub fn free_duration(&self) -> f64 {
        self.tau - self.kick1 - self.kick2
    }

    pub fn field(&self, t: f64) -> f64 {
        if t < self.kick1 {
            self.g_q
        } else if t < self.tau - self.kick2 {
            0.0
        } else {
            -self.g_q
        }
    }
}

/// A scalar control schedule. Serializes as `{"kind": ..., <parameters>}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Ramp {
    /// Quintic with vanishing first and second derivatives at both ends.
    Polynomial {
        g0: f64,
        g_d: f64,
        tau: f64,
    },
    Bob(BobPulse),
    /// Linear ramp from `g0` to `-g0` plus a truncated sine series.
    Fourier {
        g0: f64,
        tau: f64,
        terms: Vec<FourierTerm>,
    },
    /// `Δ tan[c1Δ (s + c2)]`: constant counterdiabatic angular speed.
    TanOptimal {
        delta: f64,
        g0: f64,
        g1: f64,
        tau: f64,
    },
    /// `-g0 [tanh(ms - m) + tanh(ms)]`: jumps at the ends, near zero between.
    TanhOptimal {
        g0: f64,
        m: f64,
        tau: f64,
    },
    /// `f(τ) g_A + (1 - f(τ)) g_NA` with `f(τ) = (2/π) arctan(ετ)`.
    Blended {
        adiabatic: Box<Ramp>,
        nonadiabatic: Box<Ramp>,
        epsilon: f64,
    },
}

fn check_duration(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "ramp duration must be positive and finite, got {tau}"
        )))
    }
}

/// Quintic smooth ramp `g0 + g_d (10 s³ - 15 s⁴ + 6 s⁵)`, `s = t/τ`.
pub fn poly_smooth_ramp(g0: f64, g_d: f64, tau: f64) -> Result<Ramp> {
    check_duration(tau)?;
    Ok(Ramp::Polynomial { g0, g_d, tau })
}

pub fn bob_pulse(g_q: f64, tau: f64, angles: (f64, f64)) -> Result<Ramp> {
    BobPulse::from_angles(g_q, tau, angles).map(Ramp::Bob)
}

pub fn oc_fourier_ramp(g0: f64, tau: f64, terms: Vec<FourierTerm>) -> Result<Ramp> {
    check_duration(tau)?;
    Ok(Ramp::Fourier { g0, tau, terms })
}

/// Lowest-cost counterdiabatic ramp in the fast-driving regime.
pub fn cd_na_ramp(delta: f64, g0: f64, g1: f64, tau: f64) -> Result<Ramp> {
    check_duration(tau)?;
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::invalid("gap must be non-zero"));
    }
    Ok(Ramp::TanOptimal { delta, g0, g1, tau })
}

/// Lowest-cost ramp in the adiabatic regime. Only valid for `g1 = -g0`.
pub fn cd_a_ramp(g0: f64, g1: f64, m: f64, tau: f64) -> Result<Ramp> {
    check_duration(tau)?;
    if (g1 + g0).abs() > 1e-12 * g0.abs().max(1.0) {
        return Err(Error::invalid(format!(
            "tanh ramp requires antisymmetric endpoints, got g0 = {g0}, g1 = {g1}"
        )));
    }
    if !(m > 0.0) {
        return Err(Error::invalid("tanh steepness m must be positive"));
    }
    Ok(Ramp::TanhOptimal { g0, m, tau })
}

pub fn cd_blended_ramp(adiabatic: Ramp, nonadiabatic: Ramp, epsilon: f64) -> Result<Ramp> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("blending rate ε must be positive"));
    }
    let ramp = Ramp::Blended {
        adiabatic: Box::new(adiabatic),
        nonadiabatic: Box::new(nonadiabatic),
        epsilon,
    };
    ramp.validate()?;
    Ok(ramp)
}

/// Blending weight `f(τ) = (2/π) arctan(ετ)`.
pub fn blend_weight(epsilon: f64, tau: f64) -> f64 {
    FRAC_2_PI * (epsilon * tau).atan()
}

/// `(c1Δ, c2)` of the tan ramp; `c2` is undefined when `g0 = g1`.
pub fn tan_constants(delta: f64, g0: f64, g1: f64) -> (f64, f64) {
    let start = (g0 / delta).atan();
    let c1_delta = (g1 / delta).atan() - start;
    (c1_delta, start / c1_delta)
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    if c.is_finite() {
        1.0 / (c * c)
    } else {
        0.0
    }
}

impl Ramp {
    pub fn kind(&self) -> RampKind {
        match self {
            Ramp::Polynomial { .. } => RampKind::Polynomial,
            Ramp::Bob(_) => RampKind::Bob,
            Ramp::Fourier { .. } => RampKind::Fourier,
            Ramp::TanOptimal { .. } => RampKind::TanOptimal,
            Ramp::TanhOptimal { .. } => RampKind::TanhOptimal,
            Ramp::Blended { .. } => RampKind::Blended,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            Ramp::Polynomial { tau, .. }
            | Ramp::Fourier { tau, .. }
            | Ramp::TanOptimal { tau, .. }
            | Ramp::TanhOptimal { tau, .. } => *tau,
            Ramp::Bob(p) => p.tau,
            Ramp::Blended { adiabatic, .. } => adiabatic.duration(),
        }
    }

    /// Check the invariants a constructor would have enforced. Needed after
    /// deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            Ramp::Polynomial { tau, .. } | Ramp::Fourier { tau, .. } => check_duration(*tau),
            Ramp::Bob(p) => p.validate(),
            Ramp::TanOptimal { delta, g0, g1, tau } => cd_na_ramp(*delta, *g0, *g1, *tau).map(drop),
            Ramp::TanhOptimal { g0, m, tau } => cd_a_ramp(*g0, -*g0, *m, *tau).map(drop),
            Ramp::Blended {
                adiabatic,
                nonadiabatic,
                epsilon,
            } => {
                adiabatic.validate()?;
                nonadiabatic.validate()?;
                if !(*epsilon > 0.0) {
                    return Err(Error::invalid("blending rate ε must be positive"));
                }
                let (ta, tn) = (adiabatic.duration(), nonadiabatic.duration());
                if (ta - tn).abs() > 1e-12 * ta.max(tn) {
                    return Err(Error::invalid(format!(
                        "blended ramps differ in duration: {ta} vs {tn}"
                    )));
                }
                for (a, n) in [
                    (adiabatic.value(0.0), nonadiabatic.value(0.0)),
                    (adiabatic.value(ta), nonadiabatic.value(ta)),
                ] {
                    if (a - n).abs() > 1e-9 * a.abs().max(n.abs()).max(1.0) {
                        return Err(Error::invalid(format!(
                            "blended ramps disagree at the boundary: {a} vs {n}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Interior times where the ramp jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Ramp::Bob(p) => {
                let mut pts = Vec::new();
                if p.kick1 > 0.0 {
                    pts.push(p.kick1);
                }
                if p.kick2 > 0.0 {
                    pts.push(p.tau - p.kick2);
                }
                pts
            }
            _ => Vec::new(),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).value
    }

    pub fn deriv1(&self, t: f64) -> f64 {
        self.eval(t).d1
    }

    pub fn deriv2(&self, t: f64) -> f64 {
        self.eval(t).d2
    }

    pub fn eval(&self, t: f64) -> RampPoint {
        match self {
            Ramp::Polynomial { g0, g_d, tau } => {
                let s = t / tau;
                let s2 = s * s;
                RampPoint {
                    value: g0 + g_d * s2 * s * (10.0 - 15.0 * s + 6.0 * s2),
                    d1: g_d * 30.0 * s2 * (1.0 - s) * (1.0 - s) / tau,
                    d2: g_d * 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (tau * tau),
                }
            }
            Ramp::Bob(p) => RampPoint {
                value: p.field(t),
                d1: 0.0,
                d2: 0.0,
            },
            Ramp::Fourier { g0, tau, terms } => {
                let mut p = RampPoint {
                    value: g0 - 2.0 * g0 * t / tau,
                    d1: -2.0 * g0 / tau,
                    d2: 0.0,
                };
                for (i, term) in terms.iter().enumerate() {
                    let k = (i + 1) as f64 * PI / tau;
                    let (sin, cos) = (k * t + term.phase).sin_cos();
                    p.value += term.amplitude * sin;
                    p.d1 += term.amplitude * k * cos;
                    p.d2 -= term.amplitude * k * k * sin;
                }
                p
            }
            Ramp::TanOptimal { delta, g0, g1, tau } => {
                let start = (g0 / delta).atan();
                let rate = (g1 / delta).atan() - start;
                let u = rate * t / tau + start;
                let tan = u.tan();
                let sec2 = 1.0 + tan * tan;
                RampPoint {
                    value: delta * tan,
                    d1: delta * rate * sec2 / tau,
                    d2: 2.0 * delta * rate * rate * sec2 * tan / (tau * tau),
                }
            }
            Ramp::TanhOptimal { g0, m, tau } => {
                let s = t / tau;
                let (a, b) = (m * s - m, m * s);
                let (ta, tb) = (a.tanh(), b.tanh());
                let (sa, sb) = (sech2(a), sech2(b));
                RampPoint {
                    value: -g0 * (ta + tb),
                    d1: -g0 * m * (sa + sb) / tau,
                    d2: 2.0 * g0 * m * m * (ta * sa + tb * sb) / (tau * tau),
                }
            }
            Ramp::Blended {
                adiabatic,
                nonadiabatic,
                epsilon,
            } => {
                let f = blend_weight(*epsilon, adiabatic.duration());
                let a = adiabatic.eval(t);
                let n = nonadiabatic.eval(t);
                RampPoint {
                    value: f * a.value + (1.0 - f) * n.value,
                    d1: f * a.d1 + (1.0 - f) * n.d1,
                    d2: f * a.d2 + (1.0 - f) * n.d2,
                }
            }
        }
    }
}
