//! Landau-Zener sweep `H0 = Δσx/2 + g(t)σz/2` through the avoided crossing,
//! with counterdiabatic, local counterdiabatic and bang-off-bang control.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect, simpson, simpson_samples};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::ramp::{self, BobPulse, Ramp, RampPoint};
use crate::two_level::{
    self, eigenpairs, evolve, evolve_converged, fidelity, integrated_cost, PauliCoeffs, PauliSchedule, QubitState,
    Segment, DEFAULT_QUADRATURE, DEFAULT_STEPS,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LzConfig {
    /// Gap Δ.
    pub delta: f64,
    pub g0: f64,
    pub g1: f64,
    pub tau: f64,
    /// Blending rate of the cost-optimized CD ramp.
    pub epsilon: f64,
    /// Steepness of the adiabatic-regime tanh ramp.
    pub m: f64,
}

impl Default for LzConfig {
    fn default() -> Self {
        LzConfig {
            delta: 0.1,
            g0: -0.2,
            g1: 0.2,
            tau: 22.14,
            epsilon: 0.1,
            m: 40.0,
        }
    }
}

impl LzConfig {
    pub fn with_tau(&self, tau: f64) -> Self {
        LzConfig { tau, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("gap Δ must be positive, got {}", self.delta)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("duration τ must be positive, got {}", self.tau)));
        }
        if !(self.g0.is_finite() && self.g1.is_finite()) {
            return Err(Error::invalid("field endpoints must be finite"));
        }
        Ok(())
    }

    /// Quintic ramp from `g0` to `g1`.
    pub fn quintic(&self) -> Result<Ramp> {
        ramp::poly_smooth_ramp(self.g0, self.g1 - self.g0, self.tau)
    }

    /// Cost-optimized CD ramp `g_C = f(τ) g_A + (1 - f(τ)) g_NA`.
    pub fn optimized(&self) -> Result<Ramp> {
        let adiabatic = ramp::cd_a_ramp(self.g0, self.g1, self.m, self.tau)?;
        let nonadiabatic = ramp::cd_na_ramp(self.delta, self.g0, self.g1, self.tau)?;
        ramp::cd_blended_ramp(adiabatic, nonadiabatic, self.epsilon)
    }

    pub fn initial_state(&self) -> QubitState {
        ground_state(self.delta, self.g0)
    }

    pub fn target_state(&self) -> QubitState {
        ground_state(self.delta, self.g1)
    }

    pub fn qsl_time(&self) -> Result<f64> {
        qsl_time(self.delta, &self.initial_state(), &self.target_state())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Bare,
    Cd,
    Lcd,
    /// CD driven along the cost-optimized blended ramp.
    CdOptimized,
    Bob,
    Oc,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Bare => "bare",
            Protocol::Cd => "cd",
            Protocol::Lcd => "lcd",
            Protocol::CdOptimized => "cd-optimized",
            Protocol::Bob => "bob",
            Protocol::Oc => "oc",
        }
    }
}

/// Ground state of `Δσx/2 + gσz/2`.
pub fn ground_state(delta: f64, g: f64) -> QubitState {
    eigenpairs(&bare_coefficients(delta, g), 0.0)
        .expect("Δ > 0 keeps the spectrum gapped")
        .ground
}

pub fn bare_coefficients(delta: f64, g: f64) -> PauliCoeffs {
    PauliCoeffs::new(0.0, delta, 0.0, g)
}

/// `H0 + H_CD` with `H_CD = -[ġΔ / (2(Δ² + g²))] σy`.
pub fn cd_coefficients(delta: f64, p: RampPoint) -> PauliCoeffs {
    PauliCoeffs::new(0.0, delta, -p.d1 * delta / (delta * delta + p.value * p.value), p.value)
}

/// `H_LCD = P σx/2 + (g - η̇) σz/2` with `P = sqrt(Δ² + θ̇²)`,
/// `θ = arccot(g/Δ)`, `η = arctan(θ̇/Δ)`.
pub fn lcd_coefficients(delta: f64, p: RampPoint) -> PauliCoeffs {
    let d2 = delta * delta;
    let den = d2 + p.value * p.value;
    let theta_dot = -p.d1 * delta / den;
    let theta_ddot = -delta * (p.d2 * den - 2.0 * p.value * p.d1 * p.d1) / (den * den);
    let eta_dot = theta_ddot * delta / (d2 + theta_dot * theta_dot);
    PauliCoeffs::new(0.0, (d2 + theta_dot * theta_dot).sqrt(), 0.0, p.value - eta_dot)
}

/// `θ̇ = -ġΔ/(Δ² + g²)`
pub fn mixing_angle_rate(delta: f64, p: RampPoint) -> f64 {
    -p.d1 * delta / (delta * delta + p.value * p.value)
}

fn from_ramp(ramp: &Ramp, build: impl Fn(RampPoint) -> PauliCoeffs + Send + Sync + 'static) -> Result<PauliSchedule> {
    let r = ramp.clone();
    PauliSchedule::new(ramp.duration(), move |t| build(r.eval(t)))
}

pub fn lz_bare_with(delta: f64, ramp: &Ramp) -> Result<PauliSchedule> {
    if let Ramp::Bob(p) = ramp {
        return lz_bob(delta, p);
    }
    from_ramp(ramp, move |p| bare_coefficients(delta, p.value))
}

pub fn lz_cd_with(delta: f64, ramp: &Ramp) -> Result<PauliSchedule> {
    from_ramp(ramp, move |p| cd_coefficients(delta, p))
}

/// LCD schedule. Only exact when the ramp has `ġ = g̈ = 0` at both ends; see
/// [`flat_endpoints`].
pub fn lz_lcd_with(delta: f64, ramp: &Ramp) -> Result<PauliSchedule> {
    from_ramp(ramp, move |p| lcd_coefficients(delta, p))
}

pub fn flat_endpoints(ramp: &Ramp, tol: f64) -> bool {
    let (a, b) = (ramp.eval(0.0), ramp.eval(ramp.duration()));
    [a.d1, a.d2, b.d1, b.d2].iter().all(|d| d.abs() <= tol)
}

pub fn lz_bare(cfg: &LzConfig) -> Result<PauliSchedule> {
    cfg.validate()?;
    lz_bare_with(cfg.delta, &cfg.quintic()?)
}

pub fn lz_cd(cfg: &LzConfig) -> Result<PauliSchedule> {
    cfg.validate()?;
    lz_cd_with(cfg.delta, &cfg.quintic()?)
}

pub fn lz_lcd(cfg: &LzConfig) -> Result<PauliSchedule> {
    cfg.validate()?;
    lz_lcd_with(cfg.delta, &cfg.quintic()?)
}

pub fn lz_cd_optimized(cfg: &LzConfig) -> Result<PauliSchedule> {
    cfg.validate()?;
    lz_cd_with(cfg.delta, &cfg.optimized()?)
}

/// Bare Hamiltonian under a bang-off-bang field: three constant segments.
pub fn lz_bob(delta: f64, pulse: &BobPulse) -> Result<PauliSchedule> {
    pulse.validate()?;
    let (g_q, tau) = (pulse.g_q, pulse.tau);
    let free_end = tau - pulse.kick2;
    PauliSchedule::piecewise(vec![
        Segment::new(0.0, pulse.kick1, move |_| bare_coefficients(delta, g_q)),
        Segment::new(pulse.kick1, free_end, move |_| bare_coefficients(delta, 0.0)),
        Segment::new(free_end, tau, move |_| bare_coefficients(delta, -g_q)),
    ])
}

/// Schedule for one of the ramp-based protocols.
pub fn schedule_for(cfg: &LzConfig, protocol: Protocol) -> Result<PauliSchedule> {
    match protocol {
        Protocol::Bare => lz_bare(cfg),
        Protocol::Cd => lz_cd(cfg),
        Protocol::Lcd => lz_lcd(cfg),
        Protocol::CdOptimized => lz_cd_optimized(cfg),
        Protocol::Bob | Protocol::Oc => Err(Error::invalid(format!(
            "{} schedules come from an optimization, not from the config alone",
            protocol.name()
        ))),
    }
}

/// Speed-limit time `τ = (2/Δ) arccos(|α_i α_t| + |β_i β_t|)`.
pub fn qsl_time(delta: f64, initial: &QubitState, target: &QubitState) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::invalid("gap Δ must be positive"));
    }
    for s in [initial, target] {
        if (s.norm_sqr() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("speed-limit states must be normalized"));
        }
    }
    let overlap = (initial.alpha * target.alpha).norm() + (initial.beta * target.beta).norm();
    if overlap > 1.0 + 1e-12 {
        return Err(Error::invalid(format!("arccos argument {overlap} exceeds 1")));
    }
    Ok(2.0 / delta * overlap.min(1.0).acos())
}

/// Final fidelity to the target ground state, converged in the step count.
pub fn final_fidelity(cfg: &LzConfig, protocol: Protocol) -> Result<f64> {
    let schedule = schedule_for(cfg, protocol)?;
    let c = evolve_converged(
        &schedule,
        &cfg.initial_state(),
        &cfg.target_state(),
        DEFAULT_STEPS,
        1e-10,
    )?;
    Ok(c.fidelity)
}

pub fn protocol_cost(cfg: &LzConfig, protocol: Protocol) -> Result<f64> {
    integrated_cost(&schedule_for(cfg, protocol)?, DEFAULT_QUADRATURE, false)
}

/// `∫₀¹ sqrt((Δ² + g(s)²)/2) ds`, the long-duration limit of the cost.
pub fn adiabatic_cost_limit(delta: f64, ramp: &Ramp) -> f64 {
    let tau = ramp.duration();
    simpson(
        |s| {
            let g = ramp.value(s * tau);
            ((delta * delta + g * g) / 2.0).sqrt()
        },
        0.0,
        1.0,
        DEFAULT_QUADRATURE,
    )
}

#[derive(Clone, Copy, Debug)]
pub struct BobOutcome {
    pub pulse: BobPulse,
    pub fidelity: f64,
    pub cost: f64,
    /// Whether the fidelity target of 0.999 was met.
    pub success: bool,
}

impl BobOutcome {
    pub fn angles(&self) -> (f64, f64) {
        self.pulse.angles()
    }
}

/// Time-averaged cost of a BOB pulse in closed form.
pub fn bob_cost_analytic(delta: f64, pulse: &BobPulse) -> f64 {
    let kick = (delta * delta + pulse.g_q * pulse.g_q).sqrt() / 2f64.sqrt();
    let free = delta / 2f64.sqrt();
    (kick * (pulse.kick1 + pulse.kick2) + free * pulse.free_duration()) / pulse.tau
}

fn bob_fidelity(delta: f64, g_q: f64, tau: f64, angles: (f64, f64), psi0: &QubitState, target: &QubitState) -> f64 {
    let wrap = |a: f64| a.rem_euclid(TAU);
    match BobPulse::from_angles(g_q, tau, (wrap(angles.0), wrap(angles.1)))
        .and_then(|p| lz_bob(delta, &p))
        .and_then(|s| evolve(&s, psi0, 3))
    {
        Ok(psi) => fidelity(&psi, target),
        Err(_) => 0.0,
    }
}

/// Maximize the final fidelity of a BOB pulse at the speed-limit time over
/// the two kick angles: a 64×64 grid on `[0, 2π)²` followed by simplex
/// refinement of the best grid cells. Deterministic.
pub fn optimize_bob_kicks(cfg: &LzConfig, g_q: f64) -> Result<BobOutcome> {
    cfg.validate()?;
    let tau = cfg.qsl_time()?;
    let (psi0, target) = (cfg.initial_state(), cfg.target_state());
    const GRID: usize = 64;
    let cell = TAU / GRID as f64;
    let mut grid: Vec<(f64, (f64, f64))> = (0..GRID * GRID)
        .into_par_iter()
        .map(|k| {
            let a = ((k / GRID) as f64 * cell, (k % GRID) as f64 * cell);
            (bob_fidelity(cfg.delta, g_q, tau, a, &psi0, &target), a)
        })
        .collect();
    grid.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1 .0.total_cmp(&b.1 .0))
            .then(a.1 .1.total_cmp(&b.1 .1))
    });

    let opts = NelderMeadOptions {
        max_evals: 2_000,
        f_tol: 1e-15,
        x_tol: 1e-12,
    };
    let mut best: Option<(f64, (f64, f64))> = None;
    for (_, start) in grid.iter().take(8) {
        let m = nelder_mead(
            |x| 1.0 - bob_fidelity(cfg.delta, g_q, tau, (x[0], x[1]), &psi0, &target),
            &[start.0, start.1],
            &[0.25 * cell, 0.25 * cell],
            &opts,
        );
        let angles = (m.x[0].rem_euclid(TAU), m.x[1].rem_euclid(TAU));
        let f = 1.0 - m.f;
        // among equally good solutions keep the one with the least kick area
        let better = match best {
            None => true,
            Some((bf, ba)) => f > bf + 1e-9 || ((f - bf).abs() <= 1e-9 && angles.0 + angles.1 < ba.0 + ba.1),
        };
        if better {
            best = Some((f, angles));
        }
    }
    let (f, angles) = best.expect("grid is non-empty");
    let pulse = BobPulse::from_angles(g_q, tau, angles)?;
    let schedule = lz_bob(cfg.delta, &pulse)?;
    let fidelity = fidelity(&evolve(&schedule, &psi0, 3)?, &target);
    debug_assert!((fidelity - f).abs() < 1e-12);
    Ok(BobOutcome {
        pulse,
        fidelity,
        cost: integrated_cost(&schedule, DEFAULT_QUADRATURE, false)?,
        success: fidelity >= 0.999,
    })
}

/// Per-`s` pieces of the CD cost: `Σ E_n²` and `Σ_{n≠a} |A_{n,a}|²`.
#[derive(Clone, Copy, Debug)]
pub struct DecompositionPoint {
    pub s: f64,
    pub energy_sq: f64,
    pub coupling_sq: f64,
}

/// Evaluate the spectral decomposition of the CD cost on a grid of scaled
/// times `s ∈ [0, 1]`, from the eigenvectors of `H0(s)` and the matrix
/// elements of `∂_s H0`.
pub fn cd_cost_decomposition(delta: f64, ramp: &Ramp, s_grid: &[f64]) -> Result<Vec<DecompositionPoint>> {
    let tau = ramp.duration();
    s_grid
        .iter()
        .map(|&s| {
            let t = s * tau;
            let p = ramp.eval(t);
            let e = eigenpairs(&bare_coefficients(delta, p.value), t)?;
            if e.gap() <= 1e-14 {
                return Err(Error::Degenerate { t });
            }
            // ∂_s H0 = (dg/ds) σz/2
            let dg_ds = p.d1 * tau;
            let g = e.ground;
            let x = e.excited;
            let sz = g.alpha.conj() * x.alpha - g.beta.conj() * x.beta;
            let a = (0.5 * dg_ds * sz).norm() / e.gap();
            Ok(DecompositionPoint {
                s,
                energy_sq: e.e_minus * e.e_minus + e.e_plus * e.e_plus,
                coupling_sq: 2.0 * a * a,
            })
        })
        .collect()
}

/// `C(τ) = ∫₀¹ [Σ E² + τ⁻² Σ|A|²]^{1/2} ds` over a uniform `s` grid.
pub fn decomposition_cost(points: &[DecompositionPoint], tau: f64) -> f64 {
    let h = if points.len() > 1 {
        points[1].s - points[0].s
    } else {
        0.0
    };
    let vals: Vec<f64> = points
        .iter()
        .map(|p| (p.energy_sq + p.coupling_sq / (tau * tau)).sqrt())
        .collect();
    simpson_samples(&vals, h)
}

pub fn uniform_s_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Integrated costs per protocol over a list of durations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostTable {
    pub protocols: Vec<Protocol>,
    pub taus: Vec<f64>,
    /// `costs[i][j]`: protocol `j` at `taus[i]`.
    pub costs: Vec<Vec<f64>>,
}

impl CostTable {
    pub fn column(&self, protocol: Protocol) -> Option<Vec<f64>> {
        let j = self.protocols.iter().position(|p| *p == protocol)?;
        Some(self.costs.iter().map(|row| row[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["tau".to_string()];
        header.extend(self.protocols.iter().map(|p| format!("C_{}", p.name())));
        w.write_record(&header)?;
        for (tau, row) in self.taus.iter().zip(&self.costs) {
            let mut rec = vec![format!("{tau:.12e}")];
            rec.extend(row.iter().map(|c| format!("{c:.12e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn cost_scan(template: &LzConfig, taus: &[f64], protocols: &[Protocol]) -> Result<CostTable> {
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::invalid(format!("scan durations must be positive, got {t}")));
    }
    let costs = taus
        .par_iter()
        .map(|&tau| {
            let cfg = template.with_tau(tau);
            protocols
                .iter()
                .map(|&p| protocol_cost(&cfg, p))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostTable {
        protocols: protocols.to_vec(),
        taus: taus.to_vec(),
        costs,
    })
}

/// Duration at which `C_CD - C_LCD` changes sign: bracketed by the first sign
/// change on `taus`, refined by bisection to 1e-3 in τ.
pub fn locate_crossover(template: &LzConfig, taus: &[f64]) -> Result<Option<f64>> {
    let diff = |tau: f64| -> Result<f64> {
        let cfg = template.with_tau(tau);
        Ok(protocol_cost(&cfg, Protocol::Cd)? - protocol_cost(&cfg, Protocol::Lcd)?)
    };
    let table = cost_scan(template, taus, &[Protocol::Cd, Protocol::Lcd])?;
    let signs: Vec<f64> = table.costs.iter().map(|r| r[0] - r[1]).collect();
    let Some(i) = signs.windows(2).position(|w| w[0].signum() != w[1].signum()) else {
        return Ok(None);
    };
    let mut failure = None;
    let root = bisect(
        |tau| match diff(tau) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        taus[i],
        taus[i + 1],
        1e-3,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(root),
    }
}

/// Per-time-step quantities behind the fidelity, cost-rate and spectrum
/// panels for one protocol.
#[derive(Clone, Debug)]
pub struct ProtocolTrace {
    pub protocol: Protocol,
    pub trajectory: two_level::QubitTrajectory,
    pub e_minus: Vec<f64>,
    pub e_plus: Vec<f64>,
}

/// Propagate `schedule` from the initial ground state, recording fidelity to
/// the instantaneous ground state of the bare quintic sweep and the spectrum
/// of the driving Hamiltonian itself.
pub fn trace(cfg: &LzConfig, protocol: Protocol, schedule: &PauliSchedule, steps: usize) -> Result<ProtocolTrace> {
    let bare = lz_bare(&cfg.with_tau(schedule.duration()))?;
    let trajectory =
        two_level::propagate_tracking(schedule, &bare, two_level::Branch::Ground, &cfg.initial_state(), steps)?;
    let mut e_minus = Vec::with_capacity(trajectory.times.len());
    let mut e_plus = Vec::with_capacity(trajectory.times.len());
    for &t in &trajectory.times {
        let e = eigenpairs(&schedule.at(t), t)?;
        e_minus.push(e.e_minus);
        e_plus.push(e.e_plus);
    }
    Ok(ProtocolTrace {
        protocol,
        trajectory,
        e_minus,
        e_plus,
    })
}

/// Kick angles realizing the ideal speed-limit path when `g_Q → ∞`.
pub fn ideal_kick_angles() -> (f64, f64) {
    (FRAC_PI_2, FRAC_PI_2)
}
