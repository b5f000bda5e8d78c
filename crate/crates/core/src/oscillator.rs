//! Thermal parametric harmonic oscillator `H = p²/2 + ω(t)² x²/2` (unit mass).
//!
//! Adiabaticity is tracked through the Husimi parameter `Q*`, built from the
//! two force-free classical solutions, and through the Ermakov scale `b(t)`.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect, rk4_step, simpson_samples};
use crate::ramp::{self, RampPoint};

/// Default RK4 step count over the whole schedule.
pub const DEFAULT_OSC_STEPS: usize = 20_000;

const WRONSKIAN_TARGET: f64 = 1e-10;
const WRONSKIAN_ABORT: f64 = 1e-6;
const MAX_REFINEMENTS: u32 = 6;

type OmegaFn = Arc<dyn Fn(f64) -> RampPoint + Send + Sync>;

#[derive(Clone)]
struct OmegaSegment {
    start: f64,
    end: f64,
    f: OmegaFn,
}

/// Trap frequency `ω(t)` with closed-form first and second derivatives, as a
/// sequence of smooth pieces. Right-continuous at piece boundaries.
#[derive(Clone)]
pub struct FrequencySchedule {
    omega0: f64,
    omega1: f64,
    tau: f64,
    segments: Vec<OmegaSegment>,
}

impl fmt::Debug for FrequencySchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrequencySchedule")
            .field("omega0", &self.omega0)
            .field("omega1", &self.omega1)
            .field("tau", &self.tau)
            .field("breakpoints", &self.breakpoints())
            .finish()
    }
}

impl FrequencySchedule {
    /// `ω(t) = ω0 + (ω1 - ω0)(10s³ - 15s⁴ + 6s⁵)`, `s = t/τ`.
    pub fn quintic(omega0: f64, omega1: f64, tau: f64) -> Result<Self> {
        check_positive("ω0", omega0)?;
        check_positive("ω1", omega1)?;
        let r = ramp::poly_smooth_ramp(omega0, omega1 - omega0, tau)?;
        Self::from_fn(omega0, omega1, tau, move |t| r.eval(t))
    }

    pub fn constant(omega: f64, tau: f64) -> Result<Self> {
        check_positive("ω", omega)?;
        Self::from_fn(omega, omega, tau, move |_| RampPoint {
            value: omega,
            d1: 0.0,
            d2: 0.0,
        })
    }

    /// Sudden jump from `ω0` to `ω1` at `t_switch ∈ [0, τ)`.
    pub fn quench(omega0: f64, omega1: f64, t_switch: f64, tau: f64) -> Result<Self> {
        check_positive("ω0", omega0)?;
        check_positive("ω1", omega1)?;
        check_positive("τ", tau)?;
        if !(0.0..tau).contains(&t_switch) {
            return Err(Error::invalid(format!("quench time {t_switch} outside [0, {tau})")));
        }
        let flat = |w: f64| -> OmegaFn {
            Arc::new(move |_| RampPoint {
                value: w,
                d1: 0.0,
                d2: 0.0,
            })
        };
        let mut segments = Vec::new();
        if t_switch > 0.0 {
            segments.push(OmegaSegment {
                start: 0.0,
                end: t_switch,
                f: flat(omega0),
            });
        }
        segments.push(OmegaSegment {
            start: t_switch,
            end: tau,
            f: flat(omega1),
        });
        Ok(FrequencySchedule {
            omega0,
            omega1,
            tau,
            segments,
        })
    }

    /// Single smooth piece given by `f(t) = (ω, ω̇, ω̈)`.
    pub fn from_fn(
        omega0: f64,
        omega1: f64,
        tau: f64,
        f: impl Fn(f64) -> RampPoint + Send + Sync + 'static,
    ) -> Result<Self> {
        check_positive("τ", tau)?;
        Ok(FrequencySchedule {
            omega0,
            omega1,
            tau,
            segments: vec![OmegaSegment {
                start: 0.0,
                end: tau,
                f: Arc::new(f),
            }],
        })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn omega1(&self) -> f64 {
        self.omega1
    }

    pub fn duration(&self) -> f64 {
        self.tau
    }

    /// Interior piece boundaries.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    fn segment_index(&self, t: f64) -> usize {
        self.segments.iter().rposition(|s| t >= s.start).unwrap_or(0)
    }

    pub fn eval(&self, t: f64) -> RampPoint {
        (self.segments[self.segment_index(t)].f)(t)
    }

    pub fn omega(&self, t: f64) -> f64 {
        self.eval(t).value
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `Ω² = ω² - 3ω̇²/(4ω²) + ω̈/(2ω)`. The sign is returned, not checked.
pub fn lcd_frequency_sq(p: RampPoint) -> f64 {
    let w = p.value;
    w * w - 3.0 * p.d1 * p.d1 / (4.0 * w * w) + p.d2 / (2.0 * w)
}

pub fn lcd_frequency(sched: &FrequencySchedule, t: f64) -> f64 {
    lcd_frequency_sq(sched.eval(t))
}

/// `Q*_CD = [1 - ω̇²/(4ω⁴)]^{-1/2}`; fails where the CD term inverts the trap.
pub fn qstar_cd(sched: &FrequencySchedule, t: f64) -> Result<f64> {
    qstar_cd_point(sched.eval(t), t)
}

fn qstar_cd_point(p: RampPoint, t: f64) -> Result<f64> {
    let w2 = p.value * p.value;
    let bound = p.d1 * p.d1 / (4.0 * w2);
    if !(p.value > 0.0) || w2 <= bound {
        return Err(Error::TrapInversion { t, omega_sq: w2, bound });
    }
    Ok((1.0 - bound / w2).sqrt().recip())
}

/// `Q*_IE = 1 + ω̇²/(8ω⁴)`.
pub fn qstar_ie(sched: &FrequencySchedule, t: f64) -> Result<f64> {
    qstar_ie_point(sched.eval(t), t)
}

fn qstar_ie_point(p: RampPoint, t: f64) -> Result<f64> {
    if !(p.value > 0.0) {
        return Err(Error::invalid(format!(
            "ω(t) must be positive, got {} at t = {t}",
            p.value
        )));
    }
    Ok(1.0 + p.d1 * p.d1 / (8.0 * p.value.powi(4)))
}

/// `coth(βω0/2)`: thermal occupation factor of the initial trap.
pub fn thermal_factor(beta: f64, omega0: f64) -> f64 {
    (beta * omega0 / 2.0).tanh().recip()
}

/// Which frequency drives the classical and Ermakov equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Drive {
    Bare,
    /// The local counterdiabatic frequency `Ω(t)`.
    Lcd,
}

/// Classical solutions `X` (`X0 = 0, Ẋ0 = 1`), `Y` (`Y0 = 1, Ẏ0 = 0`) and the
/// Ermakov scale `b` (`b0 = 1, ḃ0 = 0`) on a time grid.
#[derive(Clone, Debug)]
pub struct OscillatorSolution {
    pub omega0: f64,
    pub drive: Drive,
    pub times: Vec<f64>,
    /// Squared drive frequency at each grid point.
    pub freq_sq: Vec<f64>,
    pub x: Vec<f64>,
    pub x_dot: Vec<f64>,
    pub y: Vec<f64>,
    pub y_dot: Vec<f64>,
    pub b: Vec<f64>,
    pub b_dot: Vec<f64>,
    /// `max |X Ẏ - Ẋ Y + 1|` over the grid.
    pub wronskian_drift: f64,
    pub steps: usize,
    /// Grid index ranges of each smooth piece, endpoints inclusive.
    pub pieces: Vec<Range<usize>>,
    /// Left-limit squared frequency at the end of each piece.
    piece_end_freq_sq: Vec<f64>,
}

impl OscillatorSolution {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn wronskian(&self, i: usize) -> f64 {
        self.x[i] * self.y_dot[i] - self.x_dot[i] * self.y[i]
    }

    fn frequency(&self, i: usize) -> Result<f64> {
        self.checked_frequency(i, self.freq_sq[i])
    }

    fn checked_frequency(&self, i: usize, w2: f64) -> Result<f64> {
        if !(w2 > 0.0) {
            return Err(Error::invalid(format!(
                "drive frequency squared {w2} is not positive at t = {}",
                self.times[i]
            )));
        }
        Ok(w2.sqrt())
    }

    /// `Q* = [ω0²(ω²X² + Ẋ²) + (ω²Y² + Ẏ²)] / (2ω0ω)` with `ω` the drive frequency.
    pub fn husimi_qstar(&self, i: usize) -> Result<f64> {
        self.husimi_with(i, self.freq_sq[i])
    }

    fn husimi_with(&self, i: usize, w2: f64) -> Result<f64> {
        let w = self.checked_frequency(i, w2)?;
        let w2 = w * w;
        let (x, xd, y, yd) = (self.x[i], self.x_dot[i], self.y[i], self.y_dot[i]);
        let w0 = self.omega0;
        Ok((w0 * w0 * (w2 * x * x + xd * xd) + (w2 * y * y + yd * yd)) / (2.0 * w0 * w))
    }

    /// `⟨H⟩ = [ḃ² + ω²b² + ω0²/b²] coth(βω0/2) / (4ω0)`.
    pub fn ie_energy(&self, i: usize, beta: f64) -> Result<f64> {
        let w2 = self.frequency(i)?.powi(2);
        let (b, bd, w0) = (self.b[i], self.b_dot[i], self.omega0);
        Ok((bd * bd + w2 * b * b + w0 * w0 / (b * b)) * thermal_factor(beta, w0) / (4.0 * w0))
    }

    /// `⟨H⟩ / ((ω/2) coth(βω0/2))` from the Ermakov route.
    pub fn energy_ratio(&self, i: usize) -> Result<f64> {
        let w = self.frequency(i)?;
        let (b, bd, w0) = (self.b[i], self.b_dot[i], self.omega0);
        Ok((bd * bd + w * w * b * b + w0 * w0 / (b * b)) / (2.0 * w0 * w))
    }
}

fn drive_sq(drive: Drive, p: RampPoint) -> f64 {
    match drive {
        Drive::Bare => p.value * p.value,
        Drive::Lcd => lcd_frequency_sq(p),
    }
}

fn integrate_once(sched: &FrequencySchedule, drive: Drive, steps: usize) -> Result<OscillatorSolution> {
    let w0 = sched.omega0;
    let w0sq = w0 * w0;
    let n_seg = sched.segments.len();
    let mut times = Vec::with_capacity(steps + n_seg);
    let mut freq_sq = Vec::with_capacity(steps + n_seg);
    let mut states: Vec<[f64; 6]> = Vec::with_capacity(steps + n_seg);
    let mut pieces = Vec::with_capacity(n_seg);
    let mut piece_end_freq_sq = Vec::with_capacity(n_seg);
    let mut y = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    let mut drift: f64 = 0.0;

    for seg in &sched.segments {
        let n = (((seg.end - seg.start) / sched.tau * steps as f64).round() as usize).max(2);
        let h = (seg.end - seg.start) / n as f64;
        let f = &seg.f;
        let rhs = |t: f64, s: &[f64; 6]| -> [f64; 6] {
            let w2 = drive_sq(drive, f(t));
            [
                s[1],
                -w2 * s[0],
                s[3],
                -w2 * s[2],
                s[5],
                -w2 * s[4] + w0sq / s[4].powi(3),
            ]
        };
        let first = times.len();
        for k in 0..=n {
            let t = if k == n { seg.end } else { seg.start + k as f64 * h };
            if k > 0 {
                y = rk4_step(&rhs, seg.start + (k - 1) as f64 * h, &y, h);
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t });
            }
            if !(y[4] > 0.0) {
                return Err(Error::ErmakovCollapse { t, b: y[4] });
            }
            drift = drift.max((y[0] * y[3] - y[1] * y[2] + 1.0).abs());
            // a piece boundary is stored once, with the right-continuous frequency
            if k == 0 && first > 0 {
                *freq_sq.last_mut().expect("previous piece is non-empty") = drive_sq(drive, f(t));
                continue;
            }
            times.push(t);
            freq_sq.push(drive_sq(drive, f(t)));
            states.push(y);
        }
        piece_end_freq_sq.push(drive_sq(drive, f(seg.end)));
        pieces.push(first.saturating_sub(usize::from(first > 0))..times.len());
    }

    let col = |j: usize| states.iter().map(|s| s[j]).collect::<Vec<_>>();
    Ok(OscillatorSolution {
        omega0: w0,
        drive,
        times,
        freq_sq,
        x: col(0),
        x_dot: col(1),
        y: col(2),
        y_dot: col(3),
        b: col(4),
        b_dot: col(5),
        wronskian_drift: drift,
        steps,
        pieces,
        piece_end_freq_sq,
    })
}

/// RK4 integration of `Ẍ + ω_d²X = 0` for both initial-condition sets and of
/// `b̈ + ω_d²b = ω0²/b³`. The step count doubles until the Wronskian drift is
/// below 1e-10; a drift still above 1e-6 after refinement is an error.
pub fn solve(sched: &FrequencySchedule, drive: Drive, steps: usize) -> Result<OscillatorSolution> {
    if steps < 2 {
        return Err(Error::invalid("at least two integration steps are required"));
    }
    let mut n = steps;
    let mut sol = integrate_once(sched, drive, n)?;
    for _ in 0..MAX_REFINEMENTS {
        if sol.wronskian_drift <= WRONSKIAN_TARGET {
            break;
        }
        n *= 2;
        sol = integrate_once(sched, drive, n)?;
    }
    if sol.wronskian_drift > WRONSKIAN_ABORT {
        return Err(Error::WronskianDrift {
            drift: sol.wronskian_drift,
            steps: n,
        });
    }
    Ok(sol)
}

/// Bare-drive classical solutions.
pub fn classical_solutions(sched: &FrequencySchedule, steps: usize) -> Result<OscillatorSolution> {
    solve(sched, Drive::Bare, steps)
}

/// Ermakov scale under the bare drive; shares the grid with the classical solutions.
pub fn ermakov_solve(sched: &FrequencySchedule, steps: usize) -> Result<OscillatorSolution> {
    solve(sched, Drive::Bare, steps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OscProtocol {
    Bare,
    Cd,
    Lcd,
    Ie,
}

impl OscProtocol {
    pub fn name(&self) -> &'static str {
        match self {
            OscProtocol::Bare => "bare",
            OscProtocol::Cd => "cd",
            OscProtocol::Lcd => "lcd",
            OscProtocol::Ie => "ie",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OscillatorCost {
    /// Time-averaged mean energy; NaN when the LCD frequency is not real.
    pub cost: f64,
    /// `Q*` at `t = τ`.
    pub final_qstar: f64,
    /// Minimum of `Ω²` over the grid, reported for LCD only.
    pub min_lcd_omega_sq: Option<f64>,
}

impl OscillatorCost {
    pub fn is_valid(&self) -> bool {
        self.cost.is_finite()
    }
}

fn uniform_pieces(sched: &FrequencySchedule, steps: usize) -> Vec<(Vec<f64>, f64)> {
    sched
        .segments
        .iter()
        .map(|seg| {
            let n = (((seg.end - seg.start) / sched.tau * steps as f64).round() as usize).max(2);
            let h = (seg.end - seg.start) / n as f64;
            let ts = (0..=n)
                .map(|k| if k == n { seg.end } else { seg.start + k as f64 * h })
                .collect();
            (ts, h)
        })
        .collect()
}

/// Closed-form protocols: integrate `(ω/2) Q*(t)` piecewise, with each piece
/// evaluated by its own closure so that jumps are resolved exactly.
fn closed_form_cost(
    sched: &FrequencySchedule,
    steps: usize,
    qstar: impl Fn(RampPoint, f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut last = f64::NAN;
    for (seg, (ts, h)) in sched.segments.iter().zip(uniform_pieces(sched, steps)) {
        let vals = ts
            .iter()
            .map(|&t| {
                let p = (seg.f)(t);
                let q = qstar(p, t)?;
                last = q;
                Ok(p.value / 2.0 * q)
            })
            .collect::<Result<Vec<_>>>()?;
        total += simpson_samples(&vals, h);
    }
    Ok((total, last))
}

fn solution_cost(sol: &OscillatorSolution) -> Result<(f64, f64)> {
    let mut total = 0.0;
    for (r, &end_w2) in sol.pieces.iter().zip(&sol.piece_end_freq_sq) {
        let mut vals = Vec::with_capacity(r.len());
        for i in r.clone() {
            // a shared boundary sample closes its left piece with the left limit
            let w2 = if i + 1 == r.end { end_w2 } else { sol.freq_sq[i] };
            vals.push(w2.sqrt() / 2.0 * sol.husimi_with(i, w2)?);
        }
        let h = sol.times[r.start + 1] - sol.times[r.start];
        total += simpson_samples(&vals, h);
    }
    Ok((total, sol.husimi_qstar(sol.len() - 1)?))
}

/// `C = (1/τ) ∫ (ω_k/2) Q*_k coth(βω0/2) dt`, with `ω_k = Ω` for LCD.
///
/// CD fails with [`Error::TrapInversion`] where its constraint is violated.
/// LCD with `Ω² ≤ 0` somewhere yields a NaN cost and the offending minimum.
pub fn oscillator_cost(
    sched: &FrequencySchedule,
    protocol: OscProtocol,
    beta: f64,
    steps: usize,
) -> Result<OscillatorCost> {
    check_positive("β", beta)?;
    let tau = sched.duration();
    let coth = thermal_factor(beta, sched.omega0);
    let (integral, final_qstar, min_lcd) = match protocol {
        OscProtocol::Cd => {
            let (i, q) = closed_form_cost(sched, steps, qstar_cd_point)?;
            (i, q, None)
        }
        OscProtocol::Ie => {
            let (i, q) = closed_form_cost(sched, steps, qstar_ie_point)?;
            (i, q, None)
        }
        OscProtocol::Bare => {
            let (i, q) = solution_cost(&solve(sched, Drive::Bare, steps)?)?;
            (i, q, None)
        }
        OscProtocol::Lcd => {
            let sol = solve(sched, Drive::Lcd, steps)?;
            let min = sol.freq_sq.iter().copied().fold(f64::INFINITY, f64::min);
            if min > 0.0 {
                let (i, q) = solution_cost(&sol)?;
                (i, q, Some(min))
            } else {
                (f64::NAN, f64::NAN, Some(min))
            }
        }
    };
    Ok(OscillatorCost {
        cost: integral * coth / tau,
        final_qstar,
        min_lcd_omega_sq: min_lcd,
    })
}

/// `max_t ω̇²/(4ω⁴)`; the CD protocol is valid iff this is below 1.
pub fn cd_constraint_peak(sched: &FrequencySchedule, samples: usize) -> f64 {
    uniform_pieces(sched, samples)
        .into_iter()
        .zip(&sched.segments)
        .flat_map(|((ts, _), seg)| {
            ts.into_iter().map(move |t| {
                let p = (seg.f)(t);
                p.d1 * p.d1 / (4.0 * p.value.powi(4))
            })
        })
        .fold(0.0, f64::max)
}

/// Smallest duration for which the CD protocol keeps the trap confining, by
/// bisection on `[lo, hi]` to tolerance 1e-9·max(lo, 1e-3).
pub fn cd_validity_edge(make: impl Fn(f64) -> Result<FrequencySchedule>, lo: f64, hi: f64) -> Result<Option<f64>> {
    let mut failure = None;
    let root = bisect(
        |tau| match make(tau) {
            Ok(s) => cd_constraint_peak(&s, 20_000) - 1.0,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        1e-9 * lo.max(1e-3),
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(root),
    }
}

/// Oscillator experiment parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillatorConfig {
    pub omega0: f64,
    pub omega1: f64,
    /// Inverse temperature of the initial thermal state.
    pub beta: f64,
    pub tau: f64,
    pub steps: usize,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        OscillatorConfig {
            omega0: 1.0,
            omega1: 10.0,
            beta: 3.0,
            tau: 2.5,
            steps: DEFAULT_OSC_STEPS,
        }
    }
}

impl OscillatorConfig {
    pub fn with_tau(&self, tau: f64) -> Self {
        OscillatorConfig { tau, ..self.clone() }
    }

    pub fn schedule(&self) -> Result<FrequencySchedule> {
        FrequencySchedule::quintic(self.omega0, self.omega1, self.tau)
    }

    pub fn cost(&self, protocol: OscProtocol) -> Result<OscillatorCost> {
        oscillator_cost(&self.schedule()?, protocol, self.beta, self.steps)
    }

    /// Minimal duration admitting the CD protocol on the quintic ramp.
    pub fn cd_validity_edge(&self) -> Result<Option<f64>> {
        let (w0, w1) = (self.omega0, self.omega1);
        cd_validity_edge(|tau| FrequencySchedule::quintic(w0, w1, tau), 1e-3, 1e3)
    }
}

/// `Q*_k(t)` for every protocol on one grid. Invalid entries are NaN.
#[derive(Clone, Debug)]
pub struct QstarCurves {
    pub times: Vec<f64>,
    pub bare: Vec<f64>,
    pub cd: Vec<f64>,
    pub lcd: Vec<f64>,
    pub ie: Vec<f64>,
}

impl QstarCurves {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "qstar_bare", "qstar_cd", "qstar_lcd", "qstar_ie"])?;
        for i in 0..self.times.len() {
            w.write_record(
                [self.times[i], self.bare[i], self.cd[i], self.lcd[i], self.ie[i]].map(|v| format!("{v:.12e}")),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Adiabaticity curves on a single smooth schedule.
pub fn qstar_curves(sched: &FrequencySchedule, steps: usize) -> Result<QstarCurves> {
    if sched.segments.len() != 1 {
        return Err(Error::invalid(
            "adiabaticity curves need a single smooth frequency piece",
        ));
    }
    let bare = solve(sched, Drive::Bare, steps)?;
    let lcd = solve(sched, Drive::Lcd, steps)?;
    // refinement may pick different step counts for the two drives
    if bare.len() != lcd.len() {
        let n = bare.steps.max(lcd.steps);
        return qstar_curves(sched, n);
    }
    let nan = |r: Result<f64>| r.unwrap_or(f64::NAN);
    Ok(QstarCurves {
        bare: (0..bare.len()).map(|i| nan(bare.husimi_qstar(i))).collect(),
        cd: bare.times.iter().map(|&t| nan(qstar_cd(sched, t))).collect(),
        lcd: (0..lcd.len()).map(|i| nan(lcd.husimi_qstar(i))).collect(),
        ie: bare.times.iter().map(|&t| nan(qstar_ie(sched, t))).collect(),
        times: bare.times,
    })
}

/// Costs per protocol over durations; `None` marks a protocol that is not
/// valid at that duration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscCostTable {
    pub protocols: Vec<OscProtocol>,
    pub taus: Vec<f64>,
    pub costs: Vec<Vec<Option<f64>>>,
    /// One message per failed cell.
    pub failures: Vec<String>,
}

impl OscCostTable {
    pub fn column(&self, protocol: OscProtocol) -> Option<Vec<Option<f64>>> {
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
            rec.extend(row.iter().map(|c| c.map(|v| format!("{v:.12e}")).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn oscillator_cost_scan(
    template: &OscillatorConfig,
    taus: &[f64],
    protocols: &[OscProtocol],
) -> Result<OscCostTable> {
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::invalid(format!("scan durations must be positive, got {t}")));
    }
    let cells: Vec<Vec<std::result::Result<f64, String>>> = taus
        .par_iter()
        .map(|&tau| {
            let cfg = template.with_tau(tau);
            protocols
                .iter()
                .map(|&p| match cfg.cost(p) {
                    Ok(c) if c.is_valid() => Ok(c.cost),
                    Ok(c) => Err(format!(
                        "tau={tau} {}: LCD frequency not real (min Ω² = {:e})",
                        p.name(),
                        c.min_lcd_omega_sq.unwrap_or(f64::NAN)
                    )),
                    Err(e) => Err(format!("tau={tau} {}: {e}", p.name())),
                })
                .collect()
        })
        .collect();
    let mut failures = Vec::new();
    let costs = cells
        .into_iter()
        .map(|row| row.into_iter().map(|c| c.map_err(|m| failures.push(m)).ok()).collect())
        .collect();
    Ok(OscCostTable {
        protocols: protocols.to_vec(),
        taus: taus.to_vec(),
        costs,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quintic(tau: f64) -> FrequencySchedule {
        FrequencySchedule::quintic(1.0, 10.0, tau).unwrap()
    }

    #[test]
    fn constant_frequency_closed_forms() {
        let w = 1.7;
        let s = FrequencySchedule::constant(w, 6.0).unwrap();
        let sol = classical_solutions(&s, 4000).unwrap();
        for (i, &t) in sol.times.iter().enumerate() {
            assert!((sol.x[i] - (w * t).sin() / w).abs() < 1e-9);
            assert!((sol.y[i] - (w * t).cos()).abs() < 1e-9);
            assert!((sol.wronskian(i) + 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_initial_trap_is_stationary() {
        let s = FrequencySchedule::constant(1.0, 30.0).unwrap();
        let sol = ermakov_solve(&s, 2000).unwrap();
        for i in 0..sol.len() {
            assert!((sol.b[i] - 1.0).abs() < 1e-10);
            assert!((sol.husimi_qstar(i).unwrap() - 1.0).abs() < 1e-10);
            assert!((sol.ie_energy(i, 3.0).unwrap() - 0.5 / 1.5f64.tanh()).abs() < 1e-10);
        }
        assert!((0.5 / 1.5f64.tanh() - 0.5524).abs() < 1e-4);
    }

    #[test]
    fn quench_matches_piecewise_closed_form() {
        let (w0, w1, ts) = (1.0, 10.0, 0.7);
        let s = FrequencySchedule::quench(w0, w1, ts, 2.0).unwrap();
        assert_eq!(s.breakpoints(), vec![ts]);
        let sol = classical_solutions(&s, 40_000).unwrap();
        let (x_s, xd_s) = ((w0 * ts).sin() / w0, (w0 * ts).cos());
        let q_after = {
            let (y_s, yd_s) = ((w0 * ts).cos(), -w0 * (w0 * ts).sin());
            (w0 * w0 * (w1 * w1 * x_s * x_s + xd_s * xd_s) + (w1 * w1 * y_s * y_s + yd_s * yd_s)) / (2.0 * w0 * w1)
        };
        for (i, &t) in sol.times.iter().enumerate() {
            let exact = if t < ts {
                (w0 * t).sin() / w0
            } else {
                let u = t - ts;
                x_s * (w1 * u).cos() + xd_s / w1 * (w1 * u).sin()
            };
            assert!((sol.x[i] - exact).abs() < 1e-9, "t={t}: {} vs {exact}", sol.x[i]);
            if t >= ts {
                assert!((sol.husimi_qstar(i).unwrap() - q_after).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn sudden_quench_qstar() {
        let s = FrequencySchedule::quench(1.0, 10.0, 0.0, 1.0).unwrap();
        let sol = classical_solutions(&s, 1000).unwrap();
        assert!((sol.husimi_qstar(0).unwrap() - 5.05).abs() < 1e-12);
        assert!((sol.husimi_qstar(sol.len() - 1).unwrap() - 5.05).abs() < 1e-8);
    }

    #[test]
    fn qstar_cd_examples() {
        let s = FrequencySchedule::constant(2.0, 1.0).unwrap();
        assert_eq!(qstar_cd(&s, 0.5).unwrap(), 1.0);
        let mut prev = 1.0;
        // shrinking τ approaches the violation; Q*_CD at the midpoint grows
        for tau in [4.0, 3.0, 2.0, 1.8, 1.7, 1.6] {
            let q = qstar_cd(&quintic(tau), 0.35 * tau).unwrap();
            assert!(q > prev);
            prev = q;
        }
        let s = quintic(1.0);
        let violation = (0..=100)
            .map(|k| k as f64 / 100.0)
            .find_map(|t| qstar_cd(&s, t).err().map(|e| (t, e)));
        match violation {
            Some((at, Error::TrapInversion { t, omega_sq, bound })) => {
                assert_eq!(t, at);
                assert!(omega_sq <= bound);
            }
            other => panic!("expected trap inversion, got {other:?}"),
        }
    }

    #[test]
    fn validity_edge_matches_closed_form_peak() {
        let edge = OscillatorConfig::default().cd_validity_edge().unwrap().unwrap();
        // oracle: τ_min = max_s 15 ω_d s²(1-s)² / ω(s)², located by golden search
        let g = |s: f64| {
            let w = 1.0 + 9.0 * (10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5));
            15.0 * 9.0 * s * s * (1.0 - s).powi(2) / (w * w)
        };
        let (mut a, mut b) = (0.0f64, 1.0f64);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let (c, d) = (b - r * (b - a), a + r * (b - a));
            if g(c) > g(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let oracle = g((a + b) / 2.0);
        assert!((edge - oracle).abs() < 1e-4, "{edge} vs {oracle}");
        assert!((edge - 1.52).abs() < 0.02 * 1.52);
    }

    #[test]
    fn lcd_frequency_examples() {
        let s = FrequencySchedule::constant(3.0, 1.0).unwrap();
        assert_eq!(lcd_frequency(&s, 0.2), 9.0);
        let q = quintic(2.5);
        assert!((lcd_frequency(&q, 0.0) - 1.0).abs() < 1e-15);
        assert!((lcd_frequency(&q, 2.5) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn protocols_end_adiabatic() {
        for tau in [1.6, 2.5] {
            let s = quintic(tau);
            for p in [OscProtocol::Cd, OscProtocol::Lcd, OscProtocol::Ie] {
                let c = oscillator_cost(&s, p, 3.0, DEFAULT_OSC_STEPS).unwrap();
                assert!((c.final_qstar - 1.0).abs() < 1e-6, "{p:?} τ={tau}: {}", c.final_qstar);
            }
            let bare = oscillator_cost(&s, OscProtocol::Bare, 3.0, DEFAULT_OSC_STEPS).unwrap();
            assert!(bare.final_qstar > 1.0 + 1e-3);
        }
    }

    #[test]
    fn xy_and_ermakov_routes_agree() {
        for tau in [0.5, 1.6, 10.0] {
            let sol = classical_solutions(&quintic(tau), DEFAULT_OSC_STEPS).unwrap();
            for i in (0..sol.len()).step_by(97) {
                let q = sol.husimi_qstar(i).unwrap();
                assert!(q >= 1.0 - 1e-12);
                assert!((q - sol.energy_ratio(i).unwrap()).abs() < 1e-6 * q);
                let b2 = sol.x[i].powi(2) + sol.y[i].powi(2);
                assert!((b2 - sol.b[i].powi(2)).abs() < 1e-8 * b2);
            }
        }
    }

    #[test]
    fn slow_ramp_reaches_adiabatic_scale() {
        let sol = ermakov_solve(&quintic(200.0), 40_000).unwrap();
        let b_end = *sol.b.last().unwrap();
        assert!((b_end - 0.1f64.sqrt()).abs() < 1e-3, "{b_end}");
        let i = sol.len() - 1;
        let e = sol.ie_energy(i, 3.0).unwrap();
        assert!((e - 5.0 / 1.5f64.tanh()).abs() < 1e-3 * e);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let s = FrequencySchedule::from_fn(1.0, 1.0, 5.0, |t| RampPoint {
            value: 1.0 + 0.4 * (1.3 * t).sin() + 0.2 * (2.1 * t).cos(),
            d1: 0.52 * (1.3 * t).cos() - 0.42 * (2.1 * t).sin(),
            d2: -0.676 * (1.3 * t).sin() - 0.882 * (2.1 * t).cos(),
        })
        .unwrap();
        let end = |n| {
            let sol = integrate_once(&s, Drive::Bare, n).unwrap();
            sol.x[sol.len() - 1]
        };
        let reference = end(64_000);
        let e1 = (end(250) - reference).abs();
        let e2 = (end(500) - reference).abs();
        let ratio = e1 / e2;
        assert!((13.0..19.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn costs_at_reference_durations() {
        let cfg = OscillatorConfig::default();
        for tau in [1.6, 2.5] {
            let c = cfg.with_tau(tau);
            let ie = c.cost(OscProtocol::Ie).unwrap().cost;
            let cd = c.cost(OscProtocol::Cd).unwrap().cost;
            let lcd = c.cost(OscProtocol::Lcd).unwrap();
            assert!(lcd.min_lcd_omega_sq.unwrap() > 0.0);
            assert!(ie <= cd && ie <= lcd.cost, "τ={tau}: {ie} {cd} {}", lcd.cost);
        }
        assert!(cfg.with_tau(1.0).cost(OscProtocol::Cd).is_err());
    }

    #[test]
    fn scan_records_invalid_cells() {
        let t = oscillator_cost_scan(
            &OscillatorConfig::default(),
            &[1.0, 2.0],
            &[OscProtocol::Cd, OscProtocol::Ie],
        )
        .unwrap();
        assert_eq!(t.costs[0][0], None);
        assert!(t.costs[0][1].is_some() && t.costs[1][0].is_some());
        assert_eq!(t.failures.len(), 1);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tau,C_cd,C_ie\n"));
        assert!(text.lines().nth(1).unwrap().contains(",,"));
    }

    #[test]
    fn qstar_curve_csv() {
        let c = qstar_curves(&quintic(2.5), 2000).unwrap();
        assert_eq!(c.times.len(), c.ie.len());
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("t,qstar_bare,qstar_cd,qstar_lcd,qstar_ie\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bare_qstar_at_least_one(w1 in 0.2f64..12.0, tau in 0.2f64..8.0) {
            let sol = classical_solutions(&FrequencySchedule::quintic(1.0, w1, tau).unwrap(), 4000).unwrap();
            prop_assert!(sol.wronskian_drift < 1e-8);
            for i in (0..sol.len()).step_by(37) {
                prop_assert!(sol.husimi_qstar(i).unwrap() >= 1.0 - 1e-9);
            }
        }

        #[test]
        fn ie_qstar_at_least_one(tau in 0.1f64..10.0, s in 0.0f64..1.0) {
            prop_assert!(qstar_ie(&quintic(tau), s * tau).unwrap() >= 1.0);
        }
    }
}
