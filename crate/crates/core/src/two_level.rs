//! Exact-exponential propagation, spectra and the Frobenius-norm cost for
//! time-dependent two-level Hamiltonians
//! `H(t) = c0·1 + (cx σx + cy σy + cz σz)/2` (ħ = 1).

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::numeric::simpson;

/// Pauli-basis coefficients of a 2×2 Hermitian matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PauliCoeffs {
    pub identity: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PauliCoeffs {
    pub fn new(identity: f64, x: f64, y: f64, z: f64) -> Self {
        PauliCoeffs { identity, x, y, z }
    }

    /// Length of the Bloch field `(cx, cy, cz)`; the level splitting.
    pub fn splitting(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Frobenius norm `sqrt(Σ|H_ij|²)`, optionally including the identity part.
    pub fn frobenius_norm(&self, include_identity: bool) -> f64 {
        let traceless = 0.5 * (self.x * self.x + self.y * self.y + self.z * self.z);
        if include_identity {
            (2.0 * self.identity * self.identity + traceless).sqrt()
        } else {
            traceless.sqrt()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.identity.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// `exp(-i H dt)` as a 2×2 matrix in row-major order.
    pub fn exponential(&self, dt: f64) -> [[C64; 2]; 2] {
        let r = self.splitting();
        let half = 0.5 * r * dt;
        let (sin, cos) = half.sin_cos();
        // sin(r dt/2)/r, finite as r -> 0
        let k = if r > 1e-300 { sin / r } else { 0.5 * dt };
        let phase = C64::from_polar(1.0, -self.identity * dt);
        let i = C64::i();
        let a = C64::new(cos, 0.0) - i * k * self.z;
        let d = C64::new(cos, 0.0) + i * k * self.z;
        let b = -i * k * C64::new(self.x, -self.y);
        let c = -i * k * C64::new(self.x, self.y);
        [[phase * a, phase * b], [phase * c, phase * d]]
    }
}

type CoeffFn = dyn Fn(f64) -> PauliCoeffs + Send + Sync;

/// One smooth piece of a schedule on the closed interval `[start, end]`.
#[derive(Clone)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    coeffs: Arc<CoeffFn>,
}

impl Segment {
    pub fn new(start: f64, end: f64, f: impl Fn(f64) -> PauliCoeffs + Send + Sync + 'static) -> Self {
        Segment {
            start,
            end,
            coeffs: Arc::new(f),
        }
    }

    pub fn at(&self, t: f64) -> PauliCoeffs {
        (self.coeffs)(t)
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }
}

/// A time-dependent two-level Hamiltonian on `[0, τ]`, made of one or more
/// smooth segments. Coefficients may jump between segments (BOB kicks).
#[derive(Clone)]
pub struct PauliSchedule {
    segments: Vec<Segment>,
}

impl fmt::Debug for PauliSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PauliSchedule")
            .field("duration", &self.duration())
            .field(
                "segments",
                &self.segments.iter().map(|s| (s.start, s.end)).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl PauliSchedule {
    pub fn new(duration: f64, f: impl Fn(f64) -> PauliCoeffs + Send + Sync + 'static) -> Result<Self> {
        Self::piecewise(vec![Segment::new(0.0, duration, f)])
    }

    pub fn constant(duration: f64, coeffs: PauliCoeffs) -> Result<Self> {
        Self::new(duration, move |_| coeffs)
    }

    /// Contiguous segments starting at 0. Empty segments are dropped.
    pub fn piecewise(segments: Vec<Segment>) -> Result<Self> {
        let segments: Vec<Segment> = segments.into_iter().filter(|s| !s.is_empty()).collect();
        let Some(first) = segments.first() else {
            return Err(Error::invalid("schedule needs a positive duration"));
        };
        if first.start != 0.0 {
            return Err(Error::invalid("schedule must start at t = 0"));
        }
        for pair in segments.windows(2) {
            if (pair[0].end - pair[1].start).abs() > 1e-12 * pair[0].end.abs().max(1.0) {
                return Err(Error::invalid("schedule segments are not contiguous"));
            }
        }
        let duration = segments.last().map(|s| s.end).unwrap_or(0.0);
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::invalid(format!(
                "schedule duration must be positive, got {duration}"
            )));
        }
        Ok(PauliSchedule { segments })
    }

    pub fn duration(&self) -> f64 {
        self.segments.last().map(|s| s.end).unwrap_or(0.0)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Coefficients at `t`, right-continuous at segment boundaries.
    pub fn at(&self, t: f64) -> PauliCoeffs {
        let seg = self
            .segments
            .iter()
            .find(|s| t < s.end)
            .unwrap_or_else(|| self.segments.last().expect("non-empty"));
        seg.at(t)
    }

    /// Same schedule with `c0` added to the identity coefficient.
    pub fn with_identity_offset(&self, c0: f64) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let inner = s.coeffs.clone();
                Segment::new(s.start, s.end, move |t| {
                    let mut c = inner(t);
                    c.identity += c0;
                    c
                })
            })
            .collect();
        PauliSchedule { segments }
    }

    /// Split `steps` across segments in proportion to their length, at least
    /// one step each.
    fn step_allocation(&self, steps: usize) -> Vec<usize> {
        let tau = self.duration();
        self.segments
            .iter()
            .map(|s| ((steps as f64 * s.len() / tau).round() as usize).max(1))
            .collect()
    }
}

/// Pure state in the σz basis, `α|0⟩ + β|1⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitState {
    pub alpha: C64,
    pub beta: C64,
}

impl QubitState {
    /// Requires `|α|² + |β|² = 1` within 1e-12.
    pub fn new(alpha: C64, beta: C64) -> Result<Self> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("state norm² is {norm}, expected 1")));
        }
        Ok(QubitState { alpha, beta })
    }

    pub fn normalized(alpha: C64, beta: C64) -> Result<Self> {
        let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("cannot normalize a zero or non-finite state"));
        }
        Ok(QubitState {
            alpha: alpha / norm,
            beta: beta / norm,
        })
    }

    pub fn zero() -> Self {
        QubitState {
            alpha: C64::new(1.0, 0.0),
            beta: C64::new(0.0, 0.0),
        }
    }

    pub fn one() -> Self {
        QubitState {
            alpha: C64::new(0.0, 0.0),
            beta: C64::new(1.0, 0.0),
        }
    }

    pub fn plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        QubitState {
            alpha: C64::new(h, 0.0),
            beta: C64::new(h, 0.0),
        }
    }

    pub fn minus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        QubitState {
            alpha: C64::new(h, 0.0),
            beta: C64::new(-h, 0.0),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.alpha.norm_sqr() + self.beta.norm_sqr()
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &QubitState) -> C64 {
        self.alpha.conj() * other.alpha + self.beta.conj() * other.beta
    }

    fn apply(&self, u: &[[C64; 2]; 2]) -> QubitState {
        QubitState {
            alpha: u[0][0] * self.alpha + u[0][1] * self.beta,
            beta: u[1][0] * self.alpha + u[1][1] * self.beta,
        }
    }
}

/// `|⟨ψ|φ⟩|²`
pub fn fidelity(psi: &QubitState, phi: &QubitState) -> f64 {
    psi.inner(phi).norm_sqr()
}

/// Which instantaneous eigenstate a trajectory is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Ground,
    Excited,
}

#[derive(Clone, Copy, Debug)]
pub struct Eigenpairs {
    pub ground: QubitState,
    pub excited: QubitState,
    pub e_minus: f64,
    pub e_plus: f64,
}

impl Eigenpairs {
    pub fn state(&self, branch: Branch) -> QubitState {
        match branch {
            Branch::Ground => self.ground,
            Branch::Excited => self.excited,
        }
    }

    pub fn gap(&self) -> f64 {
        self.e_plus - self.e_minus
    }
}

// First nonzero component made real-positive.
fn fix_phase(alpha: C64, beta: C64) -> Result<QubitState> {
    let pivot = if alpha.norm() > 1e-14 { alpha } else { beta };
    let phase = pivot.conj() / pivot.norm();
    QubitState::normalized(alpha * phase, beta * phase)
}

/// Eigenpairs of a 2×2 Hermitian matrix given in Pauli form.
pub fn eigenpairs(c: &PauliCoeffs, t: f64) -> Result<Eigenpairs> {
    let r = c.splitting();
    if !(r > 1e-300) {
        return Err(Error::Degenerate { t });
    }
    // Each eigenvector can be read off either row of (H - λ); use the row
    // with the larger norm for stability.
    let off = C64::new(c.x, -c.y);
    let ground = if c.z + r >= r - c.z {
        (off, C64::new(-(c.z + r), 0.0))
    } else {
        (C64::new(r - c.z, 0.0), -off.conj())
    };
    let excited = if r - c.z >= c.z + r {
        (off, C64::new(r - c.z, 0.0))
    } else {
        (C64::new(c.z + r, 0.0), off.conj())
    };
    Ok(Eigenpairs {
        ground: fix_phase(ground.0, ground.1)?,
        excited: fix_phase(excited.0, excited.1)?,
        e_minus: c.identity - 0.5 * r,
        e_plus: c.identity + 0.5 * r,
    })
}

pub fn instantaneous_eigenstates(schedule: &PauliSchedule, t: f64) -> Result<Eigenpairs> {
    eigenpairs(&schedule.at(t), t)
}

pub fn cost_rate(schedule: &PauliSchedule, t: f64, include_identity: bool) -> f64 {
    schedule.at(t).frobenius_norm(include_identity)
}

/// Time-averaged cost `(1/τ)∫‖H‖dt`, composite Simpson on every segment.
/// Constant segments (BOB kicks) are integrated exactly by the same rule.
pub fn integrated_cost(schedule: &PauliSchedule, quadrature_steps: usize, include_identity: bool) -> Result<f64> {
    if quadrature_steps < 16 {
        return Err(Error::precondition(format!(
            "quadrature needs at least 16 steps, got {quadrature_steps}"
        )));
    }
    let tau = schedule.duration();
    let alloc = schedule.step_allocation(quadrature_steps);
    let total: f64 = schedule
        .segments()
        .iter()
        .zip(alloc)
        .map(|(seg, n)| {
            simpson(
                |t| seg.at(t).frobenius_norm(include_identity),
                seg.start,
                seg.end,
                n.max(16),
            )
        })
        .sum();
    Ok(total / tau)
}

/// Time grid with the state, the fidelity to a reference eigenstate branch,
/// and the instantaneous cost rate at every point.
#[derive(Clone, Debug)]
pub struct QubitTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<QubitState>,
    pub fidelity: Vec<f64>,
    pub cost_rate: Vec<f64>,
}

impl QubitTrajectory {
    pub fn final_state(&self) -> QubitState {
        *self.states.last().expect("trajectory has at least two points")
    }

    pub fn final_fidelity(&self) -> f64 {
        *self.fidelity.last().expect("trajectory has at least two points")
    }

    /// CSV with columns `t, re_alpha, im_alpha, re_beta, im_beta, fidelity, cost_rate`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "re_alpha",
            "im_alpha",
            "re_beta",
            "im_beta",
            "fidelity",
            "cost_rate",
        ])?;
        for i in 0..self.times.len() {
            let s = &self.states[i];
            w.write_record(
                [
                    self.times[i],
                    s.alpha.re,
                    s.alpha.im,
                    s.beta.re,
                    s.beta.im,
                    self.fidelity[i],
                    self.cost_rate[i],
                ]
                .iter()
                .map(|v| format!("{v:.12e}")),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps < 2 {
        Err(Error::precondition(format!(
            "propagation needs at least 2 steps, got {steps}"
        )))
    } else {
        Ok(())
    }
}

/// Walk the schedule with midpoint exponentials, calling `visit(t, ψ)` at
/// every grid point including `t = 0`.
fn walk<F: FnMut(f64, &QubitState)>(
    schedule: &PauliSchedule,
    psi0: &QubitState,
    steps: usize,
    mut visit: F,
) -> Result<QubitState> {
    check_steps(steps)?;
    let mut psi = *psi0;
    visit(0.0, &psi);
    let alloc = schedule.step_allocation(steps);
    for (seg, n) in schedule.segments().iter().zip(alloc) {
        let dt = seg.len() / n as f64;
        for k in 0..n {
            let mid = seg.start + (k as f64 + 0.5) * dt;
            let c = seg.at(mid);
            if !c.is_finite() {
                return Err(Error::NonFinite { t: mid });
            }
            psi = psi.apply(&c.exponential(dt));
            let t = if k + 1 == n {
                seg.end
            } else {
                seg.start + (k + 1) as f64 * dt
            };
            visit(t, &psi);
        }
    }
    Ok(psi)
}

/// Final state only; the fast path used inside optimizers.
pub fn evolve(schedule: &PauliSchedule, psi0: &QubitState, steps: usize) -> Result<QubitState> {
    walk(schedule, psi0, steps, |_, _| {})
}

/// Propagate and record fidelity to the schedule's own instantaneous ground
/// state.
pub fn propagate(schedule: &PauliSchedule, psi0: &QubitState, steps: usize) -> Result<QubitTrajectory> {
    propagate_tracking(schedule, schedule, Branch::Ground, psi0, steps)
}

/// Propagate under `schedule` and record fidelity to the `branch` eigenstate
/// of `reference` (typically the bare Hamiltonian).
pub fn propagate_tracking(
    schedule: &PauliSchedule,
    reference: &PauliSchedule,
    branch: Branch,
    psi0: &QubitState,
    steps: usize,
) -> Result<QubitTrajectory> {
    let mut traj = QubitTrajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        fidelity: Vec::with_capacity(steps + 1),
        cost_rate: Vec::with_capacity(steps + 1),
    };
    let mut failure = None;
    walk(schedule, psi0, steps, |t, psi| {
        traj.times.push(t);
        traj.states.push(*psi);
        traj.cost_rate.push(cost_rate(schedule, t, false));
        let f = match instantaneous_eigenstates(reference, t) {
            Ok(e) => fidelity(psi, &e.state(branch)),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        };
        traj.fidelity.push(f);
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Final state converged in the step count: start at `initial_steps` and
/// double until the fidelity to `target` changes by less than `tol`.
#[derive(Clone, Copy, Debug)]
pub struct Converged {
    pub state: QubitState,
    pub fidelity: f64,
    pub steps: usize,
}

pub fn evolve_converged(
    schedule: &PauliSchedule,
    psi0: &QubitState,
    target: &QubitState,
    initial_steps: usize,
    tol: f64,
) -> Result<Converged> {
    const MAX_DOUBLINGS: usize = 8;
    let mut steps = initial_steps.max(2);
    let mut state = evolve(schedule, psi0, steps)?;
    let mut f = fidelity(&state, target);
    for _ in 0..MAX_DOUBLINGS {
        let next_steps = steps * 2;
        let next = evolve(schedule, psi0, next_steps)?;
        let next_f = fidelity(&next, target);
        let change = (next_f - f).abs();
        steps = next_steps;
        state = next;
        f = next_f;
        if change < tol {
            break;
        }
    }
    Ok(Converged {
        state,
        fidelity: f,
        steps,
    })
}

/// Default step count for a single propagation.
pub const DEFAULT_STEPS: usize = 10_000;
/// Default quadrature resolution for integrated costs.
pub const DEFAULT_QUADRATURE: usize = 8_192;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sigma_x(delta: f64, tau: f64) -> PauliSchedule {
        PauliSchedule::constant(tau, PauliCoeffs::new(0.0, delta, 0.0, 0.0)).unwrap()
    }

    #[test]
    fn fidelity_examples() {
        let s = QubitState::normalized(C64::new(0.3, 0.1), C64::new(-0.2, 0.7)).unwrap();
        assert!((fidelity(&s, &s) - 1.0).abs() < 1e-15);
        assert_eq!(fidelity(&QubitState::zero(), &QubitState::one()), 0.0);
        assert!((fidelity(&QubitState::zero(), &QubitState::plus()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unnormalized_state_rejected() {
        assert!(QubitState::new(C64::new(1.0, 0.0), C64::new(0.1, 0.0)).is_err());
        assert!(QubitState::normalized(C64::new(0.0, 0.0), C64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn eigenstate_stays_put() {
        let traj = propagate(&sigma_x(0.1, 50.0), &QubitState::minus(), 100).unwrap();
        for f in &traj.fidelity {
            assert!((f - 1.0).abs() < 1e-12);
        }
        let traj = propagate_tracking(
            &sigma_x(0.1, 50.0),
            &sigma_x(0.1, 50.0),
            Branch::Excited,
            &QubitState::plus(),
            100,
        )
        .unwrap();
        assert!(traj.fidelity.iter().all(|f| (f - 1.0).abs() < 1e-12));
    }

    #[test]
    fn phase_only_and_pi_pulse() {
        let omega = 1.3;
        let z = PauliSchedule::constant(4.0, PauliCoeffs::new(0.0, 0.0, 0.0, omega)).unwrap();
        let psi = evolve(&z, &QubitState::zero(), 10).unwrap();
        assert!((fidelity(&psi, &QubitState::zero()) - 1.0).abs() < 1e-14);

        let x = sigma_x(omega, PI / omega);
        let psi = evolve(&x, &QubitState::zero(), 7).unwrap();
        assert!((fidelity(&psi, &QubitState::one()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nan_coefficient_reports_time() {
        let s = PauliSchedule::new(1.0, |t| {
            PauliCoeffs::new(0.0, if t > 0.5 { f64::NAN } else { 1.0 }, 0.0, 0.0)
        })
        .unwrap();
        match evolve(&s, &QubitState::zero(), 10) {
            Err(Error::NonFinite { t }) => assert!((t - 0.55).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(evolve(&s, &QubitState::zero(), 1).is_err());
    }

    #[test]
    fn spectrum_examples() {
        let e = eigenpairs(&PauliCoeffs::new(0.0, 0.1, 0.0, 0.0), 0.0).unwrap();
        assert!((e.gap() - 0.1).abs() < 1e-15);
        for g in [-0.2, 0.2] {
            let e = eigenpairs(&PauliCoeffs::new(0.0, 0.1, 0.0, g), 0.0).unwrap();
            assert!((e.gap() - 0.05f64.sqrt()).abs() < 1e-15);
            assert_eq!(e.e_minus, -e.e_plus);
        }
        assert!(matches!(
            eigenpairs(&PauliCoeffs::new(1.0, 0.0, 0.0, 0.0), 3.0),
            Err(Error::Degenerate { t }) if t == 3.0
        ));
    }

    fn residual(c: &PauliCoeffs, v: &QubitState, e: f64) -> f64 {
        let h = [
            [C64::new(c.identity + 0.5 * c.z, 0.0), C64::new(0.5 * c.x, -0.5 * c.y)],
            [C64::new(0.5 * c.x, 0.5 * c.y), C64::new(c.identity - 0.5 * c.z, 0.0)],
        ];
        let hv = v.apply(&h);
        ((hv.alpha - v.alpha * e).norm_sqr() + (hv.beta - v.beta * e).norm_sqr()).sqrt()
    }

    proptest! {
        #[test]
        fn eigenpairs_solve_the_matrix(c0 in -2.0f64..2.0, x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
            let c = PauliCoeffs::new(c0, x, y, z);
            prop_assume!(c.splitting() > 1e-6);
            let e = eigenpairs(&c, 0.0).unwrap();
            prop_assert!(residual(&c, &e.ground, e.e_minus) < 1e-12);
            prop_assert!(residual(&c, &e.excited, e.e_plus) < 1e-12);
            prop_assert!(e.ground.inner(&e.excited).norm() < 1e-12);
            let pivot = if e.ground.alpha.norm() > 1e-14 { e.ground.alpha } else { e.ground.beta };
            prop_assert!(pivot.im.abs() < 1e-15 && pivot.re > 0.0);
        }

        #[test]
        fn propagation_preserves_norm(a in -2.0f64..2.0, b in -2.0f64..2.0, w in 0.1f64..5.0, tau in 0.1f64..20.0) {
            let s = PauliSchedule::new(tau, move |t| PauliCoeffs::new(0.3, a * (w * t).cos(), b, a * b * t)).unwrap();
            let traj = propagate(&s, &QubitState::plus(), 200).unwrap();
            for psi in &traj.states {
                prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cost_rate_examples() {
        assert!((cost_rate(&sigma_x(0.1, 1.0), 0.5, false) - 0.1 / 2f64.sqrt()).abs() < 1e-15);
        let zero = PauliSchedule::constant(1.0, PauliCoeffs::default()).unwrap();
        assert_eq!(cost_rate(&zero, 0.3, true), 0.0);
        let bare = PauliSchedule::constant(1.0, PauliCoeffs::new(0.0, 0.1, 0.0, -0.2)).unwrap();
        assert!((cost_rate(&bare, 0.0, false) - 0.158_113_883_008_418_98).abs() < 1e-15);
        let shifted = PauliSchedule::constant(1.0, PauliCoeffs::new(0.5, 0.0, 0.0, 0.0)).unwrap();
        assert!((cost_rate(&shifted, 0.0, true) - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(cost_rate(&shifted, 0.0, false), 0.0);
    }

    #[test]
    fn integrated_cost_of_constant_hamiltonian() {
        for tau in [0.1, 3.0, 100.0] {
            let c = integrated_cost(&sigma_x(0.1, tau), 16, false).unwrap();
            assert!((c - 0.1 / 2f64.sqrt()).abs() < 1e-15);
        }
        assert!(integrated_cost(&sigma_x(0.1, 1.0), 8, false).is_err());
    }

    #[test]
    fn gauge_shift_changes_neither_fidelity_nor_cost() {
        let s = PauliSchedule::new(5.0, |t| PauliCoeffs::new(0.0, 0.1, 0.05 * t, 0.2 * (t - 2.5))).unwrap();
        let shifted = s.with_identity_offset(3.7);
        let a = propagate(&s, &QubitState::zero(), 500).unwrap();
        let b = propagate(&shifted, &QubitState::zero(), 500).unwrap();
        for (fa, fb) in a.fidelity.iter().zip(&b.fidelity) {
            assert!((fa - fb).abs() < 1e-12);
        }
        let ca = integrated_cost(&s, 256, false).unwrap();
        let cb = integrated_cost(&shifted, 256, false).unwrap();
        assert_eq!(ca, cb);
        assert!(integrated_cost(&shifted, 256, true).unwrap() > cb);
    }

    fn random_smooth_schedule(seed: u64) -> PauliSchedule {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        PauliSchedule::new(6.0, move |t| {
            PauliCoeffs::new(
                p[0],
                p[1] + p[2] * (p[3] * t).sin(),
                p[4] * (0.5 * t).cos(),
                p[5] + p[6] * t + p[7] * (p[8] * t * t / 6.0).cos(),
            )
        })
        .unwrap()
    }

    #[test]
    fn midpoint_exponential_is_second_order() {
        for seed in 0..4 {
            let s = random_smooth_schedule(seed);
            let exact = evolve(&s, &QubitState::zero(), 1 << 16).unwrap();
            let err = |n: usize| {
                let psi = evolve(&s, &QubitState::zero(), n).unwrap();
                ((psi.alpha - exact.alpha).norm_sqr() + (psi.beta - exact.beta).norm_sqr()).sqrt()
            };
            let ratio = err(200) / err(400);
            assert!((3.5..4.5).contains(&ratio), "seed {seed}: ratio {ratio}");
        }
    }

    #[test]
    fn piecewise_schedule_is_right_continuous() {
        let s = PauliSchedule::piecewise(vec![
            Segment::new(0.0, 1.0, |_| PauliCoeffs::new(0.0, 1.0, 0.0, 0.0)),
            Segment::new(1.0, 2.0, |_| PauliCoeffs::new(0.0, 0.0, 0.0, 2.0)),
        ])
        .unwrap();
        assert_eq!(s.at(0.999).x, 1.0);
        assert_eq!(s.at(1.0).z, 2.0);
        assert_eq!(s.at(2.0).z, 2.0);
        assert!(PauliSchedule::piecewise(vec![Segment::new(0.5, 1.0, |_| PauliCoeffs::default())]).is_err());
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let traj = propagate(&sigma_x(0.1, 1.0), &QubitState::zero(), 4).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,re_alpha,im_alpha,re_beta,im_beta,fidelity,cost_rate");
        assert_eq!(lines.len(), 6);
    }
}
