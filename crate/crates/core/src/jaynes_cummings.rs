//! Jaynes-Cummings model in the rotating-wave approximation.
//!
//! Excitation number is conserved, so the dynamics splits into independent
//! two-level blocks `{|e,n⟩, |g,n+1⟩}`. After a π/2 rotation about `y` each
//! block reads `H_n = (2n+1)ω/2 + (δ/2)σx - (Ω_R/2)σz` with `Ω_R = 2g√(n+1)`,
//! a Landau-Zener sweep with `Δ → δ`, `g → -Ω_R`. In that frame `|e,n⟩` is
//! `|+⟩`, the upper dressed state at `g = 0`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landau_zener::{CostTable, Protocol};
use crate::numeric::{bisect, simpson};
use crate::ramp::{self, Ramp, RampPoint};
use crate::two_level::{
    evolve_converged, integrated_cost, propagate_tracking, Branch, PauliCoeffs, PauliSchedule, QubitState,
    DEFAULT_QUADRATURE, DEFAULT_STEPS,
};

/// Largest tail probability beyond the cutoff that an ensemble accepts.
pub const MAX_TAIL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialField {
    Vacuum,
    Coherent { alpha: f64 },
}

/// How per-block costs combine into an ensemble cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostCombination {
    /// `Σ p_n C_n`.
    #[default]
    Weighted,
    /// Time average of the Frobenius norm of the direct sum of all blocks up
    /// to the cutoff, `sqrt(Σ_n ‖H_n‖²)`. Grows with the cutoff.
    DirectSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JcConfig {
    /// Cavity frequency.
    pub omega: f64,
    /// Atom-cavity detuning.
    pub delta: f64,
    pub g0: f64,
    pub g1: f64,
    pub tau: f64,
    /// Highest photon index kept.
    pub cutoff: usize,
    pub field: InitialField,
    pub combination: CostCombination,
    pub steps: usize,
}

impl Default for JcConfig {
    fn default() -> Self {
        JcConfig {
            omega: 1.0,
            delta: 0.1,
            g0: 0.0,
            g1: 0.2,
            tau: 10.0,
            cutoff: 40,
            field: InitialField::Vacuum,
            combination: CostCombination::Weighted,
            steps: DEFAULT_STEPS,
        }
    }
}

impl JcConfig {
    pub fn with_tau(&self, tau: f64) -> Self {
        JcConfig { tau, ..self.clone() }
    }

    pub fn with_field(&self, field: InitialField) -> Self {
        JcConfig { field, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!(
                "detuning δ must be positive, got {}",
                self.delta
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("duration τ must be positive, got {}", self.tau)));
        }
        if !(self.omega.is_finite() && self.g0.is_finite() && self.g1.is_finite()) {
            return Err(Error::invalid("cavity frequency and coupling endpoints must be finite"));
        }
        if self.steps < 2 {
            return Err(Error::invalid("at least two propagation steps are required"));
        }
        if let InitialField::Coherent { alpha } = self.field {
            if !alpha.is_finite() {
                return Err(Error::invalid("coherent amplitude must be finite"));
            }
        }
        Ok(())
    }

    /// Quintic coupling ramp `g0 → g1`.
    pub fn ramp(&self) -> Result<Ramp> {
        ramp::poly_smooth_ramp(self.g0, self.g1 - self.g0, self.tau)
    }

    /// Photon-number weights up to the cutoff. Fails if the tail beyond the
    /// cutoff exceeds [`MAX_TAIL`].
    pub fn weights(&self) -> Result<Vec<f64>> {
        match self.field {
            InitialField::Vacuum => {
                let mut w = vec![0.0; self.cutoff + 1];
                w[0] = 1.0;
                Ok(w)
            }
            InitialField::Coherent { alpha } => {
                let tail = poisson_tail(alpha, self.cutoff);
                if tail > MAX_TAIL {
                    return Err(Error::CutoffTail {
                        tail,
                        cutoff: self.cutoff,
                    });
                }
                Ok(coherent_weights(alpha, self.cutoff))
            }
        }
    }
}

/// `p_n = e^{-|α|²} |α|^{2n} / n!` for `n = 0..=cutoff`.
pub fn coherent_weights(alpha: f64, cutoff: usize) -> Vec<f64> {
    let mean = alpha * alpha;
    let mut p = Vec::with_capacity(cutoff + 1);
    let mut term = (-mean).exp();
    for n in 0..=cutoff {
        if n > 0 {
            term *= mean / n as f64;
        }
        p.push(term);
    }
    p
}

/// `Σ_{n > cutoff} p_n`, summed term by term.
pub fn poisson_tail(alpha: f64, cutoff: usize) -> f64 {
    let mean = alpha * alpha;
    if mean == 0.0 {
        return 0.0;
    }
    // log p_{cutoff+1}
    let k = cutoff + 1;
    let log_first = -mean + k as f64 * mean.ln() - (1..=k).map(|j| (j as f64).ln()).sum::<f64>();
    let mut term = log_first.exp();
    let mut sum = 0.0;
    let mut n = k;
    while term > 0.0 && term > sum * 1e-18 {
        sum += term;
        n += 1;
        term *= mean / n as f64;
        if n > k + 100_000 {
            break;
        }
    }
    sum
}

/// Rabi frequency of block `n`: `2g√(n+1)`.
pub fn rabi_frequency(g: f64, n: usize) -> f64 {
    2.0 * g * ((n + 1) as f64).sqrt()
}

fn identity_shift(omega: f64, n: usize) -> f64 {
    (2 * n + 1) as f64 * omega / 2.0
}

pub fn block_bare_coefficients(omega: f64, delta: f64, n: usize, p: RampPoint) -> PauliCoeffs {
    PauliCoeffs::new(identity_shift(omega, n), delta, 0.0, -rabi_frequency(p.value, n))
}

/// Counterdiabatic block: `σy` coefficient `2√(n+1)ġδ/(δ² + 4(n+1)g²)`.
pub fn block_cd_coefficients(omega: f64, delta: f64, n: usize, p: RampPoint) -> PauliCoeffs {
    let k = (n + 1) as f64;
    let cy = 2.0 * k.sqrt() * p.d1 * delta / (delta * delta + 4.0 * k * p.value * p.value);
    PauliCoeffs::new(identity_shift(omega, n), delta, cy, -rabi_frequency(p.value, n))
}

/// Local counterdiabatic block with `D = δ² + 4(n+1)g²`:
/// `cx = sqrt(δ² + 4(n+1)ġ²δ²/D²)`,
/// `cz = -2√(n+1)(g + [D g̈ - 8(n+1) g ġ²] / (D² + 4(n+1)ġ²))`.
pub fn block_lcd_coefficients(omega: f64, delta: f64, n: usize, p: RampPoint) -> PauliCoeffs {
    let k = (n + 1) as f64;
    let (g, gd, gdd) = (p.value, p.d1, p.d2);
    let d2 = delta * delta;
    let den = d2 + 4.0 * k * g * g;
    let cx = (d2 + 4.0 * k * gd * gd * d2 / (den * den)).sqrt();
    let correction = (den * gdd - 8.0 * k * g * gd * gd) / (den * den + 4.0 * k * gd * gd);
    PauliCoeffs::new(identity_shift(omega, n), cx, 0.0, -2.0 * k.sqrt() * (g + correction))
}

/// Mixing angle rate `θ̇_n` with `θ_n = ½ arctan(Ω_R/δ)`.
pub fn mixing_angle_rate(delta: f64, n: usize, p: RampPoint) -> f64 {
    let k = ((n + 1) as f64).sqrt();
    // d/dt ½ arctan(2k g/δ) = k ġ δ / (δ² + 4k²g²)
    k * p.d1 * delta / (delta * delta + 4.0 * k * k * p.value * p.value)
}

/// One excitation block: schedule in the rotated dressed basis plus the
/// bare block it is measured against.
#[derive(Clone, Debug)]
pub struct JcBlock {
    pub n: usize,
    pub protocol: Protocol,
    pub schedule: PauliSchedule,
    pub bare: PauliSchedule,
}

impl JcBlock {
    pub fn rabi_frequency(&self, ramp: &Ramp, t: f64) -> f64 {
        rabi_frequency(ramp.value(t), self.n)
    }

    /// `|e,n⟩` in the rotated basis.
    pub fn initial_state(&self) -> QubitState {
        QubitState::plus()
    }
}

fn block_schedule(
    cfg: &JcConfig,
    ramp: &Ramp,
    n: usize,
    build: fn(f64, f64, usize, RampPoint) -> PauliCoeffs,
) -> Result<PauliSchedule> {
    let (omega, delta, r) = (cfg.omega, cfg.delta, ramp.clone());
    PauliSchedule::new(ramp.duration(), move |t| build(omega, delta, n, r.eval(t)))
}

pub fn jc_block(cfg: &JcConfig, n: usize, protocol: Protocol) -> Result<JcBlock> {
    cfg.validate()?;
    let ramp = cfg.ramp()?;
    let build = match protocol {
        Protocol::Bare => block_bare_coefficients,
        Protocol::Cd => block_cd_coefficients,
        Protocol::Lcd => block_lcd_coefficients,
        other => {
            return Err(Error::invalid(format!(
                "protocol {} is not available for Jaynes-Cummings blocks",
                other.name()
            )))
        }
    };
    Ok(JcBlock {
        n,
        protocol,
        schedule: block_schedule(cfg, &ramp, n, build)?,
        bare: block_schedule(cfg, &ramp, n, block_bare_coefficients)?,
    })
}

/// Block cost with the identity shift excluded.
pub fn block_cost(block: &JcBlock) -> Result<f64> {
    integrated_cost(&block.schedule, DEFAULT_QUADRATURE, false)
}

/// Final fidelity of `|e,n⟩` to the upper dressed state, converged in the
/// step count.
pub fn block_final_fidelity(block: &JcBlock) -> Result<f64> {
    let target = crate::two_level::instantaneous_eigenstates(&block.bare, block.bare.duration())?.excited;
    Ok(evolve_converged(&block.schedule, &block.initial_state(), &target, DEFAULT_STEPS, 1e-12)?.fidelity)
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleRun {
    pub protocol: Protocol,
    pub times: Vec<f64>,
    /// `Σ_n p_n F_n(t)`.
    pub fidelity: Vec<f64>,
    pub cost: f64,
    pub weights: Vec<f64>,
    pub block_costs: Vec<f64>,
    pub block_final_fidelity: Vec<f64>,
}

impl EnsembleRun {
    pub fn final_fidelity(&self) -> f64 {
        *self.fidelity.last().expect("trajectory is non-empty")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "fidelity"])?;
        for (t, f) in self.times.iter().zip(&self.fidelity) {
            w.write_record([format!("{t:.12e}"), format!("{f:.12e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Propagate every populated block and combine fidelities and costs with the
/// photon-number weights.
pub fn ensemble_run(cfg: &JcConfig, protocol: Protocol) -> Result<EnsembleRun> {
    cfg.validate()?;
    let weights = cfg.weights()?;
    let populated: Vec<usize> = (0..weights.len()).filter(|&n| weights[n] > 0.0).collect();
    let per_block = populated
        .par_iter()
        .map(|&n| {
            let block = jc_block(cfg, n, protocol)?;
            let traj = propagate_tracking(
                &block.schedule,
                &block.bare,
                Branch::Excited,
                &block.initial_state(),
                cfg.steps,
            )?;
            Ok((n, traj, block_cost(&block)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let times = per_block[0].1.times.clone();
    let mut fidelity = vec![0.0; times.len()];
    let mut block_costs = vec![0.0; weights.len()];
    let mut block_final = vec![f64::NAN; weights.len()];
    let mut norm_mass = 0.0;
    for (n, traj, c) in &per_block {
        for (acc, f) in fidelity.iter_mut().zip(&traj.fidelity) {
            *acc += weights[*n] * f;
        }
        block_costs[*n] = *c;
        block_final[*n] = traj.final_fidelity();
        norm_mass += weights[*n] * traj.final_state().norm_sqr();
    }
    let total: f64 = weights.iter().sum();
    debug_assert!(
        (norm_mass - total).abs() < 1e-10,
        "population left the excitation blocks"
    );

    let cost = match cfg.combination {
        CostCombination::Weighted => weights.iter().zip(&block_costs).map(|(p, c)| p * c).sum(),
        CostCombination::DirectSum => direct_sum_cost(cfg, protocol)?,
    };
    Ok(EnsembleRun {
        protocol,
        times,
        fidelity,
        cost,
        weights,
        block_costs,
        block_final_fidelity: block_final,
    })
}

fn direct_sum_cost(cfg: &JcConfig, protocol: Protocol) -> Result<f64> {
    let blocks = (0..=cfg.cutoff)
        .map(|n| jc_block(cfg, n, protocol))
        .collect::<Result<Vec<_>>>()?;
    let rate = |t: f64| {
        blocks
            .iter()
            .map(|b| b.schedule.at(t).frobenius_norm(false).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    Ok(simpson(rate, 0.0, cfg.tau, DEFAULT_QUADRATURE) / cfg.tau)
}

/// `∫₀¹ sqrt((δ² + Ω_R(s)²)/2) ds` for block `n`, the long-duration cost limit.
pub fn adiabatic_cost_limit(cfg: &JcConfig, n: usize) -> Result<f64> {
    let ramp = cfg.ramp()?;
    let tau = ramp.duration();
    Ok(simpson(
        |s| {
            let w = rabi_frequency(ramp.value(s * tau), n);
            ((cfg.delta * cfg.delta + w * w) / 2.0).sqrt()
        },
        0.0,
        1.0,
        DEFAULT_QUADRATURE,
    ))
}

/// Ensemble costs of CD and LCD over durations.
pub fn jc_cost_scan(template: &JcConfig, taus: &[f64]) -> Result<CostTable> {
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::invalid(format!("scan durations must be positive, got {t}")));
    }
    let protocols = [Protocol::Cd, Protocol::Lcd];
    let costs = taus
        .par_iter()
        .map(|&tau| {
            let cfg = template.with_tau(tau);
            protocols
                .iter()
                .map(|&p| ensemble_cost(&cfg, p))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostTable {
        protocols: protocols.to_vec(),
        taus: taus.to_vec(),
        costs,
    })
}

/// Ensemble cost without propagating the state.
pub fn ensemble_cost(cfg: &JcConfig, protocol: Protocol) -> Result<f64> {
    cfg.validate()?;
    match cfg.combination {
        CostCombination::DirectSum => direct_sum_cost(cfg, protocol),
        CostCombination::Weighted => {
            let weights = cfg.weights()?;
            let mut total = 0.0;
            for (n, p) in weights.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                total += p * block_cost(&jc_block(cfg, n, protocol)?)?;
            }
            Ok(total)
        }
    }
}

/// Duration where `C_CD - C_LCD` changes sign, bracketed on `taus` and
/// bisected to 1e-3.
pub fn jc_crossover(template: &JcConfig, taus: &[f64]) -> Result<Option<f64>> {
    let table = jc_cost_scan(template, taus)?;
    let diffs: Vec<f64> = table.costs.iter().map(|r| r[0] - r[1]).collect();
    let Some(i) = diffs.windows(2).position(|w| w[0].signum() != w[1].signum()) else {
        return Ok(None);
    };
    let mut failure = None;
    let root = bisect(
        |tau| {
            let cfg = template.with_tau(tau);
            match (ensemble_cost(&cfg, Protocol::Cd), ensemble_cost(&cfg, Protocol::Lcd)) {
                (Ok(a), Ok(b)) => a - b,
                (Err(e), _) | (_, Err(e)) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landau_zener::{bare_coefficients, cd_coefficients, lcd_coefficients};
    use crate::two_level::{eigenpairs, fidelity};
    use proptest::prelude::*;

    #[test]
    fn rabi_examples() {
        assert!((rabi_frequency(0.2, 0) - 0.4).abs() < 1e-15);
        assert!((rabi_frequency(0.2, 3) - 0.8).abs() < 1e-15);
        let e = eigenpairs(
            &block_bare_coefficients(
                1.0,
                0.1,
                5,
                RampPoint {
                    value: 0.0,
                    d1: 0.0,
                    d2: 0.0,
                },
            ),
            0.0,
        )
        .unwrap();
        assert!((e.gap() - 0.1).abs() < 1e-15);
        assert!((e.e_minus + e.e_plus - 11.0).abs() < 1e-12);
    }

    #[test]
    fn initial_state_is_upper_dressed_state() {
        let block = jc_block(&JcConfig::default(), 0, Protocol::Bare).unwrap();
        let e = eigenpairs(&block.bare.at(0.0), 0.0).unwrap();
        assert!((fidelity(&e.excited, &block.initial_state()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cd_term_vanishes_without_sweep() {
        let p = RampPoint {
            value: 0.13,
            d1: 0.0,
            d2: 0.4,
        };
        assert_eq!(block_cd_coefficients(1.0, 0.1, 2, p).y, 0.0);
    }

    #[test]
    fn lcd_reduces_to_bare_at_endpoints() {
        let cfg = JcConfig::default();
        for n in [0, 7] {
            let b = jc_block(&cfg, n, Protocol::Lcd).unwrap();
            for t in [0.0, cfg.tau] {
                let (l, h) = (b.schedule.at(t), b.bare.at(t));
                assert!((l.x - h.x).abs() < 1e-14 && (l.z - h.z).abs() < 1e-12 && l.identity == h.identity);
            }
        }
    }

    #[test]
    fn coherent_weight_examples() {
        let w = coherent_weights(0.0, 5);
        assert_eq!(w, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let w = coherent_weights(2.0, 40);
        // e^{-4} 4^4 / 4!
        assert!((w[4] - (-4f64).exp() * 256.0 / 24.0).abs() < 1e-15);
        assert!((w[4] - 0.1954).abs() < 1e-4);
        assert!(poisson_tail(2.0, 40) < 1e-20);
        assert!(poisson_tail(5.0, 40) > MAX_TAIL);
        assert_eq!(poisson_tail(0.0, 0), 0.0);
        // oracle: tail by subtracting from one at modest cutoff
        let head: f64 = coherent_weights(1.5, 3).iter().sum();
        assert!((poisson_tail(1.5, 3) - (1.0 - head)).abs() < 1e-14);
    }

    #[test]
    fn large_tail_is_rejected() {
        let cfg = JcConfig::default().with_field(InitialField::Coherent { alpha: 5.0 });
        assert!(matches!(cfg.weights(), Err(Error::CutoffTail { cutoff: 40, .. })));
    }

    #[test]
    fn vacuum_ensemble_is_block_zero() {
        let cfg = JcConfig {
            steps: 2000,
            ..JcConfig::default()
        };
        let run = ensemble_run(&cfg, Protocol::Cd).unwrap();
        let b = jc_block(&cfg, 0, Protocol::Cd).unwrap();
        let traj = propagate_tracking(&b.schedule, &b.bare, Branch::Excited, &b.initial_state(), 2000).unwrap();
        assert_eq!(run.fidelity, traj.fidelity);
        assert_eq!(run.cost, block_cost(&b).unwrap());
    }

    #[test]
    fn blocks_reach_target_at_tau_10() {
        let cfg = JcConfig::default();
        for p in [Protocol::Cd, Protocol::Lcd] {
            for n in [0, 5, 40] {
                let f = block_final_fidelity(&jc_block(&cfg, n, p).unwrap()).unwrap();
                assert!(f >= 1.0 - 1e-8, "{p:?} n={n}: {f}");
            }
        }
    }

    #[test]
    fn coherent_cost_exceeds_vacuum() {
        let cfg = JcConfig::default();
        let coh = cfg.with_field(InitialField::Coherent { alpha: 2.0 });
        for p in [Protocol::Cd, Protocol::Lcd] {
            assert!(ensemble_cost(&coh, p).unwrap() > ensemble_cost(&cfg, p).unwrap());
        }
    }

    #[test]
    fn cutoff_robustness() {
        let coh = JcConfig::default().with_field(InitialField::Coherent { alpha: 2.0 });
        let a = ensemble_cost(&coh, Protocol::Cd).unwrap();
        let b = ensemble_cost(&JcConfig { cutoff: 60, ..coh }, Protocol::Cd).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn direct_sum_grows_with_cutoff() {
        let coh = JcConfig {
            combination: CostCombination::DirectSum,
            ..JcConfig::default().with_field(InitialField::Coherent { alpha: 2.0 })
        };
        let a = ensemble_cost(&coh, Protocol::Cd).unwrap();
        let b = ensemble_cost(&JcConfig { cutoff: 60, ..coh }, Protocol::Cd).unwrap();
        assert!(b > a * 1.1);
    }

    #[test]
    fn long_duration_limit() {
        let cfg = JcConfig::default().with_tau(2000.0);
        let limit = adiabatic_cost_limit(&cfg, 0).unwrap();
        for p in [Protocol::Cd, Protocol::Lcd] {
            let c = ensemble_cost(&cfg, p).unwrap();
            assert!((c - limit).abs() < 5e-3 * limit, "{p:?}: {c} vs {limit}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn blocks_match_mapped_landau_zener(
            n in 0usize..60, g in -0.5f64..0.5, gd in -2.0f64..2.0, gdd in -5.0f64..5.0, delta in 0.01f64..1.0,
        ) {
            let p = RampPoint { value: g, d1: gd, d2: gdd };
            let k = 2.0 * ((n + 1) as f64).sqrt();
            let mapped = RampPoint { value: -k * g, d1: -k * gd, d2: -k * gdd };
            let pairs = [
                (block_bare_coefficients(1.0, delta, n, p), bare_coefficients(delta, mapped.value)),
                (block_cd_coefficients(1.0, delta, n, p), cd_coefficients(delta, mapped)),
                (block_lcd_coefficients(1.0, delta, n, p), lcd_coefficients(delta, mapped)),
            ];
            for (jc, lz) in pairs {
                let scale = 1.0 + lz.x.abs() + lz.y.abs() + lz.z.abs();
                prop_assert!((jc.x - lz.x).abs() < 1e-12 * scale);
                prop_assert!((jc.y - lz.y).abs() < 1e-12 * scale);
                prop_assert!((jc.z - lz.z).abs() < 1e-12 * scale);
                prop_assert_eq!(jc.identity, (2 * n + 1) as f64 / 2.0);
            }
        }

        #[test]
        fn cd_coefficient_is_mixing_angle_rate(
            n in 0usize..60, g in -0.5f64..0.5, gd in -2.0f64..2.0, delta in 0.01f64..1.0,
        ) {
            let p = RampPoint { value: g, d1: gd, d2: 0.0 };
            let cy = block_cd_coefficients(1.0, delta, n, p).y;
            let rate = mixing_angle_rate(delta, n, p);
            prop_assert!((cy / 2.0 - rate).abs() < 1e-12 * (1.0 + rate.abs()));
            // independent route: finite difference of θ_n = ½ arctan(Ω_R/δ) along g(t) = g + ġt
            let theta = |t: f64| 0.5 * (rabi_frequency(g + gd * t, n) / delta).atan();
            let h = 1e-6;
            let fd = (theta(h) - theta(-h)) / (2.0 * h);
            prop_assert!((fd - rate).abs() < 1e-6 * (1.0 + rate.abs()));
        }

        #[test]
        fn ensemble_fidelity_is_convex_combination(alpha in 0.0f64..2.5) {
            let cfg = JcConfig { steps: 200, tau: 3.0, ..JcConfig::default().with_field(InitialField::Coherent { alpha }) };
            let run = ensemble_run(&cfg, Protocol::Bare).unwrap();
            let finals: Vec<f64> = run.block_final_fidelity.iter().copied().filter(|f| f.is_finite()).collect();
            let lo = finals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = run.weights.iter().sum();
            let f = run.final_fidelity() / total;
            prop_assert!(f >= lo - 1e-12 && f <= hi + 1e-12);
        }
    }
}
