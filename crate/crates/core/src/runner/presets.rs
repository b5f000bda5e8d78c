use super::config::{ExperimentConfig, Model, OcSection, ProtocolName as P, TauGrid};
use crate::jaynes_cummings::JcConfig;
use crate::landau_zener::LzConfig;
use crate::oscillator::OscillatorConfig;

/// Named scenarios and a one-line description of each.
pub fn list_presets() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "fig1",
            "Landau-Zener trajectories (fidelity, cost rate, spectra) at the speed limit and at tau = 0.1",
        ),
        (
            "fig3",
            "Landau-Zener cost versus duration for CD, LCD, optimized CD, BOB and OC",
        ),
        (
            "fig4",
            "oscillator adiabaticity curves at tau = 1.6 and 2.5 plus CD/LCD/IE cost scan",
        ),
        (
            "fig5",
            "Jaynes-Cummings fidelities and cost scans for the vacuum and a coherent field",
        ),
    ]
}

fn base(name: &str, model: Model, protocols: Vec<P>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        model,
        protocols,
        seed: 0,
        trajectory_taus: vec![],
        trajectory_at_qsl: false,
        trajectory_steps: 2_000,
        scan: None,
        coherent_alpha: None,
        lz: LzConfig::default(),
        oscillator: OscillatorConfig::default(),
        jc: JcConfig::default(),
        bob: Default::default(),
        oc: OcSection::default(),
    }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    Some(match name {
        "fig1" => ExperimentConfig {
            trajectory_taus: vec![0.1],
            trajectory_at_qsl: true,
            ..base("fig1", Model::Lz, vec![P::Bare, P::Cd, P::Lcd, P::Bob])
        },
        "fig3" => ExperimentConfig {
            scan: Some(TauGrid::Log {
                lo: 0.1,
                hi: 100.0,
                points: 31,
            }),
            oc: OcSection {
                taus: vec![25.0, 50.0, 100.0],
                ..OcSection::default()
            },
            ..base("fig3", Model::Lz, vec![P::Cd, P::Lcd, P::CdOptimized, P::Bob, P::Oc])
        },
        "fig4" => ExperimentConfig {
            trajectory_taus: vec![1.6, 2.5],
            scan: Some(TauGrid::Log {
                lo: 1.55,
                hi: 50.0,
                points: 25,
            }),
            ..base("fig4", Model::Oscillator, vec![P::Cd, P::Lcd, P::Ie])
        },
        "fig5" => ExperimentConfig {
            trajectory_taus: vec![10.0],
            scan: Some(TauGrid::Log {
                lo: 1.0,
                hi: 100.0,
                points: 21,
            }),
            coherent_alpha: Some(2.0),
            ..base("fig5", Model::Jc, vec![P::Cd, P::Lcd])
        },
        _ => return None,
    })
}
