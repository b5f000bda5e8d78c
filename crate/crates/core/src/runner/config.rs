use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jaynes_cummings::JcConfig;
use crate::landau_zener::{LzConfig, Protocol};
use crate::numeric::log_grid;
use crate::oc::OcProblem;
use crate::oscillator::{OscProtocol, OscillatorConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Lz,
    Oscillator,
    Jc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolName {
    Bare,
    Cd,
    Lcd,
    CdOptimized,
    Bob,
    Oc,
    Ie,
}

impl ProtocolName {
    pub fn lz(self) -> Option<Protocol> {
        Some(match self {
            ProtocolName::Bare => Protocol::Bare,
            ProtocolName::Cd => Protocol::Cd,
            ProtocolName::Lcd => Protocol::Lcd,
            ProtocolName::CdOptimized => Protocol::CdOptimized,
            ProtocolName::Bob => Protocol::Bob,
            ProtocolName::Oc => Protocol::Oc,
            ProtocolName::Ie => return None,
        })
    }

    pub fn oscillator(self) -> Option<OscProtocol> {
        Some(match self {
            ProtocolName::Bare => OscProtocol::Bare,
            ProtocolName::Cd => OscProtocol::Cd,
            ProtocolName::Lcd => OscProtocol::Lcd,
            ProtocolName::Ie => OscProtocol::Ie,
            _ => return None,
        })
    }

    pub fn jc(self) -> Option<Protocol> {
        match self {
            ProtocolName::Bare => Some(Protocol::Bare),
            ProtocolName::Cd => Some(Protocol::Cd),
            ProtocolName::Lcd => Some(Protocol::Lcd),
            _ => None,
        }
    }

    pub fn supported_by(self, model: Model) -> bool {
        match model {
            Model::Lz => self.lz().is_some(),
            Model::Oscillator => self.oscillator().is_some(),
            Model::Jc => self.jc().is_some(),
        }
    }
}

/// Durations of a cost scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "spacing", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TauGrid {
    Log { lo: f64, hi: f64, points: usize },
    Linear { lo: f64, hi: f64, points: usize },
    List { values: Vec<f64> },
}

impl TauGrid {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            TauGrid::Log { lo, hi, points } => log_grid(lo, hi, points),
            TauGrid::Linear { lo, hi, points } => match points {
                0 => vec![],
                1 => vec![lo],
                n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
            },
            TauGrid::List { ref values } => values.clone(),
        }
    }
}

/// Optimizer settings; the model parameters come from the `lz` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcSection {
    pub taus: Vec<f64>,
    pub n_max: usize,
    pub gamma: f64,
    pub max_evals: usize,
    pub starts: usize,
    pub restarts: usize,
    pub steps: usize,
    pub q_target: f64,
    pub gamma_start: f64,
    pub continuation: usize,
}

impl Default for OcSection {
    fn default() -> Self {
        let p = OcProblem::default();
        OcSection {
            taus: vec![],
            n_max: p.n_max,
            gamma: p.gamma,
            max_evals: p.max_evals,
            starts: p.starts,
            restarts: p.restarts,
            steps: p.steps,
            q_target: p.q_target,
            gamma_start: p.gamma_start,
            continuation: p.continuation,
        }
    }
}

impl OcSection {
    pub fn problem(&self, lz: &LzConfig, seed: u64, tau: f64) -> OcProblem {
        OcProblem {
            lz: lz.with_tau(tau),
            n_max: self.n_max,
            gamma: self.gamma,
            max_evals: self.max_evals,
            starts: self.starts,
            restarts: self.restarts,
            seed,
            steps: self.steps,
            q_target: self.q_target,
            gamma_start: self.gamma_start,
            continuation: self.continuation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BobSection {
    /// Kick strength.
    pub g_q: f64,
}

impl Default for BobSection {
    fn default() -> Self {
        BobSection { g_q: 100.0 }
    }
}

/// One experiment: a model, its protocols, and the durations to evaluate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: Model,
    pub protocols: Vec<ProtocolName>,
    #[serde(default)]
    pub seed: u64,
    /// Durations at which time-resolved output is written.
    #[serde(default)]
    pub trajectory_taus: Vec<f64>,
    /// Also write time-resolved output at the speed-limit time (Landau-Zener).
    #[serde(default)]
    pub trajectory_at_qsl: bool,
    #[serde(default = "default_steps")]
    pub trajectory_steps: usize,
    #[serde(default)]
    pub scan: Option<TauGrid>,
    /// Coherent amplitude for an additional photon ensemble (Jaynes-Cummings).
    #[serde(default)]
    pub coherent_alpha: Option<f64>,
    #[serde(default)]
    pub lz: LzConfig,
    #[serde(default)]
    pub oscillator: OscillatorConfig,
    #[serde(default)]
    pub jc: JcConfig,
    #[serde(default)]
    pub bob: BobSection,
    #[serde(default)]
    pub oc: OcSection,
}

fn default_steps() -> usize {
    2_000
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn scan_taus(&self) -> Vec<f64> {
        self.scan.as_ref().map(TauGrid::values).unwrap_or_default()
    }

    pub fn has(&self, p: ProtocolName) -> bool {
        self.protocols.contains(&p)
    }
}
