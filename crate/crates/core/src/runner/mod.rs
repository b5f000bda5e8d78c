//! Batch experiments: config parsing, presets, and CSV/JSON output.
//!
//! Every CSV starts with a `#` comment line carrying the SHA-256 of the
//! canonical config, followed by a header row. Output depends only on the
//! config, so reruns are byte-identical.

mod config;
mod presets;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{BobSection, ExperimentConfig, Model, OcSection, ProtocolName, TauGrid};
pub use presets::{list_presets, preset};

use crate::error::{Error, Result};
use crate::jaynes_cummings::{self as jc, InitialField, JcConfig};
use crate::landau_zener::{self as lz, LzConfig, Protocol};
use crate::oc::{self, OcResult};
use crate::oscillator::{self as osc, OscProtocol};
use crate::two_level::integrated_cost;

#[derive(Clone, Debug, Default, Serialize)]
pub struct BobSummary {
    pub g_q: f64,
    pub tau: f64,
    pub angles: (f64, f64),
    pub fidelity: f64,
    pub cost: f64,
    pub success: bool,
}

/// Everything a run reports besides its CSV files.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub config_sha256: String,
    pub files: Vec<String>,
    pub qsl_time: Option<f64>,
    /// Keyed by `"<protocol>@tau=<τ>"`.
    pub final_fidelity: BTreeMap<String, f64>,
    pub cost: BTreeMap<String, f64>,
    /// Oscillator adiabaticity parameter at the end of each protocol.
    pub final_qstar: BTreeMap<String, f64>,
    pub crossover: BTreeMap<String, Option<f64>>,
    pub cd_validity_edge: Option<f64>,
    pub bob: Option<BobSummary>,
    pub oc: Vec<OcResult>,
    /// Cells that could not be computed; the run continues past them.
    pub failures: Vec<String>,
}

fn key(name: &str, tau: f64) -> String {
    format!("{name}@tau={tau}")
}

fn tau_label(tau: f64) -> String {
    format!("{tau:.4}").replace('.', "p")
}

struct Output<'a> {
    dir: &'a Path,
    header: String,
    files: Vec<String>,
}

impl Output<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        w.write_all(self.header.as_bytes())?;
        self.files.push(name.to_string());
        Ok(w)
    }
}

/// Execute `cfg`, writing all outputs under `out_dir`, including
/// `summary.json`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let report = validate(cfg);
    if let Some(e) = report.issues.iter().find(|i| i.severity == Severity::Error) {
        return Err(Error::Config(e.message.clone()));
    }
    std::fs::create_dir_all(out_dir)?;
    let hash = cfg.hash()?;
    let mut out = Output {
        dir: out_dir,
        header: format!("# stacost experiment={} config_sha256={hash}\n", cfg.name),
        files: vec![],
    };
    let mut summary = RunSummary {
        name: cfg.name.clone(),
        config_sha256: hash,
        ..Default::default()
    };
    match cfg.model {
        Model::Lz => run_lz(cfg, &mut out, &mut summary)?,
        Model::Oscillator => run_oscillator(cfg, &mut out, &mut summary)?,
        Model::Jc => run_jc(cfg, &mut out, &mut summary)?,
    }
    summary.files = std::mem::take(&mut out.files);
    summary.files.push("summary.json".into());
    let mut w = BufWriter::new(File::create(out_dir.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(summary)
}

struct LzTraces {
    fidelity: csv::Writer<BufWriter<File>>,
    cost_rate: csv::Writer<BufWriter<File>>,
    spectrum: csv::Writer<BufWriter<File>>,
}

impl LzTraces {
    fn open(out: &mut Output, tau: f64) -> Result<Self> {
        let label = tau_label(tau);
        let mut fidelity = csv::Writer::from_writer(out.create(&format!("lz_fidelity_tau{label}.csv"))?);
        fidelity.write_record(["protocol", "t", "fidelity"])?;
        let mut cost_rate = csv::Writer::from_writer(out.create(&format!("lz_cost_rate_tau{label}.csv"))?);
        cost_rate.write_record(["protocol", "t", "cost_rate"])?;
        let mut spectrum = csv::Writer::from_writer(out.create(&format!("lz_spectrum_tau{label}.csv"))?);
        spectrum.write_record(["protocol", "t", "e_minus", "e_plus"])?;
        Ok(LzTraces {
            fidelity,
            cost_rate,
            spectrum,
        })
    }

    fn add(&mut self, t: &lz::ProtocolTrace) -> Result<()> {
        let name = t.protocol.name();
        let tr = &t.trajectory;
        for i in 0..tr.times.len() {
            let time = format!("{:.12e}", tr.times[i]);
            self.fidelity
                .write_record([name, &time, &format!("{:.12e}", tr.fidelity[i])])?;
            self.cost_rate
                .write_record([name, &time, &format!("{:.12e}", tr.cost_rate[i])])?;
            self.spectrum.write_record([
                name,
                &time,
                &format!("{:.12e}", t.e_minus[i]),
                &format!("{:.12e}", t.e_plus[i]),
            ])?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.fidelity.flush()?;
        self.cost_rate.flush()?;
        self.spectrum.flush()?;
        Ok(())
    }
}

fn run_lz(cfg: &ExperimentConfig, out: &mut Output, summary: &mut RunSummary) -> Result<()> {
    let base = &cfg.lz;
    let qsl = base.qsl_time()?;
    summary.qsl_time = Some(qsl);
    let ramp_protocols: Vec<Protocol> = cfg
        .protocols
        .iter()
        .filter_map(|p| p.lz())
        .filter(|p| !matches!(p, Protocol::Bob | Protocol::Oc))
        .collect();

    let bob = if cfg.has(ProtocolName::Bob) {
        match lz::optimize_bob_kicks(base, cfg.bob.g_q) {
            Ok(o) => {
                summary.bob = Some(BobSummary {
                    g_q: cfg.bob.g_q,
                    tau: o.pulse.tau,
                    angles: o.angles(),
                    fidelity: o.fidelity,
                    cost: o.cost,
                    success: o.success,
                });
                Some(o)
            }
            Err(e) => {
                summary.failures.push(format!("bob: {e}"));
                None
            }
        }
    } else {
        None
    };

    let mut taus = cfg.trajectory_taus.clone();
    if cfg.trajectory_at_qsl {
        taus.insert(0, qsl);
    }
    for (i, &tau) in taus.iter().enumerate() {
        let c = base.with_tau(tau);
        let mut traces = LzTraces::open(out, tau)?;
        for &p in &ramp_protocols {
            let cell = lz::schedule_for(&c, p).and_then(|s| {
                let t = lz::trace(&c, p, &s, cfg.trajectory_steps)?;
                let fid = lz::final_fidelity(&c, p)?;
                Ok((
                    t,
                    fid,
                    integrated_cost(&s, crate::two_level::DEFAULT_QUADRATURE, false)?,
                ))
            });
            match cell {
                Ok((t, fid, cost)) => {
                    traces.add(&t)?;
                    summary.final_fidelity.insert(key(p.name(), tau), fid);
                    summary.cost.insert(key(p.name(), tau), cost);
                }
                Err(e) => summary.failures.push(format!("{}@tau={tau}: {e}", p.name())),
            }
        }
        // the BOB pulse lives at the speed limit only
        if let (Some(o), true) = (&bob, cfg.trajectory_at_qsl && i == 0) {
            let s = lz::lz_bob(base.delta, &o.pulse)?;
            traces.add(&lz::trace(&c, Protocol::Bob, &s, cfg.trajectory_steps)?)?;
            summary.final_fidelity.insert(key("bob", tau), o.fidelity);
            summary.cost.insert(key("bob", tau), o.cost);
        }
        traces.finish()?;
    }

    let scan = cfg.scan_taus();
    if !scan.is_empty() && !ramp_protocols.is_empty() {
        let table = lz::cost_scan(base, &scan, &ramp_protocols)?;
        table.write_csv(out.create("lz_cost_scan.csv")?)?;
        if ramp_protocols.contains(&Protocol::Cd) && ramp_protocols.contains(&Protocol::Lcd) {
            summary
                .crossover
                .insert("cd-lcd".into(), lz::locate_crossover(base, &scan)?);
        }
    }

    if cfg.has(ProtocolName::Oc) {
        for &tau in &cfg.oc.taus {
            match oc::optimize(&cfg.oc.problem(base, cfg.seed, tau)) {
                Ok(r) => {
                    r.write_trace_csv(out.create(&format!("oc_trace_tau{}.csv", tau_label(tau)))?)?;
                    summary.oc.push(r);
                }
                Err(e) => summary.failures.push(format!("oc@tau={tau}: {e}")),
            }
        }
    }
    Ok(())
}

fn run_oscillator(cfg: &ExperimentConfig, out: &mut Output, summary: &mut RunSummary) -> Result<()> {
    let base = &cfg.oscillator;
    let protocols: Vec<OscProtocol> = cfg.protocols.iter().filter_map(|p| p.oscillator()).collect();
    summary.cd_validity_edge = base.cd_validity_edge()?;
    for &tau in &cfg.trajectory_taus {
        let c = base.with_tau(tau);
        let curves = osc::qstar_curves(&c.schedule()?, cfg.trajectory_steps)?;
        curves.write_csv(out.create(&format!("osc_qstar_tau{}.csv", tau_label(tau)))?)?;
        for &p in &protocols {
            match c.cost(p) {
                Ok(r) if r.is_valid() => {
                    summary.cost.insert(key(p.name(), tau), r.cost);
                    summary.final_qstar.insert(key(p.name(), tau), r.final_qstar);
                }
                Ok(_) => summary
                    .failures
                    .push(format!("{}@tau={tau}: LCD frequency not real", p.name())),
                Err(e) => summary.failures.push(format!("{}@tau={tau}: {e}", p.name())),
            }
        }
    }
    let scan = cfg.scan_taus();
    if !scan.is_empty() && !protocols.is_empty() {
        let table = osc::oscillator_cost_scan(base, &scan, &protocols)?;
        table.write_csv(out.create("osc_cost_scan.csv")?)?;
        summary.failures.extend(table.failures.iter().cloned());
    }
    Ok(())
}

fn run_jc(cfg: &ExperimentConfig, out: &mut Output, summary: &mut RunSummary) -> Result<()> {
    let protocols: Vec<Protocol> = cfg.protocols.iter().filter_map(|p| p.jc()).collect();
    let mut fields = vec![("vacuum".to_string(), InitialField::Vacuum)];
    if let Some(alpha) = cfg.coherent_alpha {
        fields.push(("coherent".to_string(), InitialField::Coherent { alpha }));
    }
    for (label, field) in &fields {
        let base = JcConfig {
            field: *field,
            steps: cfg.trajectory_steps,
            ..cfg.jc.clone()
        };
        for &tau in &cfg.trajectory_taus {
            let c = base.with_tau(tau);
            let mut w =
                csv::Writer::from_writer(out.create(&format!("jc_fidelity_{label}_tau{}.csv", tau_label(tau)))?);
            w.write_record(["protocol", "t", "fidelity"])?;
            for &p in &protocols {
                match jc::ensemble_run(&c, p) {
                    Ok(r) => {
                        for (t, f) in r.times.iter().zip(&r.fidelity) {
                            w.write_record([p.name(), &format!("{t:.12e}"), &format!("{f:.12e}")])?;
                        }
                        let name = format!("{label}-{}", p.name());
                        summary.final_fidelity.insert(key(&name, tau), r.final_fidelity());
                        summary.cost.insert(key(&name, tau), r.cost);
                    }
                    Err(e) => summary.failures.push(format!("{label} {}@tau={tau}: {e}", p.name())),
                }
            }
            w.flush()?;
        }
        let scan = cfg.scan_taus();
        if !scan.is_empty() && protocols.contains(&Protocol::Cd) && protocols.contains(&Protocol::Lcd) {
            let table = jc::jc_cost_scan(&base, &scan)?;
            table.write_csv(out.create(&format!("jc_cost_scan_{label}.csv"))?)?;
            summary
                .crossover
                .insert(format!("{label}-cd-lcd"), jc::jc_crossover(&base, &scan)?);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    /// The run would refuse to start.
    Error,
    /// The run would record a per-cell failure and continue.
    Warning,
}

#[derive(Clone, Debug, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    fn error(&mut self, message: String) {
        self.issues.push(Issue {
            severity: Severity::Error,
            message,
        });
    }

    fn warn(&mut self, message: String) {
        self.issues.push(Issue {
            severity: Severity::Warning,
            message,
        });
    }
}

/// Dry run: schema-level and physics-validity checks without simulating.
pub fn validate(cfg: &ExperimentConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    if cfg.protocols.is_empty() {
        r.error("no protocols selected".into());
    }
    for p in &cfg.protocols {
        if !p.supported_by(cfg.model) {
            r.error(format!("protocol {p:?} is not available for model {:?}", cfg.model));
        }
    }
    let scan = cfg.scan_taus();
    for &t in cfg.trajectory_taus.iter().chain(&scan).chain(&cfg.oc.taus) {
        if !(t > 0.0 && t.is_finite()) {
            r.error(format!("duration {t} is not positive"));
        }
    }
    if cfg.trajectory_steps < 2 {
        r.error("trajectory_steps must be at least 2".into());
    }
    match cfg.model {
        Model::Lz => validate_lz(cfg, &cfg.lz, &mut r),
        Model::Oscillator => {
            let o = &cfg.oscillator;
            if !(o.omega0 > 0.0 && o.omega1 > 0.0 && o.beta > 0.0) {
                r.error("oscillator frequencies and β must be positive".into());
            } else if cfg.has(ProtocolName::Cd) {
                match o.cd_validity_edge() {
                    Ok(Some(edge)) => {
                        for &t in cfg.trajectory_taus.iter().chain(&scan) {
                            if t <= edge {
                                r.warn(format!(
                                    "CD inverts the trap at tau = {t} (valid above tau = {edge:.4})"
                                ));
                            }
                        }
                    }
                    Ok(None) => {}
                    Err(e) => r.error(e.to_string()),
                }
            }
        }
        Model::Jc => {
            if let Err(e) = cfg.jc.validate() {
                r.error(e.to_string());
            }
            let mut fields = vec![cfg.jc.field];
            fields.extend(cfg.coherent_alpha.map(|alpha| InitialField::Coherent { alpha }));
            for f in fields {
                if let InitialField::Coherent { alpha } = f {
                    let tail = jc::poisson_tail(alpha, cfg.jc.cutoff);
                    if tail > jc::MAX_TAIL {
                        r.error(format!(
                            "coherent alpha = {alpha} leaves tail {tail:e} beyond cutoff {}; raise the cutoff",
                            cfg.jc.cutoff
                        ));
                    }
                }
            }
        }
    }
    r
}

fn validate_lz(cfg: &ExperimentConfig, lz_cfg: &LzConfig, r: &mut ValidationReport) {
    if let Err(e) = lz_cfg.validate() {
        r.error(e.to_string());
        return;
    }
    if cfg.has(ProtocolName::Oc) {
        match lz_cfg.qsl_time() {
            Ok(qsl) => {
                for &t in &cfg.oc.taus {
                    if t <= qsl {
                        r.warn(format!("optimal control needs tau > tau_QSL = {qsl:.4}, got {t}"));
                    }
                }
            }
            Err(e) => r.error(e.to_string()),
        }
        if cfg.oc.taus.is_empty() {
            r.warn("optimal control selected but oc.taus is empty".into());
        }
    }
    if cfg.has(ProtocolName::Bob) && !(cfg.bob.g_q > 0.0) {
        r.error("bob.g_q must be positive".into());
    }
}

/// Resolve `--config` / preset arguments into a config.
pub fn load(preset_name: Option<&str>, path: Option<&Path>) -> Result<ExperimentConfig> {
    match (preset_name, path) {
        (Some(_), Some(_)) => Err(Error::Config("give either a preset or a config file, not both".into())),
        (Some(n), None) => preset(n).ok_or_else(|| {
            let names: Vec<_> = list_presets().into_iter().map(|(n, _)| n).collect();
            Error::Config(format!("unknown preset {n:?}; available: {}", names.join(", ")))
        }),
        (None, Some(p)) => ExperimentConfig::from_path(p),
        (None, None) => Err(Error::Config("no preset or config file given".into())),
    }
}

/// Size the global worker pool used by scans. Must be called before any
/// parallel work starts.
pub fn configure_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Default output directory for a config.
pub fn default_out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from("out").join(&cfg.name)
}
