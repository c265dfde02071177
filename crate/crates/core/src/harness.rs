//! Monte Carlo orchestration.
//!
//! Trial `t` covers user drop `t / realizations` and realization `t % realizations`.
//! All front ends built on the same layout consume the identical channel of a
//! trial; layouts of different size share the user drop and the trial seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{rf_noise_power, ChannelRealization, KroneckerSampler, NoiseSpec, UserDrop};
use crate::channel_file::{export_channel_file, import_channel_file, write_atomic, ChannelFormat};
use crate::config::{dbm_to_watts, ChannelSource, ExperimentConfig, FrontendSpec};
use crate::dma::{max_dipole_moment, propagation_matrix, MicrostripParams, UnitCellParams};
use crate::error::{Error, Result};
use crate::geometry::{
    antenna_noise_power, build_layout, default_patch_area, isotropic_area, wavelength, ArchitectureKind, ArrayLayout,
    CaptureModel,
};
use crate::linalg::{to_complex, CMat, CVec};
use crate::optimizer::{alternate_optimize, digital_array_solution, AnalogFrontend, DigitalMode, LinkModel, Mapper, OptimizerSettings};
use crate::power::{architecture_power, energy_efficiency};
use crate::rival::{combining_tree_gain, pchp_loss_amplitude, PchpLossBudget, StageRule};

const DROP_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;

/// Everything a trial needs for one architecture.
#[derive(Debug, Clone)]
pub struct ArchitectureContext {
    pub layout: ArrayLayout,
    pub sampler: KroneckerSampler,
    pub rx_correlation: CMat,
    pub noise: NoiseSpec,
    /// Captured power per element relative to an isotropic antenna.
    pub capture_gain: f64,
    pub propagation: CVec,
    pub m_max: f64,
    pub pchp_amplitude: f64,
    pub tree_gain: f64,
    pub imported: Option<Vec<ChannelRealization>>,
}

impl ArchitectureContext {
    pub fn build(cfg: &ExperimentConfig, kind: ArchitectureKind) -> Result<Self> {
        let lam = wavelength(cfg.radio.carrier_hz);
        let limits = cfg.hardware_limits;
        let mut layout = build_layout(kind, cfg.aperture, cfg.rf_chains, lam, cfg.pitch)?;
        let area = if !limits {
            isotropic_area(lam)
        } else {
            match kind {
                ArchitectureKind::Dma => layout.element_effective_area,
                _ => cfg.patch.effective_area.unwrap_or_else(|| default_patch_area(lam)),
            }
        };
        layout = layout.with_effective_area(area)?;
        let capture = CaptureModel::new(1.0, lam);
        let sampler = KroneckerSampler::new(&layout, capture);
        let rx_correlation = to_complex(sampler.rx_correlation());
        let noise = NoiseSpec {
            antenna: antenna_noise_power(area, cfg.radio.bandwidth_hz, cfg.radio.temperature_k, lam),
            rf: rf_noise_power(cfg.radio.bandwidth_hz, cfg.radio.temperature_k, cfg.radio.noise_figure_db),
        };
        let per_chain = layout.groups[0].len();
        let (propagation, m_max) = if kind == ArchitectureKind::Dma {
            let attenuation = if limits { cfg.dma.attenuation } else { 0.0 };
            let ms = MicrostripParams::along_strips(&layout, attenuation, cfg.dma.wavenumber);
            let cell = UnitCellParams {
                coupling: cfg.dma.coupling,
                quality: cfg.dma.quality,
                resonance: 2.0 * std::f64::consts::PI * cfg.radio.carrier_hz,
            };
            let m = if limits {
                cfg.dma.m_max.unwrap_or_else(|| max_dipole_moment(&cell, lam))
            } else {
                1.0
            };
            (propagation_matrix(&ms), m)
        } else {
            (CVec::from_element(layout.num_elements(), num_complex::Complex64::new(1.0, 0.0)), 1.0)
        };
        let pchp_amplitude = if limits {
            let mut budget = PchpLossBudget::new(cfg.pchp.phase_shifter_db, cfg.pchp.wilkinson_il_db, per_chain, cfg.pchp.stage_rule);
            budget.strict = cfg.pchp.strict_loss;
            pchp_loss_amplitude(&budget)
        } else {
            1.0
        };
        let imported = match (cfg.channel.source, cfg.channel.files.get(&kind)) {
            (ChannelSource::File, Some(path)) => {
                let records = import_channel_file(path, sampler.rx_correlation(), cfg.users, capture.power_gain(area))?;
                if records.len() < cfg.trials() {
                    return Err(Error::Config(format!(
                        "{} holds {} channel records but {} trials are configured",
                        path.display(),
                        records.len(),
                        cfg.trials()
                    )));
                }
                Some(records)
            }
            _ => None,
        };
        Ok(ArchitectureContext {
            capture_gain: capture.power_gain(area),
            tree_gain: combining_tree_gain(StageRule::Log2.stages(per_chain)),
            layout,
            sampler,
            rx_correlation,
            noise,
            propagation,
            m_max,
            pchp_amplitude,
            imported,
        })
    }

    pub fn analog_frontend(&self, spec: FrontendSpec) -> Option<AnalogFrontend> {
        match spec {
            FrontendSpec::Dma { mode, .. } => Some(AnalogFrontend::Dma {
                mode,
                m_max: self.m_max,
                propagation: self.propagation.clone(),
            }),
            FrontendSpec::Pchp => Some(AnalogFrontend::Pchp {
                amplitude: self.pchp_amplitude,
                tree_gain: self.tree_gain,
            }),
            FrontendSpec::Dpa => None,
        }
    }

    /// Power entering one LNA per watt of transmit power and unit pathloss.
    pub fn lna_capture_per_watt(&self) -> f64 {
        self.layout.groups[0].len() as f64 * self.capture_gain
    }
}

/// Per-architecture contexts for every front end in the configuration.
pub fn prepare(cfg: &ExperimentConfig) -> Result<BTreeMap<ArchitectureKind, ArchitectureContext>> {
    let mut out = BTreeMap::new();
    for f in &cfg.frontends {
        let kind = f.architecture();
        if !out.contains_key(&kind) {
            out.insert(kind, ArchitectureContext::build(cfg, kind)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub trial: usize,
    pub drop: usize,
    pub realization: usize,
    pub frontend: FrontendSpec,
    pub users: usize,
    pub rf_chains: usize,
    pub elements: usize,
    pub hardware_limits: bool,
    pub pt_dbm: f64,
    pub mean_gain: f64,
    pub sum_rate: f64,
    pub sinr: Vec<f64>,
    pub p_in_w: f64,
    pub power_w: f64,
    pub ee_rate_per_watt: f64,
    pub ee_bits_per_joule: f64,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbortRecord {
    pub trial: usize,
    pub frontend: FrontendSpec,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub aborts: Vec<AbortRecord>,
}

fn drop_for(cfg: &ExperimentConfig, drop_index: usize) -> Result<UserDrop> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ drop_index as u64);
    rng.set_stream(DROP_STREAM);
    let seed = rand::Rng::random::<u64>(&mut rng);
    UserDrop::sample(
        cfg.users,
        cfg.placement.inner_radius,
        cfg.placement.outer_radius,
        &cfg.pathloss,
        cfg.radio.carrier_hz,
        seed,
    )
}

/// Channel of trial `trial` on one architecture.
pub fn trial_channel(cfg: &ExperimentConfig, ctx: &ArchitectureContext, trial: usize, drop: &UserDrop) -> ChannelRealization {
    if let Some(records) = &ctx.imported {
        return records[trial].clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ trial as u64);
    rng.set_stream(CHANNEL_STREAM);
    ctx.sampler.sample(drop, &mut rng)
}

fn run_frontend(
    cfg: &ExperimentConfig,
    ctx: &ArchitectureContext,
    spec: FrontendSpec,
    channel: &ChannelRealization,
    trial: usize,
) -> Result<Vec<ResultRow>> {
    let users = cfg.users;
    let strategy = cfg.optimizer.strategy.resolve(users);
    let link = LinkModel {
        channel: &channel.h,
        rx_correlation: &ctx.rx_correlation,
        noise: ctx.noise,
        groups: &ctx.layout.groups,
    };
    let top = dbm_to_watts(cfg.pt_dbm.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let solution = match ctx.analog_frontend(spec) {
        None => digital_array_solution(&link, strategy, top)?,
        Some(frontend) => {
            let mapper = match spec {
                FrontendSpec::Dma { mapper, .. } => mapper,
                _ => Mapper::Cfm,
            };
            let settings = OptimizerSettings {
                mapper,
                strategy,
                digital: if users <= 1 { DigitalMode::SingleUser } else { DigitalMode::MultiUser },
                tolerance: cfg.optimizer.tolerance,
                max_iterations: cfg.optimizer.max_iterations,
            };
            alternate_optimize(&link, &frontend, &settings, top)?
        }
    };
    let mean_gain = if channel.gains.is_empty() {
        0.0
    } else {
        channel.gains.iter().sum::<f64>() / channel.gains.len() as f64
    };
    let mut rows = Vec::with_capacity(cfg.pt_dbm.len());
    for &pt_dbm in &cfg.pt_dbm {
        let pt = dbm_to_watts(pt_dbm);
        let sinr = solution.evaluate(&link, pt);
        let sum_rate = crate::optimizer::sum_rate(&sinr);
        let p_in = mean_gain * pt * ctx.lna_capture_per_watt();
        let power = architecture_power(spec.architecture(), ctx.layout.num_elements(), cfg.rf_chains, p_in, &cfg.power);
        let ee = energy_efficiency(sum_rate, cfg.radio.bandwidth_hz, power)?;
        rows.push(ResultRow {
            trial,
            drop: trial / cfg.realizations,
            realization: trial % cfg.realizations,
            frontend: spec,
            users,
            rf_chains: cfg.rf_chains,
            elements: ctx.layout.num_elements(),
            hardware_limits: cfg.hardware_limits,
            pt_dbm,
            mean_gain,
            sum_rate,
            sinr,
            p_in_w: p_in,
            power_w: power,
            ee_rate_per_watt: ee.per_hz,
            ee_bits_per_joule: ee.bits_per_joule,
            iterations: solution.iterations,
            objective: solution.objective,
            converged: solution.converged,
        });
    }
    Ok(rows)
}

fn run_trial(
    cfg: &ExperimentConfig,
    contexts: &BTreeMap<ArchitectureKind, ArchitectureContext>,
    drops: &[UserDrop],
    trial: usize,
) -> ExperimentResults {
    let drop = &drops[trial / cfg.realizations];
    let channels: BTreeMap<ArchitectureKind, ChannelRealization> = contexts
        .iter()
        .map(|(&kind, ctx)| (kind, trial_channel(cfg, ctx, trial, drop)))
        .collect();
    let mut out = ExperimentResults::default();
    for &spec in &cfg.frontends {
        let kind = spec.architecture();
        match run_frontend(cfg, &contexts[&kind], spec, &channels[&kind], trial) {
            Ok(rows) => out.rows.extend(rows),
            Err(e) => {
                warn!("trial {trial}, {spec}: {e}");
                out.aborts.push(AbortRecord {
                    trial,
                    frontend: spec,
                    message: e.to_string(),
                });
            }
        }
    }
    out
}

/// Runs every trial of the configuration in parallel and gathers rows in trial order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let contexts = Arc::new(prepare(cfg)?);
    let drops = (0..cfg.drops).map(|d| drop_for(cfg, d)).collect::<Result<Vec<_>>>()?;
    info!(
        "running {} trials x {} front ends x {} transmit powers",
        cfg.trials(),
        cfg.frontends.len(),
        cfg.pt_dbm.len()
    );
    let per_trial: Vec<ExperimentResults> = (0..cfg.trials())
        .into_par_iter()
        .map(|t| run_trial(cfg, &contexts, &drops, t))
        .collect();
    let mut results = ExperimentResults::default();
    for r in per_trial {
        results.rows.extend(r.rows);
        results.aborts.extend(r.aborts);
    }
    Ok(results)
}

pub fn csv_header(users: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "trial",
        "drop",
        "realization",
        "frontend",
        "architecture",
        "users",
        "rf_chains",
        "elements",
        "hardware_limits",
        "pt_dbm",
        "mean_gain",
        "sum_rate",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..users).map(|k| format!("sinr_{k}")));
    h.extend(
        [
            "p_in_w",
            "power_w",
            "ee_rate_per_watt",
            "ee_bits_per_joule",
            "iterations",
            "objective",
            "converged",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

impl ResultRow {
    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.trial.to_string(),
            self.drop.to_string(),
            self.realization.to_string(),
            self.frontend.to_string(),
            self.frontend.architecture().to_string(),
            self.users.to_string(),
            self.rf_chains.to_string(),
            self.elements.to_string(),
            self.hardware_limits.to_string(),
            self.pt_dbm.to_string(),
            self.mean_gain.to_string(),
            self.sum_rate.to_string(),
        ];
        r.extend(self.sinr.iter().map(|v| v.to_string()));
        r.extend([
            self.p_in_w.to_string(),
            self.power_w.to_string(),
            self.ee_rate_per_watt.to_string(),
            self.ee_bits_per_joule.to_string(),
            self.iterations.to_string(),
            self.objective.to_string(),
            self.converged.to_string(),
        ]);
        r
    }
}

pub fn results_csv(rows: &[ResultRow], users: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(users))?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.into_inner().map_err(|e| Error::Numerical(format!("csv buffer: {e}")))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Writes the results CSV, a config snapshot next to it and, if any trial aborted, an abort log.
pub fn write_results(path: &Path, cfg: &ExperimentConfig, results: &ExperimentResults) -> Result<Vec<PathBuf>> {
    write_atomic(path, &results_csv(&results.rows, cfg.users)?)?;
    let snapshot = sidecar(path, ".config.toml");
    write_atomic(&snapshot, cfg.to_toml()?.as_bytes())?;
    let mut written = vec![path.to_path_buf(), snapshot];
    if !results.aborts.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trial", "frontend", "message"])?;
        for a in &results.aborts {
            w.write_record([a.trial.to_string(), a.frontend.to_string(), a.message.clone()])?;
        }
        let aborts = sidecar(path, ".aborts.csv");
        write_atomic(&aborts, &w.into_inner().map_err(|e| Error::Numerical(format!("csv buffer: {e}")))?)?;
        written.push(aborts);
    }
    Ok(written)
}

/// Samples the configured trials' channels for one architecture and writes them to `path`.
pub fn export_channels(cfg: &ExperimentConfig, kind: ArchitectureKind, path: &Path, format: ChannelFormat) -> Result<usize> {
    cfg.validate()?;
    let ctx = ArchitectureContext::build(cfg, kind)?;
    let drops = (0..cfg.drops).map(|d| drop_for(cfg, d)).collect::<Result<Vec<_>>>()?;
    let mats: Vec<CMat> = (0..cfg.trials())
        .map(|t| trial_channel(cfg, &ctx, t, &drops[t / cfg.realizations]).h)
        .collect();
    export_channel_file(path, &mats, format)?;
    Ok(mats.len())
}
