//! Experiment configuration.
//!
//! Every key has a default, so an empty file is a valid configuration. Command
//! line overrides use dotted paths (`dma.quality=12`) and are applied to the
//! parsed TOML table before it is deserialized.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::channel::PathlossModel;
use crate::dma::DmaMode;
use crate::error::{Error, Result};
use crate::geometry::{Aperture, ArchitectureKind, Pitch};
use crate::optimizer::Mapper;
use crate::power::ComponentPowers;
use crate::rival::{LinearReceiver, StageRule};

/// A receive front end and the mapper used to design it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrontendSpec {
    Dma { mode: DmaMode, mapper: Mapper },
    Pchp,
    Dpa,
}

impl FrontendSpec {
    pub fn all() -> Vec<FrontendSpec> {
        let mut v = Vec::new();
        for mode in [DmaMode::Lpm, DmaMode::Bam] {
            for mapper in [Mapper::Nzm, Mapper::Cfm] {
                v.push(FrontendSpec::Dma { mode, mapper });
            }
        }
        v.push(FrontendSpec::Pchp);
        v.push(FrontendSpec::Dpa);
        v
    }

    pub fn architecture(self) -> ArchitectureKind {
        match self {
            FrontendSpec::Dma { .. } => ArchitectureKind::Dma,
            FrontendSpec::Pchp => ArchitectureKind::Pchp,
            FrontendSpec::Dpa => ArchitectureKind::Dpa,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FrontendSpec::Dma { mode: DmaMode::Lpm, mapper: Mapper::Nzm } => "dma-lpm-nzm",
            FrontendSpec::Dma { mode: DmaMode::Lpm, mapper: Mapper::Cfm } => "dma-lpm-cfm",
            FrontendSpec::Dma { mode: DmaMode::Bam, mapper: Mapper::Nzm } => "dma-bam-nzm",
            FrontendSpec::Dma { mode: DmaMode::Bam, mapper: Mapper::Cfm } => "dma-bam-cfm",
            FrontendSpec::Pchp => "pchp",
            FrontendSpec::Dpa => "dpa",
        }
    }
}

impl fmt::Display for FrontendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrontendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        FrontendSpec::all()
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = FrontendSpec::all().iter().map(|f| f.name()).collect();
                Error::Config(format!("unknown front end `{s}`; expected one of {}", known.join(", ")))
            })
    }
}

impl Serialize for FrontendSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FrontendSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// MRC for a single user, ZF otherwise.
    Auto,
    Mrc,
    Zf,
}

impl Strategy {
    pub fn resolve(self, users: usize) -> LinearReceiver {
        match self {
            Strategy::Auto if users <= 1 => LinearReceiver::Mrc,
            Strategy::Auto => LinearReceiver::Zf,
            Strategy::Mrc => LinearReceiver::Mrc,
            Strategy::Zf => LinearReceiver::Zf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub temperature_k: f64,
    pub noise_figure_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            carrier_hz: 3e9,
            bandwidth_hz: 20e6,
            temperature_k: 290.0,
            noise_figure_db: 18.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig {
            inner_radius: 50.0,
            outer_radius: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmaConfig {
    /// Unit-cell coupling factor, m³.
    pub coupling: f64,
    pub quality: f64,
    /// Microstrip attenuation, 1/m.
    pub attenuation: f64,
    /// Microstrip wavenumber, 1/m.
    pub wavenumber: f64,
    /// Overrides the cap derived from coupling and quality.
    pub m_max: Option<f64>,
}

impl Default for DmaConfig {
    fn default() -> Self {
        DmaConfig {
            coupling: 3e-9,
            quality: 10.0,
            attenuation: 0.13,
            wavenumber: 113.8,
            m_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PchpConfig {
    pub phase_shifter_db: f64,
    pub wilkinson_il_db: f64,
    pub stage_rule: StageRule,
    pub strict_loss: bool,
}

impl Default for PchpConfig {
    fn default() -> Self {
        PchpConfig {
            phase_shifter_db: 5.0,
            wilkinson_il_db: 3.9,
            stage_rule: StageRule::Log2,
            strict_loss: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchConfig {
    /// Overrides the default patch effective area, m².
    pub effective_area: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub strategy: Strategy,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            strategy: Strategy::Auto,
            tolerance: 1e-4,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSource {
    Kronecker,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub source: ChannelSource,
    /// One channel file per architecture when `source = "file"`; record `t` feeds trial `t`.
    pub files: BTreeMap<ArchitectureKind, PathBuf>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            source: ChannelSource::Kronecker,
            files: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub drops: usize,
    pub realizations: usize,
    pub users: usize,
    pub rf_chains: usize,
    pub pt_dbm: Vec<f64>,
    pub hardware_limits: bool,
    pub frontends: Vec<FrontendSpec>,
    pub aperture: Aperture,
    pub pitch: Pitch,
    pub radio: RadioConfig,
    pub placement: PlacementConfig,
    pub pathloss: PathlossModel,
    pub dma: DmaConfig,
    pub pchp: PchpConfig,
    pub patch: PatchConfig,
    pub power: ComponentPowers,
    pub optimizer: OptimizerConfig,
    pub channel: ChannelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            drops: 10,
            realizations: 100,
            users: 1,
            rf_chains: 4,
            pt_dbm: vec![-10.0, 0.0, 10.0, 20.0, 30.0],
            hardware_limits: true,
            frontends: FrontendSpec::all(),
            aperture: Aperture::default(),
            pitch: Pitch::default(),
            radio: RadioConfig::default(),
            placement: PlacementConfig::default(),
            pathloss: PathlossModel::default(),
            dma: DmaConfig::default(),
            pchp: PchpConfig::default(),
            patch: PatchConfig::default(),
            power: ComponentPowers::default(),
            optimizer: OptimizerConfig::default(),
            channel: ChannelConfig::default(),
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `dotted.key=value` override to a TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{part}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn trials(&self) -> usize {
        self.drops * self.realizations
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        if self.drops == 0 || self.realizations == 0 || self.users == 0 || self.rf_chains == 0 {
            return Err(Error::Config("drops, realizations, users and rf_chains must all be at least 1".into()));
        }
        if self.pt_dbm.is_empty() {
            return Err(Error::Config("pt_dbm sweep must not be empty".into()));
        }
        if let Some(v) = self.pt_dbm.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("pt_dbm contains non-finite value {v}")));
        }
        if self.frontends.is_empty() {
            return Err(Error::Config("at least one front end is required".into()));
        }
        positive("radio.carrier_hz", self.radio.carrier_hz)?;
        positive("radio.bandwidth_hz", self.radio.bandwidth_hz)?;
        positive("radio.temperature_k", self.radio.temperature_k)?;
        if !(self.radio.noise_figure_db >= 0.0) {
            return Err(Error::Config("radio.noise_figure_db must be non-negative".into()));
        }
        positive("dma.coupling", self.dma.coupling)?;
        positive("dma.quality", self.dma.quality)?;
        if !(self.dma.attenuation >= 0.0) {
            return Err(Error::Config("dma.attenuation must be non-negative".into()));
        }
        if let Some(m) = self.dma.m_max {
            positive("dma.m_max", m)?;
        }
        if let Some(a) = self.patch.effective_area {
            positive("patch.effective_area", a)?;
        }
        positive("optimizer.tolerance", self.optimizer.tolerance)?;
        if self.optimizer.max_iterations == 0 {
            return Err(Error::Config("optimizer.max_iterations must be at least 1".into()));
        }
        if self.optimizer.strategy == Strategy::Zf && self.users > self.rf_chains {
            return Err(Error::Config(format!(
                "zero forcing cannot separate {} users with {} RF chains",
                self.users, self.rf_chains
            )));
        }
        self.power.validate()?;
        if self.channel.source == ChannelSource::File {
            for f in &self.frontends {
                if !self.channel.files.contains_key(&f.architecture()) {
                    return Err(Error::Config(format!(
                        "channel.source = \"file\" needs channel.files.{} for front end {f}",
                        f.architecture()
                    )));
                }
            }
        }
        Ok(())
    }
}
