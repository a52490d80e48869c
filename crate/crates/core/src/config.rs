//! Run configuration, read from TOML. Every field has a default, so an
//! empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GridSpec;
use crate::geometry::{default_layout, ChipLayout};
use crate::qubit_errors::{DipoleCharges, JointRule, RotationSum, TransmonParams};
use crate::recovery::RecoveryParams;
use crate::source::SourceSpec;
use crate::transport::{PdfGrid, TransportParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsMode {
    /// One record per impact event.
    Event,
    /// Poisson-timed events binned into measurement cycles.
    TimeSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    Direct,
    Pdf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdfConfig {
    #[serde(flatten)]
    pub grid: PdfGrid,
    pub samples_per_zbin: u64,
}

impl Default for PdfConfig {
    fn default() -> Self {
        PdfConfig { grid: PdfGrid::default(), samples_per_zbin: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorConfig {
    /// Transmon used for the error estimates; the same for every qubit site.
    pub transmon: TransmonParams,
    pub dipole_charges: DipoleCharges,
    pub rotation_sum: RotationSum,
    pub eps_theta_cap: f64,
    pub joint_rule: JointRule,
    /// Exceedance levels, as decades [lo, hi] with `per_decade` points.
    pub level_decades: [i32; 2],
    pub levels_per_decade: usize,
}

impl Default for ErrorConfig {
    fn default() -> Self {
        ErrorConfig {
            transmon: TransmonParams::conventional(),
            dipole_charges: DipoleCharges::Liberated,
            rotation_sum: RotationSum::Signed,
            eps_theta_cap: 0.5,
            joint_rule: JointRule::Min,
            level_decades: [-12, 0],
            levels_per_decade: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Chip description; the built-in four-qubit chip when absent.
    pub layout: Option<ChipLayout>,
    /// Path to a layout TOML file, used when `layout` is absent.
    pub layout_file: Option<PathBuf>,
    pub source: SourceSpec,
    pub transport: TransportParams,
    pub grid: GridSpec,
    pub pdf: PdfConfig,
    pub errors: ErrorConfig,
    pub recovery: RecoveryParams,
    /// Readout charge noise σ_q (e).
    pub sigma_q: f64,
    pub jump_threshold: f64,
    /// Measurement cycle time (s).
    pub cycle_time: f64,
    pub n_events: u64,
    pub output_dir: PathBuf,
    pub stats_mode: StatsMode,
    pub transport_mode: TransportMode,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            layout: None,
            layout_file: None,
            source: SourceSpec::default(),
            transport: TransportParams::default(),
            grid: GridSpec::default(),
            pdf: PdfConfig::default(),
            errors: ErrorConfig::default(),
            recovery: RecoveryParams::default(),
            sigma_q: 0.02,
            jump_threshold: 0.1,
            cycle_time: 44.0,
            n_events: 20_000,
            output_dir: PathBuf::from("out"),
            stats_mode: StatsMode::Event,
            transport_mode: TransportMode::Direct,
        }
    }
}

impl SimulationConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimulationConfig = toml::from_str(s).map_err(|e| Error::Format(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (None, Some(f)) = (&cfg.layout, &cfg.layout_file) {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.layout_file = Some(dir.join(f));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn seed(&self) -> u64 {
        self.source.rng_seed
    }

    pub fn resolve_layout(&self) -> Result<ChipLayout> {
        let layout = match (&self.layout, &self.layout_file) {
            (Some(l), _) => l.clone(),
            (None, Some(f)) => ChipLayout::from_toml_file(f)?,
            (None, None) => default_layout(),
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Checks every nested invariant; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.resolve_layout()?;
        self.source.validate()?;
        self.transport.validate()?;
        self.grid.validate()?;
        self.pdf.grid.validate()?;
        self.recovery.validate()?;
        if !(self.sigma_q >= 0.0) {
            return Err(Error::invalid("sigma_q", "must be nonnegative"));
        }
        if !(self.jump_threshold > 0.0 && self.jump_threshold <= 0.5) {
            return Err(Error::invalid("jump_threshold", "must lie in (0, 0.5]"));
        }
        if !(self.cycle_time > 0.0) {
            return Err(Error::invalid("cycle_time", "must be positive"));
        }
        self.errors.transmon.validate().map_err(|e| match e {
            Error::InvalidInput { field, reason } => Error::InvalidInput { field: format!("errors.{field}"), reason },
            other => other,
        })?;
        if !(self.errors.eps_theta_cap > 0.0 && self.errors.eps_theta_cap <= 1.0) {
            return Err(Error::invalid("errors.eps_theta_cap", "must lie in (0, 1]"));
        }
        if self.errors.level_decades[0] >= self.errors.level_decades[1] || self.errors.levels_per_decade == 0 {
            return Err(Error::invalid("errors.level_decades", "need lo < hi and at least one level per decade"));
        }
        if self.transport_mode == TransportMode::Pdf && self.pdf.samples_per_zbin < 10_000 {
            return Err(Error::invalid("pdf.samples_per_zbin", "must be at least 10000"));
        }
        Ok(())
    }
}
