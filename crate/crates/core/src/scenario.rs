//! Scenario files: TOML in engineering units, overlaid on a named preset.
//!
//! Every key is optional. A file may name a `preset` (`desk-scale` when
//! absent); the keys it sets replace the preset's values, tables merge key
//! by key. Powers are in dBm, capacities in Mbps, bandwidth in MHz, packet
//! sizes in kbit and latencies in milliseconds. Unknown keys are rejected.
//!
//! ```toml
//! preset = "desk-scale"
//! drops = 50
//! sweep = [0, 0.01, 0.1, 0.5, 1]
//! packet_sizes_kbit = [1, 12]
//!
//! [topology]
//! num_users = 10
//! pico_power_dbm = 27
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, Fading, PathLoss};
use crate::error::{Error, Result};
use crate::harness::Scenario;
use crate::metrics::Scheme;
use crate::prescheduler::PreschedParams;
use crate::scalar::dbm_to_watts;
use crate::slnr::LeakageScope;
use crate::topology::TopologyConfig;
use crate::wsr::SolverParams;

pub const PRESETS: [&str; 2] = ["desk-scale", "paper-scale"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySpec {
    pub num_macro: usize,
    pub num_pico: usize,
    pub num_users: usize,
    pub macro_power_dbm: f64,
    pub pico_power_dbm: f64,
    pub macro_capacity_mbps: f64,
    pub pico_capacity_mbps: f64,
    pub macro_antennas: usize,
    pub pico_antennas: usize,
    pub plane_extent_m: f64,
    pub min_distance_m: f64,
    pub user_weight: f64,
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self {
            num_macro: 1,
            num_pico: 3,
            num_users: 8,
            macro_power_dbm: 43.0,
            pico_power_dbm: 30.0,
            macro_capacity_mbps: 690.0,
            pico_capacity_mbps: 107.0,
            macro_antennas: 2,
            pico_antennas: 2,
            plane_extent_m: 1000.0,
            min_distance_m: 10.0,
            user_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    pub bandwidth_mhz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub shadowing_std_db: f64,
    pub fading: Fading,
    pub macro_path_loss: PathLoss,
    pub pico_path_loss: PathLoss,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            bandwidth_mhz: 10.0,
            noise_psd_dbm_per_hz: -169.0,
            shadowing_std_db: 8.0,
            fading: Fading::Rayleigh,
            macro_path_loss: PathLoss::MACRO,
            pico_path_loss: PathLoss::PICO,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySpec {
    pub cran_ms: f64,
    pub fogran_ms: f64,
}

/// Scenario as written in a file. Scalars come before tables so the
/// struct serializes back to valid TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub master_seed: u64,
    pub drops: usize,
    pub frames_per_drop: usize,
    pub preschedule_period: usize,
    pub sweep: Vec<f64>,
    pub packet_sizes_kbit: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub leakage_scope: LeakageScope,
    pub topology: TopologySpec,
    pub channel: ChannelSpec,
    pub solver: SolverParams,
    pub presched: PreschedParams,
    pub latency: LatencySpec,
}

impl Default for ScenarioSpec {
    /// The desk-scale preset.
    fn default() -> Self {
        Self {
            preset: None,
            master_seed: 1,
            drops: 20,
            frames_per_drop: 10,
            preschedule_period: 10,
            sweep: vec![0.0, 0.01, 0.1, 0.5, 1.0],
            packet_sizes_kbit: vec![1.0, 12.0],
            schemes: Scheme::ALL.to_vec(),
            leakage_scope: LeakageScope::AllUsers,
            topology: TopologySpec::default(),
            channel: ChannelSpec::default(),
            solver: SolverParams::default(),
            presched: PreschedParams::default(),
            latency: LatencySpec::default(),
        }
    }
}

pub fn preset(name: &str) -> Result<ScenarioSpec> {
    match name {
        "desk-scale" => Ok(ScenarioSpec::default()),
        "paper-scale" => Ok(ScenarioSpec {
            topology: TopologySpec {
                num_macro: 3,
                num_pico: 9,
                num_users: 60,
                macro_antennas: 4,
                pico_antennas: 2,
                ..TopologySpec::default()
            },
            ..ScenarioSpec::default()
        }),
        other => Err(Error::invalid(
            "preset",
            format!("unknown preset {other:?} (available: {})", PRESETS.join(", ")),
        )),
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn located(text: &str, err: toml::de::Error) -> Error {
    match err.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            Error::Parse(format!("line {line}: {}", err.message()))
        }
        None => Error::Parse(err.message().to_string()),
    }
}

impl ScenarioSpec {
    /// Parses file contents and overlays them on the named preset.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_preset(text, None)
    }

    /// Like [`parse`](Self::parse), but `base` (when given) replaces the
    /// file's own `preset` key.
    pub fn parse_with_preset(text: &str, base: Option<&str>) -> Result<Self> {
        // Typed pass first: it rejects unknown keys and bad types with the
        // location in the user's own text.
        let typed: ScenarioSpec = toml::from_str(text).map_err(|e| located(text, e))?;
        let mut overlay: toml::Table = toml::from_str(text).map_err(|e| located(text, e))?;
        overlay.remove("preset");
        let base = preset(base.or(typed.preset.as_deref()).unwrap_or("desk-scale"))?;
        let mut table = toml::Table::try_from(&base).map_err(|e| Error::Parse(e.to_string()))?;
        merge(&mut table, overlay);
        let mut spec: ScenarioSpec = table.try_into().map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
        spec.preset = None;
        Ok(spec)
    }

    pub fn from_file(path: &Path, base: Option<&str>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_with_preset(&text, base).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Complete TOML snapshot; parsing it back yields the same spec.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Converts to SI units and validates every field.
    pub fn resolve(&self) -> Result<Scenario> {
        if self.master_seed > i64::MAX as u64 {
            return Err(Error::invalid("master_seed", "must be below 2^63"));
        }
        let t = &self.topology;
        let c = &self.channel;
        let scenario = Scenario {
            topology: TopologyConfig {
                num_macro: t.num_macro,
                num_pico: t.num_pico,
                num_users: t.num_users,
                macro_power_w: dbm_to_watts(t.macro_power_dbm),
                pico_power_w: dbm_to_watts(t.pico_power_dbm),
                macro_capacity_bps: t.macro_capacity_mbps * 1e6,
                pico_capacity_bps: t.pico_capacity_mbps * 1e6,
                macro_antennas: t.macro_antennas,
                pico_antennas: t.pico_antennas,
                plane_extent_m: t.plane_extent_m,
                min_distance_m: t.min_distance_m,
                user_weight: t.user_weight,
                seed: 0,
            },
            channel: ChannelParams {
                bandwidth_hz: c.bandwidth_mhz * 1e6,
                noise_psd_w_per_hz: dbm_to_watts(c.noise_psd_dbm_per_hz),
                macro_path_loss: c.macro_path_loss,
                pico_path_loss: c.pico_path_loss,
                shadowing_std_db: c.shadowing_std_db,
                fading: c.fading,
            },
            solver: self.solver.clone(),
            presched: self.presched,
            sweep: self.sweep.clone(),
            drops: self.drops,
            frames_per_drop: self.frames_per_drop,
            preschedule_period: self.preschedule_period,
            packet_sizes_bits: self.packet_sizes_kbit.iter().map(|p| p * 1e3).collect(),
            schemes: self.schemes.clone(),
            master_seed: self.master_seed,
            leakage_scope: self.leakage_scope,
            cran_latency_s: self.latency.cran_ms * 1e-3,
            fogran_latency_s: self.latency.fogran_ms * 1e-3,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
