//! Scenario configuration, loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{MoraConfig, Scheme};
use crate::channel::PathLossModel;
use crate::error::{Error, Result};
use crate::lb::{LbConfig, TopologyMode};
use crate::model::{Violation, ViolationCode};
use crate::quota::SwapOrder;

/// 18 miles per hour.
pub const DEFAULT_SPEED_MPS: f64 = 8.0467;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub duration_ms: u64,
    #[serde(default = "default_interval")]
    pub control_interval_ms: u64,
    #[serde(default = "default_trigger")]
    pub trigger_db: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub mobility: MobilityConfig,
    #[serde(default)]
    pub lb: LbConfig,
    #[serde(default)]
    pub mora: MoraConfig,
    #[serde(default)]
    pub swap_order: SwapOrder,
    pub slices: Vec<SliceConfig>,
}

fn default_interval() -> u64 {
    500
}

fn default_trigger() -> f64 {
    3.0
}

fn default_scheme() -> Scheme {
    Scheme::RadioWeaver
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub mode: TopologyMode,
    pub small_cells: usize,
    pub macro_tx_power_dbm: f64,
    pub small_tx_power_dbm: f64,
    pub macro_bandwidth_mhz: f64,
    pub small_bandwidth_mhz: f64,
    pub min_radius_m: f64,
    pub max_radius_m: f64,
    pub min_separation_m: f64,
    /// Spacing of the small cells on a line when there is no macrocell.
    pub line_spacing_m: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            mode: TopologyMode::MacroRelay,
            small_cells: 4,
            macro_tx_power_dbm: 49.0,
            small_tx_power_dbm: 35.0,
            macro_bandwidth_mhz: 100.0,
            small_bandwidth_mhz: 20.0,
            min_radius_m: 500.0,
            max_radius_m: 700.0,
            min_separation_m: 800.0,
            line_spacing_m: 500.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    #[default]
    Synthetic,
    Trace,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub mode: ChannelKind,
    /// Relative paths resolve against the scenario file's directory.
    pub trace_manifest: Option<PathBuf>,
    #[serde(flatten)]
    pub pathloss: PathLossModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub mobile_fraction: f64,
    pub speed_mps: f64,
    /// Side of the square simulation area centred on the origin.
    pub boundary_m: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            mobile_fraction: 0.0,
            speed_mps: DEFAULT_SPEED_MPS,
            boundary_m: 5000.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadConfig {
    #[default]
    Backlogged,
    Web {
        #[serde(default = "default_web_rate")]
        mean_rate_bps: f64,
    },
}

fn default_web_rate() -> f64 {
    3e6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    #[serde(default)]
    pub name: String,
    /// Fraction of total network capacity.
    pub quota_share: f64,
    pub epsilon: f64,
    /// Inclusive range of UEs placed within range of each small cell.
    #[serde(default)]
    pub users_per_small_cell: [u32; 2],
    /// Inclusive range of UEs placed outside every small cell's range.
    #[serde(default)]
    pub users_macro_only: [u32; 2],
    /// Per-small-cell override of `users_per_small_cell`, by position.
    #[serde(default)]
    pub users_per_small_cell_override: Vec<[u32; 2]>,
    #[serde(default)]
    pub priority_fraction: f64,
    #[serde(default = "default_priority_weight")]
    pub priority_weight: f64,
    #[serde(default)]
    pub workload: WorkloadConfig,
}

fn default_priority_weight() -> f64 {
    5.0
}

impl SliceConfig {
    pub fn range_for_small(&self, position: usize) -> [u32; 2] {
        self.users_per_small_cell_override
            .get(position)
            .copied()
            .unwrap_or(self.users_per_small_cell)
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    pub fn has_macro(&self) -> bool {
        self.topology.mode == TopologyMode::MacroRelay
    }

    /// Every violated constraint. `base_dir` resolves a relative trace
    /// manifest path.
    pub fn validate(&self, base_dir: &Path) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |code, detail: String| out.push(Violation { code, detail });
        let bad = ViolationCode::InvalidParameter;

        if self.duration_ms == 0 {
            push(bad, "duration_ms must be positive".into());
        }
        if self.control_interval_ms == 0 {
            push(bad, "control_interval_ms must be positive".into());
        }
        if !(self.trigger_db >= 0.0) {
            push(bad, format!("trigger_db {} is negative", self.trigger_db));
        }
        if let Err(e) = self.lb.validate() {
            push(bad, e.to_string());
        }
        let t = &self.topology;
        if self.has_macro() && !(t.min_radius_m > 0.0 && t.min_radius_m <= t.max_radius_m) {
            push(bad, "small-cell radius range is empty".into());
        }
        if !self.has_macro() && t.small_cells == 0 {
            push(bad, "a topology without a macrocell needs small cells".into());
        }
        if !(t.macro_bandwidth_mhz > 0.0 && t.small_bandwidth_mhz > 0.0) {
            push(ViolationCode::NonPositiveCapacity, "bandwidths must be positive".into());
        }
        let m = &self.mobility;
        if !(0.0..=1.0).contains(&m.mobile_fraction) {
            push(bad, format!("mobile_fraction {} outside [0, 1]", m.mobile_fraction));
        }
        if !(m.speed_mps >= 0.0) || !(m.boundary_m > 0.0) {
            push(bad, "mobility speed and boundary must be non-negative/positive".into());
        }
        let pl = &self.channel.pathloss;
        if !(pl.macro_coeffs.slope_db_per_decade > 0.0 && pl.small_coeffs.slope_db_per_decade > 0.0) {
            push(bad, "path-loss slopes must be positive".into());
        }
        if !(pl.shadowing_sigma_db >= 0.0) || !(pl.symbols_per_rb > 0.0) {
            push(bad, "shadowing sigma must be >= 0 and symbols_per_rb > 0".into());
        }
        if self.channel.mode == ChannelKind::Trace {
            match &self.channel.trace_manifest {
                None => push(
                    ViolationCode::MissingTraceManifest,
                    "trace mode needs trace_manifest".into(),
                ),
                Some(p) if !base_dir.join(p).is_file() => push(
                    ViolationCode::MissingTraceManifest,
                    format!("trace manifest {} not found", base_dir.join(p).display()),
                ),
                Some(_) => {}
            }
        }

        if self.slices.is_empty() {
            push(bad, "at least one slice is required".into());
        }
        let share: f64 = self.slices.iter().map(|s| s.quota_share).sum();
        if (share - 1.0).abs() > 1e-9 {
            push(
                ViolationCode::QuotaCapacityMismatch,
                format!("slice quota shares sum to {share}, not 1"),
            );
        }
        for (i, s) in self.slices.iter().enumerate() {
            let label = if s.name.is_empty() {
                format!("slice #{i}")
            } else {
                s.name.clone()
            };
            if !(s.quota_share > 0.0) {
                push(
                    ViolationCode::NonPositiveQuota,
                    format!("{label} has share {}", s.quota_share),
                );
            }
            if !(0.0..=1.0).contains(&s.epsilon) {
                push(
                    ViolationCode::EpsilonOutOfRange,
                    format!("{label} has epsilon {}", s.epsilon),
                );
            }
            let mut ranges = vec![s.users_macro_only];
            ranges.extend((0..t.small_cells).map(|p| s.range_for_small(p)));
            if ranges.iter().any(|r| r[0] > r[1]) {
                push(bad, format!("{label} has a user range with min > max"));
            }
            let min_users: u32 = (0..t.small_cells).map(|p| s.range_for_small(p)[0]).sum::<u32>()
                + if self.has_macro() { s.users_macro_only[0] } else { 0 };
            if min_users == 0 {
                push(bad, format!("{label} may end up with no users"));
            }
            if !(0.0..=1.0).contains(&s.priority_fraction) || !(s.priority_weight > 0.0) {
                push(
                    ViolationCode::NonPositiveWeight,
                    format!("{label} has invalid priority settings"),
                );
            }
            if let WorkloadConfig::Web { mean_rate_bps } = s.workload {
                if !(mean_rate_bps > 0.0) {
                    push(bad, format!("{label} web rate must be positive"));
                }
            }
        }
        out
    }
}
