//! Radio channel: path loss, SINR to CQI to bits-per-RB mapping, and the
//! time-varying channel state fed to the algorithms.
//!
//! Cells sit on separate bands, so there is no interference term: the SINR
//! of a link is its RSRP over a fixed noise-plus-interference floor.

mod trace;

pub use trace::{bind_traces, load_manifest, read_trace_csv, CqiSample, CqiTrace, TraceEntry};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{Cell, ChannelState, Network, Point};

/// Spectral efficiency (bits per modulation symbol) of CQI indices 1..=15.
pub const CQI_EFFICIENCY: [f64; 15] = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152,
    5.5547,
];

/// SINR at which CQI 1 becomes decodable; each further index needs 2 dB more.
pub const CQI1_SINR_DB: f64 = -6.0;
pub const CQI_STEP_DB: f64 = 2.0;
pub const DEFAULT_SYMBOLS_PER_RB: f64 = 150.0;

/// Log-distance path loss, `intercept + slope * log10(d_km)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLossCoeffs {
    pub intercept_db: f64,
    pub slope_db_per_decade: f64,
}

impl PathLossCoeffs {
    pub const URBAN_MACRO: PathLossCoeffs = PathLossCoeffs {
        intercept_db: 128.1,
        slope_db_per_decade: 37.6,
    };
    pub const URBAN_SMALL: PathLossCoeffs = PathLossCoeffs {
        intercept_db: 140.7,
        slope_db_per_decade: 36.7,
    };

    pub fn loss_db(&self, distance_m: f64) -> f64 {
        let d_km = distance_m.max(1.0) / 1000.0;
        self.intercept_db + self.slope_db_per_decade * d_km.log10()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossModel {
    pub macro_coeffs: PathLossCoeffs,
    pub small_coeffs: PathLossCoeffs,
    pub noise_floor_dbm: f64,
    pub shadowing_sigma_db: f64,
    pub symbols_per_rb: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel {
            macro_coeffs: PathLossCoeffs::URBAN_MACRO,
            small_coeffs: PathLossCoeffs::URBAN_SMALL,
            noise_floor_dbm: -68.0,
            shadowing_sigma_db: 0.0,
            symbols_per_rb: DEFAULT_SYMBOLS_PER_RB,
        }
    }
}

impl PathLossModel {
    pub fn coeffs(&self, cell: &Cell) -> PathLossCoeffs {
        if cell.is_macro {
            self.macro_coeffs
        } else {
            self.small_coeffs
        }
    }

    /// Received power in dBm before shadowing. Distances under 1 m are
    /// clamped to 1 m.
    pub fn rsrp(&self, cell: &Cell, position: &Point) -> f64 {
        cell.tx_power_dbm - self.coeffs(cell).loss_db(cell.position.distance(position))
    }

    pub fn efficiency(&self, rsrp_dbm: f64) -> f64 {
        efficiency_from_sinr(rsrp_dbm - self.noise_floor_dbm, self.symbols_per_rb)
    }

    /// Distance from a cell at which its links drop below CQI 1 (no
    /// shadowing). Used as the operational "range" of a cell.
    pub fn coverage_radius(&self, cell: &Cell) -> f64 {
        let c = self.coeffs(cell);
        let max_loss = cell.tx_power_dbm - self.noise_floor_dbm - CQI1_SINR_DB;
        1000.0 * 10f64.powf((max_loss - c.intercept_db) / c.slope_db_per_decade)
    }
}

/// RSRP in dBm of a cell at `position`, with an additive shadowing term.
pub fn rsrp(model: &PathLossModel, cell: &Cell, position: &Point, shadowing_db: f64) -> f64 {
    model.rsrp(cell, position) - shadowing_db
}

/// CQI index 1..=15 for a SINR, or 0 when out of coverage.
pub fn sinr_to_cqi(sinr_db: f64) -> u8 {
    if !(sinr_db >= CQI1_SINR_DB) {
        return 0;
    }
    let idx = ((sinr_db - CQI1_SINR_DB) / CQI_STEP_DB).floor() as i64 + 1;
    idx.clamp(1, 15) as u8
}

/// Lowest SINR that maps to `cqi` (1..=15).
pub fn cqi_threshold_db(cqi: u8) -> f64 {
    CQI1_SINR_DB + CQI_STEP_DB * (f64::from(cqi) - 1.0)
}

/// Bits per RB for a CQI index; 0 for index 0.
pub fn cqi_to_efficiency(cqi: u8, symbols_per_rb: f64) -> f64 {
    match cqi {
        0 => 0.0,
        c => CQI_EFFICIENCY[usize::from(c.min(15)) - 1] * symbols_per_rb,
    }
}

pub fn efficiency_from_sinr(sinr_db: f64, symbols_per_rb: f64) -> f64 {
    cqi_to_efficiency(sinr_to_cqi(sinr_db), symbols_per_rb)
}

/// Bits per RB at the default symbols-per-RB scaling.
pub fn efficiency_from_rsrp(rsrp_dbm: f64, noise_floor_dbm: f64) -> f64 {
    efficiency_from_sinr(rsrp_dbm - noise_floor_dbm, DEFAULT_SYMBOLS_PER_RB)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChannelMode {
    /// Path loss plus frozen per-link shadowing.
    Synthetic,
    /// Wideband CQI traces drive the UE's best link; other links follow
    /// from their RSRP offset to it.
    Trace {
        traces: Vec<CqiTrace>,
        /// Trace position per UE, network order.
        binding: Vec<usize>,
        /// Per-UE time offset into its trace.
        phase_ms: Vec<f64>,
    },
}

/// Produces a [`ChannelState`] for any instant from UE positions.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    pub pathloss: PathLossModel,
    /// Frozen shadowing in dB, row-major UE by cell.
    shadowing: Vec<f64>,
    n_cells: usize,
    pub mode: ChannelMode,
}

impl ChannelModel {
    pub fn synthetic(pathloss: PathLossModel, network: &Network, rng: &mut ChaCha8Rng) -> Self {
        let n_cells = network.cells().len();
        let n = network.ues().len() * n_cells;
        let shadowing = if pathloss.shadowing_sigma_db > 0.0 {
            let normal = Normal::new(0.0, pathloss.shadowing_sigma_db).expect("shadowing sigma is finite and positive");
            (0..n).map(|_| normal.sample(rng)).collect()
        } else {
            vec![0.0; n]
        };
        ChannelModel {
            pathloss,
            shadowing,
            n_cells,
            mode: ChannelMode::Synthetic,
        }
    }

    /// Switches to trace mode. Each UE is bound to the trace whose mean
    /// RSRP is nearest the UE's modeled RSRP from its strongest cell.
    pub fn with_traces(
        mut self,
        network: &Network,
        traces: Vec<CqiTrace>,
        rng: &mut ChaCha8Rng,
    ) -> crate::Result<Self> {
        let modeled: Vec<_> = (0..network.ues().len())
            .map(|ui| {
                let best = self.strongest_rsrp(network, ui).map(|(_, r)| r);
                (network.ues()[ui].id, best.unwrap_or(f64::NEG_INFINITY))
            })
            .collect();
        let assignment = bind_traces(&modeled, &traces)?;
        let binding = network
            .ues()
            .iter()
            .map(|ue| {
                let id = assignment[&ue.id];
                traces.iter().position(|t| t.id == id).expect("bound trace exists")
            })
            .collect::<Vec<_>>();
        let phase_ms = binding
            .iter()
            .map(|&ti| rng.random::<f64>() * traces[ti].period_ms())
            .collect();
        self.mode = ChannelMode::Trace {
            traces,
            binding,
            phase_ms,
        };
        Ok(self)
    }

    pub fn shadowing_db(&self, ue_idx: usize, cell_idx: usize) -> f64 {
        self.shadowing[ue_idx * self.n_cells + cell_idx]
    }

    pub fn link_rsrp(&self, network: &Network, ue_idx: usize, cell_idx: usize) -> f64 {
        let ue = &network.ues()[ue_idx];
        rsrp(
            &self.pathloss,
            &network.cells()[cell_idx],
            &ue.position,
            self.shadowing_db(ue_idx, cell_idx),
        )
    }

    /// Same as [`Self::link_rsrp`] for a hypothetical UE position.
    pub fn link_rsrp_at(&self, network: &Network, ue_idx: usize, cell_idx: usize, position: &Point) -> f64 {
        rsrp(
            &self.pathloss,
            &network.cells()[cell_idx],
            position,
            self.shadowing_db(ue_idx, cell_idx),
        )
    }

    /// True if some cell would serve the UE at `position`.
    pub fn covers(&self, network: &Network, ue_idx: usize, position: &Point) -> bool {
        (0..network.cells().len()).any(|ci| {
            self.pathloss
                .efficiency(self.link_rsrp_at(network, ue_idx, ci, position))
                > 0.0
        })
    }

    fn strongest_rsrp(&self, network: &Network, ue_idx: usize) -> Option<(usize, f64)> {
        (0..network.cells().len())
            .map(|ci| (ci, self.link_rsrp(network, ue_idx, ci)))
            .fold(None, |best, (ci, r)| match best {
                Some((_, b)) if b >= r => best,
                _ => Some((ci, r)),
            })
    }

    /// Channel state at `time_ms` for the network's current UE positions.
    pub fn channel_at(&self, time_ms: f64, network: &Network) -> ChannelState {
        let pl = &self.pathloss;
        match &self.mode {
            ChannelMode::Synthetic => ChannelState::from_fn(network, |ui, ci| {
                let r = self.link_rsrp(network, ui, ci);
                let sinr = r - pl.noise_floor_dbm;
                (efficiency_from_sinr(sinr, pl.symbols_per_rb), sinr)
            }),
            ChannelMode::Trace {
                traces,
                binding,
                phase_ms,
            } => {
                let best: Vec<f64> = (0..network.ues().len())
                    .map(|ui| self.strongest_rsrp(network, ui).map_or(0.0, |(_, r)| r))
                    .collect();
                ChannelState::from_fn(network, |ui, ci| {
                    let r = self.link_rsrp(network, ui, ci);
                    if pl.efficiency(r) <= 0.0 {
                        return (0.0, r - pl.noise_floor_dbm);
                    }
                    let cqi = traces[binding[ui]].cqi_at(time_ms + phase_ms[ui]);
                    let offset_db = r - best[ui];
                    let e = cqi_to_efficiency(cqi, pl.symbols_per_rb) * 10f64.powf(offset_db / 10.0);
                    (e, cqi_threshold_db(cqi) + offset_db)
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CellId;

    fn macro_cell() -> Cell {
        Cell {
            id: CellId(0),
            capacity_rbs: 500.0,
            position: Point::ORIGIN,
            tx_power_dbm: 49.0,
            bandwidth_mhz: 100.0,
            is_macro: true,
            band_id: 0,
        }
    }

    #[test]
    fn rsrp_reference_points() {
        let m = PathLossModel::default();
        let c = macro_cell();
        // 49 - 128.1 - 37.6 * log10(1)
        assert!((m.rsrp(&c, &Point::new(1000.0, 0.0)) - (-79.1)).abs() < 1e-9);
        // one decade further adds exactly the slope
        assert!((m.rsrp(&c, &Point::new(10_000.0, 0.0)) - (-116.7)).abs() < 1e-9);
        assert_eq!(m.rsrp(&c, &Point::ORIGIN), m.rsrp(&c, &Point::new(1.0, 0.0)));
        assert_eq!(rsrp(&m, &c, &Point::new(1000.0, 0.0), 2.0), -81.1);
    }

    #[test]
    fn rsrp_decreases_with_distance() {
        let m = PathLossModel::default();
        let c = macro_cell();
        let mut prev = f64::INFINITY;
        for d in [1.5, 10.0, 100.0, 999.0, 5000.0] {
            let r = m.rsrp(&c, &Point::new(d, 0.0));
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn efficiency_mapping_edges() {
        assert_eq!(efficiency_from_rsrp(-150.0, -68.0), 0.0);
        let top = -68.0 + cqi_threshold_db(15);
        assert_eq!(
            efficiency_from_rsrp(top, -68.0),
            efficiency_from_rsrp(top + 10.0, -68.0)
        );
        assert_eq!(efficiency_from_rsrp(top, -68.0), 5.5547 * 150.0);
        assert_eq!(efficiency_from_rsrp(-68.0 - 6.0, -68.0), 0.1523 * 150.0);
        assert_eq!(efficiency_from_rsrp(-68.0 - 6.01, -68.0), 0.0);
    }

    #[test]
    fn efficiency_is_monotone_on_grid() {
        let mut prev = 0.0;
        let mut r = -120.0;
        while r < 0.0 {
            let e = efficiency_from_rsrp(r, -90.0);
            assert!(e >= prev, "non-monotone at {r}");
            assert!(e <= CQI_EFFICIENCY[14] * DEFAULT_SYMBOLS_PER_RB);
            prev = e;
            r += 0.05;
        }
    }

    #[test]
    fn coverage_radius_hits_cqi1_threshold() {
        let m = PathLossModel::default();
        let c = macro_cell();
        let r = m.coverage_radius(&c);
        let sinr = m.rsrp(&c, &Point::new(r, 0.0)) - m.noise_floor_dbm;
        assert!((sinr - CQI1_SINR_DB).abs() < 1e-9);
    }
}
