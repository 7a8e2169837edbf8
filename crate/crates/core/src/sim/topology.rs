//! Cell placement and user placement.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::ScenarioConfig;
use crate::channel::{ChannelModel, PathLossModel};
use crate::error::{Error, Result};
use crate::model::{Cell, CellId, Network, Point, Slice, SliceId, Ue, UeId};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
const RESTART_AFTER_MISSES: usize = 200;

/// RBs per millisecond for each MHz of bandwidth.
pub const RBS_PER_MHZ_MS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionKind {
    /// Within range of the small cell at this position in the cell list.
    SmallCell(usize),
    /// Covered by the macrocell but outside every small cell's range.
    MacroOnly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub kind: RegionKind,
    pub center: Point,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub cells: Vec<Cell>,
    pub regions: Vec<Region>,
}

pub fn capacity_rbs(bandwidth_mhz: f64, interval_ms: u64) -> f64 {
    bandwidth_mhz * RBS_PER_MHZ_MS * interval_ms as f64
}

/// Macrocell at the origin with small cells on a ring around it, or, when
/// there is no macrocell, small cells evenly spaced on a line.
pub fn generate_topology(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Topology> {
    let t = &config.topology;
    // Regions are sized under the default channel so that "in range of a
    // small cell" means the same place whatever noise floor a scenario uses.
    let pl = PathLossModel::default();
    let small = |id: u32, position: Point| Cell {
        id: CellId(id),
        capacity_rbs: capacity_rbs(t.small_bandwidth_mhz, config.control_interval_ms),
        position,
        tx_power_dbm: t.small_tx_power_dbm,
        bandwidth_mhz: t.small_bandwidth_mhz,
        is_macro: false,
        band_id: id,
    };
    let mut cells = Vec::new();
    if config.has_macro() {
        cells.push(Cell {
            id: CellId(0),
            capacity_rbs: capacity_rbs(t.macro_bandwidth_mhz, config.control_interval_ms),
            position: Point::ORIGIN,
            tx_power_dbm: t.macro_tx_power_dbm,
            bandwidth_mhz: t.macro_bandwidth_mhz,
            is_macro: true,
            band_id: 0,
        });
        // Sequential rejection with restarts: a partial layout that leaves no
        // room for the next cell is discarded rather than retried forever.
        let mut placed: Vec<Point> = Vec::new();
        let mut misses = 0;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            if placed.len() == t.small_cells {
                break;
            }
            let r = rng.random_range(t.min_radius_m..=t.max_radius_m);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let p = Point::new(r * theta.cos(), r * theta.sin());
            if placed.iter().all(|q| q.distance(&p) >= t.min_separation_m) {
                placed.push(p);
                misses = 0;
            } else {
                misses += 1;
                if misses == RESTART_AFTER_MISSES {
                    placed.clear();
                    misses = 0;
                }
            }
        }
        if placed.len() < t.small_cells {
            return Err(Error::PlacementInfeasible {
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        }
        cells.extend(placed.into_iter().enumerate().map(|(i, p)| small(i as u32 + 1, p)));
    } else {
        cells.extend((0..t.small_cells).map(|i| small(i as u32 + 1, Point::new(i as f64 * t.line_spacing_m, 0.0))));
    }

    let mut regions: Vec<Region> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_macro)
        .map(|(ci, c)| Region {
            kind: RegionKind::SmallCell(ci),
            center: c.position,
            radius: pl.coverage_radius(c),
        })
        .collect();
    if let Some(m) = cells.iter().find(|c| c.is_macro) {
        regions.push(Region {
            kind: RegionKind::MacroOnly,
            center: m.position,
            radius: pl.coverage_radius(m),
        });
    }
    Ok(Topology { cells, regions })
}

fn uniform_in_disc(rng: &mut ChaCha8Rng, center: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    Point::new(center.x + r * theta.cos(), center.y + r * theta.sin())
}

fn in_small_range(topology: &Topology, p: &Point) -> bool {
    topology
        .regions
        .iter()
        .any(|r| matches!(r.kind, RegionKind::SmallCell(_)) && r.center.distance(p) <= r.radius)
}

fn sample_in_region(topology: &Topology, region: &Region, rng: &mut ChaCha8Rng, ok: impl Fn(&Point) -> bool) -> Point {
    let mut p = uniform_in_disc(rng, region.center, region.radius);
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let outside = region.kind != RegionKind::MacroOnly || !in_small_range(topology, &p);
        if outside && ok(&p) {
            break;
        }
        p = uniform_in_disc(rng, region.center, region.radius);
    }
    p
}

/// UEs per slice and region, with slices, in id order. Positions are
/// uniform in each region's disc; macro-only UEs avoid every small-cell
/// disc.
pub fn place_users(config: &ScenarioConfig, topology: &Topology, rng: &mut ChaCha8Rng) -> (Vec<Slice>, Vec<Ue>) {
    let total_capacity: f64 = topology.cells.iter().map(|c| c.capacity_rbs).sum();
    let mut ues = Vec::new();
    let mut slices = Vec::new();
    for (si, sc) in config.slices.iter().enumerate() {
        let first = ues.len();
        for region in &topology.regions {
            let [lo, hi] = match region.kind {
                RegionKind::SmallCell(ci) => {
                    let pos = topology.cells[..ci].iter().filter(|c| !c.is_macro).count();
                    sc.range_for_small(pos)
                }
                RegionKind::MacroOnly => sc.users_macro_only,
            };
            let count = rng.random_range(lo..=hi);
            for _ in 0..count {
                let position = sample_in_region(topology, region, rng, |_| true);
                let mobile = rng.random_bool(config.mobility.mobile_fraction);
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let speed = if mobile { config.mobility.speed_mps } else { 0.0 };
                ues.push(Ue {
                    id: UeId(ues.len() as u32),
                    slice: SliceId(si as u32),
                    weight: 1.0,
                    position,
                    velocity: Point::new(speed * theta.cos(), speed * theta.sin()),
                    is_mobile: mobile,
                });
            }
        }
        let n = ues.len() - first;
        let prioritized = (sc.priority_fraction * n as f64).round() as usize;
        for idx in sample(rng, n, prioritized.min(n)) {
            ues[first + idx].weight = sc.priority_weight;
        }
        slices.push(Slice {
            id: SliceId(si as u32),
            global_quota_rbs: sc.quota_share * total_capacity,
            epsilon: sc.epsilon,
            members: ues[first..].iter().map(|u| u.id).collect::<BTreeSet<_>>(),
        });
    }
    (slices, ues)
}

/// Moves UEs that their frozen shadowing leaves without coverage to a
/// covered spot in the same region.
pub fn ensure_coverage(
    network: &Network,
    topology: &Topology,
    channel: &ChannelModel,
    rng: &mut ChaCha8Rng,
) -> Network {
    let mut ues = network.ues().to_vec();
    for (ui, ue) in ues.iter_mut().enumerate() {
        if channel.covers(network, ui, &ue.position) {
            continue;
        }
        let region = region_of(topology, &ue.position);
        ue.position = sample_in_region(topology, &region, rng, |p| channel.covers(network, ui, p));
    }
    network.with_ues(ues)
}

fn region_of(topology: &Topology, p: &Point) -> Region {
    topology
        .regions
        .iter()
        .filter(|r| r.center.distance(p) <= r.radius + 1e-6)
        .find(|r| r.kind != RegionKind::MacroOnly || !in_small_range(topology, p))
        .or_else(|| topology.regions.last())
        .copied()
        .expect("topology has at least one region")
}
