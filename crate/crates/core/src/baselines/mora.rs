//! Greedy throughput-maximizing association with bounded handover cascades.
//!
//! UEs are inserted one by one, in ascending id order, at the cell where
//! their own throughput would be highest. After each placement the
//! receiving cell may hand one of its other UEs to a cell where that UE
//! does strictly better; the receiving cell of that handover may do the
//! same, up to a fixed number of cascade rounds.
//!
//! The plain variant assumes every slice runs proportional fairness and
//! that each cell splits its RBs across slices by their weight demand. The
//! `++` variant evaluates throughput with each slice's own objective and the
//! swap allocator.

use serde::{Deserialize, Serialize};

use super::{SchemeConfig, SchemeInput, SchemeResult};
use crate::demand::{compute_demand_state, weight_factor, DemandState};
use crate::error::{Error, Result};
use crate::lb::LbResult;
use crate::model::{ChannelState, Network, UserDistribution};
use crate::quota::{allocate_with, SwapOrder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoraConfig {
    pub cascade_cap: u32,
}

impl Default for MoraConfig {
    fn default() -> Self {
        MoraConfig { cascade_cap: 3 }
    }
}

/// Throughput a UE would get at a cell, given where everyone else is.
trait Evaluator {
    fn throughput(&self, serving: &[Option<usize>], ui: usize, ci: usize) -> f64;
}

/// Per-cell split of RBs across slices in proportion to their
/// proportional-fair demand, renormalized to the cell's capacity.
struct PfSplit<'a> {
    network: &'a Network,
    channel: &'a ChannelState,
}

impl Evaluator for PfSplit<'_> {
    fn throughput(&self, serving: &[Option<usize>], ui: usize, ci: usize) -> f64 {
        let net = self.network;
        let s = net.slices().len();
        let Some(own) = net.slice_of(ui) else { return 0.0 };
        // weight mass per slice, at `ci` and overall, with `ui` placed at `ci`
        let mut at_cell = vec![0.0; s];
        let mut total = vec![0.0; s];
        for (uj, cell) in serving.iter().enumerate() {
            let cell = if uj == ui { Some(ci) } else { *cell };
            let (Some(c), Some(sj)) = (cell, net.slice_of(uj)) else {
                continue;
            };
            let w = net.ues()[uj].weight;
            total[sj] += w;
            if c == ci {
                at_cell[sj] += w;
            }
        }
        let demand = |si: usize| {
            if total[si] > 0.0 {
                net.slices()[si].global_quota_rbs * at_cell[si] / total[si]
            } else {
                0.0
            }
        };
        let cell_demand: f64 = (0..s).map(demand).sum();
        let slice_rbs = net.cells()[ci].capacity_rbs * demand(own) / cell_demand;
        slice_rbs * net.ues()[ui].weight / at_cell[own] * self.channel.at(ui, ci)
    }
}

/// Each slice's own demand and the swap allocator.
struct Generalized<'a> {
    network: &'a Network,
    channel: &'a ChannelState,
    order: SwapOrder,
}

impl Evaluator for Generalized<'_> {
    fn throughput(&self, serving: &[Option<usize>], ui: usize, ci: usize) -> f64 {
        let net = self.network;
        let k = net.cells().len();
        let Some(own) = net.slice_of(ui) else { return 0.0 };
        let mut mass = vec![0.0; net.slices().len() * k];
        for (uj, cell) in serving.iter().enumerate() {
            let cell = if uj == ui { Some(ci) } else { *cell };
            let (Some(c), Some(sj)) = (cell, net.slice_of(uj)) else {
                continue;
            };
            let v = weight_factor(net.ues()[uj].weight, self.channel.at(uj, c), net.slices()[sj].epsilon);
            mass[sj * k + c] += v;
        }
        let total_cap = net.total_capacity();
        let mut ratio = mass.clone();
        for si in 0..net.slices().len() {
            let row = &mut ratio[si * k..(si + 1) * k];
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|m| *m /= sum);
            } else {
                // nobody placed yet: the slice wants the static split
                for (c, m) in row.iter_mut().enumerate() {
                    *m = net.cells()[c].capacity_rbs / total_cap;
                }
            }
        }
        let alloc = allocate_with(net, &DemandState::from_ratios(net, ratio), self.order);
        let v = weight_factor(net.ues()[ui].weight, self.channel.at(ui, ci), net.slices()[own].epsilon);
        alloc.at(own, ci) * v / mass[own * k + ci] * self.channel.at(ui, ci)
    }
}

pub fn mora(input: &SchemeInput<'_>, config: &SchemeConfig) -> Result<SchemeResult> {
    let eval = PfSplit {
        network: input.network,
        channel: input.channel,
    };
    let distribution = associate(input, &config.mora, &eval)?;
    // Quotas follow the all-PF view of demand.
    let pf_demand = compute_demand_state(&all_pf(input.network), &distribution, input.channel)?;
    let allocation = allocate_with(input.network, &pf_demand, config.swap_order);
    finish(input, config, distribution, allocation)
}

pub fn mora_pp(input: &SchemeInput<'_>, config: &SchemeConfig) -> Result<SchemeResult> {
    let eval = Generalized {
        network: input.network,
        channel: input.channel,
        order: config.swap_order,
    };
    let distribution = associate(input, &config.mora, &eval)?;
    let demand = compute_demand_state(input.network, &distribution, input.channel)?;
    let allocation = allocate_with(input.network, &demand, config.swap_order);
    finish(input, config, distribution, allocation)
}

fn finish(
    input: &SchemeInput<'_>,
    config: &SchemeConfig,
    distribution: UserDistribution,
    allocation: crate::model::AllocationScheme,
) -> Result<SchemeResult> {
    let demand = compute_demand_state(input.network, &distribution, input.channel)?;
    let converged = demand.is_fully_complementary(config.lb.load_eq_tolerance);
    Ok(SchemeResult {
        lb: LbResult {
            distribution,
            demand,
            logical_moves: Vec::new(),
            converged,
        },
        allocation,
    })
}

fn all_pf(network: &Network) -> Network {
    let slices = network
        .slices()
        .iter()
        .cloned()
        .map(|mut s| {
            s.epsilon = 1.0;
            s
        })
        .collect();
    Network::new(network.cells().to_vec(), slices, network.ues().to_vec())
}

fn better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + 1e-9 * incumbent.abs()
}

fn associate(input: &SchemeInput<'_>, config: &MoraConfig, eval: &dyn Evaluator) -> Result<UserDistribution> {
    let net = input.network;
    let ch = input.channel;
    let k = net.cells().len();
    let mut serving: Vec<Option<usize>> = net
        .ues()
        .iter()
        .enumerate()
        .map(|(ui, ue)| {
            if input.stale.contains(&ue.id) {
                return None;
            }
            input
                .previous
                .and_then(|p| p.get(ue.id))
                .and_then(|c| net.cell_index(c))
                .filter(|&ci| ch.at(ui, ci) > 0.0)
        })
        .collect();
    let pending: Vec<usize> = (0..serving.len()).filter(|&ui| serving[ui].is_none()).collect();

    for ui in pending {
        let mut best: Option<(usize, f64)> = None;
        for ci in (0..k).filter(|&ci| ch.at(ui, ci) > 0.0) {
            let t = eval.throughput(&serving, ui, ci);
            if best.is_none_or(|(_, b)| better(t, b)) {
                best = Some((ci, t));
            }
        }
        let (mut cell, _) = best.ok_or(Error::UnreachableUe(net.ues()[ui].id))?;
        serving[ui] = Some(cell);
        let mut arrived = ui;
        for _ in 0..config.cascade_cap {
            match cascade_once(&mut serving, cell, arrived, ch, k, eval) {
                Some((moved, to)) => {
                    arrived = moved;
                    cell = to;
                }
                None => break,
            }
        }
    }
    let serving: Vec<usize> = serving.into_iter().map(|c| c.expect("every UE placed")).collect();
    Ok(UserDistribution::from_indices(net, &serving))
}

/// Hands the first UE at `cell` (ascending id, other than `arrived`) that
/// would do strictly better elsewhere to its best alternative.
fn cascade_once(
    serving: &mut [Option<usize>],
    cell: usize,
    arrived: usize,
    ch: &ChannelState,
    k: usize,
    eval: &dyn Evaluator,
) -> Option<(usize, usize)> {
    for uj in 0..serving.len() {
        if uj == arrived || serving[uj] != Some(cell) {
            continue;
        }
        let now = eval.throughput(serving, uj, cell);
        let mut best: Option<(usize, f64)> = None;
        for ci in (0..k).filter(|&ci| ci != cell && ch.at(uj, ci) > 0.0) {
            let t = eval.throughput(serving, uj, ci);
            if better(t, now) && best.is_none_or(|(_, b)| better(t, b)) {
                best = Some((ci, t));
            }
        }
        if let Some((to, _)) = best {
            serving[uj] = Some(to);
            return Some((uj, to));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cell, CellId, Point, Slice, SliceId, Ue, UeId};
    use std::collections::BTreeSet;

    fn net(n_cells: usize, ues: &[(u32, u32, f64)], eps: &[f64]) -> Network {
        let cells = (0..n_cells)
            .map(|i| Cell {
                id: CellId(i as u32),
                capacity_rbs: 100.0,
                position: Point::ORIGIN,
                tx_power_dbm: 35.0,
                bandwidth_mhz: 20.0,
                is_macro: false,
                band_id: i as u32,
            })
            .collect();
        let total = 100.0 * n_cells as f64;
        let slices = eps
            .iter()
            .enumerate()
            .map(|(i, &e)| Slice {
                id: SliceId(i as u32),
                global_quota_rbs: total / eps.len() as f64,
                epsilon: e,
                members: BTreeSet::new(),
            })
            .collect();
        let ues = ues
            .iter()
            .map(|&(id, s, w)| Ue {
                id: UeId(id),
                slice: SliceId(s),
                weight: w,
                position: Point::ORIGIN,
                velocity: Point::ORIGIN,
                is_mobile: false,
            })
            .collect();
        Network::with_derived_members(cells, slices, ues)
    }

    fn with_cap(cap: u32) -> SchemeConfig {
        SchemeConfig {
            mora: MoraConfig { cascade_cap: cap },
            ..SchemeConfig::default()
        }
    }

    fn all_ids(n: &Network) -> BTreeSet<UeId> {
        n.ues().iter().map(|u| u.id).collect()
    }

    fn cells_of(r: &SchemeResult) -> Vec<u32> {
        r.lb.distribution.serving.values().map(|c| c.0).collect()
    }

    #[test]
    fn identical_cells_alternate() {
        let n = net(2, &[(0, 0, 1.0), (1, 0, 1.0), (2, 0, 1.0), (3, 0, 1.0)], &[1.0]);
        let ch = ChannelState::from_efficiency(&n, |_, _| 2.0);
        let ids = all_ids(&n);
        let r = mora(&SchemeInput::fresh(&n, &ch, &ids), &SchemeConfig::default()).unwrap();
        assert_eq!(cells_of(&r), vec![0, 1, 0, 1]);
    }

    #[test]
    fn single_cell_takes_everyone() {
        let n = net(1, &[(0, 0, 1.0), (1, 0, 2.0)], &[1.0]);
        let ch = ChannelState::from_efficiency(&n, |_, _| 1.0);
        let ids = all_ids(&n);
        for r in [
            mora(&SchemeInput::fresh(&n, &ch, &ids), &SchemeConfig::default()).unwrap(),
            mora_pp(&SchemeInput::fresh(&n, &ch, &ids), &SchemeConfig::default()).unwrap(),
        ] {
            assert_eq!(cells_of(&r), vec![0, 0]);
        }
    }

    #[test]
    fn single_ue_picks_best_throughput() {
        let n = net(3, &[(0, 0, 1.0)], &[0.0]);
        let ch = ChannelState::from_efficiency(&n, |_, c| [1.0, 3.0, 2.0][c]);
        let ids = all_ids(&n);
        let r = mora_pp(&SchemeInput::fresh(&n, &ch, &ids), &SchemeConfig::default()).unwrap();
        assert_eq!(cells_of(&r), vec![1]);
    }

    #[test]
    fn non_stale_ues_stay_put() {
        let n = net(2, &[(0, 0, 1.0), (1, 0, 1.0)], &[1.0]);
        let ch = ChannelState::from_efficiency(&n, |_, _| 1.0);
        let prev = UserDistribution::new([(UeId(0), CellId(1)), (UeId(1), CellId(1))].into());
        let stale = BTreeSet::from([UeId(1)]);
        let input = SchemeInput {
            network: &n,
            channel: &ch,
            previous: Some(&prev),
            stale: &stale,
        };
        let r = mora(&input, &with_cap(0)).unwrap();
        assert_eq!(cells_of(&r), vec![1, 0]);
    }

    #[test]
    fn cascades_respect_cap() {
        // UEs with mildly different channels across four cells; count
        // cascade handovers by comparing against pure insertion.
        let ues: Vec<_> = (0..12).map(|i| (i, i % 2, 1.0 + (i % 3) as f64)).collect();
        let n = net(4, &ues, &[1.0, 0.0]);
        let ch = ChannelState::from_efficiency(&n, |u, c| 1.0 + ((u * 7 + c * 3) % 5) as f64);
        let ids = all_ids(&n);
        let input = SchemeInput::fresh(&n, &ch, &ids);
        for cap in [0, 1, 3] {
            let r = mora(&input, &with_cap(cap)).unwrap();
            assert_eq!(r.lb.distribution.len(), 12);
            assert!(crate::model::validate_topology(&n, &ch).is_empty());
        }
    }

    #[test]
    fn allocations_are_valid() {
        let ues: Vec<_> = (0..10).map(|i| (i, i % 2, 1.0)).collect();
        let n = net(3, &ues, &[1.0, 0.0]);
        let ch = ChannelState::from_efficiency(&n, |u, c| 1.0 + ((u + 2 * c) % 4) as f64);
        let ids = all_ids(&n);
        let input = SchemeInput::fresh(&n, &ch, &ids);
        let a = mora(&input, &SchemeConfig::default()).unwrap();
        let b = mora_pp(&input, &SchemeConfig::default()).unwrap();
        for r in [a, b] {
            let m = r.allocation.matrix();
            assert!(m.iter().all(|q| *q >= 0.0));
        }
    }
}
