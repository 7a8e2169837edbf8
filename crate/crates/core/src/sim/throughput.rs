//! Per-interval RB accounting.
//!
//! Within a cell, a slice's quota is shared among its UEs in proportion to
//! their effective weights. UEs that need fewer RBs than their share keep
//! only what they need; the rest is shared again among the slice's other
//! UEs. RBs a slice cannot use go to the cell's other slices in proportion
//! to their unmet need.

use crate::demand::weight_factor;
use crate::model::{AllocationScheme, ChannelState, Network};

/// RBs and bits each UE receives in one interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ThroughputReport {
    pub rbs: Vec<f64>,
    pub efficiency: Vec<f64>,
    pub bits: Vec<f64>,
}

/// `need_bits[u]` is `None` for a backlogged UE.
pub fn account_throughput(
    network: &Network,
    channel: &ChannelState,
    serving: &[usize],
    allocation: &AllocationScheme,
    need_bits: &[Option<f64>],
) -> ThroughputReport {
    let n = network.ues().len();
    let k = network.cells().len();
    let s = network.slices().len();
    let mut rbs = vec![0.0; n];
    let efficiency: Vec<f64> = (0..n).map(|ui| channel.at(ui, serving[ui])).collect();

    // members[cell][slice] -> UE positions
    let mut members = vec![vec![Vec::new(); s]; k];
    for ui in 0..n {
        if let Some(si) = network.slice_of(ui) {
            if efficiency[ui] > 0.0 {
                members[serving[ui]][si].push(ui);
            }
        }
    }
    let cap_rbs = |ui: usize| match need_bits[ui] {
        None => f64::INFINITY,
        Some(b) => b / efficiency[ui],
    };

    for (ci, by_slice) in members.iter().enumerate() {
        let mut spare = 0.0;
        for (si, ues) in by_slice.iter().enumerate() {
            let quota = allocation.at(si, ci);
            spare += water_fill(quota, ues, network, si, &efficiency, &cap_rbs, &mut rbs);
        }
        if spare <= 0.0 {
            continue;
        }
        let unmet: Vec<f64> = by_slice
            .iter()
            .map(|ues| ues.iter().map(|&u| cap_rbs(u) - rbs[u]).sum::<f64>().min(spare))
            .collect();
        let total_unmet: f64 = unmet.iter().sum();
        if total_unmet <= 0.0 {
            continue;
        }
        for (si, ues) in by_slice.iter().enumerate() {
            let extra = if total_unmet > spare {
                spare * unmet[si] / total_unmet
            } else {
                unmet[si]
            };
            if extra > 0.0 {
                water_fill(extra, ues, network, si, &efficiency, &cap_rbs, &mut rbs);
            }
        }
    }
    let bits = rbs.iter().zip(&efficiency).map(|(r, e)| r * e).collect();
    ThroughputReport { rbs, efficiency, bits }
}

/// Shares `pool` RBs among `ues` in proportion to effective weight, never
/// beyond a UE's remaining need. Returns the RBs nobody could use.
fn water_fill(
    mut pool: f64,
    ues: &[usize],
    network: &Network,
    si: usize,
    efficiency: &[f64],
    cap_rbs: &dyn Fn(usize) -> f64,
    rbs: &mut [f64],
) -> f64 {
    let eps = network.slices()[si].epsilon;
    let mut active: Vec<(usize, f64)> = ues
        .iter()
        .filter(|&&u| cap_rbs(u) - rbs[u] > 0.0)
        .map(|&u| (u, weight_factor(network.ues()[u].weight, efficiency[u], eps)))
        .collect();
    while pool > 0.0 && !active.is_empty() {
        let mass: f64 = active.iter().map(|(_, v)| v).sum();
        let saturated: Vec<usize> = active
            .iter()
            .enumerate()
            .filter(|(_, &(u, v))| cap_rbs(u) - rbs[u] <= pool * v / mass)
            .map(|(i, _)| i)
            .collect();
        if saturated.is_empty() {
            for &(u, v) in &active {
                rbs[u] += pool * v / mass;
            }
            return 0.0;
        }
        for &i in saturated.iter().rev() {
            let (u, _) = active.swap_remove(i);
            let need = cap_rbs(u) - rbs[u];
            rbs[u] += need;
            pool -= need;
        }
        pool = pool.max(0.0);
    }
    pool
}
