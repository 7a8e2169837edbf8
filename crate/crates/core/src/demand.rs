//! Demand ratios, normalized demand, total normalized demand (TND) and the
//! per-slice objectives they are derived from.
//!
//! A slice with parameter `epsilon` splits the RBs it holds at a cell among
//! its UEs in proportion to the effective weight `w / e^(1 - epsilon)`. The
//! share of the slice's total effective weight sitting at a cell is the
//! fraction of the global quota the slice wants there.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{CellId, ChannelState, Network, Slice, SliceId, Ue, UserDistribution};

/// Effective weight of a UE under its slice's objective.
pub fn effective_weight(ue: &Ue, slice: &Slice, cell: CellId, efficiency: f64) -> Result<f64> {
    if !(efficiency > 0.0) {
        return Err(Error::ZeroEfficiency { ue: ue.id, cell });
    }
    Ok(weight_factor(ue.weight, efficiency, slice.epsilon))
}

#[inline]
pub(crate) fn weight_factor(weight: f64, efficiency: f64, epsilon: f64) -> f64 {
    if epsilon == 1.0 {
        weight
    } else if epsilon == 0.0 {
        weight / efficiency
    } else {
        weight / efficiency.powf(1.0 - epsilon)
    }
}

/// Per-slice, per-cell demand with the derived per-cell load.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandState {
    slices: Vec<SliceId>,
    cells: Vec<CellId>,
    capacity: Vec<f64>,
    ratio: Vec<f64>,
    normalized: Vec<f64>,
    tnd: Vec<f64>,
}

impl DemandState {
    /// Builds a state from demand ratios (row-major slice by cell). Each row
    /// is expected to sum to 1.
    pub fn from_ratios(network: &Network, ratio: Vec<f64>) -> Self {
        let k = network.cells().len();
        assert_eq!(ratio.len(), k * network.slices().len(), "ratio matrix shape");
        let normalized = ratio
            .iter()
            .enumerate()
            .map(|(idx, d)| d * network.slices()[idx / k].global_quota_rbs)
            .collect();
        Self::assemble(network, ratio, normalized)
    }

    fn assemble(network: &Network, ratio: Vec<f64>, normalized: Vec<f64>) -> Self {
        let k = network.cells().len();
        let mut tnd = vec![0.0; k];
        for (idx, d) in normalized.iter().enumerate() {
            tnd[idx % k] += d;
        }
        DemandState {
            slices: network.slices().iter().map(|s| s.id).collect(),
            cells: network.cells().iter().map(|c| c.id).collect(),
            capacity: network.cells().iter().map(|c| c.capacity_rbs).collect(),
            ratio,
            normalized,
            tnd,
        }
    }

    pub fn slice_ids(&self) -> &[SliceId] {
        &self.slices
    }

    pub fn cell_ids(&self) -> &[CellId] {
        &self.cells
    }

    #[inline]
    pub fn ratio_at(&self, slice_idx: usize, cell_idx: usize) -> f64 {
        self.ratio[slice_idx * self.cells.len() + cell_idx]
    }

    /// Normalized demand `D` in RBs.
    #[inline]
    pub fn demand_at(&self, slice_idx: usize, cell_idx: usize) -> f64 {
        self.normalized[slice_idx * self.cells.len() + cell_idx]
    }

    pub fn demand_row(&self, slice_idx: usize) -> &[f64] {
        let k = self.cells.len();
        &self.normalized[slice_idx * k..(slice_idx + 1) * k]
    }

    pub fn demand_matrix(&self) -> &[f64] {
        &self.normalized
    }

    /// Total normalized demand of a cell, in RBs.
    #[inline]
    pub fn tnd_at(&self, cell_idx: usize) -> f64 {
        self.tnd[cell_idx]
    }

    pub fn tnd(&self) -> &[f64] {
        &self.tnd
    }

    #[inline]
    pub fn load_ratio_at(&self, cell_idx: usize) -> f64 {
        self.tnd[cell_idx] / self.capacity[cell_idx]
    }

    pub fn load_ratios(&self) -> Vec<f64> {
        (0..self.cells.len()).map(|c| self.load_ratio_at(c)).collect()
    }

    pub fn demand_ratio(&self, slice: SliceId, cell: CellId) -> Option<f64> {
        let (s, c) = self.locate(slice, cell)?;
        Some(self.ratio_at(s, c))
    }

    pub fn normalized_demand(&self, slice: SliceId, cell: CellId) -> Option<f64> {
        let (s, c) = self.locate(slice, cell)?;
        Some(self.demand_at(s, c))
    }

    pub fn load_ratio(&self, cell: CellId) -> Option<f64> {
        let c = self.cells.binary_search(&cell).ok()?;
        Some(self.load_ratio_at(c))
    }

    pub fn tnd_of(&self, cell: CellId) -> Option<f64> {
        let c = self.cells.binary_search(&cell).ok()?;
        Some(self.tnd[c])
    }

    fn locate(&self, slice: SliceId, cell: CellId) -> Option<(usize, usize)> {
        Some((
            self.slices.binary_search(&slice).ok()?,
            self.cells.binary_search(&cell).ok()?,
        ))
    }

    pub fn is_overloaded(&self, cell_idx: usize) -> bool {
        self.tnd[cell_idx] > self.capacity[cell_idx]
    }

    pub fn is_underloaded(&self, cell_idx: usize) -> bool {
        self.tnd[cell_idx] < self.capacity[cell_idx]
    }

    /// True when every cell's TND is within `rel_tol * R_k` of its capacity.
    pub fn is_fully_complementary(&self, rel_tol: f64) -> bool {
        self.tnd
            .iter()
            .zip(&self.capacity)
            .all(|(l, r)| (l - r).abs() <= rel_tol * r)
    }
}

/// Demand ratio of one slice at every cell.
pub fn demand_ratios(
    network: &Network,
    slice: SliceId,
    distribution: &UserDistribution,
    channel: &ChannelState,
) -> Result<BTreeMap<CellId, f64>> {
    let state = compute_demand_state(network, distribution, channel)?;
    let si = network
        .slice_index(slice)
        .ok_or_else(|| Error::Config(format!("unknown slice {slice}")))?;
    Ok(network
        .cells()
        .iter()
        .enumerate()
        .map(|(ci, c)| (c.id, state.ratio_at(si, ci)))
        .collect())
}

pub fn compute_demand_state(
    network: &Network,
    distribution: &UserDistribution,
    channel: &ChannelState,
) -> Result<DemandState> {
    let serving = distribution.to_indices(network)?;
    Ok(DemandTracker::new(network, channel, serving)?.to_state())
}

/// Value of a slice's objective for a given per-cell quota.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceObjective {
    /// Sum over UEs of effective weight times log throughput. For a WPF
    /// slice the effective weight is the UE weight.
    pub log_utility: f64,
    /// Minimum over UEs of throughput divided by weight.
    pub min_normalized_rate: f64,
}

impl SliceObjective {
    /// The quantity the slice maximizes: the minimum normalized rate for
    /// WDRF slices and the log utility otherwise.
    pub fn score(&self, epsilon: f64) -> f64 {
        if epsilon == 0.0 {
            self.min_normalized_rate
        } else {
            self.log_utility
        }
    }
}

/// Slice objective given the quota the slice holds at each cell (network
/// cell order).
pub fn slice_objective(
    network: &Network,
    slice: SliceId,
    distribution: &UserDistribution,
    channel: &ChannelState,
    quota: &[f64],
) -> Result<SliceObjective> {
    let si = network
        .slice_index(slice)
        .ok_or_else(|| Error::Config(format!("unknown slice {slice}")))?;
    let serving = distribution.to_indices(network)?;
    for &ui in network.members_of(si) {
        if !(channel.at(ui, serving[ui]) > 0.0) {
            return Err(Error::ZeroEfficiency {
                ue: network.ues()[ui].id,
                cell: network.cells()[serving[ui]].id,
            });
        }
    }
    Ok(objective_dense(network, channel, si, &serving, quota))
}

/// Objective of the slice at `si` for dense serving indices. Every member
/// must have positive efficiency at its serving cell.
pub(crate) fn objective_dense(
    network: &Network,
    channel: &ChannelState,
    si: usize,
    serving: &[usize],
    quota: &[f64],
) -> SliceObjective {
    let eps = network.slices()[si].epsilon;
    let members = network.members_of(si);
    let mut mass = vec![0.0; network.cells().len()];
    for &ui in members {
        let ci = serving[ui];
        mass[ci] += weight_factor(network.ues()[ui].weight, channel.at(ui, ci), eps);
    }
    let mut log_utility = 0.0;
    let mut min_rate = f64::INFINITY;
    for &ui in members {
        let ci = serving[ui];
        let w = network.ues()[ui].weight;
        let e = channel.at(ui, ci);
        let v = weight_factor(w, e, eps);
        let rate = quota[ci] * v / mass[ci] * e;
        log_utility += v * rate.ln();
        min_rate = min_rate.min(rate / w);
    }
    if members.is_empty() {
        min_rate = 0.0;
    }
    SliceObjective {
        log_utility,
        min_normalized_rate: min_rate,
    }
}

/// Demand bookkeeping for algorithms that move UEs one at a time.
///
/// Effective-weight masses are kept per (slice, cell). After a move the
/// moved UE's slice is re-summed from scratch, so no rounding drift
/// accumulates across long move sequences.
#[derive(Clone, Debug)]
pub(crate) struct DemandTracker<'a> {
    pub network: &'a Network,
    pub channel: &'a ChannelState,
    pub serving: Vec<usize>,
    mass: Vec<f64>,
    total: Vec<f64>,
    demand: Vec<f64>,
    tnd: Vec<f64>,
    capacity: Vec<f64>,
}

impl<'a> DemandTracker<'a> {
    pub fn new(network: &'a Network, channel: &'a ChannelState, serving: Vec<usize>) -> Result<Self> {
        let s = network.slices().len();
        let k = network.cells().len();
        for (si, slice) in network.slices().iter().enumerate() {
            if network.members_of(si).is_empty() {
                return Err(Error::EmptySlice(slice.id));
            }
        }
        for (ui, &ci) in serving.iter().enumerate() {
            if !(channel.at(ui, ci) > 0.0) {
                return Err(Error::ZeroEfficiency {
                    ue: network.ues()[ui].id,
                    cell: network.cells()[ci].id,
                });
            }
        }
        let mut t = DemandTracker {
            network,
            channel,
            serving,
            mass: vec![0.0; s * k],
            total: vec![0.0; s],
            demand: vec![0.0; s * k],
            tnd: vec![0.0; k],
            capacity: network.cells().iter().map(|c| c.capacity_rbs).collect(),
        };
        for si in 0..s {
            t.resum_slice(si);
        }
        t.refresh_tnd();
        Ok(t)
    }

    fn k(&self) -> usize {
        self.capacity.len()
    }

    fn resum_slice(&mut self, si: usize) {
        let k = self.k();
        let eps = self.network.slices()[si].epsilon;
        let row = &mut self.mass[si * k..(si + 1) * k];
        row.iter_mut().for_each(|m| *m = 0.0);
        for &ui in self.network.members_of(si) {
            let ci = self.serving[ui];
            row[ci] += weight_factor(self.network.ues()[ui].weight, self.channel.at(ui, ci), eps);
        }
        let total: f64 = row.iter().sum();
        self.total[si] = total;
        let quota = self.network.slices()[si].global_quota_rbs;
        for ci in 0..k {
            self.demand[si * k + ci] = self.mass[si * k + ci] * quota / total;
        }
    }

    fn refresh_tnd(&mut self) {
        let k = self.k();
        self.tnd.iter_mut().for_each(|l| *l = 0.0);
        for (idx, d) in self.demand.iter().enumerate() {
            self.tnd[idx % k] += d;
        }
    }

    /// Reassigns a UE and recomputes the demand of its slice and all TNDs.
    /// The target must cover the UE.
    pub fn move_ue(&mut self, ui: usize, to: usize) {
        debug_assert!(self.channel.at(ui, to) > 0.0);
        self.serving[ui] = to;
        if let Some(si) = self.network.slice_of(ui) {
            self.resum_slice(si);
        }
        self.refresh_tnd();
    }

    #[inline]
    pub fn load_ratio(&self, ci: usize) -> f64 {
        self.tnd[ci] / self.capacity[ci]
    }

    #[inline]
    pub fn demand_at(&self, si: usize, ci: usize) -> f64 {
        self.demand[si * self.k() + ci]
    }

    /// Quota each cell could grant the slice if every cell scaled all
    /// demands down to its capacity.
    pub fn capacity_scaled_quota(&self, si: usize) -> Vec<f64> {
        (0..self.k())
            .map(|ci| {
                let scale = if self.tnd[ci] > self.capacity[ci] {
                    self.capacity[ci] / self.tnd[ci]
                } else {
                    1.0
                };
                self.demand_at(si, ci) * scale
            })
            .collect()
    }

    pub fn slice_score(&self, si: usize, quota: &[f64]) -> f64 {
        objective_dense(self.network, self.channel, si, &self.serving, quota).score(self.network.slices()[si].epsilon)
    }

    pub fn to_state(&self) -> DemandState {
        let k = self.k();
        let ratio = self
            .mass
            .iter()
            .enumerate()
            .map(|(idx, m)| m / self.total[idx / k])
            .collect();
        DemandState::assemble(self.network, ratio, self.demand.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cell, Point, UeId};
    use std::collections::BTreeSet;

    fn cell(id: u32, cap: f64) -> Cell {
        Cell {
            id: CellId(id),
            capacity_rbs: cap,
            position: Point::ORIGIN,
            tx_power_dbm: 35.0,
            bandwidth_mhz: 20.0,
            is_macro: false,
            band_id: id,
        }
    }

    fn slice(id: u32, quota: f64, eps: f64) -> Slice {
        Slice {
            id: SliceId(id),
            global_quota_rbs: quota,
            epsilon: eps,
            members: BTreeSet::new(),
        }
    }

    fn ue(id: u32, s: u32, w: f64) -> Ue {
        Ue {
            id: UeId(id),
            slice: SliceId(s),
            weight: w,
            position: Point::ORIGIN,
            velocity: Point::ORIGIN,
            is_mobile: false,
        }
    }

    #[test]
    fn effective_weight_examples() {
        let u = ue(0, 0, 1.0);
        assert_eq!(effective_weight(&u, &slice(0, 1.0, 1.0), CellId(0), 4.0).unwrap(), 1.0);
        assert_eq!(effective_weight(&u, &slice(0, 1.0, 0.0), CellId(0), 4.0).unwrap(), 0.25);
        let u2 = ue(0, 0, 2.0);
        assert_eq!(effective_weight(&u2, &slice(0, 1.0, 0.5), CellId(0), 4.0).unwrap(), 1.0);
        assert!(matches!(
            effective_weight(&u, &slice(0, 1.0, 1.0), CellId(3), 0.0),
            Err(Error::ZeroEfficiency { .. })
        ));
    }

    /// Two cells, one PF slice with 12/8 UEs and one rate-fair slice with
    /// 5 good UEs at the first cell and 3 poor ones at the second.
    fn two_cell() -> (Network, ChannelState, UserDistribution) {
        let t = 5.0;
        let mut ues = Vec::new();
        let mut eff = Vec::new();
        let mut serving = BTreeMap::new();
        for i in 0..8u32 {
            ues.push(ue(i, 0, 1.0));
            let at1 = i < 5;
            eff.push(if at1 { [t, 0.0] } else { [0.0, t / 5.0] });
            serving.insert(UeId(i), CellId(if at1 { 1 } else { 2 }));
        }
        for i in 0..20u32 {
            ues.push(ue(100 + i, 1, 1.0));
            let at1 = i < 12;
            eff.push(if at1 { [t, 0.0] } else { [0.0, t] });
            serving.insert(UeId(100 + i), CellId(if at1 { 1 } else { 2 }));
        }
        let net = Network::with_derived_members(
            vec![cell(1, 100.0), cell(2, 100.0)],
            vec![slice(0, 100.0, 0.0), slice(1, 100.0, 1.0)],
            ues,
        );
        let ch = ChannelState::from_efficiency(&net, |u, c| eff[u][c]);
        (net, ch, UserDistribution::new(serving))
    }

    #[test]
    fn ratios_and_tnd_of_two_cell_example() {
        let (net, ch, dist) = two_cell();
        let pf = demand_ratios(&net, SliceId(1), &dist, &ch).unwrap();
        assert!((pf[&CellId(1)] - 0.6).abs() < 1e-12);
        assert!((pf[&CellId(2)] - 0.4).abs() < 1e-12);
        let drf = demand_ratios(&net, SliceId(0), &dist, &ch).unwrap();
        assert!((drf[&CellId(1)] - 0.25).abs() < 1e-12);
        assert!((drf[&CellId(2)] - 0.75).abs() < 1e-12);
        let st = compute_demand_state(&net, &dist, &ch).unwrap();
        assert!((st.tnd_at(0) - 85.0).abs() < 1e-9);
        assert!((st.tnd_at(1) - 115.0).abs() < 1e-9);
        assert!(st.is_underloaded(0) && st.is_overloaded(1));
        assert!((st.load_ratio(CellId(2)).unwrap() - 1.15).abs() < 1e-12);
    }

    #[test]
    fn drf_objective_at_desired_quota() {
        let (net, ch, dist) = two_cell();
        let obj = slice_objective(&net, SliceId(0), &dist, &ch, &[25.0, 75.0]).unwrap();
        // every UE gets 0.05 * R * T = 25 bits per interval
        assert!((obj.min_normalized_rate - 25.0).abs() < 1e-9);
        // closed form Q / sum(w/e) = 100 / (5/5 + 3/1)
        assert!((obj.score(0.0) - 100.0 / 4.0).abs() < 1e-9);
    }

    #[test]
    fn zero_quota_with_members() {
        let (net, ch, dist) = two_cell();
        let pf = slice_objective(&net, SliceId(1), &dist, &ch, &[100.0, 0.0]).unwrap();
        assert_eq!(pf.log_utility, f64::NEG_INFINITY);
        let drf = slice_objective(&net, SliceId(0), &dist, &ch, &[100.0, 0.0]).unwrap();
        assert_eq!(drf.min_normalized_rate, 0.0);
    }

    #[test]
    fn single_ue_pf_objective() {
        let net = Network::with_derived_members(vec![cell(0, 10.0)], vec![slice(0, 10.0, 1.0)], vec![ue(0, 0, 2.0)]);
        let ch = ChannelState::from_efficiency(&net, |_, _| 3.0);
        let dist = UserDistribution::new([(UeId(0), CellId(0))].into());
        let obj = slice_objective(&net, SliceId(0), &dist, &ch, &[10.0]).unwrap();
        assert!((obj.log_utility - 2.0 * 30f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn all_at_one_cell() {
        let (net, ch, _) = two_cell();
        let ch2 = ChannelState::from_efficiency(&net, |u, _| ch.row(u).iter().cloned().fold(0.0, f64::max));
        let dist = UserDistribution::new(net.ues().iter().map(|u| (u.id, CellId(2))).collect());
        let r = demand_ratios(&net, SliceId(1), &dist, &ch2).unwrap();
        assert_eq!(r[&CellId(1)], 0.0);
        assert_eq!(r[&CellId(2)], 1.0);
    }

    #[test]
    fn empty_slice_and_missing_coverage() {
        let net = Network::with_derived_members(
            vec![cell(0, 10.0)],
            vec![slice(0, 5.0, 1.0), slice(1, 5.0, 1.0)],
            vec![ue(0, 0, 1.0)],
        );
        let ch = ChannelState::from_efficiency(&net, |_, _| 1.0);
        let dist = UserDistribution::new([(UeId(0), CellId(0))].into());
        assert!(matches!(
            compute_demand_state(&net, &dist, &ch),
            Err(Error::EmptySlice(SliceId(1)))
        ));
    }

    #[test]
    fn tracker_move_matches_fresh_computation() {
        let (net, _, dist) = two_cell();
        let ch = ChannelState::from_efficiency(&net, |_, _| 2.0);
        let serving = dist.to_indices(&net).unwrap();
        let mut tr = DemandTracker::new(&net, &ch, serving.clone()).unwrap();
        tr.move_ue(10, 1);
        tr.move_ue(3, 1);
        let mut moved = serving;
        moved[10] = 1;
        moved[3] = 1;
        let fresh = DemandTracker::new(&net, &ch, moved).unwrap();
        assert_eq!(tr.to_state(), fresh.to_state());
    }
}
