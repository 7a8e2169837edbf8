//! Domain types shared by the demand model, the load balancer, the quota
//! allocator and the simulator.
//!
//! All quantities of radio resource are real-valued resource blocks (RBs)
//! per control interval. Values are immutable once built; algorithms build
//! new values instead of mutating shared ones.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(CellId, "C");
id_type!(SliceId, "S");
id_type!(UeId, "u");

/// Relative tolerance of the allocation sum constraints.
pub const ALLOCATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    /// RBs available per control interval.
    pub capacity_rbs: f64,
    pub position: Point,
    pub tx_power_dbm: f64,
    pub bandwidth_mhz: f64,
    pub is_macro: bool,
    /// Cells on different bands never interfere.
    pub band_id: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub id: SliceId,
    /// Network-wide quota, summed over all cells.
    pub global_quota_rbs: f64,
    /// Objective parameter: 1 is weighted proportional fairness, 0 is
    /// weighted datarate fairness.
    pub epsilon: f64,
    pub members: BTreeSet<UeId>,
}

impl Slice {
    pub fn is_wpf(&self) -> bool {
        self.epsilon == 1.0
    }

    pub fn is_wdrf(&self) -> bool {
        self.epsilon == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ue {
    pub id: UeId,
    pub slice: SliceId,
    pub weight: f64,
    pub position: Point,
    /// Meters per second.
    pub velocity: Point,
    pub is_mobile: bool,
}

/// Cells, slices and UEs of one scenario, each sorted by id.
///
/// Algorithms address entities by their position in these vectors; the
/// `*_index` lookups translate ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    cells: Vec<Cell>,
    slices: Vec<Slice>,
    ues: Vec<Ue>,
    slice_of_ue: Vec<Option<usize>>,
    slice_members: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(mut cells: Vec<Cell>, mut slices: Vec<Slice>, mut ues: Vec<Ue>) -> Self {
        cells.sort_by_key(|c| c.id);
        slices.sort_by_key(|s| s.id);
        ues.sort_by_key(|u| u.id);
        let mut slice_members = vec![Vec::new(); slices.len()];
        let slice_of_ue = ues
            .iter()
            .enumerate()
            .map(|(ui, ue)| {
                let si = slices.binary_search_by_key(&ue.slice, |s| s.id).ok();
                if let Some(si) = si {
                    slice_members[si].push(ui);
                }
                si
            })
            .collect();
        Network {
            cells,
            slices,
            ues,
            slice_of_ue,
            slice_members,
        }
    }

    /// Builds slice membership from the UEs' `slice` fields.
    pub fn with_derived_members(cells: Vec<Cell>, mut slices: Vec<Slice>, ues: Vec<Ue>) -> Self {
        for slice in &mut slices {
            slice.members = ues.iter().filter(|u| u.slice == slice.id).map(|u| u.id).collect();
        }
        Network::new(cells, slices, ues)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn ues(&self) -> &[Ue] {
        &self.ues
    }

    pub fn cell_index(&self, id: CellId) -> Option<usize> {
        self.cells.binary_search_by_key(&id, |c| c.id).ok()
    }

    pub fn slice_index(&self, id: SliceId) -> Option<usize> {
        self.slices.binary_search_by_key(&id, |s| s.id).ok()
    }

    pub fn ue_index(&self, id: UeId) -> Option<usize> {
        self.ues.binary_search_by_key(&id, |u| u.id).ok()
    }

    pub fn cell(&self, id: CellId) -> Option<&Cell> {
        self.cell_index(id).map(|i| &self.cells[i])
    }

    pub fn slice(&self, id: SliceId) -> Option<&Slice> {
        self.slice_index(id).map(|i| &self.slices[i])
    }

    pub fn ue(&self, id: UeId) -> Option<&Ue> {
        self.ue_index(id).map(|i| &self.ues[i])
    }

    /// Slice position of the UE at position `ue_idx`, if its slice exists.
    pub fn slice_of(&self, ue_idx: usize) -> Option<usize> {
        self.slice_of_ue[ue_idx]
    }

    /// UE positions belonging to the slice at position `slice_idx`, ascending id.
    pub fn members_of(&self, slice_idx: usize) -> &[usize] {
        &self.slice_members[slice_idx]
    }

    pub fn total_capacity(&self) -> f64 {
        self.cells.iter().map(|c| c.capacity_rbs).sum()
    }

    pub fn macro_index(&self) -> Option<usize> {
        self.cells.iter().position(|c| c.is_macro)
    }

    /// Same network with updated UE records (positions, velocities).
    pub fn with_ues(&self, ues: Vec<Ue>) -> Self {
        Network::new(self.cells.clone(), self.slices.clone(), ues)
    }
}

/// Deliverable bits per RB for every (UE, cell) pair, plus the wideband
/// channel measure in dB used by the invocation trigger.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelState {
    ues: Vec<UeId>,
    cells: Vec<CellId>,
    efficiency: Vec<f64>,
    quality_db: Vec<f64>,
}

impl ChannelState {
    /// Builds a channel aligned with `network`'s UE and cell order.
    ///
    /// The closure returns `(efficiency, quality_db)` for a (UE, cell) index pair.
    pub fn from_fn(network: &Network, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let n_cells = network.cells().len();
        let n_ues = network.ues().len();
        let mut efficiency = Vec::with_capacity(n_ues * n_cells);
        let mut quality_db = Vec::with_capacity(n_ues * n_cells);
        for ui in 0..n_ues {
            for ci in 0..n_cells {
                let (e, q) = f(ui, ci);
                efficiency.push(e);
                quality_db.push(q);
            }
        }
        ChannelState {
            ues: network.ues().iter().map(|u| u.id).collect(),
            cells: network.cells().iter().map(|c| c.id).collect(),
            efficiency,
            quality_db,
        }
    }

    /// Channel given only efficiencies; the quality measure is the
    /// efficiency expressed in dB.
    pub fn from_efficiency(network: &Network, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::from_fn(network, |u, c| {
            let e = f(u, c);
            (e, efficiency_db(e))
        })
    }

    pub fn ue_ids(&self) -> &[UeId] {
        &self.ues
    }

    pub fn cell_ids(&self) -> &[CellId] {
        &self.cells
    }

    #[inline]
    pub fn at(&self, ue_idx: usize, cell_idx: usize) -> f64 {
        self.efficiency[ue_idx * self.cells.len() + cell_idx]
    }

    #[inline]
    pub fn quality_at(&self, ue_idx: usize, cell_idx: usize) -> f64 {
        self.quality_db[ue_idx * self.cells.len() + cell_idx]
    }

    /// Efficiencies of one UE towards every cell.
    pub fn row(&self, ue_idx: usize) -> &[f64] {
        let k = self.cells.len();
        &self.efficiency[ue_idx * k..(ue_idx + 1) * k]
    }

    pub fn efficiency(&self, ue: UeId, cell: CellId) -> Option<f64> {
        let ui = self.ues.binary_search(&ue).ok()?;
        let ci = self.cells.binary_search(&cell).ok()?;
        Some(self.at(ui, ci))
    }

    pub fn quality_db(&self, ue: UeId, cell: CellId) -> Option<f64> {
        let ui = self.ues.binary_search(&ue).ok()?;
        let ci = self.cells.binary_search(&cell).ok()?;
        Some(self.quality_at(ui, ci))
    }

    pub fn is_aligned_with(&self, network: &Network) -> bool {
        self.ues.len() == network.ues().len()
            && self.cells.len() == network.cells().len()
            && self.ues.iter().zip(network.ues()).all(|(a, b)| *a == b.id)
            && self.cells.iter().zip(network.cells()).all(|(a, b)| *a == b.id)
    }

    /// Cell position with the highest efficiency for a UE; ties go to the
    /// lowest cell id. `None` if no cell covers the UE.
    pub fn best_cell(&self, ue_idx: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (ci, &e) in self.row(ue_idx).iter().enumerate() {
            if e > 0.0 && best.is_none_or(|(_, b)| e > b) {
                best = Some((ci, e));
            }
        }
        best.map(|(ci, _)| ci)
    }
}

pub(crate) fn efficiency_db(e: f64) -> f64 {
    if e > 0.0 {
        10.0 * e.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Serving cell of every UE.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserDistribution {
    pub serving: BTreeMap<UeId, CellId>,
}

impl UserDistribution {
    pub fn new(serving: BTreeMap<UeId, CellId>) -> Self {
        UserDistribution { serving }
    }

    pub fn get(&self, ue: UeId) -> Option<CellId> {
        self.serving.get(&ue).copied()
    }

    pub fn len(&self) -> usize {
        self.serving.len()
    }

    pub fn is_empty(&self) -> bool {
        self.serving.is_empty()
    }

    /// Dense serving-cell vector in network order.
    pub(crate) fn to_indices(&self, network: &Network) -> Result<Vec<usize>> {
        network
            .ues()
            .iter()
            .map(|ue| {
                self.get(ue.id)
                    .and_then(|c| network.cell_index(c))
                    .ok_or(Error::UnreachableUe(ue.id))
            })
            .collect()
    }

    pub(crate) fn from_indices(network: &Network, serving: &[usize]) -> Self {
        UserDistribution {
            serving: network
                .ues()
                .iter()
                .zip(serving)
                .map(|(ue, &ci)| (ue.id, network.cells()[ci].id))
                .collect(),
        }
    }

    pub fn count_at(&self, cell: CellId) -> usize {
        self.serving.values().filter(|&&c| c == cell).count()
    }
}

/// Per-slice per-cell quotas.
///
/// Construction checks both sum constraints: every slice receives its
/// global quota and every cell hands out exactly its capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationScheme {
    slices: Vec<SliceId>,
    cells: Vec<CellId>,
    quota: Vec<f64>,
}

impl AllocationScheme {
    /// `quota` is row-major, slice by cell, in network order.
    pub fn new(network: &Network, quota: Vec<f64>) -> Result<Self> {
        let k = network.cells().len();
        assert_eq!(quota.len(), k * network.slices().len(), "quota matrix shape");
        for (si, slice) in network.slices().iter().enumerate() {
            let actual: f64 = quota[si * k..(si + 1) * k].iter().sum();
            check_sum("slice quota", slice.id.to_string(), actual, slice.global_quota_rbs)?;
        }
        for (ci, cell) in network.cells().iter().enumerate() {
            let actual: f64 = (0..network.slices().len()).map(|si| quota[si * k + ci]).sum();
            check_sum("cell capacity", cell.id.to_string(), actual, cell.capacity_rbs)?;
        }
        if let Some(q) = quota.iter().find(|q| !q.is_finite() || **q < 0.0) {
            return Err(Error::InvalidAllocation {
                constraint: "non-negative quota",
                at: "matrix".into(),
                actual: *q,
                expected: 0.0,
            });
        }
        Ok(AllocationScheme {
            slices: network.slices().iter().map(|s| s.id).collect(),
            cells: network.cells().iter().map(|c| c.id).collect(),
            quota,
        })
    }

    #[inline]
    pub fn at(&self, slice_idx: usize, cell_idx: usize) -> f64 {
        self.quota[slice_idx * self.cells.len() + cell_idx]
    }

    pub fn get(&self, slice: SliceId, cell: CellId) -> Option<f64> {
        let si = self.slices.binary_search(&slice).ok()?;
        let ci = self.cells.binary_search(&cell).ok()?;
        Some(self.at(si, ci))
    }

    /// Quotas of one slice, in cell order.
    pub fn slice_row(&self, slice_idx: usize) -> &[f64] {
        let k = self.cells.len();
        &self.quota[slice_idx * k..(slice_idx + 1) * k]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.quota
    }

    pub fn slice_ids(&self) -> &[SliceId] {
        &self.slices
    }

    pub fn cell_ids(&self) -> &[CellId] {
        &self.cells
    }
}

fn check_sum(constraint: &'static str, at: String, actual: f64, expected: f64) -> Result<()> {
    let scale = expected.abs().max(1.0);
    if (actual - expected).abs() > ALLOCATION_TOLERANCE * scale {
        return Err(Error::InvalidAllocation {
            constraint,
            at,
            actual,
            expected,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    NonPositiveCapacity,
    DuplicateCellId,
    DuplicateSliceId,
    DuplicateUeId,
    NonPositiveQuota,
    QuotaCapacityMismatch,
    EpsilonOutOfRange,
    OverlappingMembership,
    MembershipMismatch,
    UnknownSlice,
    NonPositiveWeight,
    ChannelMisaligned,
    InvalidEfficiency,
    UnreachableUE,
    InvalidParameter,
    MissingTraceManifest,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

/// Checks every structural invariant of a scenario. An empty list means the
/// network and channel are usable by the algorithms.
pub fn validate_topology(network: &Network, channel: &ChannelState) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, detail: String| out.push(Violation { code, detail });

    for pair in network.cells().windows(2) {
        if pair[0].id == pair[1].id {
            push(ViolationCode::DuplicateCellId, format!("{}", pair[0].id));
        }
    }
    for pair in network.slices().windows(2) {
        if pair[0].id == pair[1].id {
            push(ViolationCode::DuplicateSliceId, format!("{}", pair[0].id));
        }
    }
    for pair in network.ues().windows(2) {
        if pair[0].id == pair[1].id {
            push(ViolationCode::DuplicateUeId, format!("{}", pair[0].id));
        }
    }
    for cell in network.cells() {
        if !(cell.capacity_rbs > 0.0) {
            push(
                ViolationCode::NonPositiveCapacity,
                format!("{} has capacity {}", cell.id, cell.capacity_rbs),
            );
        }
    }

    let mut seen: BTreeMap<UeId, SliceId> = BTreeMap::new();
    for slice in network.slices() {
        if !(slice.global_quota_rbs > 0.0) {
            push(
                ViolationCode::NonPositiveQuota,
                format!("{} has quota {}", slice.id, slice.global_quota_rbs),
            );
        }
        if !(0.0..=1.0).contains(&slice.epsilon) {
            push(
                ViolationCode::EpsilonOutOfRange,
                format!("{} has epsilon {}", slice.id, slice.epsilon),
            );
        }
        for &member in &slice.members {
            if let Some(prev) = seen.insert(member, slice.id) {
                push(
                    ViolationCode::OverlappingMembership,
                    format!("{member} is in both {prev} and {}", slice.id),
                );
            }
            match network.ue(member) {
                Some(ue) if ue.slice == slice.id => {}
                _ => push(
                    ViolationCode::MembershipMismatch,
                    format!("{} lists {member} which does not belong to it", slice.id),
                ),
            }
        }
    }

    let capacity = network.total_capacity();
    let quota: f64 = network.slices().iter().map(|s| s.global_quota_rbs).sum();
    if (quota - capacity).abs() > ALLOCATION_TOLERANCE * capacity.abs().max(1.0) {
        push(
            ViolationCode::QuotaCapacityMismatch,
            format!("slice quotas sum to {quota} but cells provide {capacity}"),
        );
    }

    for ue in network.ues() {
        if !(ue.weight > 0.0) {
            push(
                ViolationCode::NonPositiveWeight,
                format!("{} has weight {}", ue.id, ue.weight),
            );
        }
        match network.slice(ue.slice) {
            None => push(
                ViolationCode::UnknownSlice,
                format!("{} refers to unknown slice {}", ue.id, ue.slice),
            ),
            Some(slice) if !slice.members.contains(&ue.id) => push(
                ViolationCode::MembershipMismatch,
                format!("{} is not listed by {}", ue.id, ue.slice),
            ),
            Some(_) => {}
        }
    }

    if !channel.is_aligned_with(network) {
        push(
            ViolationCode::ChannelMisaligned,
            "channel state does not match the network's UEs and cells".into(),
        );
        return out;
    }
    for (ui, ue) in network.ues().iter().enumerate() {
        let row = channel.row(ui);
        if let Some((ci, e)) = row.iter().enumerate().find(|(_, e)| !e.is_finite() || **e < 0.0) {
            push(
                ViolationCode::InvalidEfficiency,
                format!("{} has efficiency {e} at {}", ue.id, network.cells()[ci].id),
            );
        } else if row.iter().all(|&e| e <= 0.0) {
            push(ViolationCode::UnreachableUE, format!("{} has no covering cell", ue.id));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn cell(id: u32, capacity: f64) -> Cell {
        Cell {
            id: CellId(id),
            capacity_rbs: capacity,
            position: Point::ORIGIN,
            tx_power_dbm: 35.0,
            bandwidth_mhz: 20.0,
            is_macro: false,
            band_id: id,
        }
    }

    fn slice(id: u32, quota: f64) -> Slice {
        Slice {
            id: SliceId(id),
            global_quota_rbs: quota,
            epsilon: 1.0,
            members: BTreeSet::new(),
        }
    }

    fn ue(id: u32, slice: u32) -> Ue {
        Ue {
            id: UeId(id),
            slice: SliceId(slice),
            weight: 1.0,
            position: Point::ORIGIN,
            velocity: Point::ORIGIN,
            is_mobile: false,
        }
    }

    fn codes(v: &[Violation]) -> Vec<ViolationCode> {
        v.iter().map(|v| v.code).collect()
    }

    #[test]
    fn balanced_topology_is_valid() {
        let net = Network::with_derived_members(
            vec![cell(0, 100.0), cell(1, 100.0)],
            vec![slice(0, 100.0), slice(1, 100.0)],
            vec![ue(0, 0), ue(1, 1)],
        );
        let ch = ChannelState::from_efficiency(&net, |_, _| 1.0);
        assert!(validate_topology(&net, &ch).is_empty());
    }

    #[test]
    fn quota_mismatch_is_reported() {
        let net = Network::with_derived_members(
            vec![cell(0, 100.0), cell(1, 100.0)],
            vec![slice(0, 100.0), slice(1, 150.0)],
            vec![ue(0, 0), ue(1, 1)],
        );
        let ch = ChannelState::from_efficiency(&net, |_, _| 1.0);
        assert_eq!(
            codes(&validate_topology(&net, &ch)),
            vec![ViolationCode::QuotaCapacityMismatch]
        );
    }

    #[test]
    fn uncovered_ue_is_reported() {
        let net = Network::with_derived_members(
            vec![cell(0, 100.0), cell(1, 100.0)],
            vec![slice(0, 100.0), slice(1, 100.0)],
            vec![ue(0, 0), ue(1, 1)],
        );
        let ch = ChannelState::from_efficiency(&net, |u, _| if u == 1 { 0.0 } else { 2.0 });
        assert_eq!(codes(&validate_topology(&net, &ch)), vec![ViolationCode::UnreachableUE]);
    }

    #[test]
    fn membership_and_duplicates() {
        let mut s0 = slice(0, 100.0);
        s0.members.insert(UeId(1));
        let net = Network::new(
            vec![cell(0, 100.0), cell(0, 100.0)],
            vec![s0, slice(1, 100.0)],
            vec![ue(0, 0), ue(1, 1)],
        );
        let ch = ChannelState::from_efficiency(&net, |_, _| 1.0);
        let found = codes(&validate_topology(&net, &ch));
        assert!(found.contains(&ViolationCode::DuplicateCellId));
        assert!(found.contains(&ViolationCode::MembershipMismatch));
    }

    #[test]
    fn validation_is_pure() {
        let net = Network::with_derived_members(vec![cell(0, -1.0)], vec![slice(0, 100.0)], vec![ue(0, 3)]);
        let ch = ChannelState::from_efficiency(&net, |_, _| f64::NAN);
        assert_eq!(validate_topology(&net, &ch), validate_topology(&net, &ch));
    }

    #[test]
    fn allocation_rejects_bad_sums() {
        let net = Network::with_derived_members(
            vec![cell(0, 100.0), cell(1, 100.0)],
            vec![slice(0, 100.0), slice(1, 100.0)],
            vec![ue(0, 0), ue(1, 1)],
        );
        assert!(AllocationScheme::new(&net, vec![50.0, 50.0, 50.0, 50.0]).is_ok());
        assert!(AllocationScheme::new(&net, vec![60.0, 50.0, 40.0, 50.0]).is_err());
        assert!(AllocationScheme::new(&net, vec![60.0, 40.0, 50.0, 50.0]).is_err());
        assert!(AllocationScheme::new(&net, vec![110.0, -10.0, -10.0, 110.0]).is_err());
    }

    #[test]
    fn best_cell_prefers_lowest_id_on_ties() {
        let net = Network::with_derived_members(
            vec![cell(0, 100.0), cell(1, 100.0), cell(2, 100.0)],
            vec![slice(0, 300.0)],
            vec![ue(0, 0)],
        );
        let ch = ChannelState::from_efficiency(&net, |_, c| [1.0, 3.0, 3.0][c]);
        assert_eq!(ch.best_cell(0), Some(1));
    }
}
