//! Multi-round logical handovers that equalize per-cell load measured in
//! total normalized demand (TND).
//!
//! Each round has two steps when a macrocell overlays the small cells:
//! overloaded small cells push UEs to the macrocell, then the macrocell
//! pushes UEs to underloaded small cells. When small cells overlap each
//! other directly, overloaded cells push straight to underloaded ones.
//!
//! Every transfer runs in two phases. The first moves amenable UEs, whose
//! efficiency at the target is at least `alpha` times that at the source,
//! regardless of slice. The second moves non-amenable UEs only when their
//! own slice's objective improves.

pub(crate) mod engine;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::demand::{DemandState, DemandTracker};
use crate::error::{Error, Result};
use crate::model::{CellId, ChannelState, Network, UeId, UserDistribution};

use engine::{Engine, LoadMetric};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyMode {
    /// Small cells only reach each other through a macrocell.
    #[default]
    MacroRelay,
    /// Small cells overlap and hand over directly.
    Overlapping,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbConfig {
    pub alpha: f64,
    pub max_rounds: u32,
    /// Load ratios within this distance are considered equal.
    pub load_eq_tolerance: f64,
    pub topology_mode: TopologyMode,
    pub enable_phase2: bool,
}

impl Default for LbConfig {
    fn default() -> Self {
        LbConfig {
            alpha: 0.8,
            max_rounds: 10,
            load_eq_tolerance: 1e-6,
            topology_mode: TopologyMode::MacroRelay,
            enable_phase2: true,
        }
    }
}

impl LbConfig {
    pub fn overlapping() -> Self {
        LbConfig {
            topology_mode: TopologyMode::Overlapping,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be positive".into()));
        }
        if !(self.load_eq_tolerance >= 0.0) {
            return Err(Error::Config("load_eq_tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Amenable,
    SliceSpecific,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    ToMacro,
    FromMacro,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The two load ratios met.
    LoadBalanced,
    /// No remaining UE qualified.
    ChannelLimited,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalMove {
    pub ue: UeId,
    pub from: CellId,
    pub to: CellId,
    pub phase: Phase,
    pub round: u32,
    pub step: Step,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbResult {
    pub distribution: UserDistribution,
    pub demand: DemandState,
    pub logical_moves: Vec<LogicalMove>,
    /// Every load ratio ended within tolerance of 1.
    pub converged: bool,
}

impl LbResult {
    /// Replays the logical moves on top of `initial`.
    pub fn replay(initial: &UserDistribution, moves: &[LogicalMove]) -> UserDistribution {
        let mut out = initial.clone();
        for m in moves {
            out.serving.insert(m.ue, m.to);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handover {
    pub ue: UeId,
    pub from: CellId,
    pub to: CellId,
}

/// Starting assignment for an invocation. UEs with a usable previous cell
/// that are not in `stale` keep it; everyone else goes to the cell with the
/// best efficiency, ties to the lowest cell id.
pub fn initialize_distribution(
    previous: Option<&UserDistribution>,
    stale: &BTreeSet<UeId>,
    network: &Network,
    channel: &ChannelState,
) -> Result<UserDistribution> {
    let serving = network
        .ues()
        .iter()
        .enumerate()
        .map(|(ui, ue)| {
            let kept = previous
                .filter(|_| !stale.contains(&ue.id))
                .and_then(|p| p.get(ue.id))
                .and_then(|c| network.cell_index(c))
                .filter(|&ci| channel.at(ui, ci) > 0.0);
            let ci = match kept {
                Some(ci) => ci,
                None => channel.best_cell(ui).ok_or(Error::UnreachableUe(ue.id))?,
            };
            Ok((ue.id, network.cells()[ci].id))
        })
        .collect::<Result<_>>()?;
    Ok(UserDistribution::new(serving))
}

/// Whether a UE keeps at least `alpha` of its efficiency when moving.
pub fn amenable(channel: &ChannelState, ue_idx: usize, from: usize, to: usize, alpha: f64) -> bool {
    let source = channel.at(ue_idx, from);
    let target = channel.at(ue_idx, to);
    source > 0.0 && target > 0.0 && target / source >= alpha
}

/// Result of a single pairwise transfer.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferOutcome {
    pub distribution: UserDistribution,
    pub demand: DemandState,
    pub moves: Vec<LogicalMove>,
    pub stop: StopReason,
}

/// Both phases of moving load from `overloaded` to `underloaded`.
pub fn transfer_between(
    network: &Network,
    channel: &ChannelState,
    distribution: &UserDistribution,
    overloaded: CellId,
    underloaded: CellId,
    config: &LbConfig,
) -> Result<TransferOutcome> {
    let over = network
        .cell_index(overloaded)
        .ok_or_else(|| Error::Config(format!("unknown cell {overloaded}")))?;
    let under = network
        .cell_index(underloaded)
        .ok_or_else(|| Error::Config(format!("unknown cell {underloaded}")))?;
    let tracker = DemandTracker::new(network, channel, distribution.to_indices(network)?)?;
    let mut engine = Engine::new(tracker, LoadMetric::Tnd, *config);
    let mut stop = StopReason::LoadBalanced;
    let phases: &[Phase] = if config.enable_phase2 {
        &[Phase::Amenable, Phase::SliceSpecific]
    } else {
        &[Phase::Amenable]
    };
    for &phase in phases {
        stop = engine.transfer(over, under, phase, Step::Direct).1;
        if stop == StopReason::LoadBalanced {
            break;
        }
    }
    Ok(TransferOutcome {
        distribution: UserDistribution::from_indices(network, &engine.tracker.serving),
        demand: engine.tracker.to_state(),
        moves: engine.moves,
        stop,
    })
}

/// Balances TND across cells starting from `initial`.
pub fn run_load_balancer(
    initial: &UserDistribution,
    network: &Network,
    channel: &ChannelState,
    config: &LbConfig,
) -> Result<LbResult> {
    let tracker = DemandTracker::new(network, channel, initial.to_indices(network)?)?;
    let mut engine = Engine::new(tracker, LoadMetric::Tnd, *config);
    engine.run(config.topology_mode);
    Ok(finish(engine))
}

pub(crate) fn finish(engine: Engine<'_>) -> LbResult {
    let network = engine.tracker.network;
    let demand = engine.tracker.to_state();
    let converged =
        (0..network.cells().len()).all(|ci| (demand.load_ratio_at(ci) - 1.0).abs() <= engine.config.load_eq_tolerance);
    LbResult {
        distribution: UserDistribution::from_indices(network, &engine.tracker.serving),
        demand,
        logical_moves: engine.moves,
        converged,
    }
}

/// UEs whose serving cell differs between two distributions.
pub fn diff_physical_handovers(previous: &UserDistribution, current: &UserDistribution) -> Result<Vec<Handover>> {
    if previous.len() != current.len() || previous.serving.keys().ne(current.serving.keys()) {
        return Err(Error::KeySetMismatch);
    }
    Ok(previous
        .serving
        .iter()
        .zip(current.serving.values())
        .filter(|((_, a), b)| a != b)
        .map(|((&ue, &from), &to)| Handover { ue, from, to })
        .collect())
}
