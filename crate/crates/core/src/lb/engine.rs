//! The round/step/phase machinery shared by the load balancer and the
//! baselines built from it. Only the load metric and the phase-2 objective
//! context differ between them.

use crate::demand::DemandTracker;
use crate::model::{Network, ALLOCATION_TOLERANCE};

use super::{LbConfig, LogicalMove, Phase, Step, StopReason, TopologyMode};

#[derive(Clone, Debug)]
pub(crate) enum LoadMetric {
    /// TND over capacity.
    Tnd,
    /// Attached UEs, scaled so that a perfectly proportional split has
    /// ratio 1 at every cell.
    UserCount { counts: Vec<f64>, scale: Vec<f64> },
    /// One slice's demand against its fixed per-cell quota. Only the
    /// slice's own UEs may move.
    SliceDemand { slice: usize, quota: Vec<f64> },
}

impl LoadMetric {
    pub fn user_count(network: &Network, serving: &[usize]) -> Self {
        let k = network.cells().len();
        let mut counts = vec![0.0; k];
        for &ci in serving {
            counts[ci] += 1.0;
        }
        let total_cap = network.total_capacity();
        let n = serving.len().max(1) as f64;
        let scale = network
            .cells()
            .iter()
            .map(|c| total_cap / (c.capacity_rbs * n))
            .collect();
        LoadMetric::UserCount { counts, scale }
    }
}

pub(crate) struct Engine<'a> {
    pub tracker: DemandTracker<'a>,
    pub metric: LoadMetric,
    pub config: LbConfig,
    pub moves: Vec<LogicalMove>,
    round: u32,
}

impl<'a> Engine<'a> {
    pub fn new(tracker: DemandTracker<'a>, metric: LoadMetric, config: LbConfig) -> Self {
        Engine {
            tracker,
            metric,
            config,
            moves: Vec::new(),
            round: 1,
        }
    }

    fn network(&self) -> &'a Network {
        self.tracker.network
    }

    pub fn load_ratio(&self, ci: usize) -> f64 {
        match &self.metric {
            LoadMetric::Tnd => self.tracker.load_ratio(ci),
            LoadMetric::UserCount { counts, scale } => counts[ci] * scale[ci],
            LoadMetric::SliceDemand { slice, quota } => self.tracker.demand_at(*slice, ci) / quota[ci],
        }
    }

    fn eligible(&self, ui: usize) -> bool {
        match &self.metric {
            LoadMetric::SliceDemand { slice, .. } => self.network().slice_of(ui) == Some(*slice),
            _ => true,
        }
    }

    fn apply(&mut self, ui: usize, to: usize) {
        let from = self.tracker.serving[ui];
        if let LoadMetric::UserCount { counts, .. } = &mut self.metric {
            counts[from] -= 1.0;
            counts[to] += 1.0;
        }
        self.tracker.move_ue(ui, to);
    }

    fn phase2_score(&self, si: usize) -> f64 {
        match &self.metric {
            LoadMetric::SliceDemand { quota, .. } => self.tracker.slice_score(si, quota),
            _ => {
                let quota = self.tracker.capacity_scaled_quota(si);
                self.tracker.slice_score(si, &quota)
            }
        }
    }

    fn is_balanced(&self, ci: usize) -> bool {
        (self.load_ratio(ci) - 1.0).abs() <= self.config.load_eq_tolerance
    }

    pub fn all_balanced(&self) -> bool {
        (0..self.network().cells().len()).all(|ci| self.is_balanced(ci))
    }

    fn overloaded(&self, ci: usize) -> bool {
        self.load_ratio(ci) > 1.0 + self.config.load_eq_tolerance
    }

    fn underloaded(&self, ci: usize) -> bool {
        self.load_ratio(ci) < 1.0 - self.config.load_eq_tolerance
    }

    /// Cells satisfying `pred`, sorted by load ratio (descending when
    /// `desc`), ties by cell position.
    fn sorted_cells(&self, pred: impl Fn(usize) -> bool, desc: bool) -> Vec<usize> {
        let mut cells: Vec<usize> = (0..self.network().cells().len()).filter(|&c| pred(c)).collect();
        cells.sort_by(|&a, &b| {
            let ord = self.load_ratio(a).total_cmp(&self.load_ratio(b));
            let ord = if desc { ord.reverse() } else { ord };
            ord.then(a.cmp(&b))
        });
        cells
    }

    fn phases(&self) -> &'static [Phase] {
        if self.config.enable_phase2 {
            &[Phase::Amenable, Phase::SliceSpecific]
        } else {
            &[Phase::Amenable]
        }
    }

    /// Moves UEs from `over` to `under` in one phase until the two load
    /// ratios meet or no candidate qualifies.
    pub fn transfer(&mut self, over: usize, under: usize, phase: Phase, step: Step) -> (usize, StopReason) {
        let tol = self.config.load_eq_tolerance;
        if self.load_ratio(over) - self.load_ratio(under) <= tol {
            return (0, StopReason::LoadBalanced);
        }
        let channel = self.tracker.channel;
        let alpha = self.config.alpha;
        let mut candidates: Vec<(usize, f64)> = (0..self.network().ues().len())
            .filter(|&ui| self.tracker.serving[ui] == over && self.eligible(ui))
            .filter_map(|ui| {
                let target = channel.at(ui, under);
                if !(target > 0.0) {
                    return None;
                }
                let ratio = target / channel.at(ui, over);
                let amenable = ratio >= alpha;
                (amenable == (phase == Phase::Amenable)).then_some((ui, ratio))
            })
            .collect();
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut moved = 0;
        for (ui, _) in candidates {
            let gap = self.load_ratio(over) - self.load_ratio(under);
            if gap <= tol {
                return (moved, StopReason::LoadBalanced);
            }
            let si = self.network().slice_of(ui);
            let before = match (phase, si) {
                (Phase::SliceSpecific, Some(si)) => Some(self.phase2_score(si)),
                _ => None,
            };
            self.apply(ui, under);
            let new_gap = self.load_ratio(over) - self.load_ratio(under);
            let mut accept = -new_gap <= gap;
            if accept {
                if let (Some(before), Some(si)) = (before, si) {
                    accept = strictly_improves(before, self.phase2_score(si));
                }
            }
            if !accept {
                self.apply(ui, over);
                continue;
            }
            let net = self.network();
            self.moves.push(LogicalMove {
                ue: net.ues()[ui].id,
                from: net.cells()[over].id,
                to: net.cells()[under].id,
                phase,
                round: self.round,
                step,
            });
            moved += 1;
        }
        let stop = if self.load_ratio(over) - self.load_ratio(under) <= tol {
            StopReason::LoadBalanced
        } else {
            StopReason::ChannelLimited
        };
        (moved, stop)
    }

    /// Runs rounds until balanced, stalled or out of rounds.
    pub fn run(&mut self, mode: TopologyMode) {
        let macro_idx = self.network().macro_index();
        for round in 1..=self.config.max_rounds {
            self.round = round;
            if self.all_balanced() {
                return;
            }
            let moved = match (mode, macro_idx) {
                (TopologyMode::MacroRelay, Some(m)) => self.relay_round(m),
                _ => self.direct_round(),
            };
            if moved == 0 {
                return;
            }
        }
    }

    fn relay_round(&mut self, m: usize) -> usize {
        let mut moved = 0;
        for src in self.sorted_cells(|c| c != m && self.overloaded(c), true) {
            for &phase in self.phases() {
                moved += self.transfer(src, m, phase, Step::ToMacro).0;
            }
        }
        for dst in self.sorted_cells(|c| c != m && self.underloaded(c), false) {
            for &phase in self.phases() {
                moved += self.transfer(m, dst, phase, Step::FromMacro).0;
            }
        }
        moved
    }

    fn direct_round(&mut self) -> usize {
        let mut moved = 0;
        for src in self.sorted_cells(|c| self.overloaded(c), true) {
            for &phase in self.phases() {
                for dst in self.sorted_cells(|c| c != src && self.underloaded(c), false) {
                    moved += self.transfer(src, dst, phase, Step::Direct).0;
                }
            }
        }
        moved
    }
}

pub(crate) fn strictly_improves(before: f64, after: f64) -> bool {
    if before.is_infinite() || after.is_infinite() {
        return after > before;
    }
    after - before > ALLOCATION_TOLERANCE * before.abs()
}
