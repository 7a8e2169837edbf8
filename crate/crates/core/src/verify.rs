//! Randomized property suites for the demand model, the load balancer and
//! the quota allocator.
//!
//! Every suite draws small instances from a seeded generator and checks one
//! optimality or isolation property against an exhaustive oracle. The first
//! failing instance is returned in a serializable form so it can be replayed.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{compute_demand_state, objective_dense, DemandState};
use crate::lb::{run_load_balancer, LbConfig};
use crate::model::{
    AllocationScheme, Cell, CellId, ChannelState, Network, Point, Slice, SliceId, Ue, UeId, UserDistribution,
};
use crate::quota::{allocate, static_matrix};

/// Relative slack for floating-point comparisons.
pub const TOLERANCE: f64 = 1e-9;

/// Grid resolution of the quota-split search, as a fraction of the slice quota.
pub const GRID_STEP: f64 = 0.01;

/// Plain-data description of a network, channel and assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub capacities: Vec<f64>,
    pub quotas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub ues: Vec<InstanceUe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceUe {
    pub slice: usize,
    pub weight: f64,
    /// Efficiency at every cell; zero where the cell does not cover the UE.
    pub efficiency: Vec<f64>,
    pub serving: usize,
}

impl Instance {
    pub fn network(&self) -> Network {
        let cells = self
            .capacities
            .iter()
            .enumerate()
            .map(|(i, &r)| Cell {
                id: CellId(i as u32),
                capacity_rbs: r,
                position: Point::ORIGIN,
                tx_power_dbm: 35.0,
                bandwidth_mhz: 20.0,
                is_macro: false,
                band_id: i as u32,
            })
            .collect();
        let slices = self
            .quotas
            .iter()
            .zip(&self.epsilons)
            .enumerate()
            .map(|(i, (&q, &eps))| Slice {
                id: SliceId(i as u32),
                global_quota_rbs: q,
                epsilon: eps,
                members: BTreeSet::new(),
            })
            .collect();
        let ues = self
            .ues
            .iter()
            .enumerate()
            .map(|(i, u)| Ue {
                id: UeId(i as u32),
                slice: SliceId(u.slice as u32),
                weight: u.weight,
                position: Point::ORIGIN,
                velocity: Point::ORIGIN,
                is_mobile: false,
            })
            .collect();
        Network::with_derived_members(cells, slices, ues)
    }

    pub fn channel(&self, network: &Network) -> ChannelState {
        ChannelState::from_efficiency(network, |ui, ci| self.ues[ui].efficiency[ci])
    }

    pub fn serving(&self) -> Vec<usize> {
        self.ues.iter().map(|u| u.serving).collect()
    }

    pub fn distribution(&self, network: &Network) -> UserDistribution {
        UserDistribution::from_indices(network, &self.serving())
    }
}

/// A failing instance with the reason it failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub suite: String,
    pub trial: usize,
    pub reason: String,
    pub instance: Instance,
}

impl Counterexample {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("counterexample serializes")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub trials: usize,
    pub failure: Option<Counterexample>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Quotas for a demand state, row-major slice by cell. Not required to be
/// valid; the isolation suite checks that.
pub type Allocator = fn(&Network, &DemandState) -> Vec<f64>;

pub fn swap_allocator(network: &Network, demand: &DemandState) -> Vec<f64> {
    allocate(network, demand).matrix().to_vec()
}

/// Moves quota away from demand between the first two slices and cells.
/// Keeps both sums intact, so only the isolation checks can catch it.
pub fn inverted_allocator(network: &Network, demand: &DemandState) -> Vec<f64> {
    let k = network.cells().len();
    let mut q = static_matrix(network);
    if network.slices().len() < 2 || k < 2 {
        return q;
    }
    let dir = if demand.demand_at(0, 0) >= q[0] { -1.0 } else { 1.0 };
    let delta = 0.5 * [q[0], q[1], q[k], q[k + 1]].into_iter().fold(f64::INFINITY, f64::min);
    q[0] += dir * delta;
    q[1] -= dir * delta;
    q[k] -= dir * delta;
    q[k + 1] += dir * delta;
    q
}

fn suite_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

fn score(network: &Network, channel: &ChannelState, si: usize, serving: &[usize], quota: &[f64]) -> f64 {
    objective_dense(network, channel, si, serving, quota).score(network.slices()[si].epsilon)
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= TOLERANCE * scale.abs().max(1.0)
}

/// Random instance with every UE covered by its serving cell and slice
/// quotas summing to total capacity.
fn random_instance(rng: &mut ChaCha8Rng, max_cells: usize, max_slices: usize, max_ues: usize) -> Instance {
    let k = rng.random_range(2..=max_cells);
    let s = rng.random_range(1..=max_slices);
    let capacities: Vec<f64> = (0..k).map(|_| rng.random_range(20.0..200.0)).collect();
    let total: f64 = capacities.iter().sum();
    let shares: Vec<f64> = (0..s).map(|_| rng.random_range(0.2..1.0)).collect();
    let share_sum: f64 = shares.iter().sum();
    let quotas = shares.iter().map(|x| total * x / share_sum).collect();
    let epsilons = (0..s).map(|_| pick(rng, &[0.0, 0.5, 1.0])).collect();
    let mut ues = Vec::new();
    for si in 0..s {
        for _ in 0..rng.random_range(1..=max_ues) {
            let serving = rng.random_range(0..k);
            let efficiency = (0..k)
                .map(|ci| {
                    if ci == serving || rng.random_bool(0.6) {
                        rng.random_range(0.2..6.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            ues.push(InstanceUe {
                slice: si,
                weight: pick(rng, &[1.0, 1.0, 2.0, 5.0]),
                efficiency,
                serving,
            });
        }
    }
    Instance {
        capacities,
        quotas,
        epsilons,
        ues,
    }
}

/// Every split of `total` over `parts` cells at the given step.
fn grid_splits(total: f64, parts: usize, steps: usize, mut visit: impl FnMut(&[f64])) {
    fn rec(i: usize, left: usize, steps: usize, total: f64, cur: &mut Vec<f64>, visit: &mut dyn FnMut(&[f64])) {
        if i + 1 == cur.len() {
            cur[i] = total * left as f64 / steps as f64;
            visit(cur);
            return;
        }
        for take in 0..=left {
            cur[i] = total * take as f64 / steps as f64;
            rec(i + 1, left - take, steps, total, cur, visit);
        }
    }
    let mut cur = vec![0.0; parts];
    rec(0, steps, steps, total, &mut cur, &mut visit);
}

/// Quota equal to demand is the best split of a slice's quota over cells:
/// no point of a fine grid of splits does better.
pub fn demand_split_optimality(trials: usize, seed: u64) -> SuiteReport {
    let suite = "demand-split optimality";
    let mut rng = suite_rng(seed, 1);
    let steps = (1.0 / GRID_STEP).round() as usize;
    for trial in 0..trials {
        let inst = random_instance(&mut rng, 3, 3, 6);
        let network = inst.network();
        let channel = inst.channel(&network);
        let serving = inst.serving();
        let demand = match compute_demand_state(&network, &inst.distribution(&network), &channel) {
            Ok(d) => d,
            Err(e) => return fail(suite, trial, e.to_string(), inst),
        };
        for si in 0..network.slices().len() {
            let at_demand = score(&network, &channel, si, &serving, demand.demand_row(si));
            let mut best = f64::NEG_INFINITY;
            grid_splits(inst.quotas[si], inst.capacities.len(), steps, |q| {
                best = best.max(score(&network, &channel, si, &serving, q));
            });
            if best > at_demand + TOLERANCE * at_demand.abs().max(1.0) {
                return fail(
                    suite,
                    trial,
                    format!("slice {si}: grid split scores {best}, demand split {at_demand}"),
                    inst,
                );
            }
        }
    }
    pass(suite, trials)
}

/// Instance where every UE carries the same demand, some UEs are pinned to
/// one cell and the rest hear every cell equally well. Capacities are the
/// loads of a Latin-square arrangement, so a balanced assignment exists.
fn balanced_instance(rng: &mut ChaCha8Rng) -> Instance {
    const QUANTUM: f64 = 10.0;
    loop {
        let k = rng.random_range(2..=3);
        let s = rng.random_range(2..=3);
        let total = rng.random_range(s.max(k)..=8);
        let mut sizes = vec![1; s];
        for _ in s..total {
            sizes[rng.random_range(0..s)] += 1;
        }
        let mut capacities = vec![0.0; k];
        let mut ues = Vec::new();
        let epsilons: Vec<f64> = (0..s).map(|_| pick(rng, &[0.0, 0.5, 1.0])).collect();
        for (si, &n) in sizes.iter().enumerate() {
            let e = rng.random_range(1.0..6.0);
            for j in 0..n {
                let target = (si + j) % k;
                capacities[target] += QUANTUM;
                let pinned = rng.random_bool(0.4);
                let efficiency = (0..k).map(|ci| if pinned && ci != target { 0.0 } else { e }).collect();
                ues.push(InstanceUe {
                    slice: si,
                    weight: 1.0,
                    efficiency,
                    serving: if pinned { target } else { 0 },
                });
            }
        }
        if capacities.iter().any(|&r| r == 0.0) {
            continue;
        }
        return Instance {
            capacities,
            quotas: sizes.iter().map(|&n| QUANTUM * n as f64).collect(),
            epsilons,
            ues,
        };
    }
}

/// The balancer reaches equal load and capacity; quotas equal to demand are
/// then a valid allocation; and every slice does as well as under the best
/// of all assignments that keep UEs on a best-quality cell.
pub fn balanced_optimality(trials: usize, seed: u64) -> SuiteReport {
    let suite = "balanced-assignment optimality";
    let mut rng = suite_rng(seed, 2);
    let config = LbConfig {
        max_rounds: 50,
        ..LbConfig::overlapping()
    };
    for trial in 0..trials {
        let inst = balanced_instance(&mut rng);
        let network = inst.network();
        let channel = inst.channel(&network);
        let k = inst.capacities.len();
        let lb = match run_load_balancer(&inst.distribution(&network), &network, &channel, &config) {
            Ok(r) => r,
            Err(e) => return fail(suite, trial, e.to_string(), inst),
        };
        let demand = &lb.demand;
        if !lb.converged || !demand.is_fully_complementary(TOLERANCE) {
            return fail(suite, trial, format!("not balanced: loads {:?}", demand.tnd()), inst);
        }
        if let Err(e) = AllocationScheme::new(&network, demand.demand_matrix().to_vec()) {
            return fail(suite, trial, format!("demand is not a valid allocation: {e}"), inst);
        }
        let alloc = allocate(&network, demand);
        if let Some((i, _)) = alloc
            .matrix()
            .iter()
            .zip(demand.demand_matrix())
            .enumerate()
            .find(|(i, (q, d))| !close(**q, **d, inst.capacities[i % k]))
        {
            return fail(
                suite,
                trial,
                format!("allocator departs from demand at entry {i}"),
                inst,
            );
        }

        let serving = lb.distribution.to_indices(&network).expect("known UEs");
        let achieved: Vec<f64> = (0..network.slices().len())
            .map(|si| score(&network, &channel, si, &serving, alloc.slice_row(si)))
            .collect();
        let best = brute_force_best(&inst, &network, &channel);
        for (si, (&a, &b)) in achieved.iter().zip(&best).enumerate() {
            if a + TOLERANCE * b.abs().max(1.0) < b {
                return fail(
                    suite,
                    trial,
                    format!("slice {si}: balanced gives {a}, best assignment {b}"),
                    inst,
                );
            }
        }
    }
    pass(suite, trials)
}

/// Best score of each slice over every assignment of UEs to cells where
/// they have their best efficiency, each with the allocator's quotas.
fn brute_force_best(inst: &Instance, network: &Network, channel: &ChannelState) -> Vec<f64> {
    let options: Vec<Vec<usize>> = inst
        .ues
        .iter()
        .map(|u| {
            let top = u.efficiency.iter().cloned().fold(0.0, f64::max);
            (0..u.efficiency.len()).filter(|&c| u.efficiency[c] == top).collect()
        })
        .collect();
    let mut best = vec![f64::NEG_INFINITY; network.slices().len()];
    let mut pos = vec![0usize; options.len()];
    loop {
        let serving: Vec<usize> = pos.iter().zip(&options).map(|(&p, o)| o[p]).collect();
        let dist = UserDistribution::from_indices(network, &serving);
        let demand = compute_demand_state(network, &dist, channel).expect("covered");
        let alloc = allocate(network, &demand);
        for (si, b) in best.iter_mut().enumerate() {
            *b = b.max(score(network, channel, si, &serving, alloc.slice_row(si)));
        }
        // odometer over the option lists
        let mut i = 0;
        loop {
            if i == pos.len() {
                return best;
            }
            pos[i] += 1;
            if pos[i] < options[i].len() {
                break;
            }
            pos[i] = 0;
            i += 1;
        }
    }
}

/// The allocator keeps both sums, never moves a quota further from demand
/// than the static split is, and never leaves a slice worse off than the
/// static split.
pub fn swap_isolation(trials: usize, seed: u64, allocator: Allocator) -> SuiteReport {
    let suite = "swap isolation";
    let mut rng = suite_rng(seed, 3);
    for trial in 0..trials {
        let inst = random_instance(&mut rng, 4, 4, 5);
        let network = inst.network();
        let channel = inst.channel(&network);
        let serving = inst.serving();
        let demand = match compute_demand_state(&network, &inst.distribution(&network), &channel) {
            Ok(d) => d,
            Err(e) => return fail(suite, trial, e.to_string(), inst),
        };
        let k = inst.capacities.len();
        let q = allocator(&network, &demand);
        let fixed = static_matrix(&network);
        let mut problem = None;
        for (si, &quota) in inst.quotas.iter().enumerate() {
            let row = &q[si * k..(si + 1) * k];
            let sum: f64 = row.iter().sum();
            if !close(sum, quota, quota) {
                problem = Some(format!("slice {si} receives {sum}, quota {quota}"));
            }
            for ci in 0..k {
                let d = demand.demand_at(si, ci);
                let (now, before) = ((row[ci] - d).abs(), (fixed[si * k + ci] - d).abs());
                if row[ci] < 0.0 || now > before + TOLERANCE * inst.capacities[ci] {
                    problem = Some(format!("slice {si} cell {ci}: |Q-D| {now} exceeds static {before}"));
                }
            }
            let ours = score(&network, &channel, si, &serving, row);
            let theirs = score(&network, &channel, si, &serving, &fixed[si * k..(si + 1) * k]);
            if ours + TOLERANCE * theirs.abs().max(1.0) < theirs {
                problem = Some(format!("slice {si} scores {ours}, static {theirs}"));
            }
        }
        for (ci, &r) in inst.capacities.iter().enumerate() {
            let sum: f64 = (0..inst.quotas.len()).map(|si| q[si * k + ci]).sum();
            if !close(sum, r, r) {
                problem = Some(format!("cell {ci} hands out {sum}, capacity {r}"));
            }
        }
        if let Some(reason) = problem {
            return fail(suite, trial, reason, inst);
        }
    }
    pass(suite, trials)
}

/// All three suites with the same trial count and seed.
pub fn verify_all(trials: usize, seed: u64, allocator: Allocator) -> Vec<SuiteReport> {
    vec![
        demand_split_optimality(trials, seed),
        balanced_optimality(trials, seed),
        swap_isolation(trials, seed, allocator),
    ]
}

fn pass(suite: &'static str, trials: usize) -> SuiteReport {
    SuiteReport {
        suite,
        trials,
        failure: None,
    }
}

fn fail(suite: &'static str, trial: usize, reason: String, instance: Instance) -> SuiteReport {
    SuiteReport {
        suite,
        trials: trial + 1,
        failure: Some(Counterexample {
            suite: suite.to_string(),
            trial,
            reason,
            instance,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_every_split_once() {
        let mut n = 0;
        grid_splits(1.0, 3, 4, |q| {
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            n += 1;
        });
        assert_eq!(n, 15);
    }

    #[test]
    fn suites_pass_on_a_few_trials() {
        for r in verify_all(20, 3, swap_allocator) {
            assert!(r.passed(), "{:?}", r.failure.map(|f| f.to_json()));
        }
    }

    #[test]
    fn inverted_allocator_is_caught() {
        let r = swap_isolation(50, 1, inverted_allocator);
        let f = r.failure.expect("caught");
        let back: Counterexample = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }
}
