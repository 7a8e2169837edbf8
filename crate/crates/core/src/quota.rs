//! Per-cell quota allocation.
//!
//! When every cell's TND equals its capacity, each slice simply receives its
//! normalized demand. Otherwise the allocator starts from the static split
//! (quota proportional to capacity) and repeatedly swaps RBs between two
//! slices with complementary surpluses and deficits at two cells. A swap
//! only ever moves quotas towards demand, so no slice ends up further from
//! its demand than it was under the static split.

use serde::{Deserialize, Serialize};

use crate::demand::DemandState;
use crate::model::{AllocationScheme, Network};

/// Relative TND mismatch below which a distribution counts as fully
/// complementary.
pub const COMPLEMENTARY_TOLERANCE: f64 = 1e-6;

/// Swaps smaller than this fraction of the smaller cell's capacity are
/// treated as zero.
pub const MIN_SWAP_FRACTION: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapOrder {
    /// Take the lowest-id slice pair that has any swap, and its largest swap.
    #[default]
    FirstPairMaxDelta,
    /// Take the largest swap over all slice pairs.
    GlobalMaxDelta,
}

/// Quota proportional to cell capacity.
pub fn static_allocation(network: &Network) -> AllocationScheme {
    AllocationScheme::new(network, static_matrix(network))
        .expect("static split satisfies both sums when quotas match capacity")
}

pub(crate) fn static_matrix(network: &Network) -> Vec<f64> {
    let total = network.total_capacity();
    network
        .slices()
        .iter()
        .flat_map(|s| {
            network
                .cells()
                .iter()
                .map(move |c| s.global_quota_rbs * c.capacity_rbs / total)
        })
        .collect()
}

pub fn allocate(network: &Network, demand: &DemandState) -> AllocationScheme {
    allocate_with(network, demand, SwapOrder::default())
}

pub fn allocate_with(network: &Network, demand: &DemandState, order: SwapOrder) -> AllocationScheme {
    let quota = if demand.is_fully_complementary(COMPLEMENTARY_TOLERANCE) {
        balance(network, demand.demand_matrix().to_vec())
    } else {
        swap_matrix(network, demand, order)
    };
    AllocationScheme::new(network, quota).expect("allocator preserves both sum constraints")
}

/// Runs the swap procedure from the static split regardless of whether the
/// demand is complementary.
pub fn swap_allocation(network: &Network, demand: &DemandState, order: SwapOrder) -> AllocationScheme {
    AllocationScheme::new(network, swap_matrix(network, demand, order)).expect("swaps preserve both sum constraints")
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Swap {
    a: usize,
    b: usize,
    c1: usize,
    c2: usize,
    delta: f64,
}

fn swap_matrix(network: &Network, demand: &DemandState, order: SwapOrder) -> Vec<f64> {
    let s = network.slices().len();
    let k = network.cells().len();
    let mut q = static_matrix(network);
    let d = demand.demand_matrix();
    let cap: Vec<f64> = network.cells().iter().map(|c| c.capacity_rbs).collect();
    // Each swap settles at least one entry onto its demand, and settled
    // entries never move again.
    for _ in 0..=s * k {
        let Some(sw) = find_swap(&q, d, &cap, s, k, order) else {
            break;
        };
        apply_swap(&mut q, d, k, sw);
    }
    q
}

fn find_swap(q: &[f64], d: &[f64], cap: &[f64], s: usize, k: usize, order: SwapOrder) -> Option<Swap> {
    let diff = |i: usize, c: usize| q[i * k + c] - d[i * k + c];
    let mut best: Option<Swap> = None;
    for a in 0..s {
        for b in a + 1..s {
            for c1 in 0..k {
                for c2 in 0..k {
                    if c1 == c2 {
                        continue;
                    }
                    let (a1, a2, b1, b2) = (diff(a, c1), diff(a, c2), diff(b, c1), diff(b, c2));
                    if !(a1 > 0.0 && a2 < 0.0 && b1 < 0.0 && b2 > 0.0) {
                        continue;
                    }
                    let delta = a1.min(-a2).min(-b1).min(b2);
                    if delta < MIN_SWAP_FRACTION * cap[c1].min(cap[c2]) {
                        continue;
                    }
                    if best.is_none_or(|bst| delta > bst.delta) {
                        best = Some(Swap { a, b, c1, c2, delta });
                    }
                }
            }
            if best.is_some() && order == SwapOrder::FirstPairMaxDelta {
                return best;
            }
        }
    }
    best
}

fn apply_swap(q: &mut [f64], d: &[f64], k: usize, sw: Swap) {
    let Swap { a, b, c1, c2, delta } = sw;
    let idx = [
        (a * k + c1, -delta),
        (a * k + c2, delta),
        (b * k + c1, delta),
        (b * k + c2, -delta),
    ];
    for (i, step) in idx {
        q[i] += step;
        // Land exactly on demand when this entry set the swap size.
        if (q[i] - d[i]).abs() <= f64::EPSILON * d[i].abs().max(1.0) * 8.0 {
            q[i] = d[i];
        }
    }
}

/// Scales a nearly feasible matrix so that rows sum to the slice quotas and
/// columns to the cell capacities, by alternating proportional fitting.
fn balance(network: &Network, mut q: Vec<f64>) -> Vec<f64> {
    let s = network.slices().len();
    let k = network.cells().len();
    let quota: Vec<f64> = network.slices().iter().map(|x| x.global_quota_rbs).collect();
    let cap: Vec<f64> = network.cells().iter().map(|c| c.capacity_rbs).collect();
    for _ in 0..100 {
        for (ci, &r) in cap.iter().enumerate() {
            let col: f64 = (0..s).map(|si| q[si * k + ci]).sum();
            if col > 0.0 {
                (0..s).for_each(|si| q[si * k + ci] *= r / col);
            }
        }
        let mut worst: f64 = 0.0;
        for (si, &qi) in quota.iter().enumerate() {
            let row: f64 = q[si * k..(si + 1) * k].iter().sum();
            worst = worst.max((row - qi).abs() / qi.max(1.0));
            if row > 0.0 {
                q[si * k..(si + 1) * k].iter_mut().for_each(|x| *x *= qi / row);
            }
        }
        if worst < 1e-14 {
            break;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cell, CellId, Point, Slice, SliceId};
    use std::collections::BTreeSet;

    fn network(caps: &[f64], quotas: &[f64]) -> Network {
        let cells = caps
            .iter()
            .enumerate()
            .map(|(i, &c)| Cell {
                id: CellId(i as u32),
                capacity_rbs: c,
                position: Point::ORIGIN,
                tx_power_dbm: 35.0,
                bandwidth_mhz: 20.0,
                is_macro: i == 0,
                band_id: i as u32,
            })
            .collect();
        let slices = quotas
            .iter()
            .enumerate()
            .map(|(i, &q)| Slice {
                id: SliceId(i as u32),
                global_quota_rbs: q,
                epsilon: 1.0,
                members: BTreeSet::new(),
            })
            .collect();
        Network::new(cells, slices, vec![])
    }

    #[test]
    fn static_split_examples() {
        let net = network(&[100.0, 100.0], &[100.0, 100.0]);
        assert_eq!(static_allocation(&net).matrix(), &[50.0, 50.0, 50.0, 50.0]);
        let net = network(&[100.0, 20.0, 20.0, 20.0, 20.0], &[90.0, 90.0]);
        assert_eq!(static_allocation(&net).slice_row(0), &[50.0, 10.0, 10.0, 10.0, 10.0]);
        let net = network(&[30.0, 70.0], &[100.0]);
        assert_eq!(static_allocation(&net).slice_row(0), &[30.0, 70.0]);
    }

    #[test]
    fn single_swap_of_two_cell_example() {
        let net = network(&[100.0, 100.0], &[100.0, 100.0]);
        let demand = DemandState::from_ratios(&net, vec![0.25, 0.75, 0.6, 0.4]);
        let q = allocate(&net, &demand);
        assert!((q.at(0, 0) - 40.0).abs() < 1e-9);
        assert!((q.at(0, 1) - 60.0).abs() < 1e-9);
        assert!((q.at(1, 0) - 60.0).abs() < 1e-9);
        assert!((q.at(1, 1) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn complementary_demand_is_granted() {
        let net = network(&[100.0, 100.0], &[100.0, 100.0]);
        let demand = DemandState::from_ratios(&net, vec![0.25, 0.75, 0.75, 0.25]);
        let q = allocate(&net, &demand);
        assert_eq!(q.matrix(), demand.demand_matrix());
    }

    #[test]
    fn nearly_complementary_demand_is_rebalanced_exactly() {
        let net = network(&[100.0, 50.0, 50.0], &[120.0, 80.0]);
        let demand = DemandState::from_ratios(&net, vec![0.5, 0.25 + 2e-7, 0.25 - 2e-7, 0.5, 0.25, 0.25]);
        let q = allocate(&net, &demand);
        for (a, b) in q.matrix().iter().zip(demand.demand_matrix()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn swaps_never_overshoot() {
        let net = network(&[100.0, 50.0, 50.0], &[100.0, 60.0, 40.0]);
        let demand = DemandState::from_ratios(&net, vec![0.1, 0.6, 0.3, 0.8, 0.1, 0.1, 0.2, 0.2, 0.6]);
        let st = static_allocation(&net);
        let q = allocate(&net, &demand);
        for i in 0..3 {
            for c in 0..3 {
                let d = demand.demand_at(i, c);
                assert!((q.at(i, c) - d).abs() <= (st.at(i, c) - d).abs() + 1e-9);
                assert!(q.at(i, c) >= 0.0);
            }
        }
    }

    mod oracle {
        use std::collections::BTreeSet;

        use num_rational::Ratio;
        use proptest::prelude::*;

        use super::*;

        type Q = Ratio<i64>;

        fn abs(x: Q) -> Q {
            if x < Q::from_integer(0) {
                -x
            } else {
                x
            }
        }

        /// Every state reachable by some sequence of eligible swaps that
        /// admits no further swap.
        fn terminal_states(q: Vec<Q>, d: &[Q], s: usize, k: usize) -> BTreeSet<Vec<Q>> {
            let mut seen = BTreeSet::new();
            let mut out = BTreeSet::new();
            let mut stack = vec![q];
            while let Some(q) = stack.pop() {
                if !seen.insert(q.clone()) {
                    continue;
                }
                let mut any = false;
                for a in 0..s {
                    for b in 0..s {
                        for c1 in 0..k {
                            for c2 in 0..k {
                                if a == b || c1 == c2 {
                                    continue;
                                }
                                let x = |i: usize, c: usize| q[i * k + c] - d[i * k + c];
                                let zero = Q::from_integer(0);
                                let (a1, a2, b1, b2) = (x(a, c1), x(a, c2), x(b, c1), x(b, c2));
                                if !(a1 > zero && a2 < zero && b1 < zero && b2 > zero) {
                                    continue;
                                }
                                let delta = a1.min(-a2).min(-b1).min(b2);
                                let mut next = q.clone();
                                next[a * k + c1] -= delta;
                                next[a * k + c2] += delta;
                                next[b * k + c1] += delta;
                                next[b * k + c2] -= delta;
                                stack.push(next);
                                any = true;
                            }
                        }
                    }
                }
                if !any {
                    out.insert(q);
                }
            }
            out
        }

        fn grid_instance() -> impl Strategy<Value = (Vec<i64>, Vec<i64>, Vec<[i64; 3]>)> {
            (
                prop::collection::vec(2i64..=10, 3),
                prop::collection::vec(1i64..=6, 3),
                prop::collection::vec([0i64..=4, 0i64..=4, 1i64..=4], 3),
            )
                .prop_map(|(caps, shares, weights)| {
                    let caps: Vec<i64> = caps.iter().map(|c| c * 10).collect();
                    let total: i64 = caps.iter().sum();
                    let share_sum: i64 = shares.iter().sum();
                    // integer quotas summing to the capacity total
                    let mut quotas: Vec<i64> = shares.iter().map(|x| total * x / share_sum).collect();
                    quotas[0] += total - quotas.iter().sum::<i64>();
                    (caps, quotas, weights)
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn three_by_three_matches_some_swap_sequence((caps, quotas, weights) in grid_instance()) {
                prop_assume!(quotas.iter().all(|&q| q > 0));
                let (s, k) = (3, 3);
                let total: i64 = caps.iter().sum();
                let ratio: Vec<Q> = weights
                    .iter()
                    .flat_map(|w| {
                        let sum: i64 = w.iter().sum();
                        w.iter().map(move |&x| Q::new(x, sum))
                    })
                    .collect();
                let d: Vec<Q> = (0..s * k).map(|j| ratio[j] * quotas[j / k]).collect();
                let st: Vec<Q> = (0..s * k).map(|j| Q::new(quotas[j / k] * caps[j % k], total)).collect();
                let finals = terminal_states(st.clone(), &d, s, k);
                prop_assert!(!finals.is_empty());

                let net = network(
                    &caps.iter().map(|&c| c as f64).collect::<Vec<_>>(),
                    &quotas.iter().map(|&q| q as f64).collect::<Vec<_>>(),
                );
                let demand = DemandState::from_ratios(&net, ratio.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect());
                let to_f = |r: &Q| *r.numer() as f64 / *r.denom() as f64;
                for order in [SwapOrder::FirstPairMaxDelta, SwapOrder::GlobalMaxDelta] {
                    let got = swap_allocation(&net, &demand, order);
                    let hit = finals.iter().any(|f| {
                        f.iter().zip(got.matrix()).all(|(a, b)| (to_f(a) - b).abs() <= 1e-9 * total as f64)
                    });
                    prop_assert!(hit, "{:?} not among {} terminal states", got.matrix(), finals.len());
                }
                for f in &finals {
                    for j in 0..s * k {
                        prop_assert!(abs(f[j] - d[j]) <= abs(st[j] - d[j]));
                        prop_assert!(f[j] >= Q::from_integer(0));
                    }
                    for i in 0..s {
                        prop_assert_eq!(f[i * k..(i + 1) * k].iter().sum::<Q>(), Q::from_integer(quotas[i]));
                    }
                    for c in 0..k {
                        prop_assert_eq!((0..s).map(|i| f[i * k + c]).sum::<Q>(), Q::from_integer(caps[c]));
                    }
                }
            }
        }
    }
}
