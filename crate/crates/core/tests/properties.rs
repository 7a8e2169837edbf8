//! Invariants that span modules, checked on random small networks.

use std::collections::BTreeSet;

use proptest::prelude::*;
use slicelb::baselines::{run_scheme, Scheme, SchemeConfig, SchemeInput};
use slicelb::demand::compute_demand_state;
use slicelb::lb::{initialize_distribution, LbConfig};
use slicelb::quota::{allocate, static_allocation};
use slicelb::{Cell, CellId, ChannelState, Network, Point, Slice, SliceId, Ue, UeId};

const TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
struct Spec {
    caps: Vec<f64>,
    with_macro: bool,
    shares: Vec<f64>,
    epsilons: Vec<f64>,
    /// (slice, weight, per-cell efficiency or 0)
    ues: Vec<(usize, f64, Vec<f64>)>,
}

impl Spec {
    fn build(&self, ue_order: &[usize]) -> (Network, ChannelState) {
        let total: f64 = self.caps.iter().sum();
        let share_sum: f64 = self.shares.iter().sum();
        let cells = self
            .caps
            .iter()
            .enumerate()
            .map(|(i, &c)| Cell {
                id: CellId(i as u32),
                capacity_rbs: c,
                position: Point::new(100.0 * i as f64, 0.0),
                tx_power_dbm: 35.0,
                bandwidth_mhz: 20.0,
                is_macro: self.with_macro && i == 0,
                band_id: i as u32,
            })
            .collect();
        let slices = self
            .shares
            .iter()
            .zip(&self.epsilons)
            .enumerate()
            .map(|(i, (sh, &eps))| Slice {
                id: SliceId(i as u32),
                global_quota_rbs: total * sh / share_sum,
                epsilon: eps,
                members: BTreeSet::new(),
            })
            .collect();
        let ues = ue_order
            .iter()
            .map(|&i| Ue {
                id: UeId(i as u32),
                slice: SliceId(self.ues[i].0 as u32),
                weight: self.ues[i].1,
                position: Point::ORIGIN,
                velocity: Point::ORIGIN,
                is_mobile: false,
            })
            .collect();
        let network = Network::with_derived_members(cells, slices, ues);
        // the network sorts UEs by id, so index i is UE i
        let channel = ChannelState::from_efficiency(&network, |u, c| self.ues[u].2[c]);
        (network, channel)
    }
}

fn spec() -> impl Strategy<Value = Spec> {
    (2usize..=4, 1usize..=3, 3usize..=10, any::<bool>()).prop_flat_map(|(k, s, n, with_macro)| {
        (
            prop::collection::vec(20.0..200.0f64, k),
            prop::collection::vec(0.1..1.0f64, s),
            prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64], s),
            prop::collection::vec(
                (
                    0..s,
                    prop_oneof![Just(1.0), 0.5..5.0f64],
                    prop::collection::vec(prop::option::weighted(0.7, 0.2..6.0f64), k),
                ),
                n,
            ),
        )
            .prop_map(move |(caps, shares, epsilons, raw)| {
                let ues = raw
                    .into_iter()
                    .enumerate()
                    .map(|(i, (si, w, eff))| {
                        // every slice gets a member and every UE a cell
                        let si = if i < s { i } else { si };
                        let mut eff: Vec<f64> = eff.into_iter().map(|e| e.unwrap_or(0.0)).collect();
                        if eff.iter().all(|&e| e == 0.0) {
                            eff[i % k] = 1.0;
                        }
                        (si, w, eff)
                    })
                    .collect();
                Spec {
                    caps,
                    with_macro,
                    shares,
                    epsilons,
                    ues,
                }
            })
    })
}

fn shuffled_spec() -> impl Strategy<Value = (Spec, Vec<usize>)> {
    spec().prop_flat_map(|s| {
        let order: Vec<usize> = (0..s.ues.len()).collect();
        (Just(s), Just(order).prop_shuffle())
    })
}

fn config(spec: &Spec) -> SchemeConfig {
    SchemeConfig {
        lb: if spec.with_macro {
            LbConfig::default()
        } else {
            LbConfig::overlapping()
        },
        ..SchemeConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn every_scheme_emits_a_valid_allocation(spec in spec()) {
        let order: Vec<usize> = (0..spec.ues.len()).collect();
        let (net, ch) = spec.build(&order);
        let all: BTreeSet<UeId> = net.ues().iter().map(|u| u.id).collect();
        let input = SchemeInput::fresh(&net, &ch, &all);
        let total = net.total_capacity();
        for scheme in Scheme::ALL {
            let r = run_scheme(scheme, &input, &config(&spec)).unwrap();
            let q = &r.allocation;
            for (si, slice) in net.slices().iter().enumerate() {
                let row: f64 = q.slice_row(si).iter().sum();
                prop_assert!((row - slice.global_quota_rbs).abs() <= TOL * total, "{scheme}: slice {si}");
            }
            for (ci, cell) in net.cells().iter().enumerate() {
                let col: f64 = (0..net.slices().len()).map(|si| q.at(si, ci)).sum();
                prop_assert!((col - cell.capacity_rbs).abs() <= TOL * total, "{scheme}: cell {ci}");
            }
            prop_assert!(q.matrix().iter().all(|&x| x >= 0.0));
            for (ue, cell) in &r.lb.distribution.serving {
                let (ui, ci) = (net.ue_index(*ue).unwrap(), net.cell_index(*cell).unwrap());
                prop_assert!(ch.at(ui, ci) > 0.0, "{scheme} put {ue} where it has no signal");
            }
        }
    }

    #[test]
    fn nolb_and_isolatedlb_contracts(spec in spec()) {
        let order: Vec<usize> = (0..spec.ues.len()).collect();
        let (net, ch) = spec.build(&order);
        let all: BTreeSet<UeId> = net.ues().iter().map(|u| u.id).collect();
        let input = SchemeInput::fresh(&net, &ch, &all);

        let nolb = run_scheme(Scheme::NoLb, &input, &config(&spec)).unwrap();
        for (ue, cell) in &nolb.lb.distribution.serving {
            let ui = net.ue_index(*ue).unwrap();
            let best = ch.row(ui).iter().cloned().fold(0.0, f64::max);
            prop_assert_eq!(ch.at(ui, net.cell_index(*cell).unwrap()), best);
        }

        let iso = run_scheme(Scheme::IsolatedLb, &input, &config(&spec)).unwrap();
        let fixed = static_allocation(&net);
        prop_assert_eq!(iso.allocation.matrix(), fixed.matrix());
        for m in &iso.lb.logical_moves {
            prop_assert!(m.from != m.to);
        }
    }

    #[test]
    fn demand_conserves_quota_and_ignores_ue_order((spec, shuffled) in shuffled_spec()) {
        let order: Vec<usize> = (0..spec.ues.len()).collect();
        let (net, ch) = spec.build(&order);
        let (net2, ch2) = spec.build(&shuffled);
        let all: BTreeSet<UeId> = net.ues().iter().map(|u| u.id).collect();
        let dist = initialize_distribution(None, &all, &net, &ch).unwrap();
        let st = compute_demand_state(&net, &dist, &ch).unwrap();
        let st2 = compute_demand_state(&net2, &dist, &ch2).unwrap();
        prop_assert_eq!(&st, &st2);

        let k = net.cells().len();
        for si in 0..net.slices().len() {
            let ratio_sum: f64 = (0..k).map(|ci| st.ratio_at(si, ci)).sum();
            prop_assert!((ratio_sum - 1.0).abs() <= TOL);
        }
        let tnd: f64 = st.tnd().iter().sum();
        prop_assert!((tnd - net.total_capacity()).abs() <= TOL * net.total_capacity());
    }

    #[test]
    fn allocation_is_no_worse_than_static(spec in spec()) {
        let order: Vec<usize> = (0..spec.ues.len()).collect();
        let (net, ch) = spec.build(&order);
        let all: BTreeSet<UeId> = net.ues().iter().map(|u| u.id).collect();
        let dist = initialize_distribution(None, &all, &net, &ch).unwrap();
        let st = compute_demand_state(&net, &dist, &ch).unwrap();
        let q = allocate(&net, &st);
        let fixed = static_allocation(&net);
        for si in 0..net.slices().len() {
            for ci in 0..net.cells().len() {
                let d = st.demand_at(si, ci);
                prop_assert!((q.at(si, ci) - d).abs() <= (fixed.at(si, ci) - d).abs() + TOL * net.total_capacity());
            }
        }
    }
}
