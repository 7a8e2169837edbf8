//! The load balancer and the reference schemes it is compared against,
//! behind one entry point.

mod mora;

pub use mora::{mora, mora_pp, MoraConfig};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::demand::{compute_demand_state, DemandTracker};
use crate::error::{Error, Result};
use crate::lb::engine::{Engine, LoadMetric};
use crate::lb::{finish, initialize_distribution, run_load_balancer, LbConfig, LbResult};
use crate::model::{AllocationScheme, ChannelState, Network, UeId, UserDistribution};
use crate::quota::{allocate_with, static_allocation, static_matrix, SwapOrder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[serde(rename = "radioweaver")]
    RadioWeaver,
    #[serde(rename = "nolb")]
    NoLb,
    #[serde(rename = "naivelb")]
    NaiveLb,
    #[serde(rename = "isolatedlb")]
    IsolatedLb,
    Mora,
    MoraPp,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::RadioWeaver,
        Scheme::NoLb,
        Scheme::NaiveLb,
        Scheme::IsolatedLb,
        Scheme::Mora,
        Scheme::MoraPp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::RadioWeaver => "radioweaver",
            Scheme::NoLb => "nolb",
            Scheme::NaiveLb => "naivelb",
            Scheme::IsolatedLb => "isolatedlb",
            Scheme::Mora => "mora",
            Scheme::MoraPp => "mora_pp",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == key || (key == "mora__" && *x == Scheme::MoraPp))
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

/// Tunables of every scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SchemeConfig {
    pub lb: LbConfig,
    pub mora: MoraConfig,
    pub swap_order: SwapOrder,
}

/// Final assignment and quotas chosen by a scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeResult {
    pub lb: LbResult,
    pub allocation: AllocationScheme,
}

/// What a scheme sees when invoked.
#[derive(Clone, Copy, Debug)]
pub struct SchemeInput<'a> {
    pub network: &'a Network,
    pub channel: &'a ChannelState,
    /// Assignment at the end of the previous invocation.
    pub previous: Option<&'a UserDistribution>,
    /// UEs whose channel changed enough to be re-placed from scratch.
    pub stale: &'a BTreeSet<UeId>,
}

impl<'a> SchemeInput<'a> {
    /// Fresh invocation with no history.
    pub fn fresh(network: &'a Network, channel: &'a ChannelState, stale: &'a BTreeSet<UeId>) -> Self {
        SchemeInput {
            network,
            channel,
            previous: None,
            stale,
        }
    }

    fn initial(&self) -> Result<UserDistribution> {
        initialize_distribution(self.previous, self.stale, self.network, self.channel)
    }
}

pub fn run_scheme(scheme: Scheme, input: &SchemeInput<'_>, config: &SchemeConfig) -> Result<SchemeResult> {
    match scheme {
        Scheme::RadioWeaver => radioweaver(&input.initial()?, input.network, input.channel, config),
        Scheme::NoLb => nolb(input.network, input.channel, config),
        Scheme::NaiveLb => naivelb(&input.initial()?, input.network, input.channel, config),
        Scheme::IsolatedLb => isolatedlb(&input.initial()?, input.network, input.channel, config),
        Scheme::Mora => mora(input, config),
        Scheme::MoraPp => mora_pp(input, config),
    }
}

pub fn radioweaver(
    initial: &UserDistribution,
    network: &Network,
    channel: &ChannelState,
    config: &SchemeConfig,
) -> Result<SchemeResult> {
    let lb = run_load_balancer(initial, network, channel, &config.lb)?;
    let allocation = allocate_with(network, &lb.demand, config.swap_order);
    Ok(SchemeResult { lb, allocation })
}

/// Every UE on its best cell, quotas from the swap allocator.
pub fn nolb(network: &Network, channel: &ChannelState, config: &SchemeConfig) -> Result<SchemeResult> {
    let all: BTreeSet<UeId> = network.ues().iter().map(|u| u.id).collect();
    let distribution = initialize_distribution(None, &all, network, channel)?;
    let demand = compute_demand_state(network, &distribution, channel)?;
    let allocation = allocate_with(network, &demand, config.swap_order);
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

/// The same rounds and phases, but load is the capacity-normalized number
/// of attached UEs. Only amenable UEs move.
pub fn naivelb(
    initial: &UserDistribution,
    network: &Network,
    channel: &ChannelState,
    config: &SchemeConfig,
) -> Result<SchemeResult> {
    let serving = initial.to_indices(network)?;
    let metric = LoadMetric::user_count(network, &serving);
    let tracker = DemandTracker::new(network, channel, serving)?;
    let lb_config = LbConfig {
        enable_phase2: false,
        ..config.lb
    };
    let mut engine = Engine::new(tracker, metric, lb_config);
    engine.run(lb_config.topology_mode);
    let lb = finish(engine);
    let allocation = allocate_with(network, &lb.demand, config.swap_order);
    Ok(SchemeResult { lb, allocation })
}

/// Each slice keeps its static quota everywhere and balances its own demand
/// against it using only its own UEs.
pub fn isolatedlb(
    initial: &UserDistribution,
    network: &Network,
    channel: &ChannelState,
    config: &SchemeConfig,
) -> Result<SchemeResult> {
    let k = network.cells().len();
    let fixed = static_matrix(network);
    let tracker = DemandTracker::new(network, channel, initial.to_indices(network)?)?;
    let mut engine = Engine::new(tracker, LoadMetric::Tnd, config.lb);
    for si in 0..network.slices().len() {
        engine.metric = LoadMetric::SliceDemand {
            slice: si,
            quota: fixed[si * k..(si + 1) * k].to_vec(),
        };
        engine.run(config.lb.topology_mode);
    }
    engine.metric = LoadMetric::Tnd;
    Ok(SchemeResult {
        lb: finish(engine),
        allocation: static_allocation(network),
    })
}
