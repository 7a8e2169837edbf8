//! Load-aware logical handovers and per-cell quota allocation for sliced
//! multi-cell radio access networks, with a seeded simulator to compare the
//! approach against five reference schemes.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: cells, slices, UEs, channel state, distributions, quotas.
//! * [`channel`]: path loss, CQI mapping and trace playback.
//! * [`demand`]: per-slice demand ratios, total normalized demand (TND) per
//!   cell and slice objectives.
//! * [`lb`]: the multi-round, two-phase load balancer.
//! * [`quota`]: static and swap-based quota allocation.
//! * [`baselines`]: NoLB, NaiveLB, IsolatedLB, MORA and MORA++.
//! * [`sim`]: scenario generation, time loop, throughput and metrics.
//! * [`golden`]: the two-cell worked example used as a regression fixture.
//! * [`verify`]: randomized checks of the optimality properties.

pub mod baselines;
pub mod channel;
pub mod demand;
pub mod error;
pub mod golden;
pub mod lb;
pub mod model;
pub mod quota;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    validate_topology, AllocationScheme, Cell, CellId, ChannelState, Network, Point, Slice, SliceId, Ue, UeId,
    UserDistribution, Violation, ViolationCode,
};
