//! Scenario construction, the control-interval loop, and seed sweeps.

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ChannelKind, ScenarioConfig, WorkloadConfig};
use super::metrics::{
    median, percentile, pf_improvement, relative_improvement, weighted_pf, LoadSample, MetricsBundle, SliceMetrics,
    UeMetrics,
};
use super::mobility::step_mobility;
use super::throughput::account_throughput;
use super::topology::{ensure_coverage, generate_topology, place_users, Topology};
use super::workload::{FlowRecord, WebSource};
use crate::baselines::{run_scheme, Scheme, SchemeConfig, SchemeInput};
use crate::channel::{load_manifest, ChannelModel};
use crate::error::{Error, Result};
use crate::lb::diff_physical_handovers;
use crate::model::{validate_topology, ChannelState, Network, UeId, UserDistribution};

/// Independent random streams of one run, so that changing the scheme never
/// changes placement, mobility or traffic.
#[derive(Clone, Copy)]
enum Stream {
    Topology = 1,
    Users = 2,
    Shadowing = 3,
    Traces = 4,
    Mobility = 5,
}

fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

/// Everything fixed before the time loop starts.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub topology: Topology,
    pub network: Network,
    pub channel: ChannelModel,
}

pub fn build_scenario(config: &ScenarioConfig, base_dir: &Path) -> Result<Scenario> {
    let topology = generate_topology(config, &mut rng(config.seed, Stream::Topology))?;
    let mut user_rng = rng(config.seed, Stream::Users);
    let (slices, ues) = place_users(config, &topology, &mut user_rng);
    let network = Network::new(topology.cells.clone(), slices, ues);
    let mut channel = ChannelModel::synthetic(
        config.channel.pathloss,
        &network,
        &mut rng(config.seed, Stream::Shadowing),
    );
    let network = ensure_coverage(&network, &topology, &channel, &mut user_rng);
    if config.channel.mode == ChannelKind::Trace {
        let path = config
            .channel
            .trace_manifest
            .as_ref()
            .ok_or_else(|| Error::Config("trace mode needs trace_manifest".into()))?;
        let traces = load_manifest(&base_dir.join(path))?;
        channel = channel.with_traces(&network, traces, &mut rng(config.seed, Stream::Traces))?;
    }
    let violations = validate_topology(&network, &channel.channel_at(0.0, &network));
    if !violations.is_empty() {
        let listed: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Config(listed.join("; ")));
    }
    Ok(Scenario {
        topology,
        network,
        channel,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub seed: u64,
    pub scheme: Scheme,
    pub config_hash: String,
    pub metrics: MetricsBundle,
}

impl ScenarioConfig {
    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            lb: self.lb,
            mora: self.mora,
            swap_order: self.swap_order,
        }
    }
}

/// Runs one scenario with the scheme named in the config.
pub fn run_experiment(config: &ScenarioConfig, base_dir: &Path) -> Result<RunOutput> {
    let scenario = build_scenario(config, base_dir)?;
    run_scenario(config, scenario)
}

fn run_scenario(config: &ScenarioConfig, scenario: Scenario) -> Result<RunOutput> {
    let Scenario {
        mut network,
        channel: model,
        ..
    } = scenario;
    let n = network.ues().len();
    let interval = config.control_interval_ms;
    let dt_s = interval as f64 / 1000.0;
    let scheme_config = config.scheme_config();
    let mut mobility_rng = rng(config.seed, Stream::Mobility);
    let web_seed = config.seed ^ 0x9E37_79B9_7F4A_7C15;
    let mut sources: Vec<Option<WebSource>> = network
        .ues()
        .iter()
        .map(|ue| match config.slices[ue.slice.0 as usize].workload {
            WorkloadConfig::Backlogged => None,
            WorkloadConfig::Web { mean_rate_bps } => Some(WebSource::new(ue.id, ue.slice, mean_rate_bps, web_seed)),
        })
        .collect();

    let mut flows: Vec<FlowRecord> = Vec::new();
    let mut distribution: Option<UserDistribution> = None;
    let mut allocation = None;
    let mut quality_at_invocation = vec![0.0; n];
    let mut handovers = vec![0u32; n];
    let mut bits = vec![0.0; n];
    let mut load_samples = Vec::new();
    let mut invocations = 0u32;

    let mut t = 0;
    while t < config.duration_ms {
        if t > 0 {
            network = step_mobility(&network, &model, dt_s, config.mobility.boundary_m, &mut mobility_rng);
        }
        let channel = model.channel_at(t as f64, &network);
        let stale = stale_ues(
            &network,
            &channel,
            distribution.as_ref(),
            &quality_at_invocation,
            config.trigger_db,
        )?;

        if !stale.is_empty() {
            let input = SchemeInput {
                network: &network,
                channel: &channel,
                previous: distribution.as_ref(),
                stale: &stale,
            };
            let result = run_scheme(config.scheme, &input, &scheme_config)?;
            invocations += 1;
            if let Some(prev) = &distribution {
                for h in diff_physical_handovers(prev, &result.lb.distribution)? {
                    handovers[network.ue_index(h.ue).expect("known UE")] += 1;
                }
            }
            for (ci, cell) in network.cells().iter().enumerate() {
                load_samples.push(LoadSample {
                    invocation: invocations,
                    time_ms: t,
                    cell: cell.id,
                    tnd_rbs: result.lb.demand.tnd_at(ci),
                    capacity_rbs: cell.capacity_rbs,
                    load_ratio: result.lb.demand.load_ratio_at(ci),
                });
            }
            let serving = result.lb.distribution.to_indices(&network)?;
            for (ui, q) in quality_at_invocation.iter_mut().enumerate() {
                *q = channel.quality_at(ui, serving[ui]);
            }
            distribution = Some(result.lb.distribution);
            allocation = Some(result.allocation);
        }

        let dist = distribution.as_ref().expect("first interval always invokes");
        let serving = dist.to_indices(&network)?;
        let need: Vec<Option<f64>> = sources
            .iter_mut()
            .map(|src| {
                src.as_mut().map(|s| {
                    s.admit_until(t as f64, &mut flows);
                    s.backlog_bits()
                })
            })
            .collect();
        let report = account_throughput(
            &network,
            &channel,
            &serving,
            allocation.as_ref().expect("set with distribution"),
            &need,
        );
        for (ui, b) in report.bits.iter().enumerate() {
            bits[ui] += b;
            if let Some(src) = sources[ui].as_mut() {
                src.deliver(*b, t as f64, interval as f64, &mut flows);
            }
        }
        t += interval;
    }

    let steps = config.duration_ms.div_ceil(interval);
    let seconds = (steps * interval) as f64 / 1000.0;
    let ues: Vec<UeMetrics> = network
        .ues()
        .iter()
        .enumerate()
        .map(|(ui, ue)| UeMetrics {
            ue: ue.id,
            slice: ue.slice,
            is_mobile: ue.is_mobile,
            handovers: handovers[ui],
            avg_bps: bits[ui] / seconds,
        })
        .collect();
    let slices = network
        .slices()
        .iter()
        .enumerate()
        .map(|(si, slice)| slice_metrics(&network, si, &ues, &flows, slice.epsilon))
        .collect();
    Ok(RunOutput {
        seed: config.seed,
        scheme: config.scheme,
        config_hash: config.hash()?,
        metrics: MetricsBundle {
            invocations,
            load_samples,
            slices,
            ues,
            flows,
        },
    })
}

/// UEs whose serving-cell channel moved by more than `trigger_db` since the
/// last invocation, or lost coverage. Everyone is stale before the first
/// invocation.
pub fn stale_ues(
    network: &Network,
    channel: &ChannelState,
    distribution: Option<&UserDistribution>,
    quality_at_invocation: &[f64],
    trigger_db: f64,
) -> Result<BTreeSet<UeId>> {
    let Some(dist) = distribution else {
        return Ok(network.ues().iter().map(|u| u.id).collect());
    };
    let serving = dist.to_indices(network)?;
    Ok(network
        .ues()
        .iter()
        .enumerate()
        .filter(|&(ui, _)| {
            let ci = serving[ui];
            channel.at(ui, ci) <= 0.0 || (channel.quality_at(ui, ci) - quality_at_invocation[ui]).abs() > trigger_db
        })
        .map(|(_, ue)| ue.id)
        .collect())
}

/// True iff some UE's serving-cell measure moved by more than `trigger_db`.
pub fn should_invoke(now_db: &[f64], at_last_invocation: &[f64], trigger_db: f64) -> bool {
    now_db.len() != at_last_invocation.len()
        || now_db
            .iter()
            .zip(at_last_invocation)
            .any(|(a, b)| (a - b).abs() > trigger_db)
}

fn slice_metrics(network: &Network, si: usize, ues: &[UeMetrics], flows: &[FlowRecord], epsilon: f64) -> SliceMetrics {
    let members = network.members_of(si);
    let rates: Vec<f64> = members.iter().map(|&ui| ues[ui].avg_bps).collect();
    let weights: Vec<f64> = members.iter().map(|&ui| network.ues()[ui].weight).collect();
    let slice_id = network.slices()[si].id;
    let fcts: Vec<f64> = flows
        .iter()
        .filter(|f| f.slice == slice_id)
        .filter_map(FlowRecord::fct_ms)
        .collect();
    SliceMetrics {
        slice: slice_id,
        epsilon,
        users: members.len(),
        weight_sum: weights.iter().sum(),
        weighted_pf: weighted_pf(weights.iter().copied().zip(rates.iter().copied())),
        p10_bps: percentile(&rates, 10.0),
        mean_bps: rates.iter().sum::<f64>() / rates.len().max(1) as f64,
        median_fct_ms: (!fcts.is_empty()).then(|| median(&fcts)),
    }
}

/// One row of a sweep summary: a slice of one (seed, scheme) run compared
/// with the NoLB run of the same seed.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub scheme: Scheme,
    pub slice: crate::model::SliceId,
    pub epsilon: f64,
    pub weighted_pf: f64,
    pub p10_bps: f64,
    pub pf_improvement: f64,
    pub p10_improvement: f64,
    pub handovers_per_user: f64,
    pub load_within_10pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    /// Runs of the requested schemes, ordered by seed then scheme.
    pub runs: Vec<RunOutput>,
    pub rows: Vec<SweepRow>,
}

/// Runs every (seed, scheme) pair. Seeds are `config.seed + 0..seeds`.
/// NoLB is always run as the reference even when not requested.
pub fn run_sweep(
    config: &ScenarioConfig,
    base_dir: &Path,
    seeds: u64,
    schemes: &[Scheme],
    threads: Option<usize>,
) -> Result<SweepResult> {
    if seeds == 0 || schemes.is_empty() {
        return Err(Error::Config("a sweep needs at least one seed and one scheme".into()));
    }
    let mut wanted: Vec<Scheme> = schemes.to_vec();
    wanted.sort();
    wanted.dedup();
    let mut all = wanted.clone();
    if !all.contains(&Scheme::NoLb) {
        all.push(Scheme::NoLb);
        all.sort();
    }
    let jobs: Vec<(u64, Scheme)> = (0..seeds)
        .flat_map(|i| all.iter().map(move |&s| (config.seed.wrapping_add(i), s)))
        .collect();
    let work = || -> Result<Vec<RunOutput>> {
        jobs.par_iter()
            .map(|&(seed, scheme)| {
                let cfg = ScenarioConfig {
                    seed,
                    scheme,
                    ..config.clone()
                };
                run_experiment(&cfg, base_dir)
            })
            .collect()
    };
    let outputs = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut rows = Vec::new();
    for out in &outputs {
        if !wanted.contains(&out.scheme) {
            continue;
        }
        let reference = outputs
            .iter()
            .find(|o| o.seed == out.seed && o.scheme == Scheme::NoLb)
            .expect("reference run present");
        for (m, r) in out.metrics.slices.iter().zip(&reference.metrics.slices) {
            rows.push(SweepRow {
                seed: out.seed,
                scheme: out.scheme,
                slice: m.slice,
                epsilon: m.epsilon,
                weighted_pf: m.weighted_pf,
                p10_bps: m.p10_bps,
                pf_improvement: pf_improvement(m.weighted_pf, r.weighted_pf, m.weight_sum),
                p10_improvement: relative_improvement(m.p10_bps, r.p10_bps),
                handovers_per_user: out.metrics.handovers_per_user(),
                load_within_10pct: out.metrics.load_ratio_share_within(0.9, 1.1),
            });
        }
    }
    let runs = outputs.into_iter().filter(|o| wanted.contains(&o.scheme)).collect();
    Ok(SweepResult { runs, rows })
}
