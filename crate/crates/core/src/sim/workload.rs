//! Traffic: backlogged UEs and web-like flows.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::model::{SliceId, UeId};

/// Pareto distribution truncated to `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundedPareto {
    pub shape: f64,
    pub min: f64,
    pub max: f64,
}

impl BoundedPareto {
    /// Flow sizes in bytes: shape 1.2 between 50 KB and 50 MB.
    pub const WEB_FLOW_BYTES: BoundedPareto = BoundedPareto {
        shape: 1.2,
        min: 50e3,
        max: 50e6,
    };

    pub fn mean(&self) -> f64 {
        let a = self.shape;
        let (l, h) = (self.min, self.max);
        let norm = 1.0 - (l / h).powf(a);
        if (a - 1.0).abs() < 1e-12 {
            l * (h / l).ln() / norm
        } else {
            a / (a - 1.0) * l.powf(a) * (l.powf(1.0 - a) - h.powf(1.0 - a)) / norm
        }
    }
}

impl Distribution<f64> for BoundedPareto {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let tail = 1.0 - (self.min / self.max).powf(self.shape);
        (self.min / (1.0 - u * tail).powf(1.0 / self.shape)).min(self.max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowRecord {
    pub ue: UeId,
    pub slice: SliceId,
    /// Sequence number among the UE's flows.
    pub seq: u32,
    pub size_bytes: f64,
    pub arrival_ms: f64,
    pub completion_ms: Option<f64>,
}

impl FlowRecord {
    pub fn fct_ms(&self) -> Option<f64> {
        self.completion_ms.map(|c| c - self.arrival_ms)
    }
}

#[derive(Clone, Debug)]
struct OpenFlow {
    record: usize,
    remaining_bits: f64,
}

/// Poisson flow arrivals for one UE, served first-in first-out.
#[derive(Clone, Debug)]
pub struct WebSource {
    ue: UeId,
    slice: SliceId,
    rng: ChaCha8Rng,
    gap: Exp<f64>,
    sizes: BoundedPareto,
    next_arrival_ms: f64,
    next_seq: u32,
    queue: VecDeque<OpenFlow>,
}

impl WebSource {
    pub fn new(ue: UeId, slice: SliceId, mean_rate_bps: f64, seed: u64) -> Self {
        let sizes = BoundedPareto::WEB_FLOW_BYTES;
        let flows_per_ms = mean_rate_bps / (8.0 * sizes.mean()) / 1000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(ue.0) + 1);
        let gap = Exp::new(flows_per_ms).expect("positive arrival rate");
        let next_arrival_ms = gap.sample(&mut rng);
        WebSource {
            ue,
            slice,
            rng,
            gap,
            sizes,
            next_arrival_ms,
            next_seq: 0,
            queue: VecDeque::new(),
        }
    }

    /// Queues every flow that arrived strictly before `t_ms`.
    pub fn admit_until(&mut self, t_ms: f64, log: &mut Vec<FlowRecord>) {
        while self.next_arrival_ms < t_ms {
            let size = self.sizes.sample(&mut self.rng);
            log.push(FlowRecord {
                ue: self.ue,
                slice: self.slice,
                seq: self.next_seq,
                size_bytes: size,
                arrival_ms: self.next_arrival_ms,
                completion_ms: None,
            });
            self.queue.push_back(OpenFlow {
                record: log.len() - 1,
                remaining_bits: size * 8.0,
            });
            self.next_seq += 1;
            self.next_arrival_ms += self.gap.sample(&mut self.rng);
        }
    }

    pub fn backlog_bits(&self) -> f64 {
        self.queue.iter().map(|f| f.remaining_bits).sum()
    }

    /// Delivers `bits` over the interval starting at `start_ms`, assuming
    /// a constant rate across the interval, and stamps completions.
    pub fn deliver(&mut self, bits: f64, start_ms: f64, interval_ms: f64, log: &mut [FlowRecord]) {
        if bits <= 0.0 {
            return;
        }
        let mut used = 0.0;
        while let Some(front) = self.queue.front_mut() {
            let left = bits - used;
            if front.remaining_bits > left * (1.0 + 1e-12) {
                front.remaining_bits -= left;
                return;
            }
            used += front.remaining_bits;
            let at = start_ms + interval_ms * (used / bits).min(1.0);
            log[front.record].completion_ms = Some(at);
            self.queue.pop_front();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pareto_mean_matches_samples() {
        let d = BoundedPareto::WEB_FLOW_BYTES;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 400_000;
        let avg: f64 = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((avg / d.mean() - 1.0).abs() < 0.05, "{avg} vs {}", d.mean());
        for _ in 0..1000 {
            let x = d.sample(&mut rng);
            assert!((d.min..=d.max).contains(&x));
        }
    }

    #[test]
    fn flows_complete_in_order() {
        let mut src = WebSource::new(UeId(0), SliceId(0), 3e6, 1);
        let mut log = Vec::new();
        src.admit_until(60_000.0, &mut log);
        assert!(!log.is_empty());
        let owed = src.backlog_bits();
        src.deliver(owed, 60_000.0, 500.0, &mut log);
        assert!(log.iter().all(|f| f.completion_ms.is_some()));
        assert_eq!(log.last().unwrap().completion_ms, Some(60_500.0));
        assert!(log.iter().all(|f| f.fct_ms().unwrap() > 0.0));
        assert_eq!(src.backlog_bits(), 0.0);
    }

    #[test]
    fn offered_rate_is_about_three_mbps() {
        let mut src = WebSource::new(UeId(3), SliceId(0), 3e6, 11);
        let mut log = Vec::new();
        src.admit_until(2e7, &mut log);
        let bits: f64 = log.iter().map(|f| f.size_bytes * 8.0).sum();
        let rate = bits / 2e4;
        assert!((rate / 3e6 - 1.0).abs() < 0.25, "rate {rate}");
    }
}
