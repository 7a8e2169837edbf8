//! Run-level metrics.

use serde::Serialize;

use super::workload::FlowRecord;
use crate::model::{CellId, SliceId, UeId};

/// Average throughputs below this are clamped before taking logs, so that a
/// starved UE lowers the fairness metric without making it infinite.
pub const MIN_RATE_BPS: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoadSample {
    pub invocation: u32,
    pub time_ms: u64,
    pub cell: CellId,
    pub tnd_rbs: f64,
    pub capacity_rbs: f64,
    pub load_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SliceMetrics {
    pub slice: SliceId,
    pub epsilon: f64,
    pub users: usize,
    /// Total weight of the slice's UEs.
    pub weight_sum: f64,
    /// Sum over UEs of weight times log of average throughput (bps).
    pub weighted_pf: f64,
    pub p10_bps: f64,
    pub mean_bps: f64,
    pub median_fct_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UeMetrics {
    pub ue: UeId,
    pub slice: SliceId,
    pub is_mobile: bool,
    pub handovers: u32,
    pub avg_bps: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsBundle {
    pub invocations: u32,
    pub load_samples: Vec<LoadSample>,
    pub slices: Vec<SliceMetrics>,
    pub ues: Vec<UeMetrics>,
    pub flows: Vec<FlowRecord>,
}

impl MetricsBundle {
    pub fn handovers(&self, mobile: bool) -> u32 {
        self.ues
            .iter()
            .filter(|u| u.is_mobile == mobile)
            .map(|u| u.handovers)
            .sum()
    }

    pub fn handovers_per_user(&self) -> f64 {
        let total: u32 = self.ues.iter().map(|u| u.handovers).sum();
        total as f64 / self.ues.len().max(1) as f64
    }

    /// Share of load samples with ratio inside `[lo, hi]`.
    pub fn load_ratio_share_within(&self, lo: f64, hi: f64) -> f64 {
        if self.load_samples.is_empty() {
            return 0.0;
        }
        let hit = self
            .load_samples
            .iter()
            .filter(|s| (lo..=hi).contains(&s.load_ratio))
            .count();
        hit as f64 / self.load_samples.len() as f64
    }
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

pub fn weighted_pf(weights_and_rates: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    weights_and_rates
        .into_iter()
        .map(|(w, r)| w * r.max(MIN_RATE_BPS).ln())
        .sum()
}

/// Improvement of a weighted-PF value over a reference, as the relative
/// gain in weighted geometric-mean throughput.
pub fn pf_improvement(value: f64, reference: f64, weight_sum: f64) -> f64 {
    ((value - reference) / weight_sum).exp() - 1.0
}

/// Relative improvement of a throughput over a reference.
pub fn relative_improvement(value: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        value / reference - 1.0
    } else if value > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [10.0, 0.0, 30.0, 20.0];
        assert_eq!(percentile(&v, 0.0), 0.0);
        assert_eq!(percentile(&v, 100.0), 30.0);
        assert_eq!(percentile(&v, 50.0), 15.0);
        assert!((percentile(&v, 10.0) - 3.0).abs() < 1e-12);
        assert_eq!(percentile(&[7.0], 10.0), 7.0);
        assert!(percentile(&[], 10.0).is_nan());
    }

    #[test]
    fn pf_improvement_is_geometric_mean_gain() {
        // two unit-weight UEs both doubling their rate
        let before = weighted_pf([(1.0, 10.0), (1.0, 40.0)]);
        let after = weighted_pf([(1.0, 20.0), (1.0, 80.0)]);
        assert!((pf_improvement(after, before, 2.0) - 1.0).abs() < 1e-12);
        assert_eq!(pf_improvement(before, before, 2.0), 0.0);
    }

    #[test]
    fn starved_rates_are_clamped() {
        assert_eq!(weighted_pf([(2.0, 0.0)]), 0.0);
        assert_eq!(relative_improvement(0.0, 0.0), 0.0);
        assert_eq!(relative_improvement(3.0, 2.0), 0.5);
    }
}
