//! Trajectory statistics: throughput, queue occupancy and blocking with batch-means errors.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{SlotOutcome, State};

const DEFAULT_BATCHES: u64 = 50;

/// Summary of one simulated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    /// Delivered data units per slot.
    pub avg_throughput: f64,
    /// Time-average queue length, sampled at the start of each slot.
    pub avg_queue: f64,
    /// Dropped arrivals per offered arrival (0 when nothing was offered).
    pub blocking_prob: f64,
    pub slots: u64,
    pub seed: u64,
    pub offered: u64,
    pub blocked: u64,
    /// Batch-means standard errors of the three estimates.
    pub throughput_se: f64,
    pub queue_se: f64,
    pub blocking_se: f64,
}

impl RunMetrics {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Mean sojourn in the queue by Little's law; `NaN` when no arrival was accepted.
    pub fn latency(&self, alpha: f64) -> f64 {
        let accepted = alpha * (1.0 - self.blocking_prob);
        if accepted > 0.0 {
            self.avg_queue / accepted
        } else {
            f64::NAN
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Batch {
    slots: u64,
    delivered: u64,
    queue: u64,
    offered: u64,
    blocked: u64,
}

/// Streaming accumulator for [`RunMetrics`].
#[derive(Clone, Debug)]
pub struct MetricsAccumulator {
    batch_len: u64,
    batches: Vec<Batch>,
    current: Batch,
}

impl MetricsAccumulator {
    /// `expected_slots` only sizes the batches; any number of slots may be recorded.
    pub fn new(expected_slots: u64) -> Self {
        Self {
            batch_len: expected_slots.div_ceil(DEFAULT_BATCHES).max(1),
            batches: Vec::with_capacity(DEFAULT_BATCHES as usize + 1),
            current: Batch::default(),
        }
    }

    pub fn record(&mut self, from: State, outcome: &SlotOutcome) {
        let b = &mut self.current;
        b.slots += 1;
        b.delivered += outcome.throughput as u64;
        b.queue += from.data as u64;
        b.offered += outcome.arrived as u64;
        b.blocked += outcome.blocked as u64;
        if b.slots == self.batch_len {
            self.batches.push(std::mem::take(&mut self.current));
        }
    }

    fn totals(&self) -> Batch {
        self.batches.iter().chain(std::iter::once(&self.current)).fold(Batch::default(), |acc, b| Batch {
            slots: acc.slots + b.slots,
            delivered: acc.delivered + b.delivered,
            queue: acc.queue + b.queue,
            offered: acc.offered + b.offered,
            blocked: acc.blocked + b.blocked,
        })
    }

    pub fn slots(&self) -> u64 {
        self.totals().slots
    }

    /// Cumulative delivered units per slot so far.
    pub fn running_throughput(&self) -> f64 {
        let t = self.totals();
        if t.slots == 0 {
            0.0
        } else {
            t.delivered as f64 / t.slots as f64
        }
    }

    pub fn finish(&self) -> RunMetrics {
        let t = self.totals();
        let n = t.slots.max(1) as f64;
        let avg_throughput = t.delivered as f64 / n;
        let avg_queue = t.queue as f64 / n;
        let blocking_prob = if t.offered > 0 { t.blocked as f64 / t.offered as f64 } else { 0.0 };

        // Only complete batches enter the error estimate.
        let full: Vec<&Batch> = self.batches.iter().filter(|b| b.slots == self.batch_len).collect();
        let k = full.len() as f64;
        let (throughput_se, queue_se, blocking_se) = if full.len() >= 2 {
            let se = |f: &dyn Fn(&Batch) -> f64| {
                let xs: Vec<f64> = full.iter().map(|b| f(b)).collect();
                let mean = xs.iter().sum::<f64>() / k;
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
            };
            let len = self.batch_len as f64;
            let tput = se(&|b| b.delivered as f64 / len);
            let queue = se(&|b| b.queue as f64 / len);
            let mean_offered = full.iter().map(|b| b.offered as f64).sum::<f64>() / k;
            let ratio = if mean_offered > 0.0 {
                let resid: f64 = full
                    .iter()
                    .map(|b| (b.blocked as f64 - blocking_prob * b.offered as f64).powi(2))
                    .sum();
                (resid / (k - 1.0) / k).sqrt() / mean_offered
            } else {
                0.0
            };
            (tput, queue, ratio)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        RunMetrics {
            avg_throughput,
            avg_queue,
            blocking_prob,
            slots: t.slots,
            seed: 0,
            offered: t.offered,
            blocked: t.blocked,
            throughput_se,
            queue_se,
            blocking_se,
        }
    }
}

/// Per-run seed derived from a master seed and a stream number.
///
/// `seed = splitmix64(master + (stream + 1) · 0x9E3779B97F4A7C15)`; streams are numbered
/// by the caller (sweep point × replication).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_and_ratio() {
        let mut acc = MetricsAccumulator::new(4);
        let s = State::busy(3, 0);
        let o = |throughput, arrived, blocked| SlotOutcome {
            next: s,
            throughput,
            arrived,
            blocked,
            action_succeeded: throughput > 0,
        };
        acc.record(s, &o(1, true, false));
        acc.record(s, &o(0, true, true));
        acc.record(s, &o(2, false, false));
        acc.record(s, &o(0, true, false));
        let m = acc.finish();
        assert_eq!(m.slots, 4);
        assert_eq!(m.avg_throughput, 0.75);
        assert_eq!(m.avg_queue, 3.0);
        assert!((m.blocking_prob - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.latency(0.5) - 3.0 / (0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(a.len(), b.len());
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }
}
