//! Teleoperation command channel with injected latency.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Largest command delay an operator can compensate for (ms).
pub const LATENCY_LIMIT_MS: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    pub base_ms: f64,
    pub jitter_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivered<T> {
    pub msg: T,
    pub sent_ms: f64,
    pub delivered_ms: f64,
}

impl<T> Delivered<T> {
    pub fn delay_ms(&self) -> f64 {
        self.delivered_ms - self.sent_ms
    }
}

#[derive(Debug, Clone)]
struct InFlight<T> {
    msg: T,
    sent_ms: f64,
    due_ms: f64,
}

/// FIFO with a per-message delay drawn from `[base, base + jitter]`.
///
/// Due times are forced non-decreasing so messages never overtake each other.
/// Because send times are non-decreasing this never pushes a delay past
/// `base + jitter`.
#[derive(Debug, Clone)]
pub struct LatencyChannel<T> {
    config: LatencyConfig,
    rng: ChaCha8Rng,
    queue: VecDeque<InFlight<T>>,
    last_due_ms: f64,
    last_now_ms: f64,
    sent: u64,
    delivered: u64,
    max_delay_ms: f64,
}

impl<T> LatencyChannel<T> {
    pub fn new(config: LatencyConfig, seed: u64) -> Self {
        LatencyChannel {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: VecDeque::new(),
            last_due_ms: f64::NEG_INFINITY,
            last_now_ms: f64::NEG_INFINITY,
            sent: 0,
            delivered: 0,
            max_delay_ms: 0.0,
        }
    }

    pub fn config(&self) -> LatencyConfig {
        self.config
    }

    /// Changes the delay for messages sent from now on.
    pub fn set_config(&mut self, config: LatencyConfig) {
        self.config = config;
    }

    pub fn send(&mut self, msg: T, now_ms: f64) {
        debug_assert!(now_ms >= self.last_now_ms, "time went backwards");
        self.last_now_ms = now_ms;
        let jitter = if self.config.jitter_ms > 0.0 {
            self.rng.random_range(0.0..=self.config.jitter_ms)
        } else {
            0.0
        };
        let due_ms = (now_ms + self.config.base_ms + jitter).max(self.last_due_ms);
        self.last_due_ms = due_ms;
        self.sent += 1;
        self.queue.push_back(InFlight {
            msg,
            sent_ms: now_ms,
            due_ms,
        });
    }

    /// Removes and returns every message due at or before `now_ms`, oldest
    /// first.
    pub fn poll(&mut self, now_ms: f64) -> Vec<Delivered<T>> {
        self.last_now_ms = self.last_now_ms.max(now_ms);
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|m| m.due_ms <= now_ms) {
            let m = self.queue.pop_front().expect("front checked");
            self.delivered += 1;
            self.max_delay_ms = self.max_delay_ms.max(m.due_ms - m.sent_ms);
            out.push(Delivered {
                msg: m.msg,
                sent_ms: m.sent_ms,
                delivered_ms: m.due_ms,
            });
        }
        out
    }

    /// Delivers everything still queued regardless of due time.
    pub fn drain(&mut self) -> Vec<Delivered<T>> {
        self.poll(f64::INFINITY)
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Largest delay among delivered messages (ms).
    pub fn max_delay_ms(&self) -> f64 {
        self.max_delay_ms
    }

    /// True once any delivered message exceeded the operator latency limit.
    pub fn violation(&self) -> bool {
        self.max_delay_ms > LATENCY_LIMIT_MS
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_delay() {
        let mut ch = LatencyChannel::new(
            LatencyConfig {
                base_ms: 200.0,
                jitter_ms: 0.0,
            },
            1,
        );
        ch.send(1, 0.0);
        ch.send(2, 10.0);
        assert!(ch.poll(199.0).is_empty());
        let got = ch.poll(200.0);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].delay_ms(), 200.0);
        let got = ch.poll(210.0);
        assert_eq!(got[0].msg, 2);
        assert_eq!(got[0].delivered_ms, 210.0);
        assert!(!ch.violation());
    }

    #[test]
    fn zero_delay_passes_through_same_tick() {
        let mut ch = LatencyChannel::new(LatencyConfig::default(), 1);
        ch.send("a", 5.0);
        let got = ch.poll(5.0);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].delay_ms(), 0.0);
    }

    #[test]
    fn long_jitter_raises_flag() {
        let mut ch = LatencyChannel::new(
            LatencyConfig {
                base_ms: 400.0,
                jitter_ms: 150.0,
            },
            7,
        );
        for k in 0..200 {
            ch.send(k, k as f64);
        }
        ch.drain();
        assert_eq!(ch.violation(), ch.max_delay_ms() > 500.0);
        assert!(ch.violation());
    }

    #[test]
    fn flag_quiet_at_limit() {
        let mut ch = LatencyChannel::new(
            LatencyConfig {
                base_ms: 500.0,
                jitter_ms: 0.0,
            },
            7,
        );
        ch.send((), 0.0);
        ch.drain();
        assert!(!ch.violation());
    }

    proptest! {
        #[test]
        fn ordered_bounded_and_conserving(
            base in 0.0f64..600.0,
            jitter in 0.0f64..300.0,
            seed in any::<u64>(),
            gaps in proptest::collection::vec(0.0f64..50.0, 1..300),
        ) {
            let mut ch = LatencyChannel::new(LatencyConfig { base_ms: base, jitter_ms: jitter }, seed);
            let mut now = 0.0;
            let mut got = Vec::new();
            for (i, gap) in gaps.iter().enumerate() {
                now += gap;
                ch.send(i, now);
                got.extend(ch.poll(now));
            }
            got.extend(ch.drain());
            prop_assert_eq!(ch.sent(), ch.delivered());
            prop_assert_eq!(got.len(), gaps.len());
            for (i, d) in got.iter().enumerate() {
                prop_assert_eq!(d.msg, i);
                prop_assert!(d.delay_ms() >= base - 1e-9);
                prop_assert!(d.delay_ms() <= base + jitter + 1e-9);
            }
            let max = got.iter().map(|d| d.delay_ms()).fold(0.0, f64::max);
            prop_assert_eq!(ch.violation(), max > LATENCY_LIMIT_MS);
        }
    }
}
