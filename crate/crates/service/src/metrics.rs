// SPDX-License-Identifier: Apache-2.0

//! Counters and per-stage latency histograms.
//!
//! `GET /metrics` renders [`MetricsSnapshot`] as JSON: a flat `counters`
//! map (`"resolve.source=cache"`, `"compile.count"`, ...) and a
//! `histograms` map keyed by `stage.<name>`.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

/// Pipeline stages in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Parse,
    Resolve,
    Identify,
    /// Compilation, or the compile-cache lookup on a warm request.
    Load,
    Instantiate,
    /// The component's own evidence and endorsement checks.
    Verify,
    Appraise,
    Sign,
    Total,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Parse,
        Stage::Resolve,
        Stage::Identify,
        Stage::Load,
        Stage::Instantiate,
        Stage::Verify,
        Stage::Appraise,
        Stage::Sign,
        Stage::Total,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Parse => "parse",
            Stage::Resolve => "resolve",
            Stage::Identify => "identify",
            Stage::Load => "load",
            Stage::Instantiate => "instantiate",
            Stage::Verify => "verify",
            Stage::Appraise => "appraise",
            Stage::Sign => "sign",
            Stage::Total => "total",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }
}

/// Stage durations of one request, in microseconds.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StageTimings(pub BTreeMap<Stage, u64>);

impl StageTimings {
    pub fn record(&mut self, stage: Stage, d: Duration) {
        *self.0.entry(stage).or_default() += d.as_micros() as u64;
    }

    pub fn get(&self, stage: Stage) -> u64 {
        self.0.get(&stage).copied().unwrap_or(0)
    }

    /// `parse=12,resolve=3,...`, the `x-trustmee-timing` header value.
    pub fn to_header(&self) -> String {
        self.0.iter().map(|(s, us)| format!("{}={us}", s.as_str())).collect::<Vec<_>>().join(",")
    }

    pub fn from_header(s: &str) -> Option<Self> {
        let mut out = StageTimings::default();
        for part in s.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=')?;
            out.0.insert(Stage::parse(k.trim())?, v.trim().parse().ok()?);
        }
        Some(out)
    }
}

/// Upper bucket bounds in microseconds; a final overflow bucket follows.
pub const BUCKETS_MICROS: [u64; 16] = [
    50, 100, 250, 500, 1_000, 2_500, 5_000, 10_000, 25_000, 50_000, 100_000, 250_000, 500_000, 1_000_000, 2_500_000,
    10_000_000,
];

#[derive(Debug)]
struct Histogram {
    buckets: [AtomicU64; BUCKETS_MICROS.len() + 1],
    count: AtomicU64,
    sum: AtomicU64,
}

impl Default for Histogram {
    fn default() -> Self {
        Histogram { buckets: std::array::from_fn(|_| AtomicU64::new(0)), count: AtomicU64::new(0), sum: AtomicU64::new(0) }
    }
}

impl Histogram {
    fn observe(&self, micros: u64) {
        let i = BUCKETS_MICROS.iter().position(|&b| micros <= b).unwrap_or(BUCKETS_MICROS.len());
        self.buckets[i].fetch_add(1, Ordering::Relaxed);
        self.count.fetch_add(1, Ordering::Relaxed);
        self.sum.fetch_add(micros, Ordering::Relaxed);
    }

    fn snapshot(&self) -> HistogramSnapshot {
        HistogramSnapshot {
            count: self.count.load(Ordering::Relaxed),
            sum_micros: self.sum.load(Ordering::Relaxed),
            buckets: self.buckets.iter().map(|b| b.load(Ordering::Relaxed)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramSnapshot {
    pub count: u64,
    pub sum_micros: u64,
    /// Counts per bucket of [`BUCKETS_MICROS`], then the overflow bucket.
    pub buckets: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub counters: BTreeMap<String, u64>,
    pub histograms: BTreeMap<String, HistogramSnapshot>,
}

impl MetricsSnapshot {
    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }
}

/// Request-level metrics owned by the service. Resolver and sandbox
/// counters are merged in when a snapshot is taken.
#[derive(Debug, Default)]
pub struct Metrics {
    stages: [Histogram; Stage::ALL.len()],
    counters: Mutex<BTreeMap<String, u64>>,
}

impl Metrics {
    pub fn observe(&self, timings: &StageTimings) {
        for (stage, us) in &timings.0 {
            self.stages[*stage as usize].observe(*us);
        }
    }

    pub fn incr(&self, name: &str) {
        *self.counters.lock().entry(name.to_owned()).or_default() += 1;
    }

    pub fn snapshot(&self, extra: impl IntoIterator<Item = (String, u64)>) -> MetricsSnapshot {
        let mut counters = self.counters.lock().clone();
        counters.extend(extra);
        let histograms =
            Stage::ALL.iter().map(|s| (format!("stage.{}", s.as_str()), self.stages[*s as usize].snapshot())).collect();
        MetricsSnapshot { counters, histograms }
    }
}
