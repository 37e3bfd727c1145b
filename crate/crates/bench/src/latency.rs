// SPDX-License-Identifier: Apache-2.0

//! End-to-end latency series.
//!
//! Cold mode clears the service's caches through the admin hook before
//! every run, so each request resolves, compiles and instantiates from
//! scratch. Warm mode sends one unmeasured warm-up request and then reuses
//! the compiled component.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use mocktee_kit::{FixtureServer, Platform};
use trustmee_core::cmw::Format;
use trustmee_service::{Stage, StageTimings};

use crate::client::{AttestResponse, BenchError, Client};
use crate::testbed::{options_for, ComponentChoice, PlatformFixture};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Cold,
    Warm,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cold => "cold",
            Mode::Warm => "warm",
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cold" => Ok(Mode::Cold),
            "warm" => Ok(Mode::Warm),
            _ => Err(format!("unknown mode {s:?}, expected cold or warm")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The three reported categories plus the server-side total, in
/// microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Breakdown {
    /// Running the component's `verify`.
    pub verification: u64,
    /// Compiling (when not cached) and instantiating the component.
    pub load_instantiate: u64,
    /// Parsing, resolution, identity checks, appraisal and signing.
    pub other: u64,
    pub total: u64,
}

impl Breakdown {
    pub const STAGES: [&'static str; 4] = ["verification", "load_instantiate", "other", "total"];

    pub fn from_timings(t: &StageTimings) -> Self {
        let verification = t.get(Stage::Verify);
        let load_instantiate = t.get(Stage::Load) + t.get(Stage::Instantiate);
        let total = t.get(Stage::Total);
        Breakdown { verification, load_instantiate, other: total.saturating_sub(verification + load_instantiate), total }
    }

    pub fn get(&self, stage: &str) -> Option<u64> {
        Some(match stage {
            "verification" => self.verification,
            "load_instantiate" => self.load_instantiate,
            "other" => self.other,
            "total" => self.total,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LatencyConfig {
    pub platform: Platform,
    pub mode: Mode,
    pub staple_collateral: bool,
    pub component: ComponentChoice,
    pub runs: usize,
    /// Requests in flight at once. Above 1 the series is for saturation
    /// only: cold-mode cache clears then race with other requests.
    pub concurrency: usize,
}

impl LatencyConfig {
    pub fn new(platform: Platform, mode: Mode, runs: usize) -> Self {
        LatencyConfig { platform, mode, staple_collateral: true, component: ComponentChoice::Stapled, runs, concurrency: 1 }
    }

    /// Series label: the mode, plus the variants that differ from stapling
    /// both collateral and component.
    pub fn label(&self) -> String {
        let mut s = self.mode.as_str().to_owned();
        if !self.staple_collateral {
            s.push_str("+fetched-collateral");
        }
        match self.component {
            ComponentChoice::Stapled => {}
            ComponentChoice::HashRef => s.push_str("+hash-ref"),
            ComponentChoice::Registry => s.push_str("+registry"),
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub platform: Platform,
    pub runs: Vec<Breakdown>,
    /// Client-observed round trips, microseconds.
    pub round_trips: Vec<u64>,
    /// Compilations the service performed during the measured runs.
    pub compilations: u64,
    /// Resolution sources reported for the measured runs.
    pub sources: BTreeMap<String, u64>,
}

impl Series {
    pub fn totals(&self) -> Vec<u64> {
        self.runs.iter().map(|b| b.total).collect()
    }

    pub fn stage(&self, stage: &str) -> Vec<u64> {
        self.runs.iter().filter_map(|b| b.get(stage)).collect()
    }
}

fn check(resp: &AttestResponse) -> Result<(), BenchError> {
    if resp.status != 200 {
        return Err(BenchError::Http {
            url: "/attest".into(),
            status: resp.status,
            body: String::from_utf8_lossy(&resp.body).into_owned(),
        });
    }
    Ok(())
}

/// Runs one series. `server` serves collateral and registry copies, see
/// [`crate::FixtureSet::publish`].
pub fn run(
    client: &Client,
    fixture: &PlatformFixture,
    server: &FixtureServer,
    cfg: &LatencyConfig,
) -> Result<Series, BenchError> {
    let opts = options_for(server, fixture.platform, cfg.staple_collateral, cfg.component);
    let body = fixture.request(&opts)?;
    let ct = Format::Cbor.media_type();
    let concurrency = cfg.concurrency.max(1);

    if cfg.mode == Mode::Warm {
        check(&client.attest(&body, ct)?)?;
    } else if concurrency > 1 {
        client.clear_caches()?;
    }
    let compiled_before = client.metrics()?.counter("compile.count");

    let one = |_: usize| -> Result<AttestResponse, BenchError> {
        if cfg.mode == Mode::Cold && concurrency == 1 {
            client.clear_caches()?;
        }
        let resp = client.attest(&body, ct)?;
        check(&resp)?;
        Ok(resp)
    };
    let responses: Vec<AttestResponse> = if concurrency == 1 {
        (0..cfg.runs).map(one).collect::<Result<_, _>>()?
    } else {
        std::thread::scope(|s| {
            let workers: Vec<_> = (0..concurrency)
                .map(|w| {
                    let one = &one;
                    s.spawn(move || (w..cfg.runs).step_by(concurrency).map(one).collect::<Result<Vec<_>, _>>())
                })
                .collect();
            let mut all = Vec::with_capacity(cfg.runs);
            for w in workers {
                all.extend(w.join().map_err(|_| BenchError::Protocol("worker panicked".into()))??);
            }
            Ok::<_, BenchError>(all)
        })?
    };

    let compilations = client.metrics()?.counter("compile.count") - compiled_before;
    let mut sources = BTreeMap::new();
    for r in &responses {
        *sources.entry(r.source.clone()).or_default() += 1;
    }
    Ok(Series {
        label: cfg.label(),
        platform: fixture.platform,
        runs: responses.iter().map(|r| Breakdown::from_timings(&r.timings)).collect(),
        round_trips: responses.iter().map(|r| r.elapsed.as_micros() as u64).collect(),
        compilations,
        sources,
    })
}
