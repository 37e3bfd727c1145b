// SPDX-License-Identifier: Apache-2.0

//! Benchmark harness for the TrustMee verifier.
//!
//! * [`latency`] drives `/attest` in cold or warm mode and splits each
//!   request's server-side time into verification, load + instantiate, and
//!   everything else.
//! * [`size`] accounts request bytes per encoding and component variant.
//! * [`report`] turns latency series into CSV, text summaries and plot data.
//! * [`testbed`] writes fixtures and runs a verifier plus a fixture server
//!   in-process.

pub mod client;
pub mod latency;
pub mod report;
pub mod size;
pub mod testbed;

pub use client::{BenchError, Client};
pub use testbed::{FixtureSet, PlatformFixture, RequestOptions, Testbed};

/// Injected delay on the fixture server unless configured otherwise.
pub const DEFAULT_NETWORK_DELAY_MS: u64 = 20;
