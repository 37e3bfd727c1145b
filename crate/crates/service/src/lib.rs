// SPDX-License-Identifier: Apache-2.0

//! The TrustMee verifier service: an HTTP front end over the attestation
//! pipeline in [`verifier`].

pub mod config;
pub mod http;
pub mod metrics;
pub mod verifier;

pub use config::ServiceConfig;
pub use http::{router, ServiceHandle};
pub use metrics::{MetricsSnapshot, Stage, StageTimings};
pub use verifier::{AttestError, Attested, Snapshot, Verifier, VerifierParts};
