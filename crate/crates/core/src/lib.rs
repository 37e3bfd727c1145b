// SPDX-License-Identifier: Apache-2.0

//! Platform-agnostic building blocks of the TrustMee verifier.
//!
//! Nothing in this crate knows any TEE evidence format. Platform knowledge
//! lives in verification components, which are measured ([`identity`]),
//! resolved ([`resolver`]) and executed ([`sandbox`]); their claims are
//! appraised ([`appraisal`]) and the outcome signed ([`ear`]).

pub mod appraisal;
pub mod cmw;
pub mod ear;
pub mod identity;
pub mod keyfile;
pub mod resolver;
pub mod sandbox;
pub mod wasm;

pub use trustmee_abi as abi;
