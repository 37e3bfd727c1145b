// SPDX-License-Identifier: Apache-2.0

//! Prebuilt fixture components.
//!
//! The modules are built from `components/` by `scripts/build-components.sh`
//! and committed, so tests need no WebAssembly toolchain. Signed variants are
//! produced at run time with a caller-supplied key.

use std::collections::BTreeMap;

use ed25519_dalek::SigningKey;
use trustmee_core::identity::{self, ComponentHash};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fixture {
    MockteeA,
    MockteeB,
    /// Emits MockTEE-A-shaped claims for any input.
    Impersonator,
    InfiniteLoop,
    MemoryHog,
    /// Fetches the URL given as evidence.
    NetworkCaller,
    /// Oversized or over-deep claims.
    ClaimsBomb,
    /// Scratch-space and host-import escape attempts.
    EscapeArtist,
    /// Host vs in-sandbox P-256 verification.
    CryptoProbe,
}

impl Fixture {
    pub const ALL: [Fixture; 9] = [
        Fixture::MockteeA,
        Fixture::MockteeB,
        Fixture::Impersonator,
        Fixture::InfiniteLoop,
        Fixture::MemoryHog,
        Fixture::NetworkCaller,
        Fixture::ClaimsBomb,
        Fixture::EscapeArtist,
        Fixture::CryptoProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::MockteeA => "mocktee-a-verifier",
            Fixture::MockteeB => "mocktee-b-verifier",
            Fixture::Impersonator => "impersonator",
            Fixture::InfiniteLoop => "infinite-loop",
            Fixture::MemoryHog => "memory-hog",
            Fixture::NetworkCaller => "network-caller",
            Fixture::ClaimsBomb => "claims-bomb",
            Fixture::EscapeArtist => "escape-artist",
            Fixture::CryptoProbe => "crypto-probe",
        }
    }

    /// The unsigned module.
    pub fn bytes(self) -> &'static [u8] {
        match self {
            Fixture::MockteeA => include_bytes!("../components/mocktee-a-verifier.wasm"),
            Fixture::MockteeB => include_bytes!("../components/mocktee-b-verifier.wasm"),
            Fixture::Impersonator => include_bytes!("../components/impersonator.wasm"),
            Fixture::InfiniteLoop => include_bytes!("../components/infinite-loop.wasm"),
            Fixture::MemoryHog => include_bytes!("../components/memory-hog.wasm"),
            Fixture::NetworkCaller => include_bytes!("../components/network-caller.wasm"),
            Fixture::ClaimsBomb => include_bytes!("../components/claims-bomb.wasm"),
            Fixture::EscapeArtist => include_bytes!("../components/escape-artist.wasm"),
            Fixture::CryptoProbe => include_bytes!("../components/crypto-probe.wasm"),
        }
    }

    pub fn hash(self) -> ComponentHash {
        identity::measure(self.bytes())
    }

    pub fn signed(self, key: &SigningKey, expiry: u64) -> Vec<u8> {
        identity::sign_component(self.bytes(), key, expiry).expect("fixture modules are well-formed")
    }
}

#[derive(Clone, Debug)]
pub struct FixtureComponent {
    pub fixture: Fixture,
    pub unsigned: Vec<u8>,
    pub signed: Vec<u8>,
    pub hash: ComponentHash,
}

/// Every fixture in unsigned and signed form.
pub fn build_fixture_components(signer: &SigningKey, expiry: u64) -> BTreeMap<Fixture, FixtureComponent> {
    Fixture::ALL
        .into_iter()
        .map(|f| {
            let c = FixtureComponent { fixture: f, unsigned: f.bytes().to_vec(), signed: f.signed(signer, expiry), hash: f.hash() };
            (f, c)
        })
        .collect()
}

/// A copy of `module` with a different measurement but identical behaviour.
pub fn variant(module: &[u8], salt: &[u8]) -> Vec<u8> {
    trustmee_core::wasm::append_custom_section(module, "trustmee-fixture-variant", salt)
        .expect("fixture modules are well-formed")
}
