// SPDX-License-Identifier: Apache-2.0

//! Component measurement, signature envelopes, and the trust store that maps
//! component signers to execution policies.
//!
//! A signed component carries one or more custom sections named
//! [`SIGNATURE_SECTION`], each holding a canonical CBOR envelope
//! `{"key": bstr .size 32, "exp": uint, "sig": bstr .size 64}`. The signature
//! is Ed25519 over
//!
//! ```text
//! "trustmee-component-v1" ‖ exp as u64 big-endian ‖ SHA-256(stripped module)
//! ```
//!
//! where the stripped module is the binary with every signature section
//! removed. The same stripped bytes define the component's measurement, so
//! signing never changes the hash.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ed25519_dalek::{Signature, Signer as _, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use trustmee_abi::cbor::{self, Value};

use crate::wasm::{self, ContainerError};

pub const SIGNATURE_SECTION: &str = "trustmee-sig";
pub const SIGNATURE_DOMAIN: &[u8] = b"trustmee-component-v1";

/// About 46 times what the heavier fixture verifier needs (in-sandbox Ed25519); a
/// tight loop burns through it in well under 100 ms.
pub const DEFAULT_FUEL_BUDGET: u64 = 400_000_000;
pub const DEFAULT_MAX_MEMORY_BYTES: u64 = 64 * 1024 * 1024;
pub const DEFAULT_WALL_CLOCK_LIMIT_MS: u64 = 2_000;

/// SHA-256 measurement of a component with its signature sections removed.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentHash(pub [u8; 32]);

impl ComponentHash {
    pub fn of_stripped(stripped: &[u8]) -> Self {
        ComponentHash(Sha256::digest(stripped).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// The `sha256:<hex>` component reference for this hash.
    pub fn to_ref(&self) -> String {
        format!("sha256:{}", self.to_hex())
    }
}

impl fmt::Debug for ComponentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComponentHash({})", self.to_hex())
    }
}

impl fmt::Display for ComponentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for ComponentHash {
    type Err = hex::FromHexError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(ComponentHash(out))
    }
}

/// Ed25519 public key of a component signer.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignerKey(pub [u8; 32]);

impl SignerKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl From<&SigningKey> for SignerKey {
    fn from(k: &SigningKey) -> Self {
        SignerKey(k.verifying_key().to_bytes())
    }
}

impl fmt::Debug for SignerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SignerKey({})", self.to_hex())
    }
}

impl fmt::Display for SignerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for SignerKey {
    type Err = hex::FromHexError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(SignerKey(out))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ComponentIdentity {
    pub hash: ComponentHash,
    /// Present only when a signature verified, was unexpired, and its key is
    /// in the trust store.
    pub signer: Option<SignerKey>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignatureEnvelope {
    pub signer_public_key: [u8; 32],
    /// Seconds since the Unix epoch after which the signature is void.
    pub expiry: u64,
    pub signature: [u8; 64],
}

fn signed_message(expiry: u64, hash: &ComponentHash) -> Vec<u8> {
    let mut msg = Vec::with_capacity(SIGNATURE_DOMAIN.len() + 8 + 32);
    msg.extend_from_slice(SIGNATURE_DOMAIN);
    msg.extend_from_slice(&expiry.to_be_bytes());
    msg.extend_from_slice(&hash.0);
    msg
}

impl SignatureEnvelope {
    pub fn to_cbor(&self) -> Vec<u8> {
        cbor::encode(&cbor::map([
            ("key", Value::Bytes(self.signer_public_key.to_vec())),
            ("exp", Value::Int(self.expiry as i64)),
            ("sig", Value::Bytes(self.signature.to_vec())),
        ]))
    }

    pub fn from_cbor(bytes: &[u8]) -> Option<Self> {
        let v = cbor::decode_with_depth(bytes, 1).ok()?;
        let m = v.as_map()?;
        if m.len() != 3 {
            return None;
        }
        Some(SignatureEnvelope {
            signer_public_key: m.get("key")?.as_bytes()?.try_into().ok()?,
            expiry: u64::try_from(m.get("exp")?.as_int()?).ok()?,
            signature: m.get("sig")?.as_bytes()?.try_into().ok()?,
        })
    }

    /// Signature check alone; expiry and trust are the caller's business.
    pub fn verify(&self, hash: &ComponentHash) -> bool {
        let Ok(key) = VerifyingKey::from_bytes(&self.signer_public_key) else {
            return false;
        };
        key.verify_strict(&signed_message(self.expiry, hash), &Signature::from_bytes(&self.signature))
            .is_ok()
    }
}

/// Bounds applied to one component evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPolicy {
    pub fuel_budget: u64,
    pub network_allowed: bool,
    pub max_memory_bytes: u64,
    pub wall_clock_limit_ms: u64,
}

impl ExecutionPolicy {
    /// The restrictive policy for unsigned or untrusted components.
    pub const fn restrictive() -> Self {
        ExecutionPolicy {
            fuel_budget: DEFAULT_FUEL_BUDGET,
            network_allowed: false,
            max_memory_bytes: DEFAULT_MAX_MEMORY_BYTES,
            wall_clock_limit_ms: DEFAULT_WALL_CLOCK_LIMIT_MS,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.fuel_budget == 0 {
            return Err("fuel_budget must be positive".into());
        }
        if self.wall_clock_limit_ms == 0 {
            return Err("wall_clock_limit_ms must be positive".into());
        }
        if self.max_memory_bytes == 0 {
            return Err("max_memory_bytes must be positive".into());
        }
        Ok(())
    }
}

impl Default for ExecutionPolicy {
    fn default() -> Self {
        Self::restrictive()
    }
}

#[derive(Debug, Error)]
pub enum TrustStoreError {
    #[error("cannot read trust store: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse trust store: {0}")]
    Parse(String),
    #[error("invalid signer key {0:?}")]
    InvalidKey(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

/// Signer keys paired with execution policies, plus the default for everyone else.
#[derive(Clone, Debug, PartialEq)]
pub struct TrustStore {
    entries: HashMap<SignerKey, ExecutionPolicy>,
    default_policy: ExecutionPolicy,
}

impl Default for TrustStore {
    fn default() -> Self {
        TrustStore { entries: HashMap::new(), default_policy: ExecutionPolicy::restrictive() }
    }
}

#[derive(Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    fuel_budget: Option<u64>,
    network_allowed: Option<bool>,
    max_memory_bytes: Option<u64>,
    wall_clock_limit_ms: Option<u64>,
}

impl PolicyFile {
    fn resolve(&self, base: &ExecutionPolicy) -> ExecutionPolicy {
        ExecutionPolicy {
            fuel_budget: self.fuel_budget.unwrap_or(base.fuel_budget),
            network_allowed: self.network_allowed.unwrap_or(base.network_allowed),
            max_memory_bytes: self.max_memory_bytes.unwrap_or(base.max_memory_bytes),
            wall_clock_limit_ms: self.wall_clock_limit_ms.unwrap_or(base.wall_clock_limit_ms),
        }
    }

    fn from_policy(p: &ExecutionPolicy) -> Self {
        PolicyFile {
            fuel_budget: Some(p.fuel_budget),
            network_allowed: Some(p.network_allowed),
            max_memory_bytes: Some(p.max_memory_bytes),
            wall_clock_limit_ms: Some(p.wall_clock_limit_ms),
        }
    }
}

#[derive(Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
struct TrustStoreFile {
    #[serde(default)]
    default: PolicyFile,
    #[serde(default)]
    signers: std::collections::BTreeMap<String, PolicyFile>,
}

impl TrustStore {
    pub fn new(default_policy: ExecutionPolicy) -> Result<Self, TrustStoreError> {
        if default_policy.network_allowed {
            return Err(TrustStoreError::InvalidPolicy("the default policy may not allow network access".into()));
        }
        default_policy.validate().map_err(TrustStoreError::InvalidPolicy)?;
        Ok(TrustStore { entries: HashMap::new(), default_policy })
    }

    pub fn with_signer(mut self, key: SignerKey, policy: ExecutionPolicy) -> Self {
        self.entries.insert(key, policy);
        self
    }

    pub fn default_policy(&self) -> &ExecutionPolicy {
        &self.default_policy
    }

    pub fn policy_for(&self, key: &SignerKey) -> Option<&ExecutionPolicy> {
        self.entries.get(key)
    }

    pub fn signers(&self) -> impl Iterator<Item = (&SignerKey, &ExecutionPolicy)> {
        self.entries.iter()
    }

    /// Parses the TOML trust store format:
    ///
    /// ```toml
    /// [default]                 # optional, fields default to the built-in policy
    /// fuel_budget = 400000000
    ///
    /// [signers.<hex ed25519 public key>]
    /// network_allowed = true    # unset fields inherit from [default]
    /// fuel_budget = 2000000000
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self, TrustStoreError> {
        let file: TrustStoreFile = toml::from_str(text).map_err(|e| TrustStoreError::Parse(e.to_string()))?;
        let default_policy = file.default.resolve(&ExecutionPolicy::restrictive());
        let mut store = TrustStore::new(default_policy)?;
        for (hex_key, p) in &file.signers {
            let key = SignerKey::from_str(hex_key).map_err(|_| TrustStoreError::InvalidKey(hex_key.clone()))?;
            let policy = p.resolve(&default_policy);
            policy.validate().map_err(|e| TrustStoreError::InvalidPolicy(format!("{hex_key}: {e}")))?;
            store.entries.insert(key, policy);
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, TrustStoreError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        let file = TrustStoreFile {
            default: PolicyFile::from_policy(&self.default_policy),
            signers: self.entries.iter().map(|(k, p)| (k.to_hex(), PolicyFile::from_policy(p))).collect(),
        };
        toml::to_string(&file).expect("trust store serializes")
    }
}

/// Why a component did or did not get a signer identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignatureStatus {
    Trusted,
    Unsigned,
    Invalid,
    Expired,
    UnknownSigner,
    /// The bytes are not a parseable module, so no section could be read.
    Unreadable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Identification {
    pub identity: ComponentIdentity,
    pub policy: ExecutionPolicy,
    pub status: SignatureStatus,
}

/// Removes every signature section. Idempotent; unsigned modules come back
/// byte-for-byte unchanged.
pub fn strip_signature(component: &[u8]) -> Result<Vec<u8>, ContainerError> {
    wasm::remove_custom_sections(component, SIGNATURE_SECTION)
}

/// Measurement of `component`: SHA-256 over its stripped bytes, or over the raw
/// bytes if the container cannot be parsed.
pub fn measure(component: &[u8]) -> ComponentHash {
    match strip_signature(component) {
        Ok(stripped) => ComponentHash::of_stripped(&stripped),
        Err(_) => ComponentHash::of_stripped(component),
    }
}

/// Replaces any existing signature with one by `key`, valid until `expiry`
/// (seconds since the Unix epoch, clamped to `i64::MAX`).
pub fn sign_component(component: &[u8], key: &SigningKey, expiry: u64) -> Result<Vec<u8>, ContainerError> {
    let expiry = expiry.min(i64::MAX as u64);
    let stripped = strip_signature(component)?;
    let hash = ComponentHash::of_stripped(&stripped);
    let envelope = SignatureEnvelope {
        signer_public_key: key.verifying_key().to_bytes(),
        expiry,
        signature: key.sign(&signed_message(expiry, &hash)).to_bytes(),
    };
    wasm::append_custom_section(&stripped, SIGNATURE_SECTION, &envelope.to_cbor())
}

/// Measures a component and decides which execution policy it runs under.
///
/// The first signature that verifies, is unexpired at `now`, and names a key
/// in `store` sets the signer. Anything else leaves the signer absent and
/// selects the store's default policy.
pub fn measure_and_identify(component: &[u8], store: &TrustStore, now: u64) -> Identification {
    let default = |hash, status| Identification {
        identity: ComponentIdentity { hash, signer: None },
        policy: *store.default_policy(),
        status,
    };
    let (stripped, envelopes) = match (strip_signature(component), wasm::custom_sections(component, SIGNATURE_SECTION)) {
        (Ok(s), Ok(e)) => (s, e),
        _ => return default(ComponentHash::of_stripped(component), SignatureStatus::Unreadable),
    };
    let hash = ComponentHash::of_stripped(&stripped);
    if envelopes.is_empty() {
        return default(hash, SignatureStatus::Unsigned);
    }
    // Report the most informative failure if nothing is accepted.
    let mut status = SignatureStatus::Invalid;
    for payload in envelopes {
        let Some(env) = SignatureEnvelope::from_cbor(payload) else { continue };
        if !env.verify(&hash) {
            continue;
        }
        if now > env.expiry {
            status = SignatureStatus::Expired;
            continue;
        }
        let signer = SignerKey(env.signer_public_key);
        match store.policy_for(&signer) {
            Some(policy) => {
                return Identification {
                    identity: ComponentIdentity { hash, signer: Some(signer) },
                    policy: *policy,
                    status: SignatureStatus::Trusted,
                }
            }
            None => {
                if status != SignatureStatus::Expired {
                    status = SignatureStatus::UnknownSigner;
                }
            }
        }
    }
    default(hash, status)
}
