// SPDX-License-Identifier: Apache-2.0

//! Synthetic TEE ecosystem for exercising the verifier at desk scale.
//!
//! Two deliberately different evidence formats ([`platform_a`]: fixed layout,
//! Ed25519, two-link chain; [`platform_b`]: TLV, P-256, three-link chain),
//! native reference verifiers that serve as test oracles, an attester-side
//! wrapper producing verifier requests, the prebuilt fixture components, and
//! a small HTTP server standing in for registries and collateral endpoints.
//!
//! All key material is generated at run time.

use std::fmt;

use rand_core::CryptoRngCore;
use trustmee_core::abi::cbor::{self, Map, Value};
use trustmee_core::abi::FailureCode;
use trustmee_core::cmw::{self, CmwCollection, CmwError, CmwItem, Format, TrustMeeEvidence};

pub mod components;
pub mod corpus;
pub mod fixtures;
pub mod platform_a;
pub mod platform_b;
pub mod server;

pub use components::{build_fixture_components, Fixture, FixtureComponent};
pub use server::FixtureServer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Platform {
    A,
    B,
}

impl Platform {
    pub const ALL: [Platform; 2] = [Platform::A, Platform::B];

    pub fn name(self) -> &'static str {
        match self {
            Platform::A => platform_a::PLATFORM_NAME,
            Platform::B => platform_b::PLATFORM_NAME,
        }
    }

    pub fn verifier(self) -> Fixture {
        match self {
            Platform::A => Fixture::MockteeA,
            Platform::B => Fixture::MockteeB,
        }
    }

    pub fn measurement_len(self) -> usize {
        match self {
            Platform::A => platform_a::MEASUREMENT_LEN,
            Platform::B => platform_b::MEASUREMENT_LEN,
        }
    }

    /// Media type a native, single-platform verifier would accept the raw
    /// evidence under.
    pub fn native_media_type(self) -> String {
        format!("application/vnd.{}.evidence", self.name())
    }

    /// Byte strings that identify this platform's formats.
    pub fn format_markers(self) -> Vec<&'static str> {
        match self {
            Platform::A => vec![platform_a::PLATFORM_NAME, std::str::from_utf8(platform_a::MAGIC).unwrap_or("MTA1")],
            Platform::B => vec![platform_b::PLATFORM_NAME, std::str::from_utf8(platform_b::HEADER).unwrap_or("MTB1")],
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Platform::A => "A",
            Platform::B => "B",
        })
    }
}

impl std::str::FromStr for Platform {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "A" | "a" => Ok(Platform::A),
            "B" | "b" => Ok(Platform::B),
            _ => Err(format!("unknown platform {s:?}, expected A or B")),
        }
    }
}

/// Certificate validity window, seconds since the Unix epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Validity {
    pub not_before: i64,
    pub not_after: i64,
}

impl Validity {
    /// One day before to one year after `now`.
    pub fn around(now: i64) -> Self {
        Validity { not_before: now - 86_400, not_after: now + 365 * 86_400 }
    }
}

#[derive(Clone, Debug)]
pub struct KitKeys {
    pub a: platform_a::Keys,
    pub b: platform_b::Keys,
}

impl KitKeys {
    pub fn generate(rng: &mut impl CryptoRngCore, validity: Validity) -> Self {
        KitKeys { a: platform_a::Keys::generate(rng, validity), b: platform_b::Keys::generate(rng, validity) }
    }

    /// Hex of the chain root the platform's claims report as `endorsement_root`.
    pub fn root_hex(&self, platform: Platform) -> String {
        match platform {
            Platform::A => hex::encode(self.a.root_public()),
            Platform::B => hex::encode(self.b.root_public()),
        }
    }
}

/// Why a reference verifier rejected evidence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub code: FailureCode,
    pub detail: String,
}

impl Rejection {
    pub fn new(code: FailureCode, detail: impl Into<String>) -> Self {
        Rejection { code, detail: detail.into() }
    }

    pub(crate) fn endorsement(detail: impl Into<String>) -> Self {
        Self::new(FailureCode::EndorsementRejected, detail)
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.detail)
    }
}

impl std::error::Error for Rejection {}

/// Zero-pads a nonce to the 64-byte report data field; `None` if too long.
pub fn pad_report_data(nonce: &[u8]) -> Option<[u8; 64]> {
    let mut out = [0u8; 64];
    out.get_mut(..nonce.len())?.copy_from_slice(nonce);
    Some(out)
}

/// An endorsement of the form `{"url": text}`, resolved by components.
pub fn endorsement_locator(url: &str) -> Vec<u8> {
    cbor::encode(&cbor::map([("url", Value::Text(url.to_owned()))]))
}

pub(crate) fn is_locator(endorsement: &[u8]) -> bool {
    cbor::decode(endorsement).is_ok_and(|v| v.get("url").and_then(Value::as_text).is_some())
}

/// What an attester reports; fields a platform lacks are ignored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvidenceSpec {
    /// Truncated or zero-padded to the platform's measurement size.
    pub measurement: Vec<u8>,
    /// Nonce bound into the report; at most 64 bytes.
    pub report_data: Vec<u8>,
    /// `tcb_level` on A, `svn` on B (truncated to 16 bits).
    pub tcb: u32,
    /// B only.
    pub debug: bool,
}

fn fit<const N: usize>(bytes: &[u8]) -> [u8; N] {
    let mut out = [0u8; N];
    let n = bytes.len().min(N);
    out[..n].copy_from_slice(&bytes[..n]);
    out
}

/// Produces `(evidence, endorsement)` signed by the kit's keys.
///
/// # Panics
///
/// If `spec.report_data` exceeds 64 bytes.
pub fn generate_evidence(platform: Platform, spec: &EvidenceSpec, keys: &KitKeys) -> (Vec<u8>, Vec<u8>) {
    let report_data = pad_report_data(&spec.report_data).expect("report data is at most 64 bytes");
    match platform {
        Platform::A => {
            let report = platform_a::Report {
                version: platform_a::VERSION,
                measurement: fit(&spec.measurement),
                report_data,
                tcb_level: spec.tcb,
            };
            (platform_a::evidence(&keys.a, &report), platform_a::endorsement(&keys.a))
        }
        Platform::B => {
            let report = platform_b::Report {
                measurement: fit(&spec.measurement),
                report_data,
                svn: spec.tcb as u16,
                debug: spec.debug,
            };
            (platform_b::evidence(&keys.b, &report), platform_b::endorsement(&keys.b))
        }
    }
}

/// Native verification mirroring the platform's fixture component: same
/// accept/deny decision, same failure code, same claims.
pub fn native_reference_verify(
    platform: Platform,
    evidence: &[u8],
    endorsements: &[Vec<u8>],
    expected_report_data: &[u8],
    now: i64,
) -> Result<Map, Rejection> {
    match platform {
        Platform::A => platform_a::verify(evidence, endorsements, expected_report_data, now),
        Platform::B => platform_b::verify(evidence, endorsements, expected_report_data, now),
    }
}

/// Everything an attester puts into one verifier request.
#[derive(Clone, Debug)]
pub struct WrapRequest<'a> {
    pub evidence: &'a [u8],
    pub endorsements: &'a [Vec<u8>],
    pub component_ref: &'a str,
    pub policy_id: &'a str,
    pub nonce: &'a [u8],
    pub staple_component: Option<&'a [u8]>,
}

/// The collection an attester would send, before serialization.
pub fn wrap_collection(req: &WrapRequest<'_>) -> CmwCollection {
    let item = TrustMeeEvidence {
        tee_evidence: req.evidence.to_vec(),
        component_id: req.component_ref.to_owned(),
        policy_id: req.policy_id.to_owned(),
        expected_report_data: req.nonce.to_vec(),
    };
    CmwCollection {
        evidence: item.into_item(),
        endorsements: req
            .endorsements
            .iter()
            .map(|e| CmwItem::new(cmw::MEDIA_TYPE_ENDORSEMENT, e.clone()))
            .collect(),
        component: req.staple_component.map(|c| CmwItem::new(cmw::MEDIA_TYPE_COMPONENT, c.to_vec())),
    }
}

/// Wraps raw evidence for the verifier in the given encoding.
pub fn wrap_for_trustmee_as(req: &WrapRequest<'_>, format: Format) -> Result<Vec<u8>, CmwError> {
    cmw::encode_request(&wrap_collection(req), format)
}

/// Wraps raw evidence for the verifier as CBOR.
pub fn wrap_for_trustmee(req: &WrapRequest<'_>) -> Result<Vec<u8>, CmwError> {
    wrap_for_trustmee_as(req, Format::Cbor)
}

pub fn now_unix() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    const NOW: i64 = 1_750_000_000;

    fn keys() -> KitKeys {
        KitKeys::generate(&mut StdRng::seed_from_u64(7), Validity::around(NOW))
    }

    fn spec() -> EvidenceSpec {
        EvidenceSpec { measurement: vec![0x5a; 48], report_data: b"nonce".to_vec(), tcb: 3, debug: false }
    }

    #[test]
    fn generate_then_verify() {
        let k = keys();
        for p in Platform::ALL {
            let (ev, end) = generate_evidence(p, &spec(), &k);
            let claims = native_reference_verify(p, &ev, &[end], b"nonce", NOW).unwrap();
            assert_eq!(claims["platform"], Value::Text(p.name().into()));
            let mut rd = b"nonce".to_vec();
            rd.resize(64, 0);
            assert_eq!(claims["report_data"], Value::Bytes(rd));
            assert_eq!(claims["endorsement_root"], Value::Text(k.root_hex(p)));
        }
    }

    #[test]
    fn every_byte_is_protected() {
        let k = keys();
        for p in Platform::ALL {
            let (ev, end) = generate_evidence(p, &spec(), &k);
            for i in 0..ev.len() {
                for bit in [0x01, 0x80] {
                    let mut bad = ev.clone();
                    bad[i] ^= bit;
                    assert!(
                        native_reference_verify(p, &bad, &[end.clone()], b"nonce", NOW).is_err(),
                        "platform {p} byte {i} bit {bit:#x}"
                    );
                }
            }
        }
    }

    #[test]
    fn failure_codes() {
        let k = keys();
        for p in Platform::ALL {
            let (ev, end) = generate_evidence(p, &spec(), &k);
            let code = |ev: &[u8], end: &[Vec<u8>], nonce: &[u8], now| {
                native_reference_verify(p, ev, end, nonce, now).unwrap_err().code
            };
            assert_eq!(code(&ev, &[end.clone()], b"other", NOW), FailureCode::FreshnessMismatch);
            assert_eq!(code(&ev, &[end.clone()], b"nonce", NOW + 400 * 86_400), FailureCode::EndorsementRejected);
            assert_eq!(code(&ev, &[], b"nonce", NOW), FailureCode::EndorsementRejected);
            assert_eq!(code(&ev, &[endorsement_locator("http://x/")], b"nonce", NOW), FailureCode::EndorsementRejected);
            assert_eq!(code(&ev[1..], &[end.clone()], b"nonce", NOW), FailureCode::InvalidEvidence);
        }
    }

    #[test]
    fn formats_are_mutually_exclusive() {
        let k = keys();
        let (a_ev, a_end) = generate_evidence(Platform::A, &spec(), &k);
        let (b_ev, b_end) = generate_evidence(Platform::B, &spec(), &k);
        assert_eq!(
            native_reference_verify(Platform::A, &b_ev, &[b_end], b"nonce", NOW).unwrap_err().code,
            FailureCode::InvalidEvidence
        );
        assert_eq!(
            native_reference_verify(Platform::B, &a_ev, &[a_end], b"nonce", NOW).unwrap_err().code,
            FailureCode::InvalidEvidence
        );
    }

    #[test]
    fn chain_from_other_keys_is_rejected() {
        let k = keys();
        let other = KitKeys::generate(&mut StdRng::seed_from_u64(8), Validity::around(NOW));
        for p in Platform::ALL {
            let (ev, _) = generate_evidence(p, &spec(), &k);
            let (_, foreign) = generate_evidence(p, &spec(), &other);
            assert_eq!(
                native_reference_verify(p, &ev, &[foreign], b"nonce", NOW).unwrap_err().code,
                FailureCode::InvalidEvidence
            );
        }
    }

    #[test]
    fn wrap_round_trip() {
        let k = keys();
        let (ev, end) = generate_evidence(Platform::A, &spec(), &k);
        let endorsements = vec![end];
        let component = b"\0asm\x01\0\0\0".to_vec();
        for staple in [None, Some(&component[..])] {
            let req = WrapRequest {
                evidence: &ev,
                endorsements: &endorsements,
                component_ref: "reg://localhost/mocktee-a:v1",
                policy_id: "policy-a",
                nonce: b"nonce",
                staple_component: staple,
            };
            for format in [Format::Cbor, Format::Json] {
                let bytes = wrap_for_trustmee_as(&req, format).unwrap();
                let coll = cmw::decode_request(&bytes, format, &cmw::Limits::default()).unwrap();
                let back = cmw::extract_evidence(&coll).unwrap();
                assert_eq!(back.evidence.tee_evidence, ev);
                assert_eq!(back.evidence.component_id, "reg://localhost/mocktee-a:v1");
                assert_eq!(back.endorsements, endorsements);
                assert_eq!(back.component.as_deref(), staple);
            }
        }
    }
}
