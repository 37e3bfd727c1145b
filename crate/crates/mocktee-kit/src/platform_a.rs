// SPDX-License-Identifier: Apache-2.0

//! MockTEE-A: fixed-layout evidence signed with Ed25519, two-link chain.
//!
//! ```text
//! "MTA1" | version u16 LE | measurement [32] | report_data [64] | tcb_level u32 LE | sig [64]
//! ```
//!
//! The endorsement is the CBOR array `[root, platform]`; each certificate is
//! `{"tbs": bstr, "sig": bstr}` with `tbs` the canonical CBOR of
//! `{"sub": pubkey, "iss": issuer pubkey, "nbf": int, "naf": int}`.

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand_core::CryptoRngCore;
use trustmee_core::abi::cbor::{self, Map, Value};
use trustmee_core::abi::FailureCode;

use crate::{pad_report_data, Rejection, Validity};

pub const MAGIC: &[u8; 4] = b"MTA1";
pub const VERSION: u16 = 1;
pub const MEASUREMENT_LEN: usize = 32;
pub const SIGNED_LEN: usize = 106;
pub const EVIDENCE_LEN: usize = 170;
pub const PLATFORM_NAME: &str = "mocktee-a";

#[derive(Clone, Debug)]
pub struct Keys {
    pub root: SigningKey,
    pub platform: SigningKey,
    pub validity: Validity,
}

impl Keys {
    pub fn generate(rng: &mut impl CryptoRngCore, validity: Validity) -> Self {
        Keys { root: SigningKey::generate(rng), platform: SigningKey::generate(rng), validity }
    }

    pub fn root_public(&self) -> [u8; 32] {
        self.root.verifying_key().to_bytes()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub version: u16,
    pub measurement: [u8; MEASUREMENT_LEN],
    pub report_data: [u8; 64],
    pub tcb_level: u32,
}

/// Signed evidence bytes for `report`.
pub fn evidence(keys: &Keys, report: &Report) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVIDENCE_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&report.version.to_le_bytes());
    out.extend_from_slice(&report.measurement);
    out.extend_from_slice(&report.report_data);
    out.extend_from_slice(&report.tcb_level.to_le_bytes());
    let sig = keys.platform.sign(&out);
    out.extend_from_slice(&sig.to_bytes());
    out
}

pub fn certificate(subject: &VerifyingKey, issuer: &SigningKey, validity: Validity) -> Value {
    let tbs = cbor::encode(&cbor::map([
        ("sub", Value::Bytes(subject.to_bytes().to_vec())),
        ("iss", Value::Bytes(issuer.verifying_key().to_bytes().to_vec())),
        ("nbf", Value::Int(validity.not_before)),
        ("naf", Value::Int(validity.not_after)),
    ]));
    let sig = issuer.sign(&tbs).to_bytes().to_vec();
    cbor::map([("tbs", Value::Bytes(tbs)), ("sig", Value::Bytes(sig))])
}

pub fn endorsement(keys: &Keys) -> Vec<u8> {
    cbor::encode(&Value::Array(vec![
        certificate(&keys.root.verifying_key(), &keys.root, keys.validity),
        certificate(&keys.platform.verifying_key(), &keys.root, keys.validity),
    ]))
}

struct Cert {
    sub: [u8; 32],
    iss: [u8; 32],
    nbf: i64,
    naf: i64,
    tbs: Vec<u8>,
    sig: [u8; 64],
}

fn parse_cert(v: &Value) -> Option<Cert> {
    let tbs = v.get("tbs")?.as_bytes()?.to_vec();
    let sig = v.get("sig")?.as_bytes()?.try_into().ok()?;
    let body = cbor::decode(&tbs).ok()?;
    Some(Cert {
        sub: body.get("sub")?.as_bytes()?.try_into().ok()?,
        iss: body.get("iss")?.as_bytes()?.try_into().ok()?,
        nbf: body.get("nbf")?.as_int()?,
        naf: body.get("naf")?.as_int()?,
        tbs,
        sig,
    })
}

fn check(key: &[u8; 32], msg: &[u8], sig: &[u8; 64]) -> Result<bool, Rejection> {
    let key = VerifyingKey::from_bytes(key).map_err(|_| Rejection::endorsement("invalid Ed25519 key"))?;
    Ok(key.verify_strict(msg, &Signature::from_bytes(sig)).is_ok())
}

fn check_chain(bytes: &[u8], now: i64) -> Result<([u8; 32], [u8; 32]), Rejection> {
    let v = cbor::decode(bytes).map_err(|e| Rejection::endorsement(format!("endorsement: {e}")))?;
    let certs = v.as_array().ok_or_else(|| Rejection::endorsement("endorsement is not an array"))?;
    let [root, platform] = certs else {
        return Err(Rejection::endorsement(format!("chain has {} certificates", certs.len())));
    };
    let root = parse_cert(root).ok_or_else(|| Rejection::endorsement("malformed root certificate"))?;
    let platform = parse_cert(platform).ok_or_else(|| Rejection::endorsement("malformed platform certificate"))?;
    if root.sub != root.iss || platform.iss != root.sub {
        return Err(Rejection::endorsement("issuer linkage broken"));
    }
    if !check(&root.sub, &root.tbs, &root.sig)? || !check(&root.sub, &platform.tbs, &platform.sig)? {
        return Err(Rejection::endorsement("certificate signature invalid"));
    }
    if [&root, &platform].iter().any(|c| now < c.nbf || now > c.naf) {
        return Err(Rejection::endorsement(format!("certificate not valid at {now}")));
    }
    Ok((root.sub, platform.sub))
}

/// Native reference verifier with the same decisions and claims as the
/// MockTEE-A component. `now` is seconds since the Unix epoch.
pub fn verify(evidence: &[u8], endorsements: &[Vec<u8>], expected_report_data: &[u8], now: i64) -> Result<Map, Rejection> {
    if evidence.len() != EVIDENCE_LEN || &evidence[..4] != MAGIC {
        return Err(Rejection::new(FailureCode::InvalidEvidence, "not MockTEE-A evidence"));
    }
    let endorsement = endorsements.first().ok_or_else(|| Rejection::endorsement("no endorsement"))?;
    if crate::is_locator(endorsement) {
        return Err(Rejection::endorsement("locators are not resolved natively"));
    }
    let (root, platform) = check_chain(endorsement, now)?;
    let sig: [u8; 64] = evidence[SIGNED_LEN..].try_into().expect("length checked");
    if !check(&platform, &evidence[..SIGNED_LEN], &sig)? {
        return Err(Rejection::new(FailureCode::InvalidEvidence, "evidence signature invalid"));
    }
    let report_data = &evidence[38..102];
    if pad_report_data(expected_report_data).as_ref().map(|p| &p[..]) != Some(report_data) {
        return Err(Rejection::new(FailureCode::FreshnessMismatch, "report data does not match"));
    }
    let Value::Map(claims) = cbor::map([
        ("platform", Value::Text(PLATFORM_NAME.into())),
        ("version", Value::Int(u16::from_le_bytes([evidence[4], evidence[5]]) as i64)),
        ("measurement", Value::Text(hex::encode(&evidence[6..38]))),
        ("report_data", Value::Bytes(report_data.to_vec())),
        ("tcb_level", Value::Int(u32::from_le_bytes(evidence[102..106].try_into().unwrap()) as i64)),
        ("endorsement_root", Value::Text(hex::encode(root))),
    ]) else {
        unreachable!()
    };
    Ok(claims)
}
