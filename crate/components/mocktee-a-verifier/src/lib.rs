// SPDX-License-Identifier: Apache-2.0

//! Verification component for MockTEE-A evidence.
//!
//! Evidence is a fixed 170-byte layout, little-endian integers:
//!
//! ```text
//! "MTA1" | version u16 | measurement [32] | report_data [64] | tcb_level u32 | sig [64]
//! ```
//!
//! `sig` is Ed25519 by the platform key over the first 106 bytes. The
//! endorsement is a CBOR array `[root, platform]` of certificates
//! `{"tbs": bstr, "sig": bstr}` whose `tbs` decodes to
//! `{"sub": bstr, "iss": bstr, "nbf": int, "naf": int}`. The root is
//! self-issued; nothing here decides whether it is trustworthy, the root key
//! is reported as a claim for policy to pin.
//!
//! An endorsement may instead be a locator `{"url": text}`, fetched through
//! the host and cached in scratch space.

use ed25519_dalek::{Signature, VerifyingKey};
use sha2::{Digest, Sha256};
use trustmee_abi::cbor::{self, Value};
use trustmee_abi::{guest, EvaluateInput, EvaluateOutput, FailureCode};

const MAGIC: &[u8; 4] = b"MTA1";
const SIGNED_LEN: usize = 106;
const EVIDENCE_LEN: usize = 170;
const REPORT_DATA_LEN: usize = 64;

struct Evidence<'a> {
    version: u16,
    measurement: &'a [u8],
    report_data: &'a [u8],
    tcb_level: u32,
    signed: &'a [u8],
    sig: [u8; 64],
}

fn parse_evidence(ev: &[u8]) -> Result<Evidence<'_>, String> {
    if ev.len() != EVIDENCE_LEN {
        return Err(format!("evidence is {} bytes, expected {EVIDENCE_LEN}", ev.len()));
    }
    if &ev[..4] != MAGIC {
        return Err("bad magic".into());
    }
    Ok(Evidence {
        version: u16::from_le_bytes([ev[4], ev[5]]),
        measurement: &ev[6..38],
        report_data: &ev[38..102],
        tcb_level: u32::from_le_bytes([ev[102], ev[103], ev[104], ev[105]]),
        signed: &ev[..SIGNED_LEN],
        sig: ev[SIGNED_LEN..].try_into().unwrap(),
    })
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

fn ed25519_ok(key: &[u8; 32], msg: &[u8], sig: &[u8; 64]) -> Result<bool, String> {
    let key = VerifyingKey::from_bytes(key).map_err(|_| "invalid Ed25519 key".to_string())?;
    Ok(key.verify_strict(msg, &Signature::from_bytes(sig)).is_ok())
}

/// Returns `(root key, platform key)`.
fn check_chain(bytes: &[u8], now: i64) -> Result<([u8; 32], [u8; 32]), String> {
    let v = cbor::decode(bytes).map_err(|e| format!("endorsement: {e}"))?;
    let certs = v.as_array().ok_or("endorsement is not an array")?;
    let [root, platform] = certs else {
        return Err(format!("chain has {} certificates, expected 2", certs.len()));
    };
    let root = parse_cert(root).ok_or("malformed root certificate")?;
    let platform = parse_cert(platform).ok_or("malformed platform certificate")?;
    if root.sub != root.iss {
        return Err("root is not self-issued".into());
    }
    if platform.iss != root.sub {
        return Err("platform certificate not issued by root".into());
    }
    if !ed25519_ok(&root.sub, &root.tbs, &root.sig)? {
        return Err("root signature invalid".into());
    }
    if !ed25519_ok(&root.sub, &platform.tbs, &platform.sig)? {
        return Err("platform certificate signature invalid".into());
    }
    for (name, c) in [("root", &root), ("platform", &platform)] {
        if now < c.nbf || now > c.naf {
            return Err(format!("{name} certificate not valid at {now}"));
        }
    }
    Ok((root.sub, platform.sub))
}

fn resolve_endorsement(raw: &[u8]) -> Result<Vec<u8>, String> {
    let url = match cbor::decode(raw) {
        Ok(v) => match v.get("url").and_then(Value::as_text) {
            Some(url) => url.to_owned(),
            None => return Ok(raw.to_vec()),
        },
        Err(_) => return Ok(raw.to_vec()),
    };
    let key = format!("collateral/{}", hex::encode(Sha256::digest(url.as_bytes())));
    if let Ok(cached) = guest::cache_read(&key) {
        return Ok(cached);
    }
    let body = guest::http_get(&url).map_err(|e| format!("fetching {url}: {e}"))?;
    let _ = guest::cache_write(&key, &body);
    Ok(body)
}

fn evaluate(input: &EvaluateInput) -> EvaluateOutput {
    let ev = match parse_evidence(&input.tee_evidence) {
        Ok(ev) => ev,
        Err(e) => return EvaluateOutput::failure(FailureCode::InvalidEvidence, e),
    };
    let Some(endorsement) = input.endorsements.first() else {
        return EvaluateOutput::failure(FailureCode::EndorsementRejected, "no endorsement");
    };
    let (root, platform) = match resolve_endorsement(endorsement).and_then(|b| check_chain(&b, guest::now())) {
        Ok(keys) => keys,
        Err(e) => return EvaluateOutput::failure(FailureCode::EndorsementRejected, e),
    };
    match ed25519_ok(&platform, ev.signed, &ev.sig) {
        Ok(true) => {}
        Ok(false) => return EvaluateOutput::failure(FailureCode::InvalidEvidence, "evidence signature invalid"),
        Err(e) => return EvaluateOutput::failure(FailureCode::EndorsementRejected, e),
    }
    let expected = &input.expected_report_data;
    if expected.len() > REPORT_DATA_LEN {
        return EvaluateOutput::failure(FailureCode::FreshnessMismatch, "expected report data longer than 64 bytes");
    }
    let mut padded = [0u8; REPORT_DATA_LEN];
    padded[..expected.len()].copy_from_slice(expected);
    if ev.report_data != padded {
        return EvaluateOutput::failure(FailureCode::FreshnessMismatch, "report data does not match");
    }
    let Value::Map(claims) = cbor::map([
        ("platform", Value::Text("mocktee-a".into())),
        ("version", Value::Int(ev.version as i64)),
        ("measurement", Value::Text(hex::encode(ev.measurement))),
        ("report_data", Value::Bytes(ev.report_data.to_vec())),
        ("tcb_level", Value::Int(ev.tcb_level as i64)),
        ("endorsement_root", Value::Text(hex::encode(root))),
    ]) else {
        unreachable!()
    };
    EvaluateOutput::Claims(claims)
}

trustmee_abi::export_component!(evaluate);
