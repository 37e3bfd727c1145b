// SPDX-License-Identifier: Apache-2.0

//! Verification component for MockTEE-B evidence.
//!
//! Evidence is a sequence of records `tag u8 | len u16 BE | value`, in this
//! exact order:
//!
//! | tag  | len | value                                   |
//! |------|-----|-----------------------------------------|
//! | 0x00 | 4   | `"MTB1"`                                |
//! | 0x01 | 48  | measurement                             |
//! | 0x02 | 64  | report_data                             |
//! | 0x03 | 2   | svn, big-endian                         |
//! | 0x04 | 1   | debug flag, 0 or 1                      |
//! | 0x7f | 64  | ECDSA P-256 `r ‖ s` over all prior bytes |
//!
//! The endorsement is three length-prefixed (u16 BE) certificates, root
//! first. Each certificate is itself records 0x10 subject key (SEC1
//! compressed, 33 bytes), 0x11 not-before u64 BE, 0x12 not-after u64 BE,
//! and 0x7f the issuer's signature over the preceding certificate bytes.
//! Signature checks go through the host's native P-256 import.
//!
//! An endorsement may instead be a CBOR locator `{"url": text}`, fetched
//! through the host and cached in scratch space.

use sha2::{Digest, Sha256};
use trustmee_abi::cbor::{self, Value};
use trustmee_abi::{guest, EvaluateInput, EvaluateOutput, FailureCode, HostError};

const HEADER: &[u8; 4] = b"MTB1";
const EVIDENCE_LAYOUT: [(u8, usize); 6] = [(0x00, 4), (0x01, 48), (0x02, 64), (0x03, 2), (0x04, 1), (0x7f, 64)];
const CERT_LAYOUT: [(u8, usize); 4] = [(0x10, 33), (0x11, 8), (0x12, 8), (0x7f, 64)];
const CHAIN_LEN: usize = 3;
const REPORT_DATA_LEN: usize = 64;

/// Splits `buf` into records matching `layout` exactly. Returns the values
/// and the offset where the final record starts.
fn records<'a>(buf: &'a [u8], layout: &[(u8, usize)]) -> Result<(Vec<&'a [u8]>, usize), String> {
    let mut pos = 0;
    let mut values = Vec::with_capacity(layout.len());
    let mut last_start = 0;
    for &(tag, len) in layout {
        last_start = pos;
        let head = buf.get(pos..pos + 3).ok_or("truncated record header")?;
        if head[0] != tag {
            return Err(format!("expected tag {tag:#04x}, found {:#04x}", head[0]));
        }
        let got = u16::from_be_bytes([head[1], head[2]]) as usize;
        if got != len {
            return Err(format!("tag {tag:#04x} has length {got}, expected {len}"));
        }
        values.push(buf.get(pos + 3..pos + 3 + len).ok_or("truncated record value")?);
        pos += 3 + len;
    }
    if pos != buf.len() {
        return Err("trailing bytes".into());
    }
    Ok((values, last_start))
}

struct Evidence<'a> {
    measurement: &'a [u8],
    report_data: &'a [u8],
    svn: u16,
    debug: bool,
    signed: &'a [u8],
    sig: &'a [u8],
}

fn parse_evidence(ev: &[u8]) -> Result<Evidence<'_>, String> {
    let (v, sig_at) = records(ev, &EVIDENCE_LAYOUT)?;
    if v[0] != HEADER {
        return Err("bad header".into());
    }
    let debug = match v[4][0] {
        0 => false,
        1 => true,
        other => return Err(format!("debug flag {other} is not 0 or 1")),
    };
    Ok(Evidence {
        measurement: v[1],
        report_data: v[2],
        svn: u16::from_be_bytes([v[3][0], v[3][1]]),
        debug,
        signed: &ev[..sig_at],
        sig: v[5],
    })
}

struct Cert<'a> {
    key: &'a [u8],
    not_before: u64,
    not_after: u64,
    signed: &'a [u8],
    sig: &'a [u8],
}

fn parse_cert(buf: &[u8]) -> Result<Cert<'_>, String> {
    let (v, sig_at) = records(buf, &CERT_LAYOUT)?;
    Ok(Cert {
        key: v[0],
        not_before: u64::from_be_bytes(v[1].try_into().unwrap()),
        not_after: u64::from_be_bytes(v[2].try_into().unwrap()),
        signed: &buf[..sig_at],
        sig: v[3],
    })
}

fn split_chain(buf: &[u8]) -> Result<Vec<&[u8]>, String> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < buf.len() {
        let len = buf.get(pos..pos + 2).ok_or("truncated certificate length")?;
        let len = u16::from_be_bytes([len[0], len[1]]) as usize;
        out.push(buf.get(pos + 2..pos + 2 + len).ok_or("truncated certificate")?);
        pos += 2 + len;
        if out.len() > CHAIN_LEN {
            break;
        }
    }
    if out.len() != CHAIN_LEN {
        return Err(format!("chain must have {CHAIN_LEN} certificates"));
    }
    Ok(out)
}

fn p256_ok(msg: &[u8], sig: &[u8], key: &[u8]) -> Result<bool, String> {
    guest::verify_p256(msg, sig, key).map_err(|e| match e {
        HostError::MalformedKey => "malformed P-256 key".to_string(),
        other => format!("verify_p256: {other}"),
    })
}

/// Returns `(root key, platform key)`.
fn check_chain(buf: &[u8], now: i64) -> Result<(Vec<u8>, Vec<u8>), String> {
    let certs = split_chain(buf)?
        .into_iter()
        .map(parse_cert)
        .collect::<Result<Vec<_>, _>>()?;
    let now = u64::try_from(now).map_err(|_| "clock before epoch".to_string())?;
    let mut issuer = certs[0].key;
    for (i, cert) in certs.iter().enumerate() {
        if !p256_ok(cert.signed, cert.sig, issuer)? {
            return Err(format!("certificate {i} signature invalid"));
        }
        if now < cert.not_before || now > cert.not_after {
            return Err(format!("certificate {i} not valid at {now}"));
        }
        issuer = cert.key;
    }
    Ok((certs[0].key.to_vec(), certs[CHAIN_LEN - 1].key.to_vec()))
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
    match p256_ok(ev.signed, ev.sig, &platform) {
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
        ("platform", Value::Text("mocktee-b".into())),
        ("measurement", Value::Text(hex::encode(ev.measurement))),
        ("report_data", Value::Bytes(ev.report_data.to_vec())),
        ("svn", Value::Int(ev.svn as i64)),
        ("debug", Value::Bool(ev.debug)),
        ("endorsement_root", Value::Text(hex::encode(root))),
    ]) else {
        unreachable!()
    };
    EvaluateOutput::Claims(claims)
}

trustmee_abi::export_component!(evaluate);
