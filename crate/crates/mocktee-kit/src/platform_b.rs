// SPDX-License-Identifier: Apache-2.0

//! MockTEE-B: tag-length-value evidence signed with ECDSA P-256, three-link
//! chain.
//!
//! Evidence records (`tag u8 | len u16 BE | value`), in order: 0x00 `"MTB1"`,
//! 0x01 measurement (48), 0x02 report_data (64), 0x03 svn (u16 BE), 0x04
//! debug (0/1), 0x7f signature `r ‖ s` over every preceding byte.
//!
//! The endorsement is three certificates, each prefixed with its u16 BE
//! length, root first. A certificate holds records 0x10 subject key (SEC1
//! compressed), 0x11 not-before (u64 BE), 0x12 not-after (u64 BE) and 0x7f
//! the issuer's signature over the preceding certificate bytes.

use p256::ecdsa::signature::{Signer, Verifier};
use p256::ecdsa::{Signature, SigningKey, VerifyingKey};
use rand_core::CryptoRngCore;
use trustmee_core::abi::cbor::{self, Map, Value};
use trustmee_core::abi::FailureCode;

use crate::{pad_report_data, Rejection, Validity};

pub const HEADER: &[u8; 4] = b"MTB1";
pub const MEASUREMENT_LEN: usize = 48;
pub const PLATFORM_NAME: &str = "mocktee-b";
pub const TAG_HEADER: u8 = 0x00;
pub const TAG_MEASUREMENT: u8 = 0x01;
pub const TAG_REPORT_DATA: u8 = 0x02;
pub const TAG_SVN: u8 = 0x03;
pub const TAG_DEBUG: u8 = 0x04;
pub const TAG_SUBJECT: u8 = 0x10;
pub const TAG_NOT_BEFORE: u8 = 0x11;
pub const TAG_NOT_AFTER: u8 = 0x12;
pub const TAG_SIGNATURE: u8 = 0x7f;

const EVIDENCE_LAYOUT: [(u8, usize); 6] = [
    (TAG_HEADER, 4),
    (TAG_MEASUREMENT, MEASUREMENT_LEN),
    (TAG_REPORT_DATA, 64),
    (TAG_SVN, 2),
    (TAG_DEBUG, 1),
    (TAG_SIGNATURE, 64),
];
const CERT_LAYOUT: [(u8, usize); 4] = [(TAG_SUBJECT, 33), (TAG_NOT_BEFORE, 8), (TAG_NOT_AFTER, 8), (TAG_SIGNATURE, 64)];

#[derive(Clone, Debug)]
pub struct Keys {
    pub root: SigningKey,
    pub intermediate: SigningKey,
    pub platform: SigningKey,
    pub validity: Validity,
}

pub fn sec1(key: &SigningKey) -> Vec<u8> {
    key.verifying_key().to_encoded_point(true).as_bytes().to_vec()
}

impl Keys {
    pub fn generate(rng: &mut impl CryptoRngCore, validity: Validity) -> Self {
        Keys {
            root: SigningKey::random(rng),
            intermediate: SigningKey::random(rng),
            platform: SigningKey::random(rng),
            validity,
        }
    }

    pub fn root_public(&self) -> Vec<u8> {
        sec1(&self.root)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub measurement: [u8; MEASUREMENT_LEN],
    pub report_data: [u8; 64],
    pub svn: u16,
    pub debug: bool,
}

fn record(out: &mut Vec<u8>, tag: u8, value: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(value.len() as u16).to_be_bytes());
    out.extend_from_slice(value);
}

fn sign(key: &SigningKey, msg: &[u8]) -> [u8; 64] {
    let sig: Signature = key.sign(msg);
    sig.to_bytes().into()
}

pub fn evidence(keys: &Keys, report: &Report) -> Vec<u8> {
    let mut out = Vec::with_capacity(200);
    record(&mut out, TAG_HEADER, HEADER);
    record(&mut out, TAG_MEASUREMENT, &report.measurement);
    record(&mut out, TAG_REPORT_DATA, &report.report_data);
    record(&mut out, TAG_SVN, &report.svn.to_be_bytes());
    record(&mut out, TAG_DEBUG, &[report.debug as u8]);
    let sig = sign(&keys.platform, &out);
    record(&mut out, TAG_SIGNATURE, &sig);
    out
}

pub fn certificate(subject: &[u8], issuer: &SigningKey, validity: Validity) -> Vec<u8> {
    let mut out = Vec::with_capacity(130);
    record(&mut out, TAG_SUBJECT, subject);
    record(&mut out, TAG_NOT_BEFORE, &(validity.not_before.max(0) as u64).to_be_bytes());
    record(&mut out, TAG_NOT_AFTER, &(validity.not_after.max(0) as u64).to_be_bytes());
    let sig = sign(issuer, &out);
    record(&mut out, TAG_SIGNATURE, &sig);
    out
}

pub fn endorsement(keys: &Keys) -> Vec<u8> {
    let certs = [
        certificate(&sec1(&keys.root), &keys.root, keys.validity),
        certificate(&sec1(&keys.intermediate), &keys.root, keys.validity),
        certificate(&sec1(&keys.platform), &keys.intermediate, keys.validity),
    ];
    let mut out = Vec::new();
    for c in certs {
        out.extend_from_slice(&(c.len() as u16).to_be_bytes());
        out.extend_from_slice(&c);
    }
    out
}

/// Values of the records in `buf`, which must follow `layout` exactly, and
/// the offset of the last record.
fn records<'a>(buf: &'a [u8], layout: &[(u8, usize)]) -> Option<(Vec<&'a [u8]>, usize)> {
    let mut pos = 0;
    let mut last = 0;
    let mut values = Vec::new();
    for &(tag, len) in layout {
        last = pos;
        let head = buf.get(pos..pos + 3)?;
        if head[0] != tag || u16::from_be_bytes([head[1], head[2]]) as usize != len {
            return None;
        }
        values.push(buf.get(pos + 3..pos + 3 + len)?);
        pos += 3 + len;
    }
    (pos == buf.len()).then_some((values, last))
}

/// ECDSA check with the host import's semantics: an undecodable key is an
/// error, an undecodable signature is just invalid.
fn check(msg: &[u8], sig: &[u8], key: &[u8]) -> Result<bool, Rejection> {
    let key = VerifyingKey::from_sec1_bytes(key).map_err(|_| Rejection::endorsement("malformed P-256 key"))?;
    Ok(Signature::from_slice(sig).is_ok_and(|s| key.verify(msg, &s).is_ok()))
}

fn check_chain(buf: &[u8], now: i64) -> Result<(Vec<u8>, Vec<u8>), Rejection> {
    let mut certs = Vec::new();
    let mut pos = 0;
    while pos < buf.len() && certs.len() <= 3 {
        let len = buf.get(pos..pos + 2).ok_or_else(|| Rejection::endorsement("truncated chain"))?;
        let len = u16::from_be_bytes([len[0], len[1]]) as usize;
        let cert = buf.get(pos + 2..pos + 2 + len).ok_or_else(|| Rejection::endorsement("truncated chain"))?;
        let (v, sig_at) = records(cert, &CERT_LAYOUT).ok_or_else(|| Rejection::endorsement("malformed certificate"))?;
        certs.push((v, &cert[..sig_at]));
        pos += 2 + len;
    }
    if certs.len() != 3 {
        return Err(Rejection::endorsement("chain must have 3 certificates"));
    }
    let now = u64::try_from(now).map_err(|_| Rejection::endorsement("clock before epoch"))?;
    let mut issuer = certs[0].0[0];
    for (v, signed) in &certs {
        if !check(signed, v[3], issuer)? {
            return Err(Rejection::endorsement("certificate signature invalid"));
        }
        let nbf = u64::from_be_bytes(v[1].try_into().unwrap());
        let naf = u64::from_be_bytes(v[2].try_into().unwrap());
        if now < nbf || now > naf {
            return Err(Rejection::endorsement(format!("certificate not valid at {now}")));
        }
        issuer = v[0];
    }
    Ok((certs[0].0[0].to_vec(), certs[2].0[0].to_vec()))
}

/// Native reference verifier with the same decisions and claims as the
/// MockTEE-B component.
pub fn verify(evidence: &[u8], endorsements: &[Vec<u8>], expected_report_data: &[u8], now: i64) -> Result<Map, Rejection> {
    let invalid = |d: &str| Rejection::new(FailureCode::InvalidEvidence, d);
    let (v, sig_at) = records(evidence, &EVIDENCE_LAYOUT).ok_or_else(|| invalid("not MockTEE-B evidence"))?;
    if v[0] != HEADER || v[4][0] > 1 {
        return Err(invalid("bad header or debug flag"));
    }
    let endorsement = endorsements.first().ok_or_else(|| Rejection::endorsement("no endorsement"))?;
    if crate::is_locator(endorsement) {
        return Err(Rejection::endorsement("locators are not resolved natively"));
    }
    let (root, platform) = check_chain(endorsement, now)?;
    if !check(&evidence[..sig_at], v[5], &platform)? {
        return Err(invalid("evidence signature invalid"));
    }
    if pad_report_data(expected_report_data).as_ref().map(|p| &p[..]) != Some(v[2]) {
        return Err(Rejection::new(FailureCode::FreshnessMismatch, "report data does not match"));
    }
    let Value::Map(claims) = cbor::map([
        ("platform", Value::Text(PLATFORM_NAME.into())),
        ("measurement", Value::Text(hex::encode(v[1]))),
        ("report_data", Value::Bytes(v[2].to_vec())),
        ("svn", Value::Int(u16::from_be_bytes([v[3][0], v[3][1]]) as i64)),
        ("debug", Value::Bool(v[4][0] == 1)),
        ("endorsement_root", Value::Text(hex::encode(root))),
    ]) else {
        unreachable!()
    };
    Ok(claims)
}
