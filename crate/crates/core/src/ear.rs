// SPDX-License-Identifier: Apache-2.0

//! Signed attestation results.
//!
//! The payload is a canonical CBOR map; the envelope is
//! `{"payload": bstr, "sig": bstr .size 64, "key": bstr .size 32}` with an
//! Ed25519 signature over `"trustmee-ear-v1" ‖ payload`.
//!
//! Payload keys and their closest EAR (draft-ietf-rats-ear) counterparts:
//!
//! | key            | EAR                                   |
//! |----------------|---------------------------------------|
//! | `iat`          | `iat`                                 |
//! | `verifier_id`  | `ear.verifier-id`                     |
//! | `policy_id`    | `ear.appraisal-policy-id`             |
//! | `nonce`        | `eat_nonce`                           |
//! | `status`       | `ear.status`                          |
//! | `trust_vector` | `ear.trustworthiness-vector`          |
//! | `claims`       | `ear.veraison.annotated-evidence`     |
//! | `outcomes`     | no counterpart (per-rule audit trail) |

use std::collections::HashSet;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use thiserror::Error;
use trustmee_abi::cbor::{self, Value};

use crate::appraisal::{Appraisal, ClaimSet, RuleOutcome, Tier, TrustVector};

pub const MEDIA_TYPE_EAR: &str = "application/vnd.trustmee.ear+cbor";
pub const EAR_DOMAIN: &[u8] = b"trustmee-ear-v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttestationResult {
    /// Seconds since the Unix epoch.
    pub issued_at: i64,
    pub verifier_id: String,
    pub policy_id: String,
    /// The request's expected report data, echoed verbatim.
    pub nonce_echo: Vec<u8>,
    pub claims: ClaimSet,
    pub trust_vector: TrustVector,
    pub rule_outcomes: Vec<RuleOutcome>,
}

impl AttestationResult {
    pub fn new(
        issued_at: i64,
        verifier_id: impl Into<String>,
        policy_id: impl Into<String>,
        nonce_echo: Vec<u8>,
        claims: ClaimSet,
        appraisal: Appraisal,
    ) -> Self {
        AttestationResult {
            issued_at,
            verifier_id: verifier_id.into(),
            policy_id: policy_id.into(),
            nonce_echo,
            claims,
            trust_vector: appraisal.trust_vector,
            rule_outcomes: appraisal.outcomes,
        }
    }

    pub fn status(&self) -> Tier {
        self.trust_vector.overall()
    }

    pub fn to_value(&self) -> Value {
        cbor::map([
            ("iat", Value::Int(self.issued_at)),
            ("verifier_id", Value::Text(self.verifier_id.clone())),
            ("policy_id", Value::Text(self.policy_id.clone())),
            ("nonce", Value::Bytes(self.nonce_echo.clone())),
            ("status", Value::Int(self.status() as i64)),
            ("trust_vector", self.trust_vector.to_value()),
            ("claims", self.claims.to_value()),
            ("outcomes", Value::Array(self.rule_outcomes.iter().map(RuleOutcome::to_value).collect())),
        ])
    }

    pub fn from_value(v: &Value) -> Option<Self> {
        let m = v.as_map()?;
        if m.len() != 8 {
            return None;
        }
        let result = AttestationResult {
            issued_at: m.get("iat")?.as_int()?,
            verifier_id: m.get("verifier_id")?.as_text()?.to_owned(),
            policy_id: m.get("policy_id")?.as_text()?.to_owned(),
            nonce_echo: m.get("nonce")?.as_bytes()?.to_vec(),
            claims: ClaimSet::from_value(m.get("claims")?)?,
            trust_vector: TrustVector::from_value(m.get("trust_vector")?)?,
            rule_outcomes: m
                .get("outcomes")?
                .as_array()?
                .iter()
                .map(RuleOutcome::from_value)
                .collect::<Option<_>>()?,
        };
        // The vector must be the one the outcomes imply, and status its maximum.
        if TrustVector::from_outcomes(&result.rule_outcomes) != result.trust_vector
            || m.get("status")?.as_int()? != result.status() as i64
        {
            return None;
        }
        Some(result)
    }

    pub fn to_cbor(&self) -> Vec<u8> {
        cbor::encode(&self.to_value())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedResult {
    pub payload: Vec<u8>,
    pub signature: [u8; 64],
    pub verifier_public_key: [u8; 32],
}

impl SignedResult {
    pub fn to_cbor(&self) -> Vec<u8> {
        cbor::encode(&cbor::map([
            ("payload", Value::Bytes(self.payload.clone())),
            ("sig", Value::Bytes(self.signature.to_vec())),
            ("key", Value::Bytes(self.verifier_public_key.to_vec())),
        ]))
    }

    pub fn from_cbor(bytes: &[u8]) -> Result<Self, EarError> {
        let v = cbor::decode(bytes).map_err(|e| EarError::Malformed(e.to_string()))?;
        let m = v.as_map().filter(|m| m.len() == 3).ok_or_else(|| EarError::Malformed("envelope shape".into()))?;
        let field = |k: &str| m.get(k).and_then(Value::as_bytes).ok_or_else(|| EarError::Malformed(format!("missing {k}")));
        Ok(SignedResult {
            payload: field("payload")?.to_vec(),
            signature: field("sig")?.try_into().map_err(|_| EarError::Malformed("sig length".into()))?,
            verifier_public_key: field("key")?.try_into().map_err(|_| EarError::Malformed("key length".into()))?,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EarError {
    #[error("result signed by an untrusted verifier key")]
    UntrustedVerifier,
    #[error("result signature does not verify")]
    BadSignature,
    #[error("malformed result: {0}")]
    Malformed(String),
}

fn signed_message(payload: &[u8]) -> Vec<u8> {
    let mut msg = Vec::with_capacity(EAR_DOMAIN.len() + payload.len());
    msg.extend_from_slice(EAR_DOMAIN);
    msg.extend_from_slice(payload);
    msg
}

pub fn emit(result: &AttestationResult, key: &SigningKey) -> SignedResult {
    let payload = result.to_cbor();
    let signature = key.sign(&signed_message(&payload)).to_bytes();
    SignedResult { payload, signature, verifier_public_key: key.verifying_key().to_bytes() }
}

/// Relying-party check: signature under a trusted key, then payload decoding.
pub fn verify_result(sr: &SignedResult, trusted: &HashSet<[u8; 32]>) -> Result<AttestationResult, EarError> {
    if !trusted.contains(&sr.verifier_public_key) {
        return Err(EarError::UntrustedVerifier);
    }
    let key = VerifyingKey::from_bytes(&sr.verifier_public_key).map_err(|_| EarError::BadSignature)?;
    key.verify_strict(&signed_message(&sr.payload), &Signature::from_bytes(&sr.signature))
        .map_err(|_| EarError::BadSignature)?;
    let value = cbor::decode(&sr.payload).map_err(|e| EarError::Malformed(e.to_string()))?;
    AttestationResult::from_value(&value).ok_or_else(|| EarError::Malformed("payload shape".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appraisal::{Category, Rule, RuleOp};
    use crate::identity::{ComponentHash, ComponentIdentity};

    pub(crate) fn sample() -> AttestationResult {
        let outcomes = vec![
            RuleOutcome {
                rule: Rule::new("/component/hash", RuleOp::Eq, "h", Category::InstanceIdentity),
                passed: true,
                detail: "equal".into(),
            },
            RuleOutcome {
                rule: Rule::new("/attester/svn", RuleOp::Gte, "svn", Category::Hardware),
                passed: false,
                detail: "1 < 2".into(),
            },
        ];
        let appraisal = Appraisal { trust_vector: TrustVector::from_outcomes(&outcomes), outcomes };
        let claims = ClaimSet {
            component: ComponentIdentity { hash: ComponentHash([7; 32]), signer: None },
            attester: [("svn".to_owned(), Value::Int(1))].into_iter().collect(),
        };
        AttestationResult::new(1_700_000_000, "verifier", "p", vec![9; 64], claims, appraisal)
    }

    #[test]
    fn emit_verify_round_trip() {
        let key = SigningKey::from_bytes(&[1; 32]);
        let sr = emit(&sample(), &key);
        let trusted = HashSet::from([key.verifying_key().to_bytes()]);
        let back = verify_result(&SignedResult::from_cbor(&sr.to_cbor()).unwrap(), &trusted).unwrap();
        assert_eq!(back, sample());
        assert_eq!(back.status(), Tier::Contraindicated);
        assert_eq!(emit(&sample(), &key), sr, "emission is deterministic");
    }

    #[test]
    fn untrusted_and_tampered() {
        let key = SigningKey::from_bytes(&[1; 32]);
        let sr = emit(&sample(), &key);
        assert_eq!(verify_result(&sr, &HashSet::new()), Err(EarError::UntrustedVerifier));
        let trusted = HashSet::from([key.verifying_key().to_bytes()]);
        for i in 0..sr.payload.len() {
            let mut bad = sr.clone();
            bad.payload[i] ^= 0x01;
            assert_eq!(verify_result(&bad, &trusted), Err(EarError::BadSignature), "byte {i}");
        }
    }

    #[test]
    fn inconsistent_vector_is_malformed() {
        let key = SigningKey::from_bytes(&[1; 32]);
        let mut r = sample();
        r.rule_outcomes[1].passed = true;
        // trust_vector still says contraindicated
        let sr = emit(&r, &key);
        let trusted = HashSet::from([key.verifying_key().to_bytes()]);
        assert!(matches!(verify_result(&sr, &trusted), Err(EarError::Malformed(_))));
    }
}
