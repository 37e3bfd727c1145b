// SPDX-License-Identifier: Apache-2.0

//! Checks P-256 signatures both through the host import and with a pure
//! in-sandbox implementation, for differential testing.
//!
//! Evidence: CBOR array of `[msg, sig, key]` byte-string triples. Claims:
//! `{"results": [[host, sandbox], ...]}` where each entry is 1 (valid),
//! 0 (invalid) or the negative host error code.

use p256::ecdsa::signature::Verifier;
use p256::ecdsa::{Signature, VerifyingKey};
use trustmee_abi::cbor::{self, Value};
use trustmee_abi::{guest, EvaluateInput, EvaluateOutput, FailureCode, HostError};

fn in_sandbox(msg: &[u8], sig: &[u8], key: &[u8]) -> i64 {
    let Ok(key) = VerifyingKey::from_sec1_bytes(key) else {
        return HostError::MalformedKey.code();
    };
    let Ok(sig) = Signature::from_slice(sig) else {
        return 0;
    };
    key.verify(msg, &sig).is_ok() as i64
}

fn via_host(msg: &[u8], sig: &[u8], key: &[u8]) -> i64 {
    match guest::verify_p256(msg, sig, key) {
        Ok(ok) => ok as i64,
        Err(e) => e.code(),
    }
}

fn evaluate(input: &EvaluateInput) -> EvaluateOutput {
    let Ok(Value::Array(triples)) = cbor::decode(&input.tee_evidence) else {
        return EvaluateOutput::failure(FailureCode::InvalidEvidence, "expected an array of triples");
    };
    let mut results = Vec::with_capacity(triples.len());
    for t in &triples {
        let parts: Option<Vec<&[u8]>> = t.as_array().map(|a| a.iter().filter_map(Value::as_bytes).collect());
        let Some([msg, sig, key]) = parts.as_deref() else {
            return EvaluateOutput::failure(FailureCode::InvalidEvidence, "triple must hold three byte strings");
        };
        results.push(Value::Array(vec![Value::Int(via_host(msg, sig, key)), Value::Int(in_sandbox(msg, sig, key))]));
    }
    let Value::Map(claims) = cbor::map([("results", Value::Array(results))]) else {
        unreachable!()
    };
    EvaluateOutput::Claims(claims)
}

trustmee_abi::export_component!(evaluate);
