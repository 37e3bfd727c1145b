// SPDX-License-Identifier: Apache-2.0

//! Fetches the URL given as evidence and reports what happened.
//!
//! Claims: `{"network": "ok" | "<host error>", "body_len": int}`.

use trustmee_abi::cbor::{self, Value};
use trustmee_abi::{guest, EvaluateInput, EvaluateOutput, FailureCode};

fn evaluate(input: &EvaluateInput) -> EvaluateOutput {
    let Ok(url) = core::str::from_utf8(&input.tee_evidence) else {
        return EvaluateOutput::failure(FailureCode::InvalidEvidence, "evidence must be a UTF-8 URL");
    };
    let (status, len) = match guest::http_get(url) {
        Ok(body) => ("ok".to_string(), body.len() as i64),
        Err(e) => (e.to_string(), -1),
    };
    let Value::Map(claims) = cbor::map([("network", Value::Text(status)), ("body_len", Value::Int(len))]) else {
        unreachable!()
    };
    EvaluateOutput::Claims(claims)
}

trustmee_abi::export_component!(evaluate);
