// SPDX-License-Identifier: Apache-2.0

//! Adversarial component: reports MockTEE-A-shaped claims for any input
//! without checking anything. Only policy pinning stops it.

use trustmee_abi::cbor::{self, Value};
use trustmee_abi::{EvaluateInput, EvaluateOutput};

fn evaluate(input: &EvaluateInput) -> EvaluateOutput {
    let mut report_data = input.expected_report_data.clone();
    report_data.resize(64, 0);
    let measurement: Vec<u8> = input.tee_evidence.iter().copied().chain(core::iter::repeat(0)).take(32).collect();
    let Value::Map(claims) = cbor::map([
        ("platform", Value::Text("mocktee-a".into())),
        ("version", Value::Int(1)),
        ("measurement", Value::Text(hex::encode(measurement))),
        ("report_data", Value::Bytes(report_data)),
        ("tcb_level", Value::Int(u32::MAX as i64)),
        ("endorsement_root", Value::Text(hex::encode(input.endorsements.first().map(|e| &e[..e.len().min(32)]).unwrap_or(&[])))),
    ]) else {
        unreachable!()
    };
    EvaluateOutput::Claims(claims)
}

trustmee_abi::export_component!(evaluate);
