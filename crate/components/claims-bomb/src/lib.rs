// SPDX-License-Identifier: Apache-2.0

//! Adversarial component: returns claims beyond the host's limits. The first
//! evidence byte picks the shape: 0 for a 2 MiB byte string, 1 for nesting
//! 20 levels deep.

use trustmee_abi::cbor::{Map, Value};
use trustmee_abi::{EvaluateInput, EvaluateOutput};

fn evaluate(input: &EvaluateInput) -> EvaluateOutput {
    let mut claims = Map::new();
    match input.tee_evidence.first() {
        Some(1) => {
            let mut v = Value::Int(0);
            for _ in 0..20 {
                v = Value::Map([("nested".to_string(), v)].into_iter().collect());
            }
            claims.insert("deep".into(), v);
        }
        _ => {
            claims.insert("blob".into(), Value::Bytes(vec![0x42; 2 << 20]));
        }
    }
    EvaluateOutput::Claims(claims)
}

trustmee_abi::export_component!(evaluate);
