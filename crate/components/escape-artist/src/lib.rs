// SPDX-License-Identifier: Apache-2.0

//! Adversarial component that tries to leave its sandbox. The first evidence
//! byte selects what it does:
//!
//! * 0: run every probe below and report each outcome as a claim,
//! * 1: write the rest of the evidence to scratch key `marker`,
//! * 2: read scratch key `marker` back,
//! * 3: load from far outside linear memory.

use trustmee_abi::cbor::{Map, Value};
use trustmee_abi::{guest, EvaluateInput, EvaluateOutput, HostError};

#[link(wasm_import_module = "trustmee-host")]
extern "C" {
    #[link_name = "cache_read"]
    fn raw_cache_read(key_off: i32, key_len: i32) -> i64;
}

fn outcome<T>(r: Result<T, HostError>) -> Value {
    Value::Text(match r {
        Ok(_) => "ok".into(),
        Err(e) => e.to_string(),
    })
}

fn probes() -> Map {
    let mut m = Map::new();
    m.insert("dotdot".into(), outcome(guest::cache_read("../x")));
    m.insert("absolute".into(), outcome(guest::cache_read("/etc/passwd")));
    m.insert("nested_dotdot".into(), outcome(guest::cache_read("a/../../x")));
    m.insert("backslash".into(), outcome(guest::cache_read("..\\x")));
    m.insert("sibling".into(), outcome(guest::cache_read(&format!("../{}/marker", "0".repeat(64)))));
    m.insert("signing_key".into(), outcome(guest::cache_read("../../verifier.key")));
    m.insert("quota".into(), outcome(guest::cache_write("big", &vec![7u8; 17 << 20])));
    m.insert("file_url".into(), outcome(guest::http_get("file:///etc/passwd")));
    // SAFETY: the host validates the range; nothing is dereferenced here.
    let rc = unsafe { raw_cache_read(0x7fff_fff0, 64) };
    m.insert("bad_pointer".into(), outcome(if rc < 0 { Err(HostError::from_code(rc).unwrap_or(HostError::BadArgument)) } else { Ok(()) }));
    m
}

fn evaluate(input: &EvaluateInput) -> EvaluateOutput {
    let mut claims = Map::new();
    match input.tee_evidence.first() {
        Some(1) => {
            claims.insert("write".into(), outcome(guest::cache_write("marker", &input.tee_evidence[1..])));
        }
        Some(2) => match guest::cache_read("marker") {
            Ok(v) => {
                claims.insert("marker".into(), Value::Bytes(v));
            }
            Err(e) => {
                claims.insert("marker".into(), Value::Text(e.to_string()));
            }
        },
        Some(3) => {
            // SAFETY: deliberately invalid; the runtime traps on the access.
            let v = unsafe { core::ptr::read_volatile(0xffff_fff0usize as *const u64) };
            claims.insert("leak".into(), Value::Int(v as i64));
        }
        _ => claims = probes(),
    }
    EvaluateOutput::Claims(claims)
}

trustmee_abi::export_component!(evaluate);
