// SPDX-License-Identifier: Apache-2.0

//! Calling convention between the verifier host and verification components.
//!
//! A component is a core WebAssembly module exporting
//!
//! * `tm_alloc(len: i32) -> i32` returning a buffer of `len` bytes in its
//!   linear memory, and
//! * `tm_evaluate(off: i32, len: i32) -> i64` which reads a canonical CBOR
//!   [`EvaluateInput`] from `off..off+len` and returns `(out_off << 32) | out_len`
//!   locating a canonical CBOR [`EvaluateOutput`].
//!
//! Host services are imported from the module named [`HOST_MODULE`]. Imports
//! that return data do so by calling back into `tm_alloc` and returning a
//! packed location; negative results are [`HostError`] codes.

pub mod cbor;
#[cfg(all(feature = "guest", target_arch = "wasm32"))]
pub mod guest;

use std::fmt;

use cbor::{Map, Value};

pub const HOST_MODULE: &str = "trustmee-host";
pub const EXPORT_ALLOC: &str = "tm_alloc";
pub const EXPORT_EVALUATE: &str = "tm_evaluate";
pub const EXPORT_MEMORY: &str = "memory";

/// Names of the functions under [`HOST_MODULE`].
pub mod imports {
    /// `(url_off, url_len) -> i64`
    pub const HTTP_GET: &str = "http_get";
    /// `(key_off, key_len) -> i64`
    pub const CACHE_READ: &str = "cache_read";
    /// `(key_off, key_len, val_off, val_len) -> i32`
    pub const CACHE_WRITE: &str = "cache_write";
    /// `(msg_off, msg_len, sig_off, sig_len, key_off, key_len) -> i32`
    pub const VERIFY_P256: &str = "verify_p256";
    /// `() -> i64`, seconds since the Unix epoch.
    pub const NOW: &str = "now";
}

/// Error codes returned (negated) by host imports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(i32)]
pub enum HostError {
    NetworkDenied = 1,
    FetchFailed = 2,
    ResponseTooLarge = 3,
    PathEscape = 4,
    QuotaExceeded = 5,
    NotFound = 6,
    MalformedKey = 7,
    BadArgument = 8,
}

impl HostError {
    pub fn code(self) -> i64 {
        -(self as i64)
    }

    pub fn from_code(code: i64) -> Option<Self> {
        use HostError::*;
        Some(match -code {
            1 => NetworkDenied,
            2 => FetchFailed,
            3 => ResponseTooLarge,
            4 => PathEscape,
            5 => QuotaExceeded,
            6 => NotFound,
            7 => MalformedKey,
            8 => BadArgument,
            _ => return None,
        })
    }
}

impl fmt::Display for HostError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub fn pack(off: u32, len: u32) -> i64 {
    (((off as u64) << 32) | len as u64) as i64
}

pub fn unpack(packed: i64) -> (u32, u32) {
    let p = packed as u64;
    ((p >> 32) as u32, p as u32)
}

/// Input handed to a component's `tm_evaluate`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvaluateInput {
    pub tee_evidence: Vec<u8>,
    pub endorsements: Vec<Vec<u8>>,
    pub expected_report_data: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbiError(pub String);

impl fmt::Display for AbiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AbiError {}

fn field<'a>(m: &'a Map, key: &str) -> Result<&'a Value, AbiError> {
    m.get(key).ok_or_else(|| AbiError(format!("missing field {key:?}")))
}

fn bytes_field(m: &Map, key: &str) -> Result<Vec<u8>, AbiError> {
    field(m, key)?
        .as_bytes()
        .map(<[u8]>::to_vec)
        .ok_or_else(|| AbiError(format!("field {key:?} is not a byte string")))
}

impl EvaluateInput {
    pub fn to_value(&self) -> Value {
        cbor::map([
            ("evidence", Value::Bytes(self.tee_evidence.clone())),
            (
                "endorsements",
                Value::Array(self.endorsements.iter().cloned().map(Value::Bytes).collect()),
            ),
            ("report_data", Value::Bytes(self.expected_report_data.clone())),
        ])
    }

    pub fn encode(&self) -> Vec<u8> {
        cbor::encode(&self.to_value())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, AbiError> {
        let v = cbor::decode(bytes).map_err(|e| AbiError(e.to_string()))?;
        let m = v.as_map().ok_or_else(|| AbiError("input is not a map".into()))?;
        let endorsements = field(m, "endorsements")?
            .as_array()
            .ok_or_else(|| AbiError("endorsements is not an array".into()))?
            .iter()
            .map(|e| e.as_bytes().map(<[u8]>::to_vec).ok_or_else(|| AbiError("endorsement is not a byte string".into())))
            .collect::<Result<_, _>>()?;
        Ok(EvaluateInput {
            tee_evidence: bytes_field(m, "evidence")?,
            endorsements,
            expected_report_data: bytes_field(m, "report_data")?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FailureCode {
    InvalidEvidence,
    EndorsementRejected,
    FreshnessMismatch,
    Internal,
}

impl FailureCode {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCode::InvalidEvidence => "invalid_evidence",
            FailureCode::EndorsementRejected => "endorsement_rejected",
            FailureCode::FreshnessMismatch => "freshness_mismatch",
            FailureCode::Internal => "internal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "invalid_evidence" => FailureCode::InvalidEvidence,
            "endorsement_rejected" => FailureCode::EndorsementRejected,
            "freshness_mismatch" => FailureCode::FreshnessMismatch,
            "internal" => FailureCode::Internal,
            _ => return None,
        })
    }
}

impl fmt::Display for FailureCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a component reports back: attester claims, or a classified failure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvaluateOutput {
    Claims(Map),
    Failure { code: FailureCode, detail: String },
}

impl EvaluateOutput {
    pub fn failure(code: FailureCode, detail: impl Into<String>) -> Self {
        EvaluateOutput::Failure { code, detail: detail.into() }
    }

    pub fn to_value(&self) -> Value {
        match self {
            EvaluateOutput::Claims(c) => cbor::map([("claims", Value::Map(c.clone()))]),
            EvaluateOutput::Failure { code, detail } => cbor::map([(
                "error",
                cbor::map([("code", code.as_str()), ("detail", detail.as_str())]),
            )]),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        cbor::encode(&self.to_value())
    }

    /// Decodes an output, nesting at most `max_claims_depth` levels inside the
    /// claims map.
    pub fn decode(bytes: &[u8], max_claims_depth: usize) -> Result<Self, AbiError> {
        // The envelope adds one level above the claims map.
        let v = cbor::decode_with_depth(bytes, max_claims_depth + 1).map_err(|e| AbiError(e.to_string()))?;
        let m = v.as_map().ok_or_else(|| AbiError("output is not a map".into()))?;
        if m.len() != 1 {
            return Err(AbiError("output must hold exactly one of claims/error".into()));
        }
        if let Some(claims) = m.get("claims") {
            return claims
                .as_map()
                .cloned()
                .map(EvaluateOutput::Claims)
                .ok_or_else(|| AbiError("claims is not a map".into()));
        }
        let err = field(m, "error")?.as_map().ok_or_else(|| AbiError("error is not a map".into()))?;
        let code = field(err, "code")?
            .as_text()
            .and_then(FailureCode::parse)
            .ok_or_else(|| AbiError("unknown failure code".into()))?;
        let detail = field(err, "detail")?
            .as_text()
            .ok_or_else(|| AbiError("detail is not text".into()))?
            .to_owned();
        Ok(EvaluateOutput::Failure { code, detail })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_round_trip() {
        assert_eq!(unpack(pack(0xdead_beef, 17)), (0xdead_beef, 17));
        assert_eq!(unpack(pack(0, u32::MAX)), (0, u32::MAX));
    }

    #[test]
    fn host_error_codes_are_negative() {
        for e in [HostError::NetworkDenied, HostError::BadArgument] {
            assert!(e.code() < 0);
            assert_eq!(HostError::from_code(e.code()), Some(e));
        }
        assert_eq!(HostError::from_code(0), None);
    }

    #[test]
    fn input_round_trip() {
        let input = EvaluateInput {
            tee_evidence: vec![1, 2, 3],
            endorsements: vec![vec![4], vec![]],
            expected_report_data: vec![9; 64],
        };
        assert_eq!(EvaluateInput::decode(&input.encode()).unwrap(), input);
    }

    #[test]
    fn output_depth_bound() {
        let mut deep = Value::Int(0);
        for _ in 0..8 {
            deep = cbor::map([("x", deep)]);
        }
        let Value::Map(claims) = deep else { unreachable!() };
        let out = EvaluateOutput::Claims(claims).encode();
        assert!(EvaluateOutput::decode(&out, 8).is_ok());
        assert!(EvaluateOutput::decode(&out, 7).is_err());
    }

    #[test]
    fn failure_round_trip() {
        let out = EvaluateOutput::failure(FailureCode::FreshnessMismatch, "nonce");
        assert_eq!(EvaluateOutput::decode(&out.encode(), 8).unwrap(), out);
    }
}
