// SPDX-License-Identifier: Apache-2.0

//! Attestation request envelope.
//!
//! A request is a collection of labelled items, each a `(media type, payload)`
//! pair. The profile admits exactly these labels:
//!
//! | label            | cardinality | payload                                 |
//! |------------------|-------------|-----------------------------------------|
//! | `evidence`       | exactly 1   | canonical CBOR [`TrustMeeEvidence`]     |
//! | `endorsement.<n>`| 0..k, dense | opaque endorsement, `n` runs 1..=k      |
//! | `component`      | 0 or 1      | verification component binary           |
//!
//! In CBOR the collection is a map from label to a two-element array
//! `[media_type, payload]`. In JSON it is an object from label to
//! `[media_type, base64(payload)]`.

use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer};
use thiserror::Error;
use trustmee_abi::cbor::{self, DecodeError, Map, Value};

pub const MEDIA_TYPE_CMW_CBOR: &str = "application/vnd.trustmee.cmw+cbor";
pub const MEDIA_TYPE_CMW_JSON: &str = "application/vnd.trustmee.cmw+json";
pub const MEDIA_TYPE_EVIDENCE: &str = "application/vnd.trustmee.evidence+cbor";
pub const MEDIA_TYPE_ENDORSEMENT: &str = "application/vnd.trustmee.endorsement";
pub const MEDIA_TYPE_COMPONENT: &str = "application/wasm";

pub const LABEL_EVIDENCE: &str = "evidence";
pub const LABEL_COMPONENT: &str = "component";
const ENDORSEMENT_PREFIX: &str = "endorsement.";

/// Upper bound on expected report data, the size of common TEE report-data fields.
pub const MAX_REPORT_DATA: usize = 64;

pub const DEFAULT_MAX_INPUT: usize = 64 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CmwError {
    #[error("invalid collection: {0}")]
    InvalidCollection(String),
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("request carries no evidence item")]
    MissingEvidence,
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("request of {len} bytes exceeds limit of {limit}")]
    OversizedInput { len: usize, limit: usize },
    #[error("malformed evidence item: {0}")]
    MalformedEvidenceItem(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Format {
    Cbor,
    Json,
}

impl Format {
    pub fn media_type(self) -> &'static str {
        match self {
            Format::Cbor => MEDIA_TYPE_CMW_CBOR,
            Format::Json => MEDIA_TYPE_CMW_JSON,
        }
    }

    /// Maps a `Content-Type` value (parameters ignored) to a format.
    pub fn from_media_type(content_type: &str) -> Option<Self> {
        let base = content_type.split(';').next().unwrap_or("").trim();
        match base {
            MEDIA_TYPE_CMW_CBOR | "application/cbor" => Some(Format::Cbor),
            MEDIA_TYPE_CMW_JSON | "application/json" => Some(Format::Json),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CmwItem {
    pub media_type: String,
    pub payload: Vec<u8>,
}

impl CmwItem {
    pub fn new(media_type: impl Into<String>, payload: impl Into<Vec<u8>>) -> Self {
        CmwItem { media_type: media_type.into(), payload: payload.into() }
    }

    fn validate(&self, label: &str) -> Result<(), String> {
        if self.media_type.is_empty() || !self.media_type.is_ascii() {
            return Err(format!("{label}: media type must be non-empty ASCII"));
        }
        if self.payload.is_empty() {
            return Err(format!("{label}: empty payload"));
        }
        Ok(())
    }
}

/// A request collection. The label invariants are carried by the shape of the
/// struct; item contents are checked on encode and decode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CmwCollection {
    pub evidence: CmwItem,
    /// Stapled endorsements, `endorsement.1` first.
    pub endorsements: Vec<CmwItem>,
    pub component: Option<CmwItem>,
}

#[derive(Clone, Copy, Debug)]
pub struct Limits {
    pub max_input: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_input: DEFAULT_MAX_INPUT }
    }
}

enum Label {
    Evidence,
    Endorsement(usize),
    Component,
}

fn parse_label(label: &str) -> Result<Label, CmwError> {
    match label {
        LABEL_EVIDENCE => Ok(Label::Evidence),
        LABEL_COMPONENT => Ok(Label::Component),
        _ => {
            let n = label
                .strip_prefix(ENDORSEMENT_PREFIX)
                .filter(|d| !d.is_empty() && !d.starts_with('0') && d.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|d| d.parse::<usize>().ok())
                .ok_or_else(|| CmwError::Malformed(format!("unknown label {label:?}")))?;
            Ok(Label::Endorsement(n))
        }
    }
}

impl CmwCollection {
    pub fn new(evidence: CmwItem) -> Self {
        CmwCollection { evidence, endorsements: Vec::new(), component: None }
    }

    pub fn validate(&self) -> Result<(), CmwError> {
        self.labelled()
            .try_for_each(|(label, item)| item.validate(&label))
            .map_err(CmwError::InvalidCollection)
    }

    /// Items with their labels, in label order (evidence, endorsements, component).
    pub fn labelled(&self) -> impl Iterator<Item = (String, &CmwItem)> {
        std::iter::once((LABEL_EVIDENCE.to_owned(), &self.evidence))
            .chain(
                self.endorsements
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (format!("{ENDORSEMENT_PREFIX}{}", i + 1), e)),
            )
            .chain(self.component.iter().map(|c| (LABEL_COMPONENT.to_owned(), c)))
    }

    fn from_entries(entries: Vec<(String, CmwItem)>) -> Result<Self, CmwError> {
        let mut seen = std::collections::HashSet::new();
        let mut evidence = None;
        let mut component = None;
        let mut endorsements = BTreeMap::new();
        for (label, item) in entries {
            if !seen.insert(label.clone()) {
                return Err(CmwError::DuplicateLabel(label));
            }
            match parse_label(&label)? {
                Label::Evidence => evidence = Some(item),
                Label::Component => component = Some(item),
                Label::Endorsement(n) => {
                    endorsements.insert(n, item);
                }
            }
        }
        let evidence = evidence.ok_or(CmwError::MissingEvidence)?;
        if let Some((&last, _)) = endorsements.last_key_value() {
            if last != endorsements.len() {
                return Err(CmwError::Malformed("endorsement labels are not numbered 1..k".into()));
            }
        }
        let collection = CmwCollection { evidence, endorsements: endorsements.into_values().collect(), component };
        collection.validate().map_err(|e| match e {
            CmwError::InvalidCollection(m) => CmwError::Malformed(m),
            other => other,
        })?;
        Ok(collection)
    }

    pub fn to_cbor_value(&self) -> Value {
        Value::Map(
            self.labelled()
                .map(|(label, item)| {
                    let pair = Value::Array(vec![
                        Value::Text(item.media_type.clone()),
                        Value::Bytes(item.payload.clone()),
                    ]);
                    (label, pair)
                })
                .collect(),
        )
    }
}

/// Serializes a collection. CBOR output is deterministic; JSON base64-encodes
/// every payload.
pub fn encode_request(collection: &CmwCollection, format: Format) -> Result<Vec<u8>, CmwError> {
    collection.validate()?;
    Ok(match format {
        Format::Cbor => cbor::encode(&collection.to_cbor_value()),
        Format::Json => {
            let obj: serde_json::Map<String, serde_json::Value> = collection
                .labelled()
                .map(|(label, item)| {
                    let pair = serde_json::json!([item.media_type, BASE64.encode(&item.payload)]);
                    (label, pair)
                })
                .collect();
            serde_json::to_vec(&obj).expect("JSON serialization of strings cannot fail")
        }
    })
}

pub fn decode_request(raw: &[u8], format: Format, limits: &Limits) -> Result<CmwCollection, CmwError> {
    if raw.len() > limits.max_input {
        return Err(CmwError::OversizedInput { len: raw.len(), limit: limits.max_input });
    }
    let entries = match format {
        Format::Cbor => cbor_entries(raw)?,
        Format::Json => json_entries(raw)?,
    };
    CmwCollection::from_entries(entries)
}

fn cbor_entries(raw: &[u8]) -> Result<Vec<(String, CmwItem)>, CmwError> {
    let value = cbor::decode_with_depth(raw, 2).map_err(|e| match e {
        DecodeError::DuplicateKey(k) => CmwError::DuplicateLabel(k),
        other => CmwError::Malformed(other.to_string()),
    })?;
    let Value::Map(map) = value else {
        return Err(CmwError::Malformed("collection is not a map".into()));
    };
    map.into_iter()
        .map(|(label, v)| {
            let item = match v.as_array() {
                Some([Value::Text(t), Value::Bytes(b)]) => CmwItem::new(t.clone(), b.clone()),
                _ => return Err(CmwError::Malformed(format!("{label}: item is not [text, bytes]"))),
            };
            Ok((label, item))
        })
        .collect()
}

/// JSON object read entry by entry so duplicate labels are seen rather than
/// silently collapsed.
struct JsonEntries(Vec<(String, (String, String))>);

impl<'de> Deserialize<'de> for JsonEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = JsonEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of [media_type, base64] pairs")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, (String, String)>()? {
                    out.push((k, v));
                }
                Ok(JsonEntries(out))
            }
        }
        d.deserialize_map(V)
    }
}

fn json_entries(raw: &[u8]) -> Result<Vec<(String, CmwItem)>, CmwError> {
    let JsonEntries(entries) = serde_json::from_slice(raw).map_err(|e| CmwError::Malformed(e.to_string()))?;
    entries
        .into_iter()
        .map(|(label, (media_type, b64))| {
            let payload = BASE64
                .decode(b64.as_bytes())
                .map_err(|e| CmwError::Malformed(format!("{label}: {e}")))?;
            Ok((label, CmwItem::new(media_type, payload)))
        })
        .collect()
}

/// The TrustMee evidence item: platform evidence plus routing metadata.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrustMeeEvidence {
    pub tee_evidence: Vec<u8>,
    pub component_id: String,
    pub policy_id: String,
    pub expected_report_data: Vec<u8>,
}

impl TrustMeeEvidence {
    pub fn to_cbor(&self) -> Vec<u8> {
        cbor::encode(&cbor::map([
            ("ev", Value::Bytes(self.tee_evidence.clone())),
            ("cid", Value::Text(self.component_id.clone())),
            ("pid", Value::Text(self.policy_id.clone())),
            ("erd", Value::Bytes(self.expected_report_data.clone())),
        ]))
    }

    pub fn from_cbor(bytes: &[u8]) -> Result<Self, CmwError> {
        let bad = |m: &str| CmwError::MalformedEvidenceItem(m.to_owned());
        let v = cbor::decode_with_depth(bytes, 1).map_err(|e| CmwError::MalformedEvidenceItem(e.to_string()))?;
        let m: &Map = v.as_map().ok_or_else(|| bad("not a map"))?;
        if m.len() != 4 {
            return Err(bad("expected exactly the keys ev, cid, pid, erd"));
        }
        let bytes_of = |k: &str| m.get(k).and_then(Value::as_bytes).map(<[u8]>::to_vec);
        let text_of = |k: &str| m.get(k).and_then(Value::as_text).map(str::to_owned);
        let ev = TrustMeeEvidence {
            tee_evidence: bytes_of("ev").ok_or_else(|| bad("ev must be bytes"))?,
            component_id: text_of("cid").ok_or_else(|| bad("cid must be text"))?,
            policy_id: text_of("pid").ok_or_else(|| bad("pid must be text"))?,
            expected_report_data: bytes_of("erd").ok_or_else(|| bad("erd must be bytes"))?,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn validate(&self) -> Result<(), CmwError> {
        if self.component_id.is_empty() || self.policy_id.is_empty() {
            return Err(CmwError::MalformedEvidenceItem("component and policy identifiers must be non-empty".into()));
        }
        if self.expected_report_data.len() > MAX_REPORT_DATA {
            return Err(CmwError::MalformedEvidenceItem(format!(
                "expected report data is {} bytes, at most {MAX_REPORT_DATA} allowed",
                self.expected_report_data.len()
            )));
        }
        Ok(())
    }

    pub fn into_item(&self) -> CmwItem {
        CmwItem::new(MEDIA_TYPE_EVIDENCE, self.to_cbor())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractedRequest {
    pub evidence: TrustMeeEvidence,
    pub endorsements: Vec<Vec<u8>>,
    pub component: Option<Vec<u8>>,
}

pub fn extract_evidence(collection: &CmwCollection) -> Result<ExtractedRequest, CmwError> {
    if collection.evidence.media_type != MEDIA_TYPE_EVIDENCE {
        return Err(CmwError::MalformedEvidenceItem(format!(
            "unexpected media type {:?}",
            collection.evidence.media_type
        )));
    }
    Ok(ExtractedRequest {
        evidence: TrustMeeEvidence::from_cbor(&collection.evidence.payload)?,
        endorsements: collection.endorsements.iter().map(|e| e.payload.clone()).collect(),
        component: collection.component.as_ref().map(|c| c.payload.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn evidence() -> TrustMeeEvidence {
        TrustMeeEvidence {
            tee_evidence: vec![0xaa; 16],
            component_id: "sha256:00".into(),
            policy_id: "p".into(),
            expected_report_data: vec![1; 64],
        }
    }

    fn collection(endorsements: usize, component: bool) -> CmwCollection {
        CmwCollection {
            evidence: evidence().into_item(),
            endorsements: (0..endorsements)
                .map(|i| CmwItem::new(MEDIA_TYPE_ENDORSEMENT, vec![i as u8 + 1; 3]))
                .collect(),
            component: component.then(|| CmwItem::new(MEDIA_TYPE_COMPONENT, b"\0asm\x01\0\0\0".to_vec())),
        }
    }

    #[test]
    fn empty_map_evidence_round_trips() {
        let c = CmwCollection::new(CmwItem::new(MEDIA_TYPE_EVIDENCE, vec![0xa0]));
        for f in [Format::Cbor, Format::Json] {
            let bytes = encode_request(&c, f).unwrap();
            assert_eq!(decode_request(&bytes, f, &Limits::default()).unwrap(), c);
        }
    }

    #[test]
    fn labels_only_evidence() {
        let x = extract_evidence(&collection(0, false)).unwrap();
        assert!(x.endorsements.is_empty());
        assert!(x.component.is_none());
        assert_eq!(x.evidence, evidence());
    }

    #[test]
    fn endorsements_in_label_order() {
        let x = extract_evidence(&collection(2, true)).unwrap();
        assert_eq!(x.endorsements, vec![vec![1; 3], vec![2; 3]]);
        assert!(x.component.is_some());
    }

    #[test]
    fn endorsement_ten_sorts_after_nine() {
        let c = collection(11, false);
        let bytes = encode_request(&c, Format::Cbor).unwrap();
        let back = decode_request(&bytes, Format::Cbor, &Limits::default()).unwrap();
        assert_eq!(back.endorsements[9].payload, vec![10; 3]);
        assert_eq!(back, c);
    }

    #[test]
    fn truncated_cbor_is_malformed() {
        let bytes = encode_request(&collection(1, false), Format::Cbor).unwrap();
        for cut in [1, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                decode_request(&bytes[..cut], Format::Cbor, &Limits::default()),
                Err(CmwError::Malformed(_))
            ));
        }
    }

    #[test]
    fn missing_evidence() {
        let v = cbor::map([(
            "endorsement.1",
            Value::Array(vec![Value::Text("x".into()), Value::Bytes(vec![1])]),
        )]);
        assert_eq!(
            decode_request(&cbor::encode(&v), Format::Cbor, &Limits::default()),
            Err(CmwError::MissingEvidence)
        );
    }

    #[test]
    fn duplicate_labels_both_formats() {
        let item = [0x82, 0x61, b't', 0x41, 0x01];
        let mut raw = vec![0xa2, 0x68];
        raw.extend_from_slice(b"evidence");
        raw.extend_from_slice(&item);
        raw.push(0x68);
        raw.extend_from_slice(b"evidence");
        raw.extend_from_slice(&item);
        assert_eq!(
            decode_request(&raw, Format::Cbor, &Limits::default()),
            Err(CmwError::DuplicateLabel("evidence".into()))
        );
        let json = br#"{"evidence":["t","AQ=="],"evidence":["t","AQ=="]}"#;
        assert_eq!(
            decode_request(json, Format::Json, &Limits::default()),
            Err(CmwError::DuplicateLabel("evidence".into()))
        );
    }

    #[test]
    fn sparse_or_unknown_labels_rejected() {
        let pair = || Value::Array(vec![Value::Text("t".into()), Value::Bytes(vec![1])]);
        for labels in [vec!["evidence", "endorsement.2"], vec!["evidence", "endorsement.01"], vec!["evidence", "extra"]] {
            let v = Value::Map(labels.iter().map(|l| (l.to_string(), pair())).collect());
            assert!(matches!(
                decode_request(&cbor::encode(&v), Format::Cbor, &Limits::default()),
                Err(CmwError::Malformed(_))
            ));
        }
    }

    #[test]
    fn oversized_input() {
        let limits = Limits { max_input: 8 };
        assert_eq!(
            decode_request(&[0u8; 9], Format::Cbor, &limits),
            Err(CmwError::OversizedInput { len: 9, limit: 8 })
        );
    }

    #[test]
    fn invalid_collection_on_encode() {
        let mut c = collection(1, false);
        c.endorsements[0].payload.clear();
        assert!(matches!(encode_request(&c, Format::Cbor), Err(CmwError::InvalidCollection(_))));
        c.endorsements[0] = CmwItem::new("", vec![1]);
        assert!(matches!(encode_request(&c, Format::Json), Err(CmwError::InvalidCollection(_))));
    }

    #[test]
    fn evidence_item_validation() {
        let mut ev = evidence();
        ev.expected_report_data = vec![0; 65];
        assert!(matches!(
            TrustMeeEvidence::from_cbor(&ev.to_cbor()),
            Err(CmwError::MalformedEvidenceItem(_))
        ));
        ev.expected_report_data.clear();
        ev.policy_id.clear();
        assert!(TrustMeeEvidence::from_cbor(&ev.to_cbor()).is_err());
        let mut c = collection(0, false);
        c.evidence.payload = vec![0x01];
        assert!(matches!(extract_evidence(&c), Err(CmwError::MalformedEvidenceItem(_))));
    }

    #[test]
    fn media_type_mapping() {
        assert_eq!(Format::from_media_type("application/vnd.trustmee.cmw+cbor"), Some(Format::Cbor));
        assert_eq!(Format::from_media_type("application/vnd.trustmee.cmw+json; charset=utf-8"), Some(Format::Json));
        assert_eq!(Format::from_media_type("text/plain"), None);
    }

    #[test]
    fn json_is_at_least_quarter_larger_for_kib_payloads() {
        let mut c = collection(1, false);
        c.endorsements[0].payload = (0..1024u32).map(|i| (i * 7) as u8).collect();
        let cb = encode_request(&c, Format::Cbor).unwrap().len();
        let js = encode_request(&c, Format::Json).unwrap().len();
        assert!(js as f64 >= 1.25 * cb as f64, "json {js} vs cbor {cb}");
    }
}
