// SPDX-License-Identifier: Apache-2.0

//! Deterministic CBOR subset used on every wire in the system.
//!
//! The profile admits integers in the `i64` range, byte strings, text strings,
//! arrays, maps keyed by text, and the simple values `false`, `true` and `null`.
//! Floating point, tags and indefinite-length items are rejected on decode and
//! cannot be represented on encode.
//!
//! Encoding is deterministic: definite lengths, shortest-form heads, and map
//! entries ordered bytewise by the encoding of their keys. For text keys that
//! ordering is "shorter first, then bytewise", which is what [`canonical_key_order`]
//! implements.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

pub type Map = BTreeMap<String, Value>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Bytes(Vec<u8>),
    Text(String),
    Array(Vec<Value>),
    Map(Map),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DecodeError {
    /// Input ended inside an item.
    Truncated,
    /// Bytes remain after the top-level item.
    TrailingBytes(usize),
    /// A construct outside the profile (floats, tags, indefinite lengths...).
    Unsupported(&'static str),
    /// Head with a reserved additional-info value.
    InvalidHead(u8),
    /// Integer does not fit the `i64` range.
    IntegerOverflow,
    InvalidUtf8,
    NonTextKey,
    DuplicateKey(String),
    DepthExceeded(usize),
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeError::Truncated => f.write_str("input truncated"),
            DecodeError::TrailingBytes(n) => write!(f, "{n} trailing bytes after item"),
            DecodeError::Unsupported(what) => write!(f, "unsupported CBOR construct: {what}"),
            DecodeError::InvalidHead(b) => write!(f, "invalid initial byte 0x{b:02x}"),
            DecodeError::IntegerOverflow => f.write_str("integer outside i64 range"),
            DecodeError::InvalidUtf8 => f.write_str("text string is not valid UTF-8"),
            DecodeError::NonTextKey => f.write_str("map key is not a text string"),
            DecodeError::DuplicateKey(k) => write!(f, "duplicate map key {k:?}"),
            DecodeError::DepthExceeded(d) => write!(f, "nesting deeper than {d}"),
        }
    }
}

impl std::error::Error for DecodeError {}

/// Default nesting limit for [`decode`].
pub const DEFAULT_MAX_DEPTH: usize = 32;

/// Ordering of text map keys under deterministic encoding.
pub fn canonical_key_order(a: &str, b: &str) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.as_bytes().cmp(b.as_bytes()))
}

// ---------------------------------------------------------------- encoding

fn write_head(out: &mut Vec<u8>, major: u8, n: u64) {
    let m = major << 5;
    if n < 24 {
        out.push(m | n as u8);
    } else if n <= u8::MAX as u64 {
        out.push(m | 24);
        out.push(n as u8);
    } else if n <= u16::MAX as u64 {
        out.push(m | 25);
        out.extend_from_slice(&(n as u16).to_be_bytes());
    } else if n <= u32::MAX as u64 {
        out.push(m | 26);
        out.extend_from_slice(&(n as u32).to_be_bytes());
    } else {
        out.push(m | 27);
        out.extend_from_slice(&n.to_be_bytes());
    }
}

fn write_value(out: &mut Vec<u8>, v: &Value) {
    match v {
        Value::Null => out.push(0xf6),
        Value::Bool(false) => out.push(0xf4),
        Value::Bool(true) => out.push(0xf5),
        Value::Int(i) if *i >= 0 => write_head(out, 0, *i as u64),
        Value::Int(i) => write_head(out, 1, !(*i) as u64),
        Value::Bytes(b) => {
            write_head(out, 2, b.len() as u64);
            out.extend_from_slice(b);
        }
        Value::Text(s) => {
            write_head(out, 3, s.len() as u64);
            out.extend_from_slice(s.as_bytes());
        }
        Value::Array(items) => {
            write_head(out, 4, items.len() as u64);
            for item in items {
                write_value(out, item);
            }
        }
        Value::Map(map) => {
            write_head(out, 5, map.len() as u64);
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| canonical_key_order(a.0, b.0));
            for (k, v) in entries {
                write_head(out, 3, k.len() as u64);
                out.extend_from_slice(k.as_bytes());
                write_value(out, v);
            }
        }
    }
}

/// Deterministic encoding of `value`.
pub fn encode(value: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    write_value(&mut out, value);
    out
}

/// Length in bytes of the deterministic encoding, without allocating it.
pub fn encoded_len(value: &Value) -> usize {
    fn head_len(n: u64) -> usize {
        match n {
            0..=23 => 1,
            24..=0xff => 2,
            0x100..=0xffff => 3,
            0x1_0000..=0xffff_ffff => 5,
            _ => 9,
        }
    }
    match value {
        Value::Null | Value::Bool(_) => 1,
        Value::Int(i) if *i >= 0 => head_len(*i as u64),
        Value::Int(i) => head_len(!(*i) as u64),
        Value::Bytes(b) => head_len(b.len() as u64) + b.len(),
        Value::Text(s) => head_len(s.len() as u64) + s.len(),
        Value::Array(items) => head_len(items.len() as u64) + items.iter().map(encoded_len).sum::<usize>(),
        Value::Map(map) => {
            head_len(map.len() as u64)
                + map
                    .iter()
                    .map(|(k, v)| head_len(k.len() as u64) + k.len() + encoded_len(v))
                    .sum::<usize>()
        }
    }
}

// ---------------------------------------------------------------- decoding

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    max_depth: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn head(&mut self) -> Result<(u8, u8, u64), DecodeError> {
        let ib = self.take(1)?[0];
        let major = ib >> 5;
        let info = ib & 0x1f;
        let arg = match info {
            0..=23 => info as u64,
            24 => self.take(1)?[0] as u64,
            25 => u16::from_be_bytes(self.take(2)?.try_into().unwrap()) as u64,
            26 => u32::from_be_bytes(self.take(4)?.try_into().unwrap()) as u64,
            27 => u64::from_be_bytes(self.take(8)?.try_into().unwrap()),
            28..=30 => return Err(DecodeError::InvalidHead(ib)),
            _ => {
                return Err(if major == 0 || major == 1 || major == 6 {
                    DecodeError::InvalidHead(ib)
                } else {
                    DecodeError::Unsupported("indefinite length")
                })
            }
        };
        Ok((major, info, arg))
    }

    fn length(&mut self, arg: u64) -> Result<usize, DecodeError> {
        // Every element occupies at least one byte, so any declared length
        // beyond what is left cannot be satisfied.
        if arg > self.remaining() as u64 {
            return Err(DecodeError::Truncated);
        }
        Ok(arg as usize)
    }

    fn value(&mut self, depth: usize) -> Result<Value, DecodeError> {
        if depth > self.max_depth {
            return Err(DecodeError::DepthExceeded(self.max_depth));
        }
        let (major, info, arg) = self.head()?;
        match major {
            0 => i64::try_from(arg).map(Value::Int).map_err(|_| DecodeError::IntegerOverflow),
            1 => i64::try_from(arg)
                .map(|n| Value::Int(-1 - n))
                .map_err(|_| DecodeError::IntegerOverflow),
            2 => {
                let n = self.length(arg)?;
                Ok(Value::Bytes(self.take(n)?.to_vec()))
            }
            3 => {
                let n = self.length(arg)?;
                let raw = self.take(n)?;
                std::str::from_utf8(raw)
                    .map(|s| Value::Text(s.to_owned()))
                    .map_err(|_| DecodeError::InvalidUtf8)
            }
            4 => {
                let n = self.length(arg)?;
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(self.value(depth + 1)?);
                }
                Ok(Value::Array(items))
            }
            5 => {
                let n = self.length(arg)?;
                let mut map = Map::new();
                for _ in 0..n {
                    let key = match self.value(depth + 1)? {
                        Value::Text(k) => k,
                        _ => return Err(DecodeError::NonTextKey),
                    };
                    let v = self.value(depth + 1)?;
                    if map.contains_key(&key) {
                        return Err(DecodeError::DuplicateKey(key));
                    }
                    map.insert(key, v);
                }
                Ok(Value::Map(map))
            }
            6 => Err(DecodeError::Unsupported("tag")),
            _ => match info {
                20 => Ok(Value::Bool(false)),
                21 => Ok(Value::Bool(true)),
                22 => Ok(Value::Null),
                25..=27 => Err(DecodeError::Unsupported("floating point")),
                _ => Err(DecodeError::Unsupported("simple value")),
            },
        }
    }
}

/// Decodes exactly one item spanning all of `bytes`, nesting at most
/// [`DEFAULT_MAX_DEPTH`] levels.
pub fn decode(bytes: &[u8]) -> Result<Value, DecodeError> {
    decode_with_depth(bytes, DEFAULT_MAX_DEPTH)
}

/// Like [`decode`] with an explicit nesting limit. Depth 0 is the top-level item.
pub fn decode_with_depth(bytes: &[u8], max_depth: usize) -> Result<Value, DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0, max_depth };
    let v = r.value(0)?;
    if r.remaining() != 0 {
        return Err(DecodeError::TrailingBytes(r.remaining()));
    }
    Ok(v)
}

// ---------------------------------------------------------------- helpers

impl Value {
    pub fn as_map(&self) -> Option<&Map> {
        match self {
            Value::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[Value]> {
        match self {
            Value::Array(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Looks up `key` when `self` is a map.
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.as_map().and_then(|m| m.get(key))
    }

    /// Resolves a slash-separated path such as `/attester/measurement`.
    /// The empty path and `/` both address `self`.
    pub fn pointer(&self, path: &str) -> Option<&Value> {
        let mut cur = self;
        for seg in path.split('/').filter(|s| !s.is_empty()) {
            cur = match cur {
                Value::Map(m) => m.get(seg)?,
                Value::Array(a) => a.get(seg.parse::<usize>().ok()?)?,
                _ => return None,
            };
        }
        Some(cur)
    }

    /// Nesting depth: scalars are 0, a flat map or array is 1.
    pub fn depth(&self) -> usize {
        match self {
            Value::Array(a) => 1 + a.iter().map(Value::depth).max().unwrap_or(0),
            Value::Map(m) => 1 + m.values().map(Value::depth).max().unwrap_or(0),
            _ => 0,
        }
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<u32> for Value {
    fn from(v: u32) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u16> for Value {
    fn from(v: u16) -> Self {
        Value::Int(v as i64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<Vec<u8>> for Value {
    fn from(v: Vec<u8>) -> Self {
        Value::Bytes(v)
    }
}

impl From<&[u8]> for Value {
    fn from(v: &[u8]) -> Self {
        Value::Bytes(v.to_vec())
    }
}

impl From<Map> for Value {
    fn from(v: Map) -> Self {
        Value::Map(v)
    }
}

impl From<Vec<Value>> for Value {
    fn from(v: Vec<Value>) -> Self {
        Value::Array(v)
    }
}

/// Builds a map from `(key, value)` pairs.
pub fn map<K, V, I>(entries: I) -> Value
where
    K: Into<String>,
    V: Into<Value>,
    I: IntoIterator<Item = (K, V)>,
{
    Value::Map(entries.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
}
