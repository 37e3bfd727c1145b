// SPDX-License-Identifier: Apache-2.0

//! Private key files.
//!
//! A key file holds a `-----BEGIN TRUSTMEE <KIND> PRIVATE KEY-----` line,
//! the hex-encoded secret, and a matching END line. A bare hex line is also
//! accepted.

use std::fs;
use std::io;
use std::path::Path;

use ed25519_dalek::SigningKey;

pub const KIND_ED25519: &str = "ED25519";
pub const KIND_P256: &str = "P256";

pub fn encode_key(kind: &str, secret: &[u8]) -> String {
    format!(
        "-----BEGIN TRUSTMEE {kind} PRIVATE KEY-----\n{}\n-----END TRUSTMEE {kind} PRIVATE KEY-----\n",
        hex::encode(secret)
    )
}

/// Returns the kind, if labelled, and the secret bytes.
pub fn decode_key(text: &str) -> Option<(Option<String>, Vec<u8>)> {
    let mut kind = None;
    let mut body = String::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix("-----BEGIN TRUSTMEE ") {
            kind = Some(rest.strip_suffix(" PRIVATE KEY-----")?.to_owned());
        } else if !line.starts_with("-----END") {
            body.push_str(line);
        }
    }
    Some((kind, hex::decode(body).ok()?))
}

pub fn read_ed25519_key(path: &Path) -> io::Result<SigningKey> {
    let invalid = || io::Error::new(io::ErrorKind::InvalidData, format!("{}: not an Ed25519 key", path.display()));
    let (kind, bytes) = decode_key(&fs::read_to_string(path)?).ok_or_else(invalid)?;
    if kind.is_some_and(|k| k != KIND_ED25519) {
        return Err(invalid());
    }
    let seed: [u8; 32] = bytes.try_into().map_err(|_| invalid())?;
    Ok(SigningKey::from_bytes(&seed))
}

pub fn write_ed25519_key(path: &Path, key: &SigningKey) -> io::Result<()> {
    fs::write(path, encode_key(KIND_ED25519, &key.to_bytes()))
}
