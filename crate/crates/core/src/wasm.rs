// SPDX-License-Identifier: Apache-2.0

//! Just enough of the WebAssembly binary container to find, add and remove
//! custom sections without touching anything else.

use thiserror::Error;

const MAGIC: &[u8; 4] = b"\0asm";
const HEADER_LEN: usize = 8;
const CUSTOM_SECTION_ID: u8 = 0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContainerError {
    #[error("missing WebAssembly header")]
    BadHeader,
    #[error("section framing invalid at offset {0}")]
    BadFraming(usize),
}

/// One section as it appears in the binary.
#[derive(Debug, Clone, Copy)]
pub struct Section<'a> {
    pub id: u8,
    /// Full encoding: id byte, size and contents.
    pub raw: &'a [u8],
    /// Section contents after the size field.
    pub contents: &'a [u8],
}

impl<'a> Section<'a> {
    /// `(name, payload)` for custom sections.
    pub fn custom(&self) -> Option<(&'a str, &'a [u8])> {
        if self.id != CUSTOM_SECTION_ID {
            return None;
        }
        let (len, used) = read_u32_leb(self.contents)?;
        let name = self.contents.get(used..used.checked_add(len as usize)?)?;
        let name = std::str::from_utf8(name).ok()?;
        Some((name, &self.contents[used + len as usize..]))
    }
}

fn read_u32_leb(buf: &[u8]) -> Option<(u32, usize)> {
    let mut result: u64 = 0;
    for (i, &b) in buf.iter().enumerate().take(5) {
        result |= ((b & 0x7f) as u64) << (7 * i);
        if b & 0x80 == 0 {
            return u32::try_from(result).ok().map(|v| (v, i + 1));
        }
    }
    None
}

fn write_u32_leb(out: &mut Vec<u8>, mut v: u32) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

/// Header bytes followed by every section, or a framing error.
pub fn sections(bytes: &[u8]) -> Result<(&[u8], Vec<Section<'_>>), ContainerError> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(ContainerError::BadHeader);
    }
    let mut out = Vec::new();
    let mut pos = HEADER_LEN;
    while pos < bytes.len() {
        let start = pos;
        let id = bytes[pos];
        let (size, used) = read_u32_leb(&bytes[pos + 1..]).ok_or(ContainerError::BadFraming(start))?;
        let body = pos + 1 + used;
        let end = body.checked_add(size as usize).filter(|&e| e <= bytes.len()).ok_or(ContainerError::BadFraming(start))?;
        let section = Section { id, raw: &bytes[start..end], contents: &bytes[body..end] };
        if id == CUSTOM_SECTION_ID && section.custom().is_none() {
            return Err(ContainerError::BadFraming(start));
        }
        out.push(section);
        pos = end;
    }
    Ok((&bytes[..HEADER_LEN], out))
}

/// Payloads of every custom section called `name`, in file order.
pub fn custom_sections<'a>(bytes: &'a [u8], name: &str) -> Result<Vec<&'a [u8]>, ContainerError> {
    Ok(sections(bytes)?
        .1
        .iter()
        .filter_map(|s| s.custom())
        .filter(|(n, _)| *n == name)
        .map(|(_, p)| p)
        .collect())
}

/// Copy of `bytes` without custom sections called `name`. All other bytes are
/// kept verbatim, so the result is identical to the input when no such section
/// exists.
pub fn remove_custom_sections(bytes: &[u8], name: &str) -> Result<Vec<u8>, ContainerError> {
    let (header, secs) = sections(bytes)?;
    let mut out = Vec::with_capacity(bytes.len());
    out.extend_from_slice(header);
    for s in secs {
        if s.custom().map(|(n, _)| n == name).unwrap_or(false) {
            continue;
        }
        out.extend_from_slice(s.raw);
    }
    Ok(out)
}

/// Appends a custom section at the end of the module.
pub fn append_custom_section(bytes: &[u8], name: &str, payload: &[u8]) -> Result<Vec<u8>, ContainerError> {
    sections(bytes)?;
    let mut contents = Vec::with_capacity(name.len() + payload.len() + 5);
    write_u32_leb(&mut contents, name.len() as u32);
    contents.extend_from_slice(name.as_bytes());
    contents.extend_from_slice(payload);
    let mut out = bytes.to_vec();
    out.push(CUSTOM_SECTION_ID);
    write_u32_leb(&mut out, contents.len() as u32);
    out.extend_from_slice(&contents);
    Ok(out)
}
