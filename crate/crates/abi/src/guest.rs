// SPDX-License-Identifier: Apache-2.0

//! Component-side half of the calling convention.
//!
//! A component crate provides `fn evaluate(&EvaluateInput) -> EvaluateOutput`
//! and invokes [`export_component!`](crate::export_component) to generate the
//! `tm_alloc`/`tm_evaluate` exports around it.

use crate::{pack, unpack, EvaluateInput, EvaluateOutput, FailureCode, HostError};

mod ffi {
    #[link(wasm_import_module = "trustmee-host")]
    extern "C" {
        pub fn http_get(url_off: i32, url_len: i32) -> i64;
        pub fn cache_read(key_off: i32, key_len: i32) -> i64;
        pub fn cache_write(key_off: i32, key_len: i32, val_off: i32, val_len: i32) -> i32;
        pub fn verify_p256(
            msg_off: i32,
            msg_len: i32,
            sig_off: i32,
            sig_len: i32,
            key_off: i32,
            key_len: i32,
        ) -> i32;
        pub fn now() -> i64;
    }
}

/// Hands out a leaked buffer. Instances live for a single evaluation, so
/// nothing is ever freed.
pub fn alloc(len: i32) -> i32 {
    let buf = vec![0u8; len.max(0) as usize].into_boxed_slice();
    Box::leak(buf).as_mut_ptr() as i32
}

fn leak(bytes: Vec<u8>) -> i64 {
    let len = bytes.len() as u32;
    let ptr = Box::leak(bytes.into_boxed_slice()).as_ptr() as u32;
    pack(ptr, len)
}

pub fn run(off: i32, len: i32, evaluate: fn(&EvaluateInput) -> EvaluateOutput) -> i64 {
    // SAFETY: the host wrote `len` bytes at `off`, a buffer it obtained from `alloc`.
    let raw = unsafe { core::slice::from_raw_parts(off as usize as *const u8, len as usize) };
    let out = match EvaluateInput::decode(raw) {
        Ok(input) => evaluate(&input),
        Err(e) => EvaluateOutput::failure(FailureCode::Internal, format!("bad input: {e}")),
    };
    leak(out.encode())
}

fn take_result(packed: i64) -> Result<Vec<u8>, HostError> {
    if packed < 0 {
        return Err(HostError::from_code(packed).unwrap_or(HostError::BadArgument));
    }
    let (off, len) = unpack(packed);
    // SAFETY: the host filled a buffer it obtained from `alloc`.
    Ok(unsafe { core::slice::from_raw_parts(off as usize as *const u8, len as usize) }.to_vec())
}

pub fn http_get(url: &str) -> Result<Vec<u8>, HostError> {
    take_result(unsafe { ffi::http_get(url.as_ptr() as i32, url.len() as i32) })
}

pub fn cache_read(key: &str) -> Result<Vec<u8>, HostError> {
    take_result(unsafe { ffi::cache_read(key.as_ptr() as i32, key.len() as i32) })
}

pub fn cache_write(key: &str, value: &[u8]) -> Result<(), HostError> {
    let rc = unsafe {
        ffi::cache_write(key.as_ptr() as i32, key.len() as i32, value.as_ptr() as i32, value.len() as i32)
    };
    if rc < 0 {
        Err(HostError::from_code(rc as i64).unwrap_or(HostError::BadArgument))
    } else {
        Ok(())
    }
}

/// ECDSA P-256/SHA-256 check performed natively by the host. `sig` is `r ‖ s`
/// (64 bytes), `key` a SEC1 point.
pub fn verify_p256(msg: &[u8], sig: &[u8], key: &[u8]) -> Result<bool, HostError> {
    let rc = unsafe {
        ffi::verify_p256(
            msg.as_ptr() as i32,
            msg.len() as i32,
            sig.as_ptr() as i32,
            sig.len() as i32,
            key.as_ptr() as i32,
            key.len() as i32,
        )
    };
    match rc {
        0 => Ok(false),
        1 => Ok(true),
        e => Err(HostError::from_code(e as i64).unwrap_or(HostError::BadArgument)),
    }
}

pub fn now() -> i64 {
    unsafe { ffi::now() }
}

/// Generates the component exports around an evaluate function.
#[macro_export]
macro_rules! export_component {
    ($evaluate:path) => {
        #[no_mangle]
        pub extern "C" fn tm_alloc(len: i32) -> i32 {
            $crate::guest::alloc(len)
        }

        #[no_mangle]
        pub extern "C" fn tm_evaluate(off: i32, len: i32) -> i64 {
            $crate::guest::run(off, len, $evaluate)
        }
    };
}
