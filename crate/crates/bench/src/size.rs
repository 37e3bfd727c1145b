// SPDX-License-Identifier: Apache-2.0

//! Request size accounting.
//!
//! Every TrustMee variant is compared with the request a native verifier
//! for the same platform would receive: the raw evidence and the same
//! endorsements in a collection, without a component reference.

use std::fmt::Write as _;

use mocktee_kit::Platform;
use trustmee_core::cmw::Format;

use crate::client::BenchError;
use crate::testbed::{collateral_path, registry_name, ComponentMode, PlatformFixture, RequestOptions};

pub const BASELINE: &str = "native";
pub const HASH_REF: &str = "hash-ref";
pub const REGISTRY_REF: &str = "registry-ref";
pub const STAPLED: &str = "stapled-component";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeOptions {
    pub staple_collateral: bool,
    pub staple_component: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizeRow {
    pub platform: Platform,
    pub variant: &'static str,
    pub cbor: usize,
    pub json: usize,
}

impl SizeRow {
    pub fn json_ratio(&self) -> f64 {
        self.json as f64 / self.cbor as f64
    }
}

/// Sizes for one platform. `authority` is the `host:port` that collateral
/// locators and registry references name; only its length matters.
pub fn measure(fixture: &PlatformFixture, opts: SizeOptions, authority: &str) -> Result<Vec<SizeRow>, BenchError> {
    let (name, tag) = registry_name(fixture.platform);
    let mut variants = vec![
        (HASH_REF, ComponentMode::HashRef),
        (REGISTRY_REF, ComponentMode::Registry(format!("reg://{authority}/{name}:{tag}"))),
    ];
    if opts.staple_component {
        variants.push((STAPLED, ComponentMode::Stapled));
    }
    let base = RequestOptions {
        staple_collateral: opts.staple_collateral,
        collateral_url: Some(format!("http://{authority}{}", collateral_path(fixture.platform))),
        component: ComponentMode::HashRef,
        format: Format::Cbor,
    };
    let sized = |f: &dyn Fn(&RequestOptions) -> Result<Vec<u8>, BenchError>, component: ComponentMode| {
        let cbor = f(&RequestOptions { component: component.clone(), format: Format::Cbor, ..base.clone() })?.len();
        let json = f(&RequestOptions { component, format: Format::Json, ..base.clone() })?.len();
        Ok::<_, BenchError>((cbor, json))
    };
    let (cbor, json) = sized(&|o| fixture.baseline_request(o), ComponentMode::HashRef)?;
    let mut rows = vec![SizeRow { platform: fixture.platform, variant: BASELINE, cbor, json }];
    for (variant, mode) in variants {
        let (cbor, json) = sized(&|o| fixture.request(o), mode)?;
        rows.push(SizeRow { platform: fixture.platform, variant, cbor, json });
    }
    Ok(rows)
}

fn delta(v: usize, base: usize) -> String {
    let d = v as i64 - base as i64;
    let pct = 100.0 * d as f64 / base as f64;
    format!("{d:+} ({pct:+.1}%)")
}

/// Table with deltas against the native baseline of the same platform and
/// encoding.
pub fn render_table(rows: &[SizeRow], component_len: impl Fn(Platform) -> usize) -> String {
    let mut out = format!(
        "{:<8} {:<18} {:>9} {:>18} {:>9} {:>18} {:>10}\n",
        "platform", "variant", "cbor", "cbor delta", "json", "json delta", "json/cbor"
    );
    for r in rows {
        let base = rows.iter().find(|b| b.platform == r.platform && b.variant == BASELINE).unwrap_or(r);
        let _ = writeln!(
            out,
            "{:<8} {:<18} {:>9} {:>18} {:>9} {:>18} {:>10.3}",
            r.platform.to_string(),
            r.variant,
            r.cbor,
            delta(r.cbor, base.cbor),
            r.json,
            delta(r.json, base.json),
            r.json_ratio()
        );
    }
    for p in Platform::ALL {
        if rows.iter().any(|r| r.platform == p && r.variant == STAPLED) {
            let _ = writeln!(out, "platform {p} component: {} bytes", component_len(p));
        }
    }
    out
}
