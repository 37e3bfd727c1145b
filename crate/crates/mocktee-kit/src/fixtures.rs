// SPDX-License-Identifier: Apache-2.0

//! On-disk fixture set.
//!
//! Layout under the chosen directory:
//!
//! ```text
//! keys/a-root.ed25519.key          keys/b-root.p256.key
//! keys/a-platform.ed25519.key      keys/b-intermediate.p256.key
//! keys/component-signer.ed25519.key keys/b-platform.p256.key
//! evidence/<platform>.evidence.bin     raw evidence, nonce = evidence/nonce.bin
//! evidence/<platform>.endorsement.bin  raw endorsement chain
//! requests/<platform>.cmw.cbor         wrapped request (component by hash reference)
//! requests/<platform>.cmw.json
//! requests/<platform>.stapled.cmw.cbor same request with the component stapled
//! components/<fixture>.wasm            unsigned module
//! components/<fixture>.signed.wasm     signed by component-signer
//! trust-store.toml                     trusts component-signer, network allowed
//! policies/<platform>.toml             policy pinning the platform verifier
//! reference-values.toml                values the policies refer to
//! ```
//!
//! Keys are PEM-like text: a `-----BEGIN TRUSTMEE <KIND> PRIVATE KEY-----`
//! line, the hex-encoded secret scalar, and a matching END line.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ed25519_dalek::SigningKey as EdKey;
use trustmee_core::abi::cbor::Value;
use trustmee_core::appraisal::{
    reference_values_to_toml, AppraisalPolicy, Category, Rule, RuleOp, PATH_COMPONENT_HASH,
};
use trustmee_core::identity::{ExecutionPolicy, SignerKey, TrustStore};

use crate::{components, generate_evidence, wrap_for_trustmee_as, EvidenceSpec, KitKeys, Platform, WrapRequest};
use trustmee_core::cmw::Format;

pub use trustmee_core::keyfile::{encode_key, read_ed25519_key, write_ed25519_key, KIND_ED25519, KIND_P256};

pub const NONCE: &[u8] = b"fixture-nonce";

/// Policy pinning the platform's verifier component, with rules on the
/// platform's claims against reference values named `<policy_id>.*`.
/// Returns the reference values that do not depend on key material.
pub fn platform_policy(platform: Platform, policy_id: &str) -> (AppraisalPolicy, Vec<(String, Value)>) {
    let key = |k: &str| format!("{policy_id}.{k}");
    let mut rules = vec![
        Rule::new(PATH_COMPONENT_HASH, RuleOp::InSet, key("component"), Category::InstanceIdentity),
        Rule::new("/attester/platform", RuleOp::Eq, key("platform"), Category::Hardware),
        Rule::new("/attester/endorsement_root", RuleOp::InSet, key("roots"), Category::Hardware),
        Rule::new("/attester/measurement", RuleOp::InSet, key("measurements"), Category::Executables),
    ];
    match platform {
        Platform::A => rules.push(Rule::new("/attester/tcb_level", RuleOp::Gte, key("min_tcb"), Category::Hardware)),
        Platform::B => {
            rules.push(Rule::new("/attester/svn", RuleOp::Gte, key("min_tcb"), Category::Hardware));
            rules.push(Rule::new("/attester/debug", RuleOp::Eq, key("debug"), Category::Configuration));
        }
    }
    let refs = vec![
        (key("component"), Value::Array(vec![Value::Text(platform.verifier().hash().to_hex())])),
        (key("platform"), Value::Text(platform.name().to_owned())),
        (key("min_tcb"), Value::Int(1)),
        (key("debug"), Value::Bool(false)),
    ];
    (AppraisalPolicy { policy_id: policy_id.to_owned(), rules }, refs)
}

/// Default measurement used for fixture evidence.
pub fn fixture_measurement(platform: Platform) -> Vec<u8> {
    vec![0xa5; platform.measurement_len()]
}

pub fn fixture_spec(platform: Platform, nonce: &[u8]) -> EvidenceSpec {
    EvidenceSpec { measurement: fixture_measurement(platform), report_data: nonce.to_vec(), tcb: 2, debug: false }
}

/// Reference values completing [`platform_policy`] for evidence produced
/// with `keys` and [`fixture_spec`].
pub fn platform_reference_values(
    platform: Platform,
    policy_id: &str,
    keys: &KitKeys,
) -> Vec<(String, Value)> {
    let (_, mut refs) = platform_policy(platform, policy_id);
    refs.push((format!("{policy_id}.roots"), Value::Array(vec![Value::Text(keys.root_hex(platform))])));
    refs.push((
        format!("{policy_id}.measurements"),
        Value::Array(vec![Value::Text(hex::encode(fixture_measurement(platform)))]),
    ));
    refs
}

pub fn policy_id(platform: Platform) -> String {
    format!("mocktee-{}", platform.to_string().to_lowercase())
}

/// Writes a complete fixture set under `dir` and returns the paths written.
pub fn write_fixtures(dir: &Path, keys: &KitKeys, signer: &EdKey, expiry: u64) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |rel: &str, bytes: &[u8]| -> io::Result<()> {
        let p = dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    put("keys/a-root.ed25519.key", encode_key(KIND_ED25519, &keys.a.root.to_bytes()).as_bytes())?;
    put("keys/a-platform.ed25519.key", encode_key(KIND_ED25519, &keys.a.platform.to_bytes()).as_bytes())?;
    put("keys/b-root.p256.key", encode_key(KIND_P256, &keys.b.root.to_bytes()).as_bytes())?;
    put("keys/b-intermediate.p256.key", encode_key(KIND_P256, &keys.b.intermediate.to_bytes()).as_bytes())?;
    put("keys/b-platform.p256.key", encode_key(KIND_P256, &keys.b.platform.to_bytes()).as_bytes())?;
    put("keys/component-signer.ed25519.key", encode_key(KIND_ED25519, &signer.to_bytes()).as_bytes())?;
    put("evidence/nonce.bin", NONCE)?;

    for (fixture, c) in components::build_fixture_components(signer, expiry) {
        put(&format!("components/{}.wasm", fixture.name()), &c.unsigned)?;
        put(&format!("components/{}.signed.wasm", fixture.name()), &c.signed)?;
    }

    let mut refs = Vec::new();
    for platform in Platform::ALL {
        let lower = platform.to_string().to_lowercase();
        let (ev, end) = generate_evidence(platform, &fixture_spec(platform, NONCE), keys);
        put(&format!("evidence/{lower}.evidence.bin"), &ev)?;
        put(&format!("evidence/{lower}.endorsement.bin"), &end)?;
        let endorsements = vec![end];
        let component = platform.verifier();
        let component_ref = component.hash().to_ref();
        let mut req = WrapRequest {
            evidence: &ev,
            endorsements: &endorsements,
            component_ref: &component_ref,
            policy_id: &policy_id(platform),
            nonce: NONCE,
            staple_component: None,
        };
        let enc = |r: &WrapRequest<'_>, f| wrap_for_trustmee_as(r, f).map_err(|e| io::Error::other(e.to_string()));
        put(&format!("requests/{lower}.cmw.cbor"), &enc(&req, Format::Cbor)?)?;
        put(&format!("requests/{lower}.cmw.json"), &enc(&req, Format::Json)?)?;
        req.staple_component = Some(component.bytes());
        put(&format!("requests/{lower}.stapled.cmw.cbor"), &enc(&req, Format::Cbor)?)?;

        let (policy, _) = platform_policy(platform, &policy_id(platform));
        put(&format!("policies/{lower}.toml"), policy.to_toml_string().as_bytes())?;
        refs.extend(platform_reference_values(platform, &policy_id(platform), keys));
    }
    let text = reference_values_to_toml(refs.iter().map(|(k, v)| (k.as_str(), v)));
    put("reference-values.toml", text.as_bytes())?;
    let networked = ExecutionPolicy { network_allowed: true, ..ExecutionPolicy::restrictive() };
    let store = TrustStore::default().with_signer(SignerKey::from(signer), networked);
    put("trust-store.toml", store.to_toml_string().as_bytes())?;
    Ok(written)
}
