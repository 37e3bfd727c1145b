// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use ed25519_dalek::SigningKey;
use mocktee_kit::fixtures::{self, write_fixtures};
use mocktee_kit::{generate_evidence, wrap_for_trustmee_as, EvidenceSpec, Fixture, KitKeys, Platform, Validity, WrapRequest};
use rand::rngs::StdRng;
use rand::SeedableRng;
use trustmee_core::appraisal::Tier;
use trustmee_core::cmw::Format;
use trustmee_core::ear::{self, AttestationResult, SignedResult};
use trustmee_core::keyfile;
use trustmee_service::{ServiceConfig, ServiceHandle, Verifier};

pub const TOKEN: &str = "test-admin-token";

pub struct Env {
    pub dir: tempfile::TempDir,
    pub keys: KitKeys,
    pub signer: SigningKey,
    pub service: ServiceHandle,
}

pub fn config_text() -> String {
    format!(
        r#"
listen = "127.0.0.1:0"
trust_store = "trust-store.toml"
policy_dir = "policies"
reference_values = "reference-values.toml"
signing_key = "keys/verifier.ed25519.key"
cache_dir = "cache"
max_request_bytes = 4194304
admin_token = "{TOKEN}"
"#
    )
}

pub fn write_env(dir: &Path, seed: u64) -> (KitKeys, SigningKey) {
    let mut rng = StdRng::seed_from_u64(seed);
    let keys = KitKeys::generate(&mut rng, Validity::around(mocktee_kit::now_unix()));
    let signer = SigningKey::generate(&mut rng);
    write_fixtures(dir, &keys, &signer, u64::MAX).unwrap();
    keyfile::write_ed25519_key(&dir.join("keys/verifier.ed25519.key"), &SigningKey::generate(&mut rng)).unwrap();
    std::fs::write(dir.join("trustmee.toml"), config_text()).unwrap();
    (keys, signer)
}

pub fn setup(seed: u64) -> Env {
    let dir = tempfile::tempdir().unwrap();
    let (keys, signer) = write_env(dir.path(), seed);
    let config = ServiceConfig::load(&dir.path().join("trustmee.toml")).unwrap();
    config.validate().unwrap();
    let verifier = Arc::new(Verifier::from_config(&config).unwrap());
    let service = ServiceHandle::start(verifier, config.listen).unwrap();
    Env { dir, keys, signer, service }
}

impl Env {
    pub fn verifier(&self) -> &Arc<Verifier> {
        self.service.verifier()
    }

    pub fn signed(&self, f: Fixture) -> Vec<u8> {
        f.signed(&self.signer, u64::MAX)
    }

    /// A valid request for `platform` stapling the signed verifier.
    pub fn request(&self, platform: Platform, nonce: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let spec = fixtures::fixture_spec(platform, nonce);
        generate_evidence(platform, &spec, &self.keys)
    }

    pub fn wrap(&self, platform: Platform, evidence: &[u8], endorsement: &[u8], nonce: &[u8], component: &[u8]) -> Vec<u8> {
        self.wrap_as(platform, evidence, endorsement, nonce, component, Format::Cbor)
    }

    pub fn wrap_as(
        &self,
        platform: Platform,
        evidence: &[u8],
        endorsement: &[u8],
        nonce: &[u8],
        component: &[u8],
        format: Format,
    ) -> Vec<u8> {
        let hash_ref = trustmee_core::identity::measure(component).to_ref();
        let endorsements = vec![endorsement.to_vec()];
        wrap_for_trustmee_as(
            &WrapRequest {
                evidence,
                endorsements: &endorsements,
                component_ref: &hash_ref,
                policy_id: &fixtures::policy_id(platform),
                nonce,
                staple_component: Some(component),
            },
            format,
        )
        .unwrap()
    }

    pub fn valid(&self, platform: Platform, nonce: &[u8]) -> Vec<u8> {
        let (ev, end) = self.request(platform, nonce);
        self.wrap(platform, &ev, &end, nonce, &self.signed(platform.verifier()))
    }

    pub fn post_attest(&self, body: &[u8], content_type: &str) -> Response {
        post(&self.service.url("/attest"), body, content_type, None)
    }

    pub fn admin(&self, path: &str, body: &str, content_type: &str) -> Response {
        post(&self.service.url(path), body.as_bytes(), content_type, Some(TOKEN))
    }

    pub fn trusted_keys(&self) -> HashSet<[u8; 32]> {
        let text = get(&self.service.url("/verifier-key")).text();
        let key: [u8; 32] = hex::decode(text.trim()).unwrap().try_into().unwrap();
        HashSet::from([key])
    }

    pub fn metric(&self, name: &str) -> u64 {
        let v: serde_json::Value = serde_json::from_str(&get(&self.service.url("/metrics")).text()).unwrap();
        v["counters"][name].as_u64().unwrap_or(0)
    }
}

pub struct Response {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Response {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.text()))
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    /// Decodes and verifies the signed result.
    pub fn result(&self, trusted: &HashSet<[u8; 32]>) -> AttestationResult {
        assert_eq!(self.status, 200, "{}", self.text());
        let sr = SignedResult::from_cbor(&self.body).unwrap();
        ear::verify_result(&sr, trusted).unwrap()
    }

    pub fn tier(&self, trusted: &HashSet<[u8; 32]>) -> Tier {
        self.result(trusted).status()
    }
}

fn convert(r: ureq::Response) -> Response {
    let status = r.status();
    let headers = r.headers_names().into_iter().filter_map(|n| Some((n.clone(), r.header(&n)?.to_owned()))).collect();
    let mut body = Vec::new();
    std::io::Read::read_to_end(&mut r.into_reader(), &mut body).unwrap();
    Response { status, headers, body }
}

fn finish(r: Result<ureq::Response, ureq::Error>) -> Response {
    match r {
        Ok(r) | Err(ureq::Error::Status(_, r)) => convert(r),
        Err(e) => panic!("transport error: {e}"),
    }
}

pub fn post(url: &str, body: &[u8], content_type: &str, token: Option<&str>) -> Response {
    let mut req = ureq::post(url).set("content-type", content_type);
    if let Some(t) = token {
        req = req.set("authorization", &format!("Bearer {t}"));
    }
    finish(req.send_bytes(body))
}

pub fn get(url: &str) -> Response {
    finish(ureq::get(url).call())
}

pub const CBOR: &str = "application/vnd.trustmee.cmw+cbor";
pub const JSON: &str = "application/vnd.trustmee.cmw+json";

pub fn spec_with_measurement(platform: Platform, m: u8, nonce: &[u8]) -> EvidenceSpec {
    EvidenceSpec { measurement: vec![m; platform.measurement_len()], ..fixtures::fixture_spec(platform, nonce) }
}
