// SPDX-License-Identifier: Apache-2.0

mod common;

use common::{post, setup, CBOR, JSON, TOKEN};
use mocktee_kit::{fixtures, native_reference_verify, now_unix, Fixture, Platform};
use trustmee_core::abi::cbor::Value;
use trustmee_core::appraisal::{Category, Tier};
use trustmee_core::cmw::{self, CmwCollection, CmwItem, Format};

#[test]
fn valid_requests_are_affirmed_and_match_the_native_verifier() {
    let env = setup(1);
    let trusted = env.trusted_keys();
    for platform in Platform::ALL {
        let nonce = format!("nonce-{platform}");
        let (ev, end) = env.request(platform, nonce.as_bytes());
        let body = env.wrap(platform, &ev, &end, nonce.as_bytes(), &env.signed(platform.verifier()));
        let resp = env.post_attest(&body, CBOR);
        assert_eq!(resp.header("content-type"), Some(trustmee_core::ear::MEDIA_TYPE_EAR));
        let result = resp.result(&trusted);
        assert_eq!(result.status(), Tier::Affirming, "{:?}", result.rule_outcomes);
        assert_eq!(result.nonce_echo, nonce.as_bytes());
        assert_eq!(result.policy_id, fixtures::policy_id(platform));
        let native = native_reference_verify(platform, &ev, &[end], nonce.as_bytes(), now_unix()).unwrap();
        assert_eq!(result.claims.attester, native);
        assert_eq!(result.claims.component.hash, platform.verifier().hash());
        assert!(result.claims.component.signer.is_some());
        let timing = resp.header("x-trustmee-timing").unwrap();
        for stage in ["parse", "resolve", "identify", "load", "instantiate", "verify", "appraise", "sign", "total"] {
            assert!(timing.contains(&format!("{stage}=")), "{timing}");
        }
    }
}

#[test]
fn json_requests_get_the_same_verdict() {
    let env = setup(2);
    let trusted = env.trusted_keys();
    let (ev, end) = env.request(Platform::B, b"n");
    let comp = env.signed(Fixture::MockteeB);
    let cbor_body = env.wrap_as(Platform::B, &ev, &end, b"n", &comp, Format::Cbor);
    let json_body = env.wrap_as(Platform::B, &ev, &end, b"n", &comp, Format::Json);
    assert!(json_body.len() > cbor_body.len());
    let a = env.post_attest(&cbor_body, CBOR).result(&trusted);
    let b = env.post_attest(&json_body, JSON).result(&trusted);
    assert_eq!(a.status(), Tier::Affirming);
    assert_eq!((a.claims, a.rule_outcomes), (b.claims, b.rule_outcomes));
}

#[test]
fn tampered_evidence_is_denied_with_a_signed_result() {
    let env = setup(3);
    let trusted = env.trusted_keys();
    for platform in Platform::ALL {
        let (mut ev, end) = env.request(platform, b"n");
        let i = ev.len() / 2;
        ev[i] ^= 0x10;
        let body = env.wrap(platform, &ev, &end, b"n", &env.signed(platform.verifier()));
        let result = env.post_attest(&body, CBOR).result(&trusted);
        assert_eq!(result.status(), Tier::Contraindicated);
        assert!(result.rule_outcomes.iter().any(|o| !o.passed && o.rule.category == Category::Hardware));
    }
}

#[test]
fn wrong_nonce_is_an_instance_identity_failure() {
    let env = setup(4);
    let trusted = env.trusted_keys();
    let (ev, end) = env.request(Platform::A, b"fresh");
    let body = env.wrap(Platform::A, &ev, &end, b"stale", &env.signed(Fixture::MockteeA));
    let result = env.post_attest(&body, CBOR).result(&trusted);
    assert_eq!(result.status(), Tier::Contraindicated);
    assert_eq!(result.trust_vector.tier(Category::InstanceIdentity), Tier::Contraindicated);
    assert_eq!(result.nonce_echo, b"stale");
}

#[test]
fn unknown_policy_is_denied() {
    let env = setup(5);
    let trusted = env.trusted_keys();
    let (ev, end) = env.request(Platform::A, b"n");
    let comp = env.signed(Fixture::MockteeA);
    let endorsements = vec![end];
    let body = mocktee_kit::wrap_for_trustmee(&mocktee_kit::WrapRequest {
        evidence: &ev,
        endorsements: &endorsements,
        component_ref: &Fixture::MockteeA.hash().to_ref(),
        policy_id: "no-such-policy",
        nonce: b"n",
        staple_component: Some(&comp),
    })
    .unwrap();
    assert_eq!(env.post_attest(&body, CBOR).tier(&trusted), Tier::Contraindicated);
}

#[test]
fn transport_errors() {
    let env = setup(6);
    let check = |body: &[u8], ct: &str, status: u16, code: &str| {
        let r = env.post_attest(body, ct);
        assert_eq!(r.status, status, "{}", r.text());
        assert_eq!(r.json()["code"], code, "{}", r.text());
        assert!(r.json()["detail"].is_string());
    };
    check(b"\xff\x00garbage", CBOR, 400, "malformed");
    check(b"{", JSON, 400, "malformed");
    check(b"", CBOR, 400, "malformed");

    let no_evidence = CmwCollection {
        evidence: CmwItem::new("text/plain", b"x".to_vec()),
        endorsements: vec![],
        component: None,
    };
    let encoded = cmw::encode_request(&no_evidence, Format::Cbor).unwrap();
    check(&encoded, CBOR, 400, "malformed");
    let only_component = trustmee_core::abi::cbor::encode(&trustmee_core::abi::cbor::map([(
        "component",
        Value::Array(vec![Value::Text(cmw::MEDIA_TYPE_COMPONENT.into()), Value::Bytes(b"\0asm".to_vec())]),
    )]));
    check(&only_component, CBOR, 400, "missing_evidence");

    let r = env.post_attest(b"x", "text/plain");
    assert_eq!(r.status, 415);

    let big = vec![0u8; 4 * 1024 * 1024 + 1];
    check(&big, CBOR, 413, "oversized");

    // Hash reference that nothing resolves.
    let (ev, end) = env.request(Platform::A, b"n");
    let endorsements = vec![end];
    let unresolvable = mocktee_kit::wrap_for_trustmee(&mocktee_kit::WrapRequest {
        evidence: &ev,
        endorsements: &endorsements,
        component_ref: &format!("sha256:{}", "ab".repeat(32)),
        policy_id: "mocktee-a",
        nonce: b"n",
        staple_component: None,
    })
    .unwrap();
    check(&unresolvable, CBOR, 404, "not_found");

    // Stapled bytes that do not match the hash reference.
    let mismatched = env.wrap(Platform::A, &ev, &endorsements[0], b"n", &env.signed(Fixture::MockteeA));
    let coll = cmw::decode_request(&mismatched, Format::Cbor, &Default::default()).unwrap();
    let mut swapped = coll.clone();
    swapped.component = Some(CmwItem::new(cmw::MEDIA_TYPE_COMPONENT, Fixture::MockteeB.bytes().to_vec()));
    check(&cmw::encode_request(&swapped, Format::Cbor).unwrap(), CBOR, 400, "digest_mismatch");

    // Not a module at all.
    let mut junk = coll;
    let junk_bytes = b"not wasm".to_vec();
    let mut item = trustmee_core::cmw::extract_evidence(&junk).unwrap().evidence;
    item.component_id = trustmee_core::identity::measure(&junk_bytes).to_ref();
    junk.evidence = item.into_item();
    junk.component = Some(CmwItem::new(cmw::MEDIA_TYPE_COMPONENT, junk_bytes));
    check(&cmw::encode_request(&junk, Format::Cbor).unwrap(), CBOR, 422, "invalid_component");
}

#[test]
fn hostile_components_are_rejected_and_the_service_survives() {
    let env = setup(7);
    let trusted = env.trusted_keys();
    let (ev, end) = env.request(Platform::A, b"n");
    for (fixture, codes) in [
        (Fixture::InfiniteLoop, &["fuel_exhausted", "wall_clock_exceeded"][..]),
        (Fixture::MemoryHog, &["memory_exceeded"][..]),
        (Fixture::EscapeArtist, &[][..]),
        (Fixture::ClaimsBomb, &[][..]),
    ] {
        let body = env.wrap(Platform::A, &ev, &end, b"n", fixture.bytes());
        let r = env.post_attest(&body, CBOR);
        if codes.is_empty() {
            // Runs to completion but cannot satisfy the A policy.
            assert_eq!(r.tier(&trusted), Tier::Contraindicated, "{}", fixture.name());
        } else {
            assert_eq!(r.status, 422, "{}: {}", fixture.name(), r.text());
            let code = r.json()["code"].as_str().unwrap().to_owned();
            assert!(codes.contains(&code.as_str()), "{}: {code}", fixture.name());
        }
    }
    assert_eq!(env.post_attest(&env.valid(Platform::A, b"n"), CBOR).tier(&trusted), Tier::Affirming);
    assert!(env.metric("sandbox.aborts") >= 2);
    assert!(env.metric("attest.error.memory_exceeded") >= 1);
}

#[test]
fn verifier_key_is_hex() {
    let env = setup(8);
    let text = common::get(&env.service.url("/verifier-key")).text();
    assert_eq!(text.len(), 64);
    assert_eq!(hex::decode(&text).unwrap(), env.verifier().public_key());
}

#[test]
fn warm_request_counts_as_cache_resolution() {
    let env = setup(9);
    let body = env.valid(Platform::A, b"n");
    let first = env.post_attest(&body, CBOR);
    assert_eq!(first.header("x-trustmee-source"), Some("stapled"));
    assert_eq!(env.metric("resolve.source=stapled"), 1);
    assert_eq!(env.metric("resolve.source=cache"), 0);
    let second = env.post_attest(&body, CBOR);
    assert_eq!(second.header("x-trustmee-source"), Some("cache"));
    assert_eq!(env.metric("resolve.source=cache"), 1);
    assert_eq!(env.metric("compile.count"), 1);
    assert_eq!(env.metric("compile.cache_hits"), 1);
    let metrics = common::get(&env.service.url("/metrics")).json();
    assert_eq!(metrics["histograms"]["stage.total"]["count"], 2);
}

#[test]
fn admin_endpoints_require_the_token() {
    let env = setup(10);
    for path in ["/admin/policies", "/admin/reference-values", "/admin/trust-store/reload", "/admin/cache/clear"] {
        let url = env.service.url(path);
        assert_eq!(post(&url, b"", "text/plain", None).status, 401, "{path}");
        assert_eq!(post(&url, b"", "text/plain", Some("wrong")).status, 401, "{path}");
        assert_eq!(post(&url, b"", "text/plain", Some(&format!("{TOKEN}x"))).status, 401, "{path}");
    }
}

#[test]
fn admin_updates_change_verdicts() {
    let env = setup(11);
    let trusted = env.trusted_keys();
    let body = env.valid(Platform::A, b"n");
    assert_eq!(env.post_attest(&body, CBOR).tier(&trusted), Tier::Affirming);

    // Raise the minimum TCB above what the fixture evidence reports.
    let r = env.admin("/admin/reference-values", r#"{"mocktee-a.min_tcb": 99}"#, "application/json");
    assert_eq!(r.status, 200, "{}", r.text());
    assert_eq!(r.json()["installed"], 1);
    assert_eq!(env.post_attest(&body, CBOR).tier(&trusted), Tier::Contraindicated);
    let r = env.admin("/admin/reference-values", "\"mocktee-a.min_tcb\" = 1\n", "application/toml");
    assert_eq!(r.status, 200, "{}", r.text());
    assert_eq!(env.post_attest(&body, CBOR).tier(&trusted), Tier::Affirming);

    // A policy without a component pin is refused and changes nothing.
    let unpinned = "policy_id = \"mocktee-a\"\n[[rules]]\nclaim_path = \"/attester/platform\"\nop = \"present\"\ncategory = \"hardware\"\n";
    let r = env.admin("/admin/policies", unpinned, "application/toml");
    assert_eq!(r.status, 422, "{}", r.text());
    assert_eq!(r.json()["code"], "validation_failed");
    assert_eq!(env.admin("/admin/policies", "not toml [", "application/toml").status, 400);
    assert_eq!(env.post_attest(&body, CBOR).tier(&trusted), Tier::Affirming);

    // Replace the A policy with one that pins only the B verifier.
    let (mut policy, _) = fixtures::platform_policy(Platform::B, "mocktee-b");
    policy.policy_id = "mocktee-a".into();
    let r = env.admin("/admin/policies", &policy.to_toml_string(), "application/toml");
    assert_eq!(r.status, 200, "{}", r.text());
    assert_eq!(r.json()["policy_id"], "mocktee-a");
    assert_eq!(env.post_attest(&body, CBOR).tier(&trusted), Tier::Contraindicated);
}

#[test]
fn trust_store_reload_downgrades_a_removed_signer() {
    let env = setup(12);
    let trusted = env.trusted_keys();
    let body = env.valid(Platform::B, b"n");
    let before = env.post_attest(&body, CBOR).result(&trusted);
    assert!(before.claims.component.signer.is_some());

    std::fs::write(env.dir.path().join("trust-store.toml"), "").unwrap();
    let r = env.admin("/admin/trust-store/reload", "", "text/plain");
    assert_eq!(r.status, 200, "{}", r.text());
    assert_eq!(r.json()["signers"], 0);
    let after = env.post_attest(&body, CBOR).result(&trusted);
    assert_eq!(after.claims.component.signer, None);
    // The fixture policy pins by hash, so the verdict holds.
    assert_eq!(after.status(), Tier::Affirming);

    std::fs::write(env.dir.path().join("trust-store.toml"), "[signers.zz]\n").unwrap();
    assert_eq!(env.admin("/admin/trust-store/reload", "", "text/plain").status, 422);
}

#[test]
fn cache_clear_makes_the_next_request_cold() {
    let env = setup(13);
    let body = env.valid(Platform::A, b"n");
    env.post_attest(&body, CBOR);
    env.post_attest(&body, CBOR);
    assert_eq!(env.metric("compile.count"), 1);
    assert_eq!(env.admin("/admin/cache/clear", "", "text/plain").status, 200);
    let r = env.post_attest(&body, CBOR);
    assert_eq!(r.header("x-trustmee-source"), Some("stapled"));
    assert_eq!(env.metric("compile.count"), 2);
    assert_eq!(env.metric("admin.cache_clears"), 1);
}

#[test]
fn claims_carry_component_identity() {
    let env = setup(14);
    let trusted = env.trusted_keys();
    let (ev, end) = env.request(Platform::A, b"n");
    let unsigned = env.wrap(Platform::A, &ev, &end, b"n", Fixture::MockteeA.bytes());
    let r = env.post_attest(&unsigned, CBOR).result(&trusted);
    assert_eq!(r.claims.component.signer, None);
    let v = r.claims.to_value();
    assert_eq!(v.pointer("/component/signer"), Some(&Value::Null));
    assert_eq!(v.pointer("/component/hash"), Some(&Value::Text(Fixture::MockteeA.hash().to_hex())));
}
