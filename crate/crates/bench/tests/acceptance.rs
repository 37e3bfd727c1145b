// SPDX-License-Identifier: Apache-2.0

//! Acceptance criteria, one test each. Every test prints a single
//! `criterion NN: PASS|FAIL` line; run with `--nocapture` to see them.
//! Tests hold a shared lock so timing measurements are not disturbed by
//! each other.

use std::collections::HashSet;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use ed25519_dalek::SigningKey;
use mocktee_kit::components::variant;
use mocktee_kit::corpus::{self, CorpusKeys, Tamper};
use mocktee_kit::fixtures;
use mocktee_kit::{generate_evidence, native_reference_verify, now_unix, Fixture, Platform, WrapRequest};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use trustmee_bench::client::AttestResponse;
use trustmee_bench::latency::{self, LatencyConfig, Mode};
use trustmee_bench::size::{self, SizeOptions};
use trustmee_bench::testbed::{collateral_path, registry_name, ComponentChoice};
use trustmee_bench::{report, Testbed};
use trustmee_core::abi::cbor::{self, Map, Value};
use trustmee_core::abi::{EvaluateInput, EvaluateOutput};
use trustmee_core::appraisal::{
    Appraisal, Category, ClaimSet, Rule, RuleOp, RuleOutcome, Tier, TrustVector, PATH_COMPONENT_SIGNER,
};
use trustmee_core::cmw::{self, CmwCollection, CmwItem, Format, Limits, TrustMeeEvidence};
use trustmee_core::ear::{self, AttestationResult, SignedResult};
use trustmee_core::identity::{self, ComponentIdentity, ExecutionPolicy, SignerKey};
use trustmee_core::sandbox::{Sandbox, SandboxConfig};

static SERIAL: Mutex<()> = Mutex::new(());

fn criterion(n: u32, title: &str, body: impl FnOnce() -> String) {
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(detail) => {
            println!("criterion {n:02}: PASS  {title} [{detail}; {:.1} s]", started.elapsed().as_secs_f64())
        }
        Err(panic) => {
            println!("criterion {n:02}: FAIL  {title}");
            resume_unwind(panic)
        }
    }
}

const CBOR: &str = cmw::MEDIA_TYPE_CMW_CBOR;

fn bed(seed: u64) -> Testbed {
    Testbed::start(seed, Duration::from_millis(trustmee_bench::DEFAULT_NETWORK_DELAY_MS)).unwrap()
}

fn trusted(bed: &Testbed) -> HashSet<[u8; 32]> {
    HashSet::from([bed.verifier().public_key()])
}

fn decode(bed: &Testbed, r: &AttestResponse) -> AttestationResult {
    assert_eq!(r.status, 200, "{}", String::from_utf8_lossy(&r.body));
    ear::verify_result(&SignedResult::from_cbor(&r.body).unwrap(), &trusted(bed)).unwrap()
}

fn wrap(evidence: &[u8], endorsements: &[Vec<u8>], component_ref: &str, policy_id: &str, nonce: &[u8], staple: Option<&[u8]>) -> Vec<u8> {
    mocktee_kit::wrap_for_trustmee(&WrapRequest {
        evidence,
        endorsements,
        component_ref,
        policy_id,
        nonce,
        staple_component: staple,
    })
    .unwrap()
}

fn stapled(evidence: &[u8], endorsements: &[Vec<u8>], component: &[u8], policy_id: &str, nonce: &[u8]) -> Vec<u8> {
    wrap(evidence, endorsements, &identity::measure(component).to_ref(), policy_id, nonce, Some(component))
}

fn random_nonce(rng: &mut StdRng) -> Vec<u8> {
    (0..rng.gen_range(1..=64)).map(|_| rng.gen()).collect()
}

fn signed_verifier(bed: &Testbed, platform: Platform) -> Vec<u8> {
    platform.verifier().signed(&bed.keys.component_signer, u64::MAX)
}

#[test]
fn c01_end_to_end_accept_deny() {
    criterion(1, "end-to-end accept/deny agrees with the native verifiers", || {
        let started = Instant::now();
        let bed = bed(1);
        let client = bed.client();
        let mut rng = StdRng::seed_from_u64(1);
        let mut counts = Vec::new();
        for platform in Platform::ALL {
            let comp = signed_verifier(&bed, platform);
            let pid = fixtures::policy_id(platform);
            let (mut affirmed, mut denied) = (0, 0);
            for i in 0..200 {
                let nonce = random_nonce(&mut rng);
                let (mut ev, mut end) = generate_evidence(platform, &fixtures::fixture_spec(platform, &nonce), &bed.keys.kit);
                let tampered = i % 2 == 1;
                if tampered {
                    let target = if rng.gen_bool(0.5) { &mut ev } else { &mut end };
                    let j = rng.gen_range(0..target.len());
                    target[j] ^= rng.gen_range(1..=255u8);
                }
                let native = native_reference_verify(platform, &ev, &[end.clone()], &nonce, now_unix());
                let r = decode(&bed, &client.attest(&stapled(&ev, &[end], &comp, &pid, &nonce), CBOR).unwrap());
                match native {
                    Ok(claims) => {
                        assert!(!tampered, "native verifier accepted a tampered request");
                        assert_eq!(r.status(), Tier::Affirming, "{:?}", r.rule_outcomes);
                        assert_eq!(r.claims.attester, claims);
                        affirmed += 1;
                    }
                    Err(_) => {
                        assert!(tampered, "native verifier rejected a valid request");
                        assert_eq!(r.status(), Tier::Contraindicated);
                        denied += 1;
                    }
                }
                assert_eq!(r.nonce_echo, nonce);
            }
            assert_eq!((affirmed, denied), (100, 100));
            counts.push(format!("{platform}: 100 affirmed, 100 denied"));
        }
        // Still serving.
        client.verifier_key().unwrap();
        let metrics = client.metrics().unwrap();
        assert_eq!(metrics.counter("attest.ok"), 400);
        assert!(started.elapsed() < Duration::from_secs(120), "took {:?}", started.elapsed());
        counts.join(", ")
    });
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn rust_sources(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap().flatten() {
        let p = e.path();
        if p.is_dir() {
            rust_sources(&p, out);
        } else if p.extension().is_some_and(|x| x == "rs") {
            out.push(p);
        }
    }
}

/// Non-test part of a source file: everything before `#[cfg(test)]`.
fn non_test_source(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    match text.find("#[cfg(test)]") {
        Some(i) => text[..i].to_owned(),
        None => text,
    }
}

fn word_in(haystack: &str, word: &str) -> bool {
    let is_ident = |c: char| c.is_ascii_alphanumeric() || c == '_';
    haystack.match_indices(word).any(|(i, _)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + word.len()..].chars().next();
        !before.is_some_and(is_ident) && !after.is_some_and(is_ident)
    })
}

#[test]
fn c02_platform_agnostic_sources() {
    criterion(2, "no platform format knowledge in the verifier, appraisal or sandbox sources", || {
        let root = workspace_root();
        let crates = ["crates/abi", "crates/core", "crates/service"];
        let mut markers: Vec<String> = vec!["mocktee".into(), "MockTEE".into()];
        for p in Platform::ALL {
            markers.extend(p.format_markers().into_iter().map(str::to_owned));
        }
        // Claim names only one platform's evidence produces.
        let claim_words = ["tcb_level", "svn"];
        let mut files = Vec::new();
        for c in crates {
            rust_sources(&root.join(c).join("src"), &mut files);
        }
        assert!(files.len() >= 10, "found only {} source files", files.len());
        let mut hits = Vec::new();
        for f in &files {
            let src = non_test_source(f);
            let lower = src.to_lowercase();
            for m in &markers {
                if lower.contains(&m.to_lowercase()) {
                    hits.push(format!("{}: {m}", f.display()));
                }
            }
            for w in claim_words {
                if word_in(&src, w) {
                    hits.push(format!("{}: {w}", f.display()));
                }
            }
        }
        for c in crates {
            let manifest = std::fs::read_to_string(root.join(c).join("Cargo.toml")).unwrap();
            let deps = manifest.split("[dev-dependencies]").next().unwrap();
            if deps.contains("mocktee") {
                hits.push(format!("{c}/Cargo.toml depends on the platform kit"));
            }
        }
        assert!(hits.is_empty(), "platform knowledge outside the kit:\n{}", hits.join("\n"));
        format!("{} files in {} crates scanned", files.len(), crates.len())
    });
}

#[test]
fn c03_impersonation_defense() {
    criterion(3, "impersonator signed by an untrusted key never affirms under the A policy", || {
        let bed = bed(3);
        let client = bed.client();
        let mut rng = StdRng::seed_from_u64(3);
        let pid = fixtures::policy_id(Platform::A);
        for _ in 0..50 {
            let untrusted = SigningKey::generate(&mut rng);
            let comp = Fixture::Impersonator.signed(&untrusted, u64::MAX);
            let nonce = random_nonce(&mut rng);
            // Real, valid A evidence half the time; random bytes otherwise.
            let (ev, end) = if rng.gen_bool(0.5) {
                generate_evidence(Platform::A, &fixtures::fixture_spec(Platform::A, &nonce), &bed.keys.kit)
            } else {
                ((0..rng.gen_range(1..300)).map(|_| rng.gen()).collect(), vec![rng.gen()])
            };
            let r = decode(&bed, &client.attest(&stapled(&ev, &[end], &comp, &pid, &nonce), CBOR).unwrap());
            assert_ne!(r.status(), Tier::Affirming);
            assert_eq!(r.trust_vector.tier(Category::InstanceIdentity), Tier::Contraindicated);
            assert_eq!(r.claims.component.signer, None);
            assert_eq!(r.claims.component.hash, Fixture::Impersonator.hash());
        }
        "50/50 attempts denied".into()
    });
}

#[test]
fn c04_metering() {
    criterion(4, "runaway components are stopped within the wall-clock limit", || {
        let bed = bed(4);
        let client = bed.client();
        let limit = Duration::from_millis(ExecutionPolicy::restrictive().wall_clock_limit_ms);
        let (ev, end) = generate_evidence(Platform::A, &fixtures::fixture_spec(Platform::A, b"n"), &bed.keys.kit);
        let valid = stapled(&ev, &[end.clone()], &signed_verifier(&bed, Platform::A), "mocktee-a", b"n");
        let mut slowest = Duration::ZERO;
        for (fixture, codes) in [
            (Fixture::InfiniteLoop, &["fuel_exhausted", "wall_clock_exceeded"][..]),
            (Fixture::MemoryHog, &["memory_exceeded"][..]),
        ] {
            let body = stapled(&ev, &[end.clone()], fixture.bytes(), "mocktee-a", b"n");
            for _ in 0..50 {
                let side = {
                    let (client, valid) = (client.clone(), valid.clone());
                    std::thread::spawn(move || client.attest(&valid, CBOR).unwrap())
                };
                let r = client.attest(&body, CBOR).unwrap();
                assert!(r.elapsed <= limit, "{} ran {:?}", fixture.name(), r.elapsed);
                slowest = slowest.max(r.elapsed);
                assert_eq!(r.status, 422, "{}", String::from_utf8_lossy(&r.body));
                let err: serde_json::Value = serde_json::from_slice(&r.body).unwrap();
                assert!(codes.contains(&err["code"].as_str().unwrap()), "{err}");
                let concurrent = side.join().unwrap();
                assert_eq!(decode(&bed, &concurrent).status(), Tier::Affirming);
            }
        }
        let m = client.metrics().unwrap();
        assert_eq!(m.counter("sandbox.aborts"), 100);
        format!("100/100 aborted, slowest {} ms, limit {} ms", slowest.as_millis(), limit.as_millis())
    });
}

#[test]
fn c05_default_deny_network() {
    criterion(5, "network access only for trusted signers that allow it", || {
        let bed = bed(5);
        bed.server.set_delay(Duration::ZERO);
        let client = bed.client();
        bed.server.put("/probe", vec![7u8; 321]);
        let url = bed.server.url("/probe");
        let run = |comp: &[u8]| decode(&bed, &client.attest(&stapled(url.as_bytes(), &[], comp, "mocktee-a", b""), CBOR).unwrap());
        const N: u64 = 5;

        let unsigned = Fixture::NetworkCaller.bytes();
        for _ in 0..N {
            let r = run(unsigned);
            assert_eq!(r.claims.attester["network"], Value::Text("NetworkDenied".into()));
        }
        assert_eq!(bed.server.hits("/probe"), 0);

        let untrusted = Fixture::NetworkCaller.signed(&SigningKey::from_bytes(&[9; 32]), u64::MAX);
        assert_eq!(run(&untrusted).claims.attester["network"], Value::Text("NetworkDenied".into()));
        assert_eq!(bed.server.hits("/probe"), 0);

        let trusted = Fixture::NetworkCaller.signed(&bed.keys.component_signer, u64::MAX);
        for _ in 0..N {
            let r = run(&trusted);
            assert_eq!(r.claims.attester["network"], Value::Text("ok".into()));
            assert_eq!(r.claims.attester["body_len"], Value::Int(321));
        }
        assert_eq!(bed.server.hits("/probe"), N);
        format!("unsigned and untrusted: 0 hits; trusted: {N} hits for {N} requests")
    });
}

#[test]
fn c06_rollback_defense() {
    criterion(6, "expired component signatures fall back to the default policy", || {
        let bed = bed(6);
        let client = bed.client();
        let signer = &bed.keys.component_signer;
        let past = (now_unix() - 86_400) as u64;
        let (ev, end) = generate_evidence(Platform::A, &fixtures::fixture_spec(Platform::A, b"n"), &bed.keys.kit);
        let fresh = Fixture::MockteeA.signed(signer, u64::MAX);
        let expired = Fixture::MockteeA.signed(signer, past);
        let attest = |comp: &[u8]| decode(&bed, &client.attest(&stapled(&ev, &[end.clone()], comp, "mocktee-a", b"n"), CBOR).unwrap());

        // Hash-pinned policy: the expired copy still runs, without a signer.
        let r = attest(&expired);
        assert_eq!(r.claims.component.signer, None);
        assert_eq!(r.status(), Tier::Affirming);
        assert_eq!(client.metrics().unwrap().counter("identity.expired"), 1);

        // Default policy: no network for the expired copy.
        bed.server.set_delay(Duration::ZERO);
        bed.server.put("/probe", vec![1u8; 10]);
        let url = bed.server.url("/probe");
        let net = |comp: &[u8]| {
            decode(&bed, &client.attest(&stapled(url.as_bytes(), &[], comp, "mocktee-a", b""), CBOR).unwrap()).claims.attester
        };
        assert_eq!(net(&Fixture::NetworkCaller.signed(signer, past))["network"], Value::Text("NetworkDenied".into()));
        assert_eq!(bed.server.hits("/probe"), 0);
        assert_eq!(net(&Fixture::NetworkCaller.signed(signer, u64::MAX))["network"], Value::Text("ok".into()));

        // Signer-pinned policy denies the expired copy and accepts a fresh one.
        let (mut policy, _) = fixtures::platform_policy(Platform::A, "mocktee-a");
        policy.rules[0] = Rule::new(PATH_COMPONENT_SIGNER, RuleOp::InSet, "mocktee-a.signers", Category::InstanceIdentity);
        let v = bed.verifier();
        v.install_reference_values(
            &format!(r#"{{"mocktee-a.signers": ["{}"]}}"#, SignerKey::from(signer).to_hex()),
            true,
        )
        .unwrap();
        v.install_policy(&policy.to_toml_string()).unwrap();
        let denied = attest(&expired);
        assert_eq!(denied.status(), Tier::Contraindicated);
        assert_eq!(denied.trust_vector.tier(Category::InstanceIdentity), Tier::Contraindicated);
        assert_eq!(attest(&fresh).status(), Tier::Affirming);
        "expired: signer null, no network, denied when signer-pinned".into()
    });
}

#[test]
fn c07_resolution_order() {
    criterion(7, "stapled, then cache, then registry resolution with exact counters", || {
        let bed = bed(7);
        bed.server.set_delay(Duration::ZERO);
        let client = bed.client();
        let counters = || {
            let m = client.metrics().unwrap();
            ["stapled", "cache", "registry"].map(|s| m.counter(&format!("resolve.source={s}")))
        };
        assert_eq!(counters(), [0, 0, 0]);

        let fa = bed.fixtures.get(Platform::A);
        let stapled_req = fa.request(&bed.options(Platform::A, true, ComponentChoice::Stapled)).unwrap();
        let r = client.attest(&stapled_req, CBOR).unwrap();
        assert_eq!((r.status, r.source.as_str()), (200, "stapled"));
        assert_eq!(counters(), [1, 0, 0]);
        let r = client.attest(&stapled_req, CBOR).unwrap();
        assert_eq!(r.source, "cache");
        assert_eq!(counters(), [1, 1, 0]);

        let fb = bed.fixtures.get(Platform::B);
        let (name, tag) = registry_name(Platform::B);
        let path = mocktee_kit::server::registry_path(&name, tag);
        let registry_req = fb.request(&bed.options(Platform::B, true, ComponentChoice::Registry)).unwrap();
        let r = client.attest(&registry_req, CBOR).unwrap();
        assert_eq!((r.status, r.source.as_str()), (200, "registry"));
        assert_eq!(decode(&bed, &r).status(), Tier::Affirming);
        assert_eq!(counters(), [1, 1, 1]);
        assert_eq!(bed.server.hits(&path), 1);
        let r = client.attest(&registry_req, CBOR).unwrap();
        assert_eq!(r.source, "cache");
        assert_eq!(counters(), [1, 2, 1]);
        assert_eq!(bed.server.hits(&path), 1);
        let m = client.metrics().unwrap();
        assert_eq!(m.counter("resolve.registry_fetches"), 1);
        assert_eq!(m.counter("compile.count"), 2);
        "stapled=1 cache=2 registry=1, one registry fetch".into()
    });
}

fn value_strategy() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Int),
        prop::collection::vec(any::<u8>(), 0..24).prop_map(Value::Bytes),
        "\\PC{0,12}".prop_map(Value::Text),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-z_]{1,8}", inner, 0..4).prop_map(Value::Map),
        ]
    })
}

fn claims_strategy() -> impl Strategy<Value = ClaimSet> {
    (
        any::<[u8; 32]>(),
        prop::option::of(any::<[u8; 32]>()),
        prop::collection::btree_map("[a-z_]{1,10}", value_strategy(), 0..6),
    )
        .prop_map(|(h, s, attester)| ClaimSet {
            component: ComponentIdentity {
                hash: identity::ComponentHash(h),
                signer: s.map(|seed| SignerKey::from(&SigningKey::from_bytes(&seed))),
            },
            attester: attester.into_iter().collect::<Map>(),
        })
}

fn outcome_strategy() -> impl Strategy<Value = RuleOutcome> {
    (
        "(/[a-z_]{1,8}){1,3}",
        prop::sample::select(vec![RuleOp::Eq, RuleOp::InSet, RuleOp::Gte, RuleOp::Present]),
        "[a-z.-]{0,16}",
        prop::sample::select(Category::ALL.to_vec()),
        any::<bool>(),
        "\\PC{0,20}",
    )
        .prop_map(|(path, op, key, category, passed, detail)| RuleOutcome {
            rule: Rule::new(path, op, key, category),
            passed,
            detail,
        })
}

fn item_strategy() -> impl Strategy<Value = CmwItem> {
    ("[a-z]{1,8}/[a-z0-9.+-]{1,20}", prop::collection::vec(any::<u8>(), 1..64)).prop_map(|(t, p)| CmwItem::new(t, p))
}

fn evidence_strategy() -> impl Strategy<Value = TrustMeeEvidence> {
    (
        prop::collection::vec(any::<u8>(), 0..200),
        "\\PC{1,40}",
        "[a-z0-9-]{1,16}",
        prop::collection::vec(any::<u8>(), 0..=64),
    )
        .prop_map(|(tee_evidence, component_id, policy_id, expected_report_data)| TrustMeeEvidence {
            tee_evidence,
            component_id,
            policy_id,
            expected_report_data,
        })
}

const ROUND_TRIP_CASES: u32 = 10_000;
const FUZZ_INPUTS: usize = 100_000;

fn run_property<S: Strategy>(name: &str, strategy: S, check: impl Fn(S::Value) -> Result<(), TestCaseError>) {
    let mut runner = TestRunner::new(ProptestConfig { cases: ROUND_TRIP_CASES, failure_persistence: None, ..ProptestConfig::default() });
    if let Err(e) = runner.run(&strategy, check) {
        panic!("{name}: {e}");
    }
}

/// Feeds one input to every decoder; returns how many accepted it.
fn decode_everything(input: &[u8], trusted: &HashSet<[u8; 32]>) -> usize {
    let mut accepted = 0;
    let limits = Limits::default();
    for format in [Format::Cbor, Format::Json] {
        if let Ok(c) = cmw::decode_request(input, format, &limits) {
            accepted += 1;
            let _ = cmw::extract_evidence(&c);
        }
    }
    if TrustMeeEvidence::from_cbor(input).is_ok() {
        accepted += 1;
    }
    if let Ok(sr) = SignedResult::from_cbor(input) {
        accepted += 1;
        let _ = ear::verify_result(&sr, trusted);
    }
    if let Ok(v) = cbor::decode(input) {
        accepted += 1;
        let _ = ClaimSet::from_value(&v);
        let _ = AttestationResult::from_value(&v);
        let _ = TrustVector::from_value(&v);
        let _ = RuleOutcome::from_value(&v);
    }
    accepted += usize::from(EvaluateInput::decode(input).is_ok());
    accepted += usize::from(EvaluateOutput::decode(input, 16).is_ok());
    accepted
}

#[test]
fn c08_codec_properties() {
    criterion(8, "codec round trips and fuzzed decoding", || {
        run_property(
            "cmw",
            (item_strategy(), prop::collection::vec(item_strategy(), 0..4), prop::option::of(item_strategy())),
            |(evidence, endorsements, component)| {
                let c = CmwCollection { evidence, endorsements, component };
                for f in [Format::Cbor, Format::Json] {
                    let bytes = cmw::encode_request(&c, f).unwrap();
                    prop_assert_eq!(&cmw::decode_request(&bytes, f, &Limits::default()).unwrap(), &c);
                }
                Ok(())
            },
        );
        run_property("evidence", (evidence_strategy(), prop::collection::vec(prop::collection::vec(any::<u8>(), 0..40), 0..4)), |(ev, ends)| {
            prop_assert_eq!(&TrustMeeEvidence::from_cbor(&ev.to_cbor()).unwrap(), &ev);
            let input = EvaluateInput {
                tee_evidence: ev.tee_evidence.clone(),
                endorsements: ends,
                expected_report_data: ev.expected_report_data.clone(),
            };
            prop_assert_eq!(EvaluateInput::decode(&input.encode()).unwrap(), input);
            Ok(())
        });
        run_property("claims", claims_strategy(), |claims| {
            let bytes = cbor::encode(&claims.to_value());
            prop_assert_eq!(ClaimSet::from_value(&cbor::decode(&bytes).unwrap()).unwrap(), claims.clone());
            let out = EvaluateOutput::Claims(claims.attester);
            prop_assert_eq!(EvaluateOutput::decode(&out.encode(), 16).unwrap(), out);
            Ok(())
        });
        let key = SigningKey::from_bytes(&[8; 32]);
        let trusted = HashSet::from([key.verifying_key().to_bytes()]);
        run_property(
            "result",
            (
                claims_strategy(),
                prop::collection::vec(outcome_strategy(), 0..6),
                any::<i64>(),
                "[a-z0-9-]{1,12}",
                prop::collection::vec(any::<u8>(), 0..=64),
            ),
            |(claims, outcomes, issued_at, policy_id, nonce)| {
                let appraisal = Appraisal { trust_vector: TrustVector::from_outcomes(&outcomes), outcomes };
                let result = AttestationResult::new(issued_at, "acceptance", policy_id, nonce, claims, appraisal);
                let sr = ear::emit(&result, &key);
                let back = SignedResult::from_cbor(&sr.to_cbor()).unwrap();
                prop_assert_eq!(&back, &sr);
                prop_assert_eq!(ear::verify_result(&back, &trusted).unwrap(), result);
                Ok(())
            },
        );

        // Seeds: one valid encoding of each kind.
        let mut rng = StdRng::seed_from_u64(8);
        let kit = mocktee_kit::KitKeys::generate(&mut rng, mocktee_kit::Validity::around(now_unix()));
        let (ev, end) = generate_evidence(Platform::B, &fixtures::fixture_spec(Platform::B, b"seed"), &kit);
        let request = wrap(&ev, &[end.clone()], &Fixture::MockteeB.hash().to_ref(), "mocktee-b", b"seed", None);
        let json_request = mocktee_kit::wrap_for_trustmee_as(
            &WrapRequest {
                evidence: &ev,
                endorsements: &[end.clone()],
                component_ref: &Fixture::MockteeB.hash().to_ref(),
                policy_id: "mocktee-b",
                nonce: b"seed",
                staple_component: None,
            },
            Format::Json,
        )
        .unwrap();
        let coll = cmw::decode_request(&request, Format::Cbor, &Limits::default()).unwrap();
        let evidence_item = coll.evidence.payload.clone();
        let claims = ClaimSet {
            component: ComponentIdentity { hash: Fixture::MockteeB.hash(), signer: Some(SignerKey::from(&key)) },
            attester: native_reference_verify(Platform::B, &ev, &[end.clone()], b"seed", now_unix()).unwrap(),
        };
        let outcomes = vec![RuleOutcome {
            rule: Rule::new("/attester/measurement", RuleOp::InSet, "m", Category::Executables),
            passed: true,
            detail: String::new(),
        }];
        let result = AttestationResult::new(
            1,
            "v",
            "mocktee-b",
            b"seed".to_vec(),
            claims,
            Appraisal { trust_vector: TrustVector::from_outcomes(&outcomes), outcomes },
        );
        let signed = ear::emit(&result, &key).to_cbor();
        let input = EvaluateInput { tee_evidence: ev, endorsements: vec![end], expected_report_data: b"seed".to_vec() }.encode();
        let seeds = [request, json_request, evidence_item, signed, input];

        let mut inputs = 0usize;
        let mut accepted = 0usize;
        let mut crashes = Vec::new();
        while inputs < FUZZ_INPUTS {
            let mut data = if rng.gen_ratio(1, 10) {
                (0..rng.gen_range(0..256)).map(|_| rng.gen()).collect()
            } else {
                seeds[inputs % seeds.len()].clone()
            };
            for _ in 0..rng.gen_range(1..=4) {
                match rng.gen_range(0..5) {
                    0 if !data.is_empty() => {
                        let i = rng.gen_range(0..data.len());
                        data[i] ^= 1 << rng.gen_range(0..8);
                    }
                    1 if !data.is_empty() => {
                        let i = rng.gen_range(0..data.len());
                        data[i] = rng.gen();
                    }
                    2 => data.truncate(rng.gen_range(0..=data.len())),
                    3 => {
                        let i = rng.gen_range(0..=data.len());
                        let extra: Vec<u8> = (0..rng.gen_range(1..8)).map(|_| rng.gen()).collect();
                        data.splice(i..i, extra);
                    }
                    _ if !data.is_empty() => {
                        // Interesting CBOR heads: huge lengths, deep nesting, indefinite items.
                        let i = rng.gen_range(0..data.len());
                        data[i] = *[0x1b, 0x5b, 0x7b, 0x9b, 0xbb, 0x9f, 0xbf, 0xff, 0x81, 0xa1].get(rng.gen_range(0..10)).unwrap();
                    }
                    _ => {}
                }
            }
            match catch_unwind(|| decode_everything(&data, &trusted)) {
                Ok(n) => accepted += n,
                Err(_) => crashes.push(hex_prefix(&data)),
            }
            inputs += 1;
        }
        assert!(crashes.is_empty(), "{} crashing inputs, first: {}", crashes.len(), crashes[0]);
        format!("4 x {ROUND_TRIP_CASES} round trips, {inputs} fuzz inputs, {accepted} decodes accepted, 0 crashes")
    });
}

fn hex_prefix(data: &[u8]) -> String {
    data.iter().take(64).map(|b| format!("{b:02x}")).collect()
}

#[test]
fn c09_size_accounting() {
    criterion(9, "request size accounting", || {
        let bed = bed(9);
        let authority = bed.server.authority();
        let mut worst_ratio = f64::MAX;
        let mut worst_overhead = 0i64;
        for staple_collateral in [true, false] {
            let opts = SizeOptions { staple_collateral, staple_component: true };
            for p in Platform::ALL {
                let f = bed.fixtures.get(p);
                let rows = size::measure(f, opts, &authority).unwrap();
                let get = |v: &str| rows.iter().find(|r| r.variant == v).unwrap();
                for r in &rows {
                    assert!(r.json_ratio() >= 1.25, "{r:?}: ratio {}", r.json_ratio());
                    worst_ratio = worst_ratio.min(r.json_ratio());
                }
                let base = get(size::BASELINE);
                for v in [size::HASH_REF, size::REGISTRY_REF] {
                    let overhead = get(v).cbor as i64 - base.cbor as i64;
                    assert!(overhead <= 512, "{p} {v}: {overhead} B overhead");
                    worst_overhead = worst_overhead.max(overhead);
                }
                // Stapling adds the component plus a few bytes of framing.
                let added = get(size::STAPLED).cbor - get(size::HASH_REF).cbor;
                assert!((f.component.len()..f.component.len() + 64).contains(&added), "{p}: {added} vs {}", f.component.len());
            }
        }
        format!("min json/cbor {worst_ratio:.3}, max ref overhead {worst_overhead} B")
    });
}

fn append(acc: &mut Option<latency::Series>, s: latency::Series) {
    let Some(a) = acc else {
        *acc = Some(s);
        return;
    };
    a.runs.extend(s.runs);
    a.round_trips.extend(s.round_trips);
    a.compilations += s.compilations;
    for (k, v) in s.sources {
        *a.sources.entry(k).or_default() += v;
    }
}

#[test]
fn c10_latency_orderings() {
    criterion(10, "warm beats cold, one compile per warm series, registry delay is visible", || {
        let bed = bed(10);
        let client = bed.client();
        const RUNS: usize = 50;
        let mut notes = Vec::new();
        let mut rows = Vec::new();
        for p in Platform::ALL {
            let f = bed.fixtures.get(p);
            client.clear_caches().unwrap();
            let before = client.metrics().unwrap().counter("compile.count");
            let warm = latency::run(&client, f, &bed.server, &LatencyConfig::new(p, Mode::Warm, RUNS)).unwrap();
            assert_eq!(client.metrics().unwrap().counter("compile.count") - before, 1, "warm series on {p}");
            assert_eq!(warm.compilations, 0);
            // The two cold series alternate run by run so slow drift in
            // compile time affects both equally.
            let stapled_cfg = LatencyConfig::new(p, Mode::Cold, 1);
            let registry_cfg = LatencyConfig { component: ComponentChoice::Registry, ..stapled_cfg.clone() };
            let (mut cold, mut registry) = (None, None);
            for _ in 0..RUNS {
                append(&mut cold, latency::run(&client, f, &bed.server, &stapled_cfg).unwrap());
                append(&mut registry, latency::run(&client, f, &bed.server, &registry_cfg).unwrap());
            }
            let (cold, registry) = (cold.unwrap(), registry.unwrap());
            assert_eq!(cold.compilations, RUNS as u64);
            assert_eq!(cold.sources.get("stapled"), Some(&(RUNS as u64)));
            assert_eq!(registry.compilations, RUNS as u64);
            assert_eq!(registry.sources.get("registry"), Some(&(RUNS as u64)));

            let mean = |s: &latency::Series| report::stats(&s.totals()).mean;
            let (w, c, r) = (mean(&warm), mean(&cold), mean(&registry));
            assert!(w < c, "{p}: warm {w} >= cold {c}");
            assert!(r > c, "{p}: registry {r} <= stapled {c}");
            notes.push(format!("{p}: warm {:.1} ms, cold {:.1} ms, cold+registry {:.1} ms", w / 1e3, c / 1e3, r / 1e3));
            for s in [&warm, &cold, &registry] {
                rows.extend(report::rows(s));
            }
        }
        assert_eq!(rows.len(), 2 * 3 * RUNS * 4);

        // A changed component pays its compile exactly once.
        let f = bed.fixtures.get(Platform::A);
        let changed = variant(Fixture::MockteeA.bytes(), b"rebuilt");
        let (ev, end) = (f.evidence.clone(), f.endorsement.clone());
        let body = stapled(&ev, &[end], &changed, "mocktee-a", &f.nonce);
        let before = client.metrics().unwrap().counter("compile.count");
        let times: Vec<u64> = (0..5)
            .map(|_| {
                let r = client.attest(&body, CBOR).unwrap();
                assert_eq!(r.status, 200);
                r.timings.get(trustmee_service::Stage::Load)
            })
            .collect();
        assert_eq!(client.metrics().unwrap().counter("compile.count") - before, 1);
        assert!(times[1..].iter().all(|&t| t < times[0]), "load times {times:?}");
        notes.join("; ")
    });
}

#[test]
fn c11_differential_equivalence() {
    criterion(11, "sandboxed fixture verifiers match the native verifiers", || {
        const NOW: i64 = 1_760_000_000;
        const CASES: usize = 1000;
        let started = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let sb = Sandbox::with_clock(SandboxConfig::with_scratch_root(dir.path()), Arc::new(|| NOW as u64));
        let mut rng = StdRng::seed_from_u64(11);
        let keys = CorpusKeys::generate(&mut rng, NOW);
        let mut summary = Vec::new();
        for platform in Platform::ALL {
            let comp = sb.compile(platform.verifier().bytes()).unwrap();
            let (mut accepted, mut rejected) = (0, 0);
            for _ in 0..CASES {
                let case = corpus::random_case(&mut rng, platform, &keys);
                let input = EvaluateInput {
                    tee_evidence: case.evidence.clone(),
                    endorsements: case.endorsements.clone(),
                    expected_report_data: case.expected_report_data.clone(),
                };
                let out = sb.evaluate(&comp, &input, &ExecutionPolicy::restrictive()).unwrap().output;
                let native = native_reference_verify(platform, &case.evidence, &case.endorsements, &case.expected_report_data, NOW);
                match (&out, native) {
                    (EvaluateOutput::Claims(c), Ok(n)) => {
                        assert_eq!(c, &n, "{:?}", case.tamper);
                        accepted += 1;
                    }
                    (EvaluateOutput::Failure { code, .. }, Err(rej)) => {
                        assert_eq!(*code, rej.code, "{:?}", case.tamper);
                        rejected += 1;
                    }
                    (out, native) => panic!("{platform} {:?}: sandbox {out:?}, native {native:?}", case.tamper),
                }
                if case.tamper == Tamper::None {
                    assert!(matches!(out, EvaluateOutput::Claims(_)));
                }
            }
            assert!(accepted > 0 && rejected > 0);
            summary.push(format!("{platform}: {accepted} accepted, {rejected} rejected"));
        }
        assert!(started.elapsed() < Duration::from_secs(300), "took {:?}", started.elapsed());
        summary.join(", ")
    });
}

#[test]
fn bench_collateral_fetch_is_counted() {
    // Not a numbered criterion: the unstapled-collateral series must
    // actually go to the network on a cold start.
    let _serial = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let bed = bed(12);
    let client = bed.client();
    let f = bed.fixtures.get(Platform::A);
    let cfg = LatencyConfig { staple_collateral: false, ..LatencyConfig::new(Platform::A, Mode::Warm, 3) };
    let s = latency::run(&client, f, &bed.server, &cfg).unwrap();
    assert_eq!(s.label, "warm+fetched-collateral");
    assert!(bed.server.hits(&collateral_path(Platform::A)) >= 1);
}
