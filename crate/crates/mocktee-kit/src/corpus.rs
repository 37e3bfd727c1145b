// SPDX-License-Identifier: Apache-2.0

//! Randomized valid and invalid verification inputs for differential and
//! end-to-end tests.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_core::CryptoRngCore;

use crate::{generate_evidence, EvidenceSpec, KitKeys, Platform, Validity};

/// How a case departs from a valid one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tamper {
    None,
    EvidenceByte,
    EndorsementByte,
    WrongNonce,
    Truncated,
    Expired,
    ForeignChain,
    NoEndorsement,
    OtherPlatform,
}

impl Tamper {
    pub const INVALID: [Tamper; 8] = [
        Tamper::EvidenceByte,
        Tamper::EndorsementByte,
        Tamper::WrongNonce,
        Tamper::Truncated,
        Tamper::Expired,
        Tamper::ForeignChain,
        Tamper::NoEndorsement,
        Tamper::OtherPlatform,
    ];
}

#[derive(Clone, Debug)]
pub struct Case {
    pub platform: Platform,
    pub tamper: Tamper,
    pub spec: EvidenceSpec,
    pub evidence: Vec<u8>,
    pub endorsements: Vec<Vec<u8>>,
    pub expected_report_data: Vec<u8>,
}

/// Key sets a corpus draws from: the trusted one, one whose certificates
/// have expired, and an unrelated one.
#[derive(Clone, Debug)]
pub struct CorpusKeys {
    pub current: KitKeys,
    pub expired: KitKeys,
    pub foreign: KitKeys,
}

impl CorpusKeys {
    /// Keys valid at `now`, keys that expired a day before it, and foreign keys.
    pub fn generate(rng: &mut impl CryptoRngCore, now: i64) -> Self {
        CorpusKeys {
            current: KitKeys::generate(rng, Validity::around(now)),
            expired: KitKeys::generate(rng, Validity { not_before: now - 30 * 86_400, not_after: now - 86_400 }),
            foreign: KitKeys::generate(rng, Validity::around(now)),
        }
    }
}

pub fn random_spec(rng: &mut impl Rng, platform: Platform) -> EvidenceSpec {
    let nonce_len = rng.gen_range(0..=64);
    EvidenceSpec {
        measurement: (0..platform.measurement_len()).map(|_| rng.gen()).collect(),
        report_data: (0..nonce_len).map(|_| rng.gen()).collect(),
        tcb: match platform {
            Platform::A => rng.gen(),
            Platform::B => rng.gen::<u16>() as u32,
        },
        debug: rng.gen(),
    }
}

/// A case with the given tamper applied.
pub fn case(rng: &mut impl Rng, platform: Platform, tamper: Tamper, keys: &CorpusKeys) -> Case {
    let spec = random_spec(rng, platform);
    let signing = match tamper {
        Tamper::Expired => &keys.expired,
        _ => &keys.current,
    };
    let (mut evidence, endorsement) = generate_evidence(platform, &spec, signing);
    let mut endorsements = vec![endorsement];
    let mut expected = spec.report_data.clone();
    match tamper {
        Tamper::None | Tamper::Expired => {}
        Tamper::EvidenceByte => {
            let i = rng.gen_range(0..evidence.len());
            evidence[i] ^= 1 << rng.gen_range(0..8);
        }
        Tamper::EndorsementByte => {
            let e = &mut endorsements[0];
            let i = rng.gen_range(0..e.len());
            e[i] ^= 1 << rng.gen_range(0..8);
        }
        Tamper::WrongNonce => {
            if expected.is_empty() {
                expected.push(1);
            } else {
                let i = rng.gen_range(0..expected.len());
                expected[i] ^= 0xff;
            }
        }
        Tamper::Truncated => {
            let n = rng.gen_range(0..evidence.len());
            evidence.truncate(n);
        }
        Tamper::ForeignChain => {
            endorsements = vec![generate_evidence(platform, &spec, &keys.foreign).1];
        }
        Tamper::NoEndorsement => endorsements.clear(),
        Tamper::OtherPlatform => {
            let other = match platform {
                Platform::A => Platform::B,
                Platform::B => Platform::A,
            };
            let (ev, end) = generate_evidence(other, &random_spec(rng, other), &keys.current);
            evidence = ev;
            endorsements = vec![end];
        }
    }
    Case { platform, tamper, spec, evidence, endorsements, expected_report_data: expected }
}

/// Valid with probability 1/2, otherwise a uniformly chosen tamper.
pub fn random_case(rng: &mut impl Rng, platform: Platform, keys: &CorpusKeys) -> Case {
    let tamper = if rng.gen_bool(0.5) { Tamper::None } else { *Tamper::INVALID.choose(rng).unwrap() };
    case(rng, platform, tamper, keys)
}
