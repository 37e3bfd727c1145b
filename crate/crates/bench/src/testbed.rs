// SPDX-License-Identifier: Apache-2.0

//! Fixture directories and an in-process verifier to point benchmarks at.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use ed25519_dalek::SigningKey;
use mocktee_kit::fixtures::{self, write_fixtures};
use mocktee_kit::{endorsement_locator, wrap_for_trustmee_as, FixtureServer, KitKeys, Platform, Validity, WrapRequest};
use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};
use trustmee_core::cmw::{self, CmwCollection, CmwItem, Format};
use trustmee_core::identity;
use trustmee_core::keyfile;
use trustmee_service::{ServiceConfig, ServiceHandle, Verifier};

use crate::client::{BenchError, Client};

const SIGNATURE_VALIDITY_SECS: u64 = 365 * 86_400;

/// Where the bench's fixture server publishes a platform's collateral.
pub fn collateral_path(platform: Platform) -> String {
    format!("/collateral/{}", platform.to_string().to_lowercase())
}

/// Registry name and tag the bench publishes a platform's verifier under.
pub fn registry_name(platform: Platform) -> (String, &'static str) {
    (format!("verifier-{}", platform.to_string().to_lowercase()), "v1")
}

/// How a request names its verification component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ComponentMode {
    /// Hash reference plus the component bytes.
    Stapled,
    /// Hash reference only; the service must already hold the component.
    HashRef,
    /// The given `reg://` reference, nothing stapled.
    Registry(String),
}

#[derive(Clone, Debug)]
pub struct RequestOptions {
    /// Carry the endorsement bytes; otherwise carry a locator the component
    /// fetches from `collateral_url`.
    pub staple_collateral: bool,
    pub collateral_url: Option<String>,
    pub component: ComponentMode,
    pub format: Format,
}

impl Default for RequestOptions {
    fn default() -> Self {
        RequestOptions { staple_collateral: true, collateral_url: None, component: ComponentMode::Stapled, format: Format::Cbor }
    }
}

/// One platform's fixture evidence and signed verifier.
#[derive(Clone, Debug)]
pub struct PlatformFixture {
    pub platform: Platform,
    pub evidence: Vec<u8>,
    pub endorsement: Vec<u8>,
    pub component: Vec<u8>,
    pub nonce: Vec<u8>,
}

impl PlatformFixture {
    fn endorsements(&self, opts: &RequestOptions) -> Result<Vec<Vec<u8>>, BenchError> {
        if opts.staple_collateral {
            return Ok(vec![self.endorsement.clone()]);
        }
        let url = opts
            .collateral_url
            .as_deref()
            .ok_or_else(|| BenchError::Fixtures("unstapled collateral needs a collateral URL".into()))?;
        Ok(vec![endorsement_locator(url)])
    }

    /// Builds a verifier request.
    pub fn request(&self, opts: &RequestOptions) -> Result<Vec<u8>, BenchError> {
        let endorsements = self.endorsements(opts)?;
        let hash_ref = identity::measure(&self.component).to_ref();
        let (component_ref, staple) = match &opts.component {
            ComponentMode::Stapled => (hash_ref.as_str(), Some(self.component.as_slice())),
            ComponentMode::HashRef => (hash_ref.as_str(), None),
            ComponentMode::Registry(r) => (r.as_str(), None),
        };
        let req = WrapRequest {
            evidence: &self.evidence,
            endorsements: &endorsements,
            component_ref,
            policy_id: &fixtures::policy_id(self.platform),
            nonce: &self.nonce,
            staple_component: staple,
        };
        wrap_for_trustmee_as(&req, opts.format).map_err(|e| BenchError::Fixtures(e.to_string()))
    }

    /// What a native single-platform verifier would be sent: the raw
    /// evidence and the same endorsements, with no component reference.
    pub fn baseline_request(&self, opts: &RequestOptions) -> Result<Vec<u8>, BenchError> {
        let endorsements = self.endorsements(opts)?;
        let collection = CmwCollection {
            evidence: CmwItem::new(self.platform.native_media_type(), self.evidence.clone()),
            endorsements: endorsements.into_iter().map(|e| CmwItem::new(cmw::MEDIA_TYPE_ENDORSEMENT, e)).collect(),
            component: None,
        };
        cmw::encode_request(&collection, opts.format).map_err(|e| BenchError::Fixtures(e.to_string()))
    }
}

/// Fixture material read back from a directory written by
/// [`write_fixture_dir`].
#[derive(Clone, Debug)]
pub struct FixtureSet {
    pub dir: PathBuf,
    pub platforms: Vec<PlatformFixture>,
    /// From the directory's `trustmee.toml`, when present.
    pub admin_token: Option<String>,
}

impl FixtureSet {
    pub fn load(dir: &Path) -> Result<Self, BenchError> {
        let read = |rel: String| {
            std::fs::read(dir.join(&rel)).map_err(|e| BenchError::Fixtures(format!("{}: {e}", dir.join(rel).display())))
        };
        let nonce = read("evidence/nonce.bin".into())?;
        let mut platforms = Vec::new();
        for platform in Platform::ALL {
            let lower = platform.to_string().to_lowercase();
            platforms.push(PlatformFixture {
                platform,
                evidence: read(format!("evidence/{lower}.evidence.bin"))?,
                endorsement: read(format!("evidence/{lower}.endorsement.bin"))?,
                component: read(format!("components/{}.signed.wasm", platform.verifier().name()))?,
                nonce: nonce.clone(),
            });
        }
        let config = dir.join("trustmee.toml");
        let admin_token = if config.exists() {
            ServiceConfig::load(&config).map_err(|e| BenchError::Fixtures(e.to_string()))?.admin_token
        } else {
            None
        };
        Ok(FixtureSet { dir: dir.to_owned(), platforms, admin_token })
    }

    pub fn get(&self, platform: Platform) -> &PlatformFixture {
        self.platforms.iter().find(|p| p.platform == platform).expect("every platform is loaded")
    }

    /// Publishes collateral and registry copies of each verifier on `server`.
    pub fn publish(&self, server: &FixtureServer) {
        for p in &self.platforms {
            server.put(&collateral_path(p.platform), p.endorsement.clone());
            let (name, tag) = registry_name(p.platform);
            server.publish(&name, tag, p.component.clone());
        }
    }
}

/// Keys behind a fixture directory.
pub struct FixtureKeys {
    pub kit: KitKeys,
    pub component_signer: SigningKey,
    pub admin_token: String,
}

/// Writes evidence, components, policies, trust store, a verifier signing
/// key and a `trustmee.toml` listening on `listen`.
pub fn write_fixture_dir(dir: &Path, seed: Option<u64>, listen: &str) -> Result<FixtureKeys, BenchError> {
    let mut rng = match seed {
        Some(s) => StdRng::seed_from_u64(s),
        None => StdRng::from_entropy(),
    };
    let now = mocktee_kit::now_unix();
    let kit = KitKeys::generate(&mut rng, Validity::around(now));
    let component_signer = SigningKey::generate(&mut rng);
    let expiry = u64::try_from(now).unwrap_or(0) + SIGNATURE_VALIDITY_SECS;
    write_fixtures(dir, &kit, &component_signer, expiry)?;
    keyfile::write_ed25519_key(&dir.join("keys/verifier.ed25519.key"), &SigningKey::generate(&mut rng))?;
    let mut token = [0u8; 16];
    rng.fill_bytes(&mut token);
    let admin_token = hex::encode(token);
    let config = format!(
        "listen = \"{listen}\"\n\
         verifier_id = \"trustmee-bench-{id:08x}\"\n\
         trust_store = \"trust-store.toml\"\n\
         policy_dir = \"policies\"\n\
         reference_values = \"reference-values.toml\"\n\
         signing_key = \"keys/verifier.ed25519.key\"\n\
         cache_dir = \"cache\"\n\
         admin_token = \"{admin_token}\"\n",
        id = rng.gen::<u32>(),
    );
    std::fs::write(dir.join("trustmee.toml"), config)?;
    Ok(FixtureKeys { kit, component_signer, admin_token })
}

/// A verifier service and a fixture server running in-process over a
/// temporary fixture directory.
pub struct Testbed {
    // Field order is drop order: stop serving before the directory goes.
    pub service: ServiceHandle,
    pub server: FixtureServer,
    pub fixtures: FixtureSet,
    pub keys: FixtureKeys,
    pub dir: tempfile::TempDir,
}

impl Testbed {
    /// `delay` applies to every fixture server response.
    pub fn start(seed: u64, delay: Duration) -> Result<Self, BenchError> {
        let dir = tempfile::tempdir()?;
        let keys = write_fixture_dir(dir.path(), Some(seed), "127.0.0.1:0")?;
        let config = ServiceConfig::load(&dir.path().join("trustmee.toml"))
            .and_then(|c| c.validate().map(|_| c))
            .map_err(|e| BenchError::Fixtures(e.to_string()))?;
        let verifier = Verifier::from_config(&config).map_err(|e| BenchError::Fixtures(e.to_string()))?;
        let service = ServiceHandle::start(Arc::new(verifier), config.listen)?;
        let server = FixtureServer::start(delay)?;
        let fixtures = FixtureSet::load(dir.path())?;
        fixtures.publish(&server);
        Ok(Testbed { service, server, fixtures, keys, dir })
    }

    pub fn client(&self) -> Client {
        Client::new(self.service.url(""), Some(self.keys.admin_token.clone()))
    }

    pub fn verifier(&self) -> &Arc<Verifier> {
        self.service.verifier()
    }

    /// Options for `platform` with collateral and registry URLs filled in
    /// from the fixture server.
    pub fn options(&self, platform: Platform, staple_collateral: bool, component: ComponentChoice) -> RequestOptions {
        options_for(&self.server, platform, staple_collateral, component)
    }
}

/// Which of the [`ComponentMode`]s to build, before URLs are known.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComponentChoice {
    Stapled,
    HashRef,
    Registry,
}

pub fn options_for(server: &FixtureServer, platform: Platform, staple_collateral: bool, c: ComponentChoice) -> RequestOptions {
    let component = match c {
        ComponentChoice::Stapled => ComponentMode::Stapled,
        ComponentChoice::HashRef => ComponentMode::HashRef,
        ComponentChoice::Registry => {
            let (name, tag) = registry_name(platform);
            ComponentMode::Registry(format!("reg://{}/{name}:{tag}", server.authority()))
        }
    };
    RequestOptions {
        staple_collateral,
        collateral_url: Some(server.url(&collateral_path(platform))),
        component,
        format: Format::Cbor,
    }
}
