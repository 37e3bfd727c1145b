// SPDX-License-Identifier: Apache-2.0

//! The attestation pipeline and the state it runs against.
//!
//! [`Verifier::attest`] runs, in order: request parsing, component
//! resolution, identity measurement, sandboxed evaluation (the component's
//! evidence and endorsement checks), policy appraisal, and result signing.
//! Each request pins one [`Snapshot`] of trust store, policies and reference
//! values at ingress; admin updates swap in a new snapshot without touching
//! requests already running.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ed25519_dalek::SigningKey;
use parking_lot::{Mutex, RwLock};
use thiserror::Error;
use trustmee_core::abi::{EvaluateInput, EvaluateOutput, FailureCode};
use trustmee_core::appraisal::{
    AppraisalPolicy, Category, ClaimSet, PolicyError, PolicySnapshot, ReferenceValueStore, Tier,
};
use trustmee_core::cmw::{self, CmwError, Format, Limits};
use trustmee_core::ear::{self, AttestationResult, SignedResult};
use trustmee_core::identity::{self, SignatureStatus, TrustStore, TrustStoreError};
use trustmee_core::keyfile;
use trustmee_core::resolver::{ComponentCache, ComponentRef, HttpRegistry, ResolveError, Resolver, Source};
use trustmee_core::sandbox::{Sandbox, SandboxConfig, SandboxError};

use crate::config::{PolicyOverrides, ServiceConfig};
use crate::metrics::{Metrics, MetricsSnapshot, Stage, StageTimings};

/// Everything a request is appraised against.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub trust_store: Arc<TrustStore>,
    pub policies: PolicySnapshot,
}

/// Errors that end a request without an appraisal.
#[derive(Debug, Error)]
pub enum AttestError {
    #[error("{0}")]
    Malformed(String),
    #[error("request carries no evidence item")]
    MissingEvidence,
    #[error("request of {len} bytes exceeds limit of {limit}")]
    TooLarge { len: usize, limit: usize },
    #[error("component not found: {0}")]
    ComponentNotFound(String),
    #[error("stapled component does not match {0}")]
    DigestMismatch(String),
    #[error("component fetch failed: {0}")]
    FetchFailed(String),
    #[error("component rejected: {0}")]
    InvalidComponent(String),
    #[error("component aborted: {0}")]
    Aborted(SandboxError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl AttestError {
    pub fn status(&self) -> u16 {
        match self {
            AttestError::Malformed(_) | AttestError::MissingEvidence | AttestError::DigestMismatch(_) => 400,
            AttestError::ComponentNotFound(_) => 404,
            AttestError::TooLarge { .. } => 413,
            AttestError::InvalidComponent(_) | AttestError::Aborted(_) => 422,
            AttestError::FetchFailed(_) => 502,
            AttestError::Internal(_) => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            AttestError::Malformed(_) => "malformed",
            AttestError::MissingEvidence => "missing_evidence",
            AttestError::TooLarge { .. } => "oversized",
            AttestError::ComponentNotFound(_) => "not_found",
            AttestError::DigestMismatch(_) => "digest_mismatch",
            AttestError::FetchFailed(_) => "fetch_failed",
            AttestError::InvalidComponent(_) => "invalid_component",
            AttestError::Aborted(SandboxError::FuelExhausted) => "fuel_exhausted",
            AttestError::Aborted(SandboxError::MemoryExceeded) => "memory_exceeded",
            AttestError::Aborted(SandboxError::WallClockExceeded(_)) => "wall_clock_exceeded",
            AttestError::Aborted(SandboxError::Trap(_)) => "trap",
            AttestError::Internal(_) => "internal",
        }
    }
}

impl From<CmwError> for AttestError {
    fn from(e: CmwError) -> Self {
        match e {
            CmwError::MissingEvidence => AttestError::MissingEvidence,
            CmwError::OversizedInput { len, limit } => AttestError::TooLarge { len, limit },
            other => AttestError::Malformed(other.to_string()),
        }
    }
}

#[derive(Debug, Error)]
pub enum AdminError {
    #[error("{0}")]
    BadInput(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    TrustStore(#[from] TrustStoreError),
    #[error("{0}")]
    NotConfigured(&'static str),
}

impl AdminError {
    pub fn status(&self) -> u16 {
        match self {
            AdminError::BadInput(_) | AdminError::Policy(PolicyError::Parse(_)) => 400,
            AdminError::NotConfigured(_) => 404,
            AdminError::Policy(_) | AdminError::TrustStore(_) => 422,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            AdminError::BadInput(_) | AdminError::Policy(PolicyError::Parse(_)) => "malformed",
            AdminError::NotConfigured(_) => "not_configured",
            AdminError::Policy(_) | AdminError::TrustStore(_) => "validation_failed",
        }
    }
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("signing key {path}: {source}")]
    SigningKey { path: PathBuf, source: std::io::Error },
    #[error("trust store {path}: {source}")]
    TrustStore { path: PathBuf, source: TrustStoreError },
    #[error("{path}: {source}")]
    Policy { path: PathBuf, source: PolicyError },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// A successful request: the signed result and how it was produced.
#[derive(Clone, Debug)]
pub struct Attested {
    pub signed: SignedResult,
    pub encoded: Vec<u8>,
    pub status: Tier,
    pub source: Source,
    pub signature: SignatureStatus,
    pub timings: StageTimings,
}

/// Parts a [`Verifier`] is assembled from.
pub struct VerifierParts {
    pub verifier_id: String,
    pub signing_key: SigningKey,
    pub trust_store: TrustStore,
    pub policies: PolicySnapshot,
    pub resolver: Resolver,
    pub sandbox: Sandbox,
    pub max_request_bytes: usize,
    /// Where `POST /admin/trust-store/reload` reads from.
    pub trust_store_path: Option<PathBuf>,
    pub policy_overrides: PolicyOverrides,
    pub admin_token: Option<String>,
}

pub struct Verifier {
    verifier_id: String,
    signing_key: SigningKey,
    snapshot: RwLock<Arc<Snapshot>>,
    /// Serializes read-modify-write snapshot updates.
    admin: Mutex<()>,
    resolver: Resolver,
    sandbox: Sandbox,
    limits: Limits,
    trust_store_path: Option<PathBuf>,
    policy_overrides: PolicyOverrides,
    admin_token: Option<String>,
    metrics: Metrics,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Rebuilds `store` with its default policy overridden; signers keep the
/// policies they were given.
fn apply_overrides(store: TrustStore, overrides: &PolicyOverrides) -> Result<TrustStore, TrustStoreError> {
    if *overrides == PolicyOverrides::default() {
        return Ok(store);
    }
    let mut out = TrustStore::new(overrides.apply(*store.default_policy()))?;
    for (k, p) in store.signers() {
        out = out.with_signer(*k, *p);
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String, StartupError> {
    std::fs::read_to_string(path).map_err(|source| StartupError::Io { path: path.to_owned(), source })
}

/// Every `*.toml` file in `dir`, sorted by name.
pub fn load_policy_dir(dir: &Path) -> Result<Vec<(PathBuf, AppraisalPolicy)>, StartupError> {
    let io = |source| StartupError::Io { path: dir.to_owned(), source };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let policy = AppraisalPolicy::from_toml_str(&read_text(&p)?)
                .map_err(|source| StartupError::Policy { path: p.clone(), source })?;
            Ok((p, policy))
        })
        .collect()
}

fn parse_reference_values(text: &str, json: bool) -> Result<Vec<(String, trustmee_core::abi::cbor::Value)>, PolicyError> {
    if json {
        ReferenceValueStore::parse_json(text)
    } else {
        ReferenceValueStore::parse_toml(text)
    }
}

impl Verifier {
    pub fn new(parts: VerifierParts) -> Self {
        Verifier {
            verifier_id: parts.verifier_id,
            signing_key: parts.signing_key,
            snapshot: RwLock::new(Arc::new(Snapshot {
                trust_store: Arc::new(parts.trust_store),
                policies: parts.policies,
            })),
            admin: Mutex::new(()),
            resolver: parts.resolver,
            sandbox: parts.sandbox,
            limits: Limits { max_input: parts.max_request_bytes },
            trust_store_path: parts.trust_store_path,
            policy_overrides: parts.policy_overrides,
            admin_token: parts.admin_token,
            metrics: Metrics::default(),
        }
    }

    /// Loads keys, trust store, policies and reference values named by `config`.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, StartupError> {
        let signing_key = keyfile::read_ed25519_key(&config.signing_key)
            .map_err(|source| StartupError::SigningKey { path: config.signing_key.clone(), source })?;
        let ts_err = |source| StartupError::TrustStore { path: config.trust_store.clone(), source };
        let trust_store = apply_overrides(TrustStore::load(&config.trust_store).map_err(ts_err)?, &config.default_policy)
            .map_err(ts_err)?;

        let mut policies = PolicySnapshot::default();
        if let Some(path) = &config.reference_values {
            let json = path.extension().is_some_and(|x| x == "json");
            let values = parse_reference_values(&read_text(path)?, json)
                .and_then(|v| policies.with_reference_values(v))
                .map_err(|source| StartupError::Policy { path: path.clone(), source })?;
            policies = values;
        }
        for (path, policy) in load_policy_dir(&config.policy_dir)? {
            policies = policies.with_policy(policy).map_err(|source| StartupError::Policy { path, source })?;
        }

        let (disk, scratch) = match &config.cache_dir {
            Some(d) => (Some(d.join("components")), d.join("scratch")),
            None => (None, std::env::temp_dir().join(format!("trustmee-scratch-{}", std::process::id()))),
        };
        let resolver = Resolver::new(ComponentCache::new(config.cache_cap_bytes, disk), Arc::new(HttpRegistry::default()));
        Ok(Verifier::new(VerifierParts {
            verifier_id: config.verifier_id.clone(),
            signing_key,
            trust_store,
            policies,
            resolver,
            sandbox: Sandbox::new(SandboxConfig::with_scratch_root(scratch)),
            max_request_bytes: config.max_request_bytes,
            trust_store_path: Some(config.trust_store.clone()),
            policy_overrides: config.default_policy,
            admin_token: config.admin_token.clone(),
        }))
    }

    pub fn verifier_id(&self) -> &str {
        &self.verifier_id
    }

    pub fn public_key(&self) -> [u8; 32] {
        self.signing_key.verifying_key().to_bytes()
    }

    pub fn max_request_bytes(&self) -> usize {
        self.limits.max_input
    }

    pub fn admin_token(&self) -> Option<&str> {
        self.admin_token.as_deref()
    }

    pub fn resolver(&self) -> &Resolver {
        &self.resolver
    }

    pub fn sandbox(&self) -> &Sandbox {
        &self.sandbox
    }

    /// The snapshot a request arriving now would pin.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().clone()
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        let r = self.resolver.stats();
        let sb = &self.sandbox;
        let cache = self.resolver.cache();
        let extra = [
            ("resolve.source=cache", r.cache),
            ("resolve.source=stapled", r.stapled),
            ("resolve.source=registry", r.registry),
            ("resolve.stapled_ignored", r.stapled_ignored),
            ("resolve.registry_fetches", r.registry_fetches),
            ("cache.entries", cache.len() as u64),
            ("cache.bytes", cache.total_bytes()),
            ("compile.count", sb.compilations()),
            ("compile.cache_hits", sb.compile_cache_hits()),
            ("sandbox.evaluations", sb.evaluations()),
            ("sandbox.fuel_aborts", sb.fuel_aborts()),
        ];
        self.metrics.snapshot(extra.map(|(k, v)| (k.to_owned(), v)))
    }

    /// Runs the pipeline against the current snapshot.
    pub fn attest(&self, body: &[u8], format: Format) -> Result<Attested, AttestError> {
        let snap = self.snapshot();
        self.attest_with(&snap, body, format)
    }

    /// Runs the pipeline against a given snapshot.
    pub fn attest_with(&self, snap: &Snapshot, body: &[u8], format: Format) -> Result<Attested, AttestError> {
        let started = Instant::now();
        let mut timings = StageTimings::default();
        let result = self.pipeline(snap, body, format, &mut timings);
        timings.record(Stage::Total, started.elapsed());
        self.metrics.observe(&timings);
        match result {
            Ok(mut a) => {
                self.metrics.incr("attest.ok");
                self.metrics.incr(match a.status {
                    Tier::Affirming => "result.affirming",
                    Tier::Warning => "result.warning",
                    Tier::Contraindicated => "result.contraindicated",
                    Tier::None => "result.none",
                });
                a.timings = timings;
                Ok(a)
            }
            Err(e) => {
                self.metrics.incr(&format!("attest.error.{}", e.code()));
                tracing::info!(code = e.code(), error = %e, "attestation request rejected");
                Err(e)
            }
        }
    }

    fn pipeline(
        &self,
        snap: &Snapshot,
        body: &[u8],
        format: Format,
        timings: &mut StageTimings,
    ) -> Result<Attested, AttestError> {
        let stage = |name: &'static str| tracing::debug_span!("stage", name).entered();

        let t = Instant::now();
        let req = {
            let _s = stage("parse");
            let collection = cmw::decode_request(body, format, &self.limits)?;
            cmw::extract_evidence(&collection)?
        };
        let component_ref: ComponentRef = req
            .evidence
            .component_id
            .parse()
            .map_err(|e| AttestError::Malformed(format!("component reference: {e}")))?;
        timings.record(Stage::Parse, t.elapsed());

        let t = Instant::now();
        let resolved = {
            let _s = stage("resolve");
            self.resolver.resolve(&component_ref, req.component.as_deref()).map_err(|e| match e {
                ResolveError::NotFound(r) => AttestError::ComponentNotFound(r),
                ResolveError::DigestMismatch { .. } => AttestError::DigestMismatch(component_ref.to_string()),
                ResolveError::FetchFailed(m) => AttestError::FetchFailed(m),
                e @ ResolveError::ResponseTooLarge(_) => AttestError::FetchFailed(e.to_string()),
            })?
        };
        timings.record(Stage::Resolve, t.elapsed());

        let t = Instant::now();
        let now = unix_now();
        let ident = {
            let _s = stage("identify");
            identity::measure_and_identify(&resolved.bytes, &snap.trust_store, now)
        };
        self.metrics.incr(&format!("identity.{}", signature_status_name(ident.status)));
        timings.record(Stage::Identify, t.elapsed());

        let t = Instant::now();
        let compiled = {
            let _s = stage("load");
            self.sandbox.compile(&resolved.bytes).map_err(|e| AttestError::InvalidComponent(e.to_string()))?
        };
        timings.record(Stage::Load, t.elapsed());

        let eval = {
            let _s = stage("verify");
            let input = EvaluateInput {
                tee_evidence: req.evidence.tee_evidence,
                endorsements: req.endorsements,
                expected_report_data: req.evidence.expected_report_data.clone(),
            };
            self.sandbox.evaluate(&compiled, &input, &ident.policy).map_err(|e| {
                self.metrics.incr("sandbox.aborts");
                AttestError::Aborted(e)
            })?
        };
        timings.record(Stage::Instantiate, eval.instantiate_time);
        timings.record(Stage::Verify, eval.run_time);

        let t = Instant::now();
        let (claims, appraisal) = {
            let _s = stage("appraise");
            let (attester, failure) = match eval.output {
                EvaluateOutput::Claims(c) => (c, None),
                EvaluateOutput::Failure { code, detail } => (Default::default(), Some((code, detail))),
            };
            let claims = ClaimSet { component: ident.identity, attester };
            let mut appraisal = snap.policies.appraise(&req.evidence.policy_id, &claims);
            if let Some((code, detail)) = failure {
                appraisal.record_failure("/attester", failure_category(code), format!("{code}: {detail}"));
            }
            (claims, appraisal)
        };
        timings.record(Stage::Appraise, t.elapsed());

        let t = Instant::now();
        let (signed, status) = {
            let _s = stage("sign");
            let result = AttestationResult::new(
                i64::try_from(now).unwrap_or(i64::MAX),
                self.verifier_id.clone(),
                req.evidence.policy_id,
                req.evidence.expected_report_data,
                claims,
                appraisal,
            );
            (ear::emit(&result, &self.signing_key), result.status())
        };
        let encoded = signed.to_cbor();
        timings.record(Stage::Sign, t.elapsed());

        Ok(Attested {
            signed,
            encoded,
            status,
            source: resolved.source,
            signature: ident.status,
            timings: StageTimings::default(),
        })
    }

    // ------------------------------------------------------------ admin

    fn update(&self, f: impl FnOnce(&Snapshot) -> Result<Snapshot, AdminError>) -> Result<(), AdminError> {
        let _guard = self.admin.lock();
        let next = f(&self.snapshot())?;
        *self.snapshot.write() = Arc::new(next);
        Ok(())
    }

    /// Installs or replaces a policy given as TOML; returns its id.
    pub fn install_policy(&self, text: &str) -> Result<String, AdminError> {
        let policy = AppraisalPolicy::from_toml_str(text)?;
        let id = policy.policy_id.clone();
        self.update(|s| Ok(Snapshot { trust_store: s.trust_store.clone(), policies: s.policies.with_policy(policy)? }))?;
        self.metrics.incr("admin.policies");
        Ok(id)
    }

    /// Merges reference values given as JSON or TOML; returns how many.
    pub fn install_reference_values(&self, text: &str, json: bool) -> Result<usize, AdminError> {
        let values = parse_reference_values(text, json)?;
        let n = values.len();
        self.update(|s| {
            Ok(Snapshot { trust_store: s.trust_store.clone(), policies: s.policies.with_reference_values(values)? })
        })?;
        self.metrics.incr("admin.reference_values");
        Ok(n)
    }

    /// Replaces the trust store with the given one.
    pub fn install_trust_store(&self, store: TrustStore) -> Result<(), AdminError> {
        let store = apply_overrides(store, &self.policy_overrides)?;
        self.update(|s| Ok(Snapshot { trust_store: Arc::new(store), policies: s.policies.clone() }))
    }

    /// Rereads the configured trust store file; returns the signer count.
    pub fn reload_trust_store(&self) -> Result<usize, AdminError> {
        let path = self.trust_store_path.as_ref().ok_or(AdminError::NotConfigured("no trust store path configured"))?;
        let store = TrustStore::load(path)?;
        let n = store.signers().count();
        self.install_trust_store(store)?;
        self.metrics.incr("admin.trust_store_reloads");
        Ok(n)
    }

    /// Drops cached component bytes, on disk too, and every compilation,
    /// so the next request starts cold.
    pub fn clear_caches(&self) {
        self.resolver.purge();
        self.sandbox.clear();
        self.metrics.incr("admin.cache_clears");
    }
}

/// Trust-vector category charged when a component reports a failure.
pub fn failure_category(code: FailureCode) -> Category {
    match code {
        FailureCode::InvalidEvidence | FailureCode::EndorsementRejected => Category::Hardware,
        FailureCode::FreshnessMismatch => Category::InstanceIdentity,
        FailureCode::Internal => Category::Configuration,
    }
}

fn signature_status_name(s: SignatureStatus) -> &'static str {
    match s {
        SignatureStatus::Trusted => "trusted",
        SignatureStatus::Unsigned => "unsigned",
        SignatureStatus::Invalid => "invalid_signature",
        SignatureStatus::Expired => "expired",
        SignatureStatus::UnknownSigner => "unknown_signer",
        SignatureStatus::Unreadable => "unreadable",
    }
}
