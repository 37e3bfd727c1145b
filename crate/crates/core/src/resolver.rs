// SPDX-License-Identifier: Apache-2.0

//! Component resolution: cache, then stapled bytes, then registry.
//!
//! Nothing returned from here is trusted. Callers measure and identify the
//! bytes before running them; this module only guarantees that hash-form
//! references resolve to bytes with the requested measurement.
//!
//! Cached bytes are kept per exact byte string. A hash-form reference finds
//! the most recently inserted variant with that measurement; signed and
//! unsigned variants share a measurement, and the cache does not prefer one.
//! Stapled bytes are never bound to a registry tag: a client stapling a
//! module cannot change what that tag resolves to for other clients.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use parking_lot::Mutex;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::identity::{measure, ComponentHash};

pub const DEFAULT_CACHE_CAP: u64 = 1024 * 1024 * 1024;
pub const DEFAULT_MAX_COMPONENT_BYTES: u64 = 32 * 1024 * 1024;
pub const DEFAULT_REGISTRY_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ComponentRef {
    /// `sha256:<64 hex>`
    Hash(ComponentHash),
    /// `reg://<host[:port]>/<name>:<tag>`
    Registry { authority: String, name: String, tag: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RefError {
    #[error("unknown reference scheme in {0:?}")]
    UnknownScheme(String),
    #[error("hash reference must be 64 hex digits")]
    BadDigest,
    #[error("malformed registry reference: {0}")]
    BadRegistryRef(&'static str),
}

fn valid_path_chars(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'.' | b'_' | b'/' | b'-'))
}

impl FromStr for ComponentRef {
    type Err = RefError;
    fn from_str(s: &str) -> Result<Self, RefError> {
        if let Some(hex) = s.strip_prefix("sha256:") {
            if hex.len() != 64 || hex.bytes().any(|b| b.is_ascii_uppercase()) {
                return Err(RefError::BadDigest);
            }
            return hex.parse().map(ComponentRef::Hash).map_err(|_| RefError::BadDigest);
        }
        let Some(rest) = s.strip_prefix("reg://") else {
            return Err(RefError::UnknownScheme(s.chars().take(32).collect()));
        };
        let (authority, path) = rest.split_once('/').ok_or(RefError::BadRegistryRef("missing path"))?;
        let host_ok = |h: &str| {
            !h.is_empty() && h.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'-' | b':'))
        };
        if !host_ok(authority) {
            return Err(RefError::BadRegistryRef("bad host"));
        }
        let (name, tag) = path.rsplit_once(':').ok_or(RefError::BadRegistryRef("missing tag"))?;
        if !valid_path_chars(name) || !valid_path_chars(tag) {
            return Err(RefError::BadRegistryRef("name and tag must match [a-z0-9._/-]+"));
        }
        if name.split('/').any(|seg| seg.is_empty() || seg == "." || seg == "..") || tag.contains('/') {
            return Err(RefError::BadRegistryRef("bad path segment"));
        }
        Ok(ComponentRef::Registry { authority: authority.into(), name: name.into(), tag: tag.into() })
    }
}

impl fmt::Display for ComponentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentRef::Hash(h) => write!(f, "sha256:{h}"),
            ComponentRef::Registry { authority, name, tag } => write!(f, "reg://{authority}/{name}:{tag}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Cache,
    Stapled,
    Registry,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Cache => "cache",
            Source::Stapled => "stapled",
            Source::Registry => "registry",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResolveError {
    #[error("component {0} not found")]
    NotFound(String),
    #[error("component bytes hash to {actual}, reference asks for {expected}")]
    DigestMismatch { expected: ComponentHash, actual: ComponentHash },
    #[error("registry fetch failed: {0}")]
    FetchFailed(String),
    #[error("registry response exceeds {0} bytes")]
    ResponseTooLarge(u64),
}

/// Source of registry bytes. The default client speaks the single-GET
/// protocol; tests substitute their own.
pub trait RegistryClient: Send + Sync {
    fn fetch(&self, authority: &str, name: &str, tag: &str) -> Result<Vec<u8>, ResolveError>;
}

/// `GET http://<authority>/v1/components/<name>/<tag>`.
#[derive(Clone, Debug)]
pub struct HttpRegistry {
    pub timeout: Duration,
    pub max_bytes: u64,
}

impl Default for HttpRegistry {
    fn default() -> Self {
        HttpRegistry { timeout: DEFAULT_REGISTRY_TIMEOUT, max_bytes: DEFAULT_MAX_COMPONENT_BYTES }
    }
}

impl HttpRegistry {
    pub fn url(authority: &str, name: &str, tag: &str) -> String {
        format!("http://{authority}/v1/components/{name}/{tag}")
    }
}

impl RegistryClient for HttpRegistry {
    fn fetch(&self, authority: &str, name: &str, tag: &str) -> Result<Vec<u8>, ResolveError> {
        let url = Self::url(authority, name, tag);
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).redirects(0).build();
        let resp = agent.get(&url).call().map_err(|e| match e {
            ureq::Error::Status(code, _) => ResolveError::FetchFailed(format!("{url}: HTTP {code}")),
            ureq::Error::Transport(t) => ResolveError::FetchFailed(format!("{url}: {t}")),
        })?;
        if let Some(len) = resp.header("content-length").and_then(|v| v.parse::<u64>().ok()) {
            if len > self.max_bytes {
                return Err(ResolveError::ResponseTooLarge(self.max_bytes));
            }
        }
        let mut body = Vec::new();
        resp.into_reader()
            .take(self.max_bytes + 1)
            .read_to_end(&mut body)
            .map_err(|e| ResolveError::FetchFailed(format!("{url}: {e}")))?;
        if body.len() as u64 > self.max_bytes {
            return Err(ResolveError::ResponseTooLarge(self.max_bytes));
        }
        Ok(body)
    }
}

type RawDigest = [u8; 32];

struct Entry {
    bytes: Arc<[u8]>,
    hash: ComponentHash,
    last_used: u64,
}

#[derive(Default)]
struct CacheState {
    by_raw: HashMap<RawDigest, Entry>,
    /// Most recently inserted variant per measurement.
    by_hash: HashMap<ComponentHash, RawDigest>,
    by_ref: HashMap<String, RawDigest>,
    total: u64,
    tick: u64,
}

impl CacheState {
    fn touch(&mut self, raw: &RawDigest) -> Option<(Arc<[u8]>, ComponentHash)> {
        self.tick += 1;
        let tick = self.tick;
        self.by_raw.get_mut(raw).map(|e| {
            e.last_used = tick;
            (e.bytes.clone(), e.hash)
        })
    }

    fn remove(&mut self, raw: &RawDigest) -> Option<ComponentHash> {
        let e = self.by_raw.remove(raw)?;
        self.total -= e.bytes.len() as u64;
        self.by_ref.retain(|_, r| r != raw);
        // Another signature variant may still stand for the measurement.
        if self.by_hash.get(&e.hash) != Some(raw) {
            return None;
        }
        self.by_hash.remove(&e.hash);
        Some(e.hash)
    }
}

/// Byte cache with LRU eviction by total size and optional disk persistence
/// as `<dir>/<hex measurement>.bin`.
pub struct ComponentCache {
    state: Mutex<CacheState>,
    cap: u64,
    disk: Option<PathBuf>,
}

impl ComponentCache {
    pub fn new(cap: u64, disk: Option<PathBuf>) -> Self {
        if let Some(d) = &disk {
            if let Err(e) = std::fs::create_dir_all(d) {
                tracing::warn!(dir = %d.display(), error = %e, "cannot create component cache directory");
            }
        }
        ComponentCache { state: Mutex::new(CacheState::default()), cap, disk }
    }

    pub fn total_bytes(&self) -> u64 {
        self.state.lock().total
    }

    pub fn len(&self) -> usize {
        self.state.lock().by_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Forgets everything held in memory. Disk copies stay.
    pub fn clear(&self) {
        *self.state.lock() = CacheState::default();
    }

    /// Forgets everything and deletes the disk copies.
    pub fn purge(&self) {
        let mut st = self.state.lock();
        *st = CacheState::default();
        let Some(dir) = &self.disk else { return };
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for e in entries.flatten() {
            if e.path().extension().is_some_and(|x| x == "bin") {
                let _ = std::fs::remove_file(e.path());
            }
        }
    }

    fn get_by_hash(&self, hash: &ComponentHash) -> Option<Arc<[u8]>> {
        {
            let mut st = self.state.lock();
            if let Some(raw) = st.by_hash.get(hash).copied() {
                return st.touch(&raw).map(|(b, _)| b);
            }
        }
        let path = self.disk.as_ref()?.join(format!("{}.bin", hash.to_hex()));
        let bytes = std::fs::read(&path).ok()?;
        if measure(&bytes) != *hash {
            tracing::warn!(path = %path.display(), "discarding corrupt cached component");
            let _ = std::fs::remove_file(&path);
            return None;
        }
        let bytes: Arc<[u8]> = bytes.into();
        self.insert(bytes.clone(), *hash, None);
        Some(bytes)
    }

    fn get_by_raw(&self, raw: &RawDigest) -> Option<Arc<[u8]>> {
        self.state.lock().touch(raw).map(|(b, _)| b)
    }

    fn get_by_ref(&self, r: &str) -> Option<(Arc<[u8]>, ComponentHash)> {
        let mut st = self.state.lock();
        let raw = st.by_ref.get(r).copied()?;
        st.touch(&raw)
    }

    /// Inserts (idempotently) and returns measurements evicted to stay under the cap.
    fn insert(&self, bytes: Arc<[u8]>, hash: ComponentHash, bind_ref: Option<&str>) -> Vec<ComponentHash> {
        let raw: RawDigest = Sha256::digest(&bytes).into();
        let mut evicted = Vec::new();
        {
            let mut st = self.state.lock();
            if st.by_raw.contains_key(&raw) {
                st.touch(&raw);
            } else {
                st.tick += 1;
                let tick = st.tick;
                st.total += bytes.len() as u64;
                st.by_raw.insert(raw, Entry { bytes: bytes.clone(), hash, last_used: tick });
            }
            st.by_hash.insert(hash, raw);
            if let Some(r) = bind_ref {
                st.by_ref.insert(r.to_owned(), raw);
            }
            while st.total > self.cap && st.by_raw.len() > 1 {
                let victim = st
                    .by_raw
                    .iter()
                    .filter(|(k, _)| **k != raw)
                    .min_by_key(|(_, e)| e.last_used)
                    .map(|(k, _)| *k)
                    .expect("more than one entry");
                evicted.extend(st.remove(&victim));
            }
        }
        if let Some(dir) = &self.disk {
            let path = dir.join(format!("{}.bin", hash.to_hex()));
            let tmp = dir.join(format!(".{}.tmp", hex::encode(raw)));
            let written = std::fs::write(&tmp, &bytes).and_then(|_| std::fs::rename(&tmp, &path));
            if let Err(e) = written {
                tracing::warn!(path = %path.display(), error = %e, "cannot persist component");
            }
        }
        evicted
    }
}

#[derive(Debug, Default)]
struct Counters {
    cache: AtomicU64,
    stapled: AtomicU64,
    registry: AtomicU64,
    stapled_ignored: AtomicU64,
    registry_fetches: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ResolverStats {
    pub cache: u64,
    pub stapled: u64,
    pub registry: u64,
    /// Requests whose stapled bytes differed from what the cache served.
    pub stapled_ignored: u64,
    /// Actual registry round trips (single-flight collapses concurrent ones).
    pub registry_fetches: u64,
}

#[derive(Clone, Debug)]
pub struct Resolved {
    pub bytes: Arc<[u8]>,
    pub hash: ComponentHash,
    pub source: Source,
    /// Measurements evicted from the byte cache by this resolution.
    pub evicted: Vec<ComponentHash>,
}

type Flight = Arc<OnceLock<Result<Arc<[u8]>, ResolveError>>>;

pub struct Resolver {
    cache: ComponentCache,
    registry: Arc<dyn RegistryClient>,
    in_flight: Mutex<HashMap<String, Flight>>,
    counters: Counters,
}

impl Resolver {
    pub fn new(cache: ComponentCache, registry: Arc<dyn RegistryClient>) -> Self {
        Resolver { cache, registry, in_flight: Mutex::new(HashMap::new()), counters: Counters::default() }
    }

    pub fn cache(&self) -> &ComponentCache {
        &self.cache
    }

    pub fn stats(&self) -> ResolverStats {
        let c = &self.counters;
        ResolverStats {
            cache: c.cache.load(Ordering::Relaxed),
            stapled: c.stapled.load(Ordering::Relaxed),
            registry: c.registry.load(Ordering::Relaxed),
            stapled_ignored: c.stapled_ignored.load(Ordering::Relaxed),
            registry_fetches: c.registry_fetches.load(Ordering::Relaxed),
        }
    }

    fn done(&self, bytes: Arc<[u8]>, hash: ComponentHash, source: Source, evicted: Vec<ComponentHash>) -> Resolved {
        let counter = match source {
            Source::Cache => &self.counters.cache,
            Source::Stapled => &self.counters.stapled,
            Source::Registry => &self.counters.registry,
        };
        counter.fetch_add(1, Ordering::Relaxed);
        tracing::debug!(hash = %hash, source = source.as_str(), "component resolved");
        Resolved { bytes, hash, source, evicted }
    }

    /// Resolves strictly in the order cache → stapled → registry.
    ///
    /// A cache hit is either the exact stapled bytes or whatever the reference
    /// is bound to. A staple matching a hash reference differs from the cached
    /// copy at most in its signatures; it is used, and replaces the cached
    /// variant, so the requester's signature is the one identified. For
    /// registry references differing stapled bytes are ignored and counted in
    /// [`ResolverStats::stapled_ignored`].
    pub fn resolve(&self, r: &ComponentRef, stapled: Option<&[u8]>) -> Result<Resolved, ResolveError> {
        let ref_key = r.to_string();
        let stapled = stapled.map(|s| (s, measure(s), RawDigest::from(Sha256::digest(s))));
        if let Some((_, hash, raw)) = &stapled {
            if let ComponentRef::Hash(expected) = r {
                if hash != expected {
                    return Err(ResolveError::DigestMismatch { expected: *expected, actual: *hash });
                }
            }
            if let Some(bytes) = self.cache.get_by_raw(raw) {
                return Ok(self.done(bytes, *hash, Source::Cache, Vec::new()));
            }
        }
        let cached = match r {
            ComponentRef::Hash(_) if stapled.is_some() => None,
            ComponentRef::Hash(h) => self.cache.get_by_hash(h).map(|b| (b, *h)),
            ComponentRef::Registry { .. } => self.cache.get_by_ref(&ref_key),
        };
        if let Some((bytes, hash)) = cached {
            if stapled.is_some() {
                self.counters.stapled_ignored.fetch_add(1, Ordering::Relaxed);
            }
            return Ok(self.done(bytes, hash, Source::Cache, Vec::new()));
        }

        if let Some((stapled, hash, _)) = stapled {
            let bytes: Arc<[u8]> = stapled.into();
            let evicted = self.cache.insert(bytes.clone(), hash, None);
            return Ok(self.done(bytes, hash, Source::Stapled, evicted));
        }

        let ComponentRef::Registry { authority, name, tag } = r else {
            return Err(ResolveError::NotFound(ref_key));
        };
        let bytes = self.fetch_single_flight(&ref_key, authority, name, tag)?;
        let hash = measure(&bytes);
        let evicted = self.cache.insert(bytes.clone(), hash, Some(&ref_key));
        Ok(self.done(bytes, hash, Source::Registry, evicted))
    }

    fn fetch_single_flight(&self, key: &str, authority: &str, name: &str, tag: &str) -> Result<Arc<[u8]>, ResolveError> {
        let flight = self.in_flight.lock().entry(key.to_owned()).or_default().clone();
        let result = flight
            .get_or_init(|| {
                self.counters.registry_fetches.fetch_add(1, Ordering::Relaxed);
                self.registry.fetch(authority, name, tag).map(Arc::from)
            })
            .clone();
        let mut in_flight = self.in_flight.lock();
        if in_flight.get(key).is_some_and(|f| Arc::ptr_eq(f, &flight)) {
            in_flight.remove(key);
        }
        result
    }

    /// Empties the in-memory byte cache.
    pub fn clear(&self) {
        self.cache.clear();
    }

    /// Empties the byte cache, disk copies included.
    pub fn purge(&self) {
        self.cache.purge();
    }
}
