// SPDX-License-Identifier: Apache-2.0

//! Metered, capability-gated execution of verification components.
//!
//! Components are compiled once per measurement and cached. Every evaluation
//! gets a fresh instance with its own fuel budget, memory cap and wall-clock
//! deadline taken from the component's [`ExecutionPolicy`]. The only ambient
//! capabilities are the `trustmee-host` imports:
//!
//! * `http_get`: denied unless the policy allows network access,
//! * `cache_read` / `cache_write`: a scratch directory shared by all instances
//!   of the same measurement and by nothing else,
//! * `verify_p256`: native ECDSA P-256 signature checks,
//! * `now`: the host clock.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::{Component as PathComponent, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use thiserror::Error;
use trustmee_abi::{imports, pack, unpack, EvaluateInput, EvaluateOutput, FailureCode, HostError};
use wasmtime::{
    Caller, Config, Engine, ExternType, InstancePre, Linker, Module, ResourceLimiter, Store, Trap, ValType,
};

use crate::identity::{self, ComponentHash, ExecutionPolicy};

pub const MAX_OUTPUT_BYTES: usize = 1024 * 1024;
pub const MAX_CLAIMS_DEPTH: usize = 8;
pub const DEFAULT_SCRATCH_QUOTA: u64 = 16 * 1024 * 1024;
pub const DEFAULT_MAX_HTTP_RESPONSE: u64 = 8 * 1024 * 1024;

const EPOCH_TICK: Duration = Duration::from_millis(2);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error("invalid bytecode: {0}")]
    InvalidBytecode(String),
    #[error("missing or mistyped export {0:?}")]
    MissingExport(&'static str),
    #[error("unsupported import: {0}")]
    UnsupportedImport(String),
}

/// Ways an evaluation can be cut short by the host. Component-reported
/// failures are not errors; they arrive as [`EvaluateOutput::Failure`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SandboxError {
    #[error("fuel budget exhausted")]
    FuelExhausted,
    #[error("memory limit exceeded")]
    MemoryExceeded,
    #[error("wall-clock limit of {0} ms exceeded")]
    WallClockExceeded(u64),
    #[error("component trapped: {0}")]
    Trap(String),
}

#[derive(Clone, Debug)]
pub struct SandboxConfig {
    /// Parent of the per-measurement scratch directories.
    pub scratch_root: PathBuf,
    pub scratch_quota: u64,
    pub max_http_response: u64,
}

impl SandboxConfig {
    pub fn with_scratch_root(root: impl Into<PathBuf>) -> Self {
        SandboxConfig {
            scratch_root: root.into(),
            scratch_quota: DEFAULT_SCRATCH_QUOTA,
            max_http_response: DEFAULT_MAX_HTTP_RESPONSE,
        }
    }
}

/// A compiled module ready to instantiate. Keyed by the measurement of the
/// stripped bytes it was compiled from.
pub struct CompiledComponent {
    pub hash: ComponentHash,
    pub compiled_at: SystemTime,
    pub compile_time: Duration,
    pre: InstancePre<HostState>,
}

impl fmt::Debug for CompiledComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompiledComponent")
            .field("hash", &self.hash)
            .field("compiled_at", &self.compiled_at)
            .finish_non_exhaustive()
    }
}

/// Outcome of one evaluation with the timings the benchmarks break down.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub output: EvaluateOutput,
    pub fuel_consumed: u64,
    pub instantiate_time: Duration,
    pub run_time: Duration,
    pub imports: ImportCounts,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ImportCounts {
    pub http_get: u32,
    pub http_denied: u32,
    pub cache_read: u32,
    pub cache_write: u32,
    pub verify_p256: u32,
}

type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

struct HostState {
    limiter: MemoryLimiter,
    policy: ExecutionPolicy,
    scratch: ScratchDir,
    max_http_response: u64,
    deadline: Instant,
    now: u64,
    counts: ImportCounts,
}

struct MemoryLimiter {
    max_bytes: usize,
    denied: bool,
}

impl ResourceLimiter for MemoryLimiter {
    fn memory_growing(&mut self, _current: usize, desired: usize, _maximum: Option<usize>) -> wasmtime::Result<bool> {
        if desired > self.max_bytes {
            self.denied = true;
            return Ok(false);
        }
        Ok(true)
    }

    fn table_growing(&mut self, _current: usize, desired: usize, _maximum: Option<usize>) -> wasmtime::Result<bool> {
        Ok(desired <= 100_000)
    }
}

fn engine() -> &'static Engine {
    static ENGINE: OnceLock<Engine> = OnceLock::new();
    ENGINE.get_or_init(|| {
        let mut config = Config::new();
        config.consume_fuel(true);
        config.epoch_interruption(true);
        let engine = Engine::new(&config).expect("engine configuration is valid");
        let ticker = engine.clone();
        std::thread::Builder::new()
            .name("trustmee-epoch".into())
            .spawn(move || loop {
                std::thread::sleep(EPOCH_TICK);
                ticker.increment_epoch();
            })
            .expect("spawn epoch ticker");
        engine
    })
}

#[derive(Default)]
struct Counters {
    compilations: AtomicU64,
    compile_cache_hits: AtomicU64,
    evaluations: AtomicU64,
    fuel_aborts: AtomicU64,
}

type CompileSlot = Arc<OnceLock<Result<Arc<CompiledComponent>, CompileError>>>;

/// Compiles, caches and runs components.
pub struct Sandbox {
    config: SandboxConfig,
    linker: Linker<HostState>,
    compiled: Mutex<HashMap<ComponentHash, CompileSlot>>,
    counters: Counters,
    clock: Clock,
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Self {
        Self::with_clock(config, Arc::new(unix_now))
    }

    pub fn with_clock(config: SandboxConfig, clock: Clock) -> Self {
        let mut linker = Linker::new(engine());
        define_imports(&mut linker).expect("host imports are well-typed");
        Sandbox { config, linker, compiled: Mutex::new(HashMap::new()), counters: Counters::default(), clock }
    }

    /// Compiles `component` or returns the cached compilation for its
    /// measurement. Concurrent calls for the same measurement compile once.
    pub fn compile(&self, component: &[u8]) -> Result<Arc<CompiledComponent>, CompileError> {
        let stripped = identity::strip_signature(component)
            .map_err(|e| CompileError::InvalidBytecode(e.to_string()))?;
        let hash = ComponentHash::of_stripped(&stripped);
        let slot = self.compiled.lock().entry(hash).or_default().clone();
        let mut compiled_here = false;
        let result = slot
            .get_or_init(|| {
                compiled_here = true;
                self.counters.compilations.fetch_add(1, Ordering::Relaxed);
                self.compile_uncached(hash, &stripped).map(Arc::new)
            })
            .clone();
        if !compiled_here {
            self.counters.compile_cache_hits.fetch_add(1, Ordering::Relaxed);
        }
        result
    }

    /// True when a compilation for `hash` is cached.
    pub fn is_compiled(&self, hash: &ComponentHash) -> bool {
        self.compiled.lock().get(hash).map(|s| matches!(s.get(), Some(Ok(_)))).unwrap_or(false)
    }

    fn compile_uncached(&self, hash: ComponentHash, stripped: &[u8]) -> Result<CompiledComponent, CompileError> {
        let started = Instant::now();
        let module = Module::new(engine(), stripped).map_err(|e| CompileError::InvalidBytecode(format!("{e:#}")))?;
        check_exports(&module)?;
        let pre = self
            .linker
            .instantiate_pre(&module)
            .map_err(|e| CompileError::UnsupportedImport(format!("{e:#}")))?;
        Ok(CompiledComponent { hash, compiled_at: SystemTime::now(), compile_time: started.elapsed(), pre })
    }

    /// Drops every cached compilation.
    pub fn clear(&self) {
        self.compiled.lock().clear();
    }

    pub fn compilations(&self) -> u64 {
        self.counters.compilations.load(Ordering::Relaxed)
    }

    pub fn compile_cache_hits(&self) -> u64 {
        self.counters.compile_cache_hits.load(Ordering::Relaxed)
    }

    pub fn evaluations(&self) -> u64 {
        self.counters.evaluations.load(Ordering::Relaxed)
    }

    pub fn fuel_aborts(&self) -> u64 {
        self.counters.fuel_aborts.load(Ordering::Relaxed)
    }

    pub fn scratch_dir(&self, hash: &ComponentHash) -> PathBuf {
        self.config.scratch_root.join(hash.to_hex())
    }

    /// Removes all scratch directories.
    pub fn clear_scratch(&self) -> std::io::Result<()> {
        match std::fs::remove_dir_all(&self.config.scratch_root) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }

    /// Runs `comp` on `input` in a fresh instance bounded by `policy`.
    pub fn evaluate(
        &self,
        comp: &CompiledComponent,
        input: &EvaluateInput,
        policy: &ExecutionPolicy,
    ) -> Result<Evaluation, SandboxError> {
        self.counters.evaluations.fetch_add(1, Ordering::Relaxed);
        let result = self.evaluate_inner(comp, input, policy);
        if matches!(result, Err(SandboxError::FuelExhausted)) {
            self.counters.fuel_aborts.fetch_add(1, Ordering::Relaxed);
        }
        result
    }

    fn evaluate_inner(
        &self,
        comp: &CompiledComponent,
        input: &EvaluateInput,
        policy: &ExecutionPolicy,
    ) -> Result<Evaluation, SandboxError> {
        let started = Instant::now();
        let state = HostState {
            limiter: MemoryLimiter { max_bytes: usize::try_from(policy.max_memory_bytes).unwrap_or(usize::MAX), denied: false },
            policy: *policy,
            scratch: ScratchDir { dir: self.scratch_dir(&comp.hash), quota: self.config.scratch_quota },
            max_http_response: self.config.max_http_response,
            deadline: started + Duration::from_millis(policy.wall_clock_limit_ms),
            now: (self.clock)(),
            counts: ImportCounts::default(),
        };
        let mut store = Store::new(engine(), state);
        store.limiter(|s| &mut s.limiter);
        store.set_fuel(policy.fuel_budget).expect("fuel metering is enabled");
        store.set_epoch_deadline(policy.wall_clock_limit_ms.div_ceil(EPOCH_TICK.as_millis() as u64) + 1);
        store.epoch_deadline_trap();

        let classify = |store: &Store<HostState>, err: wasmtime::Error| -> SandboxError {
            if store.data().limiter.denied {
                return SandboxError::MemoryExceeded;
            }
            match err.downcast_ref::<Trap>() {
                Some(Trap::OutOfFuel) => SandboxError::FuelExhausted,
                Some(Trap::Interrupt) => SandboxError::WallClockExceeded(policy.wall_clock_limit_ms),
                _ => SandboxError::Trap(format!("{err:#}")),
            }
        };

        let instance = match comp.pre.instantiate(&mut store) {
            Ok(i) => i,
            Err(e) => return Err(classify(&store, e)),
        };
        let instantiate_time = started.elapsed();

        let run_started = Instant::now();
        let run = (|| -> wasmtime::Result<Result<EvaluateOutput, String>> {
            let memory = instance
                .get_memory(&mut store, trustmee_abi::EXPORT_MEMORY)
                .ok_or_else(|| wasmtime::Error::msg("memory export vanished"))?;
            let alloc = instance.get_typed_func::<i32, i32>(&mut store, trustmee_abi::EXPORT_ALLOC)?;
            let eval = instance.get_typed_func::<(i32, i32), i64>(&mut store, trustmee_abi::EXPORT_EVALUATE)?;
            let encoded = input.encode();
            let len = i32::try_from(encoded.len()).map_err(|_| wasmtime::Error::msg("input too large"))?;
            let off = alloc.call(&mut store, len)?;
            if memory.write(&mut store, off as u32 as usize, &encoded).is_err() {
                return Ok(Err("tm_alloc returned an out-of-bounds buffer".into()));
            }
            let packed = eval.call(&mut store, (off, len))?;
            let (out_off, out_len) = unpack(packed);
            if out_len as usize > MAX_OUTPUT_BYTES {
                return Ok(Err(format!("output of {out_len} bytes exceeds {MAX_OUTPUT_BYTES}")));
            }
            let mut out = vec![0u8; out_len as usize];
            if memory.read(&store, out_off as usize, &mut out).is_err() {
                return Ok(Err("output location out of bounds".into()));
            }
            Ok(EvaluateOutput::decode(&out, MAX_CLAIMS_DEPTH).map_err(|e| format!("unusable output: {e}")))
        })();
        let run_time = run_started.elapsed();

        let output = match run {
            Ok(Ok(out)) => out,
            Ok(Err(detail)) => EvaluateOutput::failure(FailureCode::Internal, detail),
            Err(e) => return Err(classify(&store, e)),
        };
        let fuel_left = store.get_fuel().unwrap_or(0);
        Ok(Evaluation {
            output,
            fuel_consumed: policy.fuel_budget - fuel_left,
            instantiate_time,
            run_time,
            imports: store.data().counts,
        })
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn check_exports(module: &Module) -> Result<(), CompileError> {
    let find = |name: &'static str| module.exports().find(|e| e.name() == name).map(|e| e.ty());
    match find(trustmee_abi::EXPORT_MEMORY) {
        Some(ExternType::Memory(_)) => {}
        _ => return Err(CompileError::MissingExport(trustmee_abi::EXPORT_MEMORY)),
    }
    let func_is = |name: &'static str, params: &[fn(&ValType) -> bool], results: &[fn(&ValType) -> bool]| {
        let Some(ExternType::Func(ft)) = find(name) else {
            return Err(CompileError::MissingExport(name));
        };
        let p: Vec<ValType> = ft.params().collect();
        let r: Vec<ValType> = ft.results().collect();
        let ok = p.len() == params.len()
            && r.len() == results.len()
            && p.iter().zip(params).all(|(v, f)| f(v))
            && r.iter().zip(results).all(|(v, f)| f(v));
        if ok {
            Ok(())
        } else {
            Err(CompileError::MissingExport(name))
        }
    };
    let i32_ = |v: &ValType| matches!(v, ValType::I32);
    let i64_ = |v: &ValType| matches!(v, ValType::I64);
    func_is(trustmee_abi::EXPORT_ALLOC, &[i32_], &[i32_])?;
    func_is(trustmee_abi::EXPORT_EVALUATE, &[i32_, i32_], &[i64_])?;
    Ok(())
}

// ---------------------------------------------------------------- host imports

fn guest_bytes(caller: &mut Caller<'_, HostState>, off: i32, len: i32) -> Result<Vec<u8>, HostError> {
    let memory = caller
        .get_export(trustmee_abi::EXPORT_MEMORY)
        .and_then(|e| e.into_memory())
        .ok_or(HostError::BadArgument)?;
    let (off, len) = (off as u32 as usize, len as u32 as usize);
    memory
        .data(&caller)
        .get(off..off.checked_add(len).ok_or(HostError::BadArgument)?)
        .map(<[u8]>::to_vec)
        .ok_or(HostError::BadArgument)
}

/// Copies `bytes` into a buffer obtained from the component's `tm_alloc`.
/// Traps inside `tm_alloc` (fuel, memory) propagate as errors.
fn to_guest(caller: &mut Caller<'_, HostState>, bytes: &[u8]) -> wasmtime::Result<i64> {
    let alloc = caller
        .get_export(trustmee_abi::EXPORT_ALLOC)
        .and_then(|e| e.into_func())
        .ok_or_else(|| wasmtime::Error::msg("tm_alloc missing"))?
        .typed::<i32, i32>(&*caller)?;
    let Ok(len) = i32::try_from(bytes.len()) else {
        return Ok(HostError::ResponseTooLarge.code());
    };
    let off = alloc.call(&mut *caller, len)?;
    let memory = caller
        .get_export(trustmee_abi::EXPORT_MEMORY)
        .and_then(|e| e.into_memory())
        .ok_or_else(|| wasmtime::Error::msg("memory missing"))?;
    if memory.write(&mut *caller, off as u32 as usize, bytes).is_err() {
        return Ok(HostError::BadArgument.code());
    }
    Ok(pack(off as u32, len as u32))
}

fn define_imports(linker: &mut Linker<HostState>) -> wasmtime::Result<()> {
    let m = trustmee_abi::HOST_MODULE;
    linker.func_wrap(m, imports::HTTP_GET, |mut caller: Caller<'_, HostState>, off: i32, len: i32| -> wasmtime::Result<i64> {
        caller.data_mut().counts.http_get += 1;
        let url = match guest_bytes(&mut caller, off, len).map(String::from_utf8) {
            Ok(Ok(u)) => u,
            _ => return Ok(HostError::BadArgument.code()),
        };
        let state = caller.data();
        if !state.policy.network_allowed {
            tracing::debug!(%url, "network access denied by execution policy");
            caller.data_mut().counts.http_denied += 1;
            return Ok(HostError::NetworkDenied.code());
        }
        let remaining = state.deadline.saturating_duration_since(Instant::now());
        match http_get(&url, remaining, state.max_http_response) {
            Ok(body) => to_guest(&mut caller, &body),
            Err(e) => Ok(e.code()),
        }
    })?;
    linker.func_wrap(m, imports::CACHE_READ, |mut caller: Caller<'_, HostState>, off: i32, len: i32| -> wasmtime::Result<i64> {
        caller.data_mut().counts.cache_read += 1;
        let key = match guest_bytes(&mut caller, off, len).map(String::from_utf8) {
            Ok(Ok(k)) => k,
            _ => return Ok(HostError::BadArgument.code()),
        };
        match caller.data().scratch.read(&key) {
            Ok(v) => to_guest(&mut caller, &v),
            Err(e) => Ok(e.code()),
        }
    })?;
    linker.func_wrap(
        m,
        imports::CACHE_WRITE,
        |mut caller: Caller<'_, HostState>, k_off: i32, k_len: i32, v_off: i32, v_len: i32| -> i32 {
            caller.data_mut().counts.cache_write += 1;
            let (key, value) = match (guest_bytes(&mut caller, k_off, k_len), guest_bytes(&mut caller, v_off, v_len)) {
                (Ok(k), Ok(v)) => match String::from_utf8(k) {
                    Ok(k) => (k, v),
                    Err(_) => return HostError::BadArgument.code() as i32,
                },
                _ => return HostError::BadArgument.code() as i32,
            };
            match caller.data().scratch.write(&key, &value) {
                Ok(()) => 0,
                Err(e) => e.code() as i32,
            }
        },
    )?;
    linker.func_wrap(
        m,
        imports::VERIFY_P256,
        |mut caller: Caller<'_, HostState>, m_off: i32, m_len: i32, s_off: i32, s_len: i32, k_off: i32, k_len: i32| -> i32 {
            caller.data_mut().counts.verify_p256 += 1;
            let args = (
                guest_bytes(&mut caller, m_off, m_len),
                guest_bytes(&mut caller, s_off, s_len),
                guest_bytes(&mut caller, k_off, k_len),
            );
            let (Ok(msg), Ok(sig), Ok(key)) = args else {
                return HostError::BadArgument.code() as i32;
            };
            match verify_p256(&msg, &sig, &key) {
                Ok(true) => 1,
                Ok(false) => 0,
                Err(e) => e.code() as i32,
            }
        },
    )?;
    linker.func_wrap(m, imports::NOW, |caller: Caller<'_, HostState>| -> i64 { caller.data().now as i64 })?;
    Ok(())
}

/// ECDSA P-256 over SHA-256(`msg`). `sig` is the 64-byte `r ‖ s` form and
/// `key` a SEC1-encoded point. A key that does not decode is an error; a
/// signature that does not decode is simply invalid.
pub fn verify_p256(msg: &[u8], sig: &[u8], key: &[u8]) -> Result<bool, HostError> {
    use p256::ecdsa::signature::Verifier;
    use p256::ecdsa::{Signature, VerifyingKey};
    let key = VerifyingKey::from_sec1_bytes(key).map_err(|_| HostError::MalformedKey)?;
    let Ok(sig) = Signature::from_slice(sig) else {
        return Ok(false);
    };
    Ok(key.verify(msg, &sig).is_ok())
}

/// Plain GET with size and time limits. Only `http` and `https` URLs are
/// fetched.
pub fn http_get(url: &str, timeout: Duration, max_bytes: u64) -> Result<Vec<u8>, HostError> {
    let scheme = url.split_once("://").map(|(s, _)| s.to_ascii_lowercase());
    if !matches!(scheme.as_deref(), Some("http") | Some("https")) {
        return Err(HostError::FetchFailed);
    }
    if timeout.is_zero() {
        return Err(HostError::FetchFailed);
    }
    let agent = ureq::AgentBuilder::new().timeout(timeout).redirects(0).build();
    let resp = agent.get(url).call().map_err(|e| {
        tracing::debug!(%url, error = %e, "fetch failed");
        HostError::FetchFailed
    })?;
    if let Some(len) = resp.header("content-length").and_then(|v| v.parse::<u64>().ok()) {
        if len > max_bytes {
            return Err(HostError::ResponseTooLarge);
        }
    }
    let mut body = Vec::new();
    resp.into_reader()
        .take(max_bytes + 1)
        .read_to_end(&mut body)
        .map_err(|_| HostError::FetchFailed)?;
    if body.len() as u64 > max_bytes {
        return Err(HostError::ResponseTooLarge);
    }
    Ok(body)
}

/// Per-measurement scratch space addressed by relative keys.
struct ScratchDir {
    dir: PathBuf,
    quota: u64,
}

/// Accepts `a/b.c`-style keys: relative, no `.`/`..` segments, a restricted
/// character set.
fn key_path(key: &str) -> Result<PathBuf, HostError> {
    let allowed = |c: char| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-' | '/');
    if key.is_empty() || key.len() > 255 || !key.chars().all(allowed) || key.starts_with('/') {
        return Err(HostError::PathEscape);
    }
    let path = Path::new(key);
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            PathComponent::Normal(seg) => out.push(seg),
            _ => return Err(HostError::PathEscape),
        }
    }
    if key.split('/').any(|s| s.is_empty() || s == "." || s == "..") {
        return Err(HostError::PathEscape);
    }
    Ok(out)
}

fn dir_usage(dir: &Path) -> u64 {
    let Ok(entries) = std::fs::read_dir(dir) else { return 0 };
    entries
        .flatten()
        .map(|e| match e.file_type() {
            Ok(t) if t.is_dir() => dir_usage(&e.path()),
            Ok(_) => e.metadata().map(|m| m.len()).unwrap_or(0),
            Err(_) => 0,
        })
        .sum()
}

impl ScratchDir {
    fn read(&self, key: &str) -> Result<Vec<u8>, HostError> {
        let path = self.dir.join(key_path(key)?);
        std::fs::read(path).map_err(|_| HostError::NotFound)
    }

    fn write(&self, key: &str, value: &[u8]) -> Result<(), HostError> {
        let path = self.dir.join(key_path(key)?);
        let existing = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
        if dir_usage(&self.dir).saturating_sub(existing) + value.len() as u64 > self.quota {
            return Err(HostError::QuotaExceeded);
        }
        let parent = path.parent().ok_or(HostError::PathEscape)?;
        std::fs::create_dir_all(parent).map_err(|_| HostError::BadArgument)?;
        // Write-then-rename so concurrent readers never see a torn value.
        static SEQ: AtomicU64 = AtomicU64::new(0);
        let tmp = parent.join(format!(".tmp-{}-{}", std::process::id(), SEQ.fetch_add(1, Ordering::Relaxed)));
        std::fs::write(&tmp, value).map_err(|_| HostError::BadArgument)?;
        std::fs::rename(&tmp, &path).map_err(|_| {
            let _ = std::fs::remove_file(&tmp);
            HostError::BadArgument
        })
    }
}
