// SPDX-License-Identifier: Apache-2.0

//! Service configuration.
//!
//! A TOML file; relative paths resolve against the file's directory.
//!
//! ```toml
//! listen = "127.0.0.1:8400"
//! verifier_id = "trustmee-verifier"
//! trust_store = "trust-store.toml"
//! policy_dir = "policies"                   # every *.toml inside is installed
//! reference_values = "reference-values.toml" # .json also accepted
//! signing_key = "keys/verifier.ed25519.key"
//! cache_dir = "cache"                       # optional; components/ and scratch/
//! cache_cap_bytes = 1073741824
//! max_request_bytes = 16777216
//! admin_token = "change-me"                 # optional; admin API disabled without it
//!
//! [default_policy]                          # optional overrides of the restrictive policy
//! fuel_budget = 400000000
//! wall_clock_limit_ms = 2000
//! ```
//!
//! Environment overrides: `TRUSTMEE_LISTEN`, `TRUSTMEE_SIGNING_KEY`,
//! `TRUSTMEE_ADMIN_TOKEN`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use trustmee_core::identity::ExecutionPolicy;
use trustmee_core::resolver::DEFAULT_CACHE_CAP;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8400";
pub const DEFAULT_MAX_REQUEST_BYTES: usize = 16 * 1024 * 1024;
pub const DEFAULT_VERIFIER_ID: &str = "trustmee-verifier";

pub const ENV_LISTEN: &str = "TRUSTMEE_LISTEN";
pub const ENV_SIGNING_KEY: &str = "TRUSTMEE_SIGNING_KEY";
pub const ENV_ADMIN_TOKEN: &str = "TRUSTMEE_ADMIN_TOKEN";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Overrides applied on top of [`ExecutionPolicy::restrictive`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyOverrides {
    pub fuel_budget: Option<u64>,
    pub network_allowed: Option<bool>,
    pub max_memory_bytes: Option<u64>,
    pub wall_clock_limit_ms: Option<u64>,
}

impl PolicyOverrides {
    pub fn apply(&self, mut p: ExecutionPolicy) -> ExecutionPolicy {
        if let Some(v) = self.fuel_budget {
            p.fuel_budget = v;
        }
        if let Some(v) = self.network_allowed {
            p.network_allowed = v;
        }
        if let Some(v) = self.max_memory_bytes {
            p.max_memory_bytes = v;
        }
        if let Some(v) = self.wall_clock_limit_ms {
            p.wall_clock_limit_ms = v;
        }
        p
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    listen: Option<String>,
    verifier_id: Option<String>,
    trust_store: PathBuf,
    policy_dir: PathBuf,
    reference_values: Option<PathBuf>,
    signing_key: PathBuf,
    cache_dir: Option<PathBuf>,
    cache_cap_bytes: Option<u64>,
    max_request_bytes: Option<usize>,
    admin_token: Option<String>,
    #[serde(default)]
    default_policy: PolicyOverrides,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub verifier_id: String,
    pub trust_store: PathBuf,
    pub policy_dir: PathBuf,
    pub reference_values: Option<PathBuf>,
    pub signing_key: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub cache_cap_bytes: u64,
    pub max_request_bytes: usize,
    pub admin_token: Option<String>,
    pub default_policy: PolicyOverrides,
}

fn parse_listen(s: &str) -> Result<SocketAddr, ConfigError> {
    s.parse().map_err(|e| ConfigError::Invalid(format!("listen address {s:?}: {e}")))
}

impl ServiceConfig {
    /// Parses `text`, resolving relative paths against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let abs = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        Ok(ServiceConfig {
            listen: parse_listen(raw.listen.as_deref().unwrap_or(DEFAULT_LISTEN))?,
            verifier_id: raw.verifier_id.unwrap_or_else(|| DEFAULT_VERIFIER_ID.to_owned()),
            trust_store: abs(raw.trust_store),
            policy_dir: abs(raw.policy_dir),
            reference_values: raw.reference_values.map(abs),
            signing_key: abs(raw.signing_key),
            cache_dir: raw.cache_dir.map(abs),
            cache_cap_bytes: raw.cache_cap_bytes.unwrap_or(DEFAULT_CACHE_CAP),
            max_request_bytes: raw.max_request_bytes.unwrap_or(DEFAULT_MAX_REQUEST_BYTES),
            admin_token: raw.admin_token.filter(|t| !t.is_empty()),
            default_policy: raw.default_policy,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Applies overrides from `get`, normally [`std::env::var`].
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get(ENV_LISTEN) {
            self.listen = parse_listen(&v)?;
        }
        if let Some(v) = get(ENV_SIGNING_KEY) {
            self.signing_key = PathBuf::from(v);
        }
        if let Some(v) = get(ENV_ADMIN_TOKEN).filter(|t| !t.is_empty()) {
            self.admin_token = Some(v);
        }
        Ok(())
    }

    pub fn default_execution_policy(&self) -> ExecutionPolicy {
        self.default_policy.apply(ExecutionPolicy::restrictive())
    }

    /// Checks that every configured path is readable and the default policy
    /// is usable. The signing key itself is checked when the verifier loads.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let readable = |p: &Path| std::fs::metadata(p).map(|_| ()).map_err(|source| ConfigError::Io { path: p.to_owned(), source });
        readable(&self.trust_store)?;
        readable(&self.signing_key)?;
        std::fs::read_dir(&self.policy_dir).map_err(|source| ConfigError::Io { path: self.policy_dir.clone(), source })?;
        if let Some(r) = &self.reference_values {
            readable(r)?;
        }
        self.default_execution_policy().validate().map_err(ConfigError::Invalid)?;
        if self.max_request_bytes == 0 {
            return Err(ConfigError::Invalid("max_request_bytes must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        trust_store = "ts.toml"
        policy_dir = "/etc/trustmee/policies"
        signing_key = "k"
    "#;

    #[test]
    fn defaults_and_relative_paths() {
        let c = ServiceConfig::from_toml_str(MINIMAL, Path::new("/srv")).unwrap();
        assert_eq!(c.listen, DEFAULT_LISTEN.parse().unwrap());
        assert_eq!(c.trust_store, Path::new("/srv/ts.toml"));
        assert_eq!(c.policy_dir, Path::new("/etc/trustmee/policies"));
        assert_eq!(c.cache_dir, None);
        assert_eq!(c.admin_token, None);
        assert_eq!(c.default_execution_policy(), ExecutionPolicy::restrictive());
    }

    #[test]
    fn overrides() {
        let text = format!("{MINIMAL}\nadmin_token = \"\"\n[default_policy]\nfuel_budget = 5\nnetwork_allowed = true\n");
        let mut c = ServiceConfig::from_toml_str(&text, Path::new("/srv")).unwrap();
        assert_eq!(c.admin_token, None);
        let p = c.default_execution_policy();
        assert_eq!((p.fuel_budget, p.network_allowed), (5, true));
        c.apply_env(|k| match k {
            ENV_LISTEN => Some("0.0.0.0:9".into()),
            ENV_ADMIN_TOKEN => Some("t".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.listen, "0.0.0.0:9".parse().unwrap());
        assert_eq!(c.admin_token.as_deref(), Some("t"));
        assert!(c.apply_env(|_| Some("nope".into())).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_missing_paths() {
        assert!(ServiceConfig::from_toml_str(&format!("{MINIMAL}\nbogus = 1"), Path::new("/")).is_err());
        let c = ServiceConfig::from_toml_str(MINIMAL, Path::new("/nonexistent")).unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::Io { .. })));
    }
}
