// SPDX-License-Identifier: Apache-2.0

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use trustmee_core::appraisal::{self, ComponentPin, LegacyPolicy};
use trustmee_core::identity::{self, ComponentHash, SignerKey, TrustStore};
use trustmee_core::keyfile;
use trustmee_service::{ServiceConfig, Verifier};

/// Platform-agnostic remote attestation verifier.
#[derive(Parser)]
#[command(version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    serve: ServeArgs,
}

#[derive(Args)]
struct ServeArgs {
    /// Configuration file.
    #[arg(long, default_value = "trustmee.toml")]
    config: PathBuf,
    /// Listen address; overrides the file and TRUSTMEE_LISTEN.
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// Component cache and scratch directory; overrides the file.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service (the default).
    Serve(ServeArgs),
    /// Write a new Ed25519 private key.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the public key of an Ed25519 key file as hex.
    PublicKey { key: PathBuf },
    /// Add a signature section to a component.
    SignComponent {
        /// Ed25519 signer key file.
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Expiry as seconds since the Unix epoch.
        #[arg(long, conflicts_with = "valid_days")]
        expiry: Option<u64>,
        /// Expiry relative to now.
        #[arg(long, default_value_t = 365)]
        valid_days: u64,
    },
    /// Print a component's measurement and, with a trust store, its signature status.
    Measure {
        component: PathBuf,
        #[arg(long)]
        trust_store: Option<PathBuf>,
    },
    /// Rewrite a flat-claims policy for nested claims and pin components.
    MigratePolicy {
        #[arg(long)]
        legacy: PathBuf,
        /// Accepted component measurement (hex or sha256:hex); repeatable.
        #[arg(long = "hash")]
        hashes: Vec<String>,
        /// Accepted component signer (hex Ed25519 public key); repeatable.
        #[arg(long = "signer")]
        signers: Vec<String>,
        #[arg(long)]
        out_policy: PathBuf,
        /// Reference values for the pin rules, as TOML.
        #[arg(long)]
        out_reference_values: PathBuf,
    },
}

fn now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let mut config = ServiceConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    config.apply_env(|k| std::env::var(k).ok())?;
    if let Some(l) = args.listen {
        config.listen = l;
    }
    if let Some(d) = args.cache_dir {
        config.cache_dir = Some(d);
    }
    config.validate()?;
    if config.admin_token.is_none() {
        tracing::warn!("no admin token configured; admin endpoints will refuse every request");
    }
    let verifier = Arc::new(Verifier::from_config(&config)?);
    tracing::info!(
        listen = %config.listen,
        verifier_key = %hex::encode(verifier.public_key()),
        policies = verifier.snapshot().policies.policy_ids().count(),
        "starting verifier"
    );
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.listen).await?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        trustmee_service::http::serve(listener, verifier, shutdown).await
    })?;
    Ok(())
}

fn parse_hash(s: &str) -> anyhow::Result<ComponentHash> {
    s.strip_prefix("sha256:").unwrap_or(s).parse().with_context(|| format!("invalid measurement {s:?}"))
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        None => serve(cli.serve),
        Some(Command::Serve(args)) => serve(args),
        Some(Command::Keygen { out }) => {
            if out.exists() {
                bail!("{} already exists", out.display());
            }
            let key = ed25519_dalek::SigningKey::generate(&mut rand::rngs::OsRng);
            keyfile::write_ed25519_key(&out, &key)?;
            println!("{}", hex::encode(key.verifying_key().to_bytes()));
            Ok(())
        }
        Some(Command::PublicKey { key }) => {
            let key = keyfile::read_ed25519_key(&key)?;
            println!("{}", hex::encode(key.verifying_key().to_bytes()));
            Ok(())
        }
        Some(Command::SignComponent { key, input, out, expiry, valid_days }) => {
            let key = keyfile::read_ed25519_key(&key)?;
            let bytes = std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let expiry = expiry.unwrap_or_else(|| now().saturating_add(valid_days.saturating_mul(86_400)));
            let signed = identity::sign_component(&bytes, &key, expiry)?;
            std::fs::write(&out, signed)?;
            println!("{}", identity::measure(&bytes).to_ref());
            Ok(())
        }
        Some(Command::Measure { component, trust_store }) => {
            let bytes = std::fs::read(&component).with_context(|| format!("reading {}", component.display()))?;
            let store = match trust_store {
                Some(p) => TrustStore::load(&p)?,
                None => TrustStore::default(),
            };
            let id = identity::measure_and_identify(&bytes, &store, now());
            println!("measurement {}", id.identity.hash.to_ref());
            println!("signature {:?}", id.status);
            if let Some(s) = id.identity.signer {
                println!("signer {}", s.to_hex());
            }
            Ok(())
        }
        Some(Command::MigratePolicy { legacy, hashes, signers, out_policy, out_reference_values }) => {
            let text = std::fs::read_to_string(&legacy).with_context(|| format!("reading {}", legacy.display()))?;
            let legacy: LegacyPolicy = toml::from_str(&text).context("parsing legacy policy")?;
            let pin = ComponentPin {
                hashes: hashes.iter().map(|h| parse_hash(h)).collect::<Result<_, _>>()?,
                signers: signers
                    .iter()
                    .map(|s| s.parse::<SignerKey>().with_context(|| format!("invalid signer {s:?}")))
                    .collect::<Result<_, _>>()?,
            };
            let migrated = appraisal::migrate_policy(&legacy, &pin)?;
            std::fs::write(&out_policy, migrated.policy.to_toml_string())?;
            let refs = appraisal::reference_values_to_toml(migrated.reference_values.iter().map(|(k, v)| (k.as_str(), v)));
            std::fs::write(&out_reference_values, refs)?;
            println!("{}: {} rules", migrated.policy.policy_id, migrated.policy.rules.len());
            Ok(())
        }
    }
}
