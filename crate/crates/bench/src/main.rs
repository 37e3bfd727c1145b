// SPDX-License-Identifier: Apache-2.0

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use mocktee_kit::{FixtureServer, Platform};
use trustmee_bench::latency::{self, LatencyConfig, Mode};
use trustmee_bench::report::{self, Row};
use trustmee_bench::size::{self, SizeOptions};
use trustmee_bench::testbed::{write_fixture_dir, ComponentChoice};
use trustmee_bench::{Client, FixtureSet, Testbed, DEFAULT_NETWORK_DELAY_MS};

/// Latency and request-size benchmarks for the TrustMee verifier.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl Toggle {
    fn on(self) -> bool {
        matches!(self, Toggle::On)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cold,
    Warm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ComponentArg {
    /// Hash reference with the component stapled.
    Stapled,
    /// Registry reference served by the bench's fixture server.
    Registry,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Csv,
    PlotData,
}

#[derive(Subcommand)]
enum Command {
    /// Write fixtures and a service configuration to run the verifier against.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8400")]
        listen: String,
        /// Deterministic key generation.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Measure end-to-end latency.
    Latency {
        #[arg(long)]
        platform: Platform,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "on")]
        staple_collateral: Toggle,
        #[arg(long, value_enum, default_value = "stapled")]
        component: ComponentArg,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        concurrency: usize,
        /// A running service. Without it an in-process service is started.
        #[arg(long, requires = "fixtures")]
        url: Option<String>,
        /// Fixture directory the running service was configured from.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Defaults to the token in the fixture directory's trustmee.toml.
        #[arg(long)]
        admin_token: Option<String>,
        /// Delay added to every collateral and registry response.
        #[arg(long, default_value_t = DEFAULT_NETWORK_DELAY_MS)]
        delay_ms: u64,
        /// Append rows to this CSV file (header written when new).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Account request sizes per encoding and component variant.
    Size {
        #[arg(long, value_enum, default_value = "on")]
        staple_collateral: Toggle,
        #[arg(long, value_enum, default_value = "on")]
        staple_component: Toggle,
        /// Fixture directory; a temporary one is generated otherwise.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Summarise latency CSV files.
    Report {
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        /// Output file; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn append_csv(path: &PathBuf, rows: &[Row]) -> anyhow::Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let mut buf = Vec::new();
    report::write_csv(&mut buf, rows)?;
    let text = String::from_utf8(buf)?;
    let body = if fresh { text.as_str() } else { text.split_once('\n').map(|(_, rest)| rest).unwrap_or("") };
    File::options().create(true).append(true).open(path)?.write_all(body.as_bytes())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn latency_cmd(
    platform: Platform,
    mode: ModeArg,
    staple_collateral: Toggle,
    component: ComponentArg,
    runs: usize,
    concurrency: usize,
    url: Option<String>,
    fixtures: Option<PathBuf>,
    admin_token: Option<String>,
    delay_ms: u64,
    csv: Option<PathBuf>,
) -> anyhow::Result<()> {
    let delay = Duration::from_millis(delay_ms);
    let cfg = LatencyConfig {
        platform,
        mode: match mode {
            ModeArg::Cold => Mode::Cold,
            ModeArg::Warm => Mode::Warm,
        },
        staple_collateral: staple_collateral.on(),
        component: match component {
            ComponentArg::Stapled => ComponentChoice::Stapled,
            ComponentArg::Registry => ComponentChoice::Registry,
        },
        runs,
        concurrency,
    };
    let series = match url {
        Some(url) => {
            let dir = fixtures.context("--url needs --fixtures")?;
            let set = FixtureSet::load(&dir)?;
            let client = Client::new(url, admin_token.or_else(|| set.admin_token.clone()));
            let server = FixtureServer::start(delay)?;
            set.publish(&server);
            latency::run(&client, set.get(platform), &server, &cfg)?
        }
        None => {
            let bed = Testbed::start(rand::random(), delay)?;
            latency::run(&bed.client(), bed.fixtures.get(platform), &bed.server, &cfg)?
        }
    };
    let rows = report::rows(&series);
    print!("{}", report::render_text(&report::summarize(&rows)));
    println!("  compilations during runs: {}", series.compilations);
    let sources: Vec<String> = series.sources.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("  component sources: {}", sources.join(", "));
    let rt = report::stats(&series.round_trips);
    println!("  client round trip {:>10.3} ms  ± {:>8.3} ms", rt.mean / 1000.0, rt.stddev / 1000.0);
    if let Some(path) = csv {
        append_csv(&path, &rows)?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Fixtures { out, listen, seed } => {
            std::fs::create_dir_all(&out)?;
            let keys = write_fixture_dir(&out, seed, &listen)?;
            println!("fixtures written to {}", out.display());
            println!("admin token: {}", keys.admin_token);
            println!("start the verifier with: trustmee-verifier --config {}", out.join("trustmee.toml").display());
            Ok(())
        }
        Command::Latency {
            platform,
            mode,
            staple_collateral,
            component,
            runs,
            concurrency,
            url,
            fixtures,
            admin_token,
            delay_ms,
            csv,
        } => {
            if runs == 0 {
                bail!("--runs must be at least 1");
            }
            latency_cmd(
                platform,
                mode,
                staple_collateral,
                component,
                runs,
                concurrency,
                url,
                fixtures,
                admin_token,
                delay_ms,
                csv,
            )
        }
        Command::Size { staple_collateral, staple_component, fixtures } => {
            let tmp;
            let dir = match fixtures {
                Some(d) => d,
                None => {
                    tmp = tempfile::tempdir()?;
                    write_fixture_dir(tmp.path(), Some(0), "127.0.0.1:8400")?;
                    tmp.path().to_owned()
                }
            };
            let set = FixtureSet::load(&dir)?;
            let opts = SizeOptions { staple_collateral: staple_collateral.on(), staple_component: staple_component.on() };
            let mut rows = Vec::new();
            for p in Platform::ALL {
                rows.extend(size::measure(set.get(p), opts, "127.0.0.1:8401")?);
            }
            print!("{}", size::render_table(&rows, |p| set.get(p).component.len()));
            Ok(())
        }
        Command::Report { format, inputs, out } => {
            let mut rows = Vec::new();
            for path in &inputs {
                let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                rows.extend(report::read_csv(f)?);
            }
            let text = match format {
                ReportFormat::Text => report::render_text(&report::summarize(&rows)),
                ReportFormat::PlotData => report::render_plot_data(&report::summarize(&rows)),
                ReportFormat::Csv => {
                    rows.sort();
                    let mut buf = Vec::new();
                    report::write_csv(&mut buf, &rows)?;
                    String::from_utf8(buf)?
                }
            };
            match out {
                Some(p) => std::fs::write(&p, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}
