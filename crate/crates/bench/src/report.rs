// SPDX-License-Identifier: Apache-2.0

//! Latency CSV and its summaries.
//!
//! CSV schema, version 1: header `mode,platform,run,stage,micros`, one row
//! per run and stage. `mode` is a series label (`cold`, `warm`, optionally
//! suffixed with `+fetched-collateral`, `+hash-ref` or `+registry`);
//! `platform` is `A` or `B`; `run` counts from 0; `stage` is one of
//! `verification`, `load_instantiate`, `other`, `total`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::client::BenchError;
use crate::latency::{Breakdown, Series};

pub const CSV_HEADER: [&str; 5] = ["mode", "platform", "run", "stage", "micros"];

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Row {
    pub mode: String,
    pub platform: String,
    pub run: usize,
    pub stage: String,
    pub micros: u64,
}

pub fn rows(series: &Series) -> Vec<Row> {
    let mut out = Vec::with_capacity(series.runs.len() * Breakdown::STAGES.len());
    for (run, b) in series.runs.iter().enumerate() {
        for stage in Breakdown::STAGES {
            out.push(Row {
                mode: series.label.clone(),
                platform: series.platform.to_string(),
                run,
                stage: stage.to_owned(),
                micros: b.get(stage).unwrap_or_default(),
            });
        }
    }
    out
}

pub fn write_csv(w: impl io::Write, rows: &[Row]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(w);
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(r: impl io::Read) -> Result<Vec<Row>, BenchError> {
    let mut r = csv::Reader::from_reader(r);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(BenchError::Protocol(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(BenchError::from)).collect()
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub stddev: f64,
}

pub fn stats(values: &[u64]) -> Stats {
    let n = values.len();
    if n == 0 {
        return Stats::default();
    }
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let stddev = if n < 2 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    Stats { n, mean, stddev }
}

/// Per `(mode, platform)`, per stage statistics, in CSV stage order.
pub type Summary = BTreeMap<(String, String), Vec<(String, Stats)>>;

pub fn summarize(rows: &[Row]) -> Summary {
    let mut grouped: BTreeMap<(String, String), BTreeMap<String, Vec<u64>>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry((r.mode.clone(), r.platform.clone()))
            .or_default()
            .entry(r.stage.clone())
            .or_default()
            .push(r.micros);
    }
    grouped
        .into_iter()
        .map(|(k, mut by_stage)| {
            let mut out = Vec::new();
            for stage in Breakdown::STAGES {
                if let Some(v) = by_stage.remove(stage) {
                    out.push((stage.to_owned(), stats(&v)));
                }
            }
            out.extend(by_stage.into_iter().map(|(s, v)| (s, stats(&v))));
            (k, out)
        })
        .collect()
}

fn ms(micros: f64) -> f64 {
    micros / 1000.0
}

pub fn render_text(summary: &Summary) -> String {
    let mut out = String::new();
    for ((mode, platform), stages) in summary {
        let n = stages.first().map(|(_, s)| s.n).unwrap_or(0);
        let _ = writeln!(out, "{mode} / platform {platform} ({n} runs)");
        for (stage, s) in stages {
            let _ = writeln!(out, "  {stage:<17} {:>10.3} ms  ± {:>8.3} ms", ms(s.mean), ms(s.stddev));
        }
    }
    out
}

/// One line per series with mean and standard deviation of each category
/// in milliseconds, ready for a stacked bar chart.
pub fn render_plot_data(summary: &Summary) -> String {
    let mut out = String::from("mode,platform,n");
    for stage in Breakdown::STAGES {
        let _ = write!(out, ",{stage}_mean_ms,{stage}_sd_ms");
    }
    out.push('\n');
    for ((mode, platform), stages) in summary {
        let find = |name: &str| stages.iter().find(|(s, _)| s == name).map(|(_, s)| *s).unwrap_or_default();
        let _ = write!(out, "{mode},{platform},{}", find("total").n);
        for stage in Breakdown::STAGES {
            let s = find(stage);
            let _ = write!(out, ",{:.3},{:.3}", ms(s.mean), ms(s.stddev));
        }
        out.push('\n');
    }
    out
}
