// SPDX-License-Identifier: Apache-2.0

use std::io::Read;
use std::time::{Duration, Instant};

use thiserror::Error;
use trustmee_service::http::{HEADER_SOURCE, HEADER_TIMING};
use trustmee_service::{MetricsSnapshot, StageTimings};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("service unreachable at {url}: {detail}")]
    ServiceUnreachable { url: String, detail: String },
    #[error("{url}: HTTP {status}: {body}")]
    Http { url: String, status: u16, body: String },
    #[error("{0}")]
    Protocol(String),
    #[error("fixtures: {0}")]
    Fixtures(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One `/attest` exchange.
#[derive(Clone, Debug)]
pub struct AttestResponse {
    pub status: u16,
    pub body: Vec<u8>,
    /// Server-side stage timings from the timing header.
    pub timings: StageTimings,
    pub source: String,
    /// Round trip as seen by the client.
    pub elapsed: Duration,
}

/// Blocking client for the verifier HTTP API.
#[derive(Clone)]
pub struct Client {
    base: String,
    admin_token: Option<String>,
    agent: ureq::Agent,
}

impl Client {
    pub fn new(base: impl Into<String>, admin_token: Option<String>) -> Self {
        let base = base.into().trim_end_matches('/').to_owned();
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build();
        Client { base, admin_token, agent }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn call(&self, url: &str, r: Result<ureq::Response, ureq::Error>) -> Result<(u16, ureq::Response), BenchError> {
        match r {
            Ok(resp) => Ok((resp.status(), resp)),
            Err(ureq::Error::Status(code, resp)) => Ok((code, resp)),
            Err(ureq::Error::Transport(t)) => {
                Err(BenchError::ServiceUnreachable { url: url.to_owned(), detail: t.to_string() })
            }
        }
    }

    fn read(resp: ureq::Response) -> Result<Vec<u8>, BenchError> {
        let mut body = Vec::new();
        resp.into_reader().read_to_end(&mut body)?;
        Ok(body)
    }

    fn expect_ok(&self, url: &str, r: Result<ureq::Response, ureq::Error>) -> Result<Vec<u8>, BenchError> {
        let (status, resp) = self.call(url, r)?;
        let body = Self::read(resp)?;
        if status != 200 {
            return Err(BenchError::Http {
                url: url.to_owned(),
                status,
                body: String::from_utf8_lossy(&body).into_owned(),
            });
        }
        Ok(body)
    }

    /// Posts a request. Non-200 answers are returned, not turned into errors.
    pub fn attest(&self, body: &[u8], content_type: &str) -> Result<AttestResponse, BenchError> {
        let url = self.url("/attest");
        let started = Instant::now();
        let r = self.agent.post(&url).set("content-type", content_type).send_bytes(body);
        let (status, resp) = self.call(&url, r)?;
        let timings = resp.header(HEADER_TIMING).and_then(StageTimings::from_header).unwrap_or_default();
        let source = resp.header(HEADER_SOURCE).unwrap_or_default().to_owned();
        let body = Self::read(resp)?;
        Ok(AttestResponse { status, body, timings, source, elapsed: started.elapsed() })
    }

    fn admin(&self, path: &str) -> Result<Vec<u8>, BenchError> {
        let url = self.url(path);
        let mut req = self.agent.post(&url);
        if let Some(t) = &self.admin_token {
            req = req.set("authorization", &format!("Bearer {t}"));
        }
        self.expect_ok(&url, req.send_bytes(&[]))
    }

    /// Drops the service's component and compilation caches.
    pub fn clear_caches(&self) -> Result<(), BenchError> {
        self.admin("/admin/cache/clear").map(drop)
    }

    pub fn metrics(&self) -> Result<MetricsSnapshot, BenchError> {
        let url = self.url("/metrics");
        let body = self.expect_ok(&url, self.agent.get(&url).call())?;
        serde_json::from_slice(&body).map_err(|e| BenchError::Protocol(format!("metrics: {e}")))
    }

    pub fn verifier_key(&self) -> Result<[u8; 32], BenchError> {
        let url = self.url("/verifier-key");
        let body = self.expect_ok(&url, self.agent.get(&url).call())?;
        let text = String::from_utf8_lossy(&body);
        hex::decode(text.trim())
            .ok()
            .and_then(|k| k.try_into().ok())
            .ok_or_else(|| BenchError::Protocol(format!("bad verifier key {text:?}")))
    }
}
