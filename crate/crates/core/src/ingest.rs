//! Paginated conversation fetching and JSONL export.
//!
//! The endpoint contract is Graph-API shaped:
//!
//! ```text
//! GET {base_url}/{page_id}/messages?since=S&until=U&limit=N&access_token=T
//! 200 {"data": [{"conversation_id", "sender_role", "text", "created_at"}, ...],
//!      "paging": {"next": "<absolute url>" | null}}
//! ```
//!
//! `created_at` is UTC seconds. The client follows `paging.next` verbatim
//! until it is null, absent or the page is empty.

pub mod mock;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid credentials: {0}")]
    InvalidCredentials(&'static str),
    #[error("invalid base url {url:?}: {source}")]
    InvalidUrl {
        url: String,
        #[source]
        source: url::ParseError,
    },
    #[error("invalid fetch window: since ({since}) must be before until ({until})")]
    InvalidWindow { since: i64, until: i64 },
    #[error("page size must be positive")]
    InvalidPageSize,
    #[error("credentials rejected by endpoint (HTTP {status})")]
    Credentials { status: u16 },
    #[error("endpoint returned HTTP {status} for page {cursor}")]
    Http { status: u16, cursor: String },
    #[error("giving up on page {cursor} after {attempts} attempts: {message}")]
    Retryable {
        cursor: String,
        attempts: u32,
        message: String,
    },
    #[error("malformed payload for page {cursor}: {source}")]
    Parse {
        cursor: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Jsonl {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone)]
pub struct PageCredentials {
    page_id: String,
    token: String,
    base_url: Url,
}

impl PageCredentials {
    pub fn new(page_id: &str, token: &str, base_url: &str) -> Result<Self, IngestError> {
        if page_id.is_empty() {
            return Err(IngestError::InvalidCredentials("page id is empty"));
        }
        if token.is_empty() {
            return Err(IngestError::InvalidCredentials("token is empty"));
        }
        let base_url = Url::parse(base_url).map_err(|source| IngestError::InvalidUrl {
            url: base_url.to_owned(),
            source,
        })?;
        Ok(PageCredentials {
            page_id: page_id.to_owned(),
            token: token.to_owned(),
            base_url,
        })
    }

    pub fn page_id(&self) -> &str {
        &self.page_id
    }

    pub fn base_url(&self) -> &Url {
        &self.base_url
    }
}

/// Half-open time window `[since, until)` in UTC seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchWindow {
    since: i64,
    until: i64,
}

impl FetchWindow {
    pub fn new(since: i64, until: i64) -> Result<Self, IngestError> {
        if since >= until {
            return Err(IngestError::InvalidWindow { since, until });
        }
        Ok(FetchWindow { since, until })
    }

    pub fn since(&self) -> i64 {
        self.since
    }

    pub fn until(&self) -> i64 {
        self.until
    }

    pub fn contains(&self, ts: i64) -> bool {
        self.since <= ts && ts < self.until
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SenderRole {
    Client,
    Admin,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RawMessage {
    pub conversation_id: String,
    pub sender_role: SenderRole,
    pub text: String,
    pub created_at: i64,
}

#[derive(Debug, Deserialize)]
struct Page {
    data: Vec<RawMessage>,
    #[serde(default)]
    paging: Option<Paging>,
}

#[derive(Debug, Deserialize)]
struct Paging {
    #[serde(default)]
    next: Option<String>,
}

/// Retry schedule for transport failures and 5xx responses.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

pub struct Fetcher {
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
}

impl Fetcher {
    pub fn new(retry: RetryPolicy) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .expect("http client configuration is static");
        Fetcher { client, retry }
    }

    /// Fetches every message in `window`, following pagination, sorted by
    /// `(conversation_id, created_at)`.
    pub fn fetch_conversations(
        &self,
        creds: &PageCredentials,
        window: FetchWindow,
        page_size: usize,
    ) -> Result<Vec<RawMessage>, IngestError> {
        if page_size == 0 {
            return Err(IngestError::InvalidPageSize);
        }
        let mut url = creds.base_url.clone();
        url.path_segments_mut()
            .map_err(|_| IngestError::InvalidUrl {
                url: creds.base_url.to_string(),
                source: url::ParseError::RelativeUrlWithCannotBeABaseBase,
            })?
            .pop_if_empty()
            .push(&creds.page_id)
            .push("messages");
        url.query_pairs_mut()
            .append_pair("since", &window.since.to_string())
            .append_pair("until", &window.until.to_string())
            .append_pair("limit", &page_size.to_string())
            .append_pair("access_token", &creds.token);

        let mut messages = Vec::new();
        let mut next = Some(url);
        while let Some(page_url) = next.take() {
            let cursor = cursor_name(&page_url);
            let body = self.get_with_retry(&page_url, &cursor)?;
            let page: Page = serde_json::from_slice(&body)
                .map_err(|source| IngestError::Parse { cursor, source })?;
            if page.data.is_empty() {
                break;
            }
            log::debug!("fetched {} messages", page.data.len());
            messages.extend(page.data.into_iter().filter(|m| window.contains(m.created_at)));
            next = match page.paging.and_then(|p| p.next) {
                Some(n) if !n.is_empty() => Some(Url::parse(&n).map_err(|source| {
                    IngestError::InvalidUrl { url: n.clone(), source }
                })?),
                _ => None,
            };
        }
        messages.sort_by(|a, b| {
            a.conversation_id
                .cmp(&b.conversation_id)
                .then(a.created_at.cmp(&b.created_at))
        });
        Ok(messages)
    }

    fn get_with_retry(&self, url: &Url, cursor: &str) -> Result<Vec<u8>, IngestError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let failure = match self.client.get(url.clone()).send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status == reqwest::StatusCode::UNAUTHORIZED
                        || status == reqwest::StatusCode::FORBIDDEN
                    {
                        return Err(IngestError::Credentials {
                            status: status.as_u16(),
                        });
                    }
                    if status.is_server_error() {
                        format!("HTTP {status}")
                    } else if !status.is_success() {
                        return Err(IngestError::Http {
                            status: status.as_u16(),
                            cursor: cursor.to_owned(),
                        });
                    } else {
                        match resp.bytes() {
                            Ok(body) => return Ok(body.to_vec()),
                            Err(e) => e.to_string(),
                        }
                    }
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.retry.max_attempts {
                return Err(IngestError::Retryable {
                    cursor: cursor.to_owned(),
                    attempts: attempt,
                    message: failure,
                });
            }
            let delay = self.retry.backoff(attempt);
            log::warn!("page {cursor}: {failure}; retrying in {delay:?}");
            std::thread::sleep(delay);
        }
    }
}

impl Default for Fetcher {
    fn default() -> Self {
        Fetcher::new(RetryPolicy::default())
    }
}

/// Convenience wrapper using the default retry policy.
pub fn fetch_conversations(
    creds: &PageCredentials,
    window: FetchWindow,
    page_size: usize,
) -> Result<Vec<RawMessage>, IngestError> {
    Fetcher::default().fetch_conversations(creds, window, page_size)
}

fn cursor_name(url: &Url) -> String {
    url.query_pairs()
        .find(|(k, _)| k == "after")
        .map(|(_, v)| v.into_owned())
        .unwrap_or_else(|| "first".to_owned())
}

/// Writes one JSON object per line and returns the number written.
pub fn export_jsonl(messages: &[RawMessage], path: &Path) -> Result<usize, IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for m in messages {
        let line = serde_json::to_string(m).expect("messages always serialize");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(messages.len())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RawMessage>, IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.to_owned(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut messages = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.is_empty() {
            continue;
        }
        messages.push(
            serde_json::from_str(&line).map_err(|source| IngestError::Jsonl {
                path: path.to_owned(),
                line: idx + 1,
                source,
            })?,
        );
    }
    Ok(messages)
}
