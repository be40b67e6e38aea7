//! In-process HTTP server speaking the paginated messages contract, used by
//! tests and demos.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::json;
use url::Url;

use super::{RawMessage, SenderRole};

/// Server-side behaviour knobs.
#[derive(Debug, Clone, Default)]
pub struct MockConfig {
    pub page_id: String,
    pub token: String,
    pub messages: Vec<RawMessage>,
    /// The first `n` requests answer 500.
    pub server_errors: usize,
    /// The page with this `after` cursor returns a broken body.
    pub malformed_cursor: Option<String>,
    /// Serve every message regardless of the requested window.
    pub ignore_window: bool,
}

pub struct MockServer {
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(config: MockConfig) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(AtomicUsize::new(0));
        let shutdown = Arc::new(AtomicBool::new(false));
        let handle = {
            let requests = Arc::clone(&requests);
            let shutdown = Arc::clone(&shutdown);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let n = requests.fetch_add(1, Ordering::SeqCst);
                    let _ = serve(stream, &config, addr, n);
                }
            })
        };
        Ok(MockServer {
            addr,
            requests,
            shutdown,
            handle: Some(handle),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Number of HTTP requests received so far.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

/// `conversations × per_conversation` messages, alternating sender roles,
/// one minute apart, starting at `start` seconds. Emitted in a scrambled
/// order so clients must sort.
pub fn fixture_messages(conversations: usize, per_conversation: usize, start: i64) -> Vec<RawMessage> {
    let mut out = Vec::with_capacity(conversations * per_conversation);
    for m in (0..per_conversation).rev() {
        for c in 0..conversations {
            out.push(RawMessage {
                conversation_id: format!("t_{c:03}"),
                sender_role: if m % 2 == 0 {
                    SenderRole::Client
                } else {
                    SenderRole::Admin
                },
                text: format!("tin nhắn {m} của hội thoại {c}"),
                created_at: start + (c * per_conversation + m) as i64 * 60,
            });
        }
    }
    out
}

fn serve(stream: TcpStream, config: &MockConfig, addr: SocketAddr, n: usize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 || header == "\r\n" || header == "\n" {
            break;
        }
    }
    let target = request_line.split_whitespace().nth(1).unwrap_or("/");
    let (status, body) = respond(config, addr, target, n);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

fn respond(config: &MockConfig, addr: SocketAddr, target: &str, n: usize) -> (&'static str, String) {
    if n < config.server_errors {
        return ("500 Internal Server Error", r#"{"error":"try later"}"#.into());
    }
    let Ok(url) = Url::parse(&format!("http://{addr}{target}")) else {
        return ("400 Bad Request", "{}".into());
    };
    if url.path() != format!("/v1/{}/messages", config.page_id) {
        return ("404 Not Found", r#"{"error":"unknown page"}"#.into());
    }
    let param = |name: &str| {
        url.query_pairs()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.into_owned())
    };
    if param("access_token").as_deref() != Some(config.token.as_str()) {
        return ("401 Unauthorized", r#"{"error":"invalid token"}"#.into());
    }
    let since = param("since").and_then(|v| v.parse::<i64>().ok()).unwrap_or(i64::MIN);
    let until = param("until").and_then(|v| v.parse::<i64>().ok()).unwrap_or(i64::MAX);
    let limit = param("limit").and_then(|v| v.parse::<usize>().ok()).unwrap_or(25).max(1);
    let after = param("after");
    if after.is_some() && after == config.malformed_cursor {
        return ("200 OK", r#"{"data": [ {"conversation_id": 3"#.into());
    }
    let offset = after.as_deref().and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);

    let visible: Vec<&RawMessage> = config
        .messages
        .iter()
        .filter(|m| config.ignore_window || (since <= m.created_at && m.created_at < until))
        .collect();
    let page: Vec<&RawMessage> = visible.iter().skip(offset).take(limit).copied().collect();
    let next = if offset + limit < visible.len() {
        let mut next = url.clone();
        let pairs: Vec<(String, String)> = url
            .query_pairs()
            .filter(|(k, _)| k != "after")
            .map(|(k, v)| (k.into_owned(), v.into_owned()))
            .collect();
        next.query_pairs_mut()
            .clear()
            .extend_pairs(pairs)
            .append_pair("after", &(offset + limit).to_string());
        json!(next.as_str())
    } else {
        serde_json::Value::Null
    };
    let body = json!({ "data": page, "paging": { "next": next } });
    ("200 OK", body.to_string())
}
