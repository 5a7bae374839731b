//! Recorded oracle traffic and a local server that plays it back.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tiny_http::{Header, Response, Server};

use super::OracleError;

/// Hex SHA-256 of a request body, exactly as sent.
pub fn request_hash(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub request_hash: String,
    pub response_text: String,
}

/// Reads a JSONL fixture file. Later lines win on duplicate hashes.
pub fn load_fixtures(path: &Path) -> Result<HashMap<String, String>, OracleError> {
    let file_err = |message: String| OracleError::File {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: FixtureRecord =
            serde_json::from_str(line).map_err(|e| file_err(format!("line {}: {e}", i + 1)))?;
        out.insert(rec.request_hash, rec.response_text);
    }
    Ok(out)
}

/// Serves recorded chat completions on an ephemeral loopback port.
/// Unknown requests get 404. The server stops when dropped.
pub struct ReplayServer {
    server: Arc<Server>,
    port: u16,
    hits: Arc<AtomicUsize>,
    worker: Option<JoinHandle<()>>,
}

impl ReplayServer {
    pub fn start(fixtures: HashMap<String, String>) -> Result<Self, OracleError> {
        let server = Server::http("127.0.0.1:0").map_err(|e| OracleError::Config(e.to_string()))?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| OracleError::Config("replay server has no IP address".to_string()))?;
        let server = Arc::new(server);
        let hits = Arc::new(AtomicUsize::new(0));
        let worker = {
            let server = Arc::clone(&server);
            let hits = Arc::clone(&hits);
            thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    hits.fetch_add(1, Ordering::SeqCst);
                    let mut body = String::new();
                    let resp = if req.as_reader().read_to_string(&mut body).is_err() {
                        Response::from_string("unreadable body").with_status_code(400)
                    } else {
                        match fixtures.get(&request_hash(&body)) {
                            Some(text) => completion(text),
                            None => Response::from_string("no recorded response").with_status_code(404),
                        }
                    };
                    let _ = req.respond(resp);
                }
            })
        };
        Ok(Self {
            server,
            port,
            hits,
            worker: Some(worker),
        })
    }

    pub fn endpoint(&self) -> String {
        format!("http://127.0.0.1:{}/v1/chat/completions", self.port)
    }

    /// Requests received so far, matched or not.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn completion(text: &str) -> Response<std::io::Cursor<Vec<u8>>> {
    let body = serde_json::json!({
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]
    });
    Response::from_string(body.to_string())
        .with_header(Header::from_bytes("Content-Type", "application/json").expect("static header"))
}

impl Drop for ReplayServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
