//! HTTP form of [`SubjectModel`].
//!
//! `POST /apply` takes a batch as a JSON array of batch-file records,
//! `POST /query` takes `{"prompt": ...}` and returns `{"text": ...}`, and
//! `POST /revert` undoes the applied batch. `/apply` and `/revert` carry an
//! `X-Run-Token` header and are idempotent per token.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

use super::subject::{SubjectError, SubjectModel};
use crate::chain::EditBatch;

pub const RUN_TOKEN_HEADER: &str = "X-Run-Token";

#[derive(Serialize, Deserialize)]
struct QueryBody {
    prompt: String,
}

#[derive(Serialize, Deserialize)]
struct QueryReply {
    text: String,
}

/// Client for a subject served over HTTP.
pub struct RemoteSubject {
    base: String,
    token: String,
    client: reqwest::blocking::Client,
}

impl RemoteSubject {
    pub fn new(base_url: &str, run_token: impl Into<String>, timeout: Duration) -> Result<Self, SubjectError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| SubjectError::Transport(e.to_string()))?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_string(),
            token: run_token.into(),
            client,
        })
    }

    fn post(&self, path: &str, body: String) -> Result<String, SubjectError> {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .header(RUN_TOKEN_HEADER, &self.token)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .send()
            .map_err(|e| SubjectError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| SubjectError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(SubjectError::Status {
                status: status.as_u16(),
                message: text,
            });
        }
        Ok(text)
    }
}

impl SubjectModel for RemoteSubject {
    fn apply_batch(&mut self, batch: &EditBatch) -> Result<(), SubjectError> {
        self.post("/apply", batch.to_json()).map(drop)
    }

    fn query(&mut self, prompt: &str) -> Result<String, SubjectError> {
        let body = serde_json::to_string(&QueryBody {
            prompt: prompt.to_string(),
        })
        .expect("query serializes");
        let text = self.post("/query", body)?;
        serde_json::from_str::<QueryReply>(&text)
            .map(|r| r.text)
            .map_err(|e| SubjectError::Protocol(format!("bad /query reply: {e}")))
    }

    fn revert(&mut self) -> Result<(), SubjectError> {
        self.post("/revert", String::new()).map(drop)
    }
}

struct Served<S> {
    subject: S,
    /// Token and body of the batch currently applied.
    applied: Option<(String, String)>,
}

/// Background HTTP server exposing a subject. Stops when dropped.
pub struct SubjectServer {
    server: Arc<Server>,
    addr: SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl SubjectServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for SubjectServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Serves `subject` on `addr` (use port 0 for an ephemeral port).
pub fn serve_subject<S: SubjectModel + Send + 'static>(subject: S, addr: &str) -> Result<SubjectServer, SubjectError> {
    let server = Server::http(addr).map_err(|e| SubjectError::Transport(e.to_string()))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| SubjectError::Transport("server has no IP address".to_string()))?;
    let server = Arc::new(server);
    let state = Arc::new(Mutex::new(Served { subject, applied: None }));
    let worker = {
        let server = Arc::clone(&server);
        thread::spawn(move || {
            for mut req in server.incoming_requests() {
                let (status, body) = handle(&state, &mut req);
                let resp = Response::from_string(body.to_string())
                    .with_status_code(status)
                    .with_header(Header::from_bytes("Content-Type", "application/json").expect("static header"));
                let _ = req.respond(resp);
            }
        })
    };
    Ok(SubjectServer {
        server,
        addr,
        worker: Some(worker),
    })
}

fn error(status: u16, message: impl Into<String>) -> (u16, Value) {
    (status, json!({ "error": message.into() }))
}

fn handle<S: SubjectModel>(state: &Mutex<Served<S>>, req: &mut Request) -> (u16, Value) {
    let path = req.url().split('?').next().unwrap_or("").to_string();
    if !matches!(path.as_str(), "/apply" | "/query" | "/revert") {
        return error(404, format!("no endpoint {path}"));
    }
    if *req.method() != Method::Post {
        return error(405, "use POST");
    }
    let token = req
        .headers()
        .iter()
        .find(|h| h.field.equiv(RUN_TOKEN_HEADER))
        .map(|h| h.value.as_str().to_string());
    let mut body = String::new();
    if req.as_reader().read_to_string(&mut body).is_err() {
        return error(400, "unreadable body");
    }
    let mut st = state.lock().expect("subject state poisoned");
    match path.as_str() {
        "/query" => {
            let Ok(q) = serde_json::from_str::<QueryBody>(&body) else {
                return error(400, "expected {\"prompt\": string}");
            };
            match st.subject.query(&q.prompt) {
                Ok(text) => (200, json!({ "text": text })),
                Err(e) => error(500, e.to_string()),
            }
        }
        "/apply" => {
            let Some(token) = token else {
                return error(400, format!("missing {RUN_TOKEN_HEADER} header"));
            };
            let batch = match EditBatch::from_json(&body) {
                Ok(b) => b,
                Err(e) => return error(400, e.to_string()),
            };
            match &st.applied {
                Some((t, b)) if *t == token && *b == body => (200, json!({ "status": "already_applied" })),
                Some(_) => error(409, "another batch is applied; revert it first"),
                None => match st.subject.apply_batch(&batch) {
                    Ok(()) => {
                        st.applied = Some((token, body));
                        (200, json!({ "status": "applied" }))
                    }
                    Err(e) => error(500, e.to_string()),
                },
            }
        }
        _ => {
            let Some(token) = token else {
                return error(400, format!("missing {RUN_TOKEN_HEADER} header"));
            };
            match &st.applied {
                None => (200, json!({ "status": "not_applied" })),
                Some((t, _)) if *t != token => error(409, "batch was applied under another run token"),
                Some(_) => match st.subject.revert() {
                    Ok(()) => {
                        st.applied = None;
                        (200, json!({ "status": "reverted" }))
                    }
                    Err(e) => error(500, e.to_string()),
                },
            }
        }
    }
}
