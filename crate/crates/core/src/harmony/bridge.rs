//! Client side of the external scorer protocol.
//!
//! The engine talks to an external model process with line-delimited JSON,
//! one object per line, strictly request/response:
//!
//! ```text
//! -> {"id":1,"context":[[3,0],[4,50],[5,60],[0,0],[1,50]],"allowed":[181,182,183]}
//! <- {"id":1,"logits":[0.1,-2.0,0.7]}
//! ```
//!
//! `context` is the token stream so far as `[kind, value]` pairs (see
//! [`TokenKind::code`](crate::tokenizer::TokenKind::code)); `allowed` lists the
//! NOTE token values that survived masking. The process returns one finite
//! logit per allowed value, or `{"id":..,"error":".."}`. Masking and sampling
//! stay in the engine.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{HarmonyError, NoteScorer, ScoringContext};
use crate::tokenizer::note_value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub id: u64,
    pub context: Vec<[u32; 2]>,
    pub allowed: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Sends requests over any line-oriented byte stream.
pub struct BridgeClient<R, W> {
    reader: R,
    writer: W,
    next_id: u64,
    line: String,
}

impl<R: BufRead, W: Write> BridgeClient<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        BridgeClient { reader, writer, next_id: 1, line: String::new() }
    }

    /// Sends one request and waits for its response.
    pub fn request(&mut self, context: Vec<[u32; 2]>, allowed: Vec<u32>) -> Result<Vec<f64>, HarmonyError> {
        let id = self.next_id;
        self.next_id += 1;
        let n = allowed.len();
        let req = BridgeRequest { id, context, allowed };
        let mut text = serde_json::to_string(&req).expect("request serializes");
        text.push('\n');
        self.writer
            .write_all(text.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| HarmonyError::Backend(format!("bridge write failed: {e}")))?;

        self.line.clear();
        let read = self
            .reader
            .read_line(&mut self.line)
            .map_err(|e| HarmonyError::Backend(format!("bridge read failed: {e}")))?;
        if read == 0 {
            return Err(HarmonyError::Backend("bridge closed the connection".into()));
        }
        let resp: BridgeResponse = serde_json::from_str(self.line.trim_end())
            .map_err(|e| HarmonyError::Backend(format!("malformed bridge response: {e}")))?;
        if resp.id != id {
            return Err(HarmonyError::Backend(format!("response id {} for request {id}", resp.id)));
        }
        if let Some(err) = resp.error {
            return Err(HarmonyError::Backend(format!("bridge error: {err}")));
        }
        let logits = resp.logits.ok_or_else(|| HarmonyError::Backend("response has no logits".into()))?;
        if logits.len() != n {
            return Err(HarmonyError::ScoreCount { backend: "external".into(), expected: n, got: logits.len() });
        }
        Ok(logits)
    }
}

type DynClient = BridgeClient<Box<dyn BufRead + Send>, Box<dyn Write + Send>>;

/// A [`NoteScorer`] backed by an external process or socket.
pub struct ExternalScorer {
    client: DynClient,
    child: Option<Child>,
}

impl ExternalScorer {
    /// Runs `cmd` through the shell and talks to it over stdin/stdout.
    pub fn spawn(cmd: &str) -> Result<Self, HarmonyError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| HarmonyError::Backend(format!("cannot start `{cmd}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(ExternalScorer {
            client: BridgeClient::new(Box::new(BufReader::new(stdout)), Box::new(stdin)),
            child: Some(child),
        })
    }

    /// Connects to a scorer listening on `addr` (`host:port`).
    pub fn connect(addr: &str) -> Result<Self, HarmonyError> {
        let stream =
            TcpStream::connect(addr).map_err(|e| HarmonyError::Backend(format!("cannot connect to {addr}: {e}")))?;
        let reader = stream.try_clone().map_err(|e| HarmonyError::Backend(e.to_string()))?;
        Ok(ExternalScorer {
            client: BridgeClient::new(Box::new(BufReader::new(reader)), Box::new(stream)),
            child: None,
        })
    }

    pub fn from_streams(reader: Box<dyn BufRead + Send>, writer: Box<dyn Write + Send>) -> Self {
        ExternalScorer { client: BridgeClient::new(reader, writer), child: None }
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // closing stdin ends a well-behaved server
            self.client.writer = Box::new(std::io::sink());
            if child.try_wait().ok().flatten().is_none() {
                let _ = child.kill();
            }
            let _ = child.wait();
        }
    }
}

impl NoteScorer for ExternalScorer {
    fn name(&self) -> &str {
        "external"
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn score(&mut self, ctx: &ScoringContext<'_>, candidates: &[u8]) -> Result<Vec<f64>, HarmonyError> {
        let context = ctx.tokens.iter().map(|t| t.pair()).collect();
        let allowed = candidates.iter().map(|&p| note_value(ctx.voice, p)).collect();
        self.client.request(context, allowed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn request_wire_format() {
        let req = BridgeRequest { id: 7, context: vec![[3, 0], [4, 50]], allowed: vec![181, 182] };
        assert_eq!(serde_json::to_string(&req).unwrap(), r#"{"id":7,"context":[[3,0],[4,50]],"allowed":[181,182]}"#);
    }

    #[test]
    fn client_checks_ids_and_lengths() {
        let replies = "{\"id\":1,\"logits\":[0.5,1.0]}\n{\"id\":5,\"logits\":[0.0]}\n";
        let mut sent = Vec::new();
        {
            let mut c = BridgeClient::new(Cursor::new(replies), &mut sent);
            assert_eq!(c.request(vec![], vec![1, 2]).unwrap(), vec![0.5, 1.0]);
            assert!(c.request(vec![], vec![1]).is_err());
        }
        let sent = String::from_utf8(sent).unwrap();
        assert_eq!(sent.lines().count(), 2);
        assert!(sent.starts_with("{\"id\":1,"));
    }

    #[test]
    fn client_surfaces_bridge_errors() {
        let mut c = BridgeClient::new(Cursor::new("{\"id\":1,\"error\":\"bad request\"}\n"), Vec::new());
        let err = c.request(vec![], vec![1]).unwrap_err();
        assert!(err.to_string().contains("bad request"));
        let mut short = BridgeClient::new(Cursor::new("{\"id\":1,\"logits\":[1.0]}\n"), Vec::new());
        assert!(matches!(short.request(vec![], vec![1, 2]), Err(HarmonyError::ScoreCount { .. })));
        let mut closed = BridgeClient::new(Cursor::new(""), Vec::new());
        assert!(closed.request(vec![], vec![1]).is_err());
    }
}
