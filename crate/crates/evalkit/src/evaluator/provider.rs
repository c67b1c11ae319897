//! Prediction providers and the `evalkit-provider/1` wire protocol.
//!
//! Records are single-line JSON objects terminated by `\n`, exchanged over
//! the provider's stdin (host to provider) and stdout (provider to host).
//! Stderr is free-form and captured for crash reports.
//!
//! ```text
//! host     {"protocol":"evalkit-provider/1","task":"text-classification"}
//! provider {"protocol":"evalkit-provider/1","model":"my-model"}
//! host     {"id":0,"inputs":{"text":"great film"}}
//! host     {"id":1,"inputs":{"text":"dull"}}
//! provider {"id":1,"prediction":"neg"}
//! provider {"id":0,"prediction":"pos"}
//! host     <closes stdin; the provider should exit>
//! ```
//!
//! A provider may answer a request with `{"id":N,"error":"message"}`.
//! Responses may arrive in any order; each request id must be answered
//! exactly once.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const PROVIDER_PROTOCOL: &str = "evalkit-provider/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub inputs: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Prediction(Value),
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub id: u64,
    pub outcome: Outcome,
}

impl Response {
    /// Parses one provider output line.
    pub fn parse(line: &str) -> Result<Response> {
        let bad = |why: &str| Error::ProtocolViolation(format!("{why}: `{}`", line.trim()));
        let v: Value = serde_json::from_str(line).map_err(|_| bad("response is not JSON"))?;
        let obj = v.as_object().ok_or_else(|| bad("response is not an object"))?;
        let id = obj.get("id").and_then(Value::as_u64).ok_or_else(|| bad("response lacks an integer `id`"))?;
        let outcome = match (obj.get("prediction"), obj.get("error")) {
            (Some(p), None) => Outcome::Prediction(p.clone()),
            (None, Some(e)) => Outcome::Error(e.as_str().map_or_else(|| e.to_string(), str::to_string)),
            _ => return Err(bad("response needs exactly one of `prediction` or `error`")),
        };
        Ok(Response { id, outcome })
    }
}

/// Identity of a provider as recorded in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRef {
    /// Command line; empty for in-process providers.
    pub command: Vec<String>,
    pub model: String,
}

/// A source of predictions.
///
/// The evaluator calls `start`, then interleaves `send` and `recv`, then `finish`.
pub trait PredictionProvider: Send {
    /// Performs the handshake and returns the declared model name.
    fn start(&mut self, task: &str) -> Result<String>;

    fn send(&mut self, requests: &[Request]) -> Result<()>;

    /// Next response, waiting at most `timeout`.
    fn recv(&mut self, timeout: Duration) -> Result<Response>;

    fn finish(&mut self) -> Result<()>;

    fn command(&self) -> Vec<String> {
        Vec::new()
    }
}

type PredictFn = Box<dyn FnMut(&Value) -> std::result::Result<Value, String> + Send>;

/// Calls a function per request. `reversed` answers each `send` in reverse
/// order, to exercise out-of-order handling.
pub struct InProcessProvider {
    model: String,
    predict: PredictFn,
    reversed: bool,
    pending: VecDeque<Response>,
}

impl InProcessProvider {
    pub fn new(
        model: &str,
        predict: impl FnMut(&Value) -> std::result::Result<Value, String> + Send + 'static,
    ) -> Self {
        InProcessProvider { model: model.to_string(), predict: Box::new(predict), reversed: false, pending: VecDeque::new() }
    }

    pub fn reversed(mut self) -> Self {
        self.reversed = true;
        self
    }
}

impl PredictionProvider for InProcessProvider {
    fn start(&mut self, _task: &str) -> Result<String> {
        Ok(self.model.clone())
    }

    fn send(&mut self, requests: &[Request]) -> Result<()> {
        let mut out: Vec<Response> = requests
            .iter()
            .map(|r| Response {
                id: r.id,
                outcome: match (self.predict)(&r.inputs) {
                    Ok(v) => Outcome::Prediction(v),
                    Err(e) => Outcome::Error(e),
                },
            })
            .collect();
        if self.reversed {
            out.reverse();
        }
        self.pending.extend(out);
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Response> {
        self.pending.pop_front().ok_or(Error::ResponseTimeout { timeout_ms: timeout.as_millis(), pending: 0 })
    }

    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

enum Line {
    Text(String),
    Eof,
}

/// A provider process speaking the line protocol.
pub struct SubprocessProvider {
    command: Vec<String>,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<Line>,
    stderr: Arc<Mutex<String>>,
    stderr_thread: Option<JoinHandle<()>>,
    handshake_timeout: Duration,
}

impl SubprocessProvider {
    pub fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::ProtocolViolation("empty provider command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::ProviderCrash { stderr: format!("cannot start `{program}`: {e}") })?;

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) if l.trim().is_empty() => continue,
                    Ok(l) => {
                        if tx.send(Line::Text(l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(Line::Eof);
        });

        let stderr = Arc::new(Mutex::new(String::new()));
        let mut err_pipe = child.stderr.take().expect("piped stderr");
        let sink = Arc::clone(&stderr);
        let stderr_thread = std::thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = err_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                sink.lock().unwrap().push_str(&String::from_utf8_lossy(&buf[..n]));
            }
        });

        Ok(SubprocessProvider {
            command: command.to_vec(),
            stdin: child.stdin.take(),
            child,
            lines: rx,
            stderr,
            stderr_thread: Some(stderr_thread),
            handshake_timeout: Duration::from_secs(30),
        })
    }

    pub fn with_handshake_timeout(mut self, t: Duration) -> Self {
        self.handshake_timeout = t;
        self
    }

    /// Waits briefly for the process to exit and returns a crash error with its stderr.
    fn crashed(&mut self) -> Error {
        self.stdin = None;
        for _ in 0..100 {
            if let Ok(Some(_)) = self.child.try_wait() {
                break;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
        if let Some(t) = self.stderr_thread.take() {
            let _ = t.join();
        }
        Error::ProviderCrash { stderr: self.stderr.lock().unwrap().trim_end().to_string() }
    }

    fn write_line(&mut self, v: &Value) -> Result<()> {
        let ok = match self.stdin.as_mut() {
            Some(stdin) => writeln!(stdin, "{v}").is_ok(),
            None => false,
        };
        if ok {
            Ok(())
        } else {
            Err(self.crashed())
        }
    }

    fn next_line(&mut self, timeout: Duration, pending: usize) -> Result<String> {
        match self.lines.recv_timeout(timeout) {
            Ok(Line::Text(l)) => Ok(l),
            Ok(Line::Eof) | Err(RecvTimeoutError::Disconnected) => Err(self.crashed()),
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                Err(Error::ResponseTimeout { timeout_ms: timeout.as_millis(), pending })
            }
        }
    }
}

impl PredictionProvider for SubprocessProvider {
    fn start(&mut self, task: &str) -> Result<String> {
        self.write_line(&json!({ "protocol": PROVIDER_PROTOCOL, "task": task }))?;
        self.stdin.as_mut().map(|s| s.flush());
        let line = self.next_line(self.handshake_timeout, 0)?;
        let v: Value = serde_json::from_str(&line)
            .map_err(|_| Error::ProtocolViolation(format!("handshake reply is not JSON: `{line}`")))?;
        let proto = v.get("protocol").and_then(Value::as_str);
        if proto != Some(PROVIDER_PROTOCOL) {
            return Err(Error::ProtocolViolation(format!(
                "provider speaks {}, expected {PROVIDER_PROTOCOL}",
                proto.unwrap_or("no declared protocol")
            )));
        }
        let model = v
            .get("model")
            .and_then(Value::as_str)
            .filter(|m| !m.is_empty())
            .ok_or_else(|| Error::ProtocolViolation("handshake reply lacks a `model` name".into()))?;
        Ok(model.to_string())
    }

    fn send(&mut self, requests: &[Request]) -> Result<()> {
        for r in requests {
            self.write_line(&json!({ "id": r.id, "inputs": r.inputs }))?;
        }
        let flushed = self.stdin.as_mut().is_some_and(|s| s.flush().is_ok());
        if flushed {
            Ok(())
        } else {
            Err(self.crashed())
        }
    }

    fn recv(&mut self, timeout: Duration) -> Result<Response> {
        let line = self.next_line(timeout, 1)?;
        Response::parse(&line)
    }

    fn finish(&mut self) -> Result<()> {
        self.stdin = None;
        for _ in 0..250 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return Ok(());
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
        Ok(())
    }

    fn command(&self) -> Vec<String> {
        self.command.clone()
    }
}

impl Drop for SubprocessProvider {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn parse_responses() {
        assert_eq!(
            Response::parse(r#"{"id":3,"prediction":[1,2]}"#).unwrap(),
            Response { id: 3, outcome: Outcome::Prediction(json!([1, 2])) }
        );
        assert_eq!(Response::parse(r#"{"id":0,"error":"oom"}"#).unwrap().outcome, Outcome::Error("oom".into()));
        for bad in ["nope", "[1]", r#"{"prediction":1}"#, r#"{"id":-1,"prediction":1}"#, r#"{"id":1}"#, r#"{"id":1,"prediction":1,"error":"x"}"#] {
            assert!(matches!(Response::parse(bad), Err(Error::ProtocolViolation(_))), "{bad}");
        }
    }

    #[test]
    fn crash_carries_stderr() {
        let mut p = SubprocessProvider::spawn(&sh("read line; echo 'model weights missing' >&2; exit 3")).unwrap();
        match p.start("text-classification") {
            Err(Error::ProviderCrash { stderr }) => assert_eq!(stderr, "model weights missing"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_protocol_is_a_violation() {
        let mut p = SubprocessProvider::spawn(&sh(r#"read line; echo '{"protocol":"other/9","model":"m"}'"#)).unwrap();
        assert!(matches!(p.start("t"), Err(Error::ProtocolViolation(_))));
    }

    #[test]
    fn silence_times_out() {
        let mut p = SubprocessProvider::spawn(&sh(r#"read line; echo '{"protocol":"evalkit-provider/1","model":"m"}'; sleep 5"#)).unwrap();
        assert_eq!(p.start("t").unwrap(), "m");
        p.send(&[Request { id: 0, inputs: json!({}) }]).unwrap();
        assert!(matches!(p.recv(Duration::from_millis(100)), Err(Error::ResponseTimeout { .. })));
    }

    #[test]
    fn missing_program() {
        assert!(matches!(
            SubprocessProvider::spawn(&["/nonexistent/provider".to_string()]),
            Err(Error::ProviderCrash { .. })
        ));
    }
}
