//! Helpers shared by the integration tests: fixture files, the CLI binaries
//! and a minimal HTTP/1.1 client.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

pub const EVALKIT: &str = env!("CARGO_BIN_EXE_evalkit");
pub const DUMMY: &str = env!("CARGO_BIN_EXE_dummy-provider");

pub fn write_jsonl(path: &Path, rows: &[Value]) {
    std::fs::write(path, rows.iter().map(|r| format!("{r}\n")).collect::<String>()).unwrap();
}

/// Runs `evalkit` in `cwd` with a clean environment for registry and service settings.
pub fn evalkit(cwd: &Path, args: &[&str]) -> Output {
    Command::new(EVALKIT)
        .args(args)
        .current_dir(cwd)
        .env_remove("EVALKIT_REGISTRY_ROOTS")
        .env_remove("EVALKIT_SERVICE_DIR")
        .env_remove("EVALKIT_OWNER_TOKEN")
        .output()
        .unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Polls `f` until it returns Some or `limit` passes.
pub fn wait_for<T>(limit: Duration, mut f: impl FnMut() -> Option<T>) -> T {
    let start = Instant::now();
    loop {
        if let Some(v) = f() {
            return v;
        }
        assert!(start.elapsed() < limit, "condition not reached within {limit:?}");
        std::thread::sleep(Duration::from_millis(25));
    }
}

pub struct HttpResponse {
    pub status: u16,
    pub body: Value,
}

/// One request over a fresh connection; the body is JSON.
pub fn http(addr: &str, method: &str, path: &str, body: Option<&Value>, token: Option<&str>) -> HttpResponse {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    let payload = body.map(|b| b.to_string()).unwrap_or_default();
    let mut req = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n",
        payload.len()
    );
    if let Some(t) = token {
        req.push_str(&format!("Authorization: Bearer {t}\r\n"));
    }
    req.push_str("\r\n");
    req.push_str(&payload);
    s.write_all(req.as_bytes()).unwrap();

    let mut r = BufReader::new(s);
    let mut status_line = String::new();
    r.read_line(&mut status_line).unwrap();
    let status: u16 = status_line.split_whitespace().nth(1).unwrap().parse().unwrap();
    let mut length = None;
    let mut chunked = false;
    loop {
        let mut h = String::new();
        r.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (name, value) = h.split_once(':').unwrap();
        match name.to_ascii_lowercase().as_str() {
            "content-length" => length = Some(value.trim().parse::<usize>().unwrap()),
            "transfer-encoding" => chunked = value.trim().eq_ignore_ascii_case("chunked"),
            _ => {}
        }
    }
    let mut bytes = Vec::new();
    if chunked {
        loop {
            let mut size = String::new();
            r.read_line(&mut size).unwrap();
            let n = usize::from_str_radix(size.trim(), 16).unwrap();
            let mut chunk = vec![0; n + 2];
            r.read_exact(&mut chunk).unwrap();
            if n == 0 {
                break;
            }
            bytes.extend_from_slice(&chunk[..n]);
        }
    } else if let Some(n) = length {
        bytes.resize(n, 0);
        r.read_exact(&mut bytes).unwrap();
    } else {
        r.read_to_end(&mut bytes).unwrap();
    }
    let body = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    HttpResponse { status, body }
}

/// `evalkit serve` on an ephemeral port; killed on drop.
pub struct Server {
    pub child: Child,
    pub addr: String,
    pub dir: PathBuf,
}

impl Server {
    pub fn start(dir: &Path, extra: &[&str]) -> Server {
        let mut child = Command::new(EVALKIT)
            .args(["serve", "--addr", "127.0.0.1:0", "--dir"])
            .arg(dir)
            .args(extra)
            .env_remove("EVALKIT_REGISTRY_ROOTS")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on http://").unwrap_or_else(|| panic!("{line}")).to_string();
        Server { child, addr, dir: dir.to_path_buf() }
    }

    pub fn get(&self, path: &str) -> HttpResponse {
        http(&self.addr, "GET", path, None, None)
    }

    pub fn post(&self, path: &str, body: &Value, token: Option<&str>) -> HttpResponse {
        http(&self.addr, "POST", path, Some(body), token)
    }

    /// Polls a job until it reaches a terminal state.
    pub fn wait_job(&self, id: &str) -> Value {
        wait_for(Duration::from_secs(60), || {
            let r = self.get(&format!("/jobs/{id}"));
            assert_eq!(r.status, 200, "{}", r.body);
            matches!(r.body["state"].as_str(), Some("succeeded" | "failed")).then_some(r.body)
        })
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Percent-encodes a query value.
pub fn enc(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

/// A labelled sentiment dataset with `n` distinct rows.
pub fn sentiment(path: &Path, n: usize) {
    let labels = ["neg", "pos"];
    let rows: Vec<Value> =
        (0..n).map(|i| serde_json::json!({"text": format!("review {i}"), "label": labels[i % 2]})).collect();
    write_jsonl(path, &rows);
}
