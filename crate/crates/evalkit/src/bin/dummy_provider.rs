//! A scriptable prediction provider speaking `evalkit-provider/1`, for tests
//! and demos.
//!
//! `--mode lookup` answers each request with the reference of the dataset row
//! whose input columns equal the request inputs; `--mode constant` answers
//! with a fixed JSON value. The remaining flags inject faults.

use std::collections::HashMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::PathBuf;
use std::sync::mpsc;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use evalkit::evaluator::canonical_json;
use evalkit::evaluator::provider::PROVIDER_PROTOCOL;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Lookup,
    Constant,
}

#[derive(Debug, Parser)]
#[command(name = "dummy-provider", about = "Test prediction provider")]
struct Args {
    #[arg(long, value_enum, default_value = "lookup")]
    mode: Mode,
    /// Dataset used by lookup mode.
    #[arg(long, required_if_eq("mode", "lookup"))]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    reference_column: String,
    /// JSON value returned in constant mode.
    #[arg(long, default_value = "0")]
    value: String,
    /// Model name declared in the handshake.
    #[arg(long, default_value = "dummy")]
    model: String,
    /// Answer every request whose id is a multiple of N with a wrong prediction.
    #[arg(long)]
    wrong_every: Option<u64>,
    /// Exit with an error instead of answering once this many responses are out.
    #[arg(long)]
    crash_after: Option<u64>,
    /// Buffer requests and answer them in reverse once input pauses.
    #[arg(long)]
    shuffle: bool,
    /// Send every response twice.
    #[arg(long)]
    duplicate: bool,
    /// Delay before each response.
    #[arg(long, default_value_t = 0)]
    sleep_ms: u64,
    /// Declare an unsupported protocol.
    #[arg(long)]
    bad_handshake: bool,
    /// Answer this request id with an error record.
    #[arg(long)]
    error_on: Option<u64>,
}

struct Provider {
    args: Args,
    task: String,
    table: HashMap<String, Value>,
    constant: Value,
    sent: u64,
}

fn key(inputs: &Map<String, Value>) -> String {
    canonical_json(&Value::Object(inputs.clone()))
}

fn load_table(path: &PathBuf, reference: &str) -> Result<HashMap<String, Value>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut table = HashMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut row: Map<String, Value> = serde_json::from_str(line).map_err(|e| format!("bad dataset line: {e}"))?;
        let r = row.remove(reference).ok_or_else(|| format!("row lacks `{reference}`"))?;
        table.insert(key(&row), r.clone());
        // Requests carry only the task's input columns, so index every
        // single-column and two-column projection as well.
        let cols: Vec<String> = row.keys().cloned().collect();
        for (i, a) in cols.iter().enumerate() {
            let one: Map<String, Value> = [(a.clone(), row[a].clone())].into_iter().collect();
            table.entry(key(&one)).or_insert_with(|| r.clone());
            for b in &cols[i + 1..] {
                let mut two = one.clone();
                two.insert(b.clone(), row[b].clone());
                table.entry(key(&two)).or_insert_with(|| r.clone());
            }
        }
    }
    Ok(table)
}

fn wrong(v: &Value) -> Value {
    match v {
        Value::Number(n) => json!(n.as_i64().unwrap_or(0) + 1),
        Value::Array(a) => Value::Array(a.iter().map(wrong).collect()),
        _ => json!("__wrong__"),
    }
}

impl Provider {
    fn predict(&self, id: u64, inputs: &Value) -> Value {
        if self.args.error_on == Some(id) {
            return json!({"id": id, "error": "requested failure"});
        }
        let mut p = match self.args.mode {
            Mode::Constant => self.constant.clone(),
            Mode::Lookup => {
                let found = inputs.as_object().and_then(|o| self.table.get(&key(o)));
                match found {
                    Some(r) => self.answer_of(r),
                    None => return json!({"id": id, "error": "no dataset row matches the inputs"}),
                }
            }
        };
        if self.args.wrong_every.is_some_and(|n| n > 0 && id.is_multiple_of(n)) {
            p = wrong(&p);
        }
        json!({"id": id, "prediction": p})
    }

    /// Extractive QA references list acceptable answers; the first one is predicted.
    fn answer_of(&self, r: &Value) -> Value {
        if self.task != "question-answering-extractive" {
            return r.clone();
        }
        let list = r.get("text").unwrap_or(r);
        match list {
            Value::Array(a) => a.first().cloned().unwrap_or(json!("")),
            other => other.clone(),
        }
    }

    fn respond(&mut self, out: &mut impl Write, id: u64, inputs: &Value) {
        if self.args.crash_after.is_some_and(|n| self.sent >= n) {
            eprintln!("dummy-provider: simulated crash after {} responses", self.sent);
            std::process::exit(3);
        }
        if self.args.sleep_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.args.sleep_ms));
        }
        let line = self.predict(id, inputs);
        let copies = if self.args.duplicate { 2 } else { 1 };
        for _ in 0..copies {
            writeln!(out, "{line}").expect("stdout closed");
        }
        out.flush().expect("stdout closed");
        self.sent += 1;
    }
}

fn parse_request(line: &str) -> (u64, Value) {
    let v: Value = serde_json::from_str(line).unwrap_or_else(|e| fail(&format!("bad request: {e}")));
    let id = v["id"].as_u64().unwrap_or_else(|| fail("request lacks an id"));
    (id, v["inputs"].clone())
}

fn fail(msg: &str) -> ! {
    eprintln!("dummy-provider: {msg}");
    std::process::exit(2)
}

fn main() {
    let args = Args::parse();
    let table = match (&args.mode, &args.dataset) {
        (Mode::Lookup, Some(p)) => load_table(p, &args.reference_column).unwrap_or_else(|e| fail(&e)),
        _ => HashMap::new(),
    };
    let constant: Value = serde_json::from_str(&args.value).unwrap_or_else(|_| Value::String(args.value.clone()));

    let (tx, rx) = mpsc::channel::<String>();
    std::thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            match line {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => {
                    if tx.send(l).is_err() {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
    });

    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let hello: Value = rx
        .recv()
        .ok()
        .and_then(|l| serde_json::from_str(&l).ok())
        .unwrap_or_else(|| fail("missing handshake"));
    if hello["protocol"] != PROVIDER_PROTOCOL {
        fail(&format!("unsupported protocol {}", hello["protocol"]));
    }
    let protocol = if args.bad_handshake { "evalkit-provider/999" } else { PROVIDER_PROTOCOL };
    writeln!(out, "{}", json!({"protocol": protocol, "model": args.model})).unwrap();
    out.flush().unwrap();

    let task = hello["task"].as_str().unwrap_or_default().to_string();
    let shuffle = args.shuffle;
    let mut provider = Provider { args, task, table, constant, sent: 0 };
    if !shuffle {
        for line in rx {
            let (id, inputs) = parse_request(&line);
            provider.respond(&mut out, id, &inputs);
        }
        return;
    }
    let mut held: Vec<(u64, Value)> = Vec::new();
    loop {
        match rx.recv_timeout(Duration::from_millis(20)) {
            Ok(line) => held.push(parse_request(&line)),
            Err(e) => {
                while let Some((id, inputs)) = held.pop() {
                    provider.respond(&mut out, id, &inputs);
                }
                if e == mpsc::RecvTimeoutError::Disconnected {
                    return;
                }
            }
        }
    }
}
