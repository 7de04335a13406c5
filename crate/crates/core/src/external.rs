//! The `dare-gen/1` generator protocol.
//!
//! Newline-delimited JSON over a child process's stdin/stdout, one request
//! then one response, strictly in order:
//!
//! ```text
//! → {"op":"hello"}                                   ← {"ok":true,"protocol":"dare-gen/1"}
//! → {"op":"fit_base","corpus":[[tokens]...]}          ← {"ok":true}
//! → {"op":"adapt","class":"<label>","corpus":[...]}   ← {"ok":true,"adapter_id":"<id>"}
//! → {"op":"sample","adapter_id":"<id>","n":K,"temperature":T,"top_k":k,"max_tokens":M,"seed":S}
//!                                                     ← {"ok":true,"samples":[[tokens]...]}
//! → {"op":"loglik","adapter_id":"<id>","corpus":[...]} ← {"ok":true,"value":float}
//! any failure                                         ← {"ok":false,"error":"<message>"}
//! ```
//!
//! [`ExternalGenerator`] is the client used by the pipeline; [`serve`] answers
//! the same protocol with the built-in n-gram backend.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::generator::{
    adapt, log_likelihood, AdaptedLM, GeneratorBackend, GeneratorError, GeneratorParams, NGramLM, SequenceSource,
    Vocab,
};

pub const PROTOCOL: &str = "dare-gen/1";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

/// Client side of a generator child process.
pub struct ExternalGenerator {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<Option<String>>,
    timeout: Duration,
    hello: Value,
}

impl std::fmt::Debug for ExternalGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalGenerator").field("command", &self.command).finish()
    }
}

fn ext(msg: impl Into<String>) -> GeneratorError {
    GeneratorError::External(msg.into())
}

impl ExternalGenerator {
    /// Launches `program args…` and performs the handshake.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self, GeneratorError> {
        let command = std::iter::once(program.to_owned()).chain(args.iter().cloned()).collect::<Vec<_>>().join(" ");
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ext(format!("cannot launch {command:?}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().ok_or_else(|| ext("child has no stdout"))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(Some(l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(None);
        });
        let mut session = Self { command, child, stdin, lines: rx, timeout, hello: Value::Null };
        let hello = session.request(json!({"op": "hello"}))?;
        if hello.get("protocol").and_then(Value::as_str) != Some(PROTOCOL) {
            return Err(ext(format!("handshake: unexpected response {hello}")));
        }
        session.hello = hello;
        Ok(session)
    }

    /// Splits a shell-like command line on whitespace and spawns it.
    pub fn spawn_command_line(command_line: &str, timeout: Duration) -> Result<Self, GeneratorError> {
        let mut parts = command_line.split_whitespace().map(str::to_owned);
        let program = parts.next().ok_or_else(|| ext("empty generator command"))?;
        Self::spawn(&program, &parts.collect::<Vec<_>>(), timeout)
    }

    /// The handshake response, including any adapter metadata.
    pub fn hello(&self) -> &Value {
        &self.hello
    }

    /// Sends one request and waits for its response.
    pub fn request(&mut self, request: Value) -> Result<Value, GeneratorError> {
        let op = request.get("op").and_then(Value::as_str).unwrap_or("?").to_owned();
        let stdin = self.stdin.as_mut().ok_or_else(|| ext("session is closed"))?;
        let line = serde_json::to_string(&request)?;
        writeln!(stdin, "{line}")
            .and_then(|_| stdin.flush())
            .map_err(|e| ext(format!("{op} request: generator process is gone ({e})")))?;
        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Some(reply)) => reply,
            Ok(None) | Err(RecvTimeoutError::Disconnected) => {
                return Err(ext(format!("{op} request: generator process exited before responding")))
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(ext(format!("{op} request: no response within {:?}", self.timeout)))
            }
        };
        let value: Value =
            serde_json::from_str(&reply).map_err(|e| ext(format!("{op} request: malformed response {reply:?} ({e})")))?;
        match value.get("ok").and_then(Value::as_bool) {
            Some(true) => Ok(value),
            Some(false) => {
                let msg = value.get("error").and_then(Value::as_str).unwrap_or("unspecified error");
                Err(ext(format!("{op} request failed: {msg}")))
            }
            None => Err(ext(format!("{op} request: response without \"ok\": {reply}"))),
        }
    }

    pub fn fit_base(&mut self, corpus: &[Vec<String>]) -> Result<(), GeneratorError> {
        self.request(json!({"op": "fit_base", "corpus": corpus})).map(|_| ())
    }

    pub fn adapt_class(&mut self, label: &str, corpus: &[Vec<String>]) -> Result<String, GeneratorError> {
        let v = self.request(json!({"op": "adapt", "class": label, "corpus": corpus}))?;
        v.get("adapter_id")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ext(format!("adapt request: response without adapter_id: {v}")))
    }

    pub fn sample(
        &mut self,
        adapter_id: &str,
        n: usize,
        params: &GeneratorParams,
        seed: u64,
    ) -> Result<Vec<Vec<String>>, GeneratorError> {
        let v = self.request(json!({
            "op": "sample",
            "adapter_id": adapter_id,
            "n": n,
            "temperature": params.temperature,
            "top_k": params.top_k,
            "max_tokens": params.max_tokens,
            "seed": seed,
        }))?;
        let samples = v.get("samples").cloned().ok_or_else(|| ext(format!("sample request: response without samples: {v}")))?;
        serde_json::from_value::<Vec<Vec<String>>>(samples)
            .map_err(|e| ext(format!("sample request: samples are not token arrays: {v} ({e})")))
    }

    pub fn loglik(&mut self, adapter_id: &str, corpus: &[Vec<String>]) -> Result<f64, GeneratorError> {
        let v = self.request(json!({"op": "loglik", "adapter_id": adapter_id, "corpus": corpus}))?;
        v.get("value").and_then(Value::as_f64).ok_or_else(|| ext(format!("loglik request: response without value: {v}")))
    }
}

impl Drop for ExternalGenerator {
    fn drop(&mut self) {
        // Closing stdin ends a well-behaved server's request loop.
        self.stdin.take();
        for _ in 0..20 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Sequence source bound to one adapter of an external session.
pub struct ExternalAdapter<'a> {
    session: &'a mut ExternalGenerator,
    adapter_id: String,
}

impl ExternalAdapter<'_> {
    pub fn adapter_id(&self) -> &str {
        &self.adapter_id
    }
}

impl SequenceSource for ExternalAdapter<'_> {
    fn draw(&mut self, n: usize, params: &GeneratorParams, seed: u64) -> Result<Vec<Vec<String>>, GeneratorError> {
        self.session.sample(&self.adapter_id, n, params, seed)
    }
}

impl GeneratorBackend for ExternalGenerator {
    fn id(&self) -> String {
        format!("external({})", self.command)
    }

    fn adapt(&mut self, label: &str, corpus: &[Vec<String>]) -> Result<Box<dyn SequenceSource + '_>, GeneratorError> {
        let adapter_id = self.adapt_class(label, corpus)?;
        Ok(Box::new(ExternalAdapter { session: self, adapter_id }))
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Request {
    Hello,
    FitBase { corpus: Vec<Vec<String>> },
    Adapt { class: String, corpus: Vec<Vec<String>> },
    Sample { adapter_id: String, n: usize, temperature: f64, top_k: usize, max_tokens: usize, seed: u64 },
    Loglik { adapter_id: String, corpus: Vec<Vec<String>> },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ServeConfig {
    pub order: usize,
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            order: crate::generator::DEFAULT_ORDER,
            alpha: crate::generator::DEFAULT_ALPHA,
            lambda: crate::generator::DEFAULT_LAMBDA,
        }
    }
}

struct ServerState {
    config: ServeConfig,
    base: Option<Arc<NGramLM>>,
    adapters: HashMap<String, AdaptedLM>,
}

impl ServerState {
    fn handle(&mut self, req: Request) -> Result<Value, String> {
        match req {
            Request::Hello => Ok(json!({
                "ok": true,
                "protocol": PROTOCOL,
                "backend": "builtin-ngram",
                "adaptation": "interpolated class model",
                "config": self.config,
            })),
            Request::FitBase { corpus } => {
                let base = NGramLM::fit(&corpus, self.config.order, self.config.alpha).map_err(|e| e.to_string())?;
                self.base = Some(Arc::new(base));
                Ok(json!({"ok": true}))
            }
            Request::Adapt { class, corpus } => {
                let base = match &self.base {
                    Some(b) => Arc::clone(b),
                    None => Arc::new(
                        NGramLM::unfitted(Vocab::new(), self.config.order, self.config.alpha).map_err(|e| e.to_string())?,
                    ),
                };
                let model = adapt(&base, &corpus, self.config.lambda).map_err(|e| e.to_string())?;
                let id = format!("{}-{}", class, self.adapters.len());
                self.adapters.insert(id.clone(), model);
                Ok(json!({"ok": true, "adapter_id": id}))
            }
            Request::Sample { adapter_id, n, temperature, top_k, max_tokens, seed } => {
                let model = self.adapters.get_mut(&adapter_id).ok_or(format!("unknown adapter_id {adapter_id:?}"))?;
                let params = GeneratorParams { temperature, top_k, max_tokens, min_tokens: 1, seed };
                params.validate().map_err(|e| e.to_string())?;
                let samples = model.draw(n, &params, seed).map_err(|e| e.to_string())?;
                Ok(json!({"ok": true, "samples": samples}))
            }
            Request::Loglik { adapter_id, corpus } => {
                let model = self.adapters.get(&adapter_id).ok_or(format!("unknown adapter_id {adapter_id:?}"))?;
                Ok(json!({"ok": true, "value": log_likelihood(model, &corpus)}))
            }
        }
    }
}

/// Answers `dare-gen/1` requests from `input` until it closes. Malformed or
/// failing requests get an error response and the loop continues.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W, config: ServeConfig) -> std::io::Result<()> {
    let mut state = ServerState { config, base: None, adapters: HashMap::new() };
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Ok(req) => state.handle(req).unwrap_or_else(|e| json!({"ok": false, "error": e})),
            Err(e) => json!({"ok": false, "error": format!("bad request: {e}")}),
        };
        writeln!(output, "{response}")?;
        output.flush()?;
    }
    Ok(())
}
