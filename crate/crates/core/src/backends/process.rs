//! External-process backends speaking the line protocol.
//!
//! Requests go to the child's stdin as one JSON object per line,
//! `{"id": ..., "text": ...}`; the child answers each on stdout with
//! `{"id": ..., "spans": [{"start": ..., "end": ...}]}` and logs to stderr.
//! Several children run at once when the caller uses several workers. A child
//! that times out, exits, or writes a line with the wrong id is replaced by a
//! fresh one before the next request.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::de::DeserializeOwned;

use super::{BackendError, Deidentifier, Request, Response};
use crate::span::Span;

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(command: &[String]) -> Result<Worker, BackendError> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| BackendError::Spawn {
                command: command.join(" "),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
        })
    }

    fn exchange(&mut self, line: &str, timeout: Duration) -> Result<String, BackendError> {
        let sent = writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush());
        if sent.is_err() {
            return Err(BackendError::Exited);
        }
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => Err(BackendError::Protocol(format!("reading response: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(BackendError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(BackendError::Exited),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A pool of child processes exchanging one JSON line per request.
pub struct LineProcess {
    command: Vec<String>,
    timeout: Duration,
    idle: Mutex<Vec<Worker>>,
}

impl LineProcess {
    pub fn new(command: Vec<String>, timeout: Duration) -> LineProcess {
        assert!(!command.is_empty(), "empty command");
        LineProcess {
            command,
            timeout,
            idle: Mutex::new(Vec::new()),
        }
    }

    /// Sends `request` and parses the reply, which must echo the request id.
    pub fn call<T: DeserializeOwned>(&self, request: &Request, reply_id: impl Fn(&T) -> &str) -> Result<T, BackendError> {
        let mut worker = match self.idle.lock().expect("worker pool").pop() {
            Some(w) => w,
            None => Worker::spawn(&self.command)?,
        };
        let line = serde_json::to_string(request).expect("request serializes");
        // workers that failed are dropped (and killed) instead of returned to the pool
        let reply = worker.exchange(&line, self.timeout)?;
        let parsed: T = match serde_json::from_str(&reply) {
            Ok(p) => p,
            Err(e) => {
                self.idle.lock().expect("worker pool").push(worker);
                return Err(BackendError::Protocol(format!("invalid response JSON for `{}`: {e}", request.id)));
            }
        };
        if reply_id(&parsed) != request.id {
            return Err(BackendError::Protocol(format!(
                "response id `{}` does not match request `{}`",
                reply_id(&parsed),
                request.id
            )));
        }
        self.idle.lock().expect("worker pool").push(worker);
        Ok(parsed)
    }
}

/// A span-returning backend behind the line protocol.
pub struct ExternalProcess {
    process: LineProcess,
}

impl ExternalProcess {
    pub fn new(command: Vec<String>, timeout: Duration) -> ExternalProcess {
        ExternalProcess {
            process: LineProcess::new(command, timeout),
        }
    }
}

impl Deidentifier for ExternalProcess {
    fn predict(&self, request: &Request) -> Result<Vec<Span>, BackendError> {
        let resp: Response = self.process.call(request, |r: &Response| &r.id)?;
        if let Some(e) = resp.error {
            return Err(BackendError::Protocol(format!("adapter reported: {e}")));
        }
        Ok(resp.spans)
    }
}
