//! Out-of-process objective evaluation.
//!
//! One request per evaluation. The request is a single JSON document
//! `{"version": 1, "parameters": {...}}`; the reply is `{"value": <number>}`.
//! A command evaluator receives the request as one line on stdin and must
//! print the reply as the first non-empty line on stdout, then exit 0. An
//! HTTP evaluator receives the request as a POST body and answers with the
//! reply as the response body.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use wait_timeout::ChildExt;

use crate::error::{Error, Result};
use crate::space::PointAssignment;

pub const PROTOCOL_VERSION: u32 = 1;

fn default_timeout_ms() -> u64 {
    60_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExternalEvaluatorSpec {
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
    Http {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    version: u32,
    parameters: &'a PointAssignment,
}

impl ExternalEvaluatorSpec {
    pub fn timeout(&self) -> Duration {
        match self {
            ExternalEvaluatorSpec::Command { timeout_ms, .. } | ExternalEvaluatorSpec::Http { timeout_ms, .. } => {
                Duration::from_millis(*timeout_ms)
            }
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.timeout().is_zero() {
            out.push("timeout_ms must be positive".to_string());
        }
        out
    }
}

fn parse_reply(text: &str) -> Result<f64> {
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| Error::Protocol("empty reply".into()))?;
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Protocol(format!("reply is not JSON: {e}")))?;
    value
        .get("value")
        .and_then(Value::as_f64)
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Protocol(format!("reply lacks a finite numeric value: {line}")))
}

pub fn external_eval(spec: &ExternalEvaluatorSpec, point: &PointAssignment) -> Result<f64> {
    let problems = spec.violations();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let request = serde_json::to_string(&Request {
        version: PROTOCOL_VERSION,
        parameters: point,
    })
    .expect("request serializes");
    match spec {
        ExternalEvaluatorSpec::Command { program, args, .. } => run_command(program, args, &request, spec.timeout()),
        ExternalEvaluatorSpec::Http { url, .. } => post(url, &request, spec.timeout()),
    }
}

fn run_command(program: &str, args: &[String], request: &str, timeout: Duration) -> Result<f64> {
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| Error::Evaluator(format!("cannot start {program}: {e}")))?;
    let mut stdin = child.stdin.take().expect("stdin piped");
    // a child that never reads stdin must not block us; ignore broken pipes
    let _ = stdin.write_all(request.as_bytes()).and_then(|_| stdin.write_all(b"\n"));
    drop(stdin);
    let mut stdout = child.stdout.take().expect("stdout piped");
    let reader = std::thread::spawn(move || {
        let mut text = String::new();
        let _ = stdout.read_to_string(&mut text);
        text
    });
    let status = match child.wait_timeout(timeout)? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::Timeout(timeout));
        }
    };
    let text = reader.join().unwrap_or_default();
    if !status.success() {
        return Err(Error::Evaluator(format!("{program} exited with {status}")));
    }
    parse_reply(&text)
}

fn post(url: &str, request: &str, timeout: Duration) -> Result<f64> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into();
    let response = agent
        .post(url)
        .header("content-type", "application/json")
        .send(request);
    let mut response = match response {
        Ok(r) => r,
        Err(ureq::Error::Timeout(_)) => return Err(Error::Timeout(timeout)),
        Err(e) => return Err(Error::Evaluator(format!("POST {url}: {e}"))),
    };
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| match e {
            ureq::Error::Timeout(_) => Error::Timeout(timeout),
            other => Error::Protocol(format!("reading reply: {other}")),
        })?;
    parse_reply(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str, timeout_ms: u64) -> ExternalEvaluatorSpec {
        ExternalEvaluatorSpec::Command {
            program: "sh".into(),
            args: vec!["-c".into(), script.into()],
            timeout_ms,
        }
    }

    fn point() -> PointAssignment {
        PointAssignment::new().real("x", 1.5).choice("c", "a")
    }

    #[test]
    fn command_reply_parsed() {
        let spec = sh("read line; echo '{\"value\": 2.25}'", 5_000);
        assert_eq!(external_eval(&spec, &point()).unwrap(), 2.25);
    }

    #[test]
    fn command_receives_request() {
        let spec = sh(
            "read line; case \"$line\" in *'\"parameters\":{\"c\":\"a\",\"x\":1.5}'*) echo '{\"value\": 1}';; *) echo '{\"value\": 0}';; esac",
            5_000,
        );
        assert_eq!(external_eval(&spec, &point()).unwrap(), 1.0);
    }

    #[test]
    fn command_timeout() {
        let spec = sh("sleep 5", 1);
        assert!(matches!(external_eval(&spec, &point()), Err(Error::Timeout(_))));
    }

    #[test]
    fn malformed_reply() {
        let spec = sh("read line; echo 'not json'", 5_000);
        assert!(matches!(external_eval(&spec, &point()), Err(Error::Protocol(_))));
        let spec = sh("read line; echo '{\"val\": 3}'", 5_000);
        assert!(matches!(external_eval(&spec, &point()), Err(Error::Protocol(_))));
    }

    #[test]
    fn nonzero_exit() {
        let spec = sh("read line; exit 3", 5_000);
        assert!(matches!(external_eval(&spec, &point()), Err(Error::Evaluator(_))));
    }

    #[test]
    fn spec_serde_shape() {
        let spec: ExternalEvaluatorSpec =
            serde_json::from_str(r#"{"kind": "http", "url": "http://localhost:1/eval"}"#).unwrap();
        assert_eq!(spec.timeout(), Duration::from_secs(60));
    }
}
