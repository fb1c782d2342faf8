//! Client side of the reflection sidecar: one interpreter process per
//! request, one JSON request on stdin, one JSON response on stdout.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sigmodel::ApiSignature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Signature,
    Execute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectRequest {
    pub env_path: PathBuf,
    pub module_path: String,
    pub attribute_chain: String,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snippet: Option<String>,
    pub timeout_seconds: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorInfo {
    #[serde(rename = "type")]
    pub kind: String,
    pub message: String,
    #[serde(default)]
    pub traceback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum Response {
    Ok {
        #[serde(default)]
        signature: Option<ApiSignature>,
    },
    Error {
        error: ErrorInfo,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReflectOutcome {
    Signature(ApiSignature),
    /// The object exists but has no introspectable signature.
    NoSignature(String),
    Failed(ErrorInfo),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecOutcome {
    Ok,
    Error(ErrorInfo),
}

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("sidecar unreachable: {0}")]
    Unreachable(String),
    #[error("sidecar timed out after {0}s")]
    Timeout(u64),
    #[error("sidecar protocol error: {0}")]
    Protocol(String),
    #[error("environment not found: {0}")]
    EnvironmentNotFound(PathBuf),
}

/// Launches the sidecar script with the interpreter of a given environment.
#[derive(Debug, Clone)]
pub struct SidecarClient {
    pub script: PathBuf,
    pub timeout: Duration,
}

impl SidecarClient {
    pub fn new(script: impl Into<PathBuf>) -> Self {
        SidecarClient {
            script: script.into(),
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Interpreter of an environment: `<env>/bin/python`, or the path itself if it is a file.
    pub fn interpreter(env: &Path) -> Result<PathBuf, SidecarError> {
        if env.is_file() {
            return Ok(env.to_path_buf());
        }
        ["bin/python", "bin/python3", "Scripts/python.exe"]
            .iter()
            .map(|rel| env.join(rel))
            .find(|p| p.is_file())
            .ok_or_else(|| SidecarError::EnvironmentNotFound(env.to_path_buf()))
    }

    pub fn reflect_signature(&self, env: &Path, module_path: &str, attribute_chain: &str) -> Result<ReflectOutcome, SidecarError> {
        let request = ReflectRequest {
            env_path: env.to_path_buf(),
            module_path: module_path.to_string(),
            attribute_chain: attribute_chain.to_string(),
            mode: Mode::Signature,
            snippet: None,
            timeout_seconds: self.timeout.as_secs(),
        };
        match self.send(&request)? {
            Response::Ok { signature: Some(sig) } => Ok(ReflectOutcome::Signature(sig)),
            Response::Ok { signature: None } => Err(SidecarError::Protocol("signature missing from response".into())),
            Response::Error { error } if error.kind == "NoSignature" => Ok(ReflectOutcome::NoSignature(error.message)),
            Response::Error { error } => Ok(ReflectOutcome::Failed(error)),
        }
    }

    pub fn execute_snippet(&self, env: &Path, snippet: &str) -> Result<ExecOutcome, SidecarError> {
        let request = ReflectRequest {
            env_path: env.to_path_buf(),
            module_path: String::new(),
            attribute_chain: String::new(),
            mode: Mode::Execute,
            snippet: Some(snippet.to_string()),
            timeout_seconds: self.timeout.as_secs(),
        };
        match self.send(&request)? {
            Response::Ok { .. } => Ok(ExecOutcome::Ok),
            Response::Error { error } => Ok(ExecOutcome::Error(error)),
        }
    }

    fn send(&self, request: &ReflectRequest) -> Result<Response, SidecarError> {
        let python = Self::interpreter(&request.env_path)?;
        let mut child = Command::new(&python)
            .arg(&self.script)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SidecarError::Unreachable(format!("{}: {e}", python.display())))?;
        let mut line = serde_json::to_string(request).map_err(|e| SidecarError::Protocol(e.to_string()))?;
        line.push('\n');
        if let Some(mut stdin) = child.stdin.take() {
            stdin
                .write_all(line.as_bytes())
                .map_err(|e| SidecarError::Unreachable(e.to_string()))?;
        }
        let mut stdout = child.stdout.take().expect("stdout piped");
        let mut stderr = child.stderr.take().expect("stderr piped");
        let out_reader = std::thread::spawn(move || {
            let mut buf = String::new();
            stdout.read_to_string(&mut buf).map(|_| buf)
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });
        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(SidecarError::Timeout(self.timeout.as_secs()));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(SidecarError::Unreachable(e.to_string())),
            }
        };
        let out = out_reader
            .join()
            .map_err(|_| SidecarError::Protocol("stdout reader panicked".into()))?
            .map_err(|e| SidecarError::Protocol(e.to_string()))?;
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(SidecarError::Protocol(format!("exit status {status}: {}", err.trim())));
        }
        let first = out.lines().find(|l| !l.trim().is_empty()).unwrap_or_default();
        serde_json::from_str(first).map_err(|e| SidecarError::Protocol(format!("bad response {first:?}: {e}")))
    }
}

/// Self-contained snippet that resolves `path` by import and calls it with `args_text`.
pub fn call_snippet(module_path: &str, attribute_chain: &str, args_text: &str) -> String {
    let mut s = String::new();
    s.push_str("import importlib\n");
    s.push_str(&format!("_obj = importlib.import_module({module_path:?})\n"));
    if !attribute_chain.is_empty() {
        s.push_str(&format!("for _name in {attribute_chain:?}.split('.'):\n"));
        s.push_str("    try:\n");
        s.push_str("        _obj = getattr(_obj, _name)\n");
        s.push_str("    except AttributeError:\n");
        s.push_str("        _obj = importlib.import_module(_obj.__name__ + '.' + _name)\n");
    }
    s.push_str(&format!("_obj({args_text})\n"));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_format() {
        let r = ReflectRequest {
            env_path: "/env".into(),
            module_path: "numpy".into(),
            attribute_chain: "correlate".into(),
            mode: Mode::Signature,
            snippet: None,
            timeout_seconds: 5,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"env_path": "/env", "module_path": "numpy", "attribute_chain": "correlate", "mode": "signature", "timeout_seconds": 5})
        );
    }

    #[test]
    fn missing_environment() {
        let c = SidecarClient::new("reflect.py");
        let err = c.execute_snippet(Path::new("/nonexistent/env"), "").unwrap_err();
        assert!(matches!(err, SidecarError::EnvironmentNotFound(_)));
    }

    #[test]
    fn snippet_walks_attributes() {
        let s = call_snippet("numpy", "linalg.norm", "x, ord=2");
        assert!(s.contains("import_module(\"numpy\")"));
        assert!(s.ends_with("_obj(x, ord=2)\n"));
    }
}
