//! Protocol for externally proposed designs.
//!
//! Each iteration the harness sends one request document and expects one
//! reply document. Both are JSON. Over a subprocess pipe every document
//! occupies exactly one line; over HTTP the request is the POST body and the
//! reply is the response body.
//!
//! Request fields:
//!
//! | field           | type                | notes                                        |
//! |-----------------|---------------------|----------------------------------------------|
//! | `protocol`      | string              | always `bsfbench-agent/1`                    |
//! | `condition`     | string              | `domain_aware` or `domain_agnostic`          |
//! | `task`          | string or null      | null under `domain_agnostic`                 |
//! | `objective`     | string              | `maximize` or `minimize`                     |
//! | `iteration`     | integer             | 1-based index of the requested proposal      |
//! | `iterations`    | integer             | total budget                                 |
//! | `space`         | object              | `{name, params: [{name, kind, ...}]}`        |
//! | `history`       | array               | `[{iteration, design, score, fallback}]`     |
//! | `clarification` | string or null      | set on retries, explains the previous error  |
//!
//! Under `domain_agnostic` the space, history designs and task name are all
//! masked. Scores are always in original units.
//!
//! The reply is either one design object or an array holding exactly one
//! design object, mapping parameter names to numbers or option strings. The
//! keys `hypothesis_name` and `rationale` are accepted and ignored. Anything
//! else (prose around the JSON, unknown parameters, unknown options, wrong
//! value kinds) is a parse failure and triggers a retry.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::space::{Design, NameMap, ParameterSpace, Value};
use crate::task::{Condition, Direction};

pub const AGENT_PROTOCOL: &str = "bsfbench-agent/1";

/// Reply keys that carry commentary rather than parameter values.
pub const RESERVED_REPLY_KEYS: [&str; 2] = ["hypothesis_name", "rationale"];

pub const DEFAULT_MAX_RETRIES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub design: Design,
    pub score: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentRequest {
    pub protocol: &'static str,
    pub condition: Condition,
    pub task: Option<String>,
    pub objective: Direction,
    pub iteration: usize,
    pub iterations: usize,
    pub space: ParameterSpace,
    pub history: Vec<HistoryEntry>,
    pub clarification: Option<String>,
}

impl AgentRequest {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("requests always serialize")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("unusable reply after {retries} retries: {message}")]
    ParseFailure { retries: usize, message: String },
    #[error("transport failure: {0}")]
    TransportFailure(String),
}

pub trait Transport: Send {
    /// Sends one request document and returns the raw reply document.
    fn exchange(&mut self, request: &str) -> Result<String, String>;
}

/// Creates one transport per run.
pub type TransportFactory = Arc<dyn Fn() -> Result<Box<dyn Transport>, String> + Send + Sync>;

/// Child process speaking one JSON document per line on stdin/stdout.
pub struct SubprocessTransport {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl SubprocessTransport {
    pub fn spawn(command: &[String]) -> Result<Self, String> {
        let (program, args) = command.split_first().ok_or("empty agent command")?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot start `{program}`: {e}"))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Self {
            child,
            stdin,
            stdout,
        })
    }
}

impl Transport for SubprocessTransport {
    fn exchange(&mut self, request: &str) -> Result<String, String> {
        let stdin = self.stdin.as_mut().ok_or("agent stdin closed")?;
        stdin
            .write_all(request.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| format!("write to agent: {e}"))?;
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| format!("read from agent: {e}"))?;
        if n == 0 {
            return Err("agent closed its output".into());
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    }
}

impl Drop for SubprocessTransport {
    fn drop(&mut self) {
        drop(self.stdin.take());
        if !matches!(self.child.try_wait(), Ok(Some(_))) {
            std::thread::sleep(Duration::from_millis(20));
            if !matches!(self.child.try_wait(), Ok(Some(_))) {
                let _ = self.child.kill();
            }
        }
        let _ = self.child.wait();
    }
}

/// HTTP POST of the request document; the response body is the reply.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    bearer: Option<String>,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, bearer: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            url: url.into(),
            bearer,
        }
    }
}

impl Transport for HttpTransport {
    fn exchange(&mut self, request: &str) -> Result<String, String> {
        let mut req = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send(request).map_err(|e| e.to_string())?;
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

/// Per-run state of the agent adapter.
pub struct AgentSession {
    transport: Result<Box<dyn Transport>, String>,
    pub condition: Condition,
    task_name: String,
    sent_space: ParameterSpace,
    name_map: Option<NameMap>,
    pub max_retries: usize,
}

/// A usable reply, translated back to original names.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentProposal {
    pub design: Design,
    pub retries_used: usize,
}

impl AgentSession {
    /// `transport` may be an error (for example a process that failed to
    /// start); every exchange then fails with a transport failure.
    pub fn new(
        transport: Result<Box<dyn Transport>, String>,
        condition: Condition,
        task_name: &str,
        space: &ParameterSpace,
        max_retries: usize,
    ) -> Self {
        let (sent_space, name_map) = if condition.is_masked() {
            let (masked, map) = space.mask();
            (masked, Some(map))
        } else {
            (space.clone(), None)
        };
        Self {
            transport,
            condition,
            task_name: task_name.to_string(),
            sent_space,
            name_map,
            max_retries,
        }
    }

    pub fn sent_space(&self) -> &ParameterSpace {
        &self.sent_space
    }

    /// Builds the request for `iteration` (1-based) from original-space
    /// history.
    pub fn request(
        &self,
        direction: Direction,
        iteration: usize,
        iterations: usize,
        history: &[HistoryEntry],
    ) -> AgentRequest {
        let history = history
            .iter()
            .map(|h| HistoryEntry {
                design: match &self.name_map {
                    Some(map) => map.mask_design(&h.design).unwrap_or_default(),
                    None => h.design.clone(),
                },
                ..h.clone()
            })
            .collect();
        AgentRequest {
            protocol: AGENT_PROTOCOL,
            condition: self.condition,
            task: (!self.condition.is_masked()).then(|| self.task_name.clone()),
            objective: direction,
            iteration,
            iterations,
            space: self.sent_space.clone(),
            history,
            clarification: None,
        }
    }
}

/// Sends `request`, retrying unusable replies up to `max_retries` times with a
/// clarification note, and returns the design in original names.
pub fn agent_exchange(
    session: &mut AgentSession,
    mut request: AgentRequest,
) -> Result<AgentProposal, AgentError> {
    let mut retries = 0;
    loop {
        let transport = session
            .transport
            .as_mut()
            .map_err(|e| AgentError::TransportFailure(e.clone()))?;
        let reply = transport
            .exchange(&request.to_line())
            .map_err(AgentError::TransportFailure)?;
        let parsed =
            parse_reply(&reply, &session.sent_space).and_then(|d| match &session.name_map {
                Some(map) => map.unmask_design(&d).map_err(|e| e.to_string()),
                None => Ok(d),
            });
        match parsed {
            Ok(design) => {
                return Ok(AgentProposal {
                    design,
                    retries_used: retries,
                })
            }
            Err(message) if retries >= session.max_retries => {
                return Err(AgentError::ParseFailure { retries, message });
            }
            Err(message) => {
                log::debug!("agent reply rejected ({message}), retrying");
                retries += 1;
                request.clarification = Some(format!(
                    "Your previous reply could not be used ({message}). Reply with ONLY a JSON array \
                     containing exactly one design object that uses the parameter names and options given."
                ));
            }
        }
    }
}

/// Parses a reply document against the space that was sent. Values are not
/// clipped here; out-of-range numerics are clipped later by validation.
pub fn parse_reply(text: &str, space: &ParameterSpace) -> Result<Design, String> {
    let doc: serde_json::Value =
        serde_json::from_str(text.trim()).map_err(|e| format!("not a JSON document: {e}"))?;
    let object = match doc {
        serde_json::Value::Object(map) => map,
        serde_json::Value::Array(mut items) if items.len() == 1 => match items.pop() {
            Some(serde_json::Value::Object(map)) => map,
            _ => return Err("array element is not an object".into()),
        },
        serde_json::Value::Array(items) => {
            return Err(format!("expected one design, got {}", items.len()))
        }
        _ => return Err("reply is neither an object nor an array".into()),
    };
    let mut design = Design::new();
    for (key, value) in object {
        if RESERVED_REPLY_KEYS.contains(&key.as_str()) {
            continue;
        }
        let spec = space
            .param(&key)
            .ok_or_else(|| format!("unknown parameter `{key}`"))?;
        let value = match (spec.is_numeric(), value) {
            (true, serde_json::Value::Number(n)) => {
                Value::Num(n.as_f64().ok_or("number out of range")?)
            }
            (false, serde_json::Value::String(s)) => {
                let trimmed = s.trim();
                if !spec
                    .options()
                    .unwrap_or_default()
                    .iter()
                    .any(|o| o == trimmed)
                {
                    return Err(format!("unknown option `{s}` for `{key}`"));
                }
                Value::Cat(trimmed.to_string())
            }
            (_, serde_json::Value::Null) => continue,
            (true, _) => return Err(format!("`{key}` must be a number")),
            (false, _) => return Err(format!("`{key}` must be one of its option strings")),
        };
        design.insert(key, value);
    }
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParameterSpec;
    use std::collections::VecDeque;

    struct Scripted(VecDeque<Result<String, String>>, Vec<String>);

    impl Transport for Scripted {
        fn exchange(&mut self, request: &str) -> Result<String, String> {
            self.1.push(request.to_string());
            self.0
                .pop_front()
                .unwrap_or_else(|| Err("script exhausted".into()))
        }
    }

    fn space() -> ParameterSpace {
        ParameterSpace::new(
            "bio",
            vec![
                ParameterSpec::numeric("perfusion_rate", 100.0, 500.0)
                    .unwrap()
                    .with_unit(Some("pL/cell/day".into())),
                ParameterSpec::categorical("cell_line", ["CHO-K1", "CHO-S", "CHO-DG44"]).unwrap(),
            ],
        )
        .unwrap()
    }

    fn session(replies: &[&str], condition: Condition) -> AgentSession {
        let script = Scripted(
            replies.iter().map(|r| Ok(r.to_string())).collect(),
            Vec::new(),
        );
        AgentSession::new(
            Ok(Box::new(script)),
            condition,
            "bio",
            &space(),
            DEFAULT_MAX_RETRIES,
        )
    }

    #[test]
    fn masked_reply_is_unmasked() {
        let mut s = session(&[r#"[{"X1": 250, "C1": "B"}]"#], Condition::DomainAgnostic);
        let req = s.request(Direction::Maximize, 1, 30, &[]);
        assert_eq!(req.task, None);
        let got = agent_exchange(&mut s, req).unwrap();
        assert_eq!(
            got.design,
            Design::new()
                .num("perfusion_rate", 250.0)
                .cat("cell_line", "CHO-S")
        );
        assert_eq!(got.retries_used, 0);
    }

    #[test]
    fn prose_triggers_retry() {
        let mut s = session(
            &[
                "Sure! [{\"X1\": 250, \"C1\": \"B\"}]",
                r#"{"X1": 300, "C1": "A"}"#,
            ],
            Condition::DomainAgnostic,
        );
        let req = s.request(Direction::Maximize, 1, 30, &[]);
        let got = agent_exchange(&mut s, req).unwrap();
        assert_eq!(got.retries_used, 1);
        assert_eq!(
            got.design.get("cell_line"),
            Some(&Value::Cat("CHO-K1".into()))
        );
    }

    #[test]
    fn unknown_parameter_exhausts_retries() {
        let bad = r#"[{"X9": 1}]"#;
        let mut s = session(&[bad, bad, bad], Condition::DomainAgnostic);
        let req = s.request(Direction::Maximize, 1, 30, &[]);
        match agent_exchange(&mut s, req) {
            Err(AgentError::ParseFailure { retries, .. }) => assert_eq!(retries, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reserved_keys_are_ignored_and_unmasked_names_pass() {
        let mut s = session(
            &[
                r#"{"perfusion_rate": 120, "cell_line": " CHO-S ", "rationale": "because", "hypothesis_name": "h"}"#,
            ],
            Condition::DomainAware,
        );
        let req = s.request(Direction::Minimize, 2, 30, &[]);
        assert_eq!(req.task.as_deref(), Some("bio"));
        let got = agent_exchange(&mut s, req).unwrap();
        assert_eq!(
            got.design,
            Design::new()
                .num("perfusion_rate", 120.0)
                .cat("cell_line", "CHO-S")
        );
    }

    #[test]
    fn request_masks_history_and_space() {
        let s = session(&[], Condition::DomainAgnostic);
        let history = vec![HistoryEntry {
            iteration: 1,
            design: Design::new()
                .num("perfusion_rate", 200.0)
                .cat("cell_line", "CHO-DG44"),
            score: 1.5,
            fallback: false,
        }];
        let line = s.request(Direction::Maximize, 2, 30, &history).to_line();
        assert!(!line.contains("perfusion") && !line.contains("CHO") && !line.contains("pL"));
        assert!(line.contains(r#""C1":"C""#));
        assert!(!line.contains('\n'));
    }

    #[test]
    fn failed_transport_reports_failure() {
        let mut s = AgentSession::new(
            Err("no agent".into()),
            Condition::DomainAware,
            "bio",
            &space(),
            2,
        );
        let req = s.request(Direction::Maximize, 1, 30, &[]);
        assert!(matches!(
            agent_exchange(&mut s, req),
            Err(AgentError::TransportFailure(_))
        ));
    }
}
