//! LLM drivers: the chat wire types, a deterministic scripted driver for
//! tests and offline runs, and an HTTP chat-completions client with retry
//! and backoff.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// One requested tool invocation from an assistant turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: Role::System,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: Role::User,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn tool(tool_call_id: impl Into<String>, content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: Some(tool_call_id.into()),
        }
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("auth token not set: export {0}")]
    MissingAuth(&'static str),
    #[error("provider rejected the request for context length")]
    ContextLength,
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Produces the next assistant message for a transcript.
pub trait LlmDriver {
    fn next(&mut self, transcript: &[ChatMessage]) -> Result<ChatMessage, DriverError>;
}

/// The four registered tool names.
pub const TOOL_NAMES: [&str; 4] = ["run_simulation", "shell", "read_file", "write_file"];

/// Tool schemas advertised to chat-completions providers.
pub fn tool_definitions() -> Value {
    json!([
        {
            "type": "function",
            "function": {
                "name": "run_simulation",
                "description": "Run the evaluation playground on a candidate program file and return its score.",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "file_path": {"type": "string", "description": "Workspace path of the candidate program."}
                    },
                    "required": ["file_path"]
                }
            }
        },
        {
            "type": "function",
            "function": {
                "name": "shell",
                "description": "Run a shell command in the workspace.",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "command": {"type": "string"}
                    },
                    "required": ["command"]
                }
            }
        },
        {
            "type": "function",
            "function": {
                "name": "read_file",
                "description": "Read a file from the workspace.",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "target_file": {"type": "string"}
                    },
                    "required": ["target_file"]
                }
            }
        },
        {
            "type": "function",
            "function": {
                "name": "write_file",
                "description": "Write a file in the workspace.",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "file_path": {"type": "string"},
                        "contents": {"type": "string"}
                    },
                    "required": ["file_path", "contents"]
                }
            }
        }
    ])
}

// ---------------------------------------------------------------------------
// Scripted driver
// ---------------------------------------------------------------------------

/// One scripted tool invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedCall {
    pub name: String,
    pub arguments: Value,
}

/// One scripted assistant turn: plain text, tool calls, or both.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedAction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub say: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calls: Vec<ScriptedCall>,
}

impl ScriptedAction {
    pub fn say(text: impl Into<String>) -> ScriptedAction {
        ScriptedAction {
            say: Some(text.into()),
            calls: Vec::new(),
        }
    }

    pub fn call(name: &str, arguments: Value) -> ScriptedAction {
        ScriptedAction {
            say: None,
            calls: vec![ScriptedCall {
                name: name.to_string(),
                arguments,
            }],
        }
    }
}

/// Fallback summary emitted when a script runs out of turns, so scripted
/// agents always terminate through the summary protocol.
pub const SCRIPT_EXHAUSTED_SUMMARY: &str = "## Summary for Next Agent\n\n\
### Agent Mode\n- Mode: EXPLORATION\n- Reason: script exhausted\n\n\
### Best Result\n- Score: unreported\n- Code location: \n- Approach that achieved it: \n\n\
### What I Tried\n\n### Key Insights\n\n### Recommended Next Steps\n\n\
### Approaches That Didn't Work (and Why)\n";

/// Deterministic driver replaying a fixed action script. The `i`-th call
/// returns the `i`-th action, where `i` counts assistant messages already in
/// the transcript; the reply is a pure function of (script, that count).
#[derive(Debug, Clone)]
pub struct ScriptedDriver {
    actions: Vec<ScriptedAction>,
}

impl ScriptedDriver {
    pub fn new(actions: Vec<ScriptedAction>) -> ScriptedDriver {
        ScriptedDriver { actions }
    }
}

impl LlmDriver for ScriptedDriver {
    fn next(&mut self, transcript: &[ChatMessage]) -> Result<ChatMessage, DriverError> {
        let turn = transcript
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .count();
        let Some(action) = self.actions.get(turn) else {
            return Ok(ChatMessage::assistant(SCRIPT_EXHAUSTED_SUMMARY));
        };
        let mut message = ChatMessage::assistant(action.say.clone().unwrap_or_default());
        message.tool_calls = action
            .calls
            .iter()
            .enumerate()
            .map(|(j, call)| ToolCall {
                id: format!("call_{turn}_{j}"),
                name: call.name.clone(),
                arguments: call.arguments.clone(),
            })
            .collect();
        Ok(message)
    }
}

// ---------------------------------------------------------------------------
// HTTP driver
// ---------------------------------------------------------------------------

/// Environment variables the HTTP driver reads.
pub const ENV_API_KEY: &str = "RELAY_API_KEY";
pub const ENV_BASE_URL: &str = "RELAY_BASE_URL";
pub const ENV_MODEL: &str = "RELAY_MODEL";

const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: String,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub request_timeout: Duration,
}

/// Chat-completions client speaking the prevailing chat+tools protocol.
pub struct HttpDriver {
    agent: ureq::Agent,
    config: HttpConfig,
}

impl HttpDriver {
    pub fn new(config: HttpConfig) -> HttpDriver {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.request_timeout))
            .build()
            .into();
        HttpDriver { agent, config }
    }

    /// Configuration from the environment; `model`/`base_url` arguments win
    /// over the corresponding variables.
    pub fn from_env(
        model: Option<String>,
        base_url: Option<String>,
    ) -> Result<HttpDriver, DriverError> {
        let api_key =
            std::env::var(ENV_API_KEY).map_err(|_| DriverError::MissingAuth(ENV_API_KEY))?;
        let base_url = base_url
            .or_else(|| std::env::var(ENV_BASE_URL).ok())
            .unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
        let model = model
            .or_else(|| std::env::var(ENV_MODEL).ok())
            .unwrap_or_else(|| DEFAULT_MODEL.to_string());
        Ok(HttpDriver::new(HttpConfig {
            base_url,
            model,
            api_key,
            max_attempts: 5,
            backoff_base: Duration::from_millis(500),
            request_timeout: Duration::from_secs(300),
        }))
    }

    fn request_body(&self, transcript: &[ChatMessage]) -> Value {
        let messages: Vec<Value> = transcript.iter().map(wire_message).collect();
        json!({
            "model": self.config.model,
            "messages": messages,
            "tools": tool_definitions(),
        })
    }

    fn attempt(&self, body: &Value) -> Result<ChatMessage, AttemptError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut response = self
            .agent
            .post(&url)
            .header("authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(body)
            .map_err(|e| AttemptError::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| AttemptError::Retry(e.to_string()))?;
        match status {
            200 => parse_completion(&text).map_err(AttemptError::Fatal),
            400 if text.contains("context_length") || text.contains("maximum context") => {
                Err(AttemptError::Fatal(DriverError::ContextLength))
            }
            429 | 500 | 502 | 503 | 529 => {
                Err(AttemptError::Retry(format!("status {status}: {text}")))
            }
            _ => Err(AttemptError::Fatal(DriverError::Protocol(format!(
                "status {status}: {text}"
            )))),
        }
    }
}

enum AttemptError {
    Retry(String),
    Fatal(DriverError),
}

impl LlmDriver for HttpDriver {
    fn next(&mut self, transcript: &[ChatMessage]) -> Result<ChatMessage, DriverError> {
        let body = self.request_body(transcript);
        let mut last = String::new();
        for attempt in 0..self.config.max_attempts {
            match self.attempt(&body) {
                Ok(message) => return Ok(message),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retry(message)) => {
                    last = message;
                    if attempt + 1 < self.config.max_attempts {
                        let exp = self.config.backoff_base * 2u32.pow(attempt);
                        std::thread::sleep(exp.min(Duration::from_secs(30)));
                    }
                }
            }
        }
        Err(DriverError::Transport {
            attempts: self.config.max_attempts,
            message: last,
        })
    }
}

fn wire_message(message: &ChatMessage) -> Value {
    let role = match message.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut out = json!({"role": role, "content": message.content});
    if !message.tool_calls.is_empty() {
        out["tool_calls"] = Value::Array(
            message
                .tool_calls
                .iter()
                .map(|call| {
                    json!({
                        "id": call.id,
                        "type": "function",
                        "function": {
                            "name": call.name,
                            "arguments": call.arguments.to_string(),
                        }
                    })
                })
                .collect(),
        );
    }
    if let Some(id) = &message.tool_call_id {
        out["tool_call_id"] = Value::String(id.clone());
    }
    out
}

fn parse_completion(text: &str) -> Result<ChatMessage, DriverError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| DriverError::Protocol(format!("bad response json: {e}")))?;
    let message = value
        .pointer("/choices/0/message")
        .ok_or_else(|| DriverError::Protocol("response has no choices".to_string()))?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let mut out = ChatMessage::assistant(content);
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for (j, call) in calls.iter().enumerate() {
            let id = call
                .get("id")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("call_{j}"));
            let name = call
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| DriverError::Protocol("tool call missing name".to_string()))?
                .to_string();
            let raw_args = call
                .pointer("/function/arguments")
                .and_then(Value::as_str)
                .unwrap_or("{}");
            let arguments =
                serde_json::from_str(raw_args).unwrap_or(Value::String(raw_args.to_string()));
            out.tool_calls.push(ToolCall {
                id,
                name,
                arguments,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    #[test]
    fn scripted_driver_is_a_pure_function_of_turn_count() {
        let mut driver = ScriptedDriver::new(vec![
            ScriptedAction::say("first"),
            ScriptedAction::call("shell", json!({"command": "echo hi"})),
        ]);
        let mut transcript = vec![ChatMessage::system("s"), ChatMessage::user("go")];
        let a = driver.next(&transcript).unwrap();
        assert_eq!(a.content, "first");
        // same transcript shape -> same answer
        assert_eq!(driver.next(&transcript).unwrap(), a);

        transcript.push(a);
        let b = driver.next(&transcript).unwrap();
        assert_eq!(b.tool_calls.len(), 1);
        assert_eq!(b.tool_calls[0].name, "shell");
        assert_eq!(b.tool_calls[0].id, "call_1_0");

        transcript.push(b);
        let c = driver.next(&transcript).unwrap();
        assert!(c.content.contains("## Summary for Next Agent"));
    }

    #[test]
    fn missing_auth_is_reported() {
        std::env::remove_var(ENV_API_KEY);
        let err = match HttpDriver::from_env(None, None) {
            Err(e) => e,
            Ok(_) => panic!("expected missing auth"),
        };
        assert!(matches!(err, DriverError::MissingAuth(ENV_API_KEY)));
        assert!(err.to_string().contains("auth token not set"));
    }

    #[test]
    fn completion_parsing_handles_tool_calls() {
        let text = r#"{
            "choices": [{"message": {
                "role": "assistant",
                "content": null,
                "tool_calls": [{
                    "id": "abc",
                    "type": "function",
                    "function": {"name": "write_file",
                                 "arguments": "{\"file_path\": \"/x\", \"contents\": \"y\"}"}
                }]
            }}]
        }"#;
        let message = parse_completion(text).unwrap();
        assert_eq!(message.tool_calls.len(), 1);
        assert_eq!(message.tool_calls[0].name, "write_file");
        assert_eq!(message.tool_calls[0].arguments["file_path"], "/x");
    }

    /// Minimal single-threaded HTTP stub: answers each connection with the
    /// next canned (status, body) pair.
    fn spawn_stub(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buffer = Vec::new();
                let mut chunk = [0u8; 4096];
                // read headers + declared body length
                let request = loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buffer.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buffer);
                    if let Some(head_end) = text.find("\r\n\r\n") {
                        let head = text[..head_end].to_ascii_lowercase();
                        if head.contains("transfer-encoding: chunked") {
                            // chunked body: wait for the terminating chunk
                            if text.ends_with("0\r\n\r\n") {
                                break text.into_owned();
                            }
                        } else {
                            let declared: usize = head
                                .lines()
                                .find_map(|l| {
                                    l.strip_prefix("content-length: ")
                                        .map(|v| v.trim().parse().unwrap())
                                })
                                .unwrap_or(0);
                            if buffer.len() >= head_end + 4 + declared {
                                break text.into_owned();
                            }
                        }
                    }
                };
                seen.push(request);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            seen
        });
        (format!("http://{addr}"), handle)
    }

    fn driver_for(base_url: &str) -> HttpDriver {
        HttpDriver::new(HttpConfig {
            base_url: base_url.to_string(),
            model: "test-model".into(),
            api_key: "k".into(),
            max_attempts: 3,
            backoff_base: Duration::from_millis(1),
            request_timeout: Duration::from_secs(5),
        })
    }

    #[test]
    fn http_driver_round_trip_with_retry() {
        let ok_body = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#;
        let (url, handle) = spawn_stub(vec![
            (500, "{}".to_string()),
            (200, ok_body.to_string()),
        ]);
        let mut driver = driver_for(&url);
        let transcript = vec![ChatMessage::system("sys"), ChatMessage::user("hi")];
        let reply = driver.next(&transcript).unwrap();
        assert_eq!(reply.content, "hello");
        let requests = handle.join().unwrap();
        assert_eq!(requests.len(), 2, "one retry expected");
        let compact: String = requests[0].split_whitespace().collect();
        assert!(compact.contains("\"model\":\"test-model\""));
        assert!(requests[0].contains("run_simulation"));
        assert!(requests[0]
            .to_ascii_lowercase()
            .contains("authorization: bearer k"));
    }

    #[test]
    fn http_driver_drives_a_full_agent_loop() {
        use crate::agent::{run_agent, AgentEnv, AgentLimits, ToolPolicy, Workspace};
        use crate::agent::tools::Budget;
        use crate::playground::{Playground, Polarity, SimulationResult};
        use std::path::Path;

        struct ConstPlayground;
        impl Playground for ConstPlayground {
            fn id(&self) -> &'static str {
                "const"
            }
            fn task_description(&self) -> String {
                "always 0.25".into()
            }
            fn polarity(&self) -> Polarity {
                Polarity::HigherBetter
            }
            fn candidate_filename(&self) -> String {
                "c.txt".into()
            }
            fn run_candidate(&self, _c: &Path, _s: &Path) -> SimulationResult {
                SimulationResult::Scored {
                    score: 0.25,
                    detail: "const".into(),
                    result_files: Vec::new(),
                }
            }
        }

        let turn1 = serde_json::to_string(&json!({
            "choices": [{"message": {
                "role": "assistant",
                "content": "",
                "tool_calls": [
                    {"id": "w1", "type": "function",
                     "function": {"name": "write_file",
                                  "arguments": "{\"file_path\": \"/c.txt\", \"contents\": \"x\"}"}},
                    {"id": "r1", "type": "function",
                     "function": {"name": "run_simulation",
                                  "arguments": "{\"file_path\": \"/c.txt\"}"}}
                ]
            }}]
        }))
        .unwrap();
        let turn2 = serde_json::to_string(&json!({
            "choices": [{"message": {
                "role": "assistant",
                "content": "## Summary for Next Agent\nScore: 0.25"
            }}]
        }))
        .unwrap();
        let (url, handle) = spawn_stub(vec![(200, turn1), (200, turn2)]);
        let mut driver = driver_for(&url);

        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::create(&tmp.path().join("ws")).unwrap();
        let pg = ConstPlayground;
        let mut budget = Budget::new(5);
        let mut env = AgentEnv {
            workspace: &ws,
            playground: &pg,
            budget: &mut budget,
            archive: None,
            best: None,
            policy: ToolPolicy::default(),
        };
        let outcome =
            run_agent(1, "system", &mut driver, &mut env, &AgentLimits::default()).unwrap();
        assert_eq!(outcome.best_score, Some(0.25));
        assert_eq!(outcome.state.simulations_run, 1);

        // the second request must carry both tool results with their ids
        let requests = handle.join().unwrap();
        assert_eq!(requests.len(), 2);
        let second: String = requests[1].split_whitespace().collect();
        assert!(second.contains(r#""tool_call_id":"w1""#), "{second}");
        assert!(second.contains(r#""tool_call_id":"r1""#), "{second}");
        assert!(second.contains(r#""role":"tool""#));
    }

    #[test]
    fn context_length_rejection_is_not_retried() {
        let (url, handle) = spawn_stub(vec![(
            400,
            r#"{"error": {"message": "maximum context length exceeded"}}"#.to_string(),
        )]);
        let mut driver = driver_for(&url);
        let err = driver
            .next(&[ChatMessage::user("x")])
            .unwrap_err();
        assert!(matches!(err, DriverError::ContextLength));
        assert_eq!(handle.join().unwrap().len(), 1);
    }
}
