//! Pluggable text-completion backends and the protocol-message parsers.
//!
//! Two backends ship: an HTTP client speaking the common chat-completions
//! wire format (`POST <base>/chat/completions`, bearer auth, retry with
//! exponential backoff on transient failures) and a scripted backend that
//! replays a fixed list of replies, which makes every planner run fully
//! deterministic and offline-testable.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::actions::{render_action, Action};
use crate::world::{EntityId, Scene};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            temperature: 0.0,
            max_tokens: None,
            seed: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("endpoint returned status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("scripted backend exhausted after {0} replies")]
    ScriptExhausted(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown robot: {0}")]
    UnknownRobot(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// A text-completion endpoint. Implementations must be safe for concurrent
/// episode use; within one episode calls are strictly sequential.
pub trait TextBackend: Send + Sync {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, BackendError>;
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// Replays recorded assistant replies in order; errors once exhausted.
pub struct ScriptedBackend {
    replies: Vec<String>,
    cursor: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(replies: Vec<String>) -> Self {
        ScriptedBackend {
            replies,
            cursor: AtomicUsize::new(0),
        }
    }

    /// Accepts either a bare JSON array of strings or `{"replies": [...]}`.
    pub fn from_json_str(text: &str) -> Result<Self, BackendError> {
        #[derive(Deserialize)]
        struct Wrapper {
            replies: Vec<String>,
        }
        if let Ok(replies) = serde_json::from_str::<Vec<String>>(text) {
            return Ok(ScriptedBackend::new(replies));
        }
        let w: Wrapper = serde_json::from_str(text)
            .map_err(|e| BackendError::Config(format!("script file: {e}")))?;
        Ok(ScriptedBackend::new(w.replies))
    }

    pub fn consumed(&self) -> usize {
        self.cursor.load(Ordering::SeqCst).min(self.replies.len())
    }
}

impl TextBackend for ScriptedBackend {
    fn complete(
        &self,
        _messages: &[ChatMessage],
        _params: &CompletionParams,
    ) -> Result<String, BackendError> {
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        self.replies
            .get(i)
            .cloned()
            .ok_or(BackendError::ScriptExhausted(self.replies.len()))
    }
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

/// Environment variable holding the bearer token for the HTTP backend.
pub const API_KEY_ENV: &str = "COHERENT_API_KEY";

#[derive(Clone, Debug)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Retries after the first attempt, on 429/5xx/transport failures.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    /// Upper bound on concurrent in-flight requests.
    pub max_inflight: u32,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            max_retries: 3,
            initial_backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(60),
            max_inflight: 4,
        }
    }
}

#[derive(Default, Debug)]
pub struct BackendTelemetry {
    pub requests: AtomicU64,
    pub retries: AtomicU64,
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    telemetry: BackendTelemetry,
    inflight: Mutex<u32>,
    inflight_cv: Condvar,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(config.timeout)
            .build();
        HttpBackend {
            config,
            agent,
            telemetry: BackendTelemetry::default(),
            inflight: Mutex::new(0),
            inflight_cv: Condvar::new(),
        }
    }

    pub fn telemetry(&self) -> &BackendTelemetry {
        &self.telemetry
    }

    fn url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn send_once(
        &self,
        body: &serde_json::Value,
    ) -> Result<String, BackendError> {
        self.telemetry.requests.fetch_add(1, Ordering::SeqCst);
        let mut request = self.agent.post(&self.url());
        if let Some(key) = &self.config.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        match request.send_json(body.clone()) {
            Ok(response) => {
                let value: serde_json::Value = response
                    .into_json()
                    .map_err(|e| BackendError::Parse(format!("response body: {e}")))?;
                value["choices"][0]["message"]["content"]
                    .as_str()
                    .map(str::to_string)
                    .ok_or_else(|| {
                        BackendError::Parse("no choices[0].message.content in response".into())
                    })
            }
            Err(ureq::Error::Status(status, response)) => Err(BackendError::Endpoint {
                status,
                body: response.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => {
                let text = t.to_string();
                if text.contains("timed out") || text.contains("timeout") {
                    Err(BackendError::Timeout(text))
                } else {
                    Err(BackendError::Transport(text))
                }
            }
        }
    }
}

fn retryable(err: &BackendError) -> bool {
    match err {
        BackendError::Endpoint { status, .. } => *status == 429 || *status >= 500,
        BackendError::Timeout(_) | BackendError::Transport(_) => true,
        _ => false,
    }
}

impl TextBackend for HttpBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<String, BackendError> {
        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": params.temperature,
        });
        if let Some(max_tokens) = params.max_tokens {
            body["max_tokens"] = max_tokens.into();
        }
        if let Some(seed) = params.seed {
            body["seed"] = seed.into();
        }

        let mut guard = self.inflight.lock().expect("inflight lock");
        while *guard >= self.config.max_inflight {
            guard = self.inflight_cv.wait(guard).expect("inflight wait");
        }
        *guard += 1;
        drop(guard);

        let result = (|| {
            let mut backoff = self.config.initial_backoff;
            let mut attempt = 0;
            loop {
                match self.send_once(&body) {
                    Ok(text) => return Ok(text),
                    Err(err) if retryable(&err) && attempt < self.config.max_retries => {
                        attempt += 1;
                        self.telemetry.retries.fetch_add(1, Ordering::SeqCst);
                        std::thread::sleep(backoff);
                        backoff = backoff.saturating_mul(2);
                    }
                    Err(err) => return Err(err),
                }
            }
        })();

        let mut guard = self.inflight.lock().expect("inflight lock");
        *guard -= 1;
        self.inflight_cv.notify_one();
        drop(guard);

        result
    }
}

// ---------------------------------------------------------------------------
// Protocol parsers
// ---------------------------------------------------------------------------

/// One `<robot>: subtask` assignment extracted from assigner output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub robot: EntityId,
    pub subtask: String,
}

fn strip_enumeration(s: &str) -> &str {
    s.trim_start_matches(|c: char| {
        c.is_ascii_digit() || c == '.' || c == ')' || c == '-' || c == '*' || c.is_whitespace()
    })
}

fn assignment_from_line(scene: &Scene, line: &str) -> Option<Result<Assignment, String>> {
    let (lhs, rhs) = line.split_once(':')?;
    let rhs = rhs.trim();
    if rhs.is_empty() {
        return None;
    }
    let candidate = crate::util::normalize_token(strip_enumeration(lhs));
    if candidate.is_empty() || candidate.len() > 48 || candidate.contains('(') {
        return None;
    }
    match scene.lookup(&candidate) {
        Some(id) if scene.robot_info(id).is_some() => Some(Ok(Assignment {
            robot: id,
            subtask: rhs.to_string(),
        })),
        _ => Some(Err(candidate)),
    }
}

/// Extract the last `<robot>: subtask` line (assigner replies usually end
/// with the decision). Robot names resolve case-insensitively, with angle
/// brackets and list numbering optional.
pub fn parse_assignment(scene: &Scene, text: &str) -> Result<Assignment, BackendError> {
    parse_assignment_inner(scene, text, true)
}

/// Like [`parse_assignment`] but takes the *first* matching line — the next
/// subtask when the assigner emits a whole numbered plan.
pub fn parse_first_assignment(scene: &Scene, text: &str) -> Result<Assignment, BackendError> {
    parse_assignment_inner(scene, text, false)
}

fn parse_assignment_inner(
    scene: &Scene,
    text: &str,
    last: bool,
) -> Result<Assignment, BackendError> {
    let mut unknown: Option<String> = None;
    let lines: Vec<&str> = if last {
        text.lines().rev().collect()
    } else {
        text.lines().collect()
    };
    for line in lines {
        match assignment_from_line(scene, line) {
            Some(Ok(assignment)) => return Ok(assignment),
            Some(Err(candidate)) if last || unknown.is_none() => {
                unknown = Some(candidate);
            }
            _ => {}
        }
    }
    match unknown {
        Some(name) => Err(BackendError::UnknownRobot(name)),
        None => Err(BackendError::Parse(format!(
            "no `<robot>: subtask` line in {text:?}"
        ))),
    }
}

/// Executor reply interpretation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExecutorChoice {
    /// A feasible action's rendered form appeared in the reply.
    Action(Action),
    /// The reply declares waiting.
    Wait,
    /// Nothing usable; callers may re-query, then degrade to a wait.
    NoMatch,
}

/// Normalize completion text for substring matching against rendered
/// actions: lowercase, whitespace inside `<...>` becomes `_`, runs of
/// whitespace outside collapse to single spaces.
fn normalize_for_matching(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_brackets = false;
    let mut pending_gap = false;
    for ch in text.chars() {
        match ch {
            '<' => {
                if pending_gap && !out.is_empty() {
                    out.push(' ');
                }
                pending_gap = false;
                in_brackets = true;
                out.push('<');
            }
            '>' => {
                pending_gap = false;
                in_brackets = false;
                out.push('>');
            }
            c if c.is_whitespace() => pending_gap = true,
            c => {
                if pending_gap && !out.is_empty() {
                    out.push(if in_brackets { '_' } else { ' ' });
                }
                pending_gap = false;
                for lc in c.to_lowercase() {
                    out.push(lc);
                }
            }
        }
    }
    out
}

use crate::util::contains_word;

/// Match executor output against the feasible-action list. The earliest
/// rendered form appearing in the text wins; anything outside the list is
/// never returned, so hallucinated actions cannot reach the engine.
pub fn parse_executor_choice(
    scene: &Scene,
    text: &str,
    feasible: &[Action],
) -> ExecutorChoice {
    let normalized = normalize_for_matching(text);
    let mut best: Option<(usize, &Action)> = None;
    for action in feasible {
        let rendered = render_action(scene, action);
        if let Some(offset) = normalized.find(&rendered) {
            let better = match best {
                Some((at, _)) => offset < at,
                None => true,
            };
            if better {
                best = Some((offset, action));
            }
        }
    }
    if let Some((_, action)) = best {
        return ExecutorChoice::Action(action.clone());
    }
    if contains_word(&normalized, "wait") {
        return ExecutorChoice::Wait;
    }
    ExecutorChoice::NoMatch
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::Verb;
    use crate::tasks::SceneSpec;
    use crate::world::build_scene;

    fn state() -> crate::world::WorldState {
        let spec: SceneSpec = serde_json::from_str(
            r#"{
              "schema": 1,
              "name": "proto",
              "rooms": ["living_room"],
              "entities": [
                {"id": "coffee_table", "kind": "surface", "room": "living_room", "height": "low"},
                {"id": "apple", "kind": "object", "on": "coffee_table"}
              ],
              "robots": [
                {"id": "robotic_dog", "archetype": "robotic_dog", "room": "living_room"},
                {"id": "quadrotor", "archetype": "quadrotor", "room": "living_room", "basket": "basket"}
              ]
            }"#,
        )
        .unwrap();
        build_scene(&spec).unwrap()
    }

    #[test]
    fn scripted_backend_replays_then_errors() {
        let backend = ScriptedBackend::new(vec!["r1".into(), "r2".into()]);
        let params = CompletionParams::default();
        assert_eq!(backend.complete(&[], &params).unwrap(), "r1");
        assert_eq!(backend.complete(&[], &params).unwrap(), "r2");
        assert!(matches!(
            backend.complete(&[], &params),
            Err(BackendError::ScriptExhausted(2))
        ));
    }

    #[test]
    fn assignment_parses_bracketed_names_case_insensitively() {
        let s = state();
        let scene = s.scene();
        let a = parse_assignment(
            scene,
            "<Robotic Dog>: pick up the <apple> and give it to <quadrotor>",
        )
        .unwrap();
        assert_eq!(scene.name_of(a.robot), "robotic_dog");
        assert_eq!(a.subtask, "pick up the <apple> and give it to <quadrotor>");
    }

    #[test]
    fn assignment_takes_last_line_and_first_variant_takes_first() {
        let s = state();
        let scene = s.scene();
        let text = "1. <robotic dog>: pick up the <apple>\n2. <quadrotor>: transport the <apple>";
        let last = parse_assignment(scene, text).unwrap();
        assert_eq!(scene.name_of(last.robot), "quadrotor");
        let first = parse_first_assignment(scene, text).unwrap();
        assert_eq!(scene.name_of(first.robot), "robotic_dog");
    }

    #[test]
    fn assignment_error_cases() {
        let s = state();
        let scene = s.scene();
        assert!(matches!(
            parse_assignment(scene, "I think we are done."),
            Err(BackendError::Parse(_))
        ));
        assert!(matches!(
            parse_assignment(scene, "<submarine>: dive"),
            Err(BackendError::UnknownRobot(name)) if name == "submarine"
        ));
    }

    #[test]
    fn executor_choice_matches_feasible_only() {
        let s = state();
        let scene = s.scene().clone();
        let apple = scene.lookup("apple").unwrap();
        let table = scene.lookup("coffee_table").unwrap();
        let feasible = vec![
            Action::unary(Verb::Grab, apple),
            Action::unary(Verb::Movetowards, table),
        ];
        // Earliest mention wins.
        let choice = parse_executor_choice(
            &scene,
            "[movetowards] <coffee_table> then [grab] <apple>",
            &feasible,
        );
        assert_eq!(choice, ExecutorChoice::Action(feasible[1].clone()));
        // Spacing inside brackets is tolerated.
        let choice = parse_executor_choice(&scene, "I choose [grab] <Apple> now", &feasible);
        assert_eq!(choice, ExecutorChoice::Action(feasible[0].clone()));
        // Hallucinated action outside the list never leaks through.
        let choice = parse_executor_choice(&scene, "[takeoff_from] <coffee_table>", &feasible);
        assert_eq!(choice, ExecutorChoice::NoMatch);
        // Declared waits are recognized.
        let choice = parse_executor_choice(&scene, "I will wait for now.", &feasible);
        assert_eq!(choice, ExecutorChoice::Wait);
        assert_eq!(
            parse_executor_choice(&scene, "", &feasible),
            ExecutorChoice::NoMatch
        );
    }
}
