use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChatRequest, Completion, Transport, TransportError};

/// One entry of a [`MockSpec::Rules`] table. Every condition that is set
/// must hold; the first matching rule answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    /// Substring of any message of the prompt.
    #[serde(default)]
    pub contains: Option<String>,
    /// Substring of the final message of the prompt.
    #[serde(default)]
    pub last_contains: Option<String>,
    pub reply: String,
}

impl MockRule {
    fn matches(&self, req: &ChatRequest) -> bool {
        let any = self
            .contains
            .as_ref()
            .is_none_or(|s| req.messages.iter().any(|m| m.content.contains(s.as_str())));
        let last = self.last_contains.as_ref().is_none_or(|s| {
            req.messages
                .last()
                .is_some_and(|m| m.content.contains(s.as_str()))
        });
        any && last
    }
}

/// Config-level description of an offline stand-in for the endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockSpec {
    /// Replies in order, wrapping around.
    Cycle { replies: Vec<String> },
    /// Uniform draws from `choices` using a seeded generator.
    Seeded { choices: Vec<String>, seed: u64 },
    /// First matching rule wins, `default` otherwise.
    Rules { rules: Vec<MockRule>, default: String },
}

pub type MockReply = Result<String, TransportError>;

type ReplyFn = dyn Fn(&ChatRequest) -> MockReply + Send + Sync;

enum Behavior {
    Queue(Mutex<VecDeque<MockReply>>),
    Func(Box<ReplyFn>),
    Seeded(Box<Mutex<(ChaCha8Rng, Vec<String>)>>),
}

/// Deterministic in-process transport. Counts every call it receives, which
/// stands in for network traffic in tests.
pub struct MockTransport {
    behavior: Behavior,
    calls: AtomicU64,
    sent: Mutex<Vec<ChatRequest>>,
}

impl std::fmt::Debug for MockTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockTransport")
            .field("calls", &self.calls())
            .finish_non_exhaustive()
    }
}

impl MockTransport {
    fn with(behavior: Behavior) -> Self {
        MockTransport {
            behavior,
            calls: AtomicU64::new(0),
            sent: Mutex::new(Vec::new()),
        }
    }

    /// Serves `replies` in order; the last one repeats once the queue is
    /// drained.
    pub fn queue(replies: Vec<MockReply>) -> Self {
        Self::with(Behavior::Queue(Mutex::new(replies.into())))
    }

    pub fn fixed(reply: impl Into<String>) -> Self {
        Self::queue(vec![Ok(reply.into())])
    }

    pub fn from_fn(f: impl Fn(&ChatRequest) -> MockReply + Send + Sync + 'static) -> Self {
        Self::with(Behavior::Func(Box::new(f)))
    }

    pub fn from_spec(spec: MockSpec) -> Self {
        match spec {
            MockSpec::Cycle { replies } => {
                let counter = AtomicU64::new(0);
                Self::from_fn(move |_| {
                    if replies.is_empty() {
                        return Ok(String::new());
                    }
                    let i = counter.fetch_add(1, Ordering::SeqCst) as usize;
                    Ok(replies[i % replies.len()].clone())
                })
            }
            MockSpec::Seeded { choices, seed } => Self::with(Behavior::Seeded(Box::new(Mutex::new((
                ChaCha8Rng::seed_from_u64(seed),
                choices,
            ))))),
            MockSpec::Rules { rules, default } => Self::from_fn(move |req| {
                Ok(rules
                    .iter()
                    .find(|r| r.matches(req))
                    .map(|r| r.reply.clone())
                    .unwrap_or_else(|| default.clone()))
            }),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every request received so far, in arrival order.
    pub fn sent(&self) -> Vec<ChatRequest> {
        self.sent.lock().expect("mock lock").clone()
    }
}

impl Transport for MockTransport {
    fn send(&self, req: &ChatRequest) -> Result<Completion, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.sent.lock().expect("mock lock").push(req.clone());
        let text = match &self.behavior {
            Behavior::Queue(q) => {
                let mut q = q.lock().expect("mock lock");
                if q.len() > 1 {
                    q.pop_front().expect("nonempty")
                } else {
                    q.front()
                        .cloned()
                        .unwrap_or_else(|| Err(TransportError::Malformed("empty mock".into())))
                }
            }
            Behavior::Func(f) => f(req),
            Behavior::Seeded(state) => {
                let mut guard = state.lock().expect("mock lock");
                let (rng, choices) = &mut *guard;
                if choices.is_empty() {
                    Ok(String::new())
                } else {
                    let i = rng.gen_range(0..choices.len());
                    Ok(choices[i].clone())
                }
            }
        }?;
        Ok(Completion {
            prompt_tokens: req.messages.iter().map(|m| m.content.len() as u64 / 4).sum(),
            completion_tokens: text.len() as u64 / 4,
            text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatMessage, Role};

    fn req(last: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![
                ChatMessage::new(Role::System, "You are a critic"),
                ChatMessage::new(Role::User, last),
            ],
            temperature: 0.0,
            max_tokens: 8,
            seed: None,
        }
    }

    #[test]
    fn queue_repeats_last() {
        let m = MockTransport::queue(vec![
            Err(TransportError::Retryable("429".into())),
            Ok("fine".into()),
        ]);
        assert!(m.send(&req("x")).is_err());
        assert_eq!(m.send(&req("x")).unwrap().text, "fine");
        assert_eq!(m.send(&req("x")).unwrap().text, "fine");
        assert_eq!(m.calls(), 3);
    }

    #[test]
    fn rules_match_in_order() {
        let m = MockTransport::from_spec(MockSpec::Rules {
            rules: vec![
                MockRule {
                    contains: Some("critic".into()),
                    last_contains: Some("better".into()),
                    reply: "Solved".into(),
                },
                MockRule {
                    contains: Some("critic".into()),
                    last_contains: None,
                    reply: "Ongoing".into(),
                },
            ],
            default: "?".into(),
        });
        assert_eq!(m.send(&req("I feel better")).unwrap().text, "Solved");
        assert_eq!(m.send(&req("still sad")).unwrap().text, "Ongoing");
    }

    #[test]
    fn seeded_is_reproducible() {
        let spec = MockSpec::Seeded {
            choices: vec!["A".into(), "B".into(), "C".into()],
            seed: 4,
        };
        let draw = |spec: &MockSpec| {
            let m = MockTransport::from_spec(spec.clone());
            (0..10).map(|_| m.send(&req("x")).unwrap().text).collect::<Vec<_>>()
        };
        assert_eq!(draw(&spec), draw(&spec));
    }

    #[test]
    fn spec_json_shape() {
        let spec: MockSpec =
            serde_json::from_str(r#"{"kind":"cycle","replies":["A","B"]}"#).unwrap();
        let m = MockTransport::from_spec(spec);
        assert_eq!(m.send(&req("x")).unwrap().text, "A");
        assert_eq!(m.send(&req("x")).unwrap().text, "B");
        assert_eq!(m.send(&req("x")).unwrap().text, "A");
    }
}
