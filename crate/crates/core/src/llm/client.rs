use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CacheKey, ChatRequest, LlmError, ResponseCache, Transport, TransportError, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_delay_ms: u64,
    pub max_delay_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            initial_delay_ms: 500,
            max_delay_ms: 8_000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self.initial_delay_ms as f64 * self.multiplier.powi(attempt as i32);
        Duration::from_millis(ms.min(self.max_delay_ms as f64) as u64)
    }
}

/// Counting gate bounding the number of requests in flight.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(slots: usize) -> Self {
        Gate {
            free: Mutex::new(slots.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Shareable chat-completions client.
pub struct LlmClient {
    transport: Arc<dyn Transport>,
    cache: Option<Arc<ResponseCache>>,
    retry: RetryPolicy,
    usage: Mutex<Usage>,
    gate: Gate,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("retry", &self.retry)
            .field("usage", &self.usage())
            .finish_non_exhaustive()
    }
}

impl LlmClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        LlmClient {
            transport,
            cache: None,
            retry: RetryPolicy::default(),
            usage: Mutex::new(Usage::default()),
            gate: Gate::new(8),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, slots: usize) -> Self {
        self.gate = Gate::new(slots);
        self
    }

    pub fn usage(&self) -> Usage {
        *self.usage.lock().expect("usage lock")
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_deref()
    }

    /// Returns the text of the first choice. Cache hits skip the transport;
    /// transient failures are retried with exponential backoff.
    pub fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let key = self.cache.as_ref().map(|_| CacheKey::of(req));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(text) = cache.get(key) {
                self.usage.lock().expect("usage lock").cache_hits += 1;
                return Ok(text);
            }
        }
        let mut attempt = 0;
        let completion = loop {
            let result = {
                let _slot = self.gate.acquire();
                self.transport.send(req)
            };
            match result {
                Ok(c) => break c,
                Err(TransportError::Retryable(message)) => {
                    if attempt >= self.retry.max_retries {
                        return Err(LlmError::Exhausted {
                            attempts: attempt + 1,
                            message,
                        });
                    }
                    let delay = self.retry.delay(attempt);
                    log::debug!("transient LLM failure ({message}); retrying in {delay:?}");
                    self.usage.lock().expect("usage lock").retries += 1;
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(other) => return Err(other.into()),
            }
        };
        {
            let mut usage = self.usage.lock().expect("usage lock");
            usage.requests += 1;
            usage.prompt_tokens += completion.prompt_tokens;
            usage.completion_tokens += completion.completion_tokens;
        }
        if let (Some(cache), Some(key)) = (&self.cache, key) {
            cache.insert(key, &completion.text)?;
        }
        Ok(completion.text)
    }
}
