use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};

use super::{ChatProvider, ChatRequest, Embedder, LlmError};
use crate::index::EmbeddingVector;

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Counting semaphore for bounding concurrent provider calls.
pub struct Semaphore {
    available: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a> {
    sem: &'a Semaphore,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Semaphore {
            available: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.cv.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
        Permit { sem: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.sem.available.lock().expect("semaphore poisoned") += 1;
        self.sem.cv.notify_one();
    }
}

/// Named chat providers plus an optional embedder, shared across threads,
/// with a global cap on in-flight calls.
#[derive(Clone)]
pub struct Gateway {
    chat: BTreeMap<String, Arc<dyn ChatProvider>>,
    embedder: Option<Arc<dyn Embedder>>,
    permits: Arc<Semaphore>,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_IN_FLIGHT)
    }
}

impl Gateway {
    pub fn new(max_in_flight: usize) -> Self {
        Gateway {
            chat: BTreeMap::new(),
            embedder: None,
            permits: Arc::new(Semaphore::new(max_in_flight)),
        }
    }

    /// Registers a provider under its own id; a later provider with the same id replaces it.
    pub fn with_chat(mut self, provider: Arc<dyn ChatProvider>) -> Self {
        self.chat.insert(provider.id().to_string(), provider);
        self
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn provider_ids(&self) -> impl Iterator<Item = &str> {
        self.chat.keys().map(String::as_str)
    }

    pub fn has_provider(&self, id: &str) -> bool {
        self.chat.contains_key(id)
    }

    pub fn chat(&self, provider_id: &str, request: &ChatRequest) -> Result<String, LlmError> {
        let provider = self
            .chat
            .get(provider_id)
            .ok_or_else(|| LlmError::UnknownProvider(provider_id.to_string()))?;
        let _permit = self.permits.acquire();
        provider.chat(request)
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        let embedder = self
            .embedder
            .as_ref()
            .ok_or_else(|| LlmError::UnknownProvider("embedder".to_string()))?;
        let _permit = self.permits.acquire();
        embedder.embed_text(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::thread;
    use std::time::Duration;

    struct Slow {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl ChatProvider for Slow {
        fn id(&self) -> &str {
            "slow"
        }

        fn chat(&self, _: &ChatRequest) -> Result<String, LlmError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            thread::sleep(Duration::from_millis(20));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok("ok".into())
        }
    }

    #[test]
    fn in_flight_calls_are_bounded() {
        let slow = Arc::new(Slow {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let gw = Gateway::new(2).with_chat(slow.clone());
        thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| gw.chat("slow", &ChatRequest::new("p", "slow")).unwrap());
            }
        });
        assert!(slow.peak.load(Ordering::SeqCst) <= 2);
        assert!(matches!(
            gw.chat("other", &ChatRequest::new("p", "other")),
            Err(LlmError::UnknownProvider(_))
        ));
    }
}
