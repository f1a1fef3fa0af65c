//! Completion backends used by the occupation classifier.
//!
//! All model traffic goes through [`CompletionBackend`]. Two implementations
//! ship: a deterministic [`MockBackend`] keyed on the task lines of a prompt,
//! and an [`HttpBackend`] speaking the chat-completions wire format.

mod http;
mod mock;

use std::path::PathBuf;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{ChatMessage, ChatRequest, ChatResponse, HttpBackend};
pub use mock::{MockBackend, MockRule, MockTableError};

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Result<Self, BackendError> {
        Self::with_params(prompt, 0.0, 512)
    }

    pub fn with_params(
        prompt: impl Into<String>,
        temperature: f64,
        max_output_tokens: u32,
    ) -> Result<Self, BackendError> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if !(temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {temperature} < 0"
            )));
        }
        Ok(Self {
            prompt,
            temperature,
            max_output_tokens,
        })
    }
}

/// Failure classes of a completion call.
///
/// `Transport`, `Timeout` and retryable `Status` codes (408, 429, 5xx) are
/// retried; everything else fails immediately.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed (HTTP {0})")]
    Auth(u16),
    #[error("request timed out")]
    Timeout,
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<BackendError>,
    },
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => {
                *status == 408 || *status == 429 || *status >= 500
            }
            _ => false,
        }
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError>;

    fn model_name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub model_name: String,
    pub endpoint: Option<String>,
    pub credentials_env_var: Option<String>,
    /// Total attempts per call, including the first.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    /// Rule table for the mock backend; the built-in rules are used when absent.
    pub mock_table: Option<PathBuf>,
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            model_name: "mock".into(),
            endpoint: None,
            credentials_env_var: None,
            max_attempts: 3,
            initial_backoff_ms: 1000,
            timeout_secs: 60,
            max_in_flight: 4,
            mock_table: None,
        }
    }
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.kind == BackendKind::Http {
            if self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                return Err(BackendError::Config(
                    "http backend requires an endpoint".into(),
                ));
            }
            if self
                .credentials_env_var
                .as_deref()
                .is_none_or(|e| e.trim().is_empty())
            {
                return Err(BackendError::Config(
                    "http backend requires credentials_env_var".into(),
                ));
            }
        }
        if self.max_attempts == 0 {
            return Err(BackendError::Config(
                "max_attempts must be at least 1".into(),
            ));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::Config(
                "max_in_flight must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Builds the backend described by `desc`, wrapped in its in-flight limiter.
pub fn build_backend(
    desc: &BackendDescriptor,
) -> Result<Limited<Box<dyn CompletionBackend>>, BackendError> {
    desc.validate()?;
    let inner: Box<dyn CompletionBackend> = match desc.kind {
        BackendKind::Mock => match &desc.mock_table {
            Some(p) => Box::new(
                MockBackend::from_path(p, &desc.model_name)
                    .map_err(|e| BackendError::Config(e.to_string()))?,
            ),
            None => Box::new(MockBackend::builtin()),
        },
        BackendKind::Http => Box::new(HttpBackend::new(desc)?),
    };
    Ok(Limited::new(inner, desc.max_in_flight))
}

/// Sends one prompt through `backend`.
pub fn complete(
    req: &CompletionRequest,
    backend: &dyn CompletionBackend,
) -> Result<String, BackendError> {
    backend.complete(req)
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }

    fn model_name(&self) -> &str {
        (**self).model_name()
    }
}

/// Caps the number of concurrent `complete` calls on the wrapped backend.
pub struct Limited<B> {
    inner: B,
    cap: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<B> Limited<B> {
    pub fn new(inner: B, cap: usize) -> Self {
        Self {
            inner,
            cap: cap.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

struct Permit<'a, B> {
    owner: &'a Limited<B>,
}

impl<B> Drop for Permit<'_, B> {
    fn drop(&mut self) {
        let mut n = self
            .owner
            .in_flight
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.owner.freed.notify_one();
    }
}

impl<B: CompletionBackend> CompletionBackend for Limited<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let _permit = {
            let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
            while *n >= self.cap {
                n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
            }
            *n += 1;
            Permit { owner: self }
        };
        tracing::debug!(
            model = self.inner.model_name(),
            est_prompt_tokens = req.prompt.len() / 4,
            "completion request"
        );
        self.inner.complete(req)
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::time::Duration;

    #[test]
    fn request_validation() {
        assert!(CompletionRequest::new("  ").is_err());
        assert!(CompletionRequest::with_params("x", -0.1, 10).is_err());
        let r = CompletionRequest::new("hello").unwrap();
        assert_eq!(r.temperature, 0.0);
    }

    #[test]
    fn descriptor_validation() {
        let mut d = BackendDescriptor {
            kind: BackendKind::Http,
            ..Default::default()
        };
        assert!(matches!(d.validate(), Err(BackendError::Config(_))));
        d.endpoint = Some("http://localhost:1/v1/chat/completions".into());
        assert!(matches!(d.validate(), Err(BackendError::Config(_))));
        d.credentials_env_var = Some("SOME_KEY".into());
        assert!(d.validate().is_ok());
        assert!(BackendDescriptor::default().validate().is_ok());
    }

    #[test]
    fn retryable_classes() {
        assert!(BackendError::Timeout.is_retryable());
        assert!(BackendError::Status {
            status: 503,
            body: String::new()
        }
        .is_retryable());
        assert!(BackendError::Status {
            status: 429,
            body: String::new()
        }
        .is_retryable());
        assert!(!BackendError::Status {
            status: 400,
            body: String::new()
        }
        .is_retryable());
        assert!(!BackendError::Auth(401).is_retryable());
        assert!(!BackendError::Malformed("x".into()).is_retryable());
    }

    struct Slow {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl CompletionBackend for Slow {
        fn complete(&self, _req: &CompletionRequest) -> Result<String, BackendError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(20));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok("ok".into())
        }

        fn model_name(&self) -> &str {
            "slow"
        }
    }

    #[test]
    fn limiter_bounds_parallelism() {
        let backend = Arc::new(Limited::new(
            Slow {
                current: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
            },
            2,
        ));
        let req = CompletionRequest::new("p").unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                let b = backend.clone();
                let r = req.clone();
                s.spawn(move || b.complete(&r).unwrap());
            }
        });
        let peak = backend.inner.peak.load(Ordering::SeqCst);
        assert!((1..=2).contains(&peak), "peak {peak}");
    }
}
