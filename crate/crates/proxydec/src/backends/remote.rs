//! HTTP client for the remote logits wire protocol.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use reqwest::blocking::Client;
use reqwest::StatusCode;

use crate::backends::{wire, Backend, BackendDescriptor, BackendKind, Session};
use crate::core::{LogitVector, TokenId, Vocabulary};
use crate::{Error, Result};

pub struct RemoteBackend {
    name: String,
    base_url: String,
    vocabulary: Vocabulary,
    client: Client,
}

impl RemoteBackend {
    /// Connects and discovers the served vocabulary via `GET /v1/model`.
    pub fn connect(name: &str, base_url: &str) -> Result<Self> {
        let base_url = base_url.trim_end_matches('/').to_string();
        let client = Client::new();
        let info: wire::ModelInfo = client
            .get(format!("{base_url}/v1/model"))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| Error::SessionInit {
                backend: name.to_string(),
                message: format!("cannot reach remote model endpoint {base_url}: {e}"),
            })?;
        let vocabulary = Vocabulary::new(info.vocab_size, info.eos_ids, &info.name)?;
        Ok(Self { name: name.to_string(), base_url, vocabulary, client })
    }
}

impl Backend for RemoteBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: self.name.clone(),
            kind: BackendKind::Remote,
            vocabulary: self.vocabulary.clone(),
        }
    }

    fn open_session(&self, prompt: &[TokenId], conditioning: &[u8]) -> Result<Box<dyn Session>> {
        self.vocabulary.validate_ids(prompt)?;
        let body = wire::OpenSessionRequest {
            model: self.name.clone(),
            prompt: prompt.to_vec(),
            conditioning_b64: B64.encode(conditioning),
            vocab_size: Some(self.vocabulary.size),
        };
        let resp = self
            .client
            .post(format!("{}/v1/session", self.base_url))
            .json(&body)
            .send()
            .map_err(|e| Error::SessionInit {
                backend: self.name.clone(),
                message: e.to_string(),
            })?;
        if !resp.status().is_success() {
            return Err(Error::SessionInit {
                backend: self.name.clone(),
                message: format!("server returned {}", resp.status()),
            });
        }
        let opened: wire::OpenSessionResponse =
            resp.json().map_err(|e| Error::SessionInit {
                backend: self.name.clone(),
                message: format!("bad session response: {e}"),
            })?;
        Ok(Box::new(RemoteSession {
            backend_name: self.name.clone(),
            base_url: self.base_url.clone(),
            client: self.client.clone(),
            session_id: opened.session_id,
            context: prompt.to_vec(),
            steps: 0,
        }))
    }
}

pub struct RemoteSession {
    backend_name: String,
    base_url: String,
    client: Client,
    session_id: String,
    context: Vec<TokenId>,
    steps: usize,
}

impl Session for RemoteSession {
    fn backend_name(&self) -> &str {
        &self.backend_name
    }

    fn context(&self) -> &[TokenId] {
        &self.context
    }

    fn extend_and_score(&mut self, new_tokens: &[TokenId]) -> Result<LogitVector> {
        let step = self.steps;
        let unavailable = |message: String| Error::BackendUnavailable {
            backend: self.backend_name.clone(),
            step,
            message,
        };
        let body = wire::ExtendRequest {
            session_id: self.session_id.clone(),
            tokens: new_tokens.to_vec(),
        };
        let resp = self
            .client
            .post(format!("{}/v1/extend", self.base_url))
            .json(&body)
            .send()
            .map_err(|e| unavailable(e.to_string()))?;
        match resp.status() {
            s if s.is_success() => {}
            StatusCode::NOT_FOUND => return Err(unavailable("unknown session".into())),
            StatusCode::CONFLICT => {
                return Err(Error::VocabMismatch(format!(
                    "server rejected tokens for backend '{}'",
                    self.backend_name
                )))
            }
            s => return Err(unavailable(format!("server returned {s}"))),
        }
        let extended: wire::ExtendResponse =
            resp.json().map_err(|e| unavailable(format!("bad extend response: {e}")))?;
        self.context.extend_from_slice(new_tokens);
        self.steps += 1;
        wire::decode_logits(&extended.logits)
    }
}

impl Drop for RemoteSession {
    fn drop(&mut self) {
        // best-effort cleanup; the server also drops sessions on shutdown
        let _ = self
            .client
            .delete(format!("{}/v1/session/{}", self.base_url, self.session_id))
            .send();
    }
}
