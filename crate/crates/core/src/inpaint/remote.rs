//! HTTP client for inpainting servers speaking the `/v1/inpaint` protocol.
//!
//! Transport failures, timeouts and 5xx responses are retried up to
//! `retries` times. 4xx responses, malformed bodies and images of the wrong
//! size are protocol errors and are not retried.

use std::time::Duration;

use super::wire::{WireError, WireRequest, WireResponse, INPAINT_PATH};
use super::{InpaintBackend, InpaintRequest, InpaintResponse};
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_RETRIES: u32 = 2;
const BODY_LIMIT: u64 = 256 * 1024 * 1024;

#[derive(Debug)]
pub struct RemoteBackend {
    url: String,
    retries: u32,
    agent: ureq::Agent,
}

impl RemoteBackend {
    /// `endpoint` is the server's base URL, e.g. `http://127.0.0.1:7860`.
    pub fn new(endpoint: &str, timeout: Duration, retries: u32) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}{}", endpoint.trim_end_matches('/'), INPAINT_PATH);
        Self { url, retries, agent }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, body: &str) -> Result<WireResponse> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(BODY_LIMIT)
            .read_to_string()
            .map_err(|e| Error::Transport(format!("reading response: {e}")))?;
        let server_message = || {
            serde_json::from_str::<WireError>(&text)
                .map(|e| e.error)
                .unwrap_or_else(|_| text.chars().take(200).collect())
        };
        match status {
            200 => serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("malformed response: {e}"))),
            400..=499 => Err(Error::Protocol(format!("server returned {status}: {}", server_message()))),
            500..=599 => Err(Error::Transport(format!("server returned {status}: {}", server_message()))),
            _ => Err(Error::Protocol(format!("unexpected status {status}"))),
        }
    }
}

impl InpaintBackend for RemoteBackend {
    fn inpaint(&self, request: &InpaintRequest) -> Result<InpaintResponse> {
        request.validate()?;
        let body = serde_json::to_string(&WireRequest::from_request(request)?)?;
        let mut attempt = 0;
        let wire = loop {
            match self.attempt(&body) {
                Ok(w) => break w,
                Err(e) if e.is_retryable() && attempt < self.retries => {
                    attempt += 1;
                    log::warn!("inpaint request to {} failed ({e}); retry {attempt}/{}", self.url, self.retries);
                }
                Err(e) => return Err(e),
            }
        };
        let image = wire.into_image()?;
        if (image.width, image.height) != (request.image.width, request.image.height) {
            return Err(Error::Protocol(format!(
                "response is {}x{}, request was {}x{}",
                image.width, image.height, request.image.width, request.image.height
            )));
        }
        Ok(InpaintResponse { image })
    }

    fn describe(&self) -> String {
        self.url.clone()
    }
}
