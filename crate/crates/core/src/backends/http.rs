//! HTTP backend: POSTs each request as JSON and expects a line-protocol
//! response body.

use std::time::Duration;

use serde::de::DeserializeOwned;

use super::{BackendError, Deidentifier, Request, Response};
use crate::span::Span;

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
}

impl HttpTransport {
    pub fn new(url: &str, timeout: Duration) -> HttpTransport {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        HttpTransport {
            agent,
            url: url.to_string(),
        }
    }

    pub fn call<T: DeserializeOwned>(&self, request: &Request) -> Result<T, BackendError> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(request)
            .map_err(|e| BackendError::Http(e.to_string()))?;
        resp.body_mut()
            .read_json::<T>()
            .map_err(|e| BackendError::Protocol(format!("invalid response body for `{}`: {e}", request.id)))
    }
}

pub struct HttpBackend {
    transport: HttpTransport,
}

impl HttpBackend {
    pub fn new(url: &str, timeout: Duration) -> HttpBackend {
        HttpBackend {
            transport: HttpTransport::new(url, timeout),
        }
    }
}

impl Deidentifier for HttpBackend {
    fn predict(&self, request: &Request) -> Result<Vec<Span>, BackendError> {
        let resp: Response = self.transport.call(request)?;
        if resp.id != request.id {
            return Err(BackendError::Protocol(format!(
                "response id `{}` does not match request `{}`",
                resp.id, request.id
            )));
        }
        if let Some(e) = resp.error {
            return Err(BackendError::Protocol(format!("server reported: {e}")));
        }
        Ok(resp.spans)
    }
}
