//! OpenAI-style `/chat/completions` adapter.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, GatewayError, GenerationRequest, ProviderConfig};

#[derive(Debug, Default)]
pub struct HttpBackend {
    _priv: (),
}

impl HttpBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

fn resolve_credential(cfg: &ProviderConfig) -> Result<String, GatewayError> {
    match std::env::var(&cfg.credential) {
        Ok(k) if !k.trim().is_empty() => Ok(k),
        _ => Err(GatewayError::Auth(format!("credential variable {} is not set", cfg.credential))),
    }
}

fn completions_url(endpoint: &str) -> String {
    let base = endpoint.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_string()
    } else {
        format!("{base}/chat/completions")
    }
}

pub(crate) fn request_body(cfg: &ProviderConfig, req: &GenerationRequest) -> Value {
    let mut body = json!({
        "model": cfg.model_id,
        "messages": req.messages,
        "temperature": req.temperature,
        "max_tokens": req.max_output,
    });
    if let Some(seed) = req.seed {
        body["seed"] = json!(seed);
    }
    body
}

fn classify(status: u16, body: String) -> GatewayError {
    match status {
        401 | 403 => GatewayError::Auth(format!("provider returned {status}")),
        429 => GatewayError::RateLimited(1),
        408 | 504 => GatewayError::Timeout(1),
        _ => GatewayError::Provider { status, body },
    }
}

impl ChatBackend for HttpBackend {
    fn send(&self, cfg: &ProviderConfig, req: &GenerationRequest) -> Result<String, GatewayError> {
        let key = resolve_credential(cfg)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .connect_timeout(cfg.timeout.min(Duration::from_secs(30)))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let resp =
            client.post(completions_url(&cfg.endpoint)).bearer_auth(key).json(&request_body(cfg, req)).send().map_err(
                |e| {
                    if e.is_timeout() {
                        GatewayError::Timeout(1)
                    } else {
                        GatewayError::Transport(e.to_string())
                    }
                },
            )?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify(status, text));
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Provider { status, body: format!("unparseable body: {e}") })?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Provider { status, body: "response has no choices[0].message.content".into() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatMessage;

    #[test]
    fn url_joining() {
        assert_eq!(completions_url("http://h/v1/"), "http://h/v1/chat/completions");
        assert_eq!(completions_url("http://h/v1/chat/completions"), "http://h/v1/chat/completions");
    }

    #[test]
    fn body_shape() {
        let cfg = ProviderConfig::default();
        let req = GenerationRequest::new(vec![ChatMessage::system("s")]).with_seed(Some(4));
        let b = request_body(&cfg, &req);
        assert_eq!(b["messages"][0]["role"], "system");
        assert_eq!(b["seed"], 4);
        assert_eq!(b["temperature"], 1.0);
    }

    #[test]
    fn status_classification() {
        assert!(matches!(classify(401, String::new()), GatewayError::Auth(_)));
        assert!(classify(429, String::new()).is_transient());
        assert!(classify(503, String::new()).is_transient());
        assert!(!classify(400, String::new()).is_transient());
    }
}
