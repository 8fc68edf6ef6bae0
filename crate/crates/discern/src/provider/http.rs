//! HTTP transport: one upstream POST plus up to `max_retries` retries on
//! transient failures (429, 5xx, network errors) with exponential backoff.

use std::sync::atomic::Ordering;

use super::{ChatRequest, ChatResponse, Provider, ProviderConfig, ProviderError, Semaphore};

pub(super) fn complete(
    provider: &Provider,
    cfg: &ProviderConfig,
    agent: &ureq::Agent,
    semaphore: &Semaphore,
    req: &ChatRequest,
) -> Result<ChatResponse, ProviderError> {
    provider
        .stats
        .upstream_calls
        .fetch_add(1, Ordering::Relaxed);

    let api_key = if cfg.api_key_env.is_empty() {
        None
    } else {
        match std::env::var(&cfg.api_key_env) {
            Ok(k) => Some(k),
            Err(_) => return Err(ProviderError::MissingApiKey(cfg.api_key_env.clone())),
        }
    };

    let url = format!("{}/v1/chat/completions", cfg.base_url.trim_end_matches('/'));
    let mut messages = Vec::new();
    if let Some(system) = &req.system {
        messages.push(serde_json::json!({"role": "system", "content": system}));
    }
    messages.push(serde_json::json!({"role": "user", "content": req.user}));
    let body = serde_json::json!({
        "model": req.model,
        "messages": messages,
        "temperature": req.temperature,
    })
    .to_string();

    let mut attempt = 0u32;
    loop {
        attempt += 1;
        provider.stats.http_attempts.fetch_add(1, Ordering::Relaxed);
        let result = {
            let _permit = semaphore.acquire();
            let mut call = agent.post(&url).set("Content-Type", "application/json");
            if let Some(key) = &api_key {
                call = call.set("Authorization", &format!("Bearer {key}"));
            }
            call.send_string(&body)
        };

        let error = match result {
            Ok(resp) => return parse_body(resp),
            Err(ureq::Error::Status(status, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                match status {
                    401 | 403 => return Err(ProviderError::Auth { status }),
                    429 | 500..=599 => ProviderError::Http { status, body: text },
                    _ => return Err(ProviderError::Http { status, body: text }),
                }
            }
            Err(ureq::Error::Transport(t)) => ProviderError::Network(t.to_string()),
        };

        if attempt > cfg.max_retries {
            return Err(error);
        }
        provider.stats.retries.fetch_add(1, Ordering::Relaxed);
        let backoff = cfg
            .initial_backoff_ms
            .saturating_mul(1 << (attempt - 1).min(10));
        std::thread::sleep(std::time::Duration::from_millis(backoff));
    }
}

fn parse_body(resp: ureq::Response) -> Result<ChatResponse, ProviderError> {
    let text = resp
        .into_string()
        .map_err(|e| ProviderError::Network(e.to_string()))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
    let content = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| {
            ProviderError::MalformedResponse("missing choices[0].message.content".to_string())
        })?
        .to_string();
    let mut meta = serde_json::Map::new();
    for key in ["model", "usage", "id"] {
        if let Some(val) = v.get(key) {
            if !val.is_null() {
                meta.insert(key.to_string(), val.clone());
            }
        }
    }
    if let Some(fr) = v["choices"][0].get("finish_reason") {
        if !fr.is_null() {
            meta.insert("finish_reason".to_string(), fr.clone());
        }
    }
    Ok(ChatResponse {
        text: content,
        provider_meta: meta,
        from_cache: false,
    })
}
