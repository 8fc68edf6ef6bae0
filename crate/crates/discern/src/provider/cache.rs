//! Deterministic response cache.
//!
//! One JSON file per key under the cache directory; the filename is the
//! hex of an FNV-1a 128 hash over a length-prefixed encoding of every
//! request field (model, system, user, temperature bits, tag), so no two
//! distinct requests share a key. Writes go to a temp file in the same
//! directory and are renamed into place. A file that fails to parse is
//! treated as a miss with a warning and then overwritten.

use std::path::Path;
use std::sync::atomic::Ordering;

use serde::{Deserialize, Serialize};

use super::{http, ChatRequest, ChatResponse, Provider, ProviderConfig, ProviderError, Semaphore};

const FNV128_OFFSET: u128 = 0x6c62272e07bb014262b821756295c58d;
const FNV128_PRIME: u128 = 0x0000000001000000000000000000013b;

fn fnv1a_128(bytes: &[u8]) -> u128 {
    let mut h = FNV128_OFFSET;
    for &b in bytes {
        h ^= b as u128;
        h = h.wrapping_mul(FNV128_PRIME);
    }
    h
}

fn push_field(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(bytes);
}

/// Stable cache key for a request; 32 hex characters.
pub fn cache_key(req: &ChatRequest) -> String {
    let mut pre = Vec::new();
    push_field(&mut pre, req.model.as_bytes());
    match &req.system {
        None => pre.push(0),
        Some(s) => {
            pre.push(1);
            push_field(&mut pre, s.as_bytes());
        }
    }
    push_field(&mut pre, req.user.as_bytes());
    pre.extend_from_slice(&req.temperature.to_bits().to_le_bytes());
    push_field(&mut pre, req.tag.as_bytes());
    format!("{:032x}", fnv1a_128(&pre))
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    request: ChatRequest,
    text: String,
    provider_meta: serde_json::Map<String, serde_json::Value>,
}

pub(super) fn cached_complete(
    provider: &Provider,
    cfg: &ProviderConfig,
    agent: &ureq::Agent,
    semaphore: &Semaphore,
    req: &ChatRequest,
    cache_dir: &Path,
) -> Result<ChatResponse, ProviderError> {
    std::fs::create_dir_all(cache_dir)?;
    let path = cache_dir.join(format!("{}.json", cache_key(req)));

    if let Ok(bytes) = std::fs::read(&path) {
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) => {
                provider.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(ChatResponse {
                    text: entry.text,
                    provider_meta: entry.provider_meta,
                    from_cache: true,
                });
            }
            Err(e) => {
                provider.warn(format!(
                    "cache entry {} is corrupt ({e}); refetching",
                    path.display()
                ));
            }
        }
    }

    let resp = http::complete(provider, cfg, agent, semaphore, req)?;
    let entry = CacheEntry {
        request: req.clone(),
        text: resp.text.clone(),
        provider_meta: resp.provider_meta.clone(),
    };
    write_atomic(
        &path,
        &serde_json::to_vec_pretty(&entry).expect("serialize cache"),
    )?;
    Ok(resp)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static SEQ: AtomicU64 = AtomicU64::new(0);
    let dir = path.parent().expect("cache path has a parent");
    let tmp = dir.join(format!(
        ".tmp-{}-{}",
        std::process::id(),
        SEQ.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
