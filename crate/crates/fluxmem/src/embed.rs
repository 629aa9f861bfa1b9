//! Embedding providers and the cosine primitive.
//!
//! The default provider is a deterministic feature-hashing embedder so
//! the whole engine runs offline and reproducibly. An HTTP provider can
//! be selected through `FLUXMEM_EMBED_URL` / `FLUXMEM_EMBED_KEY`.

use crate::error::{Error, Result};
use crate::text::tokenize;

/// Hash seed of the fallback embedder. Part of the public contract:
/// snapshots embed vectors produced under this seed and must stay
/// portable across platforms and releases.
pub const EMBED_HASH_SEED: u64 = 0x464c_5558_4d45_4d31;

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Env var naming the HTTP embeddings endpoint.
pub const EMBED_URL_VAR: &str = "FLUXMEM_EMBED_URL";
/// Env var holding the bearer key for the embeddings endpoint.
pub const EMBED_KEY_VAR: &str = "FLUXMEM_EMBED_KEY";

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    /// Unit-norm embedding of `text`; all-zero when `text` has no tokens.
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Deterministic bag-of-tokens hashing embedder.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

fn fnv1a64(token: &str) -> u64 {
    let mut hash = EMBED_HASH_SEED;
    for byte in token.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut vector = vec![0.0; self.dim];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Ok(vector);
        }
        for token in &tokens {
            let bucket = (fnv1a64(token) % self.dim as u64) as usize;
            vector[bucket] += 1.0;
        }
        l2_normalize(&mut vector);
        Ok(vector)
    }
}

fn l2_normalize(vector: &mut [f64]) {
    let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in vector.iter_mut() {
            *v /= norm;
        }
    }
}

/// Cosine similarity. Zero-norm inputs compare as 0 so empty pages flow
/// through retrieval without poisoning rankings.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { left: a.len(), right: b.len() });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// HTTP embedding provider speaking a minimal embeddings protocol:
/// POST `{"input": text}`, response either `{"embedding": [..]}` or
/// OpenAI-style `{"data": [{"embedding": [..]}]}`.
pub struct HttpEmbedder {
    url: String,
    key: Option<String>,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, key: Option<String>, dim: usize) -> Self {
        Self { url: url.into(), key, dim }
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let body = serde_json::json!({ "input": text });
        let mut request = ureq::post(&self.url);
        if let Some(key) = &self.key {
            request = request.header("authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| Error::ProviderUnreachable(format!("{}: {e}", self.url)))?;
        let payload: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::ProviderUnreachable(format!("{}: {e}", self.url)))?;
        let raw = payload
            .get("embedding")
            .or_else(|| payload.pointer("/data/0/embedding"))
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::MalformedResponse {
                reason: "no embedding array in response".into(),
                payload: payload.to_string(),
            })?;
        let mut vector: Vec<f64> = raw.iter().filter_map(|v| v.as_f64()).collect();
        if vector.len() != raw.len() || vector.len() != self.dim {
            return Err(Error::MalformedResponse {
                reason: format!("expected {} floats, got {}", self.dim, raw.len()),
                payload: payload.to_string(),
            });
        }
        l2_normalize(&mut vector);
        Ok(vector)
    }
}

/// Select the embedder from the environment: HTTP when
/// `FLUXMEM_EMBED_URL` is set, otherwise the deterministic fallback.
pub fn embedder_from_env(dim: usize) -> Box<dyn Embedder> {
    match std::env::var(EMBED_URL_VAR) {
        Ok(url) if !url.is_empty() => {
            let key = std::env::var(EMBED_KEY_VAR).ok();
            Box::new(HttpEmbedder::new(url, key, dim))
        }
        _ => Box::new(HashEmbedder::new(dim)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_zero_vector() {
        let e = HashEmbedder::new(16);
        assert_eq!(e.embed("").unwrap(), vec![0.0; 16]);
        assert_eq!(e.embed(" .,!").unwrap(), vec![0.0; 16]);
    }

    #[test]
    fn nonempty_text_is_unit_norm() {
        let e = HashEmbedder::new(384);
        let v = e.embed("the quick brown fox").unwrap();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bag_of_tokens_ignores_order() {
        let e = HashEmbedder::new(128);
        assert_eq!(e.embed("cat dog").unwrap(), e.embed("dog cat").unwrap());
    }

    #[test]
    fn hash_seed_is_stable() {
        // Frozen values: changing the seed or hash breaks snapshot portability.
        assert_eq!(fnv1a64("memory"), 0x64ea_77c3_1e3b_60aa);
        assert_eq!(fnv1a64("alice"), 0xba15_4aad_37e7_862b);
    }

    #[test]
    fn cosine_basics() {
        let v = vec![0.6, 0.8];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&v, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(cosine(&v, &[1.0]).is_err());
    }

    #[test]
    fn cosine_symmetry() {
        let a = vec![0.3, -0.5, 0.2];
        let b = vec![1.0, 2.0, -0.7];
        assert_eq!(cosine(&a, &b).unwrap(), cosine(&b, &a).unwrap());
    }

    #[test]
    fn http_embedder_unreachable_errors() {
        let e = HttpEmbedder::new("http://127.0.0.1:1/v1/embeddings", None, 8);
        match e.embed("hi") {
            Err(Error::ProviderUnreachable(_)) => {}
            other => panic!("expected ProviderUnreachable, got {other:?}"),
        }
    }
}
