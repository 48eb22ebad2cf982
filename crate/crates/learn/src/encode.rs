//! Text encoders turning instruction documents into fixed-size unit vectors.

use std::hash::Hasher;
use std::time::Duration;

use fnv::FnvHasher;
use ndarray::Array2;
use rayon::prelude::*;
use serde_json::json;

use mgdil_core::instruction::InstructionDoc;

use crate::data::Dataset;
use crate::LearnError;

pub const DEFAULT_DIM: usize = 4096;

pub trait TextEncoder: Sync {
    fn dim(&self) -> usize;

    /// A unit-norm vector of length [`TextEncoder::dim`].
    fn encode(&self, text: &str) -> Result<Vec<f64>, LearnError>;
}

/// Signed feature hashing of lowercase word unigrams and character
/// trigrams, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEncoder {
    pub dim: usize,
}

impl Default for HashingEncoder {
    fn default() -> Self {
        HashingEncoder { dim: DEFAULT_DIM }
    }
}

fn fnv(prefix: u8, token: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u8(prefix);
    h.write(token.as_bytes());
    h.finish()
}

impl HashingEncoder {
    pub fn new(dim: usize) -> Self {
        HashingEncoder { dim }
    }

    fn add(&self, v: &mut [f64], prefix: u8, token: &str) {
        let h = fnv(prefix, token);
        let bucket = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
}

impl TextEncoder for HashingEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>, LearnError> {
        if text.trim().is_empty() {
            return Err(LearnError::EmptyDocument);
        }
        let lower = text.to_lowercase();
        let mut v = vec![0.0; self.dim];
        for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            self.add(&mut v, b'w', word);
        }
        let chars: Vec<char> = lower.chars().collect();
        let mut gram = String::new();
        for w in chars.windows(3) {
            gram.clear();
            gram.extend(w);
            self.add(&mut v, b'c', &gram);
        }
        normalize(v)
    }
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, LearnError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(LearnError::EmptyDocument);
    }
    if !norm.is_finite() {
        return Err(LearnError::Encoder("non-finite embedding".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Embeddings from an HTTP endpoint accepting `{"model", "input"}` and
/// answering `{"data": [{"embedding": [...]}]}`. Outputs are renormalized.
#[derive(Debug, Clone)]
pub struct ExternalEncoder {
    pub endpoint: String,
    pub model: String,
    pub dim: usize,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl ExternalEncoder {
    pub fn new(endpoint: &str, model: &str, dim: usize, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        ExternalEncoder {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            dim,
            api_key,
            agent,
        }
    }
}

impl TextEncoder for ExternalEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>, LearnError> {
        if text.trim().is_empty() {
            return Err(LearnError::EmptyDocument);
        }
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(json!({"model": self.model, "input": text}))
            .map_err(|e| LearnError::Encoder(e.to_string()))?;
        let body: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| LearnError::Encoder(e.to_string()))?;
        let v: Vec<f64> = body["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| LearnError::Encoder("response without data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| LearnError::Encoder("non-numeric embedding".into())))
            .collect::<Result<_, _>>()?;
        if v.len() != self.dim {
            return Err(LearnError::Encoder(format!(
                "embedding has {} dimensions, expected {}",
                v.len(),
                self.dim
            )));
        }
        normalize(v)
    }
}

/// Encodes documents in parallel, keeping input order.
pub fn encode_docs(docs: &[InstructionDoc], encoder: &dyn TextEncoder) -> Result<Dataset, LearnError> {
    let rows: Vec<Vec<f64>> = docs
        .par_iter()
        .map(|d| encoder.encode(&d.full_text()))
        .collect::<Result<_, _>>()?;
    let mut x = Array2::zeros((docs.len(), encoder.dim()));
    for (i, r) in rows.into_iter().enumerate() {
        x.row_mut(i).assign(&ndarray::Array1::from(r));
    }
    Dataset::new(
        x,
        docs.iter().map(|d| d.label.index()).collect(),
        docs.iter().map(|d| d.domain_id.map(usize::from)).collect(),
        docs.iter().map(|d| d.user_id.clone()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_and_deterministic() {
        let e = HashingEncoder::default();
        let a = e.encode("followers_count = 705; verified = false").unwrap();
        let b = e.encode("followers_count = 705; verified = false").unwrap();
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n.sqrt() - 1.0).abs() < 1e-12);
        let c = e.encode("followers_count = 706; verified = false").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_document_is_rejected() {
        assert!(matches!(HashingEncoder::default().encode(""), Err(LearnError::EmptyDocument)));
        assert!(matches!(HashingEncoder::default().encode("  "), Err(LearnError::EmptyDocument)));
    }
}
