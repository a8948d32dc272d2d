//! Datasheet retrieval: sliding-window chunking over word tokens, a
//! TF-IDF lexical index that works offline, and an optional remote
//! embedding backend with cosine ranking.
//!
//! Token boundaries come from a whitespace-and-punctuation approximation;
//! counts are therefore close to, but not identical with, proprietary
//! tokenizers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RagError {
    #[error("document contains no tokens")]
    EmptyDocument,
    #[error("retrieval index is empty")]
    EmptyIndex,
    #[error("embedding endpoint error: {0}")]
    EmbeddingEndpoint(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub chunk_size: usize,
    pub overlap: usize,
    pub max_chunks: usize,
    pub embedding_dim: usize,
    pub backend: RetrievalBackend,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            chunk_size: 800,
            overlap: 400,
            max_chunks: 20,
            embedding_dim: 256,
            backend: RetrievalBackend::Lexical,
        }
    }
}

impl RetrievalConfig {
    pub fn validated(&self) -> Result<(), RagError> {
        if self.chunk_size == 0 {
            return Err(RagError::InvalidConfig(
                "chunk_size must be positive".into(),
            ));
        }
        if self.overlap >= self.chunk_size {
            return Err(RagError::InvalidConfig(
                "overlap must be smaller than chunk_size".into(),
            ));
        }
        if self.max_chunks == 0 {
            return Err(RagError::InvalidConfig(
                "max_chunks must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RetrievalBackend {
    /// TF-IDF over word tokens; no network.
    Lexical,
    /// Remote embedding endpoint returning fixed-dimension vectors.
    Embedding(EmbeddingEndpoint),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingEndpoint {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub id: usize,
    pub source: String,
    pub text: String,
    pub token_count: usize,
    pub ordinal: usize,
}

/// Byte span of one token in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

/// Word tokens are runs of alphanumerics (plus `_`); every other
/// non-whitespace character is a single token.
pub fn tokenize(text: &str) -> Vec<TokenSpan> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    for (idx, ch) in text.char_indices() {
        let is_word = ch.is_alphanumeric() || ch == '_';
        if is_word {
            if word_start.is_none() {
                word_start = Some(idx);
            }
            continue;
        }
        if let Some(start) = word_start.take() {
            tokens.push(TokenSpan { start, end: idx });
        }
        if !ch.is_whitespace() {
            tokens.push(TokenSpan {
                start: idx,
                end: idx + ch.len_utf8(),
            });
        }
    }
    if let Some(start) = word_start {
        tokens.push(TokenSpan {
            start,
            end: text.len(),
        });
    }
    tokens
}

/// Sliding-window chunking with stride `chunk_size - overlap`. Every token
/// lands in at least one chunk; chunk text is the original byte span, so
/// source formatting survives.
pub fn chunk_document(
    text: &str,
    source: &str,
    cfg: &RetrievalConfig,
) -> Result<Vec<DocumentChunk>, RagError> {
    cfg.validated()?;
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(RagError::EmptyDocument);
    }
    let stride = cfg.chunk_size - cfg.overlap;
    let mut chunks = Vec::new();
    let mut start = 0usize;
    while start < tokens.len() {
        let end = (start + cfg.chunk_size).min(tokens.len());
        let span_start = tokens[start].start;
        let span_end = tokens[end - 1].end;
        chunks.push(DocumentChunk {
            id: chunks.len(),
            source: source.to_string(),
            text: text[span_start..span_end].to_string(),
            token_count: end - start,
            ordinal: chunks.len(),
        });
        start += stride;
    }
    Ok(chunks)
}

/// Token offsets at which chunks start (every stride multiple below the
/// token count), mirroring `chunk_document`.
pub fn chunk_start_offsets(token_count: usize, cfg: &RetrievalConfig) -> Vec<usize> {
    let stride = cfg.chunk_size - cfg.overlap;
    (0..token_count).step_by(stride).collect()
}

fn lower_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .map(|span| text[span.start..span.end].to_ascii_lowercase())
        .collect()
}

enum IndexBackend {
    Lexical {
        /// Per-chunk term frequencies (sorted keys keep scoring order
        /// deterministic across identical chunks).
        term_frequencies: Vec<BTreeMap<String, f64>>,
        document_frequency: BTreeMap<String, usize>,
        norms: Vec<f64>,
    },
    Embedding {
        vectors: Vec<Vec<f64>>,
        endpoint: EmbeddingEndpoint,
        dim: usize,
    },
}

pub struct RetrievalIndex {
    chunks: Vec<DocumentChunk>,
    backend: IndexBackend,
    max_chunks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedChunk {
    pub chunk: DocumentChunk,
    pub score: f64,
}

/// Build an index over the chunks with the configured backend.
pub fn index(
    chunks: Vec<DocumentChunk>,
    cfg: &RetrievalConfig,
) -> Result<RetrievalIndex, RagError> {
    cfg.validated()?;
    if chunks.is_empty() {
        return Err(RagError::EmptyIndex);
    }
    let backend = match &cfg.backend {
        RetrievalBackend::Lexical => build_lexical(&chunks),
        RetrievalBackend::Embedding(endpoint) => {
            let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
            let vectors = embed_batch(endpoint, &texts, cfg.embedding_dim)?;
            IndexBackend::Embedding {
                vectors,
                endpoint: endpoint.clone(),
                dim: cfg.embedding_dim,
            }
        }
    };
    Ok(RetrievalIndex {
        chunks,
        backend,
        max_chunks: cfg.max_chunks,
    })
}

fn build_lexical(chunks: &[DocumentChunk]) -> IndexBackend {
    let mut term_frequencies: Vec<BTreeMap<String, f64>> = Vec::with_capacity(chunks.len());
    let mut document_frequency: BTreeMap<String, usize> = BTreeMap::new();
    for chunk in chunks {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for token in lower_tokens(&chunk.text) {
            *tf.entry(token).or_insert(0.0) += 1.0;
        }
        for term in tf.keys() {
            *document_frequency.entry(term.clone()).or_insert(0) += 1;
        }
        term_frequencies.push(tf);
    }
    let n = chunks.len() as f64;
    let idf = |df: usize| ((n + 1.0) / (df as f64 + 1.0)).ln() + 1.0;
    let norms: Vec<f64> = term_frequencies
        .iter()
        .map(|tf| {
            tf.iter()
                .map(|(term, &count)| {
                    let w = count * idf(document_frequency[term]);
                    w * w
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    IndexBackend::Lexical {
        term_frequencies,
        document_frequency,
        norms,
    }
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Unit-normalized chunk embeddings (embedding backend only).
    pub fn vectors(&self) -> Option<&[Vec<f64>]> {
        match &self.backend {
            IndexBackend::Embedding { vectors, .. } => Some(vectors),
            IndexBackend::Lexical { .. } => None,
        }
    }

    /// Top-k chunks by score; ties break toward the earlier ordinal. `k`
    /// is clamped to the configured max_chunks and the corpus size.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<RetrievedChunk>, RagError> {
        if self.chunks.is_empty() {
            return Err(RagError::EmptyIndex);
        }
        let k = k.min(self.max_chunks).min(self.chunks.len());
        let scores: Vec<f64> = match &self.backend {
            IndexBackend::Lexical {
                term_frequencies,
                document_frequency,
                norms,
            } => {
                let n = self.chunks.len() as f64;
                let idf = |df: usize| ((n + 1.0) / (df as f64 + 1.0)).ln() + 1.0;
                let mut query_tf: BTreeMap<String, f64> = BTreeMap::new();
                for token in lower_tokens(query) {
                    *query_tf.entry(token).or_insert(0.0) += 1.0;
                }
                let query_norm = query_tf
                    .iter()
                    .map(|(term, &count)| {
                        let df = document_frequency.get(term).copied().unwrap_or(0);
                        let w = count * idf(df);
                        w * w
                    })
                    .sum::<f64>()
                    .sqrt();
                term_frequencies
                    .iter()
                    .zip(norms.iter())
                    .map(|(tf, &norm)| {
                        if norm == 0.0 || query_norm == 0.0 {
                            return 0.0;
                        }
                        let mut dot = 0.0;
                        for (term, &q_count) in &query_tf {
                            if let Some(&d_count) = tf.get(term) {
                                let w = idf(document_frequency[term]);
                                dot += (q_count * w) * (d_count * w);
                            }
                        }
                        dot / (norm * query_norm)
                    })
                    .collect()
            }
            IndexBackend::Embedding {
                vectors,
                endpoint,
                dim,
            } => {
                let query_vec = embed_batch(endpoint, &[query], *dim)?
                    .into_iter()
                    .next()
                    .ok_or_else(|| {
                        RagError::EmbeddingEndpoint("endpoint returned no vector".into())
                    })?;
                vectors
                    .iter()
                    .map(|v| v.iter().zip(query_vec.iter()).map(|(a, b)| a * b).sum())
                    .collect()
            }
        };

        let mut order: Vec<usize> = (0..self.chunks.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(self.chunks[a].ordinal.cmp(&self.chunks[b].ordinal))
        });
        Ok(order
            .into_iter()
            .take(k)
            .map(|i| RetrievedChunk {
                chunk: self.chunks[i].clone(),
                score: scores[i],
            })
            .collect())
    }
}

/// Call the embedding endpoint for a batch of texts and unit-normalize the
/// returned vectors. The wire shape follows the common embeddings API:
/// `{"model", "input": [...], "dimensions": n}` in,
/// `{"data": [{"embedding": [...]}]}` out.
fn embed_batch(
    endpoint: &EmbeddingEndpoint,
    texts: &[&str],
    dim: usize,
) -> Result<Vec<Vec<f64>>, RagError> {
    #[derive(Serialize)]
    struct Request<'a> {
        model: &'a str,
        input: &'a [&'a str],
        dimensions: usize,
    }
    #[derive(Deserialize)]
    struct Response {
        data: Vec<Item>,
    }
    #[derive(Deserialize)]
    struct Item {
        embedding: Vec<f64>,
    }

    let client = reqwest::blocking::Client::new();
    let url = format!("{}/embeddings", endpoint.base_url.trim_end_matches('/'));
    let mut request = client.post(&url).json(&Request {
        model: &endpoint.model,
        input: texts,
        dimensions: dim,
    });
    if let Some(env_name) = &endpoint.api_key_env {
        if let Ok(key) = std::env::var(env_name) {
            request = request.bearer_auth(key);
        }
    }
    let response = request
        .send()
        .map_err(|e| RagError::EmbeddingEndpoint(e.to_string()))?;
    if !response.status().is_success() {
        return Err(RagError::EmbeddingEndpoint(format!(
            "HTTP {}",
            response.status()
        )));
    }
    let body: Response = response
        .json()
        .map_err(|e| RagError::EmbeddingEndpoint(format!("bad response body: {e}")))?;
    if body.data.len() != texts.len() {
        return Err(RagError::EmbeddingEndpoint(format!(
            "asked for {} embeddings, got {}",
            texts.len(),
            body.data.len()
        )));
    }
    body.data
        .into_iter()
        .map(|item| {
            let norm = item.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(RagError::EmbeddingEndpoint("zero-norm embedding".into()));
            }
            Ok(item.embedding.iter().map(|v| v / norm).collect())
        })
        .collect()
}
