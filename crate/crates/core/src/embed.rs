//! Static word embeddings: deterministic hash vectors and text-file vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Maps a lowercased token to a fixed-width vector.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, token: &str) -> Vec<f64>;

    /// Mean of the token vectors; zeros for an empty slice.
    fn mean(&self, tokens: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        if tokens.is_empty() {
            return out;
        }
        for t in tokens {
            for (o, v) in out.iter_mut().zip(self.embed(t)) {
                *o += v;
            }
        }
        let n = tokens.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

/// Gaussian vectors seeded by the SHA-256 digest of the token.
#[derive(Clone, Debug)]
pub struct HashEmbeddings {
    dim: usize,
    std: f64,
}

impl HashEmbeddings {
    pub const DEFAULT_STD: f64 = 0.1;

    pub fn new(dim: usize, std: f64) -> Self {
        Self { dim, std }
    }
}

impl EmbeddingProvider for HashEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, token: &str) -> Vec<f64> {
        let digest = Sha256::digest(token.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let normal = Normal::new(0.0, self.std).expect("finite std");
        (0..self.dim).map(|_| normal.sample(&mut rng)).collect()
    }
}

/// Vectors loaded from a text file of `token v1 v2 ...` lines. An optional
/// first line of two integers (count and width) is skipped. Unknown tokens
/// fall back to hash vectors with the file's per-entry standard deviation.
pub struct WordVectors {
    vectors: HashMap<String, Vec<f64>>,
    fallback: HashEmbeddings,
}

impl WordVectors {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values: std::result::Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
            let values = values.map_err(|e| Error::Embeddings {
                line: i + 1,
                message: e.to_string(),
            })?;
            if i == 0 && values.len() == 1 && token.parse::<usize>().is_ok() {
                continue;
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Embeddings {
                        line: i + 1,
                        message: format!("expected {d} values, found {}", values.len()),
                    })
                }
                _ => {}
            }
            if values.is_empty() {
                return Err(Error::Embeddings {
                    line: i + 1,
                    message: "no vector values".into(),
                });
            }
            vectors.insert(token.to_lowercase(), values);
        }
        let dim = dim.ok_or(Error::Embeddings {
            line: 0,
            message: "file holds no vectors".into(),
        })?;
        let count = (vectors.len() * dim) as f64;
        let mean_sq = vectors.values().flatten().map(|v| v * v).sum::<f64>() / count;
        let std = if mean_sq > 0.0 { mean_sq.sqrt() } else { HashEmbeddings::DEFAULT_STD };
        Ok(Self {
            vectors,
            fallback: HashEmbeddings::new(dim, std),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.len()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }
}

impl EmbeddingProvider for WordVectors {
    fn dim(&self) -> usize {
        self.fallback.dim
    }

    fn embed(&self, token: &str) -> Vec<f64> {
        match self.vectors.get(token) {
            Some(v) => v.clone(),
            None => self.fallback.embed(token),
        }
    }
}
