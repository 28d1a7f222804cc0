use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Pre-trained word vectors in the whitespace-separated text format
/// (`token v1 ... v_dim` per line).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    tokens: Vec<String>,
    vectors: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Self {
        EmbeddingMatrix {
            dim,
            tokens: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Inserts a vector; returns false (and keeps the old one) on duplicates.
    pub fn insert(&mut self, token: String, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::shape("embedding", &[self.dim], &[vector.len()]));
        }
        if self.index.contains_key(&token) {
            return Ok(false);
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.vectors.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        let i = *self.index.get(token)?;
        Some(&self.vectors[i * self.dim..(i + 1) * self.dim])
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, dim: usize) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut matrix = EmbeddingMatrix::new(dim);
    let mut vector = Vec::with_capacity(dim);
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        vector.clear();
        for field in fields {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("`{field}` is not a number"),
            })?;
            vector.push(v);
        }
        if vector.len() != dim {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("expected {dim} values, found {}", vector.len()),
            });
        }
        if !matrix.insert(token.to_string(), &vector)? {
            log::warn!(
                "{}:{}: duplicate token `{token}` ignored",
                path.display(),
                n + 1
            );
        }
    }
    Ok(matrix)
}
