//! Static word-embedding tables in the plain-text `word v1 ... vd` format
//! (GloVe style; a word2vec `count dim` header line is skipped).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    zero: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, entries: HashMap<String, Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "embedding dimension must be positive".into(),
            ));
        }
        if let Some((w, v)) = entries.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Embedding {
                line: 0,
                message: format!("{w:?} has {} components, expected {dim}", v.len()),
            });
        }
        Ok(Self {
            dim,
            entries,
            zero: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact match, then lowercase.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries
            .get(word)
            .or_else(|| self.entries.get(&word.to_lowercase()))
            .map(Vec::as_slice)
    }

    /// Like [`get`](Self::get) but out-of-vocabulary words map to the zero vector.
    pub fn lookup(&self, word: &str) -> &[f64] {
        self.get(word).unwrap_or(&self.zero)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.get(word).is_some()
    }
}

/// Reads a table, keeping only words accepted by `keep`.
pub fn parse_embeddings<R: BufRead>(
    reader: R,
    mut keep: impl FnMut(&str) -> bool,
) -> Result<EmbeddingTable> {
    let mut dim: Option<usize> = None;
    let mut entries = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err("<embeddings>"))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        if line_no == 1
            && rest.len() == 1
            && word.parse::<usize>().is_ok()
            && rest[0].parse::<usize>().is_ok()
        {
            continue;
        }
        let d = *dim.get_or_insert(rest.len());
        if d == 0 {
            return Err(Error::Embedding {
                line: line_no,
                message: "no vector components".into(),
            });
        }
        if rest.len() != d {
            return Err(Error::Embedding {
                line: line_no,
                message: format!("dimension mismatch: expected {d}, found {}", rest.len()),
            });
        }
        if !keep(word) {
            continue;
        }
        let vector = rest
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Error::Embedding {
                line: line_no,
                message: "non-numeric component".into(),
            })?;
        entries.insert(word.to_string(), vector);
    }
    let dim = dim.ok_or(Error::EmptyInput("embedding file has no vectors"))?;
    EmbeddingTable::new(dim, entries)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    load_embeddings_filtered(path, |_| true)
}

/// Loads only the words accepted by `keep`; useful for large tables.
pub fn load_embeddings_filtered(
    path: impl AsRef<Path>,
    keep: impl FnMut(&str) -> bool,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    parse_embeddings(BufReader::new(file), keep)
}
