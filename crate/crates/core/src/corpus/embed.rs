//! Word-embedding ingestion and 343-dimensional token featurization.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use crate::corpus::{Split, TagInventories, Token, UNKNOWN_TAG};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

/// Range OOV embedding entries are drawn from.
pub const OOV_RANGE: f64 = 0.25;

/// Feature layout: frozen word vector followed by POS and NER one-hots.
/// The default layout is 300 + 36 + 7 = 343 dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeaturizerConfig {
    pub word_dim: usize,
    pub pos_count: usize,
    pub ner_count: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig { word_dim: 300, pos_count: 36, ner_count: 7 }
    }
}

impl FeaturizerConfig {
    pub fn new(word_dim: usize, inventories: &TagInventories) -> Self {
        FeaturizerConfig { word_dim, pos_count: inventories.pos.len(), ner_count: inventories.ner.len() }
    }

    pub fn feature_dim(&self) -> usize {
        self.word_dim + self.pos_count + self.ner_count
    }
}

/// Frozen word-vector table. Lookups of absent words draw each dimension
/// uniformly from `[-0.25, 0.25]` and cache the result, so a word maps to
/// one stable vector per run.
pub struct EmbeddingTable {
    dim: usize,
    loaded: HashMap<String, Vec<f64>>,
    oov: Mutex<(HashMap<String, Vec<f64>>, Rng)>,
}

impl EmbeddingTable {
    /// Table with no pretrained vectors: every word is out-of-vocabulary.
    pub fn empty(dim: usize, rng: Rng) -> Self {
        EmbeddingTable { dim, loaded: HashMap::new(), oov: Mutex::new((HashMap::new(), rng)) }
    }

    /// Load the text format: a header line `count dim`, then one line per
    /// word with the surface followed by `dim` numbers, space-separated.
    pub fn load(path: &Path, expected_dim: usize, rng: Rng) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::load_str(&text, expected_dim, rng)
    }

    pub fn load_str(text: &str, expected_dim: usize, rng: Rng) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("embedding file is empty".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::Format(format!("embedding header must be 'count dim', got '{header}'")));
        }
        let count: usize = parts[0]
            .parse()
            .map_err(|_| Error::Format(format!("bad embedding count '{}'", parts[0])))?;
        let dim: usize = parts[1]
            .parse()
            .map_err(|_| Error::Format(format!("bad embedding dim '{}'", parts[1])))?;
        if dim != expected_dim {
            return Err(Error::Config(format!("embedding file has dim {dim}, configured dim is {expected_dim}")));
        }

        let mut loaded = HashMap::with_capacity(count);
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields
                .next()
                .ok_or_else(|| Error::Format(format!("embedding row {} is blank", row + 2)))?;
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("non-numeric value in embedding row for '{word}'")))?;
            if values.len() != dim {
                return Err(Error::Format(format!(
                    "embedding row for '{word}' has {} values, header says {dim}",
                    values.len()
                )));
            }
            loaded.insert(word.to_string(), values);
        }
        if loaded.len() != count {
            return Err(Error::Format(format!(
                "embedding header declares {count} words, file has {}",
                loaded.len()
            )));
        }
        Ok(EmbeddingTable { dim, loaded, oov: Mutex::new((HashMap::new(), rng)) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn loaded_len(&self) -> usize {
        self.loaded.len()
    }

    /// Vector for a word; absent words get a cached uniform draw.
    pub fn lookup(&self, word: &str) -> Vec<f64> {
        if let Some(v) = self.loaded.get(word) {
            return v.clone();
        }
        let mut guard = self.oov.lock().unwrap();
        let (cache, rng) = &mut *guard;
        if let Some(v) = cache.get(word) {
            return v.clone();
        }
        let v: Vec<f64> = (0..self.dim).map(|_| rng.uniform(-OOV_RANGE, OOV_RANGE)).collect();
        cache.insert(word.to_string(), v.clone());
        v
    }

    /// Draw every OOV vector a corpus will need, in corpus order, so that
    /// later lookups are read-only and independent of evaluation order.
    pub fn warm(&self, splits: &[&Split]) {
        for split in splits {
            for paragraph in split.iter() {
                for token in &paragraph.tokens {
                    let _ = self.lookup(&token.surface);
                }
            }
        }
    }
}

/// Concatenate `[word vector | POS one-hot | NER one-hot]`. UNKNOWN tags
/// contribute an all-zero block. The result is frozen input, never trained.
pub fn featurize(token: &Token, table: &EmbeddingTable, config: &FeaturizerConfig) -> Matrix {
    let mut data = vec![0.0; config.feature_dim()];
    let word = table.lookup(&token.surface);
    data[..config.word_dim].copy_from_slice(&word);
    if token.pos_id != UNKNOWN_TAG && token.pos_id < config.pos_count {
        data[config.word_dim + token.pos_id] = 1.0;
    }
    if token.ner_id != UNKNOWN_TAG && token.ner_id < config.ner_count {
        data[config.word_dim + config.pos_count + token.ner_id] = 1.0;
    }
    Matrix::column(&data)
}
