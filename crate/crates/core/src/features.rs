//! Tokenization and signed feature hashing.
//!
//! Each n-gram (tokens joined by a single space) is hashed with
//! [`hash64`](crate::util::hash64) keyed by `hash_seed`. The low bits of the
//! hash, masked by `dimension - 1`, give the index; bit 63 gives the sign
//! (set means `-1`). Signed counts are summed and the vector is scaled to
//! unit L2 norm.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::RecordId;
use crate::error::{Error, Result};
use crate::util::{hash64, temp_sibling};

pub const DEFAULT_DIMENSION: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorizerConfig {
    pub dimension: usize,
    pub ngram_orders: Vec<usize>,
    pub max_tokens: usize,
    pub hash_seed: u64,
    pub lowercase: bool,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        VectorizerConfig {
            dimension: DEFAULT_DIMENSION,
            ngram_orders: vec![1, 2],
            max_tokens: 128,
            hash_seed: 0,
            lowercase: true,
        }
    }
}

impl VectorizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 || !self.dimension.is_power_of_two() {
            return Err(Error::arg(format!(
                "dimension must be a power of two >= 2, got {}",
                self.dimension
            )));
        }
        if self.dimension > 1 << 32 {
            return Err(Error::arg("dimension must not exceed 2^32"));
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return Err(Error::arg("ngram_orders must be non-empty and all >= 1"));
        }
        if self.max_tokens == 0 {
            return Err(Error::arg("max_tokens must be positive"));
        }
        Ok(())
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dimension: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn zeros(dimension: usize) -> Self {
        FeatureVector {
            dimension,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a vector from unsorted `(index, value)` pairs, summing duplicates.
    pub fn from_pairs(dimension: usize, pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            assert!((i as usize) < dimension, "index {i} out of range");
            *acc.entry(i).or_insert(0.0) += v;
        }
        acc.retain(|_, v| *v != 0.0);
        FeatureVector {
            dimension,
            indices: acc.keys().copied().collect(),
            values: acc.values().copied().collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(p) => self.values[p],
            Err(_) => 0.0,
        }
    }
}

pub fn tokenize(text: &str, cfg: &VectorizerConfig) -> Vec<String> {
    let folded;
    let text = if cfg.lowercase {
        folded = text.to_lowercase();
        folded.as_str()
    } else {
        text
    };
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .take(cfg.max_tokens)
        .map(str::to_owned)
        .collect()
}

/// Index and sign for one n-gram.
pub fn hash_feature(ngram: &str, cfg: &VectorizerConfig) -> (u32, f64) {
    let h = hash64(cfg.hash_seed, ngram.as_bytes());
    let index = (h & (cfg.dimension as u64 - 1)) as u32;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (index, sign)
}

pub fn vectorize<S: AsRef<str>>(tokens: &[S], cfg: &VectorizerConfig) -> FeatureVector {
    let mut pairs = Vec::new();
    let mut gram = String::new();
    for &n in &cfg.ngram_orders {
        if n == 0 || tokens.len() < n {
            continue;
        }
        for window in tokens.windows(n) {
            gram.clear();
            for (i, t) in window.iter().enumerate() {
                if i > 0 {
                    gram.push(' ');
                }
                gram.push_str(t.as_ref());
            }
            pairs.push(hash_feature(&gram, cfg));
        }
    }
    let mut v = FeatureVector::from_pairs(cfg.dimension, pairs);
    let norm = v.norm();
    if norm > 0.0 {
        for x in &mut v.values {
            *x /= norm;
        }
    }
    v
}

/// Tokenizes then vectorizes.
pub fn featurize(text: &str, cfg: &VectorizerConfig) -> FeatureVector {
    vectorize(&tokenize(text, cfg), cfg)
}

const CACHE_FORMAT: &str = "classcurve-features";

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    version: u32,
    vectorizer: VectorizerConfig,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    id: RecordId,
    indices: Vec<u32>,
    values: Vec<f64>,
}

/// Writes a JSON-lines feature cache whose first line embeds `cfg`.
pub fn write_feature_cache(
    path: &Path,
    cfg: &VectorizerConfig,
    items: &[(RecordId, FeatureVector)],
) -> Result<()> {
    let tmp = temp_sibling(path);
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = std::io::BufWriter::new(file);
    let header = CacheHeader {
        format: CACHE_FORMAT.into(),
        version: 1,
        vectorizer: cfg.clone(),
    };
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", serde_json::to_string(&header)?).map_err(io)?;
    for (id, fv) in items {
        let line = CacheLine {
            id: *id,
            indices: fv.indices.clone(),
            values: fv.values.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&line)?).map_err(io)?;
    }
    w.flush().map_err(io)?;
    drop(w);
    fs::rename(&tmp, path).map_err(io)
}

/// Reads a feature cache. Returns `Ok(None)` when the embedded vectorizer
/// config differs from `cfg`, meaning the cache is stale.
pub fn read_feature_cache(
    path: &Path,
    cfg: &VectorizerConfig,
) -> Result<Option<Vec<(RecordId, FeatureVector)>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: CacheHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::Format("empty feature cache".into()))?,
    )?;
    if header.format != CACHE_FORMAT || header.version != 1 {
        return Err(Error::Format(format!(
            "unrecognized feature cache header {:?} v{}",
            header.format, header.version
        )));
    }
    if &header.vectorizer != cfg {
        return Ok(None);
    }
    let mut out = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let c: CacheLine = serde_json::from_str(line)?;
        if c.indices.len() != c.values.len()
            || c.indices.iter().any(|&i| i as usize >= cfg.dimension)
        {
            return Err(Error::Format(format!("corrupt cache entry for {:?}", c.id)));
        }
        out.push((
            c.id,
            FeatureVector {
                dimension: cfg.dimension,
                indices: c.indices,
                values: c.values,
            },
        ));
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> VectorizerConfig {
        VectorizerConfig::default()
    }

    #[test]
    fn tokenize_basic() {
        assert_eq!(
            tokenize("Great Guitar Strap!", &cfg()),
            vec!["great", "guitar", "strap"]
        );
        assert!(tokenize("", &cfg()).is_empty());
        assert!(tokenize(" ,.!? ", &cfg()).is_empty());
        let cased = VectorizerConfig {
            lowercase: false,
            ..cfg()
        };
        assert_eq!(tokenize("Café-Noir", &cased), vec!["Café", "Noir"]);
    }

    #[test]
    fn tokenize_truncates() {
        let text: Vec<String> = (0..200).map(|i| format!("w{i}")).collect();
        let toks = tokenize(&text.join(" "), &cfg());
        assert_eq!(toks.len(), 128);
        assert_eq!(toks[0], "w0");
        assert_eq!(toks[127], "w127");
    }

    #[test]
    fn empty_tokens_zero_vector() {
        let v = vectorize::<&str>(&[], &cfg());
        assert_eq!(v.nnz(), 0);
        assert_eq!(v.dimension, DEFAULT_DIMENSION);
    }

    #[test]
    fn single_token_unit_weight() {
        let v = vectorize(&["a"], &cfg());
        assert_eq!(v.nnz(), 1);
        assert_eq!(v.values[0].abs(), 1.0);
    }

    #[test]
    fn two_token_golden() {
        // Indices and signs frozen from an independent Python evaluation of
        // the hash for "a", "b" and "a b" with seed 0, dimension 2^18.
        let v = vectorize(&["a", "b"], &cfg());
        let w = 1.0 / 3f64.sqrt();
        assert_eq!(v.indices, vec![21286, 183899, 185040]);
        let expected = [w, -w, w];
        for (got, want) in v.values.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs() {
        for bad in [
            VectorizerConfig {
                dimension: 1,
                ..cfg()
            },
            VectorizerConfig {
                dimension: 1000,
                ..cfg()
            },
            VectorizerConfig {
                ngram_orders: vec![],
                ..cfg()
            },
            VectorizerConfig {
                ngram_orders: vec![0, 1],
                ..cfg()
            },
            VectorizerConfig {
                max_tokens: 0,
                ..cfg()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(cfg().validate().is_ok());
    }

    #[test]
    fn cache_roundtrip_and_invalidation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("features.jsonl");
        let c = VectorizerConfig {
            dimension: 1024,
            ..cfg()
        };
        let items = vec![
            (
                RecordId { line: 1, hash: 7 },
                featurize("red guitar strap", &c),
            ),
            (RecordId { line: 2, hash: 9 }, featurize("", &c)),
        ];
        write_feature_cache(&p, &c, &items).unwrap();
        assert_eq!(read_feature_cache(&p, &c).unwrap().unwrap(), items);
        let other = VectorizerConfig { hash_seed: 1, ..c };
        assert!(read_feature_cache(&p, &other).unwrap().is_none());
    }

    proptest! {
        #[test]
        fn unit_norm_and_bounds(words in prop::collection::vec("[a-z]{1,6}", 1..40), dim_pow in 1u32..20) {
            let c = VectorizerConfig { dimension: 1 << dim_pow, ..cfg() };
            let v = vectorize(&words, &c);
            let bound: usize = c.ngram_orders.iter().map(|&n| (words.len() + 1).saturating_sub(n)).sum();
            prop_assert!(v.nnz() <= bound);
            prop_assert!(v.indices.iter().all(|&i| (i as usize) < c.dimension));
            prop_assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
            // hash collisions with opposite signs can cancel every entry
            if v.nnz() > 0 {
                prop_assert!((v.norm() - 1.0).abs() < 1e-9);
            }
            prop_assert_eq!(v.clone(), vectorize(&words, &c));
        }

        #[test]
        fn truncation_ignores_tail(head in prop::collection::vec("[a-z]{1,5}", 128..140), t1 in "[a-z ]{0,30}", t2 in "[a-z ]{0,30}") {
            let a = format!("{} {}", head.join(" "), t1);
            let b = format!("{} {}", head.join(" "), t2);
            prop_assert_eq!(tokenize(&a, &cfg()), tokenize(&b, &cfg()));
        }
    }
}
