//! Synthetic labeled corpus with controllable class confusion.
//!
//! Every class owns a vocabulary of pseudo-words. A fraction `overlap` of
//! class `j`'s vocabulary is also part of class `j + 1`'s vocabulary, which
//! models categories whose items could reasonably carry either label. A
//! further `noise_fraction` of each description's tokens comes from a
//! background vocabulary shared by all classes. Finally a fraction
//! `common_fraction` of every class vocabulary is drawn at random from a
//! common pool, so any two classes may share words and each added class
//! makes the pooled words a little less informative.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ProductRecord, DEFAULT_CATEGORIES};
use crate::error::{Error, Result};
use crate::util::{mix_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub samples_per_class: usize,
    /// Fraction of a class vocabulary shared with the next class.
    pub overlap: f64,
    /// Fraction of tokens drawn from the shared background vocabulary.
    pub noise_fraction: f64,
    /// Fraction of a class vocabulary drawn from the common pool.
    pub common_fraction: f64,
    pub common_pool: usize,
    pub vocab_per_class: usize,
    pub background_vocab: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 20,
            samples_per_class: 500,
            overlap: 0.3,
            noise_fraction: 0.5,
            common_fraction: 0.7,
            common_pool: 100,
            vocab_per_class: 40,
            background_vocab: 300,
            min_tokens: 6,
            max_tokens: 14,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.samples_per_class == 0 || self.vocab_per_class == 0 {
            return Err(Error::arg(
                "n_classes, samples_per_class and vocab_per_class must be positive",
            ));
        }
        if !(0.0..=1.0).contains(&self.overlap) || !(0.0..1.0).contains(&self.noise_fraction) {
            return Err(Error::arg(
                "overlap must lie in [0, 1] and noise_fraction in [0, 1)",
            ));
        }
        if !(0.0..=1.0).contains(&self.common_fraction) || self.overlap + self.common_fraction > 1.0
        {
            return Err(Error::arg("need 0 <= common_fraction <= 1 - overlap"));
        }
        let picks = (self.common_fraction * self.vocab_per_class as f64).round() as usize;
        if picks > self.common_pool {
            return Err(Error::arg(
                "common_pool is smaller than the per-class common share",
            ));
        }
        if self.noise_fraction > 0.0 && self.background_vocab == 0 {
            return Err(Error::arg("noise needs a non-empty background vocabulary"));
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(Error::arg("need 1 <= min_tokens <= max_tokens"));
        }
        Ok(())
    }
}

/// Class names: the default category list, then `Category 21`, ...
pub fn class_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match DEFAULT_CATEGORIES.get(i) {
            Some(name) => (*name).to_string(),
            None => format!("Category {}", i + 1),
        })
        .collect()
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::with_capacity(syllables * 2);
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    w
}

fn fresh_words(rng: &mut ChaCha8Rng, n: usize, used: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut w = pseudo_word(rng);
        if used.contains(&w) {
            // the syllable space is finite; extend rather than loop forever
            w.push_str(&used.len().to_string());
        }
        if used.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Per-class vocabularies, in class order.
pub fn vocabularies(cfg: &SynthConfig) -> (Vec<Vec<String>>, Vec<String>) {
    let mut rng = rng_from(mix_seed(cfg.seed, &[0x564f_4341]));
    let mut used = HashSet::new();
    let background = fresh_words(&mut rng, cfg.background_vocab, &mut used);
    let common = fresh_words(&mut rng, cfg.common_pool, &mut used);
    let v = cfg.vocab_per_class;
    let shared = ((cfg.overlap * v as f64).round() as usize).min(v);
    let picks = ((cfg.common_fraction * v as f64).round() as usize).min(v - shared);
    let mut vocabs: Vec<Vec<String>> = Vec::with_capacity(cfg.n_classes);
    for j in 0..cfg.n_classes {
        let mut vocab = match vocabs.last() {
            Some(prev) if shared > 0 => {
                let mut borrowed = prev.clone();
                borrowed.shuffle(&mut rng);
                borrowed.truncate(shared);
                borrowed
            }
            _ => Vec::new(),
        };
        let mut pool: Vec<&String> = common.iter().filter(|w| !vocab.contains(w)).collect();
        pool.shuffle(&mut rng);
        vocab.extend(pool.into_iter().take(picks).cloned());
        let own = v - vocab.len();
        vocab.extend(fresh_words(&mut rng, own, &mut used));
        debug_assert_eq!(vocab.len(), v, "class {j}");
        vocabs.push(vocab);
    }
    (vocabs, background)
}

/// Generates `n_classes * samples_per_class` records, grouped by class.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<ProductRecord>> {
    cfg.validate()?;
    let (vocabs, background) = vocabularies(cfg);
    let names = class_names(cfg.n_classes);
    let mut out = Vec::with_capacity(cfg.n_classes * cfg.samples_per_class);
    for (j, vocab) in vocabs.iter().enumerate() {
        let mut rng = rng_from(mix_seed(cfg.seed, &[0x444f_4353, j as u64]));
        for _ in 0..cfg.samples_per_class {
            let len = rng.gen_range(cfg.min_tokens..=cfg.max_tokens);
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.gen::<f64>() < cfg.noise_fraction {
                        background.choose(&mut rng).expect("background non-empty")
                    } else {
                        vocab.choose(&mut rng).expect("vocab non-empty")
                    }
                    .as_str()
                })
                .collect();
            let line = out.len() as u64 + 1;
            out.push(ProductRecord::new(line, names[j].clone(), words.join(" ")));
        }
    }
    Ok(out)
}
