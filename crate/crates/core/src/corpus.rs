//! Labeled text records, the ordered category table, balanced sampling and
//! train/test splitting.
//!
//! The canonical corpus format is UTF-8 JSON-lines with exactly two string
//! fields per object, `category` and `description`. Filtering by length
//! happens before sampling so every class can supply its full quota of
//! valid descriptions.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{hash64, mix_seed, rng_from, write_atomic};

/// Category names in the order they join the label set.
pub const DEFAULT_CATEGORIES: [&str; 20] = [
    "Musical instruments",
    "Baby",
    "Patio, Lawn and Garden",
    "Grocery and Gourmet Food",
    "Automotive",
    "Pet Supplies",
    "Office Products",
    "Beauty",
    "Tools and Home Improvement",
    "Toys and Games",
    "Health and Personal Care",
    "Cell Phones and Accessories",
    "Sports and Outdoors",
    "Kindle Store",
    "Home and Kitchen",
    "Clothing, Shoes, and Accessories",
    "CDs and Vinyl",
    "Movies and TV",
    "Electronics",
    "Books",
];

/// Identity of a record: its 1-based source line plus a hash of its content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordId {
    pub line: u64,
    pub hash: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub id: RecordId,
    pub category: String,
    pub description: String,
}

impl ProductRecord {
    pub fn new(line: u64, category: impl Into<String>, description: impl Into<String>) -> Self {
        let category = category.into();
        let description = description.into();
        let mut bytes = Vec::with_capacity(category.len() + description.len() + 1);
        bytes.extend_from_slice(category.as_bytes());
        bytes.push(0x1f);
        bytes.extend_from_slice(description.as_bytes());
        ProductRecord {
            id: RecordId {
                line,
                hash: hash64(0, &bytes),
            },
            category,
            description,
        }
    }

    /// Character count of the trimmed description, in unicode scalar values.
    pub fn trimmed_chars(&self) -> usize {
        self.description.trim().chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub order_index: usize,
    pub name: String,
}

/// The ordered class universe. Order indices are contiguous from 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct CategoryTable {
    entries: Vec<CategoryEntry>,
}

impl CategoryTable {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for (i, name) in names.into_iter().enumerate() {
            let name = name.into();
            if !seen.insert(name.clone()) {
                return Err(Error::arg(format!("duplicate category name {name:?}")));
            }
            entries.push(CategoryEntry {
                order_index: i + 1,
                name,
            });
        }
        Ok(CategoryTable { entries })
    }

    /// The twenty product categories in their canonical inclusion order.
    pub fn default_table() -> Self {
        CategoryTable::new(DEFAULT_CATEGORIES).expect("default categories are unique")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CategoryEntry] {
        &self.entries
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn name(&self, order_index: usize) -> Option<&str> {
        order_index
            .checked_sub(1)
            .and_then(|i| self.entries.get(i))
            .map(|e| e.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.order_index)
    }
}

impl TryFrom<Vec<String>> for CategoryTable {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        CategoryTable::new(names)
    }
}

impl From<CategoryTable> for Vec<String> {
    fn from(t: CategoryTable) -> Self {
        t.entries.into_iter().map(|e| e.name).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Exactly `round((1 - f) * n)` test items per class.
    #[default]
    Stratified,
    /// A uniformly random `(1 - f)` fraction of all samples, ignoring class.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_samples_per_class: usize,
    pub min_description_chars: usize,
    pub split_fraction: f64,
    #[serde(default)]
    pub split_mode: SplitMode,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig::reference()
    }
}

impl SamplingConfig {
    /// 5000 samples per class, more than five characters, 90/10 split.
    pub fn reference() -> Self {
        SamplingConfig {
            n_samples_per_class: 5000,
            min_description_chars: 5,
            split_fraction: 0.9,
            split_mode: SplitMode::Stratified,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples_per_class == 0 {
            return Err(Error::arg("n_samples_per_class must be at least 1"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction <= 1.0) {
            return Err(Error::arg(format!(
                "split_fraction must lie in (0, 1], got {}",
                self.split_fraction
            )));
        }
        Ok(())
    }

    /// Test items per class under stratified splitting.
    pub fn test_count(&self, class_size: usize) -> usize {
        ((1.0 - self.split_fraction) * class_size as f64).round() as usize
    }
}

/// A record paired with its 1-based class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeled {
    pub record: ProductRecord,
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Labeled>,
    pub test: Vec<Labeled>,
    pub k: usize,
    pub per_class_test_counts: Vec<usize>,
    /// Schedule inputs carried to the trainer: `f` and per-class sample count.
    pub split_fraction: f64,
    pub n_samples_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: u64,
    pub reason: String,
}

/// Records loaded from a corpus file plus the lines that were rejected.
#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub records: Vec<ProductRecord>,
    pub rejects: Vec<Reject>,
}

impl LoadedCorpus {
    /// Writes the rejects report as JSON-lines with fields `line` and `reason`.
    pub fn write_rejects(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for r in &self.rejects {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }
}

#[derive(Deserialize)]
struct CanonicalLine {
    category: Option<serde_json::Value>,
    description: Option<serde_json::Value>,
}

pub fn load_jsonl(path: &Path) -> Result<LoadedCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let loaded = parse_jsonl(&text);
    if loaded.records.is_empty() {
        return Err(Error::Format(format!(
            "no valid records in {} ({} rejected)",
            path.display(),
            loaded.rejects.len()
        )));
    }
    Ok(loaded)
}

/// Parses canonical JSON-lines text. Blank lines are skipped; malformed
/// lines become rejects.
pub fn parse_jsonl(text: &str) -> LoadedCorpus {
    let mut out = LoadedCorpus::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let reject = |reason: String| Reject {
            line: line_no,
            reason,
        };
        let parsed: CanonicalLine = match serde_json::from_str(line) {
            Ok(p) => p,
            Err(e) => {
                out.rejects.push(reject(format!("malformed json: {e}")));
                continue;
            }
        };
        match (parsed.category, parsed.description) {
            (Some(serde_json::Value::String(c)), Some(serde_json::Value::String(d))) => {
                out.records.push(ProductRecord::new(line_no, c, d));
            }
            (None, _) => out
                .rejects
                .push(reject("missing field \"category\"".into())),
            (_, None) => out
                .rejects
                .push(reject("missing field \"description\"".into())),
            _ => out.rejects.push(reject("fields must be strings".into())),
        }
    }
    out
}

/// Serializes records to canonical JSON-lines.
pub fn to_jsonl(records: &[ProductRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let line = serde_json::json!({ "category": r.category, "description": r.description });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

/// Keeps records whose trimmed description has strictly more than
/// `min_chars` characters.
pub fn filter_min_length(records: &[ProductRecord], min_chars: usize) -> Vec<ProductRecord> {
    records
        .iter()
        .filter(|r| r.trimmed_chars() > min_chars)
        .cloned()
        .collect()
}

pub fn select_classes(table: &CategoryTable, k: usize) -> Result<CategoryTable> {
    if k == 0 || k > table.len() {
        return Err(Error::arg(format!(
            "k must be in 1..={}, got {k}",
            table.len()
        )));
    }
    Ok(CategoryTable {
        entries: table.entries[..k].to_vec(),
    })
}

/// Draws exactly `n_samples_per_class` records per class without
/// replacement. Class `j` uses a generator seeded from `(cfg.seed, j)`, so
/// its draw does not depend on which other classes are present. Output is
/// grouped by class in table order, and within a class in source order.
pub fn sample_balanced(
    records: &[ProductRecord],
    classes: &CategoryTable,
    cfg: &SamplingConfig,
) -> Result<Vec<Labeled>> {
    cfg.validate()?;
    let mut by_class: BTreeMap<&str, Vec<&ProductRecord>> = BTreeMap::new();
    for r in records {
        by_class.entry(r.category.as_str()).or_default().push(r);
    }
    let n = cfg.n_samples_per_class;
    let mut out = Vec::with_capacity(n * classes.len());
    for entry in classes.entries() {
        let pool = by_class.get(entry.name.as_str()).map_or(&[][..], |v| v);
        if pool.len() < n {
            return Err(Error::InsufficientSamples {
                class: entry.name.clone(),
                available: pool.len(),
                required: n,
            });
        }
        let mut rng = rng_from(mix_seed(cfg.seed, &[entry.order_index as u64]));
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        let (chosen, _) = idx.partial_shuffle(&mut rng, n);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|i| Labeled {
            record: pool[i].clone(),
            class_index: entry.order_index,
        }));
    }
    Ok(out)
}

const SPLIT_TAG: u64 = 0x0053_504c_4954;

pub fn split(samples: &[Labeled], cfg: &SamplingConfig) -> Result<DatasetSplit> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::arg("cannot split an empty sample set"));
    }
    let k = samples.iter().map(|s| s.class_index).max().unwrap_or(0);
    if samples.iter().any(|s| s.class_index == 0) {
        return Err(Error::arg("class indices are 1-based"));
    }
    let mut is_test = vec![false; samples.len()];
    match cfg.split_mode {
        SplitMode::Stratified => {
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, s) in samples.iter().enumerate() {
                members[s.class_index - 1].push(i);
            }
            for (j, mut m) in members.into_iter().enumerate() {
                if m.is_empty() {
                    continue;
                }
                let t = cfg.test_count(m.len());
                if t >= m.len() {
                    return Err(Error::arg(format!(
                        "class {} would have an empty training set ({} of {} held out)",
                        j + 1,
                        t,
                        m.len()
                    )));
                }
                let mut rng = rng_from(mix_seed(cfg.seed, &[SPLIT_TAG, j as u64 + 1]));
                m.shuffle(&mut rng);
                for &i in &m[..t] {
                    is_test[i] = true;
                }
            }
        }
        SplitMode::Random => {
            let t = ((1.0 - cfg.split_fraction) * samples.len() as f64).round() as usize;
            let mut idx: Vec<usize> = (0..samples.len()).collect();
            let mut rng = rng_from(mix_seed(cfg.seed, &[SPLIT_TAG]));
            idx.shuffle(&mut rng);
            for &i in &idx[..t.min(samples.len())] {
                is_test[i] = true;
            }
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut per_class_test_counts = vec![0; k];
    for (s, held_out) in samples.iter().zip(is_test) {
        if held_out {
            per_class_test_counts[s.class_index - 1] += 1;
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    let mut class_sizes = vec![0usize; k];
    for s in samples {
        class_sizes[s.class_index - 1] += 1;
    }
    Ok(DatasetSplit {
        train,
        test,
        k,
        per_class_test_counts,
        split_fraction: cfg.split_fraction,
        n_samples_per_class: class_sizes.into_iter().max().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(descs: &[&str]) -> Vec<ProductRecord> {
        descs
            .iter()
            .enumerate()
            .map(|(i, d)| ProductRecord::new(i as u64 + 1, "Baby", *d))
            .collect()
    }

    fn pool(classes: &[&str], per_class: usize) -> Vec<ProductRecord> {
        let mut out = Vec::new();
        for c in classes {
            for i in 0..per_class {
                let line = out.len() as u64 + 1;
                out.push(ProductRecord::new(line, *c, format!("{c} item number {i}")));
            }
        }
        out
    }

    #[test]
    fn parse_single_record() {
        let c = parse_jsonl(r#"{"category":"Baby","description":"Soft cotton bib"}"#);
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.records[0].category, "Baby");
        assert_eq!(c.records[0].description, "Soft cotton bib");
        assert_eq!(c.records[0].id.line, 1);
        assert!(c.rejects.is_empty());
    }

    #[test]
    fn parse_counts_rejects() {
        let text = concat!(
            "{\"category\":\"Baby\",\"description\":\"one one\"}\n",
            "{\"category\":\"Baby\"}\n",
            "\n",
            "{\"category\":\"Baby\",\"description\":\"two two\"}\n",
            "{\"category\":\"Baby\",\"description\":\"three three\"}\n",
        );
        let c = parse_jsonl(text);
        assert_eq!(c.records.len(), 3);
        assert_eq!(c.rejects.len(), 1);
        assert_eq!(c.rejects[0].line, 2);
        assert!(c.rejects[0].reason.contains("description"));
        assert_eq!(c.records[2].id.line, 5);
    }

    #[test]
    fn load_empty_file_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        fs::write(&p, "").unwrap();
        let err = load_jsonl(&p).unwrap_err();
        assert!(err.to_string().contains("no valid records"), "{err}");
        assert!(matches!(
            load_jsonl(&dir.path().join("missing.jsonl")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn rejects_report_format() {
        let c = parse_jsonl("not json\n{\"description\":\"x\"}\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rejects.jsonl");
        c.write_rejects(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<serde_json::Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["line"], 1);
        assert_eq!(lines[1]["line"], 2);
        assert!(lines[1]["reason"].as_str().unwrap().contains("category"));
    }

    #[test]
    fn filter_is_strict() {
        let r = recs(&["abcde", "abcdef", "  abcde  "]);
        let kept = filter_min_length(&r, 5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].description, "abcdef");
    }

    #[test]
    fn filter_counts_scalar_values() {
        // five two-byte characters
        let r = recs(&["ééééé", "éééééé"]);
        assert_eq!(filter_min_length(&r, 5).len(), 1);
    }

    #[test]
    fn filter_zero_drops_blank_only() {
        let r = recs(&["", "   ", "a"]);
        let kept = filter_min_length(&r, 0);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].description, "a");
        assert!(filter_min_length(&recs(&["abc", "ab"]), 5).is_empty());
    }

    #[test]
    fn select_prefixes() {
        let t = CategoryTable::default_table();
        assert_eq!(
            select_classes(&t, 1).unwrap().names(),
            vec!["Musical instruments"]
        );
        assert_eq!(
            select_classes(&t, 3).unwrap().names(),
            vec!["Musical instruments", "Baby", "Patio, Lawn and Garden"]
        );
        assert_eq!(select_classes(&t, 20).unwrap(), t);
        assert!(select_classes(&t, 0).is_err());
        assert!(select_classes(&t, 21).is_err());
    }

    #[test]
    fn table_rejects_duplicates() {
        assert!(CategoryTable::new(["a", "b", "a"]).is_err());
        let t: CategoryTable = serde_json::from_str(r#"["x","y"]"#).unwrap();
        assert_eq!(t.index_of("y"), Some(2));
        assert_eq!(t.name(1), Some("x"));
        assert!(serde_json::from_str::<CategoryTable>(r#"["x","x"]"#).is_err());
    }

    #[test]
    fn sample_sizes_and_determinism() {
        let t = CategoryTable::new(["A", "B"]).unwrap();
        let recs = pool(&["A", "B"], 60);
        let cfg = SamplingConfig {
            n_samples_per_class: 50,
            seed: 9,
            ..SamplingConfig::reference()
        };
        let s1 = sample_balanced(&recs, &t, &cfg).unwrap();
        let s2 = sample_balanced(&recs, &t, &cfg).unwrap();
        assert_eq!(s1.len(), 100);
        assert_eq!(s1.iter().filter(|s| s.class_index == 1).count(), 50);
        assert_eq!(s1, s2);
        let ids: HashSet<_> = s1.iter().map(|s| s.record.id).collect();
        assert_eq!(ids.len(), 100);
    }

    #[test]
    fn sample_single_item() {
        let t = CategoryTable::new(["A"]).unwrap();
        let recs = pool(&["A"], 10);
        let cfg = SamplingConfig {
            n_samples_per_class: 1,
            seed: 3,
            ..SamplingConfig::reference()
        };
        let a = sample_balanced(&recs, &t, &cfg).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a, sample_balanced(&recs, &t, &cfg).unwrap());
    }

    #[test]
    fn sample_insufficient() {
        let t = CategoryTable::new(["A"]).unwrap();
        let recs = pool(&["A"], 4999);
        let err = sample_balanced(&recs, &t, &SamplingConfig::reference()).unwrap_err();
        assert_eq!(
            err.to_string(),
            "insufficient samples for class A: 4999 < 5000"
        );
    }

    #[test]
    fn class_draw_independent_of_other_classes() {
        let recs = pool(&["A", "B", "C"], 30);
        let cfg = SamplingConfig {
            n_samples_per_class: 10,
            seed: 5,
            ..SamplingConfig::reference()
        };
        let two = sample_balanced(&recs, &CategoryTable::new(["A", "B"]).unwrap(), &cfg).unwrap();
        let three =
            sample_balanced(&recs, &CategoryTable::new(["A", "B", "C"]).unwrap(), &cfg).unwrap();
        assert_eq!(&three[..20], &two[..]);
    }

    #[test]
    fn stratified_500_per_class() {
        let t = CategoryTable::new(["A", "B"]).unwrap();
        let recs = pool(&["A", "B"], 5000);
        let cfg = SamplingConfig::reference();
        let s = sample_balanced(&recs, &t, &cfg).unwrap();
        let sp = split(&s, &cfg).unwrap();
        assert_eq!(sp.per_class_test_counts, vec![500, 500]);
        assert_eq!(sp.train.len(), 9000);
        assert_eq!(sp.k, 2);
        let train: HashSet<_> = sp.train.iter().map(|l| l.record.id).collect();
        assert!(sp.test.iter().all(|l| !train.contains(&l.record.id)));
    }

    #[test]
    fn full_fraction_gives_empty_test() {
        let recs = pool(&["A"], 10);
        let cfg = SamplingConfig {
            n_samples_per_class: 10,
            split_fraction: 1.0,
            ..SamplingConfig::reference()
        };
        let s = sample_balanced(&recs, &CategoryTable::new(["A"]).unwrap(), &cfg).unwrap();
        for mode in [SplitMode::Stratified, SplitMode::Random] {
            let sp = split(
                &s,
                &SamplingConfig {
                    split_mode: mode,
                    ..cfg.clone()
                },
            )
            .unwrap();
            assert!(sp.test.is_empty());
            assert_eq!(sp.train.len(), 10);
        }
    }

    #[test]
    fn random_mode_deterministic() {
        let t = CategoryTable::new(["A", "B", "C"]).unwrap();
        let recs = pool(&["A", "B", "C"], 40);
        let cfg = SamplingConfig {
            n_samples_per_class: 40,
            split_mode: SplitMode::Random,
            seed: 11,
            ..SamplingConfig::reference()
        };
        let s = sample_balanced(&recs, &t, &cfg).unwrap();
        let a = split(&s, &cfg).unwrap();
        let b = split(&s, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.test.len(), 12);
    }

    #[test]
    fn stratified_rejects_empty_train() {
        let recs = pool(&["A"], 2);
        let cfg = SamplingConfig {
            n_samples_per_class: 2,
            split_fraction: 0.2,
            ..SamplingConfig::reference()
        };
        let s = sample_balanced(&recs, &CategoryTable::new(["A"]).unwrap(), &cfg).unwrap();
        assert!(split(&s, &cfg).is_err());
        assert!(split(&[], &cfg).is_err());
    }

    #[test]
    fn invalid_sampling_config() {
        let mut cfg = SamplingConfig::reference();
        cfg.split_fraction = 0.0;
        assert!(cfg.validate().is_err());
        cfg.split_fraction = 1.1;
        assert!(cfg.validate().is_err());
        cfg.split_fraction = 0.9;
        cfg.n_samples_per_class = 0;
        assert!(cfg.validate().is_err());
    }
}
