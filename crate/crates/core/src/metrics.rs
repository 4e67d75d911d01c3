//! Confusion matrices and the macro-averaged metric suite.
//!
//! Classes are 1-based throughout. Per-class ratios with a zero denominator
//! are reported as 0 with the matching `*_defined` flag cleared, so macro
//! averages always divide by `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    /// Row-major, `counts[(truth - 1) * k + (pred - 1)]`.
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("confusion matrix needs k >= 1"));
        }
        Ok(ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        let mut cm = ConfusionMatrix::zeros(k)?;
        for (a, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::arg("confusion matrix must be square"));
            }
            cm.counts[a * k..(a + 1) * k].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Count of items with true class `truth` predicted as `pred` (1-based).
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[(truth - 1) * self.k + pred - 1]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[(truth - 1) * self.k + pred - 1] += 1;
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, j: usize) -> u64 {
        self.get(j, j)
    }

    pub fn false_positives(&self, j: usize) -> u64 {
        (1..=self.k).map(|a| self.get(a, j)).sum::<u64>() - self.get(j, j)
    }

    pub fn false_negatives(&self, j: usize) -> u64 {
        (1..=self.k).map(|b| self.get(j, b)).sum::<u64>() - self.get(j, j)
    }

    /// Items whose true class is `j`.
    pub fn support(&self, j: usize) -> u64 {
        (1..=self.k).map(|b| self.get(j, b)).sum()
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::arg(format!(
            "label lists differ in length: {} vs {}",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::arg("label lists are empty"));
    }
    let mut cm = ConfusionMatrix::zeros(k)?;
    for (&t, &p) in truth.iter().zip(predicted) {
        if t == 0 || t > k || p == 0 || p > k {
            return Err(Error::arg(format!(
                "label out of range 1..={k}: ({t}, {p})"
            )));
        }
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_index: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub f1_defined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

pub fn class_metrics(cm: &ConfusionMatrix, j: usize) -> Result<ClassMetrics> {
    if j == 0 || j > cm.k {
        return Err(Error::arg(format!("class {j} out of range 1..={}", cm.k)));
    }
    let tp = cm.true_positives(j);
    let (precision, precision_defined) = ratio(tp, tp + cm.false_positives(j));
    let (recall, recall_defined) = ratio(tp, tp + cm.false_negatives(j));
    let (f1, f1_defined) = if precision + recall > 0.0 {
        (2.0 * precision * recall / (precision + recall), true)
    } else {
        (0.0, false)
    };
    Ok(ClassMetrics {
        class_index: j,
        precision,
        recall,
        f1,
        support: cm.support(j),
        precision_defined,
        recall_defined,
        f1_defined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroReport {
    pub k: usize,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub total_test_items: u64,
}

pub fn macro_report(cm: &ConfusionMatrix) -> Result<MacroReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::arg("confusion matrix holds no items"));
    }
    let per_class = (1..=cm.k)
        .map(|j| class_metrics(cm, j))
        .collect::<Result<Vec<_>>>()?;
    let k = cm.k as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    let correct: u64 = (1..=cm.k).map(|j| cm.true_positives(j)).sum();
    Ok(MacroReport {
        k: cm.k,
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        accuracy: correct as f64 / total as f64,
        total_test_items: total,
        per_class,
    })
}

/// Per-class CSV rows: `k,class_index,class_name,precision,recall,f1,support`.
pub fn per_class_csv(report: &MacroReport, names: &[&str]) -> Result<String> {
    if names.len() != report.k {
        return Err(Error::arg(format!(
            "{} class names given for k={}",
            names.len(),
            report.k
        )));
    }
    let mut out = String::from("k,class_index,class_name,precision,recall,f1,support\n");
    for (c, name) in report.per_class.iter().zip(names) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            report.k,
            c.class_index,
            csv_field(name),
            c.precision,
            c.recall,
            c.f1,
            c.support
        ));
    }
    Ok(out)
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Parses a per-class CSV back into per-class metrics and class names.
/// Zero-division flags are not stored in the CSV and come back set.
pub fn parse_per_class_csv(text: &str) -> Result<(Vec<ClassMetrics>, Vec<String>)> {
    let mut metrics = Vec::new();
    let mut names = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        let bad = || Error::Format(format!("per-class csv line {}: {line:?}", i + 1));
        if fields.len() != 7 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let precision = num(&fields[3])?;
        let recall = num(&fields[4])?;
        let f1 = num(&fields[5])?;
        metrics.push(ClassMetrics {
            class_index: fields[1].parse().map_err(|_| bad())?,
            precision,
            recall,
            f1,
            support: fields[6].parse().map_err(|_| bad())?,
            precision_defined: true,
            recall_defined: true,
            f1_defined: precision + recall > 0.0,
        });
        names.push(fields[2].clone());
    }
    Ok((metrics, names))
}

pub(crate) fn split_csv_line(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn tabulates() {
        let c = confusion(&[1, 1, 2], &[1, 2, 2], 2).unwrap();
        assert_eq!(c.rows(), vec![vec![1, 1], vec![0, 1]]);
        let d = confusion(&[1, 2, 3, 2], &[1, 2, 3, 2], 3).unwrap();
        assert_eq!(d.rows(), vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        assert_eq!(
            confusion(&[1; 7], &[1; 7], 1).unwrap().rows(),
            vec![vec![7]]
        );
    }

    #[test]
    fn confusion_errors() {
        assert!(confusion(&[1, 2], &[1], 2).is_err());
        assert!(confusion(&[1, 3], &[1, 1], 2).is_err());
        assert!(confusion(&[0], &[1], 2).is_err());
        assert!(confusion(&[], &[], 2).is_err());
    }

    #[test]
    fn per_class_hand_values() {
        // [[3,1],[2,4]]: class 1 TP 3 FP 2 FN 1; class 2 TP 4 FP 1 FN 2
        let c = cm(&[&[3, 1], &[2, 4]]);
        let m1 = class_metrics(&c, 1).unwrap();
        assert!((m1.precision - 0.6).abs() < 1e-15);
        assert!((m1.recall - 0.75).abs() < 1e-15);
        assert!((m1.f1 - 2.0 / 3.0).abs() < 1e-15);
        let m2 = class_metrics(&c, 2).unwrap();
        assert!((m2.precision - 0.8).abs() < 1e-15);
        assert!((m2.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m2.f1 - 8.0 / 11.0).abs() < 1e-15);
        assert!(class_metrics(&c, 3).is_err());
        assert!(class_metrics(&c, 0).is_err());
    }

    #[test]
    fn absent_class_convention() {
        let c = cm(&[&[2, 1, 0], &[1, 3, 0], &[0, 0, 0]]);
        let m = class_metrics(&c, 3).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(!m.precision_defined && !m.recall_defined && !m.f1_defined);
    }

    #[test]
    fn macro_hand_values() {
        let r = macro_report(&cm(&[&[3, 1], &[2, 4]])).unwrap();
        assert!((r.macro_precision - 0.7).abs() < 1e-15);
        assert!((r.macro_recall - 17.0 / 24.0).abs() < 1e-15);
        assert!((r.macro_f1 - 23.0 / 33.0).abs() < 1e-15);
        assert!((r.accuracy - 0.7).abs() < 1e-15);
        assert_eq!(r.total_test_items, 10);
    }

    #[test]
    fn perfect_and_single_class() {
        let r = macro_report(&cm(&[&[5, 0, 0], &[0, 2, 0], &[0, 0, 9]])).unwrap();
        for x in [r.macro_precision, r.macro_recall, r.macro_f1, r.accuracy] {
            assert_eq!(x, 1.0);
        }
        let r = macro_report(&cm(&[&[50]])).unwrap();
        for x in [r.macro_precision, r.macro_recall, r.macro_f1, r.accuracy] {
            assert_eq!(x, 1.0);
        }
        assert!(macro_report(&cm(&[&[0, 0], &[0, 0]])).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let r = macro_report(&cm(&[&[3, 1], &[2, 4]])).unwrap();
        let text = per_class_csv(&r, &["Patio, Lawn and Garden", "Baby"]).unwrap();
        assert!(text.starts_with("k,class_index,class_name,precision,recall,f1,support\n"));
        assert!(text.contains("\"Patio, Lawn and Garden\""));
        let (metrics, names) = parse_per_class_csv(&text).unwrap();
        assert_eq!(names, vec!["Patio, Lawn and Garden", "Baby"]);
        assert_eq!(metrics[1].precision, r.per_class[1].precision);
        assert_eq!(metrics[0].support, 4);
        assert!(per_class_csv(&r, &["only one"]).is_err());
    }

    proptest! {
        #[test]
        fn balanced_rows_recall_equals_accuracy(k in 1usize..12, n in 1u64..60, seed in any::<u64>()) {
            let mut rng = crate::util::rng_from(seed);
            let mut rows = Vec::new();
            for _ in 0..k {
                use rand::Rng;
                let mut row = vec![0u64; k];
                for _ in 0..n {
                    row[rng.gen_range(0..k)] += 1;
                }
                rows.push(row);
            }
            let r = macro_report(&ConfusionMatrix::from_rows(&rows).unwrap()).unwrap();
            prop_assert!((r.macro_recall - r.accuracy).abs() < 1e-12);
        }

        #[test]
        fn permutation_equivariance(rows in (1usize..8).prop_flat_map(|k| prop::collection::vec(prop::collection::vec(0u64..50, k), k)), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let k = rows.len();
            prop_assume!(rows.iter().flatten().sum::<u64>() > 0);
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut crate::util::rng_from(seed));
            let mut permuted = vec![vec![0u64; k]; k];
            for a in 0..k {
                for b in 0..k {
                    permuted[perm[a]][perm[b]] = rows[a][b];
                }
            }
            let r1 = macro_report(&ConfusionMatrix::from_rows(&rows).unwrap()).unwrap();
            let r2 = macro_report(&ConfusionMatrix::from_rows(&permuted).unwrap()).unwrap();
            for (a, &pa) in perm.iter().enumerate() {
                prop_assert!((r1.per_class[a].f1 - r2.per_class[pa].f1).abs() < 1e-12);
            }
            prop_assert!((r1.macro_precision - r2.macro_precision).abs() < 1e-12);
            prop_assert!((r1.macro_recall - r2.macro_recall).abs() < 1e-12);
            prop_assert!((r1.macro_f1 - r2.macro_f1).abs() < 1e-12);
            prop_assert!((r1.accuracy - r2.accuracy).abs() < 1e-12);
            for x in [r1.macro_precision, r1.macro_recall, r1.macro_f1, r1.accuracy] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
    }
}
