//! Exit-probability estimation from per-sample classification entropy.
//!
//! A sample exits at a branch when its entropy there is strictly below the
//! branch threshold.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSamples {
    pub branch_index: usize,
    pub entropies: Vec<f64>,
    /// Condition tag, e.g. `blur-65`.
    pub label: String,
}

impl ConfidenceSamples {
    pub fn new(branch_index: usize, entropies: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if entropies.is_empty() {
            return Err(Error::invalid("sample set is empty"));
        }
        if let Some(bad) = entropies.iter().find(|h| !(h.is_finite() && **h >= 0.0)) {
            return Err(Error::invalid(format!(
                "entropies must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self {
            branch_index,
            entropies,
            label: label.into(),
        })
    }

    pub fn max_entropy(&self) -> f64 {
        self.entropies.iter().copied().fold(0.0, f64::max)
    }
}

/// Fraction of samples whose entropy is strictly below `threshold`.
pub fn exit_probability_at_threshold(samples: &ConfidenceSamples, threshold: f64) -> Result<f64> {
    if samples.entropies.is_empty() {
        return Err(Error::invalid("sample set is empty"));
    }
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    let exits = samples.entropies.iter().filter(|&&h| h < threshold).count();
    Ok(exits as f64 / samples.entropies.len() as f64)
}

/// Exit probability at each threshold; thresholds must be sorted ascending.
pub fn probability_curve(
    samples: &ConfidenceSamples,
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if let Some(w) = thresholds.windows(2).find(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid(format!(
            "thresholds must be sorted ascending ({} before {})",
            w[0], w[1]
        )));
    }
    thresholds
        .iter()
        .map(|&t| exit_probability_at_threshold(samples, t).map(|p| (t, p)))
        .collect()
}

/// Shannon entropy (natural log) of a class-probability vector. Zero
/// entries contribute nothing.
pub fn shannon_entropy(probabilities: &[f64]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::invalid("probability vector is empty"));
    }
    if let Some(bad) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!(
            "class probability {bad} outside [0, 1]"
        )));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "class probabilities sum to {total}, expected 1"
        )));
    }
    Ok(probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum::<f64>()
        .max(0.0))
}

#[derive(Debug, Deserialize)]
struct SampleRow {
    branch_index: usize,
    entropy: f64,
    label: String,
}

/// Reads a `branch_index, entropy, label` table and groups rows by
/// (branch, label) in first-appearance order.
pub fn read_samples(reader: impl Read) -> Result<Vec<ConfidenceSamples>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut order: Vec<(usize, String)> = Vec::new();
    let mut groups: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<SampleRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse(format!("samples row {}: {e}", i + 2)))?;
        let key = (row.branch_index, row.label);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(row.entropy);
    }
    order
        .into_iter()
        .map(|key| {
            let entropies = groups.remove(&key).unwrap_or_default();
            ConfidenceSamples::new(key.0, entropies, key.1)
        })
        .collect()
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<ConfidenceSamples>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_samples(file).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples(h: &[f64]) -> ConfidenceSamples {
        ConfidenceSamples::new(1, h.to_vec(), "t").unwrap()
    }

    #[test]
    fn threshold_examples() {
        let s = samples(&[0.1, 0.4, 0.9]);
        assert_eq!(exit_probability_at_threshold(&s, 0.0).unwrap(), 0.0);
        assert_eq!(exit_probability_at_threshold(&s, 1.0).unwrap(), 1.0);
        assert_eq!(exit_probability_at_threshold(&s, 0.5).unwrap(), 2.0 / 3.0);
        // strict inequality
        assert_eq!(exit_probability_at_threshold(&s, 0.4).unwrap(), 1.0 / 3.0);
        assert!(exit_probability_at_threshold(&s, -0.1).is_err());
    }

    #[test]
    fn empty_samples_rejected() {
        assert!(ConfidenceSamples::new(1, vec![], "x").is_err());
        let s = ConfidenceSamples {
            branch_index: 1,
            entropies: vec![],
            label: "x".into(),
        };
        assert!(exit_probability_at_threshold(&s, 0.5).is_err());
    }

    #[test]
    fn curve_endpoints_and_duplicates() {
        let s = samples(&[0.2, 0.3, 0.6]);
        let top = s.max_entropy() + 1.0;
        assert_eq!(
            probability_curve(&s, &[0.0, top]).unwrap(),
            vec![(0.0, 0.0), (top, 1.0)]
        );
        let c = probability_curve(&s, &[0.25, 0.25]).unwrap();
        assert_eq!(c[0], c[1]);
        assert!(probability_curve(&s, &[0.5, 0.1]).is_err());
    }

    #[test]
    fn entropy_helper() {
        assert_eq!(shannon_entropy(&[1.0, 0.0]).unwrap(), 0.0);
        let h = shannon_entropy(&[0.5, 0.5]).unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(shannon_entropy(&[0.5, 0.2]).is_err());
    }

    #[test]
    fn reads_grouped_samples() {
        let text = "branch_index,entropy,label\n1,0.1,a\n1,0.2,b\n1,0.3,a\n";
        let groups = read_samples(text.as_bytes()).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].label, "a");
        assert_eq!(groups[0].entropies, vec![0.1, 0.3]);
        assert!(read_samples("branch_index,entropy,label\n1,-1,a\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn curve_is_monotone_probability(
            h in prop::collection::vec(0.0f64..3.0, 1..50),
            mut t in prop::collection::vec(0.0f64..4.0, 0..30),
        ) {
            t.sort_by(f64::total_cmp);
            let c = probability_curve(&samples(&h), &t).unwrap();
            prop_assert!(c.iter().all(|&(_, p)| (0.0..=1.0).contains(&p)));
            prop_assert!(c.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }
}
