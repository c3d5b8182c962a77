//! Early-exit network topology: a chain of main-branch layers with side
//! branches attached after some of them.
//!
//! Models are read from a small TOML document:
//!
//! ```toml
//! input_bytes = 150528
//!
//! [[layers]]
//! name = "conv1"
//! output_bytes = 279936
//!
//! [[branches]]
//! after_layer = 1
//! exit_probability = 0.5
//! ```
//!
//! Layer indices are implied by position (1-based). Unknown fields are
//! rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One main-branch layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    /// 1-based position in the main branch.
    pub index: usize,
    pub name: String,
    /// Size of the layer's output tensor in bytes.
    pub output_bytes: u64,
}

/// A side branch (early exit) attached to the output of a main-branch layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSpec {
    /// Index of the main-branch layer this branch follows.
    pub after_layer: usize,
    /// Probability that a sample reaching this branch exits here.
    pub exit_probability: f64,
    /// Output size of the branch itself. Never transmitted by the current
    /// delay model.
    pub processing_bytes: u64,
}

impl BranchSpec {
    pub fn new(after_layer: usize, exit_probability: f64) -> Self {
        Self {
            after_layer,
            exit_probability,
            processing_bytes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchyModel {
    pub layers: Vec<LayerSpec>,
    pub branches: Vec<BranchSpec>,
    /// Raw input sample size; this is what gets uploaded for cloud-only runs.
    pub input_bytes: u64,
}

/// A violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationError {
    NoLayers,
    LayerIndexGap { position: usize, found: usize },
    BranchAfterOutputLayer { after_layer: usize },
    BranchMissingLayer { after_layer: usize },
    ProbabilityOutOfRange { after_layer: usize, value: f64 },
    DuplicateBranch { after_layer: usize },
    BranchesUnsorted { after_layer: usize },
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationError::NoLayers => write!(f, "at least one layer required"),
            ValidationError::LayerIndexGap { position, found } => write!(
                f,
                "layer index gap: position {position} carries index {found}"
            ),
            ValidationError::BranchAfterOutputLayer { after_layer } => {
                write!(f, "branch after output layer (after_layer = {after_layer})")
            }
            ValidationError::BranchMissingLayer { after_layer } => write!(
                f,
                "branch references missing layer (after_layer = {after_layer})"
            ),
            ValidationError::ProbabilityOutOfRange { after_layer, value } => write!(
                f,
                "exit_probability out of [0,1] (branch after layer {after_layer}: {value})"
            ),
            ValidationError::DuplicateBranch { after_layer } => {
                write!(f, "duplicate branch position (after_layer = {after_layer})")
            }
            ValidationError::BranchesUnsorted { after_layer } => write!(
                f,
                "branches not sorted by after_layer (at after_layer = {after_layer})"
            ),
        }
    }
}

impl BranchyModel {
    /// Builds a model from layer output sizes, assigning indices 1..n.
    pub fn from_sizes<S: Into<String>>(
        input_bytes: u64,
        layers: impl IntoIterator<Item = (S, u64)>,
        branches: Vec<BranchSpec>,
    ) -> Self {
        let layers = layers
            .into_iter()
            .enumerate()
            .map(|(i, (name, output_bytes))| LayerSpec {
                index: i + 1,
                name: name.into(),
                output_bytes,
            })
            .collect();
        Self {
            layers,
            branches,
            input_bytes,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    /// Position of the branch attached after `layer`, if any, in model order.
    pub fn branch_after(&self, layer: usize) -> Option<usize> {
        self.branches
            .binary_search_by_key(&layer, |b| b.after_layer)
            .ok()
    }

    pub fn exit_probabilities(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.exit_probability).collect()
    }

    /// Returns a copy with every branch probability replaced.
    pub fn with_probabilities(&self, probabilities: &[f64]) -> Result<Self> {
        if probabilities.len() != self.branches.len() {
            return Err(Error::invalid(format!(
                "expected {} branch probabilities, got {}",
                self.branches.len(),
                probabilities.len()
            )));
        }
        let mut model = self.clone();
        for (branch, &p) in model.branches.iter_mut().zip(probabilities) {
            branch.exit_probability = p;
        }
        model.validated()
    }

    /// Checks every model invariant and reports all violations.
    pub fn validate(&self) -> std::result::Result<(), Vec<ValidationError>> {
        let mut errors = Vec::new();
        let n = self.layers.len();
        if n == 0 {
            errors.push(ValidationError::NoLayers);
        }
        for (pos, layer) in self.layers.iter().enumerate() {
            if layer.index != pos + 1 {
                errors.push(ValidationError::LayerIndexGap {
                    position: pos + 1,
                    found: layer.index,
                });
            }
        }
        let mut prev: Option<usize> = None;
        for branch in &self.branches {
            let k = branch.after_layer;
            if k == 0 || k > n {
                errors.push(ValidationError::BranchMissingLayer { after_layer: k });
            } else if k == n {
                errors.push(ValidationError::BranchAfterOutputLayer { after_layer: k });
            }
            let p = branch.exit_probability;
            if !(0.0..=1.0).contains(&p) {
                errors.push(ValidationError::ProbabilityOutOfRange {
                    after_layer: k,
                    value: p,
                });
            }
            match prev {
                Some(q) if q == k => {
                    errors.push(ValidationError::DuplicateBranch { after_layer: k })
                }
                Some(q) if q > k => {
                    errors.push(ValidationError::BranchesUnsorted { after_layer: k })
                }
                _ => {}
            }
            prev = Some(k);
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    pub fn validated(self) -> Result<Self> {
        self.validate().map_err(Error::Validation)?;
        Ok(self)
    }

    /// Parses and validates a model document.
    pub fn from_toml_str(document: &str) -> Result<Self> {
        Self::parse_unvalidated(document)?.validated()
    }

    /// Parses a model document without checking model invariants.
    pub fn parse_unvalidated(document: &str) -> Result<Self> {
        let doc: ModelDocument =
            toml::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(doc.into_model())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_unvalidated(path)?.validated()
    }

    pub fn load_unvalidated(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_unvalidated(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        let doc = ModelDocument::from_model(self);
        toml::to_string(&doc).expect("model documents always serialize")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    input_bytes: u64,
    #[serde(default)]
    layers: Vec<LayerEntry>,
    #[serde(default)]
    branches: Vec<BranchEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerEntry {
    name: String,
    output_bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchEntry {
    after_layer: usize,
    exit_probability: f64,
}

impl ModelDocument {
    fn into_model(self) -> BranchyModel {
        BranchyModel::from_sizes(
            self.input_bytes,
            self.layers.into_iter().map(|l| (l.name, l.output_bytes)),
            self.branches
                .into_iter()
                .map(|b| BranchSpec::new(b.after_layer, b.exit_probability))
                .collect(),
        )
    }

    fn from_model(model: &BranchyModel) -> Self {
        Self {
            input_bytes: model.input_bytes,
            layers: model
                .layers
                .iter()
                .map(|l| LayerEntry {
                    name: l.name.clone(),
                    output_bytes: l.output_bytes,
                })
                .collect(),
            branches: model
                .branches
                .iter()
                .map(|b| BranchEntry {
                    after_layer: b.after_layer,
                    exit_probability: b.exit_probability,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three_layer(branches: Vec<BranchSpec>) -> BranchyModel {
        BranchyModel::from_sizes(100, [("a", 10), ("b", 20), ("c", 30)], branches)
    }

    fn messages(model: &BranchyModel) -> Vec<String> {
        model
            .validate()
            .unwrap_err()
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    #[test]
    fn well_formed_model_validates() {
        assert!(three_layer(vec![BranchSpec::new(1, 0.5)])
            .validate()
            .is_ok());
    }

    #[test]
    fn branch_after_output_layer_rejected() {
        let msgs = messages(&three_layer(vec![BranchSpec::new(3, 0.5)]));
        assert!(msgs[0].contains("branch after output layer"));
    }

    #[test]
    fn duplicate_branch_rejected() {
        let m = three_layer(vec![BranchSpec::new(2, 0.1), BranchSpec::new(2, 0.2)]);
        assert!(messages(&m)[0].contains("duplicate branch position"));
    }

    #[test]
    fn reports_every_violation() {
        let mut m = three_layer(vec![
            BranchSpec::new(2, 1.5),
            BranchSpec::new(1, 0.2),
            BranchSpec::new(0, 0.2),
        ]);
        m.layers[1].index = 7;
        let errs = m.validate().unwrap_err();
        assert_eq!(errs.len(), 5, "{errs:?}");
    }

    #[test]
    fn nan_probability_rejected() {
        let m = three_layer(vec![BranchSpec::new(1, f64::NAN)]);
        assert!(messages(&m)[0].contains("exit_probability out of [0,1]"));
    }

    #[test]
    fn empty_layer_list_rejected() {
        let err = BranchyModel::from_toml_str("input_bytes = 10\nlayers = []\n").unwrap_err();
        assert!(err.to_string().contains("at least one layer required"));
    }

    #[test]
    fn probability_above_one_rejected() {
        let doc = "input_bytes = 1\n[[layers]]\nname='a'\noutput_bytes=1\n\
                   [[layers]]\nname='b'\noutput_bytes=1\n\
                   [[branches]]\nafter_layer=1\nexit_probability=1.3\n";
        let err = BranchyModel::from_toml_str(doc).unwrap_err();
        assert!(err.to_string().contains("exit_probability out of [0,1]"));
    }

    #[test]
    fn unknown_fields_rejected_with_location() {
        let doc = "input_bytes = 1\n[[layers]]\nname='a'\noutput_bytes=1\nkind='conv'\n";
        let err = BranchyModel::from_toml_str(doc).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse(_)));
        assert!(msg.contains("kind") && msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn bundled_alexnet_model() {
        let m = BranchyModel::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/b_alexnet.model"))
            .unwrap();
        assert_eq!(m.num_layers(), 8);
        assert_eq!(m.branches.len(), 1);
        assert_eq!(m.branches[0].after_layer, 1);
        assert_eq!(m.input_bytes, 150_528);
    }

    #[test]
    fn branch_lookup() {
        let m = three_layer(vec![BranchSpec::new(1, 0.1), BranchSpec::new(2, 0.2)]);
        assert_eq!(m.branch_after(2), Some(1));
        assert_eq!(m.branch_after(3), None);
    }

    fn arb_model() -> impl Strategy<Value = BranchyModel> {
        (1usize..10, any::<u32>())
            .prop_flat_map(|(n, input)| {
                (
                    Just(n),
                    Just(input as u64),
                    prop::collection::vec(any::<u32>(), n),
                    prop::collection::vec((any::<bool>(), 0.0f64..=1.0), n - 1),
                )
            })
            .prop_map(|(_n, input, sizes, branch_flags)| {
                let branches = branch_flags
                    .iter()
                    .enumerate()
                    .filter(|(_, (on, _))| *on)
                    .map(|(i, &(_, p))| BranchSpec::new(i + 1, p))
                    .collect();
                BranchyModel::from_sizes(
                    input,
                    sizes
                        .iter()
                        .enumerate()
                        .map(|(i, &s)| (format!("l{i}"), s as u64)),
                    branches,
                )
            })
    }

    proptest! {
        #[test]
        fn toml_round_trip(model in arb_model()) {
            let text = model.to_toml_string();
            let back = BranchyModel::from_toml_str(&text).unwrap();
            prop_assert_eq!(back, model);
        }

        #[test]
        fn validate_is_total(
            n in 0usize..5,
            branches in prop::collection::vec((0usize..8, -1.0f64..2.0), 0..6),
        ) {
            let m = BranchyModel::from_sizes(
                0,
                (0..n).map(|i| (format!("l{i}"), i as u64)),
                branches.into_iter().map(|(k, p)| BranchSpec::new(k, p)).collect(),
            );
            let _ = m.validate();
        }
    }
}
