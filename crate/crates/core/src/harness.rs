//! Parameter sweeps: solve the partition problem once per value of a swept
//! parameter and collect the decisions into a table.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::BranchyModel;
use crate::solver::{solve, CutPoint, PartitionDecision};
use crate::timing::{check_probability, NetworkProfile, ProfileTable, TimingProfile};

pub const TOOL_VERSION: &str = concat!("branchcut ", env!("CARGO_PKG_VERSION"));

/// Non-swept inputs of a solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    /// Edge/cloud processing ratio. When absent the profile's edge column is used.
    pub gamma: Option<f64>,
    pub bandwidth_bps: Option<f64>,
    /// Branch probability overrides: one value for every branch, or one per
    /// branch in model order. When absent the model's own values are used.
    pub probabilities: Option<Vec<f64>>,
}

impl Scenario {
    pub fn instantiate(
        &self,
        model: &BranchyModel,
        table: &ProfileTable,
    ) -> Result<(BranchyModel, TimingProfile, NetworkProfile)> {
        let bandwidth = self
            .bandwidth_bps
            .ok_or_else(|| Error::invalid("bandwidth is required"))?;
        let net = NetworkProfile::new(bandwidth)?;
        let model = match &self.probabilities {
            None => model.clone(),
            Some(ps) if ps.len() == 1 => {
                model.with_probabilities(&vec![ps[0]; model.num_branches()])?
            }
            Some(ps) => model.with_probabilities(ps)?,
        };
        let profile = table.to_profile(&model, self.gamma)?;
        Ok((model, profile, net))
    }

    pub fn solve(&self, model: &BranchyModel, table: &ProfileTable) -> Result<PartitionDecision> {
        let (model, profile, net) = self.instantiate(model, table)?;
        solve(&model, &profile, &net)
    }

    fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(g) = self.gamma {
            parts.push(format!("gamma={g}"));
        }
        if let Some(b) = self.bandwidth_bps {
            parts.push(format!("bandwidth_bps={b}"));
        }
        if let Some(ps) = &self.probabilities {
            let list: Vec<String> = ps.iter().map(ToString::to_string).collect();
            parts.push(format!("p={}", list.join(",")));
        }
        parts.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Exit probability of the branch after the given layer, or of every
    /// branch when `None`.
    Probability {
        after_layer: Option<usize>,
    },
    Gamma,
    Bandwidth,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepValues {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl SweepValues {
    /// Expands to the explicit value list. Ranges include `stop` when it lies
    /// on the step grid.
    pub fn expand(&self) -> Result<Vec<f64>> {
        match *self {
            SweepValues::List(ref v) => Ok(v.clone()),
            SweepValues::Range { start, stop, step } => {
                if !(step.is_finite() && step > 0.0 && start.is_finite() && stop.is_finite()) {
                    return Err(Error::invalid(format!(
                        "bad range {start}..{stop} step {step}"
                    )));
                }
                if stop < start {
                    return Err(Error::invalid(format!(
                        "range stop {stop} below start {start}"
                    )));
                }
                let steps = ((stop - start) / step + 1e-9).floor() as usize;
                Ok((0..=steps)
                    .map(|i| {
                        // snap to a 1e-12 grid so 0.1-style steps print cleanly
                        let v = start + i as f64 * step;
                        let snapped = (v * 1e12).round() / 1e12;
                        if (v - stop).abs() <= 1e-9 * step {
                            stop
                        } else if (snapped - v).abs() <= 1e-12 * v.abs().max(1.0) {
                            snapped
                        } else {
                            v
                        }
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: SweepValues,
    pub fixed: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub cut: CutPoint,
    pub cut_index: usize,
    pub expected_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMetadata {
    pub model: String,
    pub variable: SweepVariable,
    pub fixed: Scenario,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub metadata: SweepMetadata,
    pub rows: Vec<SweepRow>,
}

impl SweepSpec {
    fn check(&self, values: &[f64], model: &BranchyModel) -> Result<()> {
        if values.is_empty() {
            return Err(Error::invalid("sweep has no values"));
        }
        for &v in values {
            match self.variable {
                SweepVariable::Probability { .. } => check_probability(v)?,
                SweepVariable::Gamma if !(v.is_finite() && v > 1.0) => {
                    return Err(Error::invalid(format!("gamma must be > 1, got {v}")))
                }
                SweepVariable::Bandwidth if !(v.is_finite() && v > 0.0) => {
                    return Err(Error::invalid(format!("bandwidth must be > 0, got {v}")))
                }
                _ => {}
            }
        }
        if let SweepVariable::Probability {
            after_layer: Some(k),
        } = self.variable
        {
            if model.branch_after(k).is_none() {
                return Err(Error::invalid(format!(
                    "model has no branch after layer {k}"
                )));
            }
        }
        if model.num_branches() == 0 && matches!(self.variable, SweepVariable::Probability { .. }) {
            return Err(Error::invalid(
                "probability sweep on a model without branches",
            ));
        }
        Ok(())
    }

    /// The scenario solved for one swept value.
    pub fn scenario_at(&self, model: &BranchyModel, value: f64) -> Scenario {
        let mut s = self.fixed.clone();
        match self.variable {
            SweepVariable::Gamma => s.gamma = Some(value),
            SweepVariable::Bandwidth => s.bandwidth_bps = Some(value),
            SweepVariable::Probability { after_layer } => {
                let mut ps = match &s.probabilities {
                    Some(p) if p.len() == 1 => vec![p[0]; model.num_branches()],
                    Some(p) => p.clone(),
                    None => model.exit_probabilities(),
                };
                match after_layer.and_then(|k| model.branch_after(k)) {
                    Some(b) if b < ps.len() => ps[b] = value,
                    _ => ps.iter_mut().for_each(|p| *p = value),
                }
                s.probabilities = Some(ps);
            }
        }
        s
    }

    /// Runs the sweep on in-memory inputs. Points are solved in parallel and
    /// returned in input order.
    pub fn run(
        &self,
        model_id: &str,
        model: &BranchyModel,
        table: &ProfileTable,
    ) -> Result<SweepResult> {
        let values = self.values.expand()?;
        self.check(&values, model)?;
        let rows = values
            .par_iter()
            .map(|&value| {
                let d = self.scenario_at(model, value).solve(model, table)?;
                Ok(SweepRow {
                    value,
                    cut: d.cut,
                    cut_index: d.cut_index,
                    expected_time_s: d.expected_time_s,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepResult {
            metadata: SweepMetadata {
                model: model_id.to_string(),
                variable: self.variable,
                fixed: self.fixed.clone(),
                tool_version: TOOL_VERSION.to_string(),
            },
            rows,
        })
    }
}

/// Loads the model and profile from disk and runs the sweep.
pub fn run_sweep(spec: &SweepSpec, model_path: &Path, profile_path: &Path) -> Result<SweepResult> {
    let model = BranchyModel::load(model_path)?;
    let table = ProfileTable::load(profile_path)?;
    spec.run(&model_path.display().to_string(), &model, &table)
}

impl SweepResult {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let m = &self.metadata;
        let var = match m.variable {
            SweepVariable::Probability {
                after_layer: Some(k),
            } => {
                format!("probability (branch after layer {k})")
            }
            SweepVariable::Probability { after_layer: None } => "probability (all branches)".into(),
            SweepVariable::Gamma => "gamma".into(),
            SweepVariable::Bandwidth => "bandwidth_bps".into(),
        };
        let _ = writeln!(out, "# {}", m.tool_version);
        let _ = writeln!(out, "# model: {}", m.model);
        let _ = writeln!(out, "# sweep: {var}");
        let _ = writeln!(out, "# fixed: {}", m.fixed.describe());
        out.push_str("value\tcut\tcut_index\texpected_time_s\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.value, r.cut, r.cut_index, r.expected_time_s
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sweep results always serialize");
        s.push('\n');
        s
    }
}
