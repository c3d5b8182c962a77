//! Delay model: per-layer processing and transfer times, the exit
//! distribution over side branches, and the analytic expected inference time
//! for a given partition point.
//!
//! A partition point ("cut") is an integer `s` in `0..=n` for an `n`-layer
//! chain: layers `1..=s` run on the edge, layers `s+1..=n` in the cloud.
//! `s = 0` is cloud-only (the raw input is uploaded) and `s = n` is edge-only
//! (nothing is uploaded). A side branch after layer `k` is evaluated on the
//! edge only when `k < s`; the transfer for cut `s` leaves before the branch
//! attached to layer `s`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BranchyModel;

/// Uplink rates of common access technologies, in bits per second.
pub const RATE_3G_BPS: f64 = 1.10e6;
pub const RATE_4G_BPS: f64 = 5.85e6;
pub const RATE_WIFI_BPS: f64 = 18.80e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub bandwidth_bps: f64,
}

impl NetworkProfile {
    pub fn new(bandwidth_bps: f64) -> Result<Self> {
        if !(bandwidth_bps.is_finite() && bandwidth_bps > 0.0) {
            return Err(Error::invalid(format!(
                "bandwidth must be positive and finite, got {bandwidth_bps}"
            )));
        }
        Ok(Self { bandwidth_bps })
    }

    pub fn preset(name: &str) -> Option<Self> {
        let bandwidth_bps = match name.to_ascii_lowercase().as_str() {
            "3g" => RATE_3G_BPS,
            "4g" => RATE_4G_BPS,
            "wifi" | "wi-fi" => RATE_WIFI_BPS,
            _ => return None,
        };
        Some(Self { bandwidth_bps })
    }
}

/// Transfer time for a payload of `output_bytes` bytes.
pub fn comm_time(output_bytes: u64, net: &NetworkProfile) -> f64 {
    8.0 * output_bytes as f64 / net.bandwidth_bps
}

/// Derives edge times from cloud times with a fixed edge/cloud ratio.
pub fn scale_edge_times(cloud_times: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::invalid(format!(
            "processing factor must be > 1, got {gamma}"
        )));
    }
    Ok(cloud_times.iter().map(|t| gamma * t).collect())
}

/// Per-layer processing times on each side, plus edge processing time of each
/// side branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingProfile {
    pub edge_times: Vec<f64>,
    pub cloud_times: Vec<f64>,
    pub branch_edge_times: Vec<f64>,
}

impl TimingProfile {
    /// Profile with zero branch processing time.
    pub fn new(edge_times: Vec<f64>, cloud_times: Vec<f64>, num_branches: usize) -> Self {
        Self {
            edge_times,
            cloud_times,
            branch_edge_times: vec![0.0; num_branches],
        }
    }

    pub fn from_gamma(cloud_times: Vec<f64>, gamma: f64, num_branches: usize) -> Result<Self> {
        let edge_times = scale_edge_times(&cloud_times, gamma)?;
        Ok(Self::new(edge_times, cloud_times, num_branches))
    }

    pub fn with_branch_times(mut self, branch_edge_times: Vec<f64>) -> Self {
        self.branch_edge_times = branch_edge_times;
        self
    }

    /// Checks shapes against `model` and that every entry is finite and
    /// non-negative.
    pub fn check_against(&self, model: &BranchyModel) -> Result<()> {
        let n = model.num_layers();
        if self.edge_times.len() != n || self.cloud_times.len() != n {
            return Err(Error::ProfileMismatch(format!(
                "model has {n} layers, profile has {} edge and {} cloud times",
                self.edge_times.len(),
                self.cloud_times.len()
            )));
        }
        if self.branch_edge_times.len() != model.num_branches() {
            return Err(Error::ProfileMismatch(format!(
                "model has {} branches, profile has {} branch times",
                model.num_branches(),
                self.branch_edge_times.len()
            )));
        }
        let all = self
            .edge_times
            .iter()
            .chain(&self.cloud_times)
            .chain(&self.branch_edge_times);
        if let Some(bad) = all.copied().find(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::ProfileMismatch(format!(
                "processing times must be finite and non-negative, found {bad}"
            )));
        }
        Ok(())
    }
}

/// Probability mass of the first exit over the side branches.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitDistribution {
    /// Probability of exiting at each branch, in model order.
    pub per_branch: Vec<f64>,
    /// Probability that no branch exits.
    pub survive_all: f64,
}

impl ExitDistribution {
    pub fn total(&self) -> f64 {
        self.per_branch.iter().sum::<f64>() + self.survive_all
    }
}

pub fn exit_distribution(probabilities: &[f64]) -> Result<ExitDistribution> {
    let mut survive = 1.0;
    let mut per_branch = Vec::with_capacity(probabilities.len());
    for &p in probabilities {
        check_probability(p)?;
        per_branch.push(p * survive);
        survive *= 1.0 - p;
    }
    Ok(ExitDistribution {
        per_branch,
        survive_all: survive,
    })
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("probability {p} outside [0, 1]")))
    }
}

fn check_cut(model: &BranchyModel, cut: usize) -> Result<()> {
    if cut > model.num_layers() {
        return Err(Error::invalid(format!(
            "cut {cut} out of range 0..={}",
            model.num_layers()
        )));
    }
    Ok(())
}

/// Bytes sent to the cloud when partitioning at `cut`; zero for edge-only.
pub fn transfer_bytes(model: &BranchyModel, cut: usize) -> u64 {
    match cut {
        0 => model.input_bytes,
        s if s >= model.num_layers() => 0,
        s => model.layers[s - 1].output_bytes,
    }
}

/// Inference time of the main branch alone, ignoring every side branch.
pub fn dnn_inference_time(
    model: &BranchyModel,
    profile: &TimingProfile,
    net: &NetworkProfile,
    cut: usize,
) -> Result<f64> {
    check_cut(model, cut)?;
    profile.check_against(model)?;
    let n = model.num_layers();
    let mut total = 0.0;
    for t in &profile.edge_times[..cut] {
        total += t;
    }
    if cut < n {
        total += comm_time(transfer_bytes(model, cut), net);
    }
    for t in &profile.cloud_times[cut..] {
        total += t;
    }
    Ok(total)
}

/// Expected inference time when partitioning at `cut`.
///
/// Each cost on the execution path is charged with the probability that a
/// sample is still running when that cost is reached: the product of
/// `1 - p` over the edge-side branches already passed.
pub fn expected_inference_time(
    model: &BranchyModel,
    profile: &TimingProfile,
    net: &NetworkProfile,
    cut: usize,
) -> Result<f64> {
    check_cut(model, cut)?;
    profile.check_against(model)?;
    let n = model.num_layers();
    let mut survive = 1.0;
    let mut total = 0.0;
    for layer in 1..=cut {
        total += survive * profile.edge_times[layer - 1];
        if layer < cut {
            if let Some(b) = model.branch_after(layer) {
                total += survive * profile.branch_edge_times[b];
                survive *= 1.0 - model.branches[b].exit_probability;
            }
        }
    }
    if cut < n {
        total += survive * comm_time(transfer_bytes(model, cut), net);
        for t in &profile.cloud_times[cut..] {
            total += survive * t;
        }
    }
    Ok(total)
}

/// Profile rows as read from a timing CSV: `layer_name, cloud_time_s[, edge_time_s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    pub layer_names: Vec<String>,
    pub cloud_times: Vec<f64>,
    pub edge_times: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct ProfileRow {
    layer_name: String,
    cloud_time_s: f64,
    #[serde(default)]
    edge_time_s: Option<f64>,
}

impl ProfileTable {
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .flexible(false)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse(format!("profile header: {e}")))?
            .clone();
        let known = ["layer_name", "cloud_time_s", "edge_time_s"];
        if let Some(h) = headers.iter().find(|h| !known.contains(h)) {
            return Err(Error::Parse(format!("profile: unknown column `{h}`")));
        }
        let has_edge = headers.iter().any(|h| h == "edge_time_s");

        let mut table = ProfileTable {
            layer_names: Vec::new(),
            cloud_times: Vec::new(),
            edge_times: has_edge.then(Vec::new),
        };
        for (i, row) in rdr.deserialize::<ProfileRow>().enumerate() {
            // header occupies line 1
            let row = row.map_err(|e| Error::Parse(format!("profile row {}: {e}", i + 2)))?;
            table.layer_names.push(row.layer_name);
            table.cloud_times.push(row.cloud_time_s);
            if let Some(edge) = table.edge_times.as_mut() {
                let t = row.edge_time_s.ok_or_else(|| {
                    Error::Parse(format!("profile row {}: missing edge_time_s", i + 2))
                })?;
                edge.push(t);
            }
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Resolves the table into a profile for `model`. When `gamma` is given
    /// the edge times are `gamma * cloud`, overriding any edge column;
    /// otherwise the edge column is required.
    pub fn to_profile(&self, model: &BranchyModel, gamma: Option<f64>) -> Result<TimingProfile> {
        if self.layer_names.len() != model.num_layers() {
            return Err(Error::ProfileMismatch(format!(
                "model has {} layers, profile has {} rows",
                model.num_layers(),
                self.layer_names.len()
            )));
        }
        for (layer, name) in model.layers.iter().zip(&self.layer_names) {
            if &layer.name != name {
                return Err(Error::ProfileMismatch(format!(
                    "layer {} is `{}` in the model but `{name}` in the profile",
                    layer.index, layer.name
                )));
            }
        }
        let edge_times =
            match (gamma, &self.edge_times) {
                (Some(g), _) => scale_edge_times(&self.cloud_times, g)?,
                (None, Some(edge)) => edge.clone(),
                (None, None) => return Err(Error::invalid(
                    "profile has no edge_time_s column; a processing factor (gamma) is required",
                )),
            };
        let profile =
            TimingProfile::new(edge_times, self.cloud_times.clone(), model.num_branches());
        profile.check_against(model)?;
        Ok(profile)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        match &self.edge_times {
            Some(_) => wtr.write_record(["layer_name", "cloud_time_s", "edge_time_s"]),
            None => wtr.write_record(["layer_name", "cloud_time_s"]),
        }
        .map_err(csv_err)?;
        for (i, name) in self.layer_names.iter().enumerate() {
            let cloud = self.cloud_times[i].to_string();
            match &self.edge_times {
                Some(edge) => wtr.write_record([name.as_str(), &cloud, &edge[i].to_string()]),
                None => wtr.write_record([name.as_str(), &cloud]),
            }
            .map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| Error::io("<profile output>", e))
    }
}
