//! Optimal edge/cloud partitioning of early-exit neural network chains.
//!
//! The expected inference time of every partition point is encoded as the
//! cost of an Input→Output path in a small weighted DAG, so the best split
//! is a single shortest-path query.
//!
//! ```
//! use branchcut::{solve, BranchSpec, BranchyModel, NetworkProfile, TimingProfile};
//!
//! let model = BranchyModel::from_sizes(
//!     150_528,
//!     [("conv1", 279_936), ("conv2", 173_056), ("fc", 8)],
//!     vec![BranchSpec::new(1, 0.9)],
//! );
//! let profile = TimingProfile::from_gamma(vec![0.0012, 0.0035, 0.0002], 10.0, 1).unwrap();
//! let net = NetworkProfile::preset("3g").unwrap();
//! let decision = solve(&model, &profile, &net).unwrap();
//! println!("{} {:.4}s", decision.cut, decision.expected_time_s);
//! ```

pub mod cli;
pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod probability;
pub mod solver;
pub mod timing;

pub use error::{Error, Result};
pub use graph::{build_partition_graph, PartitionGraph, Vertex, WeightClass, WeightedLink};
pub use harness::{Scenario, SweepResult, SweepSpec, SweepValues, SweepVariable};
pub use model::{BranchSpec, BranchyModel, LayerSpec, ValidationError};
pub use solver::{
    brute_force_partition, extract_decision, shortest_path, solve, solve_with_epsilon, CutPoint,
    PartitionDecision,
};
pub use timing::{
    comm_time, dnn_inference_time, exit_distribution, expected_inference_time, scale_edge_times,
    ExitDistribution, NetworkProfile, ProfileTable, TimingProfile,
};
