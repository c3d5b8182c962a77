//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or validation error.
//! Relative `--out` paths are resolved against `$BRANCHCUT_OUT_DIR` when set.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::graph::{build_partition_graph, DEFAULT_EPSILON_S};
use crate::harness::{Scenario, SweepSpec, SweepValues, SweepVariable, TOOL_VERSION};
use crate::model::BranchyModel;
use crate::probability::{load_samples, probability_curve};
use crate::solver::{solve_with_epsilon, PartitionDecision};
use crate::timing::{ProfileTable, RATE_3G_BPS, RATE_4G_BPS, RATE_WIFI_BPS};

pub const OUT_DIR_ENV: &str = "BRANCHCUT_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "branchcut",
    version,
    about = "Edge/cloud partitioning of early-exit networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the optimal partition.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = DEFAULT_EPSILON_S)]
        epsilon: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve across a range of one parameter.
    Sweep {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long = "var", value_enum)]
        variable: VarArg,
        /// Branch (by the layer it follows) for probability sweeps; all branches if omitted.
        #[arg(long)]
        branch: Option<usize>,
        #[command(flatten)]
        values: ValuesArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Export the partitioning graph in Graphviz format.
    Graph {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = DEFAULT_EPSILON_S)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exit probability as a function of the entropy threshold.
    ProbCurve {
        #[arg(long)]
        samples: PathBuf,
        /// Only emit the sample set with this label.
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        thresholds: ValuesArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check a model file.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ProblemArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    /// Edge/cloud processing ratio; edge times become gamma * cloud time.
    #[arg(long)]
    gamma: Option<f64>,
    /// Uplink rate in bits per second.
    #[arg(long, conflicts_with = "net")]
    bandwidth: Option<f64>,
    #[arg(long, value_enum)]
    net: Option<NetPreset>,
    /// Branch exit probabilities: one value for all branches or one per branch.
    #[arg(long = "p", value_delimiter = ',', allow_negative_numbers = true)]
    probabilities: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct ValuesArgs {
    /// Explicit comma-separated values.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["from", "to", "step"])]
    values: Option<Vec<f64>>,
    #[arg(long, requires_all = ["to", "step"])]
    from: Option<f64>,
    #[arg(long, requires_all = ["from", "step"])]
    to: Option<f64>,
    #[arg(long, requires_all = ["from", "to"])]
    step: Option<f64>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NetPreset {
    #[value(name = "3g")]
    ThreeG,
    #[value(name = "4g")]
    FourG,
    Wifi,
}

impl NetPreset {
    fn bps(self) -> f64 {
        match self {
            NetPreset::ThreeG => RATE_3G_BPS,
            NetPreset::FourG => RATE_4G_BPS,
            NetPreset::Wifi => RATE_WIFI_BPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VarArg {
    Probability,
    Gamma,
    Bandwidth,
}

enum Failure {
    Usage(String),
    Input(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{rendered}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{rendered}");
                    1
                }
            };
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
        Err(Failure::Input(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}

fn execute(command: Command, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    match command {
        Command::Solve {
            problem,
            epsilon,
            output,
        } => {
            let (model, table, scenario) = load_problem(&problem, true)?;
            let (model, profile, net) = scenario.instantiate(&model, &table)?;
            let decision = solve_with_epsilon(&model, &profile, &net, epsilon)?;
            let text = match output.format {
                Format::Json => decision.to_json(),
                Format::Tsv => decision_tsv(&decision),
            };
            emit(&text, output.out.as_deref(), stdout)?;
        }
        Command::Sweep {
            problem,
            variable,
            branch,
            values,
            output,
        } => {
            let (model, table, fixed) = load_problem(&problem, variable != VarArg::Bandwidth)?;
            let variable = match variable {
                VarArg::Probability => SweepVariable::Probability {
                    after_layer: branch,
                },
                VarArg::Gamma => SweepVariable::Gamma,
                VarArg::Bandwidth => SweepVariable::Bandwidth,
            };
            let spec = SweepSpec {
                variable,
                values: sweep_values(&values)?,
                fixed,
            };
            let result = spec.run(&problem.model.display().to_string(), &model, &table)?;
            let text = match output.format {
                Format::Json => result.to_json(),
                Format::Tsv => result.to_tsv(),
            };
            emit(&text, output.out.as_deref(), stdout)?;
        }
        Command::Graph {
            problem,
            epsilon,
            out,
        } => {
            let (model, table, scenario) = load_problem(&problem, true)?;
            let (model, profile, net) = scenario.instantiate(&model, &table)?;
            let mut graph = build_partition_graph(&model, &profile, &net, epsilon)?;
            graph.set_model_ref(problem.model.display().to_string());
            emit(&graph.to_dot(), out.as_deref(), stdout)?;
        }
        Command::ProbCurve {
            samples,
            label,
            thresholds,
            output,
        } => {
            let groups = load_samples(&samples)?;
            let groups: Vec<_> = groups
                .into_iter()
                .filter(|g| label.as_ref().is_none_or(|l| &g.label == l))
                .collect();
            if groups.is_empty() {
                return Err(Error::invalid("no sample set matches the requested label").into());
            }
            let thresholds = sweep_values(&thresholds)?.expand()?;
            let mut curves = Vec::new();
            for g in &groups {
                curves.push((g, probability_curve(g, &thresholds)?));
            }
            let text = match output.format {
                Format::Tsv => {
                    let mut s = format!("# {TOOL_VERSION}\n# samples: {}\n", samples.display());
                    s.push_str("branch_index\tlabel\tthreshold\tprobability\n");
                    for (g, curve) in &curves {
                        for (t, p) in curve {
                            s.push_str(&format!("{}\t{}\t{t}\t{p}\n", g.branch_index, g.label));
                        }
                    }
                    s
                }
                Format::Json => {
                    let value: Vec<_> = curves
                        .iter()
                        .map(|(g, curve)| {
                            serde_json::json!({
                                "branch_index": g.branch_index,
                                "label": g.label,
                                "curve": curve
                                    .iter()
                                    .map(|(t, p)| serde_json::json!({"threshold": t, "probability": p}))
                                    .collect::<Vec<_>>(),
                            })
                        })
                        .collect();
                    let mut s = serde_json::to_string_pretty(&value).expect("json");
                    s.push('\n');
                    s
                }
            };
            emit(&text, output.out.as_deref(), stdout)?;
        }
        Command::Validate { model } => {
            let m = BranchyModel::load_unvalidated(&model)?;
            match m.validate() {
                Ok(()) => {
                    let _ = writeln!(
                        stdout,
                        "ok: {} layers, {} branches",
                        m.num_layers(),
                        m.num_branches()
                    );
                }
                Err(errors) => return Err(Error::Validation(errors).into()),
            }
        }
    }
    Ok(())
}

fn load_problem(
    args: &ProblemArgs,
    needs_bandwidth: bool,
) -> std::result::Result<(BranchyModel, ProfileTable, Scenario), Failure> {
    let bandwidth_bps = args.bandwidth.or(args.net.map(NetPreset::bps));
    if needs_bandwidth && bandwidth_bps.is_none() {
        return Err(Failure::Usage(
            "one of --bandwidth or --net is required".into(),
        ));
    }
    let model = BranchyModel::load(&args.model)?;
    let table = ProfileTable::load(&args.profile)?;
    let scenario = Scenario {
        gamma: args.gamma,
        bandwidth_bps,
        probabilities: args.probabilities.clone(),
    };
    Ok((model, table, scenario))
}

fn sweep_values(args: &ValuesArgs) -> std::result::Result<SweepValues, Failure> {
    match (&args.values, args.from, args.to, args.step) {
        (Some(v), _, _, _) => Ok(SweepValues::List(v.clone())),
        (None, Some(start), Some(stop), Some(step)) => Ok(SweepValues::Range { start, stop, step }),
        _ => Err(Failure::Usage(
            "give either --values or all of --from, --to and --step".into(),
        )),
    }
}

fn decision_tsv(d: &PartitionDecision) -> String {
    let join = |items: Vec<String>| items.join(",");
    format!(
        "# {TOOL_VERSION}\ncut\t{}\ncut_index\t{}\nedge_set\t{}\ncloud_set\t{}\nexpected_time_s\t{}\npath\t{}\n",
        d.cut,
        d.cut_index,
        join(d.edge_set.iter().map(ToString::to_string).collect()),
        join(d.cloud_set.iter().map(|i| format!("v{i}")).collect()),
        d.expected_time_s,
        join(d.path.iter().map(ToString::to_string).collect()),
    )
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => {
            let path = resolve_out(path);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))
        }
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}
