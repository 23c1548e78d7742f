//! Command-line driver: validation, bisimilarity, termination, one-step
//! distance application, certified distance bounds, formula evaluation,
//! solver-script emission, and oracle-driven pair bisection.
//!
//! Exit codes: 0 on success, 1 on any input problem, 2 when a configured
//! external solver fails to produce a verdict.

use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ptsdist_core::bisim::{bisimilarity_partition, quotient};
use ptsdist_core::delta::apply_delta_with_workers;
use ptsdist_core::encode::{
    approximate_pair, emit_mathematica, emit_smtlib, ExternalOracle, Oracle, PairMethod,
    ScriptFormat, SentenceBuilder,
};
use ptsdist_core::fixpoint::{approximate_all, ApproxOptions};
use ptsdist_core::io::{
    parse_document, parse_matrix, parse_pts, render_rat, serialize_pts, DistanceReport,
    DEFAULT_PRECISION,
};
use ptsdist_core::logic::{interpret, parse_formula};
use ptsdist_core::metric::DistanceMatrix;
use ptsdist_core::pts::{validate_matrix, Pts, StateKind};
use ptsdist_core::reach::termination_probabilities;
use ptsdist_core::{Error, Rat};

const EXIT_OK: i32 = 0;
const EXIT_INPUT: i32 = 1;
const EXIT_ORACLE: i32 = 2;

#[derive(Parser)]
#[command(
    name = "ptsdist",
    about = "Exact behavioural distances for probabilistic transition systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Human,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmitFormat {
    Smt2,
    Mathematica,
}

#[derive(Args)]
struct CommonOutput {
    /// Output format.
    #[arg(long, value_enum, default_value = "human")]
    format: OutputFormat,
    /// Decimal digits in approximate renderings.
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision: usize,
}

#[derive(Args)]
struct OracleArgs {
    /// Decision oracle: `internal`, or `cmd:<template>` running an
    /// external solver; `{}` in the template receives the script path.
    #[arg(long, default_value = "internal")]
    oracle: String,
    /// Timeout for the external solver, in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    /// Script format handed to the external solver.
    #[arg(long, value_enum, default_value = "smt2")]
    oracle_format: EmitFormat,
    /// Directory for temporary solver scripts.
    #[arg(long)]
    temp_dir: Option<PathBuf>,
}

impl OracleArgs {
    fn build(&self) -> Result<Oracle, String> {
        if self.oracle == "internal" {
            return Ok(Oracle::Internal);
        }
        match self.oracle.strip_prefix("cmd:") {
            Some(template) if !template.trim().is_empty() => {
                Ok(Oracle::External(ExternalOracle {
                    command: template.to_string(),
                    timeout: Duration::from_secs(self.timeout),
                    format: match self.oracle_format {
                        EmitFormat::Smt2 => ScriptFormat::Smtlib,
                        EmitFormat::Mathematica => ScriptFormat::Mathematica,
                    },
                    temp_dir: self.temp_dir.clone(),
                }))
            }
            _ => Err(format!(
                "bad --oracle `{}` (expected `internal` or `cmd:<template>`)",
                self.oracle
            )),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a system file and report every violation.
    Validate {
        input: PathBuf,
        #[command(flatten)]
        output: CommonOutput,
    },
    /// Coarsest probabilistic bisimulation as a partition of the states.
    Bisim {
        input: PathBuf,
        #[command(flatten)]
        output: CommonOutput,
    },
    /// Collapse bisimilar states and print the quotient system.
    Quotient {
        input: PathBuf,
        #[command(flatten)]
        output: CommonOutput,
    },
    /// Exact termination probability of every state.
    Terminate {
        input: PathBuf,
        #[command(flatten)]
        output: CommonOutput,
    },
    /// Apply the one-step distance functional to a metric once.
    Delta {
        input: PathBuf,
        /// File holding the input pseudometric, one row per line.
        #[arg(long)]
        metric: PathBuf,
        /// Discount factor in (0,1], as a rational.
        #[arg(long, default_value = "1")]
        delta: String,
        /// Worker threads for pair evaluation.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        output: CommonOutput,
    },
    /// Certified behavioural distances for all state pairs.
    Distances {
        input: PathBuf,
        /// Discount factor in (0,1], as a rational.
        #[arg(long, default_value = "1")]
        delta: String,
        /// Accuracy, as a positive rational.
        #[arg(long, default_value = "1/1000")]
        epsilon: String,
        /// Skip the bisimilarity-quotient preprocessing step.
        #[arg(long)]
        no_quotient: bool,
        /// Iteration budget; defaults to 10 n^2.
        #[arg(long)]
        budget: Option<usize>,
        /// Worker threads for pair evaluation.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        output: CommonOutput,
    },
    /// Evaluate a logic formula at every state.
    Eval {
        input: PathBuf,
        /// Formula, e.g. `<> true`, `! (<> true - 1/2) & true`.
        #[arg(long)]
        formula: String,
        /// Discount factor in (0,1], as a rational.
        #[arg(long, default_value = "1")]
        delta: String,
        #[command(flatten)]
        output: CommonOutput,
    },
    /// Emit the satisfiability sentence bounding one pair's distance.
    Encode {
        input: PathBuf,
        /// The queried pair of states, 1-based.
        #[arg(long, num_args = 2, value_names = ["I", "J"])]
        pair: Vec<usize>,
        /// Upper bound on the pair's distance, as a rational.
        #[arg(long)]
        bound: String,
        /// Script format.
        #[arg(long, value_enum, default_value = "smt2")]
        format: EmitFormat,
        /// Keep every pair distance a variable instead of substituting
        /// structurally known values.
        #[arg(long)]
        no_known: bool,
    },
    /// Bracket one pair's distance by oracle-driven bisection.
    ApproxPair {
        input: PathBuf,
        /// The queried pair of states, 1-based.
        #[arg(long, num_args = 2, value_names = ["I", "J"])]
        pair: Vec<usize>,
        /// Accuracy, as a positive rational.
        #[arg(long, default_value = "1/1000")]
        epsilon: String,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        output: CommonOutput,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn read_file(path: &PathBuf) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(Error::Io)
}

fn load_pts(path: &PathBuf) -> Result<Pts, Error> {
    parse_pts(&read_file(path)?)
}

fn parse_rat_arg(text: &str, what: &str) -> Result<Rat, Error> {
    Rat::parse(text).map_err(|_| Error::Dimension(format!("bad {what} `{text}` (expected p/q)")))
}

fn parse_pair_arg(pair: &[usize], n: usize) -> Result<(usize, usize), Error> {
    if pair.len() != 2 {
        return Err(Error::Dimension("expected --pair I J".into()));
    }
    for &p in pair {
        if p < 1 || p > n {
            return Err(Error::StateIndex(p, n));
        }
    }
    Ok((pair[0] - 1, pair[1] - 1))
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Validate { input, output } => cmd_validate(&input, &output),
        Command::Bisim { input, output } => cmd_bisim(&input, &output),
        Command::Quotient { input, output } => cmd_quotient(&input, &output),
        Command::Terminate { input, output } => cmd_terminate(&input, &output),
        Command::Delta {
            input,
            metric,
            delta,
            workers,
            output,
        } => cmd_delta(&input, &metric, &delta, workers, &output),
        Command::Distances {
            input,
            delta,
            epsilon,
            no_quotient,
            budget,
            workers,
            output,
        } => cmd_distances(&input, &delta, &epsilon, no_quotient, budget, workers, &output),
        Command::Eval {
            input,
            formula,
            delta,
            output,
        } => cmd_eval(&input, &formula, &delta, &output),
        Command::Encode {
            input,
            pair,
            bound,
            format,
            no_known,
        } => cmd_encode(&input, &pair, &bound, format, no_known),
        Command::ApproxPair {
            input,
            pair,
            epsilon,
            oracle,
            output,
        } => cmd_approx_pair(&input, &pair, &epsilon, &oracle, &output),
    }
}

#[derive(Serialize)]
struct ValidationJson {
    ok: bool,
    violations: Vec<String>,
}

fn cmd_validate(input: &PathBuf, output: &CommonOutput) -> Result<i32, Error> {
    let text = read_file(input)?;
    let (rows, labels) = parse_document(&text)?;
    let report = validate_matrix(&rows);
    let ok = report.is_ok();
    let violations: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
    match output.format {
        OutputFormat::Json => {
            let json = ValidationJson {
                ok,
                violations: violations.clone(),
            };
            println!("{}", serde_json::to_string(&json).unwrap());
        }
        OutputFormat::Human => {
            if ok {
                let pts = Pts::with_labels(rows, labels)?;
                let stuck = pts
                    .classify()
                    .iter()
                    .filter(|k| **k == StateKind::Stuck)
                    .count();
                println!(
                    "ok: {} states, {} stuck, {} live",
                    pts.n_states(),
                    stuck,
                    pts.n_states() - stuck
                );
            } else {
                for v in &violations {
                    println!("violation: {v}");
                }
            }
        }
    }
    Ok(if ok { EXIT_OK } else { EXIT_INPUT })
}

#[derive(Serialize)]
struct BisimJson {
    blocks: Vec<Vec<usize>>,
}

fn one_based_blocks(blocks: &[Vec<usize>]) -> Vec<Vec<usize>> {
    blocks
        .iter()
        .map(|b| b.iter().map(|s| s + 1).collect())
        .collect()
}

fn cmd_bisim(input: &PathBuf, output: &CommonOutput) -> Result<i32, Error> {
    let pts = load_pts(input)?;
    let partition = bisimilarity_partition(&pts);
    match output.format {
        OutputFormat::Json => {
            let json = BisimJson {
                blocks: one_based_blocks(partition.blocks()),
            };
            println!("{}", serde_json::to_string(&json).unwrap());
        }
        OutputFormat::Human => {
            for (id, block) in partition.blocks().iter().enumerate() {
                let names: Vec<String> =
                    block.iter().map(|&s| pts.state_name(s)).collect();
                println!("block {}: {}", id + 1, names.join(" "));
            }
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct QuotientJson {
    blocks: Vec<Vec<usize>>,
    /// For each original state (1-based order), its block, 1-based.
    projection: Vec<usize>,
    document: String,
}

fn cmd_quotient(input: &PathBuf, output: &CommonOutput) -> Result<i32, Error> {
    let pts = load_pts(input)?;
    let partition = bisimilarity_partition(&pts);
    let q = quotient(&pts, &partition)?;
    let document = serialize_pts(&q.quotient);
    match output.format {
        OutputFormat::Json => {
            let json = QuotientJson {
                blocks: one_based_blocks(partition.blocks()),
                projection: q.projection.iter().map(|b| b + 1).collect(),
                document,
            };
            println!("{}", serde_json::to_string(&json).unwrap());
        }
        OutputFormat::Human => {
            for (id, block) in partition.blocks().iter().enumerate() {
                let names: Vec<String> =
                    block.iter().map(|&s| pts.state_name(s)).collect();
                println!("# block {} <- {}", id + 1, names.join(" "));
            }
            print!("{document}");
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TerminateJson {
    tau: Vec<Rat>,
    decimals: Vec<String>,
}

fn cmd_terminate(input: &PathBuf, output: &CommonOutput) -> Result<i32, Error> {
    let pts = load_pts(input)?;
    let tau = termination_probabilities(&pts)?;
    match output.format {
        OutputFormat::Json => {
            let json = TerminateJson {
                tau: tau.values().to_vec(),
                decimals: tau
                    .values()
                    .iter()
                    .map(|v| v.decimal_string(output.precision))
                    .collect(),
            };
            println!("{}", serde_json::to_string(&json).unwrap());
        }
        OutputFormat::Human => {
            let exact: Vec<String> = tau.values().iter().map(|v| v.to_string()).collect();
            println!("{}", exact.join(" "));
            let approx: Vec<String> = tau
                .values()
                .iter()
                .map(|v| v.decimal_string(output.precision))
                .collect();
            println!("# ≈ {}", approx.join(" "));
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MatrixJson {
    rows: Vec<Vec<Rat>>,
}

fn cmd_delta(
    input: &PathBuf,
    metric: &PathBuf,
    delta: &str,
    workers: usize,
    output: &CommonOutput,
) -> Result<i32, Error> {
    let pts = load_pts(input)?;
    let delta = parse_rat_arg(delta, "discount factor")?;
    let rows = parse_matrix(&read_file(metric)?)?;
    let d = DistanceMatrix::new(rows)?;
    let image = apply_delta_with_workers(&pts, &d, &delta, workers.max(1))?;
    match output.format {
        OutputFormat::Json => {
            let json = MatrixJson {
                rows: image.matrix().to_vec(),
            };
            println!("{}", serde_json::to_string(&json).unwrap());
        }
        OutputFormat::Human => {
            print!(
                "{}",
                ptsdist_core::io::render_matrix_human(&image, output.precision)
            );
        }
    }
    Ok(EXIT_OK)
}

fn cmd_distances(
    input: &PathBuf,
    delta: &str,
    epsilon: &str,
    no_quotient: bool,
    budget: Option<usize>,
    workers: usize,
    output: &CommonOutput,
) -> Result<i32, Error> {
    let pts = load_pts(input)?;
    let delta = parse_rat_arg(delta, "discount factor")?;
    let epsilon = parse_rat_arg(epsilon, "epsilon")?;
    let options = ApproxOptions {
        use_quotient: !no_quotient,
        budget,
        workers: workers.max(1),
        max_denominator: None,
    };
    let bounds = approximate_all(&pts, &delta, &epsilon, &options)?;
    let report = DistanceReport::from_bounds(&bounds, &delta, &epsilon, output.precision);
    match output.format {
        OutputFormat::Json => println!("{}", report.to_json()),
        OutputFormat::Human => print!("{}", report.to_human(&pts, output.precision)),
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct EvalJson {
    formula: String,
    delta: Rat,
    values: Vec<Rat>,
    decimals: Vec<String>,
}

fn cmd_eval(
    input: &PathBuf,
    formula: &str,
    delta: &str,
    output: &CommonOutput,
) -> Result<i32, Error> {
    let pts = load_pts(input)?;
    let delta = parse_rat_arg(delta, "discount factor")?;
    let phi = parse_formula(formula)?;
    let values = interpret(&pts, &phi, &delta);
    match output.format {
        OutputFormat::Json => {
            let json = EvalJson {
                formula: phi.to_string(),
                delta,
                values: values.clone(),
                decimals: values
                    .iter()
                    .map(|v| v.decimal_string(output.precision))
                    .collect(),
            };
            println!("{}", serde_json::to_string(&json).unwrap());
        }
        OutputFormat::Human => {
            for (s, v) in values.iter().enumerate() {
                println!(
                    "{} = {}",
                    pts.state_name(s),
                    render_rat(v, output.precision)
                );
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_encode(
    input: &PathBuf,
    pair: &[usize],
    bound: &str,
    format: EmitFormat,
    no_known: bool,
) -> Result<i32, Error> {
    let pts = load_pts(input)?;
    let (i, j) = parse_pair_arg(pair, pts.n_states())?;
    let bound = parse_rat_arg(bound, "bound")?;
    let builder = if no_known {
        SentenceBuilder::without_known(&pts, i, j)?
    } else {
        SentenceBuilder::new(&pts, i, j)?
    };
    let sentence = builder.with_bound(&bound);
    let script = match format {
        EmitFormat::Smt2 => emit_smtlib(&sentence.formula),
        EmitFormat::Mathematica => emit_mathematica(&sentence.formula),
    };
    print!("{script}");
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct IntervalJson {
    pair: (usize, usize),
    lower: Rat,
    upper: Rat,
    width: Rat,
    method: String,
    decisions: usize,
    oracle_failed: bool,
    diagnostics: String,
}

fn cmd_approx_pair(
    input: &PathBuf,
    pair: &[usize],
    epsilon: &str,
    oracle_args: &OracleArgs,
    output: &CommonOutput,
) -> Result<i32, Error> {
    let pts = load_pts(input)?;
    let (i, j) = parse_pair_arg(pair, pts.n_states())?;
    let epsilon = parse_rat_arg(epsilon, "epsilon")?;
    let oracle = oracle_args.build().map_err(Error::Oracle)?;
    let result = approximate_pair(&pts, i, j, &epsilon, &oracle)?;
    let method = match result.method {
        PairMethod::Bisection => "bisection",
        PairMethod::Bounds => "bounds",
    };
    match output.format {
        OutputFormat::Json => {
            let json = IntervalJson {
                pair: (pair[0], pair[1]),
                lower: result.lower.clone(),
                upper: result.upper.clone(),
                width: &result.upper - &result.lower,
                method: method.to_string(),
                decisions: result.decisions,
                oracle_failed: result.oracle_failed,
                diagnostics: result.diagnostics.clone(),
            };
            println!("{}", serde_json::to_string(&json).unwrap());
        }
        OutputFormat::Human => {
            println!(
                "d({}, {}) in [{}, {}]",
                pts.state_name(i),
                pts.state_name(j),
                render_rat(&result.lower, output.precision),
                render_rat(&result.upper, output.precision)
            );
            println!(
                "method: {method}, oracle decisions: {}",
                result.decisions
            );
            if result.oracle_failed {
                println!("oracle failure: {}", result.diagnostics);
            }
        }
    }
    Ok(if result.oracle_failed {
        EXIT_ORACLE
    } else {
        EXIT_OK
    })
}
