//! `chorefair`: command-line driver for the chore-division toolkit.
//!
//! Exit code 0 on completion, 2 on any configuration error (bad flags,
//! unreadable files, dimension mismatches, guard violations).

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use chorefair_core::allocators::{
    alg_div, cost_minimizing, dispatch_envy_free_with, dispatch_proportional_with, prop_medium,
    prop_small, prop_small_graph, two_stage, two_stage_graph, Algorithm, AllocatorOutcome,
    DEFAULT_BIG_M_CONSTANT,
};
use chorefair_core::experiments::{
    csv_string, render_summary, run_grid, summarize, write_json, AlgoSelector, ExperimentConfig,
    MRule,
};
use chorefair_core::fairness::{fairness_report, Allocation};
use chorefair_core::instance::{DistributionSpec, DisutilityMatrix};
use chorefair_core::oracle::{exists_envy_free, exists_proportional};
use chorefair_core::theory::{
    ef_nonexistence_certificate, expected_repeated_favorites, nu_equation,
    prop_nonexistence_certificate, solve_nu,
};
use chorefair_core::{Error, Result};

#[derive(Parser)]
#[command(name = "chorefair", version, about = "Fair allocation of chores under random disutilities")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Notion {
    Ef,
    Prop,
}

#[derive(Clone, Copy, ValueEnum)]
enum AllocAlgo {
    Costmin,
    Algdiv,
    Twostage,
    Propsmall,
    Propmedium,
    Ef,
    Prop,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify an allocation against an instance and print a fairness report.
    Check {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        allocation: PathBuf,
    },
    /// Run one allocator on an instance file.
    Allocate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        algo: AllocAlgo,
        /// Cheapness threshold override for the two-stage algorithm.
        #[arg(long)]
        tau: Option<f64>,
        /// Constant C of the "many chores" dispatcher route m ≥ C·n·ln n.
        #[arg(long)]
        big_m_c: Option<f64>,
        /// Write the matching-stage bipartite graph (two-stage or favorite
        /// matching) to this path as a JSON edge list.
        #[arg(long)]
        dump_graph: Option<PathBuf>,
    },
    /// Exhaustively decide whether a fair allocation exists.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        notion: Notion,
    },
    /// Evaluate a non-existence certificate on an instance.
    Certify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        notion: Notion,
    },
    /// Closed-form quantities.
    Theory {
        #[command(subcommand)]
        sub: TheoryCmd,
    },
    /// Monte Carlo sweeps over an (n, m) grid.
    Mc {
        /// Comma-separated agent counts, e.g. 20,40,80.
        #[arg(long = "n", value_name = "LIST")]
        ns: String,
        /// fixed:M | ratio:C | divratio:C
        #[arg(long)]
        m_rule: String,
        /// uniform | piecewise:<spec.json>
        #[arg(long, default_value = "uniform")]
        dist: String,
        /// costmin|algdiv|twostage|propsmall|propmedium|ef|prop|cert-ef|
        /// cert-prop|oracle-ef|oracle-prop
        #[arg(long)]
        algo: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Zero wall-clock fields for byte-stable output.
        #[arg(long)]
        canonical: bool,
        /// Record file; records go to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
        format: OutFormat,
    },
}

#[derive(Subcommand)]
enum TheoryCmd {
    /// Root ν of ν(1 + (1 + 1/ν)e^(−1/ν)) = 2.
    Nu,
    /// Expected number of repeated favorite chores.
    Et {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        m: u64,
    },
}

fn load_instance(path: &PathBuf) -> Result<DisutilityMatrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("reading {}: {e}", path.display())))?;
    DisutilityMatrix::from_json(&text)
}

fn load_allocation(path: &PathBuf) -> Result<Allocation> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("reading {}: {e}", path.display())))?;
    Allocation::from_json(&text)
}

fn load_dist(arg: &str) -> Result<DistributionSpec> {
    if arg == "uniform" {
        return Ok(DistributionSpec::uniform());
    }
    let Some(path) = arg.strip_prefix("piecewise:") else {
        return Err(Error::InvalidConfig(format!(
            "--dist must be 'uniform' or 'piecewise:<path>', got {arg:?}"
        )));
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("reading {path}: {e}")))?;
    #[derive(serde::Deserialize)]
    struct PiecewiseFile {
        breakpoints: Vec<f64>,
        densities: Vec<f64>,
    }
    let file: PiecewiseFile = serde_json::from_str(&text)?;
    DistributionSpec::piecewise(file.breakpoints, file.densities)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run_allocate(
    instance: PathBuf,
    algo: AllocAlgo,
    tau: Option<f64>,
    big_m_c: Option<f64>,
    dump_graph: Option<PathBuf>,
) -> Result<()> {
    let d = load_instance(&instance)?;
    if tau.is_some() && !matches!(algo, AllocAlgo::Twostage) {
        return Err(Error::InvalidConfig("--tau applies to --algo twostage only".into()));
    }
    if big_m_c.is_some() && !matches!(algo, AllocAlgo::Ef | AllocAlgo::Prop) {
        return Err(Error::InvalidConfig("--big-m-c applies to the dispatchers only".into()));
    }
    let c = big_m_c.unwrap_or(DEFAULT_BIG_M_CONSTANT);
    let outcome = match algo {
        AllocAlgo::Costmin => AllocatorOutcome {
            allocation: Some(cost_minimizing(&d)),
            algorithm: Algorithm::CostMin,
            diagnostics: Default::default(),
        },
        AllocAlgo::Algdiv => alg_div(&d)?,
        AllocAlgo::Twostage => two_stage(&d, tau)?,
        AllocAlgo::Propsmall => prop_small(&d),
        AllocAlgo::Propmedium => prop_medium(&d),
        AllocAlgo::Ef => dispatch_envy_free_with(&d, c),
        AllocAlgo::Prop => dispatch_proportional_with(&d, c),
    };
    if let Some(path) = dump_graph {
        let graph = match algo {
            AllocAlgo::Twostage => two_stage_graph(&d, tau)?,
            AllocAlgo::Propsmall => prop_small_graph(&d),
            _ => {
                return Err(Error::InvalidConfig(
                    "--dump-graph applies to twostage and propsmall only".into(),
                ))
            }
        };
        fs::write(&path, serde_json::to_string_pretty(&graph)?)
            .map_err(|e| Error::InvalidConfig(format!("writing {}: {e}", path.display())))?;
    }
    let fairness = outcome
        .allocation
        .as_ref()
        .map(|a| fairness_report(&d, a))
        .transpose()?;
    print_json(&json!({
        "allocation": outcome.allocation,
        "algorithm": outcome.algorithm,
        "diagnostics": outcome.diagnostics,
        "fairness": fairness,
    }))
}

#[allow(clippy::too_many_arguments)]
fn run_mc(
    ns: String,
    m_rule: String,
    dist: String,
    algo: String,
    trials: usize,
    seed: u64,
    workers: usize,
    canonical: bool,
    out: Option<PathBuf>,
    format: OutFormat,
) -> Result<()> {
    let ns: Vec<usize> = ns
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad n value {s:?}")))
        })
        .collect::<Result<_>>()?;
    let cfg = ExperimentConfig {
        ns,
        m_rule: m_rule.parse::<MRule>()?,
        dist: load_dist(&dist)?,
        algo: algo.parse::<AlgoSelector>()?,
        trials,
        seed,
        workers,
        canonical,
    };
    let records = run_grid(&cfg)?;
    let mut payload = Vec::new();
    match format {
        OutFormat::Csv => payload.extend_from_slice(csv_string(&records).as_bytes()),
        OutFormat::Json => write_json(&records, &mut payload)?,
    }
    match out {
        Some(path) => {
            fs::write(&path, &payload)
                .map_err(|e| Error::InvalidConfig(format!("writing {}: {e}", path.display())))?;
            print!("{}", render_summary(&summarize(&records)?));
        }
        None => {
            std::io::stdout()
                .write_all(&payload)
                .map_err(Error::from)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Check { instance, allocation } => {
            let d = load_instance(&instance)?;
            let a = load_allocation(&allocation)?;
            print_json(&fairness_report(&d, &a)?)
        }
        Cmd::Allocate { instance, algo, tau, big_m_c, dump_graph } => {
            run_allocate(instance, algo, tau, big_m_c, dump_graph)
        }
        Cmd::Oracle { instance, notion } => {
            let d = load_instance(&instance)?;
            let witness = match notion {
                Notion::Ef => exists_envy_free(&d)?,
                Notion::Prop => exists_proportional(&d)?,
            };
            print_json(&json!({"exists": witness.is_some(), "witness": witness}))
        }
        Cmd::Certify { instance, notion } => {
            let d = load_instance(&instance)?;
            let cert = match notion {
                Notion::Ef => ef_nonexistence_certificate(&d),
                Notion::Prop => prop_nonexistence_certificate(&d),
            };
            print_json(&json!({"fired": cert.fired(), "certificate": cert}))
        }
        Cmd::Theory { sub } => match sub {
            TheoryCmd::Nu => {
                let nu = solve_nu();
                print_json(&json!({"nu": nu, "residual": nu_equation(nu) - 2.0}))
            }
            TheoryCmd::Et { n, m } => {
                if n < 1 || m < 1 {
                    return Err(Error::InvalidConfig("need n ≥ 1 and m ≥ 1".into()));
                }
                print_json(&json!({"n": n, "m": m, "expected_t": expected_repeated_favorites(n, m)}))
            }
        },
        Cmd::Mc { ns, m_rule, dist, algo, trials, seed, workers, canonical, out, format } => {
            run_mc(ns, m_rule, dist, algo, trials, seed, workers, canonical, out, format)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
