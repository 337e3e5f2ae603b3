//! `bnscore`: score, learn and compare Bayesian-network structures.
//!
//! Exit status: 0 on success (and for `equiv`, when the structures are
//! equivalent), 1 when `equiv` finds them not equivalent, 2 on any input error.

mod priors;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bnscore::dataset::{load_csv, write_csv, Database};
use bnscore::graph::{covered_reversal_sequence, equivalent, NetworkStructure};
use bnscore::network::Network;
use bnscore::scoring::{format_sig, score_structure, ScoreReport, UniformPrior};
use bnscore::search::{search, SearchConfig, SearchMode};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use priors::PriorArgs;

#[derive(Parser)]
#[command(name = "bnscore", version, about = "Bayesian scoring of network structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a structure against a database (JSON report on stdout).
    Score(ScoreArgs),
    /// Search for high-scoring structures (JSON on stdout, table on stderr).
    Learn(LearnArgs),
    /// Test whether two structures are equivalent.
    Equiv(EquivArgs),
    /// Sample cases from a parameterized network (CSV on stdout).
    Gen(GenArgs),
    /// Restrict a database to a subset of its variables (CSV on stdout).
    Project(ProjectArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row; every cell must hold a value.
    #[arg(long, short)]
    data: PathBuf,
    /// Missing values are always an error; accepted for compatibility.
    #[arg(long)]
    na_error: bool,
}

#[derive(Args)]
struct ScoreArgs {
    /// Network file with the structure to score; its variables are the schema.
    #[arg(long, short)]
    network: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prior: PriorArgs,
    /// Include per-variable local terms.
    #[arg(long)]
    local_terms: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exhaustive,
    Greedy,
}

#[derive(Args)]
struct LearnArgs {
    /// Network or schema file listing the variables.
    #[arg(long, short)]
    schema: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, value_enum, default_value = "exhaustive")]
    mode: ModeArg,
    #[arg(long)]
    max_parents: Option<usize>,
    /// Number of greedy climbs.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Score every DAG instead of one per equivalence class.
    #[arg(long)]
    no_collapse: bool,
    /// Start structure for the first greedy climb.
    #[arg(long)]
    start: Option<PathBuf>,
}

#[derive(Args)]
struct EquivArgs {
    a: PathBuf,
    b: PathBuf,
    /// Print covered arc reversals turning the first structure into the second.
    #[arg(long)]
    show_reversals: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, short)]
    network: PathBuf,
    /// Number of cases.
    #[arg(short, long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long, short)]
    schema: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated variable names to keep, in output order.
    #[arg(long, value_delimiter = ',', required = true)]
    vars: Vec<String>,
}

fn load_network(path: &Path) -> Result<Network> {
    Network::load(path).with_context(|| path.display().to_string())
}

fn load_data(args: &DataArgs, net: &Network) -> Result<Database> {
    load_csv(&args.data, net.domain()).with_context(|| args.data.display().to_string())
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> Result<ExitCode> {
    let net = load_network(&args.network)?;
    let d = load_data(&args.data, &net)?;
    let metric = args.prior.resolve(net.domain())?;
    let scorer = priors::bind(&*metric, &d)?;
    let prior = UniformPrior::over_all_dags(net.domain().len());
    let entry = score_structure(net.structure(), &*scorer, &prior)?;
    let report = ScoreReport::new(net.domain().clone(), vec![entry]);
    print_json(&report.to_json(args.local_terms))?;
    Ok(ExitCode::SUCCESS)
}

fn ranking_table(report: &ScoreReport) -> String {
    let mut s = format!(
        "{:>4}  {:>20}  {:>20}  {:>10}  {:>5}  edges\n",
        "rank", "log mass", "log score", "posterior", "class"
    );
    for (k, (e, p)) in report.entries().iter().zip(report.posteriors()).enumerate() {
        let edges: Vec<String> = e
            .structure
            .named_edges()
            .into_iter()
            .map(|(a, b)| format!("{a}->{b}"))
            .collect();
        s += &format!(
            "{:>4}  {:>20}  {:>20}  {:>10.4}  {:>5}  {}\n",
            k + 1,
            format_sig(e.log_mass),
            format_sig(e.log_score),
            p,
            e.class_size,
            if edges.is_empty() { "(none)".to_string() } else { edges.join(" ") }
        );
    }
    s
}

fn cmd_learn(args: &LearnArgs) -> Result<ExitCode> {
    let net = load_network(&args.schema)?;
    let d = load_data(&args.data, &net)?;
    let metric = args.prior.resolve(net.domain())?;
    let scorer = priors::bind(&*metric, &d)?;
    let start = match &args.start {
        Some(p) => Some(load_network(p)?.structure().clone()),
        None => None,
    };
    let cfg = SearchConfig {
        mode: match args.mode {
            ModeArg::Exhaustive => SearchMode::Exhaustive,
            ModeArg::Greedy => SearchMode::Greedy,
        },
        max_parents: args.max_parents.unwrap_or(usize::MAX),
        restarts: args.restarts,
        seed: args.seed,
        top_k: args.top_k,
        collapse_classes: !args.no_collapse,
    };
    let prior = UniformPrior::over_all_dags(net.domain().len());
    let report = search(net.domain(), &*scorer, &prior, &cfg, start.as_ref())?;
    print_json(&report.to_json(false))?;
    eprint!("{}", ranking_table(&report));
    Ok(ExitCode::SUCCESS)
}

fn cmd_equiv(args: &EquivArgs) -> Result<ExitCode> {
    let a = load_network(&args.a)?;
    let b = load_network(&args.b)?;
    let (sa, sb) = (a.structure(), b.structure());
    let same = equivalent(sa, sb).with_context(|| format!("{} vs {}", args.a.display(), args.b.display()))?;
    if same {
        println!("equivalent");
        if args.show_reversals {
            let steps = covered_reversal_sequence(sa, sb)?.unwrap_or_default();
            let name = |i: usize| sa.domain().variable(i).name().to_string();
            for (x, y) in steps {
                println!("reverse {} -> {}", name(x), name(y));
            }
        }
        return Ok(ExitCode::SUCCESS);
    }
    println!("not equivalent: {}", explain_difference(sa, sb)?);
    Ok(ExitCode::from(1))
}

fn explain_difference(a: &NetworkStructure, b: &NetworkStructure) -> Result<String> {
    // Bring b onto a's variable order for comparison.
    let named: Vec<(String, String)> = b.named_edges();
    let edges: Vec<(&str, &str)> = named.iter().map(|(x, y)| (x.as_str(), y.as_str())).collect();
    let b = NetworkStructure::from_named_edges(a.domain().clone(), &edges)?;
    let name = |i: usize| a.domain().variable(i).name();
    if a.skeleton() != b.skeleton() {
        let pair = a
            .skeleton()
            .symmetric_difference(&b.skeleton())
            .next()
            .copied()
            .expect("skeletons differ");
        return Ok(format!("adjacency {} - {} differs", name(pair.0), name(pair.1)));
    }
    let (va, vb) = (a.v_structures(), b.v_structures());
    let (x, z, y) = *va.symmetric_difference(&vb).next().expect("v-structures differ");
    let owner = if va.contains(&(x, z, y)) { "first" } else { "second" };
    Ok(format!(
        "only the {owner} structure has the v-structure {} -> {} <- {}",
        name(x),
        name(z),
        name(y)
    ))
}

fn cmd_gen(args: &GenArgs) -> Result<ExitCode> {
    let net = load_network(&args.network)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let d = net.sample(args.m, &mut rng).with_context(|| args.network.display().to_string())?;
    write_csv(&d, std::io::stdout().lock())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_project(args: &ProjectArgs) -> Result<ExitCode> {
    let net = load_network(&args.schema)?;
    let d = load_data(&args.data, &net)?;
    let names: Vec<&str> = args.vars.iter().map(String::as_str).collect();
    write_csv(&d.project_names(&names)?, std::io::stdout().lock())?;
    Ok(ExitCode::SUCCESS)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BNSCORE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("BNSCORE_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    configure_threads()?;
    match &cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Learn(a) => cmd_learn(a),
        Command::Equiv(a) => cmd_equiv(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Project(a) => cmd_project(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
