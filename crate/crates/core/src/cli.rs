//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{
    component_errors, method_errors, rank_select, select_ranks, variance_explained_covariates,
    variance_explained_network, METHODS,
};
use crate::io::{
    self, file_digest, log1p_matrix, read_covariates, read_decomposition, read_dense_network, read_edge_list,
    symmetrize, write_decomposition, write_matrix, CovariateTable, Manifest,
    PipelineConfig, PreparedData, RankPolicy, SymmetrizeMode, WeightedGraph,
};
use crate::model::{CovariateMatrix, Ranks};
use crate::refine::{refine_decompose, RefineConfig};
use crate::simgen::{group_structure_example, simulation_design, SimConfig, SimInstance, Setting};
use crate::spectral::spectral_decompose;

#[derive(Debug, Parser)]
#[command(name = "jinet", version, about = "Joint and individual subspaces of a network and its node covariates")]
struct Cli {
    /// Seed for all randomness.
    #[arg(long, global = true, env = "JINET_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate joint and individual components from data files.
    Decompose(DecomposeArgs),
    /// Monte Carlo replications of the synthetic designs.
    Simulate(SimulateArgs),
    /// Procrustes errors between an estimate and a reference.
    Evaluate(EvaluateArgs),
    /// Scree values and the selected elbow for one data source.
    Ranks(RanksArgs),
    /// Variance explained by each component.
    Variance(VarianceArgs),
    /// Write one synthetic instance (data and true components).
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NetworkFormat {
    /// `.csv` means dense, anything else an edge list
    Auto,
    Edges,
    Dense,
}

#[derive(Debug, Args)]
struct NetworkArgs {
    /// Network format.
    #[arg(long, value_enum, default_value_t = NetworkFormat::Auto)]
    network_format: NetworkFormat,
    /// Treat each edge-list line as an undirected edge.
    #[arg(long)]
    undirected_input: bool,
    /// add_transpose, average or none.
    #[arg(long, default_value = "add_transpose", value_parser = parse_symmetrize)]
    symmetrize: SymmetrizeMode,
    /// Skip log(1 + x) of the network weights.
    #[arg(long)]
    no_log_network: bool,
}

#[derive(Debug, Args)]
struct CovariateArgs {
    /// Categorical covariate columns to dummy-encode (repeatable or comma separated).
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Skip log(1 + x) of the numeric covariates.
    #[arg(long)]
    no_log_covariates: bool,
    /// Skip centering and scaling of the covariate columns.
    #[arg(long)]
    no_standardize: bool,
    /// Leave dummy columns as 0/1 when standardizing.
    #[arg(long)]
    no_standardize_dummies: bool,
}

fn parse_symmetrize(s: &str) -> std::result::Result<SymmetrizeMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ranks(s: &str) -> std::result::Result<Ranks, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("rank_choice").required(true).args(["ranks", "auto_ranks"])))]
struct DecomposeArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    covariates: PathBuf,
    /// r_M,r_1,r_2
    #[arg(long, value_parser = parse_ranks)]
    ranks: Option<Ranks>,
    /// Pick ranks from scree-plot elbows.
    #[arg(long)]
    auto_ranks: bool,
    /// Largest rank the elbow search may return.
    #[arg(long, default_value_t = 10)]
    max_rank: usize,
    /// Refine the spectral estimate (default).
    #[arg(long, overrides_with = "no_refine")]
    refine: bool,
    /// Stop after the spectral estimate.
    #[arg(long)]
    no_refine: bool,
    #[arg(long, default_value_t = 200)]
    t_max: usize,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    /// Output directory (created if needed).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    net: NetworkArgs,
    #[command(flatten)]
    cov: CovariateArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sweep {
    Delta,
    S2,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Flat key = value design file; without it both settings run at defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, value_enum, default_value_t = Sweep::Delta)]
    sweep: Sweep,
    #[arg(long, default_value_t = 200)]
    t_max: usize,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["network", "covariates"])))]
struct RanksArgs {
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    max_rank: usize,
    #[command(flatten)]
    net: NetworkArgs,
    #[command(flatten)]
    cov: CovariateArgs,
}

#[derive(Debug, Args)]
struct VarianceArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    covariates: PathBuf,
    #[arg(long)]
    est: PathBuf,
    /// Embedding dimension for the network split (default r_M + r_1).
    #[arg(long)]
    latent_dim: Option<usize>,
    #[command(flatten)]
    net: NetworkArgs,
    #[command(flatten)]
    cov: CovariateArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Example {
    /// forty nodes in four groups
    Groups,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("design").required(true).args(["config", "example"])))]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    example: Option<Example>,
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI and returns the process exit code: 0 on success, 2 for
/// usage and validation errors, 1 for runtime failures.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let seed = cli.seed;
    let outcome = match cli.command {
        Command::Decompose(a) => decompose(a, seed.unwrap_or(0)),
        Command::Simulate(a) => simulate(a, seed),
        Command::Evaluate(a) => evaluate(a),
        Command::Ranks(a) => ranks(a),
        Command::Variance(a) => variance(a),
        Command::Generate(a) => generate(a, seed),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

fn pipeline_config(net: &NetworkArgs, cov: &CovariateArgs) -> PipelineConfig {
    PipelineConfig {
        log_transform_network: !net.no_log_network,
        log_transform_numeric_covariates: !cov.no_log_covariates,
        symmetrize: net.symmetrize,
        standardize_columns: !cov.no_standardize,
        standardize_dummies: !cov.no_standardize_dummies,
        categorical_columns: cov.categorical.clone(),
        ranks: None,
        rank_policy: RankPolicy::AutoElbow,
    }
}

fn load_graph(path: &Path, net: &NetworkArgs) -> Result<WeightedGraph> {
    let dense = match net.network_format {
        NetworkFormat::Dense => true,
        NetworkFormat::Edges => false,
        NetworkFormat::Auto => path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")),
    };
    let reader = io::open(path)?;
    if dense {
        read_dense_network(reader)
    } else {
        read_edge_list(reader, !net.undirected_input)
    }
}

fn load_table(path: &Path, cov: &CovariateArgs) -> Result<CovariateTable> {
    read_covariates(io::open(path)?, &cov.categorical)
}

fn load_inputs(network: &Path, covariates: &Path, net: &NetworkArgs, cov: &CovariateArgs) -> Result<PreparedData> {
    let graph = load_graph(network, net)?;
    let table = load_table(covariates, cov)?;
    io::prepare(graph, table, &pipeline_config(net, cov))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn decompose(args: DecomposeArgs, seed: u64) -> Result<()> {
    let data = load_inputs(&args.network, &args.covariates, &args.net, &args.cov)?;
    let ranks = match args.ranks {
        Some(r) => r,
        None => {
            let sel = select_ranks(&data.adjacency, &data.covariates, args.max_rank)?;
            log::info!("selected ranks {}", sel.ranks);
            sel.ranks
        }
    };
    let spectral = spectral_decompose(&data.adjacency, &data.covariates, ranks)?;
    let mut manifest = Manifest::new(ranks, seed);
    manifest.digests.push(("network".into(), file_digest(&args.network)?));
    manifest.digests.push(("covariates".into(), file_digest(&args.covariates)?));
    create_dir(&args.out)?;
    let result = if args.no_refine {
        manifest.extra.push(("method".into(), "spectral".into()));
        spectral
    } else {
        let cfg = RefineConfig {
            t_max: args.t_max,
            epsilon: args.epsilon,
            ..RefineConfig::default()
        };
        let out = refine_decompose(&data.adjacency, &data.covariates, &spectral, ranks, &cfg)?;
        manifest.extra.push(("method".into(), "spectral_opt".into()));
        manifest.extra.push(("iterations".into(), out.trace.iterations.to_string()));
        manifest.extra.push(("converged".into(), out.trace.converged.to_string()));
        manifest.extra.push(("final_loss".into(), out.trace.final_loss().to_string()));
        let mut trace = String::from("iteration,loss\n");
        for (t, l) in out.trace.losses.iter().enumerate() {
            let _ = writeln!(trace, "{t},{l}");
        }
        write_text(&args.out.join("trace.csv"), &trace)?;
        if !out.trace.converged {
            log::warn!("refinement stopped at t_max = {} without converging", args.t_max);
        }
        out.decomposition
    };
    write_decomposition(&result, &args.out, &manifest)?;
    write_text(&args.out.join("nodes.txt"), &(data.node_ids.join("\n") + "\n"))?;
    eprintln!("wrote ranks {ranks} decomposition of {} nodes to {}", data.node_ids.len(), args.out.display());
    Ok(())
}

struct Job {
    setting: Setting,
    grid_value: f64,
    cfg: SimConfig,
    rep: usize,
}

fn replication(job: &Job, refine_cfg: &RefineConfig) -> [[f64; 3]; 4] {
    match simulation_design(&job.cfg) {
        Ok(inst) => method_errors(&inst, refine_cfg),
        Err(e) => {
            log::warn!("rep {} at {}: {e}", job.rep, job.grid_value);
            [[f64::NAN; 3]; 4]
        }
    }
}

fn read_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SimConfig::from_kv_str(&text)
}

/// Ten equally spaced grid values: inner-product coefficients 0, 0.1, ..,
/// 0.9 (separations 1 down to 0.1) for the delta sweep, and 0.1, .., 1 for
/// the s2 sweep.
fn sweep_grid(sweep: Sweep) -> Vec<f64> {
    match sweep {
        Sweep::Delta => (0..10).map(|i| i as f64 / 10.0).collect(),
        Sweep::S2 => (1..=10).map(|i| i as f64 / 10.0).collect(),
    }
}

fn simulate(args: SimulateArgs, seed: Option<u64>) -> Result<()> {
    if args.reps == 0 {
        return Err(Error::InvalidConfig("--reps must be at least 1".into()));
    }
    let bases: Vec<SimConfig> = match &args.config {
        Some(p) => vec![read_config(p)?],
        None => Setting::ALL.iter().map(|&s| SimConfig::defaults(s)).collect(),
    };
    let refine_cfg = RefineConfig {
        t_max: args.t_max,
        epsilon: args.epsilon,
        ..RefineConfig::default()
    };
    refine_cfg.validate()?;
    let mut jobs = Vec::new();
    for base in &bases {
        let base_seed = seed.unwrap_or(base.seed);
        for &g in &sweep_grid(args.sweep) {
            let mut cfg = *base;
            match args.sweep {
                Sweep::Delta => cfg.delta = g,
                Sweep::S2 => {
                    cfg.delta = 0.0;
                    cfg.s2 = g;
                }
            }
            cfg.validate()?;
            for rep in 0..args.reps {
                cfg.seed = base_seed.wrapping_add(rep as u64);
                let grid_value = match args.sweep {
                    Sweep::Delta => 1.0 - g,
                    Sweep::S2 => g,
                };
                jobs.push(Job {
                    setting: base.setting,
                    grid_value,
                    cfg,
                    rep,
                });
            }
        }
    }
    let results: Vec<[[f64; 3]; 4]> = jobs.par_iter().map(|j| replication(j, &refine_cfg)).collect();

    let column = match args.sweep {
        Sweep::Delta => "delta",
        Sweep::S2 => "s2",
    };
    let mut csv = format!("setting,{column},method,dM,dR1,dR2,rep\n");
    for (job, rows) in jobs.iter().zip(&results) {
        let value = (job.grid_value * 1e12).round() / 1e12;
        for (method, [dm, d1, d2]) in METHODS.iter().zip(rows) {
            let _ = writeln!(csv, "{},{value},{method},{dm},{d1},{d2},{}", job.setting, job.rep);
        }
    }
    create_dir(&args.out)?;
    write_text(&args.out.join("errors.csv"), &csv)?;
    let configs: String = bases.iter().map(|b| b.to_kv_string()).collect::<Vec<_>>().join("\n");
    write_text(&args.out.join("config.txt"), &configs)?;
    eprintln!("wrote {} replications to {}", jobs.len(), args.out.join("errors.csv").display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let (est, _) = read_decomposition(&args.est)?;
    let (truth, _) = read_decomposition(&args.truth)?;
    let (dm, d1, d2) = component_errors(&est, &truth)?;
    println!("dM,dR1,dR2\n{dm},{d1},{d2}");
    Ok(())
}

fn print_scree(values: &[f64], selected: usize) {
    let mut out = format!("selected={selected}\nindex,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{v}", i + 1);
    }
    print!("{out}");
}

fn ranks(args: RanksArgs) -> Result<()> {
    let cfg = pipeline_config(&args.net, &args.cov);
    let values = if let Some(path) = &args.network {
        let graph = load_graph(path, &args.net)?;
        let sym = symmetrize(&graph.weights, cfg.symmetrize)?;
        let w = if cfg.log_transform_network {
            log1p_matrix(sym.entries())?
        } else {
            sym.into_inner()
        };
        crate::eval::network_scree(&crate::model::AdjacencyMatrix::new(w)?)
    } else {
        let path = args.covariates.as_ref().expect("clap enforces one source");
        let x = io::prepare_covariates(load_table(path, &args.cov)?, &cfg)?;
        crate::eval::covariate_scree(&x)
    };
    let selected = rank_select(&values, args.max_rank)?;
    print_scree(&values, selected);
    Ok(())
}

fn variance(args: VarianceArgs) -> Result<()> {
    let data = load_inputs(&args.network, &args.covariates, &args.net, &args.cov)?;
    let (est, _) = read_decomposition(&args.est)?;
    if est.n() != data.adjacency.n() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} rows, data have {} common nodes",
            est.n(),
            data.adjacency.n()
        )));
    }
    let latent = args.latent_dim.unwrap_or(est.joint.dim() + est.network.dim());
    let net = variance_explained_network(&data.adjacency, &est, latent)?;
    let cov = variance_explained_covariates(&data.covariates, &est.joint, &est.covariate)?;
    println!("view,joint,individual,residual");
    println!("network,{},{},{}", net.joint, net.individual, net.residual);
    println!("covariates,{},{},{}", cov.joint, cov.individual, cov.residual);
    Ok(())
}

/// Covariate CSV with node IDs `0..n` and columns `x1..xp`.
pub fn covariates_to_csv(x: &CovariateMatrix) -> String {
    let mut out = String::from("id");
    for j in 0..x.p() {
        let _ = write!(out, ",x{}", j + 1);
    }
    out.push('\n');
    for i in 0..x.n() {
        let _ = write!(out, "{i}");
        for j in 0..x.p() {
            let _ = write!(out, ",{}", x.entries()[(i, j)]);
        }
        out.push('\n');
    }
    out
}

fn generate(args: GenerateArgs, seed: Option<u64>) -> Result<()> {
    let (inst, config_text): (SimInstance, String) = match (&args.config, args.example) {
        (Some(p), _) => {
            let mut cfg = read_config(p)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            (simulation_design(&cfg)?, cfg.to_kv_string())
        }
        (None, Some(Example::Groups)) => {
            let s = seed.unwrap_or(0);
            (group_structure_example(s)?, format!("example = groups\nseed = {s}\n"))
        }
        (None, None) => unreachable!("clap enforces one design"),
    };
    create_dir(&args.out)?;
    write_matrix(inst.adjacency.entries(), &args.out.join("A.csv"))?;
    write_text(&args.out.join("X.csv"), &covariates_to_csv(&inst.covariates))?;
    write_text(&args.out.join("config.txt"), &config_text)?;
    let truth_dir = args.out.join("truth");
    create_dir(&truth_dir)?;
    let comps = &inst.truth.components;
    let manifest = Manifest::new(comps.ranks(), seed.unwrap_or(0));
    write_decomposition(comps, &truth_dir, &manifest)?;
    eprintln!("wrote instance with {} nodes to {}", inst.adjacency.n(), args.out.display());
    Ok(())
}
