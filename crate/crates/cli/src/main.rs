//! Command-line driver: network generation, influence estimation,
//! constrained allocation, and benchmark sweeps.
//!
//! Every randomized command takes an explicit `--seed`; with the same seed
//! and inputs, the primary output files are byte-identical regardless of
//! `--workers`. Wall-clock timings go to stderr or to dedicated columns.

// `!(x > 0.0)` guards are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod instance;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use influence::budgetmax::{
    enumerate_densities, maximize_uniform, Allocation, AllocationProblem, SketchObjective,
};
use influence::baselines::{greedy_degree, random_allocation, BaselineKind};
use influence::constraints::GroundSet;
use influence::continest::{build_bundle_with, BundleConfig, SketchBundle};
use influence::error::{Error, Result};
use influence::netmodel::{
    assign_random_laws, fmt_f64, generate_kronecker, DiffusionNetwork, LawKind, NodeId,
};
use influence::oracle::{ns_estimate, InfluenceEstimate, SourceSet};
use influence::rngs::{self, domain};

#[derive(Parser)]
#[command(name = "influence", version, about = "Diffusion influence estimation and allocation")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Kronecker network with random edge laws.
    Generate(GenerateArgs),
    /// Estimate the influence of a source set on a network file.
    Estimate(EstimateArgs),
    /// Allocate products to users under the instance's constraints.
    Maximize(MaximizeArgs),
    /// Time sketch construction, estimation, and source selection.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    CorePeriphery,
    Random,
    Hierarchical,
}

impl PresetArg {
    fn matrix(self) -> [[f64; 2]; 2] {
        match self {
            PresetArg::CorePeriphery => [[0.9, 0.5], [0.5, 0.3]],
            PresetArg::Random => [[0.5, 0.5], [0.5, 0.5]],
            PresetArg::Hierarchical => [[0.9, 0.1], [0.1, 0.9]],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LawArg {
    Exponential,
    Rayleigh,
    Weibull,
}

impl From<LawArg> for LawKind {
    fn from(v: LawArg) -> LawKind {
        match v {
            LawArg::Exponential => LawKind::Exponential,
            LawArg::Rayleigh => LawKind::Rayleigh,
            LawArg::Weibull => LawKind::Weibull,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Base-matrix preset.
    #[arg(long, value_enum, conflicts_with = "base")]
    preset: Option<PresetArg>,
    /// Explicit base matrix `a,b,c,d` for [[a b],[c d]].
    #[arg(long)]
    base: Option<String>,
    /// Kronecker power; the network has 2^power nodes.
    #[arg(long)]
    power: u32,
    /// Edge law family.
    #[arg(long, value_enum, default_value = "weibull")]
    laws: LawArg,
    /// Uniform parameter range `lo:hi` for the law parameters.
    #[arg(long, default_value = "0.1:10")]
    law_range: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Continest,
    Ns,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    network: PathBuf,
    /// Comma-separated source node ids; an empty string is the empty set.
    #[arg(long, allow_hyphen_values = false)]
    sources: String,
    /// Time horizon; required unless --t-grid is given.
    #[arg(long, required_unless_present = "t_grid")]
    horizon: Option<f64>,
    #[arg(long, value_enum, default_value = "continest")]
    method: MethodArg,
    /// Outer samples.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Label sets per outer sample (sketch method only).
    #[arg(long, default_value_t = 5)]
    m: usize,
    #[arg(long)]
    seed: u64,
    /// Sweep `lo:hi:count` of horizons; rows go to --output as CSV.
    #[arg(long)]
    t_grid: Option<String>,
    /// CSV output path for --t-grid.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Degree,
    Ratio,
    LocalDegree,
    Random,
}

#[derive(Args)]
struct MaximizeArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Outer samples per product bundle.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Label sets per outer sample.
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// Threshold decay knob in (0,1).
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Assert the instance has uniform costs; errors if a cost matrix is
    /// present.
    #[arg(long)]
    uniform: bool,
    /// Run a comparison allocator instead of the optimizer.
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    /// Allocation CSV output path.
    #[arg(long)]
    output: PathBuf,
    /// Directory to write per-product sketch bundles into.
    #[arg(long)]
    save_sketches: Option<PathBuf>,
    /// Directory to load per-product sketch bundles from.
    #[arg(long)]
    load_sketches: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Comma-separated Kronecker powers (2^p nodes each).
    #[arg(long, default_value = "7,8")]
    powers: String,
    /// Comma-separated target densities (expected edges per node).
    #[arg(long, default_value = "1.5,3")]
    densities: String,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// Sources to select in the timing of the maximization phase.
    #[arg(long, default_value_t = 10)]
    select: u32,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        // ignore failure: the global pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Maximize(args) => cmd_maximize(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Capacity(_) | Error::Contract(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return Err(Error::input(format!("{what} must be `lo:hi`, got `{s}`")));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| Error::input(format!("bad {what} lower bound `{}`", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| Error::input(format!("bad {what} upper bound `{}`", parts[1])))?;
    Ok((lo, hi))
}

fn parse_base(s: &str) -> Result<[[f64; 2]; 2]> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::input(format!("bad base entry `{t}`"))))
        .collect::<Result<_>>()?;
    if vals.len() != 4 {
        return Err(Error::input("base matrix needs exactly 4 comma-separated entries"));
    }
    Ok([[vals[0], vals[1]], [vals[2], vals[3]]])
}

fn parse_id_list(s: &str) -> Result<Vec<NodeId>> {
    let trimmed = s.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<NodeId>()
                .map_err(|_| Error::input(format!("bad node id `{t}`")))
        })
        .collect()
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let base = match (args.preset, &args.base) {
        (Some(p), None) => p.matrix(),
        (None, Some(b)) => parse_base(b)?,
        (None, None) => return Err(Error::input("either --preset or --base is required")),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let range = parse_pair(&args.law_range, "--law-range")?;
    let mut rng = rngs::stream_rng(args.seed, domain::KRONECKER, 0);
    let edges = generate_kronecker(&base, args.power, &mut rng)?;
    let mut law_rng = rngs::stream_rng(args.seed, domain::LAWS, 0);
    let net = assign_random_laws(&edges, args.laws.into(), range, &mut law_rng)?;
    net.save(&args.output)?;
    eprintln!(
        "wrote {} nodes, {} edges to {}",
        net.num_nodes(),
        net.num_edges(),
        args.output.display()
    );
    Ok(())
}

fn print_estimate(est: &InfluenceEstimate, m: Option<usize>) {
    match m {
        Some(m) => println!(
            "value={} stderr={} n={} m={m}",
            fmt_f64(est.value),
            fmt_f64(est.stderr),
            est.n_used
        ),
        None => println!(
            "value={} stderr={} n={}",
            fmt_f64(est.value),
            fmt_f64(est.stderr),
            est.n_used
        ),
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let started = Instant::now();
    let net = DiffusionNetwork::load(&args.network)?;
    let sources = SourceSet::new(parse_id_list(&args.sources)?);
    sources.validate(&net)?;

    let horizons: Vec<f64> = match &args.t_grid {
        None => vec![args.horizon.expect("clap requires --horizon without --t-grid")],
        Some(spec) => parse_t_grid(spec)?,
    };
    if let Some(&t) = horizons.iter().find(|&&t| !(t >= 0.0)) {
        return Err(Error::input(format!("horizon must be >= 0, got {t}")));
    }

    let estimates: Vec<InfluenceEstimate> = match args.method {
        MethodArg::Ns => horizons
            .iter()
            .map(|&t| ns_estimate(&net, &sources, t, args.n, args.seed))
            .collect::<Result<_>>()?,
        MethodArg::Continest => {
            if sources.is_empty() {
                horizons
                    .iter()
                    .map(|_| InfluenceEstimate {
                        value: 0.0,
                        n_used: args.n,
                        stderr: 0.0,
                    })
                    .collect()
            } else {
                let mut config = BundleConfig::new(args.n, args.m, args.seed);
                config.targets = Some(sources.nodes().to_vec());
                config.horizon_hint = horizons.iter().cloned().fold(None, |acc: Option<f64>, t| {
                    Some(acc.map_or(t, |a| a.max(t)))
                });
                let bundle = build_bundle_with(&net, &config)?;
                horizons
                    .iter()
                    .map(|&t| influence::continest::estimate_influence(&bundle, &sources, t))
                    .collect::<Result<_>>()?
            }
        }
    };

    let m = matches!(args.method, MethodArg::Continest).then_some(args.m);
    match &args.t_grid {
        None => print_estimate(&estimates[0], m),
        Some(_) => {
            let path = args
                .output
                .as_ref()
                .ok_or_else(|| Error::input("--t-grid requires --output for the CSV"))?;
            let mut out = String::from("T,value,stderr,n,m\n");
            for (t, est) in horizons.iter().zip(&estimates) {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_f64(*t),
                    fmt_f64(est.value),
                    fmt_f64(est.stderr),
                    est.n_used,
                    args.m
                ));
            }
            fs::write(path, out)?;
            eprintln!("wrote {} rows to {}", horizons.len(), path.display());
        }
    }
    eprintln!("elapsed_s={:.3}", started.elapsed().as_secs_f64());
    Ok(())
}

fn parse_t_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::input(format!("--t-grid must be `lo:hi:count`, got `{spec}`")));
    }
    let lo: f64 = parts[0].parse().map_err(|_| Error::input("bad t-grid lower bound"))?;
    let hi: f64 = parts[1].parse().map_err(|_| Error::input("bad t-grid upper bound"))?;
    let count: usize = parts[2].parse().map_err(|_| Error::input("bad t-grid count"))?;
    if count == 0 || hi < lo {
        return Err(Error::input("t-grid needs count >= 1 and hi >= lo"));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect())
}

fn cmd_maximize(args: MaximizeArgs) -> Result<()> {
    let started = Instant::now();
    let inst = instance::load_instance(&args.instance)?;
    if args.uniform && inst.has_costs() {
        return Err(Error::input(
            "--uniform was given but the instance declares a cost matrix; remove the `costs` line or the flag",
        ));
    }
    let constraints = inst.constraint_system()?;

    // per-product bundles restricted to the target nodes
    let bundles: Vec<SketchBundle> = match &args.load_sketches {
        Some(dir) => inst
            .networks
            .iter()
            .enumerate()
            .map(|(i, net)| {
                let bundle = SketchBundle::load(dir.join(format!("bundle_{i}.ctsb")))?;
                if !bundle.matches_network(net) {
                    return Err(Error::input(format!(
                        "sketch bundle {i} does not match product {i}'s network"
                    )));
                }
                Ok(bundle)
            })
            .collect::<Result<_>>()?,
        None => inst
            .networks
            .iter()
            .enumerate()
            .map(|(i, net)| {
                let mut config =
                    BundleConfig::new(args.n, args.m, rngs::derive_seed(args.seed, 0xB1, i as u64));
                config.targets = Some(inst.target_nodes.clone());
                config.horizon_hint = Some(inst.products[i].horizon);
                build_bundle_with(net, &config)
            })
            .collect::<Result<_>>()?,
    };
    if let Some(dir) = &args.save_sketches {
        fs::create_dir_all(dir)?;
        for (i, b) in bundles.iter().enumerate() {
            b.save(dir.join(format!("bundle_{i}.ctsb")))?;
        }
    }
    let built = Instant::now();

    let objective = SketchObjective::new(
        &bundles,
        inst.weights(),
        inst.horizons(),
        &inst.target_nodes,
    )?;
    let problem = AllocationProblem::new(objective, constraints, args.delta)?;

    let alloc: Allocation = match args.baseline {
        Some(BaselineArg::Degree) => greedy_degree(&problem, &inst.degrees(), BaselineKind::Degree, None)?,
        Some(BaselineArg::Ratio) => {
            greedy_degree(&problem, &inst.degrees(), BaselineKind::DegreeCostRatio, None)?
        }
        Some(BaselineArg::LocalDegree) => {
            let groups = baseline_partition(&inst)?;
            greedy_degree(&problem, &inst.degrees(), BaselineKind::LocalDegree, Some(&groups))?
        }
        Some(BaselineArg::Random) => {
            let mut rng = rngs::stream_rng(args.seed, domain::SHUFFLE, 0);
            random_allocation(&problem, &mut rng)?
        }
        None => {
            if inst.has_costs() {
                enumerate_densities(&problem)?
            } else {
                maximize_uniform(&problem)?
            }
        }
    };

    fs::write(&args.output, alloc.to_csv(args.delta))?;
    eprintln!(
        "value={} k_a={} rho={} selections={}",
        fmt_f64(alloc.value),
        alloc.k_a,
        fmt_f64(alloc.rho),
        alloc.selected.len()
    );
    eprintln!(
        "build_s={:.3} solve_s={:.3}",
        (built - started).as_secs_f64(),
        built.elapsed().as_secs_f64()
    );
    Ok(())
}

/// Finest-cell partition of the users induced by the instance's (possibly
/// nested) groups: each user lands in the smallest group containing it;
/// ungrouped users share one trailing cell.
fn baseline_partition(inst: &instance::Instance) -> Result<Vec<Vec<u32>>> {
    if inst.groups.is_empty() {
        return Err(Error::input(
            "the local-degree baseline requires `group` lines in the instance",
        ));
    }
    let groups = inst.group_user_lists();
    let mut cells: Vec<Vec<u32>> = vec![Vec::new(); groups.len()];
    let mut rest = Vec::new();
    for u in 0..inst.num_users as u32 {
        let mut best: Option<usize> = None;
        for (gi, g) in groups.iter().enumerate() {
            if g.contains(&u) && best.is_none_or(|b| groups[b].len() > g.len()) {
                best = Some(gi);
            }
        }
        match best {
            Some(gi) => cells[gi].push(u),
            None => rest.push(u),
        }
    }
    let mut out: Vec<Vec<u32>> = cells.into_iter().filter(|c| !c.is_empty()).collect();
    if !rest.is_empty() {
        out.push(rest);
    }
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| Error::input(format!("bad {what} entry `{t}`")))
        })
        .collect()
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    let powers: Vec<u32> = parse_list(&args.powers, "--powers")?;
    let densities: Vec<f64> = parse_list(&args.densities, "--densities")?;
    if let Some(d) = densities.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::input(format!("densities must be positive, got {d}")));
    }

    let mut rows = Vec::new();
    for &power in &powers {
        for &density in &densities {
            let b = (density.powf(1.0 / power as f64) / 2.0).min(1.0);
            let base = [[b, b], [b, b]];
            let case_seed = rngs::derive_seed(args.seed, 0xBE, (power as u64) << 32 | density.to_bits() >> 32);
            let mut rng = rngs::stream_rng(case_seed, domain::KRONECKER, 0);
            let edges = generate_kronecker(&base, power, &mut rng)?;
            let mut law_rng = rngs::stream_rng(case_seed, domain::LAWS, 0);
            let net = assign_random_laws(&edges, LawKind::Weibull, (0.1, 10.0), &mut law_rng)?;

            let t0 = Instant::now();
            let bundle = influence::continest::build_bundle(&net, args.n, args.m, case_seed)?;
            let build_s = t0.elapsed().as_secs_f64();

            let hub = (0..net.num_nodes() as NodeId)
                .max_by_key(|&v| (net.out_degree(v), std::cmp::Reverse(v)))
                .expect("nonempty network");
            let t1 = Instant::now();
            let est =
                influence::continest::estimate_influence(&bundle, &SourceSet::from([hub]), args.horizon)?;
            let estimate_s = t1.elapsed().as_secs_f64();

            let users: Vec<NodeId> = (0..net.num_nodes() as NodeId).collect();
            let objective = SketchObjective::new(
                std::slice::from_ref(&bundle),
                vec![1.0],
                vec![args.horizon],
                &users,
            )?;
            let ground = GroundSet::new(1, users.len())?;
            let sys = influence::constraints::ConstraintSystem::uniform(
                ground,
                &vec![1u32; users.len()],
                &[args.select],
            )?;
            let problem = AllocationProblem::new(objective, sys, 0.1)?;
            let t2 = Instant::now();
            let alloc = maximize_uniform(&problem)?;
            let select_s = t2.elapsed().as_secs_f64();

            rows.push((
                net.num_nodes(),
                net.num_edges(),
                density,
                build_s,
                estimate_s,
                select_s,
                est.value,
                alloc.value,
            ));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut out = String::from("nodes,edges,density,build_s,estimate_s,select_s,estimate_value,allocation_value\n");
    for (nodes, edges, density, build_s, estimate_s, select_s, ev, av) in rows {
        out.push_str(&format!(
            "{nodes},{edges},{},{build_s:.6},{estimate_s:.6},{select_s:.6},{},{}\n",
            fmt_f64(density),
            fmt_f64(ev),
            fmt_f64(av)
        ));
    }
    fs::write(&args.output, out)?;
    eprintln!("wrote benchmark table to {}", args.output.display());
    Ok(())
}
