use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use markpp::basis::{self, IntensityMatrixSet};
use markpp::cluster::{cut_tree, ward_cluster, FeatureTable};
use markpp::court::{court_grid, CourtGeometry};
use markpp::io::{self, Provenance};
use markpp::joint::ParamLayout;
use markpp::mcmc::IntervalKind;
use markpp::pipeline::{self, RunConfig, ScoreKind};
use markpp::selection::compare_xi_models;
use markpp::simstudy::{self, Preset, SimDesign, Z2Kind};
use markpp::{Exec, IntensityLink};

/// Bayesian joint modeling of shot locations and outcomes.
#[derive(Parser)]
#[command(name = "markpp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a marked point pattern from the simulation design.
    Simulate(SimulateArgs),
    /// Fit the joint model described by a run config.
    Fit(FitArgs),
    /// Fit with ξ free and with ξ = 0 and compare DIC/LPML.
    Compare(FitArgs),
    /// Run a parameter-recovery simulation study.
    Simstudy(SimstudyArgs),
    /// Build NMF shot-type bases from per-player shot charts.
    Basis(BasisArgs),
    /// Ward clustering of per-player coefficient vectors.
    Cluster(ClusterArgs),
    /// Export intensity, make-probability and score surfaces from a fit.
    Export(ExportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON design file; flags below override its fields.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    z2: Option<Z2Kind>,
    #[arg(long)]
    seed: u64,
    /// Output CSV (`x,y,made,z1,z2`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct FitArgs {
    /// Run config JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    link: Option<IntensityLink>,
    #[arg(long)]
    interval: Option<IntervalKind>,
    /// Fit the restricted model with ξ = 0.
    #[arg(long)]
    no_xi: bool,
    /// Refit after dropping coefficients whose interval covers zero.
    #[arg(long)]
    two_stage: bool,
}

#[derive(Args)]
struct SimstudyArgs {
    #[arg(long, default_value = "desk")]
    preset: Preset,
    /// Restrict to design cells with this λ0.
    #[arg(long)]
    lambda0: Option<f64>,
    /// Restrict to design cells with this α1.
    #[arg(long)]
    alpha1: Option<f64>,
    /// Restrict to design cells with this Z2 distribution.
    #[arg(long)]
    z2: Option<Z2Kind>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    link: Option<IntensityLink>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BasisArgs {
    /// Directory of shot-chart CSVs, one per player (file stem = player id).
    #[arg(long)]
    players: PathBuf,
    #[arg(long, default_value_t = basis::DEFAULT_RANK)]
    rank: usize,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = basis::DEFAULT_MIN_SHOTS)]
    min_shots: usize,
    /// Kernel bandwidth in feet; per-player rule of thumb when absent.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// CSV with an id column followed by numeric features.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    k: usize,
    /// Standardize each feature before clustering.
    #[arg(long)]
    zscore: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    /// Run config used for the fit.
    #[arg(long)]
    config: PathBuf,
    /// Output directory of a previous `fit`.
    #[arg(long)]
    fit_dir: PathBuf,
    /// Score as make rate `λ·θ` instead of expected points `λ·θ·points`.
    #[arg(long)]
    make_rate: bool,
    #[arg(long)]
    no_xi: bool,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(args: &FitArgs) -> Result<RunConfig> {
    let mut cfg: RunConfig = io::read_json(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    cfg.chain.seed = args.seed;
    if let Some(d) = &args.data {
        cfg.data = d.clone();
    }
    if let Some(n) = args.n_iter {
        cfg.chain.n_iter = n;
    }
    if let Some(b) = args.burnin {
        cfg.chain.n_burnin = b;
    }
    if let Some(t) = args.thin {
        cfg.chain.thin = t;
    }
    if let Some(l) = args.link {
        cfg.link = l;
    }
    if let Some(i) = args.interval {
        cfg.interval = i;
    }
    if args.no_xi {
        cfg.xi_enabled = false;
    }
    // relative data paths are taken from the config's directory
    if cfg.data.is_relative() {
        if let Some(dir) = args.config.parent() {
            cfg.data = dir.join(&cfg.data);
        }
    }
    if let Some(b) = cfg.basis_dir.as_mut() {
        if b.is_relative() {
            if let Some(dir) = args.config.parent() {
                *b = dir.join(&*b);
            }
        }
    }
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let mut design: SimDesign = match &args.design {
        Some(p) => io::read_json(p)?,
        None => SimDesign::default(),
    };
    if let Some(v) = args.lambda0 {
        design.lambda0 = v;
    }
    if let Some(v) = args.alpha1 {
        if design.alpha.len() < 2 {
            bail!("the design has no alpha1 term");
        }
        design.alpha[1] = v;
    }
    if let Some(v) = args.xi {
        design.xi = v;
    }
    if let Some(z) = args.z2 {
        design.z2_kind = z;
    }
    design.master_seed = args.seed;
    design.validate()?;
    let covs = design.covariates()?;
    let pattern = design.simulate(&covs, &mut markpp::rng::seeded(args.seed))?;
    io::write_marked_csv(&args.out, &pattern)?;
    let prov = Provenance::new(&design, args.seed)?;
    io::write_json(&args.out.with_extension("design.json"), &io::stamped(&design, &prov)?)?;
    println!("{} points, mark rate {}", pattern.len(), io::sig6(pattern.mark_rate()));
    Ok(ExitCode::SUCCESS)
}

fn fit(args: FitArgs) -> Result<ExitCode> {
    let cfg = load_config(&args)?;
    let prov = cfg.provenance()?;
    let inputs = pipeline::load_inputs(&cfg)?;
    if inputs.dropped_rows > 0 {
        eprintln!("dropped {} rows outside the court window", inputs.dropped_rows);
    }
    let spec = cfg.spec();
    let result = if args.two_stage {
        let ts = pipeline::two_stage_fit(&inputs.pattern, &inputs.covs, &spec)?;
        pipeline::write_fit_outputs(&args.out.join("stage1"), &ts.stage1, &prov)?;
        let dropped = serde_json::json!({
            "dropped": ts.dropped,
            "xi_enabled": ts.xi_enabled,
            "beta": ts.beta_names,
            "alpha": ts.alpha_names,
        });
        io::write_json(&args.out.join("dropped.json"), &io::stamped(&dropped, &prov)?)?;
        println!("dropped after stage 1: {:?}", ts.dropped);
        ts.stage2
    } else {
        pipeline::fit_model(&inputs.pattern, &inputs.covs, &spec)?
    };
    pipeline::write_fit_outputs(&args.out, &result, &prov)?;
    print!("{}", result.summary.to_table());
    println!(
        "DIC {}  LPML {}  max split-Rhat {}",
        io::sig6(result.criteria.dic_joint),
        io::sig6(result.criteria.lpml_joint),
        io::sig6(result.max_rhat)
    );
    if !result.converged {
        eprintln!("warning: split-Rhat above {}; the chain may not have converged", pipeline::RHAT_WARN);
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn compare(args: FitArgs) -> Result<ExitCode> {
    let cfg = load_config(&args)?;
    let prov = cfg.provenance()?;
    let inputs = pipeline::load_inputs(&cfg)?;
    let cmp = compare_xi_models(&inputs.pattern, &inputs.covs, &cfg.prior, cfg.link, cfg.scale, &cfg.chain)?;
    print!("{}", cmp.to_table());
    for v in &cmp.verdicts {
        println!("{:<16} preferred {:?}{}", v.criterion, v.preferred, if v.decisive { " (decisive)" } else { "" });
    }
    io::write_json(&args.out.join("comparison.json"), &io::stamped(&cmp, &prov)?)?;
    Ok(ExitCode::SUCCESS)
}

fn run_simstudy(args: SimstudyArgs) -> Result<ExitCode> {
    let mut designs: Vec<SimDesign> = SimDesign::paper_grid(args.preset)
        .into_iter()
        .filter(|d| args.lambda0.is_none_or(|v| d.lambda0 == v))
        .filter(|d| args.alpha1.is_none_or(|v| d.alpha[1] == v))
        .filter(|d| args.z2.is_none_or(|v| d.z2_kind == v))
        .collect();
    if designs.is_empty() {
        bail!("no design cell matches the selection");
    }
    for (i, d) in designs.iter_mut().enumerate() {
        d.master_seed = markpp::rng::derive_seed(args.seed, i as u64);
        if let Some(r) = args.replicates {
            d.n_replicates = r;
        }
        if let Some(n) = args.n_iter {
            d.n_iter = n;
        }
        if let Some(b) = args.burnin {
            d.n_burnin = b;
        }
        if let Some(l) = args.link {
            d.link = l;
        }
    }
    let prov = Provenance::new(&designs, args.seed)?;
    let report = simstudy::run_designs(&designs, Exec::default())?;
    let text = simstudy::format_report(&report);
    print!("{text}");
    io::write_atomic(&args.out.join("report.txt"), text.as_bytes())?;
    let csv = format!("# config_hash={} seed={}\n{}", prov.config_hash, prov.seed, simstudy::report_csv(&report)?);
    io::write_atomic(&args.out.join("report.csv"), csv.as_bytes())?;
    for (i, cell) in report.cells.iter().enumerate() {
        io::write_json(&args.out.join(format!("cell{i}_replicates.json")), &io::stamped(cell, &prov)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_basis(args: BasisArgs) -> Result<ExitCode> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.players)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    let mut players = Vec::new();
    for f in &files {
        let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let data = io::load_shot_csv(f).with_context(|| format!("loading {}", f.display()))?;
        players.push((id, data.pattern.locations));
    }
    let set = IntensityMatrixSet::build(&players, court_grid()?, args.min_shots, args.bandwidth, Exec::default())?;
    println!("{} of {} players have at least {} shots", set.players.len(), players.len(), args.min_shots);
    let bases = basis::build_basis_set(&set, args.rank, args.iterations, args.seed)?;
    let prov = Provenance::new(
        &serde_json::json!({
            "players": files,
            "rank": args.rank,
            "iterations": args.iterations,
            "min_shots": args.min_shots,
            "bandwidth": args.bandwidth,
        }),
        args.seed,
    )?;
    basis::save_basis_set(&args.out, &bases, Some(&prov))?;
    Ok(ExitCode::SUCCESS)
}

fn run_cluster(args: ClusterArgs) -> Result<ExitCode> {
    let mut table = FeatureTable::from_csv(&args.features)?;
    if args.zscore {
        table = table.zscored();
    }
    let dendro = ward_cluster(&table)?;
    let labels = cut_tree(&dendro, args.k)?;
    let prov = Provenance::new(&serde_json::json!({ "features": args.features, "k": args.k, "zscore": args.zscore }), 0)?;
    io::write_json(&args.out.join("dendrogram.json"), &io::stamped(&dendro, &prov)?)?;
    io::write_atomic(&args.out.join("tree.nwk"), dendro.to_newick(&table.ids).as_bytes())?;
    let mut csv = format!("# config_hash={} seed={}\nid,cluster\n", prov.config_hash, prov.seed);
    for (id, l) in table.ids.iter().zip(&labels) {
        csv.push_str(&format!("{id},{l}\n"));
        println!("{id}\t{l}");
    }
    io::write_atomic(&args.out.join("labels.csv"), csv.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn export(args: ExportArgs) -> Result<ExitCode> {
    let fit_args = FitArgs {
        config: args.config.clone(),
        seed: 0,
        out: args.out.clone(),
        data: None,
        n_iter: None,
        burnin: None,
        thin: None,
        link: None,
        interval: None,
        no_xi: args.no_xi,
        two_stage: false,
    };
    let mut cfg = load_config(&fit_args)?;
    let raw: RunConfig = io::read_json(&args.config)?;
    cfg.chain.seed = raw.chain.seed;
    let inputs = pipeline::load_inputs(&cfg)?;
    let layout = ParamLayout {
        beta_names: inputs.covs.names().to_vec(),
        alpha_names: inputs.pattern.covariates.labels().to_vec(),
        xi_enabled: cfg.xi_enabled,
    };
    let draws = io::read_draws_csv(&args.fit_dir.join("draws.csv"), layout, cfg.scale, cfg.chain.clone())?;
    let kind = if args.make_rate { ScoreKind::MakeRate } else { ScoreKind::ExpectedPoints };
    let surf = pipeline::export_surfaces(&draws, &inputs.pattern, &inputs.covs, cfg.link, &CourtGeometry::default(), kind)?;
    pipeline::write_surfaces(&args.out, &surf, &cfg.provenance()?)?;
    println!(
        "intensity max {}  theta range [{}, {}]",
        io::sig6(surf.intensity.max()),
        io::sig6(surf.theta.min()),
        io::sig6(surf.theta.max())
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Compare(a) => compare(a),
        Command::Simstudy(a) => run_simstudy(a),
        Command::Basis(a) => run_basis(a),
        Command::Cluster(a) => run_cluster(a),
        Command::Export(a) => export(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

