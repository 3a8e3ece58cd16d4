use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fieldnet::bundles::{bundle_scan, write_bundle_report, BundleKind, BundleSpec, LinkFilter};
use fieldnet::data_io::{anomalies, load_gridded};
use fieldnet::lab::{ensemble_pipeline, quantile_calibration, run_experiment, Construction, ExperimentConfig, Resampling};
use fieldnet::netbuild::{construct, Network, Scheme};
use fieldnet::netmeasure::MeasureReport;
use fieldnet::random_field::{random_halves, simulate, FieldSpec, Marginal, MaternParams};
use fieldnet::seeds::substream;
use fieldnet::similarity::{EstimatorSpec, SimilarityMatrix};
use fieldnet::surrogates::{iaaft_surrogate, shuffle_surrogate, IaaftConfig, SurrogateMethod};
use fieldnet::{Dataset, Error, SphereGrid};

#[derive(Parser)]
#[command(name = "lab", version, about = "Simulate fields on the sphere, build similarity networks and evaluate them")]
struct Cli {
    /// Master seed; overrides the config seed for `run`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run { config: PathBuf },
    /// Generate a grid CSV.
    Grid(GridArgs),
    /// Simulate a Matérn field dataset.
    Simulate(SimulateArgs),
    /// Estimate a similarity matrix from a dataset.
    Estimate(EstimateArgs),
    /// Build a network from a similarity matrix.
    Net(NetArgs),
    /// Compute network measures.
    Measure(MeasureArgs),
    /// Scan a network for link bundles.
    Bundles(BundleArgs),
    /// Build a resampling ensemble and report edge frequencies.
    Ensemble(EnsembleArgs),
    /// Compare analytic and surrogate null quantiles under autocorrelation.
    Calibrate(CalibrateArgs),
    /// Convert raw gridded series to anomalies.
    Ingest(IngestArgs),
    /// Replace every node series by a surrogate.
    Surrogate(SurrogateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GridKindArg {
    Fekete,
    Gaussian,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_enum, default_value = "fekete")]
    kind: GridKindArg,
    #[arg(long, default_value_t = 1483)]
    points: usize,
    #[arg(long, default_value_t = 300)]
    iterations: usize,
    #[arg(long, default_value_t = 5.0)]
    resolution_deg: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    nu: f64,
    #[arg(long)]
    ell: f64,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Same lag-1 autocorrelation at every node.
    #[arg(long, conflicts_with = "halves")]
    autocorr: Option<f64>,
    /// Random half of the nodes at LOW, the rest at HIGH.
    #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
    halves: Option<Vec<f64>>,
    /// Exponentiate the field after rescaling it to this variance.
    #[arg(long)]
    lognormal_sigma2: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Pearson,
    Spearman,
    LedoitWolf,
    MiBinned,
    MiKsg,
}

#[derive(Args)]
struct EstimatorOpts {
    #[arg(long, value_enum, default_value = "pearson")]
    estimator: EstimatorArg,
    /// Bins for binned mutual information.
    #[arg(long)]
    bins: Option<usize>,
    /// Neighbors for the KSG estimator.
    #[arg(long, default_value_t = 5)]
    k: usize,
}

impl EstimatorOpts {
    fn spec(&self, seed: u64) -> EstimatorSpec {
        match self.estimator {
            EstimatorArg::Pearson => EstimatorSpec::Pearson,
            EstimatorArg::Spearman => EstimatorSpec::Spearman,
            EstimatorArg::LedoitWolf => EstimatorSpec::LedoitWolf,
            EstimatorArg::MiBinned => EstimatorSpec::MiBinned { bins: self.bins },
            EstimatorArg::MiKsg => EstimatorSpec::MiKsg { k: self.k, seed },
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    estimator: EstimatorOpts,
    /// Write a dense CSV instead of the binary format.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SchemeOpts {
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    knn: Option<usize>,
}

impl SchemeOpts {
    fn scheme(&self) -> Scheme {
        match (self.density, self.tau, self.knn) {
            (Some(density), _, _) => Scheme::Density { density },
            (_, Some(tau), _) => Scheme::Value { tau },
            (_, _, Some(k)) => Scheme::Knn { k },
            _ => unreachable!("clap enforces one scheme"),
        }
    }
}

#[derive(Args)]
struct NetArgs {
    /// Binary similarity matrix from `lab estimate`.
    #[arg(long)]
    sim: PathBuf,
    #[command(flatten)]
    scheme: SchemeOpts,
    #[arg(long)]
    weighted: bool,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 36)]
    bins: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum BundleKindArg {
    OneToMany,
    ManyToMany,
    LocallyWeighted,
}

#[derive(Args)]
struct BundleArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    eps_deg: f64,
    #[arg(long, default_value_t = 0.8)]
    c: f64,
    #[arg(long, value_enum, default_value = "many-to-many")]
    kind: BundleKindArg,
    /// Restrict the link fraction to links absent from this reference network.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Restrict the link fraction to links longer than this many radians.
    #[arg(long, conflicts_with = "truth")]
    longer_than: Option<f64>,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    estimator: EstimatorOpts,
    #[command(flatten)]
    scheme: SchemeOpts,
    #[arg(long, default_value_t = 20)]
    members: usize,
    /// Moving-block length (default: cube root of the series length).
    #[arg(long)]
    block_len: Option<usize>,
    /// Use consecutive windows of this length instead of the bootstrap.
    #[arg(long, requires = "stride")]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Frequency at or above which an edge counts as stable.
    #[arg(long, default_value_t = 0.9)]
    cutoff: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.9")]
    autocorr: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    shuffles: usize,
    /// Independent series pairs; the direct Monte Carlo quantile uses one draw per pair.
    #[arg(long, default_value_t = 200)]
    pairs: usize,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    timestamps: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SurrogateArg {
    Shuffle,
    Iaaft,
}

#[derive(Args)]
struct SurrogateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "iaaft")]
    method: SurrogateArg,
}

struct Ctx {
    seed: u64,
    seed_override: Option<u64>,
    out: Option<PathBuf>,
}

impl Ctx {
    fn out(&self) -> Result<&Path, Error> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("this command needs --out".into()))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.display().to_string(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap_or_default()
}

fn cmd_run(ctx: &Ctx, config: &Path) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = ctx.seed_override {
        cfg.seed = s;
    }
    let out = ctx.out.clone().or_else(|| cfg.out.clone());
    let report = run_experiment(&cfg, out.as_deref())?;
    println!(
        "{}: {} records from {} repetitions, {} failed",
        report.name,
        report.records.len(),
        cfg.repetitions,
        report.failures.len()
    );
    if let Some(o) = out {
        println!("report written to {}", o.join("report.json").display());
    }
    Ok(())
}

fn cmd_grid(ctx: &Ctx, a: &GridArgs) -> Result<(), Error> {
    let grid = match a.kind {
        GridKindArg::Fekete => SphereGrid::fekete(a.points, a.iterations, ctx.seed)?,
        GridKindArg::Gaussian => SphereGrid::gaussian(a.resolution_deg)?,
    };
    grid.write_csv(ctx.out()?)?;
    println!("{} nodes", grid.len());
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<(), Error> {
    let grid = Arc::new(SphereGrid::read_csv(&a.grid)?);
    let p = grid.len();
    let mut spec = FieldSpec::iid(MaternParams::unit(a.nu, a.ell)?);
    if let Some(v) = a.autocorr {
        spec.autocorr = vec![v; p];
    }
    if let Some(h) = &a.halves {
        spec.autocorr = random_halves(p, h[0], h[1], substream(ctx.seed, &[1]));
    }
    if let Some(sigma2) = a.lognormal_sigma2 {
        spec.marginal = Marginal::Lognormal { sigma2 };
    }
    let (data, info) = simulate(grid, spec, a.n, ctx.seed)?;
    data.write_csv(ctx.out()?)?;
    println!("{}", to_json(&info));
    Ok(())
}

fn cmd_estimate(ctx: &Ctx, a: &EstimateArgs) -> Result<(), Error> {
    let data = Dataset::read_csv(&a.data)?;
    let sim = a.estimator.spec(ctx.seed).estimate(&data)?;
    let out = ctx.out()?;
    if a.csv {
        sim.write_csv(out)
    } else {
        sim.write_binary(out)
    }
}

fn cmd_net(ctx: &Ctx, a: &NetArgs) -> Result<(), Error> {
    let sim = SimilarityMatrix::read_binary(&a.sim)?;
    let net = construct(&sim, &a.scheme.scheme(), a.weighted)?;
    net.write_csv(ctx.out()?)?;
    println!("{} edges, density {:.6}", net.edge_count(), net.density());
    Ok(())
}

fn cmd_measure(ctx: &Ctx, a: &MeasureArgs) -> Result<(), Error> {
    let net = Network::read_csv(&a.net)?;
    let grid = a.grid.as_ref().map(SphereGrid::read_csv).transpose()?;
    let report = MeasureReport::compute(&net, grid.as_ref(), a.bins)?;
    match &ctx.out {
        Some(dir) => report.write(dir, &net),
        None => emit(None, &format!("{}\n", to_json(&report.summary_json()))),
    }
}

fn cmd_bundles(ctx: &Ctx, a: &BundleArgs) -> Result<(), Error> {
    let net = Network::read_csv(&a.net)?;
    let grid = SphereGrid::read_csv(&a.grid)?;
    let kind = match a.kind {
        BundleKindArg::OneToMany => BundleKind::OneToMany,
        BundleKindArg::ManyToMany => BundleKind::ManyToMany,
        BundleKindArg::LocallyWeighted => BundleKind::LocallyWeighted,
    };
    let spec = BundleSpec::new(a.eps_deg.to_radians(), a.c, kind)?;
    let truth = a.truth.as_ref().map(|p| Network::read_csv(p)).transpose()?;
    let filter = match (&truth, a.longer_than) {
        (Some(t), _) => LinkFilter::FalseLinks(t),
        (None, Some(l)) => LinkFilter::LongerThan(l),
        (None, None) => LinkFilter::All,
    };
    let scan = bundle_scan(&net, &grid, &spec, filter)?;
    if let Some(out) = &ctx.out {
        write_bundle_report(out, &net, &grid, &spec)?;
    }
    println!("{}", to_json(&scan));
    Ok(())
}

fn cmd_ensemble(ctx: &Ctx, a: &EnsembleArgs) -> Result<(), Error> {
    let data = Dataset::read_csv(&a.data)?;
    let construction = Construction {
        estimator: a.estimator.spec(ctx.seed),
        scheme: a.scheme.scheme(),
        weighted: false,
    };
    let resampling = match (a.window, a.stride) {
        (Some(window), Some(stride)) => Resampling::Subsample { window, stride },
        _ => Resampling::BlockBootstrap { block_len: a.block_len },
    };
    let result = ensemble_pipeline(&data, &construction, a.members, resampling, ctx.seed)?;
    let mut csv = String::from("i,j,frequency,length\n");
    let grid = data.grid();
    for &(i, j, f) in &result.frequencies {
        let _ = writeln!(csv, "{i},{j},{f},{}", grid.angle(i as usize, j as usize));
    }
    emit(ctx.out.as_deref(), &csv)?;
    eprintln!(
        "{} distinct edges, {} stable at {}, unstable fraction {:.4}",
        result.frequencies.len(),
        result.stable_edges(a.cutoff).len(),
        a.cutoff,
        result.unstable_fraction()
    );
    Ok(())
}

fn cmd_calibrate(ctx: &Ctx, a: &CalibrateArgs) -> Result<(), Error> {
    let rows = quantile_calibration(a.n, &a.autocorr, a.shuffles, a.pairs, ctx.seed)?;
    let mut csv = String::from("autocorr,analytic,monte_carlo,shuffle,iaaft\n");
    for r in rows {
        let _ = writeln!(csv, "{},{},{},{},{}", r.autocorr, r.analytic, r.monte_carlo, r.shuffle, r.iaaft);
    }
    emit(ctx.out.as_deref(), &csv)
}

fn cmd_ingest(ctx: &Ctx, a: &IngestArgs) -> Result<(), Error> {
    let raw = load_gridded(&a.grid, &a.data, a.timestamps.as_deref())?;
    let (data, report) = anomalies(&raw)?;
    data.write_csv(ctx.out()?)?;
    println!("{}", to_json(&report));
    Ok(())
}

fn cmd_surrogate(ctx: &Ctx, a: &SurrogateArgs) -> Result<(), Error> {
    let data = Dataset::read_csv(&a.data)?;
    let method = match a.method {
        SurrogateArg::Shuffle => SurrogateMethod::Shuffle,
        SurrogateArg::Iaaft => SurrogateMethod::Iaaft,
    };
    let mut values = Vec::with_capacity(data.values().len());
    for i in 0..data.p() {
        let s = substream(ctx.seed, &[i as u64]);
        match method {
            SurrogateMethod::Shuffle => values.extend(shuffle_surrogate(data.row(i), s)),
            SurrogateMethod::Iaaft => values.extend(iaaft_surrogate(data.row(i), IaaftConfig::default(), s)?.series),
        }
    }
    let out = Dataset::new(data.grid().clone(), data.n(), values)?;
    out.write_csv(ctx.out()?)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) => 2,
        Error::Format(_) | Error::Io { .. } | Error::UndefinedResult(_) => 3,
        Error::Internal(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(0),
        seed_override: cli.seed,
        out: cli.out.clone(),
    };
    let result = match &cli.command {
        Command::Run { config } => cmd_run(&ctx, config),
        Command::Grid(a) => cmd_grid(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Estimate(a) => cmd_estimate(&ctx, a),
        Command::Net(a) => cmd_net(&ctx, a),
        Command::Measure(a) => cmd_measure(&ctx, a),
        Command::Bundles(a) => cmd_bundles(&ctx, a),
        Command::Ensemble(a) => cmd_ensemble(&ctx, a),
        Command::Calibrate(a) => cmd_calibrate(&ctx, a),
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::Surrogate(a) => cmd_surrogate(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
