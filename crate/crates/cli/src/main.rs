//! `lindkz`: batch driver producing the data behind each sweep.
//!
//! Every output file starts with `# {config json}` so it can be regenerated.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use lindkz::correlate::{correlation_profile, pair_correlators};
use lindkz::io::{read_csv, write_csv};
use lindkz::ising::{defect_sweep, run_quench, IsingParams, ScalingPoint};
use lindkz::lz::lz_sweep;
use lindkz::oracle::{ising_oracle_run, zz_correlation};
use lindkz::propagate::Tolerances;
use lindkz::scaling::{fit_power_law, fit_sweep, geomspace, FitSummary};
use lindkz::Error;

#[derive(Parser, Debug)]
#[command(name = "lindkz", version, about = "Open-system Kibble-Zurek sweeps for Landau-Zener and Ising models")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Relative integrator tolerance.
    #[arg(long, global = true, default_value_t = 1e-8)]
    rtol: f64,
    /// Absolute integrator tolerance.
    #[arg(long, global = true, default_value_t = 1e-10)]
    atol: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Accepted for compatibility; every run is deterministic.
    #[arg(long, global = true)]
    #[serde(skip)]
    seedless: bool,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    #[serde(skip)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Landau-Zener excitation against g²/v, numerics and impulse estimate.
    LzSweep(LzSweepArgs),
    /// n_D over a (κ, τ_Q) grid plus a power-law fit per κ.
    IsingScaling(ScalingArgs),
    /// One Ising quench: per-mode CSV and summary JSON.
    IsingRun(RunArgs),
    /// |⟨σᶻᵢσᶻᵢ₊R⟩| after a quench and the oscillation length ξ.
    Correlate(CorrelateArgs),
    /// Power-law fit of an existing ising-scaling CSV.
    Fit(FitArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct LzSweepArgs {
    #[arg(long, default_value_t = 0.5)]
    g: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.4])]
    kappa: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    x_min: f64,
    #[arg(long, default_value_t = 2.0)]
    x_max: f64,
    #[arg(long, default_value_t = 20)]
    x_points: usize,
    /// Sweep runs over [−window, window].
    #[arg(long, default_value_t = 10.0)]
    window: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ChainArgs {
    #[arg(long = "n-sites", default_value_t = 512)]
    n_sites: usize,
    #[arg(long, default_value_t = 4.0)]
    g_start: f64,
    #[arg(long, default_value_t = 0.0)]
    g_end: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ScalingArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.05, 0.1, 0.4, 0.8])]
    kappa: Vec<f64>,
    /// Explicit τ_Q list; overrides the geometric grid.
    #[arg(long = "tau-q", value_delimiter = ',')]
    tau_q: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    tau_min: f64,
    #[arg(long, default_value_t = 320.0)]
    tau_max: f64,
    #[arg(long, default_value_t = 6)]
    tau_points: usize,
    /// Inclusive τ_Q window for the fit, as `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    fit_window: Option<Vec<f64>>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RunArgs {
    /// JSON manifest {N, tau_Q, kappa, g_start, g_end, rtol, atol}; overrides the flags.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long = "tau-q", default_value_t = 20.0)]
    tau_q: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CorrelateArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long = "tau-q", default_value_t = 20.0)]
    tau_q: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.4])]
    kappa: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    r_max: usize,
    /// Also run the 6-site dense reference and report the largest deviation for R ≤ 3.
    #[arg(long)]
    oracle_check: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
struct FitArgs {
    /// CSV written by ising-scaling.
    input: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 2)]
    fit_window: Option<Vec<f64>>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

macro_rules! lift {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}
lift!(
    lindkz::LzError,
    lindkz::IsingError,
    lindkz::FitError,
    lindkz::CorrelateError,
    lindkz::OracleError,
    lindkz::io::IoError,
    lindkz::IntegrationError
);

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(format!("json: {e}"))
    }
}

type Res<T> = Result<T, Failure>;

fn field(name: &str, ok: bool, msg: &str) -> Res<()> {
    if ok {
        Ok(())
    } else {
        Err(Failure::Config(format!("--{name}: {msg}")))
    }
}

fn tolerances(c: &Common) -> Res<Tolerances> {
    Tolerances::new(c.rtol, c.atol).map_err(|e| Failure::Config(e.to_string()))
}

fn window(w: &Option<Vec<f64>>) -> Res<Option<(f64, f64)>> {
    match w.as_deref() {
        None => Ok(None),
        Some([lo, hi]) if lo < hi => Ok(Some((*lo, *hi))),
        Some(_) => Err(Failure::Config("--fit-window: need lo,hi with lo < hi".into())),
    }
}

fn create(dir: &Path, name: &str) -> Res<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    log::info!("writing {}", path.display());
    Ok(BufWriter::new(File::create(path)?))
}

#[derive(Serialize)]
struct Header<'a, A: Serialize> {
    command: &'a str,
    #[serde(flatten)]
    common: &'a Common,
    #[serde(flatten)]
    args: &'a A,
}

fn chain_params(c: &ChainArgs, tau_q: f64, kappa: f64, common: &Common) -> Res<IsingParams> {
    IsingParams {
        n: c.n_sites,
        tau_q,
        kappa,
        g_start: c.g_start,
        g_end: c.g_end,
        rtol: common.rtol,
        atol: common.atol,
    }
    .validated()
    .map_err(Into::into)
}

fn lz_sweep_cmd(c: &Common, a: &LzSweepArgs) -> Res<()> {
    field("x-points", a.x_points >= 1, "must be at least 1")?;
    field("x-min", a.x_min > 0.0 && a.x_min <= a.x_max, "need 0 < x-min <= x-max")?;
    field("window", a.window > 0.0, "must be > 0")?;
    field("g", a.g > 0.0, "must be > 0")?;
    field("kappa", a.kappa.iter().all(|k| *k >= 0.0), "rates must be >= 0")?;
    let grid: Vec<f64> = if a.x_points == 1 {
        vec![a.x_min]
    } else {
        (0..a.x_points).map(|i| a.x_min + (a.x_max - a.x_min) * i as f64 / (a.x_points - 1) as f64).collect()
    };
    let rows = lz_sweep(a.g, &grid, &a.kappa, (-a.window, a.window), tolerances(c)?)?;
    let header = Header { command: "lz-sweep", common: c, args: a };
    write_csv(create(&c.out, "lz_sweep.csv")?, &header, &rows)?;
    Ok(())
}

fn scaling_cmd(c: &Common, a: &ScalingArgs) -> Res<()> {
    let taus = if a.tau_q.is_empty() {
        field("tau-points", a.tau_points >= 1, "must be at least 1")?;
        field("tau-min", a.tau_min > 0.0 && a.tau_min <= a.tau_max, "need 0 < tau-min <= tau-max")?;
        geomspace(a.tau_min, a.tau_max, a.tau_points)
    } else {
        a.tau_q.clone()
    };
    field("kappa", !a.kappa.is_empty(), "need at least one rate")?;
    let base = chain_params(&a.chain, taus[0], a.kappa[0], c)?;
    for &k in &a.kappa {
        chain_params(&a.chain, taus[0], k, c)?;
    }
    for &t in &taus {
        chain_params(&a.chain, t, a.kappa[0], c)?;
    }
    let fw = window(&a.fit_window)?;
    let points = defect_sweep(&base, &a.kappa, &taus)?;
    let header = Header { command: "ising-scaling", common: c, args: a };
    write_csv(create(&c.out, "ising_scaling.csv")?, &header, &points)?;
    write_fits(c, &points, fw)
}

fn write_fits(c: &Common, points: &[ScalingPoint], fw: Option<(f64, f64)>) -> Res<()> {
    let distinct_taus = {
        let mut t: Vec<f64> = points.iter().map(|p| p.tau_q).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t.len()
    };
    if distinct_taus < lindkz::scaling::MIN_POINTS {
        log::warn!("only {distinct_taus} τ_Q values; skipping power-law fits");
        return Ok(());
    }
    let fits: Vec<FitSummary> = fit_sweep(points, fw)?.into_iter().map(|(k, f)| f.summary(k)).collect();
    for f in &fits {
        log::info!("κ = {}: μ = {:.4} ± {:.4}, A = {:.4}", f.kappa, f.mu, f.stderr, f.prefactor);
        serde_json::to_writer_pretty(create(&c.out, &format!("fit_kappa_{}.json", f.kappa))?, f)?;
    }
    serde_json::to_writer_pretty(create(&c.out, "fits.json")?, &fits)?;
    Ok(())
}

#[derive(Serialize)]
struct ModeRow {
    k: f64,
    p_k: f64,
    #[serde(rename = "Rx")]
    rx: f64,
    #[serde(rename = "Ry")]
    ry: f64,
    #[serde(rename = "Rz")]
    rz: f64,
}

#[derive(Serialize)]
struct RunSummary {
    #[serde(rename = "n_D")]
    n_d: f64,
    max_transverse: f64,
    manifest: IsingParams,
}

fn ising_run_cmd(c: &Common, a: &RunArgs) -> Res<()> {
    let p = match &a.manifest {
        Some(path) => {
            let p: IsingParams = serde_json::from_reader(File::open(path)?)?;
            p.validated()?
        }
        None => chain_params(&a.chain, a.tau_q, a.kappa, c)?,
    };
    let (ens, res) = run_quench(&p)?;
    let rows: Vec<ModeRow> = ens
        .momenta
        .iter()
        .zip(&ens.bloch)
        .zip(&res.per_mode)
        .map(|((&k, r), &p_k)| ModeRow { k, p_k, rx: r[0], ry: r[1], rz: r[2] })
        .collect();
    write_csv(create(&c.out, "modes.csv")?, &p, &rows)?;
    let summary = RunSummary { n_d: res.n_d, max_transverse: res.max_transverse, manifest: p };
    serde_json::to_writer_pretty(create(&c.out, "summary.json")?, &summary)?;
    println!("n_D = {:.10e}", res.n_d);
    Ok(())
}

#[derive(Serialize)]
struct CorrRow {
    #[serde(rename = "R")]
    r: usize,
    #[serde(rename = "abs_C")]
    abs_c: f64,
    #[serde(rename = "log10_abs_C")]
    log10: f64,
}

#[derive(Serialize)]
struct XiSummary {
    kappa: f64,
    tau_q: f64,
    xi: Option<f64>,
    minima: Vec<usize>,
    oracle_max_deviation: Option<f64>,
}

fn correlate_cmd(c: &Common, a: &CorrelateArgs) -> Res<()> {
    field("r-max", a.r_max >= 1 && 2 * a.r_max < a.chain.n_sites, "need 1 <= r-max < n-sites/2")?;
    let mut summaries = Vec::new();
    for &kappa in &a.kappa {
        let p = chain_params(&a.chain, a.tau_q, kappa, c)?;
        let (ens, _) = run_quench(&p)?;
        let table = pair_correlators(&ens, a.r_max);
        let prof = correlation_profile(&table, a.r_max);
        let (values, minima, xi) = match prof {
            Ok(p) => (p.values, p.minima, p.xi),
            Err(e) => return Err(Error::from(e).into()),
        };
        let rows: Vec<CorrRow> =
            values.iter().enumerate().map(|(i, &v)| CorrRow { r: i + 1, abs_c: v, log10: v.log10() }).collect();
        let header = Header { command: "correlate", common: c, args: a };
        write_csv(create(&c.out, &format!("corr_kappa_{kappa}.csv"))?, &header, &rows)?;
        let oracle_max_deviation = if a.oracle_check { Some(oracle_check(c, a, kappa)?) } else { None };
        summaries.push(XiSummary { kappa, tau_q: a.tau_q, xi, minima, oracle_max_deviation });
    }
    serde_json::to_writer_pretty(create(&c.out, "xi.json")?, &summaries)?;
    Ok(())
}

fn oracle_check(c: &Common, a: &CorrelateArgs, kappa: f64) -> Res<f64> {
    let n = 6;
    let small = ChainArgs { n_sites: n, ..a.chain.clone() };
    let p = chain_params(&small, a.tau_q, kappa, c)?;
    let (ens, _) = run_quench(&p)?;
    let table = pair_correlators(&ens, 3);
    let run = ising_oracle_run(n, a.tau_q, kappa, p.g_start, &[p.g_end], tolerances(c)?)?;
    let mut worst: f64 = 0.0;
    for r in 1..=3 {
        let modes = lindkz::corr_zz(&table, r)?;
        let dense = zz_correlation(&run.states[0], n, r)?.abs();
        worst = worst.max((modes - dense).abs());
    }
    log::info!("κ = {kappa}: oracle deviation {worst:e} for R <= 3");
    Ok(worst)
}

#[derive(Deserialize)]
struct PointRow {
    kappa: f64,
    tau_q: f64,
    n_d: f64,
}

fn fit_cmd(c: &Common, a: &FitArgs) -> Res<()> {
    let (_, rows): (serde_json::Value, Vec<PointRow>) = read_csv(File::open(&a.input)?)?;
    let points: Vec<ScalingPoint> =
        rows.into_iter().map(|r| ScalingPoint { kappa: r.kappa, tau_q: r.tau_q, n_d: r.n_d }).collect();
    let fw = window(&a.fit_window)?;
    if points.iter().all(|p| p.kappa == points[0].kappa) {
        let (t, n): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.tau_q, p.n_d)).unzip();
        let f = fit_power_law(&t, &n, fw)?;
        println!("{}", serde_json::to_string(&f.summary(points[0].kappa))?);
        return Ok(());
    }
    write_fits(c, &points, fw)
}

fn run(cli: &Cli) -> Res<()> {
    let c = &cli.common;
    if c.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(c.workers)
            .build_global()
            .map_err(|e| Failure::Config(format!("--workers: {e}")))?;
    }
    tolerances(c)?;
    match &cli.command {
        Command::LzSweep(a) => lz_sweep_cmd(c, a),
        Command::IsingScaling(a) => scaling_cmd(c, a),
        Command::IsingRun(a) => ising_run_cmd(c, a),
        Command::Correlate(a) => correlate_cmd(c, a),
        Command::Fit(a) => fit_cmd(c, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}
