//! Command-line surface: test, quantiles, select-m, estimate-cp,
//! estimate-set, simulate, and experiment subcommands.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, unknown config keys,
//! invalid parameters), 2 data error (I/O, parsing, degenerate inputs),
//! 3 degenerate statistic under `--strict`. Every command accepts `--seed`
//! and `--threads`; thread count never changes any output byte — all
//! randomness flows through per-replication seed streams.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cpoint::estimate_cp;
use crate::dgp::{simulate, DgpSpec, Model, Spatial};
use crate::error::{Error, Result};
use crate::experiments::{
    cp_accuracy_csv, m_distribution_csv, rejection_csv, run_cp_accuracy, run_k_sensitivity,
    run_m_distribution, run_rejection, run_support, support_csv, write_table, ExperimentPlan,
    TableKind,
};
use crate::limitdist::{
    quantile_table, quantile_table_cached, LimitDist, QuantileTable, DEFAULT_LEVELS,
};
use crate::relevance::{
    report_sqrt_scale, test_dense, test_sparse, NormKind, QuantileSource, TestConfig, TestResult,
    DEFAULT_QUANTILE_REPS,
};
use crate::setestim::{estimate_s_with_kappa, DEFAULT_KAPPA};
use crate::trim::{emit_delta_f, select_m, TrimSelection, DEFAULT_CUTOFF};
use crate::tsdata::{load_csv, PreprocessPolicy, TimeSeriesMatrix};

/// Relevant mean-change tests for high-dimensional time series.
#[derive(Debug, Parser)]
#[command(name = "relcpd", version, disable_help_subcommand = true)]
struct Cli {
    /// Master seed for anything stochastic.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: RELCPD_THREADS env var, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test for a relevant mean change in a CSV panel.
    Test(TestArgs),
    /// Simulate quantiles of a limiting distribution into a CSV table.
    Quantiles(QuantilesArgs),
    /// Select the trimming lag and emit its ΔF diagnostics.
    SelectM(SelectMArgs),
    /// Locate the change point.
    EstimateCp(EstimateCpArgs),
    /// Estimate the support set of the mean shift.
    EstimateSet(EstimateSetArgs),
    /// Simulate a panel to CSV.
    Simulate(SimulateArgs),
    /// Run a simulation experiment plan to a CSV table.
    Experiment(ExperimentArgs),
}

/// Input options shared by every command that reads a panel.
#[derive(Debug, Args)]
struct InputArgs {
    /// Input CSV, rows = time points, columns = coordinates.
    #[arg(long)]
    input: PathBuf,

    /// Treat the first line as data, not column names.
    #[arg(long)]
    no_header: bool,

    /// Fail on missing values instead of interpolating them.
    #[arg(long)]
    no_interpolate: bool,

    /// Replace negative values by zero after interpolation.
    #[arg(long)]
    zero_negatives: bool,
}

impl InputArgs {
    fn load(&self) -> Result<TimeSeriesMatrix> {
        let raw = load_csv(&self.input, !self.no_header)?;
        raw.preprocess(PreprocessPolicy {
            interpolate_missing: !self.no_interpolate,
            zero_negatives: self.zero_negatives,
        })
    }
}

#[derive(Debug, Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Threshold Δ on the squared-norm scale. Required (here or in the
    /// config file): no scientifically meaningful default exists.
    #[arg(long)]
    delta: Option<f64>,

    /// Flat key=value config file; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Nominal level α.
    #[arg(long)]
    alpha: Option<f64>,

    /// Atom count K of the self-normalizing measure.
    #[arg(long)]
    k: Option<usize>,

    /// Fixed trimming lag (default: data-selected).
    #[arg(long)]
    m: Option<usize>,

    /// Norm the threshold refers to: `dense` (normalized ℓ₂ over all
    /// coordinates) or `sparse` (sparsity-adjusted, on the estimated
    /// support).
    #[arg(long)]
    norm: Option<String>,

    /// Support-threshold exponent κ (sparse norm only).
    #[arg(long)]
    kappa: Option<f64>,

    /// Atom count approximating the Lebesgue measure inside v̂_ℓ.
    #[arg(long)]
    set_grid_k: Option<usize>,

    /// |ΔF| cutoff for the trimming selector.
    #[arg(long)]
    trim_cutoff: Option<f64>,

    /// Monte Carlo replications behind the quantile lookup.
    #[arg(long)]
    quantile_reps: Option<usize>,

    /// Pre-built quantile table CSV (overrides simulation).
    #[arg(long)]
    quantile_table: Option<PathBuf>,

    /// Directory for cached quantile tables.
    #[arg(long)]
    cache_dir: Option<PathBuf>,

    /// Output format: `text` (key=value lines) or `csv`.
    #[arg(long, default_value = "text")]
    format: String,

    /// Exit with status 3 when the statistic is degenerate.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct QuantilesArgs {
    /// Distribution: G (dense/adaptive test limit) or H.
    #[arg(long)]
    dist: String,

    /// Atom count K for G, integration grid size for H.
    #[arg(long)]
    k: usize,

    /// Comma-separated probability levels in (0,1).
    #[arg(long)]
    levels: Option<String>,

    /// Monte Carlo replications.
    #[arg(long, default_value_t = DEFAULT_QUANTILE_REPS)]
    reps: usize,

    /// Output CSV path (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Directory for cached quantile tables.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectMArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Split point k̂ (default: estimated from the data).
    #[arg(long)]
    k_hat: Option<usize>,

    /// |ΔF| cutoff below which a lag counts as settled.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: f64,

    /// Write the ΔF curves to this CSV (default: stdout).
    #[arg(long)]
    out_csv: Option<PathBuf>,

    /// Write an SVG plot of the ΔF curves.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimateCpArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Output format: `text` or `csv`.
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Debug, Args)]
struct EstimateSetArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Fixed trimming lag (default: data-selected).
    #[arg(long)]
    m: Option<usize>,

    /// Atom count approximating the Lebesgue measure inside v̂_ℓ.
    #[arg(long, default_value_t = 20)]
    grid_k: usize,

    /// Threshold exponent κ > 1.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,

    /// Write per-coordinate diagnostics to this CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Temporal model: ind, ma<q>, ar<c>, optionally starred (ma6*).
    #[arg(long, default_value = "ind")]
    model: String,

    /// Innovation covariance: diagonal or toeplitz.
    #[arg(long, default_value = "diagonal")]
    spatial: String,

    /// Time length.
    #[arg(long)]
    n: usize,

    /// Dimension.
    #[arg(long)]
    p: usize,

    /// Change fraction θ₀ in (0,1).
    #[arg(long, default_value_t = 0.6)]
    theta0: f64,

    /// Common mean.
    #[arg(long, default_value_t = 10.0)]
    mu: f64,

    /// Number of shifted coordinates (default: all).
    #[arg(long)]
    s: Option<usize>,

    /// Target ‖δ‖²₂,₀ (per-coordinate squared shift).
    #[arg(long, default_value_t = 0.0)]
    signal: f64,

    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Plan file: flat key=value lines (DGP template, sweeps, table kind).
    #[arg(long)]
    plan: PathBuf,

    /// Table kind, overriding the plan's `table` key.
    #[arg(long)]
    table: Option<String>,

    /// Output CSV path (a `.manifest.txt` sibling is written too).
    #[arg(long)]
    out: PathBuf,
}

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

/// Parse a flat `key=value` file: one pair per line, `#` comments and blank
/// lines ignored, duplicate keys rejected.
fn parse_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            row: i + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::InvalidArgument(format!(
                "config key {key} appears twice in {}",
                path.display()
            )));
        }
    }
    Ok(map)
}

/// Error for any key outside the allowed set, naming the offender.
fn reject_unknown_keys(map: &BTreeMap<String, String>, allowed: &[&str]) -> Result<()> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "unknown config key {key:?}; allowed keys: {}",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| {
        Error::InvalidArgument(format!("config key {key} has unparseable value {raw:?}"))
    })
}

/// `;`-separated list of parseable values.
fn parse_list<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(';').map(|part| parse_value(key, part)).collect()
}

fn parse_norm(s: &str) -> Result<NormKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "dense" | "normalized_l2" => Ok(NormKind::NormalizedL2),
        "sparse" | "sparsity_adjusted" => Ok(NormKind::SparsityAdjusted),
        other => Err(Error::InvalidArgument(format!(
            "unknown norm {other:?}; expected dense or sparse"
        ))),
    }
}

fn parse_format(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "csv" => Ok(true),
        "text" => Ok(false),
        other => Err(Error::InvalidArgument(format!(
            "unknown format {other:?}; expected text or csv"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

const TEST_CONFIG_KEYS: [&str; 11] = [
    "delta",
    "alpha",
    "k",
    "m",
    "norm",
    "kappa",
    "set_grid_k",
    "trim_cutoff",
    "quantile_reps",
    "seed",
    "format",
];

fn cmd_test(args: &TestArgs, seed: Option<u64>) -> Result<i32> {
    let config = match &args.config {
        Some(path) => {
            let map = parse_config(path)?;
            reject_unknown_keys(&map, &TEST_CONFIG_KEYS)?;
            map
        }
        None => BTreeMap::new(),
    };
    let pick = |flag: Option<String>, key: &str| -> Option<String> {
        flag.or_else(|| config.get(key).cloned())
    };
    let pick_f64 = |flag: Option<f64>, key: &str| -> Result<Option<f64>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => config.get(key).map(|v| parse_value(key, v)).transpose(),
        }
    };
    let pick_usize = |flag: Option<usize>, key: &str| -> Result<Option<usize>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => config.get(key).map(|v| parse_value(key, v)).transpose(),
        }
    };

    let delta = pick_f64(args.delta, "delta")?.ok_or_else(|| {
        Error::InvalidArgument(
            "the threshold Δ is problem-specific and has no default; pass --delta (or a \
             config file with a delta key)"
                .into(),
        )
    })?;
    let norm = parse_norm(&pick(args.norm.clone(), "norm").unwrap_or_else(|| "dense".into()))?;
    let csv_format = parse_format(&pick(Some(args.format.clone()), "format").unwrap())?;
    let m = match pick(args.m.map(|m| m.to_string()), "m") {
        None => None,
        Some(v) if v == "auto" => None,
        Some(v) => Some(parse_value::<usize>("m", &v)?),
    };
    let seed = seed
        .or_else(|| config.get("seed").and_then(|v| v.parse().ok()))
        .unwrap_or(0);

    let quantiles = match &args.quantile_table {
        Some(path) => QuantileSource::Table(QuantileTable::load_csv(path)?),
        None => QuantileSource::Mc {
            reps: pick_usize(args.quantile_reps, "quantile_reps")?.unwrap_or(DEFAULT_QUANTILE_REPS),
            seed,
            cache_dir: args.cache_dir.clone(),
        },
    };
    let cfg = TestConfig {
        delta,
        alpha: pick_f64(args.alpha, "alpha")?.unwrap_or(0.05),
        k: pick_usize(args.k, "k")?.unwrap_or(20),
        m,
        kappa: pick_f64(args.kappa, "kappa")?.unwrap_or(DEFAULT_KAPPA),
        set_grid_k: pick_usize(args.set_grid_k, "set_grid_k")?.unwrap_or(20),
        trim_cutoff: pick_f64(args.trim_cutoff, "trim_cutoff")?.unwrap_or(DEFAULT_CUTOFF),
        quantiles,
    };

    let x = args.input.load()?;
    // The per-segment lags are part of the report; selecting them here and
    // fixing them in the config keeps the test run identical while making
    // (m̂⁽¹⁾, m̂⁽²⁾) printable.
    let selection: Option<TrimSelection> = match cfg.m {
        Some(_) => None,
        None => {
            let fit = estimate_cp(&x)?;
            match select_m(&x, fit.k_hat, cfg.trim_cutoff) {
                Ok(sel) => Some(sel),
                Err(Error::Degenerate(_)) => None,
                Err(e) => return Err(e),
            }
        }
    };
    let cfg = TestConfig {
        m: cfg.m.or(selection.as_ref().map(|s| s.m_hat)),
        ..cfg
    };
    let result = match norm {
        NormKind::NormalizedL2 => test_dense(&x, &cfg)?,
        NormKind::SparsityAdjusted => test_sparse(&x, &cfg)?,
    };
    let rooted = report_sqrt_scale(&result);

    if csv_format {
        println!("{}", TestResult::csv_header());
        println!("{}", result.to_csv_row());
        println!("{}", rooted.to_csv_row());
    } else {
        print!("{}", result.to_kv_string());
        if let Some(sel) = &selection {
            println!("m1={}", sel.m1);
            println!("m2={}", sel.m2);
        }
        println!("delta_alpha_sqrt={}", rooted.delta_alpha);
        println!("ci_upper_hi_sqrt={}", rooted.ci_upper.1);
        println!("ci_two_lo_sqrt={}", rooted.ci_two_sided.0);
        println!("ci_two_hi_sqrt={}", rooted.ci_two_sided.1);
    }
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if result.degenerate && args.strict {
        3
    } else {
        0
    })
}

fn cmd_quantiles(args: &QuantilesArgs, seed: u64) -> Result<i32> {
    let dist = LimitDist::parse(&args.dist)?;
    let levels: Vec<f64> = match &args.levels {
        Some(raw) => raw
            .split(',')
            .map(|part| parse_value("levels", part))
            .collect::<Result<_>>()?,
        None => DEFAULT_LEVELS.to_vec(),
    };
    let table = match &args.cache_dir {
        Some(dir) => quantile_table_cached(dir, dist, args.k, &levels, args.reps, seed)?,
        None => quantile_table(dist, args.k, &levels, args.reps, seed)?,
    };
    let csv = table.to_csv_string();
    if let Some(out) = &args.out {
        std::fs::write(out, &csv).map_err(|e| Error::io(out, e))?;
    }
    print!("{csv}");
    Ok(0)
}

fn cmd_select_m(args: &SelectMArgs) -> Result<i32> {
    let x = args.input.load()?;
    let k_hat = match args.k_hat {
        Some(k) => k,
        None => estimate_cp(&x)?.k_hat,
    };
    let sel = select_m(&x, k_hat, args.cutoff)?;
    println!("k_hat={k_hat}");
    println!("m1={}", sel.m1);
    println!("m2={}", sel.m2);
    println!("m_hat={}", sel.m_hat);
    println!("caps={};{}", sel.caps.0, sel.caps.1);
    match &args.out_csv {
        Some(path) => emit_delta_f(&sel, path, args.plot.as_deref())?,
        None => {
            print!("{}", crate::trim::delta_f_csv(&sel));
            if let Some(plot) = &args.plot {
                // emit_delta_f wants a CSV target; write the plot directly.
                let tmp = plot.with_extension("deltaf.csv");
                emit_delta_f(&sel, &tmp, Some(plot))?;
                std::fs::remove_file(&tmp).ok();
            }
        }
    }
    Ok(0)
}

fn cmd_estimate_cp(args: &EstimateCpArgs) -> Result<i32> {
    let x = args.input.load()?;
    let fit = estimate_cp(&x)?;
    if parse_format(&args.format)? {
        println!("k_hat,theta_hat,objective");
        println!("{},{},{}", fit.k_hat, fit.theta_hat, fit.objective);
    } else {
        println!("k_hat={}", fit.k_hat);
        println!("theta_hat={}", fit.theta_hat);
        println!("objective={}", fit.objective);
    }
    Ok(0)
}

fn cmd_estimate_set(args: &EstimateSetArgs) -> Result<i32> {
    let x = args.input.load()?;
    let fit = estimate_cp(&x)?;
    let m = match args.m {
        Some(m) => m,
        None => match select_m(&x, fit.k_hat, DEFAULT_CUTOFF) {
            Ok(sel) => sel.m_hat,
            Err(Error::Degenerate(_)) => 0,
            Err(e) => return Err(e),
        },
    };
    let est = estimate_s_with_kappa(&x, fit.k_hat, m, args.grid_k, args.kappa)?;
    let labels: Vec<String> = est.s_hat.iter().map(|l| (l + 1).to_string()).collect();
    println!("k_hat={}", fit.k_hat);
    println!("m={m}");
    println!("threshold={}", est.threshold);
    println!("s_hat={}", labels.join(";"));
    println!("s_size={}", est.s_hat.len());
    let csv = est.to_csv_string();
    match &args.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| Error::io(path, e))?,
        None => print!("{csv}"),
    }
    Ok(0)
}

fn cmd_simulate(args: &SimulateArgs, seed: u64) -> Result<i32> {
    let spec = DgpSpec {
        model: Model::parse(&args.model)?,
        spatial: Spatial::parse(&args.spatial)?,
        n: args.n,
        p: args.p,
        theta0: args.theta0,
        mu: args.mu,
        s: args.s.unwrap_or(args.p),
        signal: args.signal,
        seed,
    };
    let x = simulate(&spec)?;
    x.write_csv(&args.out, true)?;
    eprintln!(
        "wrote {} ({} rows x {} columns, change at k0={})",
        args.out.display(),
        x.n(),
        x.p(),
        spec.k0()
    );
    Ok(0)
}

/// Plan-file keys beyond the DGP template.
const PLAN_KEYS: [&str; 14] = [
    "table",
    "reps",
    "alpha",
    "delta",
    "norm",
    "m",
    "trim_cutoff",
    "m_thresholds",
    "quantile_reps",
    "cache_dir",
    "models",
    "ns",
    "ps",
    "s_fracs",
];

const PLAN_SWEEP_KEYS: [&str; 2] = ["signals", "ks"];

fn cmd_experiment(args: &ExperimentArgs, seed: Option<u64>) -> Result<i32> {
    let map = parse_config(&args.plan)?;
    let allowed: Vec<&str> = DgpSpec::CONFIG_KEYS
        .iter()
        .chain(PLAN_KEYS.iter())
        .chain(PLAN_SWEEP_KEYS.iter())
        .copied()
        .collect();
    reject_unknown_keys(&map, &allowed)?;

    let dgp = DgpSpec::from_pairs(|k| map.get(k).map(|s| s.as_str()))?;
    let mut plan = ExperimentPlan::new(dgp);
    if let Some(v) = map.get("reps") {
        plan.reps = parse_value("reps", v)?;
    }
    if let Some(v) = map.get("alpha") {
        plan.alpha = parse_value("alpha", v)?;
    }
    if let Some(v) = map.get("delta") {
        plan.delta = parse_value("delta", v)?;
    }
    if let Some(v) = map.get("norm") {
        plan.norm = parse_norm(v)?;
    }
    if let Some(v) = map.get("m") {
        plan.m_override = if v == "auto" {
            None
        } else {
            Some(parse_value("m", v)?)
        };
    }
    if let Some(v) = map.get("trim_cutoff") {
        plan.trim_cutoff = parse_value("trim_cutoff", v)?;
    }
    if let Some(v) = map.get("m_thresholds") {
        plan.m_thresholds = parse_list("m_thresholds", v)?;
    }
    if let Some(v) = map.get("quantile_reps") {
        plan.quantile_reps = parse_value("quantile_reps", v)?;
    }
    if let Some(v) = map.get("cache_dir") {
        plan.cache_dir = Some(PathBuf::from(v));
    }
    if let Some(v) = map.get("models") {
        plan.sweep.models = v.split(';').map(Model::parse).collect::<Result<_>>()?;
    }
    if let Some(v) = map.get("ns") {
        plan.sweep.ns = parse_list("ns", v)?;
    }
    if let Some(v) = map.get("ps") {
        plan.sweep.ps = parse_list("ps", v)?;
    }
    if let Some(v) = map.get("s_fracs") {
        plan.sweep.s_fracs = parse_list("s_fracs", v)?;
    }
    if let Some(v) = map.get("signals") {
        plan.sweep.signals = parse_list("signals", v)?;
    }
    if let Some(v) = map.get("ks") {
        plan.sweep.ks = parse_list("ks", v)?;
    }
    if let Some(s) = seed {
        plan.seed = s;
    }

    let kind = match (&args.table, map.get("table")) {
        (Some(t), _) => TableKind::parse(t)?,
        (None, Some(t)) => TableKind::parse(t)?,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "no table kind: pass --table or a `table` key in the plan".into(),
            ))
        }
    };
    let csv = match kind {
        TableKind::Rejection => rejection_csv(&run_rejection(&plan)?),
        TableKind::KSensitivity => rejection_csv(&run_k_sensitivity(&plan)?),
        TableKind::MDistribution => {
            m_distribution_csv(&run_m_distribution(&plan)?, &plan.m_thresholds)
        }
        TableKind::Support => support_csv(&run_support(&plan)?),
        TableKind::CpAccuracy => cp_accuracy_csv(&run_cp_accuracy(&plan)?),
    };
    write_table(&args.out, &csv, &plan, kind)?;
    eprintln!("wrote {} and its manifest", args.out.display());
    Ok(0)
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn init_threads(threads: Option<usize>) -> Result<()> {
    let count = match threads {
        Some(t) => Some(t),
        None => match std::env::var("RELCPD_THREADS") {
            Ok(v) => Some(parse_value("RELCPD_THREADS", &v)?),
            Err(_) => None,
        },
    };
    if let Some(t) = count {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be ≥ 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool setup failed: {e}")))?;
    }
    Ok(())
}

/// Exit code for an error per the documented scheme.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::TableMismatch(_) | Error::MissingAtom { .. } => 1,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::RaggedRow { .. }
        | Error::EmptyInput(_)
        | Error::FullyMissingColumn { .. }
        | Error::Degenerate(_) => 2,
    }
}

/// Parse the process arguments, run the command, and return the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    let seed = cli.seed;
    let outcome = match &cli.command {
        Command::Test(args) => cmd_test(args, seed),
        Command::Quantiles(args) => cmd_quantiles(args, seed.unwrap_or(0)),
        Command::SelectM(args) => cmd_select_m(args),
        Command::EstimateCp(args) => cmd_estimate_cp(args),
        Command::EstimateSet(args) => cmd_estimate_set(args),
        Command::Simulate(args) => cmd_simulate(args, seed.unwrap_or(0)),
        Command::Experiment(args) => cmd_experiment(args, seed),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_files_parse_and_reject_unknowns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "# comment\ndelta = 2.0\n\nalpha=0.05\n").unwrap();
        let map = parse_config(&path).unwrap();
        assert_eq!(map.get("delta").unwrap(), "2.0");
        assert_eq!(map.get("alpha").unwrap(), "0.05");
        assert!(reject_unknown_keys(&map, &["delta", "alpha"]).is_ok());
        let err = reject_unknown_keys(&map, &["delta"]).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");

        std::fs::write(&path, "delta=1\ndelta=2\n").unwrap();
        assert!(parse_config(&path).is_err()); // duplicate key

        std::fs::write(&path, "just a line\n").unwrap();
        assert!(parse_config(&path).is_err()); // not key=value
    }

    #[test]
    fn norm_and_format_tokens_parse() {
        assert_eq!(parse_norm("dense").unwrap(), NormKind::NormalizedL2);
        assert_eq!(parse_norm("SPARSE").unwrap(), NormKind::SparsityAdjusted);
        assert_eq!(
            parse_norm("sparsity_adjusted").unwrap(),
            NormKind::SparsityAdjusted
        );
        assert!(parse_norm("l1").is_err());
        assert!(parse_format("csv").unwrap());
        assert!(!parse_format("text").unwrap());
        assert!(parse_format("yaml").is_err());
    }

    #[test]
    fn lists_parse_on_semicolons() {
        let v: Vec<f64> = parse_list("signals", "2.0;2.25;3").unwrap();
        assert_eq!(v, vec![2.0, 2.25, 3.0]);
        let v: Vec<usize> = parse_list("ks", "10;20").unwrap();
        assert_eq!(v, vec![10, 20]);
        assert!(parse_list::<usize>("ks", "10;x").is_err());
    }

    #[test]
    fn error_exit_codes_follow_the_scheme() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), 1);
        assert_eq!(exit_code(&Error::TableMismatch("x".into())), 1);
        assert_eq!(exit_code(&Error::EmptyInput("x".into())), 2);
        assert_eq!(exit_code(&Error::Degenerate("x".into())), 2);
        assert_eq!(
            exit_code(&Error::Parse {
                row: 1,
                message: "x".into()
            }),
            2
        );
    }

    #[test]
    fn cli_declaration_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
