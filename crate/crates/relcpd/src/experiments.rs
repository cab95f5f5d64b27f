//! Simulation harness: empirical rejection rates, the m̂ distribution,
//! support-recovery metrics, change-point accuracy, and K-sensitivity,
//! each emitted as a CSV table with standard-error columns.
//!
//! A plan is a DGP template plus named sweep grids (model, n, p, s/p,
//! signal, K). Cells are the cartesian product of the grids; the K grid is
//! special in that every K shares the *same* data replications — per-cell
//! seeds derive from the plan seed and the K-free cell index, so
//! K-sensitivity comparisons are paired and any table is bit-reproducible
//! for a fixed plan regardless of worker count. Per-replication failures
//! are counted and reported per cell, never fatal.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::cpoint::estimate_cp;
use crate::dgp::{simulate, DgpSpec, Model};
use crate::error::{Error, Result};
use crate::limitdist::{quantile_table, quantile_table_cached, LimitDist, QuantileTable};
use crate::relevance::{test_dense, test_sparse, NormKind, QuantileSource, TestConfig};
use crate::rng::derive_seed;
use crate::setestim::{estimate_s_with_kappa, support_metrics, DEFAULT_KAPPA};
use crate::trim::{select_m, DEFAULT_CUTOFF};

/// |θ̂ − θ₀| tolerance that counts as an accurate localization.
pub const CP_TOLERANCE: f64 = 0.05;

/// Marker written for undefined table entries (SE of a single rep,
/// recall without signal, …).
pub const NA: &str = "NA";

/// Seed stream offset reserved for quantile simulation; data cells use
/// small consecutive indices, so the two ranges cannot collide.
const QUANTILE_STREAM_BASE: u64 = 1 << 32;

/// Which table a plan should produce (CLI-facing).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Rejection,
    MDistribution,
    Support,
    CpAccuracy,
    KSensitivity,
}

impl TableKind {
    pub fn parse(s: &str) -> Result<TableKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rejection" => Ok(TableKind::Rejection),
            "m-dist" | "mdist" | "m-distribution" => Ok(TableKind::MDistribution),
            "support" => Ok(TableKind::Support),
            "cp-accuracy" | "cp" => Ok(TableKind::CpAccuracy),
            "k-sensitivity" | "ksens" => Ok(TableKind::KSensitivity),
            other => Err(Error::InvalidArgument(format!(
                "unknown table kind {other:?}; expected rejection, m-dist, support, \
                 cp-accuracy, or k-sensitivity"
            ))),
        }
    }
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TableKind::Rejection => "rejection",
            TableKind::MDistribution => "m-dist",
            TableKind::Support => "support",
            TableKind::CpAccuracy => "cp-accuracy",
            TableKind::KSensitivity => "k-sensitivity",
        };
        write!(f, "{s}")
    }
}

/// Named sweep grids; singletons mean "don't sweep this".
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub models: Vec<Model>,
    pub ns: Vec<usize>,
    pub ps: Vec<usize>,
    /// Fractions s/p in (0, 1]; each cell uses s = max(1, ⌊s_frac·p⌋).
    pub s_fracs: Vec<f64>,
    /// Target ‖δ‖²₂,₀ values.
    pub signals: Vec<f64>,
    /// ν atom counts (shared data seeds across this grid).
    pub ks: Vec<usize>,
}

impl Sweep {
    /// Singleton grids matching a template spec (K defaults to 20).
    pub fn from_spec(spec: &DgpSpec) -> Sweep {
        Sweep {
            models: vec![spec.model],
            ns: vec![spec.n],
            ps: vec![spec.p],
            s_fracs: vec![spec.s as f64 / spec.p as f64],
            signals: vec![spec.signal],
            ks: vec![20],
        }
    }
}

/// A full experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    /// Template providing θ₀, μ, spatial structure, and defaults the sweep
    /// doesn't touch.
    pub dgp: DgpSpec,
    pub sweep: Sweep,
    pub reps: usize,
    pub alpha: f64,
    /// Threshold Δ for the rejection tables.
    pub delta: f64,
    /// Which test the rejection tables run.
    pub norm: NormKind,
    /// Fixed trimming lag; `None` selects m̂ per replication.
    pub m_override: Option<usize>,
    /// Cutoff for the trimming selector.
    pub trim_cutoff: f64,
    /// Thresholds t for the P(m̂ ≥ t) columns of the m̂ table.
    pub m_thresholds: Vec<usize>,
    /// Monte Carlo replications behind each quantile table.
    pub quantile_reps: usize,
    /// Optional on-disk quantile cache.
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
}

impl ExperimentPlan {
    /// Desk-scale defaults around a template: 200 replications, α = 0.05,
    /// Δ = 2, dense test, data-selected m̂.
    pub fn new(dgp: DgpSpec) -> ExperimentPlan {
        let sweep = Sweep::from_spec(&dgp);
        let seed = dgp.seed;
        ExperimentPlan {
            dgp,
            sweep,
            reps: 200,
            alpha: 0.05,
            delta: 2.0,
            norm: NormKind::NormalizedL2,
            m_override: None,
            trim_cutoff: DEFAULT_CUTOFF,
            m_thresholds: vec![1, 2, 3, 5, 10],
            quantile_reps: 100_000,
            cache_dir: None,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidArgument("reps must be ≥ 1".into()));
        }
        let sweep = &self.sweep;
        if sweep.models.is_empty()
            || sweep.ns.is_empty()
            || sweep.ps.is_empty()
            || sweep.s_fracs.is_empty()
            || sweep.signals.is_empty()
            || sweep.ks.is_empty()
        {
            return Err(Error::InvalidArgument(
                "every sweep grid must be nonempty".into(),
            ));
        }
        for &f in &sweep.s_fracs {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "s/p fraction {f} must lie in (0, 1]"
                )));
            }
        }
        if self.m_thresholds.is_empty() {
            return Err(Error::InvalidArgument(
                "m_thresholds must be nonempty".into(),
            ));
        }
        // Cells are validated eagerly so a bad corner of the sweep fails
        // the whole plan before any compute starts.
        for cell in self.cells() {
            self.cell_spec(&cell, 0).validate()?;
        }
        Ok(())
    }

    /// Cartesian product of the sweep grids, K-free index order.
    fn data_cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &model in &self.sweep.models {
            for &n in &self.sweep.ns {
                for &p in &self.sweep.ps {
                    for &s_frac in &self.sweep.s_fracs {
                        for &signal in &self.sweep.signals {
                            let s = ((s_frac * p as f64 + 1e-9).floor() as usize).clamp(1, p);
                            cells.push(Cell {
                                model,
                                n,
                                p,
                                s,
                                s_frac,
                                signal,
                                k: self.sweep.ks[0],
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    /// All cells including the K grid.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for cell in self.data_cells() {
            for &k in &self.sweep.ks {
                out.push(Cell { k, ..cell });
            }
        }
        out
    }

    /// The DGP for one replication of one cell.
    fn cell_spec(&self, cell: &Cell, rep_seed: u64) -> DgpSpec {
        DgpSpec {
            model: cell.model,
            n: cell.n,
            p: cell.p,
            s: cell.s,
            signal: cell.signal,
            seed: rep_seed,
            ..self.dgp.clone()
        }
    }

    /// Seed for one replication: derived from the K-free cell index so the
    /// K grid sees identical data.
    fn rep_seed(&self, data_index: usize, rep: usize) -> u64 {
        derive_seed(derive_seed(self.seed, data_index as u64), rep as u64)
    }

    fn quantile_table_for(&self, k: usize) -> Result<QuantileTable> {
        let levels = [1.0 - self.alpha, 1.0 - self.alpha / 2.0];
        let qseed = derive_seed(self.seed, QUANTILE_STREAM_BASE + k as u64);
        match &self.cache_dir {
            Some(dir) => {
                quantile_table_cached(dir, LimitDist::G, k, &levels, self.quantile_reps, qseed)
            }
            None => quantile_table(LimitDist::G, k, &levels, self.quantile_reps, qseed),
        }
    }

    /// Flat description of the plan for the manifest file.
    pub fn manifest_string(&self, kind: TableKind) -> String {
        let join_f = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        let mut s = String::new();
        let _ = writeln!(s, "table={kind}");
        let _ = writeln!(
            s,
            "version={} {}",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION")
        );
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "reps={}", self.reps);
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "delta={}", self.delta);
        let _ = writeln!(s, "norm={}", self.norm);
        let _ = writeln!(s, "theta0={}", self.dgp.theta0);
        let _ = writeln!(s, "mu={}", self.dgp.mu);
        let _ = writeln!(s, "spatial={}", self.dgp.spatial);
        let _ = writeln!(
            s,
            "models={}",
            self.sweep
                .models
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(";")
        );
        let _ = writeln!(
            s,
            "ns={}",
            self.sweep
                .ns
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";")
        );
        let _ = writeln!(
            s,
            "ps={}",
            self.sweep
                .ps
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";")
        );
        let _ = writeln!(s, "s_fracs={}", join_f(&self.sweep.s_fracs));
        let _ = writeln!(s, "signals={}", join_f(&self.sweep.signals));
        let _ = writeln!(
            s,
            "ks={}",
            self.sweep
                .ks
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";")
        );
        let _ = writeln!(
            s,
            "m={}",
            self.m_override
                .map_or_else(|| "auto".into(), |m| m.to_string())
        );
        let _ = writeln!(s, "trim_cutoff={}", self.trim_cutoff);
        let _ = writeln!(s, "quantile_reps={}", self.quantile_reps);
        s
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub s_frac: f64,
    pub signal: f64,
    pub k: usize,
}

impl Cell {
    fn csv_prefix(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.model, self.n, self.p, self.s, self.s_frac, self.signal, self.k
        )
    }

    const CSV_PREFIX_HEADER: &'static str = "model,n,p,s,s_frac,signal,K";
}

/// Run `reps` replications in parallel, splitting successes (in
/// replication order) from failure count.
fn run_reps<T: Send>(
    plan: &ExperimentPlan,
    data_index: usize,
    f: impl Fn(u64) -> Result<T> + Sync,
) -> (Vec<T>, usize) {
    let results: Vec<Result<T>> = (0..plan.reps)
        .into_par_iter()
        .map(|rep| f(plan.rep_seed(data_index, rep)))
        .collect();
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(_) => failures += 1,
        }
    }
    (ok, failures)
}

fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    match values.len() {
        0 => (f64::NAN, None),
        1 => (values[0], None),
        _ => {
            let (m, se) = crate::numeric::mean_se(values);
            (m, Some(se))
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

// ---------------------------------------------------------------------------
// Rejection tables (also serving K-sensitivity)
// ---------------------------------------------------------------------------

/// Empirical rejection behavior of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionRow {
    pub cell: Cell,
    /// Fraction of successful replications that rejected.
    pub rate: f64,
    /// Binomial SE of `rate`; `None` with fewer than 2 successes.
    pub se: Option<f64>,
    /// Successful replications behind `rate`.
    pub reps: usize,
    pub failures: usize,
    /// Replications whose split was degenerate (statistic zero by
    /// definition, counted as non-rejections).
    pub degenerate: usize,
}

/// Empirical rejection rate per cell for the configured test.
pub fn run_rejection(plan: &ExperimentPlan) -> Result<Vec<RejectionRow>> {
    plan.validate()?;
    let mut rows = Vec::new();
    for (data_index, data_cell) in plan.data_cells().into_iter().enumerate() {
        for &k in &plan.sweep.ks {
            let cell = Cell { k, ..data_cell };
            let table = plan.quantile_table_for(k)?;
            let (outcomes, failures) = run_reps(plan, data_index, |seed| {
                let x = simulate(&plan.cell_spec(&cell, seed))?;
                let cfg = TestConfig {
                    delta: plan.delta,
                    alpha: plan.alpha,
                    k,
                    m: plan.m_override,
                    kappa: DEFAULT_KAPPA,
                    set_grid_k: k,
                    trim_cutoff: plan.trim_cutoff,
                    quantiles: QuantileSource::Table(table.clone()),
                };
                let res = match plan.norm {
                    NormKind::NormalizedL2 => test_dense(&x, &cfg)?,
                    NormKind::SparsityAdjusted => test_sparse(&x, &cfg)?,
                };
                Ok((res.reject, res.degenerate))
            });
            let reps = outcomes.len();
            let hits = outcomes.iter().filter(|&&(r, _)| r).count();
            let degenerate = outcomes.iter().filter(|&&(_, d)| d).count();
            let rate = hits as f64 / reps.max(1) as f64;
            let se = (reps >= 2).then(|| crate::numeric::binomial_se(rate, reps));
            rows.push(RejectionRow {
                cell,
                rate,
                se,
                reps,
                failures,
                degenerate,
            });
        }
    }
    Ok(rows)
}

/// Rejection rates across the K grid with paired data replications; the
/// pairing is a property of the seeding scheme, so this is `run_rejection`
/// under a name matching the table it produces.
pub fn run_k_sensitivity(plan: &ExperimentPlan) -> Result<Vec<RejectionRow>> {
    run_rejection(plan)
}

/// CSV for rejection and K-sensitivity tables.
pub fn rejection_csv(rows: &[RejectionRow]) -> String {
    let mut out = format!(
        "{},rate,se,reps,failures,degenerate\n",
        Cell::CSV_PREFIX_HEADER
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.cell.csv_prefix(),
            r.rate,
            fmt_opt(r.se),
            r.reps,
            r.failures,
            r.degenerate
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Trimming-lag distribution
// ---------------------------------------------------------------------------

/// Distribution summary of m̂ in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MDistRow {
    pub cell: Cell,
    pub mean_m: f64,
    pub se_mean: Option<f64>,
    /// (t, fraction of replications with m̂ ≥ t), for the plan thresholds.
    pub frac_ge: Vec<(usize, f64)>,
    pub reps: usize,
    pub failures: usize,
}

/// Distribution of the selected trimming lag per cell (no test involved).
pub fn run_m_distribution(plan: &ExperimentPlan) -> Result<Vec<MDistRow>> {
    plan.validate()?;
    let mut rows = Vec::new();
    for (data_index, cell) in plan.data_cells().into_iter().enumerate() {
        let (ms, failures) = run_reps(plan, data_index, |seed| {
            let x = simulate(&plan.cell_spec(&cell, seed))?;
            let fit = estimate_cp(&x)?;
            Ok(select_m(&x, fit.k_hat, plan.trim_cutoff)?.m_hat)
        });
        let reps = ms.len();
        let as_f: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
        let (mean_m, se_mean) = mean_and_se(&as_f);
        let frac_ge = plan
            .m_thresholds
            .iter()
            .map(|&t| {
                (
                    t,
                    ms.iter().filter(|&&m| m >= t).count() as f64 / reps.max(1) as f64,
                )
            })
            .collect();
        rows.push(MDistRow {
            cell,
            mean_m,
            se_mean,
            frac_ge,
            reps,
            failures,
        });
    }
    Ok(rows)
}

/// CSV for the m̂ table; one `m_ge_<t>` column per threshold.
pub fn m_distribution_csv(rows: &[MDistRow], thresholds: &[usize]) -> String {
    let mut out = String::from(Cell::CSV_PREFIX_HEADER);
    out.push_str(",mean_m,se_mean");
    for t in thresholds {
        let _ = write!(out, ",m_ge_{t}");
    }
    out.push_str(",reps,failures\n");
    for r in rows {
        let _ = write!(
            out,
            "{},{},{}",
            r.cell.csv_prefix(),
            r.mean_m,
            fmt_opt(r.se_mean)
        );
        for &(_, frac) in &r.frac_ge {
            let _ = write!(out, ",{frac}");
        }
        let _ = writeln!(out, ",{},{}", r.reps, r.failures);
    }
    out
}

// ---------------------------------------------------------------------------
// Support recovery
// ---------------------------------------------------------------------------

/// Mean support-recovery metrics in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportRow {
    pub cell: Cell,
    pub precision: f64,
    pub precision_se: Option<f64>,
    /// `None` when the cell has no signal (recall undefined).
    pub recall: Option<f64>,
    pub recall_se: Option<f64>,
    pub f_score: Option<f64>,
    pub reps: usize,
    pub failures: usize,
}

/// Precision/recall/F of Ŝ_n against the planted support per cell.
pub fn run_support(plan: &ExperimentPlan) -> Result<Vec<SupportRow>> {
    plan.validate()?;
    let mut rows = Vec::new();
    for (data_index, data_cell) in plan.data_cells().into_iter().enumerate() {
        for &k in &plan.sweep.ks {
            let cell = Cell { k, ..data_cell };
            let truth: Vec<usize> = if cell.signal > 0.0 {
                (0..cell.s).collect()
            } else {
                Vec::new()
            };
            let (metrics, failures) = run_reps(plan, data_index, |seed| {
                let x = simulate(&plan.cell_spec(&cell, seed))?;
                let fit = estimate_cp(&x)?;
                let m = match plan.m_override {
                    Some(m) => m,
                    None => match select_m(&x, fit.k_hat, plan.trim_cutoff) {
                        Ok(sel) => sel.m_hat,
                        Err(Error::Degenerate(_)) => 0,
                        Err(e) => return Err(e),
                    },
                };
                let est = estimate_s_with_kappa(&x, fit.k_hat, m, k, DEFAULT_KAPPA)?;
                Ok(support_metrics(&truth, &est.s_hat))
            });
            let reps = metrics.len();
            let prec: Vec<f64> = metrics.iter().map(|m| m.precision).collect();
            let (precision, precision_se) = mean_and_se(&prec);
            let (recall, recall_se, f_score) = if truth.is_empty() {
                (None, None, None)
            } else {
                let rec: Vec<f64> = metrics.iter().map(|m| m.recall).collect();
                let fs: Vec<f64> = metrics.iter().map(|m| m.f_score).collect();
                let (r, rse) = mean_and_se(&rec);
                let (f, _) = mean_and_se(&fs);
                (Some(r), rse, Some(f))
            };
            rows.push(SupportRow {
                cell,
                precision,
                precision_se,
                recall,
                recall_se,
                f_score,
                reps,
                failures,
            });
        }
    }
    Ok(rows)
}

/// CSV for the support table; undefined recall is the NA marker.
pub fn support_csv(rows: &[SupportRow]) -> String {
    let mut out = format!(
        "{},precision,precision_se,recall,recall_se,f_score,reps,failures\n",
        Cell::CSV_PREFIX_HEADER
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.cell.csv_prefix(),
            r.precision,
            fmt_opt(r.precision_se),
            fmt_opt(r.recall),
            fmt_opt(r.recall_se),
            fmt_opt(r.f_score),
            r.reps,
            r.failures
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Change-point accuracy
// ---------------------------------------------------------------------------

/// Localization accuracy of θ̂ in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CpAccuracyRow {
    pub cell: Cell,
    /// Fraction of replications with |θ̂ − θ₀| ≤ CP_TOLERANCE.
    pub rate: f64,
    pub se: Option<f64>,
    pub reps: usize,
    pub failures: usize,
}

/// Fraction of accurate localizations per cell.
pub fn run_cp_accuracy(plan: &ExperimentPlan) -> Result<Vec<CpAccuracyRow>> {
    plan.validate()?;
    let theta0 = plan.dgp.theta0;
    let mut rows = Vec::new();
    for (data_index, cell) in plan.data_cells().into_iter().enumerate() {
        let (hits, failures) = run_reps(plan, data_index, |seed| {
            let x = simulate(&plan.cell_spec(&cell, seed))?;
            let fit = estimate_cp(&x)?;
            Ok((fit.theta_hat - theta0).abs() <= CP_TOLERANCE)
        });
        let reps = hits.len();
        let rate = hits.iter().filter(|&&h| h).count() as f64 / reps.max(1) as f64;
        let se = (reps >= 2).then(|| crate::numeric::binomial_se(rate, reps));
        rows.push(CpAccuracyRow {
            cell,
            rate,
            se,
            reps,
            failures,
        });
    }
    Ok(rows)
}

/// CSV for the change-point accuracy table.
pub fn cp_accuracy_csv(rows: &[CpAccuracyRow]) -> String {
    let mut out = format!("{},rate,se,reps,failures\n", Cell::CSV_PREFIX_HEADER);
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.cell.csv_prefix(),
            r.rate,
            fmt_opt(r.se),
            r.reps,
            r.failures
        );
    }
    out
}

/// Write a table CSV together with its `<stem>.manifest.txt`.
pub fn write_table(path: &Path, csv: &str, plan: &ExperimentPlan, kind: TableKind) -> Result<()> {
    std::fs::write(path, csv).map_err(|e| Error::io(path, e))?;
    let manifest = path.with_extension("manifest.txt");
    std::fs::write(&manifest, plan.manifest_string(kind)).map_err(|e| Error::io(&manifest, e))
}
