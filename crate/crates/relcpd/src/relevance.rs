//! The relevant-change tests: assembling estimation, trimming, the
//! sequential U-statistic, and the self-normalizer into a decision.
//!
//! Both variants reject the null ‖δ‖² ≤ Δ when
//!
//! ```text
//! T_{n,A}(k̂, m̂) > Δ + q_{1−α}·V_{n,A}
//! ```
//!
//! with A = {1, …, p} and the normalized ℓ₂ norm for the dense test, and
//! A = Ŝ_n with the sparsity-adjusted norm for the adaptive test. The
//! quantile q_{1−α} comes from the limiting distribution 𝔾 in both cases.
//! Byproducts of the same run: the smallest rejectable threshold
//! Δ_α = max(T − q_{1−α}V, 0), the one-sided confidence interval
//! [0, T + q_{1−α}V], and the two-sided interval
//! [max(0, T − q_{1−α/2}V), T + q_{1−α/2}V].
//!
//! Degenerate splits (k̂ ≤ m+1 or k̂ + m ≥ n−1, where the statistic is zero
//! by definition) and an empty estimated support produce structured
//! non-rejections carrying a warning, never a silent zero.

use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::cpoint::estimate_cp;
use crate::error::{Error, Result};
use crate::limitdist::{quantile_table, quantile_table_cached, LimitDist, QuantileTable};
use crate::selfnorm::{v_statistic, NuMeasure};
use crate::setestim::estimate_s_with_kappa;
use crate::setestim::DEFAULT_KAPPA;
use crate::trim::{select_m, DEFAULT_CUTOFF};
use crate::tsdata::TimeSeriesMatrix;
use crate::ustat::useq;

/// Default Monte Carlo replications behind a quantile lookup.
pub const DEFAULT_QUANTILE_REPS: usize = 100_000;

/// Which norm the threshold Δ refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// ‖δ‖²₂,₂ = p⁻¹ Σ_ℓ δ_ℓ² over all coordinates.
    NormalizedL2,
    /// ‖δ‖²₂,₀ = s⁻¹ Σ_{ℓ∈S} δ_ℓ² over the active coordinates.
    SparsityAdjusted,
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormKind::NormalizedL2 => write!(f, "normalized_l2"),
            NormKind::SparsityAdjusted => write!(f, "sparsity_adjusted"),
        }
    }
}

/// Where the 𝔾 quantiles come from.
#[derive(Debug, Clone)]
pub enum QuantileSource {
    /// Simulate (optionally through an on-disk cache directory).
    Mc {
        reps: usize,
        seed: u64,
        cache_dir: Option<PathBuf>,
    },
    /// A pre-built table; its identity must match the config's K.
    Table(QuantileTable),
}

impl Default for QuantileSource {
    fn default() -> Self {
        QuantileSource::Mc {
            reps: DEFAULT_QUANTILE_REPS,
            seed: 0,
            cache_dir: None,
        }
    }
}

/// Everything a test run needs besides the data.
#[derive(Debug, Clone)]
pub struct TestConfig {
    /// Threshold Δ on the squared-norm scale; must be ≥ 0 (+∞ allowed).
    pub delta: f64,
    /// Nominal level α ∈ (0, 1).
    pub alpha: f64,
    /// Atom count K of the self-normalizing measure ν.
    pub k: usize,
    /// Manual trimming lag; `None` selects m̂ from the data.
    pub m: Option<usize>,
    /// Support-threshold exponent κ > 1 (sparse test only).
    pub kappa: f64,
    /// Atom count approximating the Lebesgue measure inside v̂_ℓ
    /// (sparse test only).
    pub set_grid_k: usize,
    /// |ΔF| cutoff for the trimming selector.
    pub trim_cutoff: f64,
    pub quantiles: QuantileSource,
}

impl TestConfig {
    /// Defaults everywhere except the threshold, which has no sensible
    /// universal value: α = 0.05, K = 20, data-selected m, κ = 3/2.
    pub fn new(delta: f64) -> Self {
        TestConfig {
            delta,
            alpha: 0.05,
            k: 20,
            m: None,
            kappa: DEFAULT_KAPPA,
            set_grid_k: 20,
            trim_cutoff: DEFAULT_CUTOFF,
            quantiles: QuantileSource::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.delta.is_nan() || self.delta < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "threshold Δ must be ≥ 0, got {}",
                self.delta
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "level α must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Outcome of one test run, carrying every intermediate artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub norm: NormKind,
    /// Echo of the configured threshold (squared scale).
    pub delta: f64,
    pub alpha: f64,
    /// T_{n,A}(k̂, m̂; 1).
    pub t: f64,
    /// Self-normalizer V_{n,A}.
    pub v: f64,
    /// q_{1−α} of 𝔾.
    pub q: f64,
    /// q_{1−α/2} of 𝔾 (for the two-sided interval).
    pub q_half: f64,
    pub reject: bool,
    /// Smallest threshold that would still be rejected.
    pub delta_alpha: f64,
    pub ci_upper: (f64, f64),
    pub ci_two_sided: (f64, f64),
    pub k_hat: usize,
    pub theta_hat: f64,
    pub m_hat: usize,
    /// Estimated support (sparse test only), 0-based and sorted.
    pub s_hat: Option<Vec<usize>>,
    /// |A|: p for the dense test, |Ŝ_n| for the sparse one.
    pub norm_size: usize,
    /// True when the split fell in the guard region and the statistic is
    /// zero by definition.
    pub degenerate: bool,
    pub warnings: Vec<String>,
    /// False on the squared scale; true after `report_sqrt_scale`.
    pub sqrt_scale: bool,
}

fn fetch_quantiles(config: &TestConfig) -> Result<(f64, f64)> {
    let levels = [1.0 - config.alpha, 1.0 - config.alpha / 2.0];
    let table = match &config.quantiles {
        QuantileSource::Mc {
            reps,
            seed,
            cache_dir,
        } => match cache_dir {
            Some(dir) => quantile_table_cached(dir, LimitDist::G, config.k, &levels, *reps, *seed)?,
            None => quantile_table(LimitDist::G, config.k, &levels, *reps, *seed)?,
        },
        QuantileSource::Table(t) => {
            if t.dist != LimitDist::G || t.k != config.k {
                return Err(Error::TableMismatch(format!(
                    "quantile table is for dist {} with K = {}, but the test needs 𝔾 with K = {}",
                    t.dist.tag(),
                    t.k,
                    config.k
                )));
            }
            t.clone()
        }
    };
    Ok((table.q_at(levels[0])?, table.q_at(levels[1])?))
}

fn run_test(x: &TimeSeriesMatrix, config: &TestConfig, norm: NormKind) -> Result<TestResult> {
    config.validate()?;
    x.require_min_rows(4, "the relevant-change test")?;
    let (q, q_half) = fetch_quantiles(config)?;
    let fit = estimate_cp(x)?;
    let mut warnings = Vec::new();

    let m_hat = match config.m {
        Some(m) => m,
        None => match select_m(x, fit.k_hat, config.trim_cutoff) {
            Ok(sel) => sel.m_hat,
            Err(Error::Degenerate(msg)) => {
                warnings.push(format!("trim selection degenerate ({msg}); using m = 0"));
                0
            }
            Err(e) => return Err(e),
        },
    };

    let (a_set, s_hat) = match norm {
        NormKind::NormalizedL2 => ((0..x.p()).collect::<Vec<_>>(), None),
        NormKind::SparsityAdjusted => {
            let est = estimate_s_with_kappa(x, fit.k_hat, m_hat, config.set_grid_k, config.kappa)?;
            if est.s_hat.is_empty() {
                warnings.push(
                    "estimated support set is empty: no coordinate shows evidence of a shift, \
                     so the adaptive statistic is undefined and the null is retained"
                        .into(),
                );
            }
            (est.s_hat.clone(), Some(est.s_hat))
        }
    };

    let guard_ok = fit.k_hat > m_hat + 1 && fit.k_hat + m_hat < x.n() - 1;
    if !guard_ok {
        warnings.push(format!(
            "degenerate split: k̂ = {} with m = {m_hat} leaves no trimmed pairs on one side \
             (n = {}); the statistic is zero by definition",
            fit.k_hat,
            x.n()
        ));
    }

    let (t, v) = if guard_ok && !a_set.is_empty() {
        let nu = NuMeasure::new(config.k)?;
        let seq = useq(x, &a_set, fit.k_hat, m_hat, &nu.test_grid())?;
        (seq.t_full, v_statistic(&seq, &nu)?)
    } else {
        (0.0, 0.0)
    };

    // With t = v = 0 these formulas yield reject = false and Δ_α = 0 for
    // any Δ ≥ 0, so the degenerate and empty-support paths stay consistent
    // with the stated invariants.
    let reject = t > config.delta + q * v;
    let delta_alpha = (t - q * v).max(0.0);
    Ok(TestResult {
        norm,
        delta: config.delta,
        alpha: config.alpha,
        t,
        v,
        q,
        q_half,
        reject,
        delta_alpha,
        ci_upper: (0.0, t + q * v),
        ci_two_sided: ((t - q_half * v).max(0.0), t + q_half * v),
        k_hat: fit.k_hat,
        theta_hat: fit.theta_hat,
        m_hat,
        norm_size: a_set.len(),
        s_hat,
        degenerate: !guard_ok,
        warnings,
        sqrt_scale: false,
    })
}

/// Dense test of H₀: ‖δ‖²₂,₂ ≤ Δ over all p coordinates.
pub fn test_dense(x: &TimeSeriesMatrix, config: &TestConfig) -> Result<TestResult> {
    run_test(x, config, NormKind::NormalizedL2)
}

/// Adaptive test of H₀: ‖δ‖²₂,₀ ≤ Δ on the estimated support Ŝ_n.
pub fn test_sparse(x: &TimeSeriesMatrix, config: &TestConfig) -> Result<TestResult> {
    run_test(x, config, NormKind::SparsityAdjusted)
}

/// The same result reported on the norm (not squared-norm) scale:
/// Δ_α and the interval endpoints are replaced by their square roots, a
/// monotone transform that preserves coverage. T, V, and the quantiles
/// stay on the squared scale where they were computed.
pub fn report_sqrt_scale(result: &TestResult) -> TestResult {
    let mut out = result.clone();
    out.delta_alpha = result.delta_alpha.sqrt();
    out.ci_upper = (result.ci_upper.0.sqrt(), result.ci_upper.1.sqrt());
    out.ci_two_sided = (result.ci_two_sided.0.sqrt(), result.ci_two_sided.1.sqrt());
    out.sqrt_scale = true;
    out
}

impl TestResult {
    /// Flat `key=value` report, one key per line; warnings repeat the
    /// `warning` key.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "norm={}", self.norm);
        let _ = writeln!(
            s,
            "scale={}",
            if self.sqrt_scale { "norm" } else { "squared" }
        );
        let _ = writeln!(s, "delta={}", self.delta);
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "T={}", self.t);
        let _ = writeln!(s, "V={}", self.v);
        let _ = writeln!(s, "q={}", self.q);
        let _ = writeln!(s, "q_half={}", self.q_half);
        let _ = writeln!(s, "reject={}", self.reject);
        let _ = writeln!(s, "delta_alpha={}", self.delta_alpha);
        let _ = writeln!(s, "ci_upper_lo={}", self.ci_upper.0);
        let _ = writeln!(s, "ci_upper_hi={}", self.ci_upper.1);
        let _ = writeln!(s, "ci_two_lo={}", self.ci_two_sided.0);
        let _ = writeln!(s, "ci_two_hi={}", self.ci_two_sided.1);
        let _ = writeln!(s, "k_hat={}", self.k_hat);
        let _ = writeln!(s, "theta_hat={}", self.theta_hat);
        let _ = writeln!(s, "m_hat={}", self.m_hat);
        let _ = writeln!(s, "norm_size={}", self.norm_size);
        if let Some(set) = &self.s_hat {
            let labels: Vec<String> = set.iter().map(|l| (l + 1).to_string()).collect();
            let _ = writeln!(s, "s_hat={}", labels.join(";"));
        }
        let _ = writeln!(s, "degenerate={}", self.degenerate);
        for w in &self.warnings {
            let _ = writeln!(s, "warning={w}");
        }
        s
    }

    /// Column names matching `to_csv_row`.
    pub fn csv_header() -> &'static str {
        "norm,scale,delta,alpha,t,v,q,q_half,reject,delta_alpha,ci_upper_lo,ci_upper_hi,\
         ci_two_lo,ci_two_hi,k_hat,theta_hat,m_hat,norm_size,s_hat,degenerate,warnings"
    }

    /// One CSV row; the support set is `;`-joined 1-based labels and
    /// warnings are `;`-joined text.
    pub fn to_csv_row(&self) -> String {
        let s_hat = match &self.s_hat {
            Some(set) => set
                .iter()
                .map(|l| (l + 1).to_string())
                .collect::<Vec<_>>()
                .join(";"),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.norm,
            if self.sqrt_scale { "norm" } else { "squared" },
            self.delta,
            self.alpha,
            self.t,
            self.v,
            self.q,
            self.q_half,
            self.reject,
            self.delta_alpha,
            self.ci_upper.0,
            self.ci_upper.1,
            self.ci_two_sided.0,
            self.ci_two_sided.1,
            self.k_hat,
            self.theta_hat,
            self.m_hat,
            self.norm_size,
            s_hat,
            self.degenerate,
            self.warnings.join(";").replace(',', " "),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate, DgpSpec, Model, Spatial};
    use crate::numeric::binomial_se;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Shared small table so tests don't re-simulate quantiles.
    fn table_source() -> QuantileSource {
        QuantileSource::Table(quantile_table(LimitDist::G, 20, &[0.95, 0.975], 4000, 7).unwrap())
    }

    fn config(delta: f64) -> TestConfig {
        TestConfig {
            quantiles: table_source(),
            ..TestConfig::new(delta)
        }
    }

    fn stepped_noise(n: usize, p: usize, s: usize, d: f64, sd: f64, seed: u64) -> TimeSeriesMatrix {
        let mut rng = crate::rng::stream_rng(seed, 0);
        let k0 = n / 2;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                (0..p)
                    .map(|l| {
                        let step = if l < s && j >= k0 { d } else { 0.0 };
                        step + sd * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            })
            .collect();
        TimeSeriesMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let x = stepped_noise(40, 3, 3, 2.0, 0.1, 1);
        for cfg in [
            TestConfig {
                delta: -1.0,
                ..config(0.0)
            },
            TestConfig {
                delta: f64::NAN,
                ..config(0.0)
            },
            TestConfig {
                alpha: 0.0,
                ..config(1.0)
            },
            TestConfig {
                alpha: 1.0,
                ..config(1.0)
            },
        ] {
            assert!(test_dense(&x, &cfg).is_err());
        }
    }

    #[test]
    fn clear_dense_step_is_rejected() {
        // Per-coordinate step d = 2 in every coordinate: ‖δ‖²₂,₂ = 4 ≫ 1,
        // noise is tiny, so V shrinks and the test must fire.
        let x = stepped_noise(60, 3, 3, 2.0, 0.01, 3);
        let res = test_dense(&x, &config(1.0)).unwrap();
        assert!(res.reject);
        assert!(!res.degenerate);
        assert_eq!(res.norm_size, 3);
        assert!(res.k_hat.abs_diff(30) <= 1, "k_hat = {}", res.k_hat);
        assert!(
            (res.delta_alpha - 4.0).abs() < 0.5,
            "delta_alpha = {}",
            res.delta_alpha
        );
        // An absurd threshold turns the same evidence into a retain.
        let res_inf = test_dense(&x, &config(1e12)).unwrap();
        assert!(!res_inf.reject);
        assert!(!test_dense(&x, &config(f64::INFINITY)).unwrap().reject);
    }

    #[test]
    fn delta_alpha_is_the_rejection_boundary() {
        let x = stepped_noise(80, 4, 4, 1.5, 0.3, 11);
        let base = config(1.0);
        let reference = test_dense(&x, &base).unwrap();
        for delta in [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 2.25, 3.0, 5.0] {
            let res = test_dense(
                &x,
                &TestConfig {
                    delta,
                    ..base.clone()
                },
            )
            .unwrap();
            assert_eq!(
                res.reject,
                delta < reference.delta_alpha,
                "Δ = {delta} vs Δ_α = {}",
                reference.delta_alpha
            );
            // CI/test duality: rejection ⟺ Δ below the dual lower bound.
            assert_eq!(res.reject, delta < res.t - res.q * res.v);
        }
        // Monotonicity is implied: the rejection region is (−∞, Δ_α).
    }

    #[test]
    fn rejection_is_scale_consistent_with_fixed_m() {
        let x = stepped_noise(70, 4, 2, 1.2, 0.4, 5);
        let scaled =
            TimeSeriesMatrix::from_flat(70, 4, x.values().iter().map(|v| 4.0 * v).collect())
                .unwrap();
        for delta in [0.1, 0.5, 1.0, 2.0] {
            let cfg = TestConfig {
                m: Some(1),
                ..config(delta)
            };
            let cfg_scaled = TestConfig {
                delta: 16.0 * delta,
                m: Some(1),
                ..config(delta)
            };
            let a = test_dense(&x, &cfg).unwrap();
            let b = test_dense(&scaled, &cfg_scaled).unwrap();
            assert_eq!(a.reject, b.reject, "dense at Δ = {delta}");
            assert_eq!(a.k_hat, b.k_hat);
            let a = test_sparse(&x, &cfg).unwrap();
            let b = test_sparse(&scaled, &cfg_scaled).unwrap();
            assert_eq!(a.reject, b.reject, "sparse at Δ = {delta}");
            assert_eq!(a.s_hat, b.s_hat);
        }
    }

    #[test]
    fn guard_violation_yields_structured_degenerate_result() {
        // A lone outlying first row puts k̂ = 1; with any m ≥ 0 the guard
        // k̂ > m+1 fails and the statistic is zero by definition.
        let mut rows = vec![vec![50.0, -50.0]];
        for j in 0..12 {
            rows.push(vec![j as f64 * 1e-3, -(j as f64) * 1e-3]);
        }
        let x = TimeSeriesMatrix::from_rows(&rows).unwrap();
        let res = test_dense(&x, &config(1.0)).unwrap();
        assert_eq!(res.k_hat, 1);
        assert!(res.degenerate);
        assert!(!res.reject);
        assert_eq!((res.t, res.v), (0.0, 0.0));
        assert_eq!(res.delta_alpha, 0.0);
        assert!(res.warnings.iter().any(|w| w.contains("degenerate split")));
    }

    #[test]
    fn empty_support_retains_the_null_with_a_warning() {
        // κ so large that no coordinate can pass the threshold.
        let x = stepped_noise(60, 5, 2, 1.0, 0.5, 9);
        let cfg = TestConfig {
            kappa: 50.0,
            ..config(0.5)
        };
        let res = test_sparse(&x, &cfg).unwrap();
        assert!(!res.reject);
        assert_eq!(res.delta_alpha, 0.0);
        assert_eq!(res.s_hat.as_deref(), Some(&[][..]));
        assert_eq!(res.norm_size, 0);
        assert!(!res.degenerate);
        assert!(res.warnings.iter().any(|w| w.contains("empty")));
    }

    #[test]
    fn sparse_test_beats_dense_on_sparse_signal() {
        // s/p = 1/4 with per-coordinate shift √2.5: the sparsity-adjusted
        // norm (2.5) exceeds Δ = 2 while the dense norm (0.625) is deep in
        // the null, so the adaptive test must dominate in paired runs.
        let reps = 40;
        let mut sparse_hits = 0;
        let mut dense_hits = 0;
        for r in 0..reps {
            let spec = DgpSpec {
                model: Model::Ind,
                spatial: Spatial::Diagonal,
                n: 150,
                p: 40,
                theta0: 0.5,
                mu: 10.0,
                s: 10,
                signal: 2.5,
                seed: crate::rng::derive_seed(31, r),
            };
            let x = simulate(&spec).unwrap();
            let cfg = config(2.0);
            if test_sparse(&x, &cfg).unwrap().reject {
                sparse_hits += 1;
            }
            if test_dense(&x, &cfg).unwrap().reject {
                dense_hits += 1;
            }
        }
        assert!(
            sparse_hits >= dense_hits + reps / 4,
            "sparse {sparse_hits}/{reps} vs dense {dense_hits}/{reps}"
        );
    }

    #[test]
    fn all_noise_sparse_rejections_stay_below_level() {
        let reps = 60usize;
        let mut hits = 0;
        for r in 0..reps as u64 {
            let spec = DgpSpec {
                model: Model::Ind,
                spatial: Spatial::Diagonal,
                n: 100,
                p: 20,
                theta0: 0.5,
                mu: 10.0,
                s: 20,
                signal: 0.0,
                seed: crate::rng::derive_seed(77, r),
            };
            let x = simulate(&spec).unwrap();
            if test_sparse(&x, &config(2.0)).unwrap().reject {
                hits += 1;
            }
        }
        let rate = hits as f64 / reps as f64;
        assert!(
            rate <= 0.05 + 3.0 * binomial_se(0.05, reps),
            "noise rejection rate {rate}"
        );
    }

    #[test]
    fn sqrt_scale_report_takes_element_wise_roots() {
        let x = stepped_noise(60, 3, 3, 2.0, 0.01, 3);
        let mut res = test_dense(&x, &config(1.0)).unwrap();
        res.delta_alpha = 4.0;
        res.ci_upper = (0.0, 9.0);
        res.ci_two_sided = (1.0, 4.0);
        let rooted = report_sqrt_scale(&res);
        assert_eq!(rooted.delta_alpha, 2.0);
        assert_eq!(rooted.ci_upper, (0.0, 3.0));
        assert_eq!(rooted.ci_two_sided, (1.0, 2.0));
        assert!(rooted.sqrt_scale);
        assert_eq!(rooted.t, res.t); // statistics stay on the squared scale
    }

    #[test]
    fn reports_serialize_all_fields() {
        let x = stepped_noise(60, 4, 2, 1.5, 0.2, 13);
        let res = test_sparse(&x, &config(1.0)).unwrap();
        let kv = res.to_kv_string();
        for key in [
            "norm=sparsity_adjusted",
            "scale=squared",
            "T=",
            "V=",
            "reject=",
            "delta_alpha=",
            "k_hat=",
            "m_hat=",
            "s_hat=",
        ] {
            assert!(kv.contains(key), "missing {key} in:\n{kv}");
        }
        let row = res.to_csv_row();
        assert_eq!(
            row.split(',').count(),
            TestResult::csv_header().split(',').count()
        );
    }

    #[test]
    fn mismatched_table_is_rejected() {
        let x = stepped_noise(40, 3, 3, 2.0, 0.1, 1);
        let wrong_k = QuantileSource::Table(
            quantile_table(LimitDist::G, 10, &[0.95, 0.975], 2000, 7).unwrap(),
        );
        let cfg = TestConfig {
            quantiles: wrong_k,
            ..TestConfig::new(1.0)
        };
        assert!(matches!(test_dense(&x, &cfg), Err(Error::TableMismatch(_))));
        let missing_level =
            QuantileSource::Table(quantile_table(LimitDist::G, 20, &[0.9], 2000, 7).unwrap());
        let cfg = TestConfig {
            quantiles: missing_level,
            ..TestConfig::new(1.0)
        };
        assert!(test_dense(&x, &cfg).is_err());
    }
}
