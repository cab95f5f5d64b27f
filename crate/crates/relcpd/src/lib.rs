//! Relevant mean change-point tests for high-dimensional time series.
//!
//! Given an n × p panel that may shift its mean by δ at one unknown time,
//! the library tests the *relevant* hypotheses H₀: ‖δ‖² ≤ Δ against
//! H₁: ‖δ‖² > Δ — "is the change big enough to matter?" rather than "is
//! there any change at all?" — for a user-chosen threshold Δ. Two norms are
//! supported: the dense ‖δ‖²₂,₂ (average of all p squared coordinates) and
//! the sparsity-adjusted ‖δ‖²₂,₀ (average over the estimated support Ŝ).
//! Inference is pivotal: a trimmed sequential U-statistic is paired with a
//! self-normalizer so that no long-run variance is ever estimated, and the
//! decision rule `T > Δ + q·V` uses Monte Carlo quantiles of the parameter-
//! free limit distribution.
//!
//! The pieces, in data-flow order:
//!
//! * [`tsdata`] — the observation matrix, CSV ingest and preprocessing.
//! * [`cpoint`] — the change-location estimator k̂ = ⌊nθ̂⌋.
//! * [`trim`] — the data-adaptive trimming lag m̂ from the ΔF̃ curves.
//! * [`ustat`] — factorized O(n(p + K)) sequential U-statistics, with
//!   literal-loop oracles kept public for verification.
//! * [`selfnorm`] — the discrete measure ν_K and the normalizer V.
//! * [`setestim`] — the support estimator Ŝ with its per-coordinate
//!   thresholds.
//! * [`limitdist`] — simulation and quantiles of the limits 𝔾, ℍ and 𝕍.
//! * [`relevance`] — [`relevance::test_dense`] / [`relevance::test_sparse`]
//!   tie everything into one decision, with confidence intervals and the
//!   minimal rejected threshold Δ_α.
//! * [`dgp`], [`experiments`] — simulation designs and replication
//!   harnesses for the sampling studies.
//! * [`cli`] — the `relcpd` command-line front end; [`rng`], [`numeric`],
//!   [`plot`] are shared utilities.
//!
//! Every Monte Carlo path draws from per-replication seed streams, so all
//! results are reproducible for a fixed seed and independent of thread
//! count.
//!
//! ```
//! use relcpd::dgp::{simulate, DgpSpec, Model, Spatial};
//! use relcpd::relevance::{test_dense, TestConfig};
//!
//! // A dense shift of size 2 at θ₀ = 0.6 in a 200 × 20 panel.
//! let x = simulate(&DgpSpec {
//!     model: Model::Ind,
//!     spatial: Spatial::Diagonal,
//!     n: 200,
//!     p: 20,
//!     theta0: 0.6,
//!     mu: 10.0,
//!     s: 20,
//!     signal: 2.0,
//!     seed: 1,
//! })
//! .unwrap();
//!
//! // Is the squared shift relevantly larger than Δ = 0.5?
//! let mut config = TestConfig::new(0.5);
//! config.quantiles = relcpd::relevance::QuantileSource::Mc {
//!     reps: 20_000,
//!     seed: 0,
//!     cache_dir: None,
//! };
//! let result = test_dense(&x, &config).unwrap();
//! assert!(result.reject);
//! assert!((result.theta_hat - 0.6).abs() < 0.05);
//! ```

pub mod cli;
pub mod cpoint;
pub mod dgp;
pub mod error;
pub mod experiments;
pub mod limitdist;
pub mod numeric;
pub mod plot;
pub mod relevance;
pub mod rng;
pub mod selfnorm;
pub mod setestim;
pub mod trim;
pub mod tsdata;
pub mod ustat;

pub use error::{Error, Result};
