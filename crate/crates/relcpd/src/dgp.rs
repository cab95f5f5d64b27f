//! Simulation designs: temporally independent, moving-average, and
//! autoregressive panels with diagonal or Toeplitz innovation covariance,
//! a mean shift of configurable sparsity, and fully reproducible seeding.
//!
//! The observation model is
//!
//! ```text
//! X_j = μ·1 + η_j + δ·1{j > k₀},   k₀ = ⌊n·θ₀⌋,
//! δ = (√signal, …, √signal, 0, …, 0)  with s leading nonzero entries,
//! ```
//!
//! where η follows the chosen `Model` driven by innovations ε̃ ~ N(0, Σ).
//! Σ is `diag(0.5)` or the Toeplitz matrix `0.5·0.9^{|i−j|}`; the starred
//! MA*/AR* variants always use diagonal innovations regardless of the
//! `spatial` setting — that is their definition.
//!
//! Each time step draws from its own RNG stream derived from the spec seed,
//! so output is bit-identical however replications are scheduled.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tsdata::TimeSeriesMatrix;

/// Moving-average coefficients (c₁, …, c₆); MA(q) uses the first q.
pub const MA_COEFFS: [f64; 6] = [0.5, 0.25, 0.2, 0.1, 0.05, 0.025];

/// AR burn-in: steps simulated from η = 0 before the recorded sample. At
/// |c| ≤ 0.6 the mixing time is a few steps, so 500 removes any trace of
/// the arbitrary start.
pub const AR_BURN_IN: usize = 500;

/// Innovation variance on the diagonal (and Toeplitz diagonal).
const INNOV_VAR: f64 = 0.5;

/// Toeplitz geometric decay rate.
const TOEPLITZ_RATE: f64 = 0.9;

// ---------------------------------------------------------------------------
// Model and spatial structure
// ---------------------------------------------------------------------------

/// Temporal dependence of the noise η.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    /// η_j = ε̃_j, independent over time.
    Ind,
    /// η_j = ε̃_j + Σ_{k≤q} c_k ε̃_{j−k}; `starred` forces diagonal ε̃.
    Ma { q: usize, starred: bool },
    /// η_j = c·η_{j−1} + ε̃_j; `starred` forces diagonal ε̃.
    Ar { c: f64, starred: bool },
}

impl Model {
    /// Parse a compact token: `ind`, `ma<q>`, `ar<c>`, with an optional
    /// trailing `*` for the diagonal-innovation variants (`ma6*`).
    pub fn parse(token: &str) -> Result<Model> {
        let t = token.trim().to_ascii_lowercase();
        let (body, starred) = match t.strip_suffix('*') {
            Some(b) => (b, true),
            None => (t.as_str(), false),
        };
        let model = if body == "ind" {
            if starred {
                return Err(Error::InvalidArgument("ind has no starred variant".into()));
            }
            Model::Ind
        } else if let Some(qs) = body.strip_prefix("ma") {
            let q = qs.parse().map_err(|_| bad_model(token))?;
            Model::Ma { q, starred }
        } else if let Some(cs) = body.strip_prefix("ar") {
            let c = cs.parse().map_err(|_| bad_model(token))?;
            Model::Ar { c, starred }
        } else {
            return Err(bad_model(token));
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Model::Ind => Ok(()),
            Model::Ma { q, .. } if !(1..=MA_COEFFS.len()).contains(&q) => {
                Err(Error::InvalidArgument(format!(
                    "MA order must be in 1..={}, got {q}",
                    MA_COEFFS.len()
                )))
            }
            Model::Ar { c, .. } if !(c.is_finite() && c != 0.0 && c.abs() < 1.0) => Err(
                Error::InvalidArgument(format!("AR coefficient needs 0 < |c| < 1, got {c}")),
            ),
            _ => Ok(()),
        }
    }

    fn forces_diagonal(&self) -> bool {
        matches!(
            self,
            Model::Ma { starred: true, .. } | Model::Ar { starred: true, .. }
        )
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Model::Ind => write!(f, "ind"),
            Model::Ma { q, starred } => write!(f, "ma{q}{}", if starred { "*" } else { "" }),
            Model::Ar { c, starred } => write!(f, "ar{c}{}", if starred { "*" } else { "" }),
        }
    }
}

fn bad_model(token: &str) -> Error {
    Error::InvalidArgument(format!(
        "unknown model {token:?}; expected ind, ma<q>, ar<c>, optionally starred like ma6*"
    ))
}

/// Cross-sectional covariance of the innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spatial {
    /// Σ = diag(0.5).
    Diagonal,
    /// Σ_ij = 0.5·0.9^{|i−j|}.
    Toeplitz,
}

impl Spatial {
    /// Parse `diagonal` or `toeplitz` (case-insensitive).
    pub fn parse(token: &str) -> Result<Spatial> {
        match token.trim().to_ascii_lowercase().as_str() {
            "diagonal" => Ok(Spatial::Diagonal),
            "toeplitz" => Ok(Spatial::Toeplitz),
            other => Err(Error::InvalidArgument(format!(
                "unknown spatial structure {other:?}; expected diagonal or toeplitz"
            ))),
        }
    }
}

impl fmt::Display for Spatial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spatial::Diagonal => write!(f, "diagonal"),
            Spatial::Toeplitz => write!(f, "toeplitz"),
        }
    }
}

// ---------------------------------------------------------------------------
// Spec
// ---------------------------------------------------------------------------

/// A complete, reproducible simulation design.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub model: Model,
    pub spatial: Spatial,
    /// Time length n.
    pub n: usize,
    /// Dimension p.
    pub p: usize,
    /// Change fraction θ₀ ∈ (0,1); the change point is k₀ = ⌊n·θ₀⌋.
    pub theta0: f64,
    /// Common mean added to every coordinate.
    pub mu: f64,
    /// Number of shifted coordinates, 1 ≤ s ≤ p.
    pub s: usize,
    /// Target ‖δ‖²₂,₀, i.e. δ₁² = … = δ_s² = signal.
    pub signal: f64,
    pub seed: u64,
}

impl DgpSpec {
    /// Check every field; `simulate` calls this first.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.p == 0 {
            return Err(Error::InvalidArgument("p must be ≥ 1".into()));
        }
        if !(self.s >= 1 && self.s <= self.p) {
            return Err(Error::InvalidArgument(format!(
                "s = {} must lie in 1..={}",
                self.s, self.p
            )));
        }
        if !(self.signal.is_finite() && self.signal >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "signal must be finite and ≥ 0, got {}",
                self.signal
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidArgument("mu must be finite".into()));
        }
        if !(self.theta0.is_finite() && self.theta0 > 0.0 && self.theta0 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "theta0 must lie in (0,1), got {}",
                self.theta0
            )));
        }
        let k0 = self.k0();
        if !(1..self.n).contains(&k0) {
            return Err(Error::InvalidArgument(format!(
                "change point ⌊n·θ₀⌋ = {k0} must lie in 1..={}",
                self.n.saturating_sub(1)
            )));
        }
        Ok(())
    }

    /// k₀ = ⌊n·θ₀⌋, with the same nudge used for λ-grid indices so that
    /// exactly representable products like 200·0.6 do not round down.
    pub fn k0(&self) -> usize {
        (self.n as f64 * self.theta0 + 1e-9).floor() as usize
    }

    /// The shift vector δ.
    pub fn delta(&self) -> Vec<f64> {
        let d = self.signal.sqrt();
        (0..self.p)
            .map(|l| if l < self.s { d } else { 0.0 })
            .collect()
    }

    /// Canonical flat `key=value` serialization (one key per line).
    pub fn to_config_string(&self) -> String {
        format!(
            "model={}\nspatial={}\nn={}\np={}\ntheta0={}\nmu={}\ns={}\nsignal={}\nseed={}\n",
            self.model,
            self.spatial,
            self.n,
            self.p,
            self.theta0,
            self.mu,
            self.s,
            self.signal,
            self.seed
        )
    }

    /// Build a spec from parsed `key=value` pairs. Required: `n` and `p`.
    /// Defaults: model `ind`, spatial `diagonal`, θ₀ = 0.6, μ = 10, s = p,
    /// signal = 0, seed = 0. Unknown keys are the caller's concern — this
    /// reads only its own keys.
    pub fn from_pairs<'a>(mut get: impl FnMut(&str) -> Option<&'a str>) -> Result<DgpSpec> {
        fn parse<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
            raw.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("config key {key} has unparseable value {raw:?}"))
            })
        }
        let n: usize = match get("n") {
            Some(v) => parse("n", v)?,
            None => return Err(Error::InvalidArgument("config is missing key n".into())),
        };
        let p: usize = match get("p") {
            Some(v) => parse("p", v)?,
            None => return Err(Error::InvalidArgument("config is missing key p".into())),
        };
        let spec = DgpSpec {
            model: match get("model") {
                Some(v) => Model::parse(v)?,
                None => Model::Ind,
            },
            spatial: match get("spatial") {
                Some(v) => Spatial::parse(v)?,
                None => Spatial::Diagonal,
            },
            n,
            p,
            theta0: match get("theta0") {
                Some(v) => parse("theta0", v)?,
                None => 0.6,
            },
            mu: match get("mu") {
                Some(v) => parse("mu", v)?,
                None => 10.0,
            },
            s: match get("s") {
                Some(v) => parse("s", v)?,
                None => p,
            },
            signal: match get("signal") {
                Some(v) => parse("signal", v)?,
                None => 0.0,
            },
            seed: match get("seed") {
                Some(v) => parse("seed", v)?,
                None => 0,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The config keys `from_pairs` consumes.
    pub const CONFIG_KEYS: [&'static str; 9] = [
        "model", "spatial", "n", "p", "theta0", "mu", "s", "signal", "seed",
    ];
}

// ---------------------------------------------------------------------------
// Innovation sampling
// ---------------------------------------------------------------------------

/// Hand-rolled lower-triangular Cholesky factor of a dense SPD matrix,
/// stored row-major with zeros above the diagonal.
fn cholesky(a: &[f64], p: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Degenerate(format!(
                        "covariance is not positive definite (pivot {sum} at {i})"
                    )));
                }
                l[i * p + i] = sum.sqrt();
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    Ok(l)
}

fn toeplitz_cov(p: usize) -> Vec<f64> {
    let mut a = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            a[i * p + j] = INNOV_VAR * TOEPLITZ_RATE.powi((i as i32 - j as i32).abs());
        }
    }
    a
}

enum InnovationSampler {
    Diagonal { sd: f64 },
    Factor { l: Vec<f64>, p: usize },
}

impl InnovationSampler {
    fn new(spec: &DgpSpec) -> Result<Self> {
        if spec.model.forces_diagonal() || spec.spatial == Spatial::Diagonal {
            Ok(InnovationSampler::Diagonal {
                sd: INNOV_VAR.sqrt(),
            })
        } else {
            Ok(InnovationSampler::Factor {
                l: cholesky(&toeplitz_cov(spec.p), spec.p)?,
                p: spec.p,
            })
        }
    }

    /// One innovation vector from the time step's own stream.
    fn draw(&self, seed: u64, stream: u64, out: &mut [f64]) {
        let mut rng: ChaCha12Rng = stream_rng(seed, stream);
        match self {
            InnovationSampler::Diagonal { sd } => {
                for v in out.iter_mut() {
                    *v = sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            InnovationSampler::Factor { l, p } => {
                let z: Vec<f64> = (0..*p)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                for i in 0..*p {
                    let mut acc = 0.0;
                    for k in 0..=i {
                        acc += l[i * p + k] * z[k];
                    }
                    out[i] = acc;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Simulate one panel under `spec`. Deterministic given the spec, including
/// its seed; every time step (burn-in and pre-sample included) draws from
/// its own derived stream.
pub fn simulate(spec: &DgpSpec) -> Result<TimeSeriesMatrix> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let sampler = InnovationSampler::new(spec)?;
    let k0 = spec.k0();
    let delta = spec.delta();
    let mut values = vec![0.0; n * p];
    let mut eps = vec![0.0; p];

    match spec.model {
        Model::Ind => {
            for j in 0..n {
                sampler.draw(spec.seed, j as u64, &mut eps);
                emit(&mut values[j * p..(j + 1) * p], spec, &eps, &delta, j >= k0);
            }
        }
        Model::Ma { q, .. } => {
            // Ring buffer of the q most recent innovations; pre-sample
            // values occupy streams 0..q, the recorded sample follows.
            let mut hist = vec![vec![0.0; p]; q];
            for (k, h) in hist.iter_mut().enumerate() {
                sampler.draw(spec.seed, k as u64, h);
            }
            let mut eta = vec![0.0; p];
            for j in 0..n {
                sampler.draw(spec.seed, (q + j) as u64, &mut eps);
                for l in 0..p {
                    let mut v = eps[l];
                    for k in 1..=q {
                        // hist holds ε_{j−1}, …, ε_{j−q} in ring order.
                        v += MA_COEFFS[k - 1] * hist[(j + q - k) % q][l];
                    }
                    eta[l] = v;
                }
                hist[j % q].copy_from_slice(&eps);
                emit(&mut values[j * p..(j + 1) * p], spec, &eta, &delta, j >= k0);
            }
        }
        Model::Ar { c, .. } => {
            let mut eta = vec![0.0; p];
            for b in 0..AR_BURN_IN {
                sampler.draw(spec.seed, b as u64, &mut eps);
                for l in 0..p {
                    eta[l] = c * eta[l] + eps[l];
                }
            }
            for j in 0..n {
                sampler.draw(spec.seed, (AR_BURN_IN + j) as u64, &mut eps);
                for l in 0..p {
                    eta[l] = c * eta[l] + eps[l];
                }
                emit(&mut values[j * p..(j + 1) * p], spec, &eta, &delta, j >= k0);
            }
        }
    }
    TimeSeriesMatrix::from_flat(n, p, values)
}

#[inline]
fn emit(row: &mut [f64], spec: &DgpSpec, eta: &[f64], delta: &[f64], shifted: bool) {
    for (l, r) in row.iter_mut().enumerate() {
        *r = spec.mu + eta[l] + if shifted { delta[l] } else { 0.0 };
    }
}
