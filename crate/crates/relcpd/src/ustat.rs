//! Trimmed quadruple-sum U-statistics.
//!
//! The central object is the sequential statistic
//!
//! ```text
//! T_{n,A}(k, m; λ) = [N_m(k) N_m(n−k) |A|]⁻¹
//!     · Σ_{i₁,i₂ ≤ ⌊λk⌋, |i₁−i₂|>m}  Σ_{k < j₁,j₂ ≤ k+⌊λ(n−k)⌋, |j₁−j₂|>m}
//!         Σ_{ℓ∈A} (X_{i₁ℓ} − X_{j₁ℓ}) (X_{i₂ℓ} − X_{j₂ℓ})
//! ```
//!
//! where `N_m(k) = (k−m)(k−m−1)` for `k > m+1` (else 0) counts ordered index
//! pairs more than `m` apart, and the trimming lag `m` suppresses
//! serial-dependence bias. At λ = 1 the statistic estimates the squared mean
//! change ‖δ‖²/|A| restricted to the coordinates in `A`.
//!
//! ## Evaluation strategy
//!
//! The definition costs O(n⁴·p); [`useq`] factorizes each coordinate's
//! quadruple sum into block sums computable from prefix sums in O(n) and
//! sweeps the λ-grid in O(1) per point, for O(n·p + |grid|·p) total.
//! Expanding the product splits the sum over a left block `I = {1..a}` and a
//! right block `J = {k+1..k+b}` into
//!
//! ```text
//! Q = N_m(b)·S_I + N_m(a)·S_J − 2·W_I·W_J
//! ```
//!
//! with `S_B = Σ_{u,v∈B, |u−v|>m} x_u x_v` and
//! `W_B = Σ_{u∈B} w_{|B|}(u)·x_u`, where the weight
//! `w_L(u) = max(L−m−u, 0) + max(u−m−1, 0)` counts the partners of `u`
//! inside a block of length `L`. Both reduce to plain and index-weighted
//! prefix sums. [`useq_naive`] keeps the literal four-nested-loop definition
//! as a testing oracle.
//!
//! Columns are centered by their first entry before accumulation: the
//! statistic depends on the data only through within-column differences, so
//! this is mathematically a no-op, but it makes the evaluator exactly
//! location-invariant and keeps a large common mean from swamping the
//! signal digits in the block sums.

use crate::error::{Error, Result};
use crate::numeric::{kahan_sum_sorted, Kahan};
use crate::tsdata::TimeSeriesMatrix;

// ---------------------------------------------------------------------------
// Combinatorial normalizers
// ---------------------------------------------------------------------------

/// Number of ordered index pairs (i₁, i₂) with 1 ≤ i₁, i₂ ≤ k and
/// |i₁ − i₂| > m: `(k−m)(k−m−1)` when `k > m+1`, else 0.
#[inline]
pub fn pair_count(k: usize, m: usize) -> u64 {
    if k > m + 1 {
        ((k - m) as u64) * ((k - m - 1) as u64)
    } else {
        0
    }
}

/// The λ-grid index ⌊λ·len⌋, robust to the representation error of λ.
///
/// Grid atoms are rationals j/K whose product with `len` may land a few ulps
/// below an exact integer (e.g. `0.7 * 10.0 == 6.999…` in `f64`); the small
/// positive nudge restores the mathematical floor for every `len` far below
/// 1/nudge while leaving genuinely fractional products untouched.
#[inline]
pub(crate) fn lambda_index(lambda: f64, len: usize) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let raw = (lambda * len as f64 + 1e-9).floor();
    if raw < 0.0 {
        0
    } else {
        (raw as usize).min(len)
    }
}

/// The centering factor Λ_n(λ) = [N_m(⌊λk⌋)/N_m(k)]·[N_m(⌊λ(n−k)⌋)/N_m(n−k)].
///
/// Errors when either full-sample normalizer vanishes (the guard region
/// `k ≤ m+1` or `k+m ≥ n−1`), where the factor is undefined.
pub fn lambda_factor(lambda: f64, k: usize, n: usize, m: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "λ must lie in [0, 1], got {lambda}"
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "split k must satisfy 1 ≤ k ≤ n−1, got k = {k}, n = {n}"
        )));
    }
    let d1 = pair_count(k, m);
    let d2 = pair_count(n - k, m);
    if d1 == 0 || d2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "Λ_n undefined: zero pair count at k = {k}, n−k = {}, m = {m}",
            n - k
        )));
    }
    let r1 = pair_count(lambda_index(lambda, k), m) as f64 / d1 as f64;
    let r2 = pair_count(lambda_index(lambda, n - k), m) as f64 / d2 as f64;
    Ok(r1 * r2)
}

// ---------------------------------------------------------------------------
// Sequential statistic
// ---------------------------------------------------------------------------

/// Values of the sequential statistic T_{n,A}(k, m; λ) on a λ-grid,
/// together with the centering factors Λ_n(λ).
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialUStat {
    /// Split point the statistic was evaluated at (usually k̂).
    pub k: usize,
    /// Trimming lag.
    pub m: usize,
    /// Strictly increasing λ values in (0, 1].
    pub grid: Vec<f64>,
    /// T_{n,A}(k, m; λ) per grid point.
    pub t_values: Vec<f64>,
    /// Λ_n(λ) per grid point.
    pub lambda_values: Vec<f64>,
    /// T_{n,A}(k, m; 1), the full-sample statistic.
    pub t_full: f64,
    /// |A|, the divisor used for the coordinate average.
    pub norm_size: usize,
}

/// Validate a λ-grid: nonempty, strictly increasing, all atoms in (0, 1].
fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("λ-grid must be nonempty".into()));
    }
    for (i, &l) in grid.iter().enumerate() {
        if !(l > 0.0 && l <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "λ-grid atom {l} at position {i} is outside (0, 1]"
            )));
        }
        if i > 0 && grid[i - 1] >= l {
            return Err(Error::InvalidArgument(format!(
                "λ-grid must be strictly increasing, violated at position {i}"
            )));
        }
    }
    Ok(())
}

/// Validate a coordinate index set: nonempty, in range, no duplicates.
fn validate_coords(a_set: &[usize], p: usize) -> Result<()> {
    if a_set.is_empty() {
        return Err(Error::InvalidArgument(
            "coordinate set A must be nonempty".into(),
        ));
    }
    let mut seen = vec![false; p];
    for &l in a_set {
        if l >= p {
            return Err(Error::InvalidArgument(format!(
                "coordinate index {l} out of range for p = {p}"
            )));
        }
        if seen[l] {
            return Err(Error::InvalidArgument(format!(
                "coordinate index {l} appears twice in A"
            )));
        }
        seen[l] = true;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Factorized evaluator
// ---------------------------------------------------------------------------

/// Prefix sums over one block of a single (centered) column, from which the
/// far-pair sum S and the weighted sum W are recovered in O(1) per query.
struct BlockPrefix {
    m: usize,
    /// `p_sum[t] = Σ_{u ≤ t} v_u` (positions are 1-based; index 0 holds 0).
    p_sum: Vec<f64>,
    /// `iw_sum[t] = Σ_{u ≤ t} u·v_u`.
    iw_sum: Vec<f64>,
    /// `close[t] = Σ_{u,v ≤ t, |u−v| ≤ m} v_u v_v`.
    close: Vec<f64>,
}

impl BlockPrefix {
    fn new(vals: &[f64], m: usize) -> Self {
        let len = vals.len();
        let mut p_sum = vec![0.0; len + 1];
        let mut iw_sum = vec![0.0; len + 1];
        let mut close = vec![0.0; len + 1];
        let (mut kp, mut kw, mut kc) = (Kahan::new(), Kahan::new(), Kahan::new());
        for t in 1..=len {
            let v = vals[t - 1];
            kp.add(v);
            kw.add(t as f64 * v);
            let mut inc = v * v;
            for h in 1..=m.min(t - 1) {
                inc += 2.0 * vals[t - 1 - h] * v;
            }
            kc.add(inc);
            p_sum[t] = kp.total();
            iw_sum[t] = kw.total();
            close[t] = kc.total();
        }
        BlockPrefix {
            m,
            p_sum,
            iw_sum,
            close,
        }
    }

    /// `S(t) = Σ_{u,v ≤ t, |u−v| > m} v_u v_v`; identically 0 for t ≤ m+1
    /// (no admissible pairs), returned exactly.
    #[inline]
    fn far_pair_sum(&self, t: usize) -> f64 {
        if t <= self.m + 1 {
            return 0.0;
        }
        self.p_sum[t] * self.p_sum[t] - self.close[t]
    }

    /// `W(t) = Σ_{u ≤ t} [max(t−m−u, 0) + max(u−m−1, 0)]·v_u`, via the two
    /// closed forms `(t−m)·P(c) − R(c)` (c = t−m−1) and
    /// `(R(t) − R(m+1)) − (m+1)·(P(t) − P(m+1))`.
    #[inline]
    fn weighted_sum(&self, t: usize) -> f64 {
        let m = self.m;
        if t < m + 2 {
            return 0.0;
        }
        let c = t - m - 1;
        let left = (t - m) as f64 * self.p_sum[c] - self.iw_sum[c];
        let right = (self.iw_sum[t] - self.iw_sum[m + 1])
            - (m + 1) as f64 * (self.p_sum[t] - self.p_sum[m + 1]);
        left + right
    }
}

/// Per-coordinate quadruple sums for one (X, k, m, grid) evaluation.
///
/// Holding the coordinate-level pieces lets the dense statistic, the
/// sparse statistic on an estimated set, and the per-coordinate estimators
/// δ̂²_ℓ(λ) all assemble from a single O(n·p) pass.
pub(crate) struct SeqComponents {
    pub(crate) k: usize,
    pub(crate) m: usize,
    pub(crate) grid: Vec<f64>,
    pub(crate) lambda_values: Vec<f64>,
    /// Unnormalized quadruple sums, coordinate-major: entry `ℓ·G + g` is
    /// coordinate ℓ at grid point g (G = grid length).
    q: Vec<f64>,
    /// Unnormalized quadruple sums at λ = 1, one per coordinate.
    q_full: Vec<f64>,
    /// N_m(k)·N_m(n−k).
    norm: f64,
    /// True when k ≤ m+1 or k+m ≥ n−1; every statistic is 0 by definition.
    pub(crate) guard: bool,
}

/// One pass over the data producing every coordinate's quadruple sums on the
/// grid and at λ = 1.
pub(crate) fn compute_components(
    x: &TimeSeriesMatrix,
    k: usize,
    m: usize,
    grid: &[f64],
) -> Result<SeqComponents> {
    x.require_min_rows(4, "the sequential U-statistic")?;
    let (n, p) = (x.n(), x.p());
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "split k must satisfy 1 ≤ k ≤ n−1, got k = {k}, n = {n}"
        )));
    }
    validate_grid(grid)?;

    let pc_k = pair_count(k, m);
    let pc_nk = pair_count(n - k, m);
    let guard = pc_k == 0 || pc_nk == 0;
    let g_len = grid.len();

    let a_idx: Vec<usize> = grid.iter().map(|&l| lambda_index(l, k)).collect();
    let b_idx: Vec<usize> = grid.iter().map(|&l| lambda_index(l, n - k)).collect();
    let lambda_values: Vec<f64> = if guard {
        vec![0.0; g_len]
    } else {
        a_idx
            .iter()
            .zip(&b_idx)
            .map(|(&a, &b)| {
                (pair_count(a, m) as f64 / pc_k as f64) * (pair_count(b, m) as f64 / pc_nk as f64)
            })
            .collect()
    };

    let mut q = vec![0.0; p * g_len];
    let mut q_full = vec![0.0; p];
    if !guard {
        let mut col = vec![0.0; n];
        for l in 0..p {
            let base = x.get(0, l);
            for (j, c) in col.iter_mut().enumerate() {
                *c = x.get(j, l) - base;
            }
            let left = BlockPrefix::new(&col[..k], m);
            let right = BlockPrefix::new(&col[k..], m);
            for g in 0..g_len {
                let (a, b) = (a_idx[g], b_idx[g]);
                q[l * g_len + g] = pair_count(b, m) as f64 * left.far_pair_sum(a)
                    + pair_count(a, m) as f64 * right.far_pair_sum(b)
                    - 2.0 * left.weighted_sum(a) * right.weighted_sum(b);
            }
            q_full[l] = pc_nk as f64 * left.far_pair_sum(k)
                + pc_k as f64 * right.far_pair_sum(n - k)
                - 2.0 * left.weighted_sum(k) * right.weighted_sum(n - k);
        }
    }

    Ok(SeqComponents {
        k,
        m,
        grid: grid.to_vec(),
        lambda_values,
        q,
        q_full,
        norm: pc_k as f64 * pc_nk as f64,
        guard,
    })
}

impl SeqComponents {
    /// Assemble T_{n,A} for a validated coordinate set.
    ///
    /// The per-coordinate addends are summed in sorted order, so any
    /// permutation of the columns (with A permuted accordingly) produces
    /// bit-identical statistics.
    pub(crate) fn t_seq(&self, a_set: &[usize]) -> SequentialUStat {
        let g_len = self.grid.len();
        let norm_size = a_set.len();
        let mut t_values = vec![0.0; g_len];
        let mut t_full = 0.0;
        if !self.guard {
            let div = self.norm * norm_size as f64;
            let mut addends = vec![0.0; norm_size];
            for (g, t) in t_values.iter_mut().enumerate() {
                for (slot, &l) in addends.iter_mut().zip(a_set) {
                    *slot = self.q[l * g_len + g];
                }
                *t = kahan_sum_sorted(&mut addends) / div;
            }
            for (slot, &l) in addends.iter_mut().zip(a_set) {
                *slot = self.q_full[l];
            }
            t_full = kahan_sum_sorted(&mut addends) / div;
        }
        SequentialUStat {
            k: self.k,
            m: self.m,
            grid: self.grid.clone(),
            t_values,
            lambda_values: self.lambda_values.clone(),
            t_full,
            norm_size,
        }
    }

    /// Per-coordinate sequence δ̂²_ℓ(λ) over the grid plus δ̂²_ℓ(1).
    pub(crate) fn coord_seq(&self, l: usize) -> (Vec<f64>, f64) {
        let g_len = self.grid.len();
        if self.guard {
            return (vec![0.0; g_len], 0.0);
        }
        let vals = self.q[l * g_len..(l + 1) * g_len]
            .iter()
            .map(|&v| v / self.norm)
            .collect();
        (vals, self.q_full[l] / self.norm)
    }
}

/// Sequential statistic T_{n,A}(k, m; λ) on a λ-grid (factorized evaluator).
///
/// `a_set` holds 0-based coordinate indices (a nonempty subset of `0..p`
/// without duplicates); `grid` must be strictly increasing inside (0, 1].
/// All values are 0 when `k ≤ m+1` or `k+m ≥ n−1` (the guard region), and a
/// single grid point whose left or right sub-block has no admissible index
/// pairs contributes a 0 as well.
pub fn useq(
    x: &TimeSeriesMatrix,
    a_set: &[usize],
    k: usize,
    m: usize,
    grid: &[f64],
) -> Result<SequentialUStat> {
    validate_coords(a_set, x.p())?;
    let comp = compute_components(x, k, m, grid)?;
    Ok(comp.t_seq(a_set))
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

/// Literal four-nested-loop evaluation of the definition. Testing oracle for
/// [`useq`]; O(n⁴·p), intended for n ≤ 50.
pub fn useq_naive(
    x: &TimeSeriesMatrix,
    a_set: &[usize],
    k: usize,
    m: usize,
    grid: &[f64],
) -> Result<SequentialUStat> {
    validate_coords(a_set, x.p())?;
    x.require_min_rows(4, "the sequential U-statistic")?;
    let n = x.n();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "split k must satisfy 1 ≤ k ≤ n−1, got k = {k}, n = {n}"
        )));
    }
    validate_grid(grid)?;

    let pc_k = pair_count(k, m);
    let pc_nk = pair_count(n - k, m);
    let guard = pc_k == 0 || pc_nk == 0;
    let g_len = grid.len();

    let lambda_values: Vec<f64> = if guard {
        vec![0.0; g_len]
    } else {
        grid.iter()
            .map(|&l| lambda_factor(l, k, n, m).expect("normalizers checked nonzero"))
            .collect()
    };

    // Quadruple sum over i₁,i₂ ∈ {1..a} and j₁,j₂ ∈ {k+1..k+b}, written with
    // the same 1-based indices as the definition.
    let quad = |a: usize, b: usize| -> f64 {
        let mut acc = Kahan::new();
        for i1 in 1..=a {
            for i2 in 1..=a {
                if i1.abs_diff(i2) <= m {
                    continue;
                }
                for j1 in k + 1..=k + b {
                    for j2 in k + 1..=k + b {
                        if j1.abs_diff(j2) <= m {
                            continue;
                        }
                        let mut inner = 0.0;
                        for &l in a_set {
                            inner += (x.get(i1 - 1, l) - x.get(j1 - 1, l))
                                * (x.get(i2 - 1, l) - x.get(j2 - 1, l));
                        }
                        acc.add(inner);
                    }
                }
            }
        }
        acc.total()
    };

    let (t_values, t_full) = if guard {
        (vec![0.0; g_len], 0.0)
    } else {
        let div = pc_k as f64 * pc_nk as f64 * a_set.len() as f64;
        let t_values = grid
            .iter()
            .map(|&l| quad(lambda_index(l, k), lambda_index(l, n - k)) / div)
            .collect();
        (t_values, quad(k, n - k) / div)
    };

    Ok(SequentialUStat {
        k,
        m,
        grid: grid.to_vec(),
        t_values,
        lambda_values,
        t_full,
        norm_size: a_set.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn matrix(rows: &[Vec<f64>]) -> TimeSeriesMatrix {
        TimeSeriesMatrix::from_rows(rows).unwrap()
    }

    /// Columns: a step of height `d` at split `k0` plus a deterministic
    /// dyadic perturbation so the data are not degenerate.
    fn step_matrix(n: usize, p: usize, k0: usize, d: f64) -> TimeSeriesMatrix {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                (0..p)
                    .map(|l| if j < k0 { 0.0 } else { d } + ((j * 7 + l * 3) % 5) as f64 * 0.25)
                    .collect()
            })
            .collect();
        matrix(&rows)
    }

    #[test]
    fn pair_count_matches_hand_values() {
        assert_eq!(pair_count(5, 0), 20);
        assert_eq!(pair_count(3, 3), 0);
        assert_eq!(pair_count(10, 2), 56);
        assert_eq!(pair_count(0, 0), 0);
        assert_eq!(pair_count(2, 1), 0); // k = m+1 boundary
    }

    #[test]
    fn lambda_index_restores_exact_rational_floors() {
        // 0.7 * 10.0 rounds to 6.999…; the mathematical floor is 7.
        assert_eq!(lambda_index(0.7, 10), 7);
        for k in [5usize, 10, 15, 20, 25] {
            for len in 1..60usize {
                for j in 1..k {
                    let lam = j as f64 / k as f64;
                    assert_eq!(lambda_index(lam, len), j * len / k, "λ={j}/{k}, len={len}");
                }
            }
        }
    }

    #[test]
    fn lambda_factor_matches_hand_values() {
        assert_eq!(lambda_factor(1.0, 10, 20, 1).unwrap(), 1.0);
        assert_eq!(lambda_factor(0.0, 10, 20, 1).unwrap(), 0.0);
        assert_relative_eq!(
            lambda_factor(0.5, 10, 20, 1).unwrap(),
            1.0 / 36.0,
            max_relative = 1e-15
        );
        assert!(lambda_factor(0.5, 2, 20, 1).is_err()); // k = m+1: zero denominator
    }

    #[test]
    fn alternating_four_point_example() {
        // X = [0, 1, 0, 1]ᵀ, k = 2, m = 0: sixteen index tuples reduce to
        // two nonzero products of −1 each, so T = −2 / (N₀(2)² · 1) = −0.5.
        let x = matrix(&[vec![0.0], vec![1.0], vec![0.0], vec![1.0]]);
        let naive = useq_naive(&x, &[0], 2, 0, &[1.0]).unwrap();
        assert_eq!(naive.t_full, -0.5);
        assert_eq!(naive.t_values, vec![-0.5]);
        let fast = useq(&x, &[0], 2, 0, &[1.0]).unwrap();
        assert_eq!(fast.t_full, -0.5);
        assert_eq!(fast.t_values, vec![-0.5]);
    }

    #[test]
    fn noiseless_step_recovers_squared_height() {
        // Every cross product in the quadruple sum equals d², so T(1) = d².
        let d = 0.75;
        let n = 12;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|j| vec![if j < 5 { 0.0 } else { d }; 3])
            .collect();
        let x = matrix(&rows);
        for m in 0..2 {
            let s = useq(&x, &[0, 1, 2], 5, m, &[0.5, 1.0]).unwrap();
            assert_relative_eq!(s.t_full, d * d, max_relative = 1e-12);
            let o = useq_naive(&x, &[0, 1, 2], 5, m, &[0.5, 1.0]).unwrap();
            assert_relative_eq!(o.t_full, d * d, max_relative = 1e-12);
        }
    }

    #[test]
    fn constant_rows_give_zero() {
        let x = matrix(&(0..10).map(|_| vec![3.0, -1.0]).collect::<Vec<_>>());
        let s = useq(&x, &[0, 1], 4, 1, &[0.25, 0.5, 1.0]).unwrap();
        assert!(s.t_values.iter().all(|&t| t == 0.0));
        assert_eq!(s.t_full, 0.0);
    }

    #[test]
    fn guard_region_returns_all_zeros() {
        let x = step_matrix(10, 2, 5, 1.0);
        // k = 2, m = 3 → k ≤ m+1.
        let s = useq(&x, &[0, 1], 2, 3, &[0.5, 1.0]).unwrap();
        assert!(s.t_values.iter().all(|&t| t == 0.0));
        assert!(s.lambda_values.iter().all(|&t| t == 0.0));
        assert_eq!(s.t_full, 0.0);
        let o = useq_naive(&x, &[0, 1], 2, 3, &[0.5, 1.0]).unwrap();
        assert_eq!(o.t_values, s.t_values);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let x = step_matrix(10, 2, 5, 1.0);
        assert!(useq(&x, &[], 5, 0, &[1.0]).is_err());
        assert!(useq(&x, &[0, 0], 5, 0, &[1.0]).is_err());
        assert!(useq(&x, &[2], 5, 0, &[1.0]).is_err());
        assert!(useq(&x, &[0], 0, 0, &[1.0]).is_err());
        assert!(useq(&x, &[0], 10, 0, &[1.0]).is_err());
        assert!(useq(&x, &[0], 5, 0, &[]).is_err());
        assert!(useq(&x, &[0], 5, 0, &[0.0, 1.0]).is_err());
        assert!(useq(&x, &[0], 5, 0, &[0.5, 0.5]).is_err());
        assert!(useq(&x, &[0], 5, 0, &[0.5, 1.5]).is_err());
    }

    #[test]
    fn t_full_duplicates_the_unit_grid_point_bitwise() {
        let x = step_matrix(16, 3, 9, 0.5);
        let s = useq(&x, &[0, 1, 2], 9, 1, &[0.25, 0.5, 1.0]).unwrap();
        assert_eq!(s.t_full.to_bits(), s.t_values[2].to_bits());
        assert_eq!(s.lambda_values[2], 1.0);
    }

    #[test]
    fn lambda_values_are_nondecreasing_within_unit_interval() {
        let x = step_matrix(20, 2, 8, 1.0);
        let grid: Vec<f64> = (1..=10).map(|j| j as f64 / 10.0).collect();
        let s = useq(&x, &[0, 1], 8, 1, &grid).unwrap();
        for w in s.lambda_values.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert!(s.lambda_values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn location_shift_is_bit_exact_on_dyadic_data() {
        // Dyadic inputs make x + c exact, so first-row centering recovers
        // the identical column values and everything downstream matches.
        let x = step_matrix(14, 3, 6, 1.25);
        let shift = 6.75;
        let shifted = matrix(
            &(0..x.n())
                .map(|j| x.row(j).iter().map(|v| v + shift).collect())
                .collect::<Vec<_>>(),
        );
        let grid = [0.25, 0.5, 0.75, 1.0];
        let s0 = useq(&x, &[0, 1, 2], 6, 1, &grid).unwrap();
        let s1 = useq(&shifted, &[0, 1, 2], 6, 1, &grid).unwrap();
        for (a, b) in s0.t_values.iter().zip(&s1.t_values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(s0.t_full.to_bits(), s1.t_full.to_bits());
    }

    #[test]
    fn column_permutation_is_bit_exact_for_full_set() {
        let x = step_matrix(15, 4, 7, 0.5);
        let perm = [2usize, 0, 3, 1];
        let permuted = matrix(
            &(0..x.n())
                .map(|j| perm.iter().map(|&l| x.get(j, l)).collect())
                .collect::<Vec<_>>(),
        );
        let grid = [0.2, 0.4, 0.6, 0.8, 1.0];
        let s0 = useq(&x, &[0, 1, 2, 3], 7, 1, &grid).unwrap();
        let s1 = useq(&permuted, &[0, 1, 2, 3], 7, 1, &grid).unwrap();
        for (a, b) in s0.t_values.iter().zip(&s1.t_values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(s0.t_full.to_bits(), s1.t_full.to_bits());
    }

    /// Strategy: a small random instance for oracle comparison.
    fn small_instance() -> impl Strategy<
        Value = (
            Vec<Vec<f64>>, // rows
            usize,         // k
            usize,         // m
            Vec<f64>,      // grid
        ),
    > {
        (8usize..=18, 1usize..=4, 0usize..=3).prop_flat_map(|(n, p, m)| {
            let rows = proptest::collection::vec(proptest::collection::vec(-8.0f64..8.0, p), n);
            let k = 1usize..n;
            let grid = proptest::collection::btree_set(1u32..=9, 1..4).prop_map(|s| {
                s.into_iter()
                    .map(|j| j as f64 / 10.0)
                    .chain([1.0])
                    .collect()
            });
            (rows, k, Just(m), grid)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn factorized_matches_naive((rows, k, m, grid) in small_instance()) {
            let x = matrix(&rows);
            let p = x.p();
            let a_set: Vec<usize> = (0..p).collect();
            let fast = useq(&x, &a_set, k, m, &grid).unwrap();
            let slow = useq_naive(&x, &a_set, k, m, &grid).unwrap();
            for (f, s) in fast.t_values.iter().zip(&slow.t_values) {
                prop_assert!((f - s).abs() <= 1e-10 * (1.0 + s.abs()),
                    "t mismatch: {f} vs {s}");
            }
            prop_assert!((fast.t_full - slow.t_full).abs() <= 1e-10 * (1.0 + slow.t_full.abs()));
            prop_assert_eq!(fast.lambda_values, slow.lambda_values);
        }

        #[test]
        fn scaling_is_quadratic(
            (rows, k, m, grid) in small_instance(),
            c in prop_oneof![Just(-3.0f64), Just(0.5), Just(2.0), Just(7.5)],
        ) {
            let x = matrix(&rows);
            let scaled = matrix(
                &rows.iter().map(|r| r.iter().map(|v| c * v).collect()).collect::<Vec<_>>(),
            );
            let a_set: Vec<usize> = (0..x.p()).collect();
            let s0 = useq(&x, &a_set, k, m, &grid).unwrap();
            let s1 = useq(&scaled, &a_set, k, m, &grid).unwrap();
            for (a, b) in s0.t_values.iter().zip(&s1.t_values) {
                prop_assert!((c * c * a - b).abs() <= 1e-12 * (1.0 + (c * c * a).abs()),
                    "scale mismatch: c²·{a} vs {b}");
            }
        }
    }
}
