//! Change-point location estimator.
//!
//! The split estimate is the classical weighted-CUSUM argmax
//!
//! ```text
//! k̂ = argmax_{1 ≤ k ≤ n−1} ‖ (k(n−k)/n²) · ( X̄_{1..k} − X̄_{k+1..n} ) ‖²
//! ```
//!
//! with ties broken towards the smallest k, and θ̂ = k̂/n. The weighted mean
//! difference simplifies to `(S(k) − (k/n)·S(n))/n` with `S` the running
//! column sums, so the whole scan is one O(n·p) pass. k = n is excluded
//! because the right-hand mean would be empty.

use crate::error::Result;
use crate::numeric::Kahan;
use crate::tsdata::TimeSeriesMatrix;

/// Result of the change-point scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeFit {
    /// Maximizing split in {1, …, n−1}.
    pub k_hat: usize,
    /// k̂/n.
    pub theta_hat: f64,
    /// Maximized criterion value (≥ 0).
    pub objective: f64,
}

/// Weighted-CUSUM change-point estimate.
///
/// Columns are centered by their first entry before accumulation; the
/// criterion depends only on within-column differences, so this is exact
/// and keeps a large common mean out of the running sums.
pub fn estimate_cp(x: &TimeSeriesMatrix) -> Result<ChangeFit> {
    x.require_min_rows(2, "the change-point estimator")?;
    let (n, p) = (x.n(), x.p());
    let inv_n = 1.0 / n as f64;

    // total[ℓ] = Σ_j (x_{jℓ} − x_{1ℓ}); prefix[ℓ] tracks Σ_{j ≤ k}.
    let first = x.row(0).to_vec();
    let mut total = vec![Kahan::new(); p];
    for j in 0..n {
        let row = x.row(j);
        for l in 0..p {
            total[l].add(row[l] - first[l]);
        }
    }
    let total: Vec<f64> = total.iter().map(Kahan::total).collect();

    let mut prefix = vec![Kahan::new(); p];
    let mut best_k = 1usize;
    let mut best_obj = f64::NEG_INFINITY;
    for k in 1..n {
        let row = x.row(k - 1);
        let mut obj = Kahan::new();
        let frac = k as f64 * inv_n;
        for l in 0..p {
            prefix[l].add(row[l] - first[l]);
            let r = (prefix[l].total() - frac * total[l]) * inv_n;
            obj.add(r * r);
        }
        let obj = obj.total();
        if obj > best_obj {
            best_obj = obj;
            best_k = k;
        }
    }

    Ok(ChangeFit {
        k_hat: best_k,
        theta_hat: best_k as f64 / n as f64,
        objective: best_obj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[Vec<f64>]) -> TimeSeriesMatrix {
        TimeSeriesMatrix::from_rows(rows).unwrap()
    }

    /// Direct evaluation of the defining criterion via the two means.
    fn objective_slow(x: &TimeSeriesMatrix, k: usize) -> f64 {
        let (n, p) = (x.n(), x.p());
        let mut obj = 0.0;
        for l in 0..p {
            let m1: f64 = (0..k).map(|j| x.get(j, l)).sum::<f64>() / k as f64;
            let m2: f64 = (k..n).map(|j| x.get(j, l)).sum::<f64>() / (n - k) as f64;
            let w = (k * (n - k)) as f64 / (n * n) as f64;
            obj += (w * (m1 - m2)).powi(2);
        }
        obj
    }

    #[test]
    fn noiseless_step_is_located_exactly() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|j| vec![if j < 6 { 0.0 } else { 1.0 }])
            .collect();
        let fit = estimate_cp(&matrix(&rows)).unwrap();
        assert_eq!(fit.k_hat, 6);
        assert_eq!(fit.theta_hat, 0.6);
    }

    #[test]
    fn constant_matrix_ties_to_smallest_k() {
        let fit = estimate_cp(&matrix(&vec![vec![2.5, -1.0]; 8])).unwrap();
        assert_eq!(fit.k_hat, 1);
        assert_eq!(fit.objective, 0.0);
    }

    #[test]
    fn too_short_series_errors() {
        assert!(estimate_cp(&matrix(&[vec![1.0]])).is_err());
    }

    #[test]
    fn location_shift_preserves_k_hat_exactly() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|j| {
                vec![
                    ((j * 5 + 1) % 7) as f64 * 0.5,
                    if j < 7 { 0.0 } else { 1.5 },
                ]
            })
            .collect();
        let shifted: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| v + 12.25).collect())
            .collect();
        let a = estimate_cp(&matrix(&rows)).unwrap();
        let b = estimate_cp(&matrix(&shifted)).unwrap();
        assert_eq!(a.k_hat, b.k_hat);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_direct_criterion(
            rows in proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, 3), 4..20),
        ) {
            let x = matrix(&rows);
            let fit = estimate_cp(&x).unwrap();
            let mut best = f64::NEG_INFINITY;
            for k in 1..x.n() {
                best = best.max(objective_slow(&x, k));
            }
            // The fast argmax attains the brute-force maximum up to fp noise.
            prop_assert!(objective_slow(&x, fit.k_hat) >= best - 1e-9 * (1.0 + best.abs()));
            prop_assert!((fit.objective - objective_slow(&x, fit.k_hat)).abs()
                <= 1e-9 * (1.0 + fit.objective.abs()));
        }

        #[test]
        fn scaling_preserves_argmax(
            rows in proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, 2), 6..16),
            c in prop_oneof![Just(0.25f64), Just(-2.0), Just(8.0)],
        ) {
            let x = matrix(&rows);
            let scaled = matrix(
                &rows.iter().map(|r| r.iter().map(|v| c * v).collect()).collect::<Vec<_>>(),
            );
            let a = estimate_cp(&x).unwrap();
            let b = estimate_cp(&scaled).unwrap();
            prop_assert_eq!(a.k_hat, b.k_hat);
        }
    }
}
