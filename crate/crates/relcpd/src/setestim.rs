//! Per-coordinate estimators and the pivotal support-set estimator.
//!
//! Each coordinate ℓ gets a sequential estimate δ̂²_ℓ(λ) of its squared
//! mean change (the single-coordinate U-statistic, no coordinate average)
//! and a self-normalizer v̂_ℓ. The support set is then recovered without
//! any user-chosen tuning constant by thresholding the pivotal ratio:
//!
//! ```text
//! Ŝ = { ℓ : δ̂²_ℓ > v̂_ℓ · ln^κ(p) },   κ = 3/2 by default.
//! ```
//!
//! The threshold grows slowly in the dimension, so inactive coordinates —
//! whose self-normalized ratio is tight — are excluded with probability
//! tending to one, while any coordinate with a genuine change eventually
//! dwarfs it.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::selfnorm::{v_ell, NuMeasure};
use crate::tsdata::TimeSeriesMatrix;
use crate::ustat::compute_components;

/// Default threshold exponent κ in ln^κ(p).
pub const DEFAULT_KAPPA: f64 = 1.5;

/// Support-set estimate with its per-coordinate diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SetEstimate {
    /// Sorted 0-based indices of the selected coordinates.
    pub s_hat: Vec<usize>,
    /// δ̂²_ℓ = δ̂²_ℓ(1) per coordinate. These are U-statistics, not squares:
    /// negative values are possible and simply never selected.
    pub delta_sq: Vec<f64>,
    /// Self-normalizers v̂_ℓ ≥ 0 per coordinate.
    pub v_ell: Vec<f64>,
    /// ln^κ(p), the pivotal threshold multiplier.
    pub threshold: f64,
}

impl SetEstimate {
    /// Membership flag for coordinate ℓ.
    pub fn contains(&self, l: usize) -> bool {
        self.s_hat.binary_search(&l).is_ok()
    }

    /// Per-coordinate diagnostics as CSV text:
    /// `coordinate,delta_sq,v_ell,member` with 1-based coordinate labels.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("coordinate,delta_sq,v_ell,member\n");
        for l in 0..self.delta_sq.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                l + 1,
                self.delta_sq[l],
                self.v_ell[l],
                u8::from(self.contains(l))
            );
        }
        out
    }
}

/// All per-coordinate sequential estimates δ̂²_ℓ(λ) on `grid`, plus the
/// λ = 1 values, in one O(n·p + |grid|·p) pass.
///
/// Returns `(per_coord, at_one)` where `per_coord[ℓ]` holds δ̂²_ℓ(λ) per
/// grid point and `at_one[ℓ] = δ̂²_ℓ(1)`. Everything is 0 in the guard
/// region k̂ ≤ m+1 or k̂+m ≥ n−1.
pub fn delta_seq_all(
    x: &TimeSeriesMatrix,
    k_hat: usize,
    m: usize,
    grid: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let comp = compute_components(x, k_hat, m, grid)?;
    let mut per_coord = Vec::with_capacity(x.p());
    let mut at_one = Vec::with_capacity(x.p());
    for l in 0..x.p() {
        let (vals, full) = comp.coord_seq(l);
        per_coord.push(vals);
        at_one.push(full);
    }
    Ok((per_coord, at_one))
}

/// Support-set estimate with the default exponent κ = 3/2.
pub fn estimate_s(
    x: &TimeSeriesMatrix,
    k_hat: usize,
    m: usize,
    grid_k: usize,
) -> Result<SetEstimate> {
    estimate_s_with_kappa(x, k_hat, m, grid_k, DEFAULT_KAPPA)
}

/// Support-set estimate thresholding at v̂_ℓ·ln^κ(p).
///
/// `grid_k` is the atom count of the discrete uniform measure used to
/// approximate the Lebesgue integral inside v̂_ℓ. Requires p ≥ 2: at p = 1
/// the threshold ln^κ(1) = 0 degenerates — use the dense test instead.
pub fn estimate_s_with_kappa(
    x: &TimeSeriesMatrix,
    k_hat: usize,
    m: usize,
    grid_k: usize,
    kappa: f64,
) -> Result<SetEstimate> {
    if x.p() < 2 {
        return Err(Error::InvalidArgument(
            "support estimation needs p ≥ 2 (ln^κ(1) = 0 selects everything); use the dense test for univariate data".into(),
        ));
    }
    if !(kappa.is_finite() && kappa > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold exponent κ must be > 1, got {kappa}"
        )));
    }
    let nu = NuMeasure::new(grid_k)?;
    let grid = nu.test_grid();
    let comp = compute_components(x, k_hat, m, &grid)?;
    let threshold = (x.p() as f64).ln().powf(kappa);

    let p = x.p();
    let mut delta_sq = Vec::with_capacity(p);
    let mut v = Vec::with_capacity(p);
    let mut s_hat = Vec::new();
    for l in 0..p {
        let (vals, at_one) = comp.coord_seq(l);
        let v_l = v_ell(&grid, &vals, at_one, &nu)?;
        if at_one > v_l * threshold {
            s_hat.push(l);
        }
        delta_sq.push(at_one);
        v.push(v_l);
    }
    Ok(SetEstimate {
        s_hat,
        delta_sq,
        v_ell: v,
        threshold,
    })
}

/// Precision / recall / F-score of an estimated support set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

/// Compare an estimated set against the true one (any order, 0-based).
///
/// Empty-set conventions: an empty estimate has precision 1 when the truth
/// is also empty, else 0; recall is 1 when the truth is empty (nothing was
/// missed). The F-score is 0 whenever precision + recall is 0.
pub fn support_metrics(s_true: &[usize], s_hat: &[usize]) -> SupportMetrics {
    let truth: std::collections::BTreeSet<usize> = s_true.iter().copied().collect();
    let est: std::collections::BTreeSet<usize> = s_hat.iter().copied().collect();
    let inter = truth.intersection(&est).count() as f64;
    let precision = if est.is_empty() {
        if truth.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        inter / est.len() as f64
    };
    let recall = if truth.is_empty() {
        1.0
    } else {
        inter / truth.len() as f64
    };
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    SupportMetrics {
        precision,
        recall,
        f_score,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ustat::{useq, useq_naive};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn matrix(rows: &[Vec<f64>]) -> TimeSeriesMatrix {
        TimeSeriesMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn constant_column_has_zero_sequence() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|j| vec![5.0, if j < 6 { 0.0 } else { 1.0 }])
            .collect();
        let (seq, at_one) = delta_seq_all(&matrix(&rows), 6, 0, &[0.5, 1.0]).unwrap();
        assert!(seq[0].iter().all(|&v| v == 0.0));
        assert_eq!(at_one[0], 0.0);
        assert!(at_one[1] > 0.0);
    }

    #[test]
    fn noiseless_step_gives_squared_height_per_coordinate() {
        let d = 1.5;
        let rows: Vec<Vec<f64>> = (0..14)
            .map(|j| vec![if j < 7 { 0.0 } else { d }, 2.0])
            .collect();
        let (_, at_one) = delta_seq_all(&matrix(&rows), 7, 0, &[1.0]).unwrap();
        assert_relative_eq!(at_one[0], d * d, max_relative = 1e-12);
        assert_eq!(at_one[1], 0.0);
    }

    #[test]
    fn per_coordinate_matches_singleton_useq() {
        let rows: Vec<Vec<f64>> = (0..16)
            .map(|j| {
                (0..3)
                    .map(|l| ((j * (l + 2) + 3) % 7) as f64 * 0.5 + if j > 9 { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let x = matrix(&rows);
        let grid = [0.25, 0.5, 0.75, 1.0];
        let (seq, at_one) = delta_seq_all(&x, 9, 1, &grid).unwrap();
        for l in 0..3 {
            let single = useq(&x, &[l], 9, 1, &grid).unwrap();
            for (a, b) in seq[l].iter().zip(&single.t_values) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(at_one[l].to_bits(), single.t_full.to_bits());
            let oracle = useq_naive(&x, &[l], 9, 1, &grid).unwrap();
            assert_relative_eq!(at_one[l], oracle.t_full, max_relative = 1e-10);
        }
    }

    #[test]
    fn univariate_support_estimation_is_rejected() {
        let rows: Vec<Vec<f64>> = (0..12).map(|j| vec![j as f64]).collect();
        assert!(estimate_s(&matrix(&rows), 6, 0, 20).is_err());
    }

    #[test]
    fn kappa_must_exceed_one() {
        let rows: Vec<Vec<f64>> = (0..12).map(|j| vec![j as f64, -(j as f64)]).collect();
        let x = matrix(&rows);
        assert!(estimate_s_with_kappa(&x, 6, 0, 20, 1.0).is_err());
        assert!(estimate_s_with_kappa(&x, 6, 0, 20, f64::NAN).is_err());
        assert!(estimate_s_with_kappa(&x, 6, 0, 20, 1.2).is_ok());
    }

    #[test]
    fn threshold_is_increasing_in_p() {
        let t = |p: usize| (p as f64).ln().powf(DEFAULT_KAPPA);
        for p in 2..200 {
            assert!(t(p + 1) > t(p));
        }
    }

    #[test]
    fn strong_signal_coordinates_are_selected() {
        // Half the coordinates carry a step that dwarfs the noise: recall
        // must be perfect in every replication. Precision is only near 1 —
        // a noise coordinate's self-normalized ratio has heavy tails and
        // the ln^{3/2}(p) threshold is modest at p = 20 — so bound its
        // average across seeds instead of demanding an exact support set.
        let n = 80;
        let p = 20;
        let s = 10;
        let k0 = 40;
        let mut precisions = Vec::new();
        for seed in 0..10u64 {
            let mut rng = crate::rng::stream_rng(7, seed);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|j| {
                    (0..p)
                        .map(|l| {
                            let step = if l < s && j >= k0 { 3.0 } else { 0.0 };
                            step + 0.05 * rng.sample::<f64, _>(StandardNormal)
                        })
                        .collect()
                })
                .collect();
            let est = estimate_s(&matrix(&rows), k0, 0, 20).unwrap();
            let truth: Vec<usize> = (0..s).collect();
            let m = support_metrics(&truth, &est.s_hat);
            assert_eq!(m.recall, 1.0, "seed {seed} missed a signal coordinate");
            precisions.push(m.precision);
        }
        let avg = precisions.iter().sum::<f64>() / precisions.len() as f64;
        assert!(avg >= 0.8, "average precision {avg} too low");
    }

    #[test]
    fn membership_is_scale_invariant() {
        let mut rng = crate::rng::stream_rng(11, 3);
        let n = 40;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                (0..5)
                    .map(|l| {
                        let step = if l == 0 && j >= 20 { 2.0 } else { 0.0 };
                        step + 0.3 * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            })
            .collect();
        let x = matrix(&rows);
        let scaled = matrix(
            &rows
                .iter()
                .map(|r| r.iter().map(|v| 4.0 * v).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        );
        let a = estimate_s(&x, 20, 0, 20).unwrap();
        let b = estimate_s(&scaled, 20, 0, 20).unwrap();
        assert_eq!(a.s_hat, b.s_hat);
    }

    #[test]
    fn metrics_match_hand_values() {
        let m = support_metrics(&[0, 1, 2], &[0, 1, 2]);
        assert_eq!((m.precision, m.recall, m.f_score), (1.0, 1.0, 1.0));
        let m = support_metrics(&[0, 1], &[1, 2]);
        assert_eq!((m.precision, m.recall, m.f_score), (0.5, 0.5, 0.5));
        let m = support_metrics(&[0], &[]);
        assert_eq!((m.precision, m.recall, m.f_score), (0.0, 0.0, 0.0));
        let m = support_metrics(&[], &[]);
        assert_eq!((m.precision, m.recall), (1.0, 1.0));
        let m = support_metrics(&[], &[3]);
        assert_eq!((m.precision, m.recall), (0.0, 1.0));
    }

    #[test]
    fn csv_diagnostics_round_trip() {
        let est = SetEstimate {
            s_hat: vec![1],
            delta_sq: vec![-0.5, 2.0],
            v_ell: vec![0.25, 0.125],
            threshold: 3.0,
        };
        let text = est.to_csv_string();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("coordinate,delta_sq,v_ell,member"));
        assert_eq!(lines.next(), Some("1,-0.5,0.25,0"));
        assert_eq!(lines.next(), Some("2,2,0.125,1"));
    }

    proptest! {
        #[test]
        fn f_score_is_the_harmonic_mean(
            truth in proptest::collection::btree_set(0usize..10, 0..6),
            est in proptest::collection::btree_set(0usize..10, 0..6),
        ) {
            let t: Vec<usize> = truth.into_iter().collect();
            let e: Vec<usize> = est.into_iter().collect();
            let m = support_metrics(&t, &e);
            prop_assert!((0.0..=1.0).contains(&m.precision));
            prop_assert!((0.0..=1.0).contains(&m.recall));
            if m.precision + m.recall > 0.0 {
                let f = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                prop_assert!((m.f_score - f).abs() < 1e-15);
            } else {
                prop_assert_eq!(m.f_score, 0.0);
            }
        }
    }
}
