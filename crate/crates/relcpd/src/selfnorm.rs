//! Self-normalizing statistics.
//!
//! Dividing the test statistic by a functional of its own sequential
//! version cancels the unknown long-run variance in the limit, producing a
//! pivotal ratio. Two normalizers live here:
//!
//! * [`v_statistic`] — the global normalizer
//!   `V = √( Σ_ν w·(T(λ) − Λ_n(λ)·T(1))² )` over the atoms of a discrete
//!   uniform measure ν;
//! * [`v_ell`] — the per-coordinate normalizer
//!   `v̂_ℓ = √( Σ w·(δ̂²_ℓ(λ) − λ⁴·δ̂²_ℓ(1))² )`, a K-atom discrete
//!   approximation of the corresponding Lebesgue integral.

use crate::error::{Error, Result};
use crate::numeric::Kahan;
use crate::ustat::SequentialUStat;

/// Discrete uniform measure on {1/K, …, (K−1)/K} with weights 1/(K−1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NuMeasure {
    k: usize,
}

impl NuMeasure {
    /// A measure with K ≥ 2 atoms strictly inside (0, 1).
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!(
                "ν needs K ≥ 2, got K = {k}"
            )));
        }
        Ok(NuMeasure { k })
    }

    /// The atom count K.
    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Weight of each atom, 1/(K−1); the K−1 atoms sum to 1.
    #[inline]
    pub fn weight(&self) -> f64 {
        1.0 / (self.k - 1) as f64
    }

    /// The atoms 1/K, …, (K−1)/K.
    pub fn atoms(&self) -> Vec<f64> {
        (1..self.k).map(|j| j as f64 / self.k as f64).collect()
    }

    /// The λ-grid a sequential statistic must be evaluated on so that both
    /// the ν atoms and the full-sample point λ = 1 are available.
    pub fn test_grid(&self) -> Vec<f64> {
        let mut grid = self.atoms();
        grid.push(1.0);
        grid
    }
}

impl Default for NuMeasure {
    /// The simulation default K = 20.
    fn default() -> Self {
        NuMeasure { k: 20 }
    }
}

/// Position of each ν atom inside `grid`, or an error naming the first
/// atom that is absent. Atoms are matched to 1e-12 absolute tolerance so a
/// grid assembled from the same rationals always matches.
fn atom_positions(grid: &[f64], nu: &NuMeasure) -> Result<Vec<usize>> {
    nu.atoms()
        .iter()
        .map(|&atom| {
            grid.iter()
                .position(|&g| (g - atom).abs() <= 1e-12)
                .ok_or(Error::MissingAtom { atom })
        })
        .collect()
}

/// The self-normalizer `V = √( Σ_j w·(T(λ_j) − Λ_n(λ_j)·T(1))² )` over the
/// ν atoms, which must all be present in `seq.grid`.
pub fn v_statistic(seq: &SequentialUStat, nu: &NuMeasure) -> Result<f64> {
    let positions = atom_positions(&seq.grid, nu)?;
    let w = nu.weight();
    let mut acc = Kahan::new();
    for &g in &positions {
        let d = seq.t_values[g] - seq.lambda_values[g] * seq.t_full;
        acc.add(w * d * d);
    }
    Ok(acc.total().max(0.0).sqrt())
}

/// The per-coordinate normalizer
/// `v̂_ℓ = √( Σ_j w·(δ̂²_ℓ(λ_j) − λ_j⁴·δ̂²_ℓ(1))² )` for one coordinate's
/// sequential values on `grid`; the discrete uniform measure approximates
/// the Lebesgue integral.
pub fn v_ell(grid: &[f64], values: &[f64], value_at_one: f64, nu: &NuMeasure) -> Result<f64> {
    if grid.len() != values.len() {
        return Err(Error::InvalidArgument(format!(
            "grid has {} points but values has {}",
            grid.len(),
            values.len()
        )));
    }
    let positions = atom_positions(grid, nu)?;
    let w = nu.weight();
    let mut acc = Kahan::new();
    for &g in &positions {
        let lam = grid[g];
        let d = values[g] - lam.powi(4) * value_at_one;
        acc.add(w * d * d);
    }
    Ok(acc.total().max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn seq_from(
        grid: Vec<f64>,
        t_values: Vec<f64>,
        lambda_values: Vec<f64>,
        t_full: f64,
    ) -> SequentialUStat {
        SequentialUStat {
            k: 10,
            m: 0,
            grid,
            t_values,
            lambda_values,
            t_full,
            norm_size: 1,
        }
    }

    #[test]
    fn nu_measure_shapes_are_correct() {
        let nu = NuMeasure::new(4).unwrap();
        assert_eq!(nu.atoms(), vec![0.25, 0.5, 0.75]);
        assert_eq!(nu.test_grid(), vec![0.25, 0.5, 0.75, 1.0]);
        assert_relative_eq!(nu.weight() * (nu.k() - 1) as f64, 1.0);
        assert!(NuMeasure::new(1).is_err());
        assert_eq!(NuMeasure::default().k(), 20);
    }

    #[test]
    fn single_atom_hand_value() {
        // K = 2: one atom ½. T(½) = 3, Λ(½) = 0.25, T(1) = 4 → V = |3 − 1| = 2.
        let nu = NuMeasure::new(2).unwrap();
        let seq = seq_from(vec![0.5, 1.0], vec![3.0, 4.0], vec![0.25, 1.0], 4.0);
        assert_eq!(v_statistic(&seq, &nu).unwrap(), 2.0);
    }

    #[test]
    fn exact_centering_gives_zero() {
        let nu = NuMeasure::new(5).unwrap();
        let grid = nu.test_grid();
        let lambda_values: Vec<f64> = grid.iter().map(|&l| l * l).collect();
        let t_full = 7.0;
        let t_values: Vec<f64> = lambda_values.iter().map(|&lv| lv * t_full).collect();
        let seq = seq_from(grid, t_values, lambda_values, t_full);
        assert_eq!(v_statistic(&seq, &nu).unwrap(), 0.0);
    }

    #[test]
    fn missing_atom_is_reported() {
        let nu = NuMeasure::new(4).unwrap();
        let seq = seq_from(vec![0.25, 0.75, 1.0], vec![0.0; 3], vec![0.0; 3], 0.0);
        match v_statistic(&seq, &nu) {
            Err(Error::MissingAtom { atom }) => assert_relative_eq!(atom, 0.5),
            other => panic!("expected missing-atom error, got {other:?}"),
        }
    }

    #[test]
    fn extra_grid_points_are_ignored() {
        let nu = NuMeasure::new(2).unwrap();
        let seq_small = seq_from(vec![0.5, 1.0], vec![3.0, 9.0], vec![0.25, 1.0], 4.0);
        let seq_big = seq_from(
            vec![0.1, 0.5, 0.9, 1.0],
            vec![-5.0, 3.0, 11.0, 9.0],
            vec![0.0, 0.25, 0.8, 1.0],
            4.0,
        );
        assert_eq!(
            v_statistic(&seq_small, &nu).unwrap(),
            v_statistic(&seq_big, &nu).unwrap()
        );
    }

    #[test]
    fn v_ell_vanishes_on_exact_quartic() {
        let nu = NuMeasure::new(6).unwrap();
        let grid = nu.test_grid();
        let d1 = 3.5;
        let values: Vec<f64> = grid.iter().map(|&l| l.powi(4) * d1).collect();
        assert_eq!(v_ell(&grid, &values, d1, &nu).unwrap(), 0.0);
    }

    #[test]
    fn v_ell_matches_hand_sum_on_four_atoms() {
        // K = 4 atoms {¼, ½, ¾}, weight ⅓; values chosen for easy arithmetic.
        let nu = NuMeasure::new(4).unwrap();
        let grid = vec![0.25, 0.5, 0.75, 1.0];
        let values = vec![1.0, 2.0, 3.0, 4.0];
        let v1 = 4.0;
        let expect = ((1.0 - 0.25f64.powi(4) * 4.0).powi(2)
            + (2.0 - 0.5f64.powi(4) * 4.0).powi(2)
            + (3.0 - 0.75f64.powi(4) * 4.0).powi(2))
            / 3.0;
        assert_relative_eq!(
            v_ell(&grid, &values, v1, &nu).unwrap(),
            expect.sqrt(),
            max_relative = 1e-15
        );
    }

    proptest! {
        #[test]
        fn v_statistic_matches_resummation_oracle(
            t_vals in proptest::collection::vec(-10.0f64..10.0, 19),
            t_full in -10.0f64..10.0,
        ) {
            let nu = NuMeasure::new(20).unwrap();
            let grid = nu.test_grid();
            let lambda_values: Vec<f64> = grid.iter().map(|&l| l.powi(4)).collect();
            let mut t_values = t_vals.clone();
            t_values.push(t_full);
            let seq = seq_from(grid.clone(), t_values, lambda_values.clone(), t_full);
            let v = v_statistic(&seq, &nu).unwrap();
            let mut oracle = 0.0;
            for j in 0..19 {
                let d = t_vals[j] - lambda_values[j] * t_full;
                oracle += d * d / 19.0;
            }
            prop_assert!((v - oracle.sqrt()).abs() <= 1e-12 * (1.0 + oracle.sqrt()));
        }

        #[test]
        fn scaling_is_absolutely_homogeneous(
            t_vals in proptest::collection::vec(-10.0f64..10.0, 19),
            t_full in -10.0f64..10.0,
        ) {
            // Powers of two scale each squared deviation exactly.
            let c = 4.0f64;
            let nu = NuMeasure::new(20).unwrap();
            let grid = nu.test_grid();
            let lambda_values: Vec<f64> = grid.iter().map(|&l| l * l).collect();
            let mut t_values = t_vals;
            t_values.push(t_full);
            let scaled: Vec<f64> = t_values.iter().map(|&t| c * t).collect();
            let seq = seq_from(grid.clone(), t_values, lambda_values.clone(), t_full);
            let seq_scaled = seq_from(grid, scaled, lambda_values, c * t_full);
            let v = v_statistic(&seq, &nu).unwrap();
            let vc = v_statistic(&seq_scaled, &nu).unwrap();
            prop_assert_eq!((c * v).to_bits(), vc.to_bits());
        }
    }
}
