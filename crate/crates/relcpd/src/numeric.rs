//! Small numerical utilities: compensated summation and empirical quantiles.
//!
//! The U-statistic evaluators accumulate sums whose terms can be orders of
//! magnitude larger than the final value, so plain `f64` accumulation is not
//! good enough; the Neumaier variant of Kahan summation keeps the error at a
//! few ulps of the running sum regardless of cancellation.

/// Kahan–Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    /// Fresh accumulator at zero.
    #[inline]
    pub fn new() -> Self {
        Kahan::default()
    }

    /// Add one term.
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Current compensated total.
    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator of terms.
pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Kahan::new();
    for x in xs {
        acc.add(x);
    }
    acc.total()
}

/// Compensated dot product of two equal-length slices.
pub fn kahan_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Kahan::new();
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc.add(x * y);
    }
    acc.total()
}

/// Order-independent compensated sum: the terms are sorted by their total
/// order before accumulation, so any permutation of the input produces a
/// bit-identical result (and the ascending-magnitude order also tightens the
/// rounding error).
pub fn kahan_sum_sorted(xs: &mut [f64]) -> f64 {
    xs.sort_unstable_by(|a, b| a.total_cmp(b));
    kahan_sum(xs.iter().copied())
}

/// Type-7 empirical quantile (linear interpolation of order statistics, the
/// R default). `sorted` must be ascending and nonempty, `level` in [0, 1].
pub fn quantile_type7(sorted: &[f64], level: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&level), "level must be in [0, 1]");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = lo.min(n - 2) + 1;
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    kahan_sum(xs.iter().copied()) / xs.len() as f64
}

/// Sample mean together with the standard error of the mean
/// (sample standard deviation / √n).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n < 2 {
        return (mean(xs), f64::NAN);
    }
    let m = mean(xs);
    let ss = kahan_sum(xs.iter().map(|&x| (x - m) * (x - m)));
    let var = ss / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Standard error of a binomial rate estimate.
pub fn binomial_se(rate: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (rate * (1.0 - rate) / n as f64).sqrt()
}
