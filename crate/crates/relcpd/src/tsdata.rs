//! Time-series matrices, CSV ingestion, and preprocessing.
//!
//! Observations are stored row-major: row `j` is the p-dimensional
//! observation X_j at time j. Two types split the lifecycle:
//!
//! * [`RawMatrix`] — freshly parsed data that may still contain missing
//!   cells (empty CSV fields, `NA`/`NaN` tokens, or anything that does not
//!   parse to a finite number).
//! * [`TimeSeriesMatrix`] — validated data: rectangular, every entry finite.
//!
//! [`RawMatrix::preprocess`] bridges the two by linearly interpolating
//! interior missing runs, extending leading/trailing runs with the nearest
//! observed value, and optionally clamping negative entries to zero.
//!
//! All inferential routines in this crate additionally require `n ≥ 4`
//! (the smallest sample with a nonzero pair count at trimming 0); that
//! check lives at the statistical entry points so that plumbing such as
//! CSV round-trips works on arbitrarily small matrices.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// TimeSeriesMatrix
// ---------------------------------------------------------------------------

/// An n×p matrix of finite reals; rows indexed by time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    n: usize,
    p: usize,
    /// Row-major storage: entry (j, ℓ) lives at `values[j * p + ℓ]`.
    values: Vec<f64>,
}

impl TimeSeriesMatrix {
    /// Build from row-major storage, validating shape and finiteness.
    pub fn from_flat(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::EmptyInput(format!(
                "matrix must be nonempty, got {n}×{p}"
            )));
        }
        if values.len() != n * p {
            return Err(Error::InvalidArgument(format!(
                "storage length {} does not match {n}×{p}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at row {}, column {}",
                pos / p + 1,
                pos % p + 1
            )));
        }
        Ok(Self { n, p, values })
    }

    /// Build from a list of rows, validating rectangularity.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyInput("no rows".into()));
        }
        let p = rows[0].len();
        for (j, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::RaggedRow {
                    row: j + 1,
                    got: row.len(),
                    expected: p,
                });
            }
        }
        let mut values = Vec::with_capacity(n * p);
        for row in rows {
            values.extend_from_slice(row);
        }
        Self::from_flat(n, p, values)
    }

    /// Number of time points.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of each observation.
    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    /// Entry (j, ℓ), both 0-based.
    #[inline]
    pub fn get(&self, j: usize, l: usize) -> f64 {
        self.values[j * self.p + l]
    }

    /// Observation at time j (0-based) as a slice of length p.
    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.p..(j + 1) * self.p]
    }

    /// Row-major view of the full storage.
    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Error unless the series has at least `min` rows; `what` names the
    /// operation for the message.
    pub fn require_min_rows(&self, min: usize, what: &str) -> Result<()> {
        if self.n < min {
            return Err(Error::InvalidArgument(format!(
                "{what} requires n ≥ {min}, got n = {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Serialize as CSV. With `header`, writes a first row `x1,…,xp`.
    ///
    /// Floats are written with Rust's shortest round-trip representation,
    /// so a write/load cycle reproduces the matrix bit-exactly.
    pub fn to_csv_string(&self, header: bool) -> String {
        let mut out = String::new();
        if header {
            for l in 0..self.p {
                if l > 0 {
                    out.push(',');
                }
                let _ = write!(out, "x{}", l + 1);
            }
            out.push('\n');
        }
        for j in 0..self.n {
            for (l, v) in self.row(j).iter().enumerate() {
                if l > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Write the CSV serialization to `path`.
    pub fn write_csv(&self, path: &Path, header: bool) -> Result<()> {
        std::fs::write(path, self.to_csv_string(header)).map_err(|e| Error::io(path, e))
    }
}

// ---------------------------------------------------------------------------
// RawMatrix and preprocessing
// ---------------------------------------------------------------------------

/// Preprocessing switches.
///
/// Both flags are independent; the default enables both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessPolicy {
    /// Fill missing cells (linear interior interpolation, constant edge
    /// extension).
    pub interpolate_missing: bool,
    /// Replace negative entries by zero after interpolation.
    pub zero_negatives: bool,
}

impl Default for PreprocessPolicy {
    fn default() -> Self {
        Self {
            interpolate_missing: true,
            zero_negatives: true,
        }
    }
}

/// A parsed matrix that may still contain missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    n: usize,
    p: usize,
    /// Row-major; `None` marks a missing cell.
    cells: Vec<Option<f64>>,
}

impl RawMatrix {
    /// Build from row-major optional cells.
    pub fn from_cells(n: usize, p: usize, cells: Vec<Option<f64>>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::EmptyInput(format!(
                "matrix must be nonempty, got {n}×{p}"
            )));
        }
        if cells.len() != n * p {
            return Err(Error::InvalidArgument(format!(
                "storage length {} does not match {n}×{p}",
                cells.len()
            )));
        }
        Ok(Self { n, p, cells })
    }

    /// Number of time points.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of each observation.
    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    /// Apply the preprocessing rules and return a fully observed matrix.
    ///
    /// Per column: interior missing runs are replaced by linear
    /// interpolation between the nearest observed neighbours; leading and
    /// trailing runs are replaced by the nearest observed value. Afterwards,
    /// if `zero_negatives` is set, every negative entry becomes 0. The
    /// result carries no missing markers, so preprocessing is idempotent.
    pub fn preprocess(&self, policy: PreprocessPolicy) -> Result<TimeSeriesMatrix> {
        let (n, p) = (self.n, self.p);
        let mut values = vec![0.0f64; n * p];
        for l in 0..p {
            // Gather the observed positions of this column.
            let observed: Vec<usize> = (0..n)
                .filter(|&j| self.cells[j * p + l].is_some())
                .collect();
            if observed.len() < n && !policy.interpolate_missing {
                return Err(Error::InvalidArgument(format!(
                    "column {} has missing values but interpolation is disabled",
                    l + 1
                )));
            }
            if observed.is_empty() {
                return Err(Error::FullyMissingColumn { column: l + 1 });
            }
            let at = |j: usize| self.cells[j * p + l].expect("observed index");
            let mut prev: Option<usize> = None; // last observed index seen
            let mut next_idx = 0usize; // cursor into `observed`
            for j in 0..n {
                let v = match self.cells[j * p + l] {
                    Some(v) => {
                        prev = Some(j);
                        v
                    }
                    None => {
                        while next_idx < observed.len() && observed[next_idx] < j {
                            next_idx += 1;
                        }
                        let next = observed.get(next_idx).copied();
                        match (prev, next) {
                            // Interior gap: linear interpolation.
                            (Some(a), Some(b)) => {
                                let t = (j - a) as f64 / (b - a) as f64;
                                at(a) + (at(b) - at(a)) * t
                            }
                            // Leading run: constant extension backwards.
                            (None, Some(b)) => at(b),
                            // Trailing run: constant extension forwards.
                            (Some(a), None) => at(a),
                            (None, None) => unreachable!("observed is nonempty"),
                        }
                    }
                };
                values[j * p + l] = if policy.zero_negatives && v < 0.0 {
                    0.0
                } else {
                    v
                };
            }
        }
        TimeSeriesMatrix::from_flat(n, p, values)
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Parse one CSV field: `None` for missing (empty, `NA`, `NaN`, or any
/// token that does not read as a finite number), `Some(v)` otherwise.
fn parse_field(field: &str) -> Option<f64> {
    let t = field.trim();
    if t.is_empty() {
        return None;
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => None,
    }
}

/// Read a CSV file into a [`RawMatrix`].
///
/// Rows are time points in file order; columns are coordinates. With
/// `has_header`, the first row is skipped. Empty fields and non-numeric
/// tokens (`NA`, `NaN`, …) become missing cells for [`RawMatrix::preprocess`]
/// to fill.
pub fn load_csv(path: &Path, has_header: bool) -> Result<RawMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                if let csv::ErrorKind::Io(io) = e.into_kind() {
                    Error::io(path, io)
                } else {
                    unreachable!()
                }
            }
            _ => Error::Parse {
                row: 0,
                message: e.to_string(),
            },
        })?;

    let mut cells: Vec<Option<f64>> = Vec::new();
    let mut p: Option<usize> = None;
    let mut n = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1; // 1-based data row, header excluded
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let width = record.len();
        match p {
            None => p = Some(width),
            Some(expected) if width != expected => {
                return Err(Error::RaggedRow {
                    row,
                    got: width,
                    expected,
                });
            }
            Some(_) => {}
        }
        cells.extend(record.iter().map(parse_field));
        n += 1;
    }
    let p = p.unwrap_or(0);
    if n == 0 || p == 0 {
        return Err(Error::EmptyInput(format!(
            "{} contains no data rows/columns",
            path.display()
        )));
    }
    RawMatrix::from_cells(n, p, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn clean(raw: &RawMatrix) -> TimeSeriesMatrix {
        raw.preprocess(PreprocessPolicy::default()).unwrap()
    }

    #[test]
    fn loads_plain_file_in_time_order() {
        let f = write_temp("1,2\n3,4\n5,6\n");
        let x = clean(&load_csv(f.path(), false).unwrap());
        assert_eq!((x.n(), x.p()), (3, 2));
        assert_eq!(x.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn header_row_is_skipped() {
        let f = write_temp("a,b\n1,2\n3,4\n");
        let x = clean(&load_csv(f.path(), true).unwrap());
        assert_eq!((x.n(), x.p()), (2, 2));
        assert_eq!(x.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn ragged_row_is_reported_with_its_index() {
        let f = write_temp("1,2\n3\n");
        match load_csv(f.path(), false) {
            Err(Error::RaggedRow { row, got, expected }) => {
                assert_eq!((row, got, expected), (2, 1, 2));
            }
            other => panic!("expected ragged-row error, got {other:?}"),
        }
    }

    #[test]
    fn missing_tokens_are_all_recognized() {
        let f = write_temp("1,na\n,2\nNaN,3\n4,5\n");
        let raw = load_csv(f.path(), false).unwrap();
        let x = clean(&raw);
        // Column 1: [1, miss, miss, 4] → [1, 2, 3, 4]; column 2: [miss, 2, 3, 5] → [2, 2, 3, 5].
        assert_eq!(x.values(), &[1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn interior_gap_is_linearly_interpolated() {
        let raw = RawMatrix::from_cells(3, 1, vec![Some(1.0), None, Some(3.0)]).unwrap();
        assert_eq!(clean(&raw).values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn edges_extend_and_negatives_clamp() {
        let raw = RawMatrix::from_cells(3, 1, vec![None, Some(5.0), Some(-2.0)]).unwrap();
        assert_eq!(clean(&raw).values(), &[5.0, 5.0, 0.0]);
    }

    #[test]
    fn clean_data_is_untouched() {
        let raw = RawMatrix::from_cells(3, 1, vec![Some(4.0), Some(4.0), Some(4.0)]).unwrap();
        assert_eq!(clean(&raw).values(), &[4.0, 4.0, 4.0]);
    }

    #[test]
    fn negatives_survive_when_clamping_is_off() {
        let raw = RawMatrix::from_cells(2, 1, vec![Some(-1.5), Some(2.0)]).unwrap();
        let policy = PreprocessPolicy {
            interpolate_missing: true,
            zero_negatives: false,
        };
        assert_eq!(raw.preprocess(policy).unwrap().values(), &[-1.5, 2.0]);
    }

    #[test]
    fn fully_missing_column_is_named() {
        let raw = RawMatrix::from_cells(2, 2, vec![Some(1.0), None, Some(2.0), None]).unwrap();
        match raw.preprocess(PreprocessPolicy::default()) {
            Err(Error::FullyMissingColumn { column }) => assert_eq!(column, 2),
            other => panic!("expected fully-missing-column error, got {other:?}"),
        }
    }

    #[test]
    fn missing_with_interpolation_disabled_is_an_error() {
        let raw = RawMatrix::from_cells(2, 1, vec![Some(1.0), None]).unwrap();
        let policy = PreprocessPolicy {
            interpolate_missing: false,
            zero_negatives: true,
        };
        assert!(raw.preprocess(policy).is_err());
    }

    #[test]
    fn non_finite_entries_are_rejected_by_the_validated_type() {
        assert!(TimeSeriesMatrix::from_flat(2, 1, vec![1.0, f64::NAN]).is_err());
        assert!(TimeSeriesMatrix::from_flat(2, 1, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let x = TimeSeriesMatrix::from_rows(&[
            vec![0.1, -2.5e-17],
            vec![3.0, 4.0f64.sqrt() + 1e-12],
            vec![5.5, 6.25],
            vec![7.0, 8.0],
        ])
        .unwrap();
        let f = write_temp(&x.to_csv_string(true));
        // -2.5e-17 is negative and would be clamped; disable clamping so the
        // comparison checks the serialization itself.
        let reread = load_csv(f.path(), true)
            .unwrap()
            .preprocess(PreprocessPolicy {
                interpolate_missing: false,
                zero_negatives: false,
            })
            .unwrap();
        assert_eq!(reread.values(), x.values());
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(
            n in 1usize..8,
            p in 1usize..4,
            bits in proptest::collection::vec(proptest::option::of(-10i32..10), 32),
        ) {
            let cells: Vec<Option<f64>> =
                (0..n * p).map(|i| bits[i % bits.len()].map(f64::from)).collect();
            let raw = RawMatrix::from_cells(n, p, cells).unwrap();
            // Skip draws with a fully missing column; that case errors by design.
            if let Ok(once) = raw.preprocess(PreprocessPolicy::default()) {
                let cells_again = once.values().iter().map(|&v| Some(v)).collect::<Vec<_>>();
                let again = RawMatrix::from_cells(n, p, cells_again)
                    .unwrap()
                    .preprocess(PreprocessPolicy::default())
                    .unwrap();
                prop_assert_eq!(once.values(), again.values());
            }
        }

        #[test]
        fn clean_nonnegative_matrices_pass_through_bit_identical(
            vals in proptest::collection::vec(0f64..100.0, 12),
        ) {
            let raw = RawMatrix::from_cells(4, 3, vals.iter().map(|&v| Some(v)).collect()).unwrap();
            let out = raw.preprocess(PreprocessPolicy::default()).unwrap();
            let bits_in: Vec<u64> = vals.iter().map(|v| v.to_bits()).collect();
            let bits_out: Vec<u64> = out.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits_in, bits_out);
        }
    }
}
