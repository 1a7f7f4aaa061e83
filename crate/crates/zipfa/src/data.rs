//! Count-matrix ingestion, library-size offsets, log-scale imputation for
//! initialization, and hold-out masks for cross-validation.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A cell address: `(row, column)` = `(sample, taxon)`, zero-based.
pub type Cell = (usize, usize);

/// How many times a fold partition is redrawn before giving up.
pub const PARTITION_RETRY_LIMIT: usize = 100;

/// An `n x m` matrix of non-negative read counts with row (sample) and
/// column (taxon) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    values: Array2<u64>,
    sample_ids: Vec<String>,
    taxon_ids: Vec<String>,
}

impl CountMatrix {
    /// Builds a count matrix, checking the shape invariants (`n >= 2`,
    /// `m >= 2`, labels matching the dimensions).
    pub fn new(
        values: Array2<u64>,
        sample_ids: Vec<String>,
        taxon_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, m) = values.dim();
        if n < 2 || m < 2 {
            return Err(Error::Input(format!(
                "count matrix must be at least 2x2, got {n}x{m}"
            )));
        }
        if sample_ids.len() != n {
            return Err(Error::Input(format!(
                "expected {n} sample labels, got {}",
                sample_ids.len()
            )));
        }
        if taxon_ids.len() != m {
            return Err(Error::Input(format!(
                "expected {m} taxon labels, got {}",
                taxon_ids.len()
            )));
        }
        Ok(Self {
            values,
            sample_ids,
            taxon_ids,
        })
    }

    /// Convenience constructor with generated labels (`sample_1..`, `taxon_1..`).
    pub fn from_values(values: Array2<u64>) -> Result<Self> {
        let (n, m) = values.dim();
        let sample_ids = (1..=n).map(|i| format!("sample_{i}")).collect();
        let taxon_ids = (1..=m).map(|j| format!("taxon_{j}")).collect();
        Self::new(values, sample_ids, taxon_ids)
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_taxa(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<u64> {
        &self.values
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn taxon_ids(&self) -> &[String] {
        &self.taxon_ids
    }

    pub fn get(&self, cell: Cell) -> u64 {
        self.values[[cell.0, cell.1]]
    }
}

/// Relative library sizes `N_i = rowsum_i / median(rowsums)`.
///
/// All entries are positive and their median is 1 by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetVector {
    values: Vec<f64>,
}

impl OffsetVector {
    /// Offsets from full row sums.
    pub fn from_counts(a: &CountMatrix) -> Result<Self> {
        Self::from_counts_masked(a, None)
    }

    /// Offsets from row sums over observed cells only; held-out cells are
    /// excluded before taking the median.
    pub fn from_counts_masked(a: &CountMatrix, mask: Option<&HeldOutMask>) -> Result<Self> {
        let n = a.n_samples();
        let m = a.n_taxa();
        let mut row_sums = vec![0.0f64; n];
        for i in 0..n {
            let mut sum = 0u64;
            for j in 0..m {
                if mask.is_some_and(|h| h.contains((i, j))) {
                    continue;
                }
                sum += a.values[[i, j]];
            }
            if sum == 0 {
                return Err(Error::Input(format!(
                    "sample '{}' (row {i}) has no observed reads; cannot form an offset",
                    a.sample_ids[i]
                )));
            }
            row_sums[i] = sum as f64;
        }
        let med = median(&row_sums);
        let values = row_sums.iter().map(|&s| s / med).collect();
        Ok(Self { values })
    }

    /// Wraps already-computed offsets, revalidating the invariants
    /// (positivity, unit median).
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("empty offset vector".into()));
        }
        if let Some(bad) = values.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Input(format!("offsets must be positive, got {bad}")));
        }
        let med = median(&values);
        if (med - 1.0).abs() > 1e-6 {
            return Err(Error::Input(format!(
                "offset median must be 1 by construction, got {med}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl std::ops::Index<usize> for OffsetVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Median with midpoint interpolation for even lengths.
pub(crate) fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Relative library sizes from full row sums (see [`OffsetVector`]).
pub fn relative_library_size(a: &CountMatrix) -> Result<OffsetVector> {
    OffsetVector::from_counts(a)
}

/// A validated set of held-out cells over an `n x m` matrix.
///
/// Construction guarantees the indices are in range and duplicate-free and
/// that every row and column keeps at least one observed cell.
#[derive(Debug, Clone)]
pub struct HeldOutMask {
    n: usize,
    m: usize,
    cells: Vec<Cell>,
    grid: Array2<bool>,
}

impl HeldOutMask {
    pub fn new(n: usize, m: usize, mut cells: Vec<Cell>) -> Result<Self> {
        cells.sort_unstable();
        let mut grid = Array2::from_elem((n, m), false);
        let mut row_left = vec![m; n];
        let mut col_left = vec![n; m];
        let mut prev: Option<Cell> = None;
        for &(i, j) in &cells {
            if i >= n || j >= m {
                return Err(Error::Input(format!(
                    "held-out cell ({i}, {j}) out of range for a {n}x{m} matrix"
                )));
            }
            if prev == Some((i, j)) {
                return Err(Error::Input(format!("duplicate held-out cell ({i}, {j})")));
            }
            prev = Some((i, j));
            grid[[i, j]] = true;
            row_left[i] -= 1;
            col_left[j] -= 1;
        }
        if let Some(i) = row_left.iter().position(|&c| c == 0) {
            return Err(Error::Input(format!(
                "row {i} would have no observed cells left"
            )));
        }
        if let Some(j) = col_left.iter().position(|&c| c == 0) {
            return Err(Error::Input(format!(
                "column {j} would have no observed cells left"
            )));
        }
        Ok(Self { n, m, cells, grid })
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.grid[[cell.0, cell.1]]
    }

    /// Held-out cells in sorted order.
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    /// Writes the mask as `row_index,col_index` CSV lines (zero-based).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("row_index,col_index\n");
        for &(i, j) in &self.cells {
            writeln!(out, "{i},{j}").expect("string write");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads a mask written by [`HeldOutMask::save`].
    pub fn load(path: &Path, n: usize, m: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cells = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("row_index")) {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<usize> {
                s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                    Error::Input(format!("mask line {}: expected 'row,col'", lineno + 1))
                })
            };
            let i = parse(parts.next())?;
            let j = parse(parts.next())?;
            cells.push((i, j));
        }
        Self::new(n, m, cells)
    }
}

/// Replaces zero or held-out entries by the mean of the column's remaining
/// nonzero observed entries, then takes the elementwise natural log.
///
/// Columns whose observed entries are all zero cannot be imputed and yield a
/// [`Error::DegenerateColumn`].
pub fn impute_log(a: &CountMatrix, held_out: Option<&HeldOutMask>) -> Result<Array2<f64>> {
    let (n, m) = a.values.dim();
    let mut out = Array2::zeros((n, m));
    for j in 0..m {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            let v = a.values[[i, j]];
            let masked = held_out.is_some_and(|h| h.contains((i, j)));
            if v > 0 && !masked {
                sum += v as f64;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::DegenerateColumn {
                index: j,
                label: a.taxon_ids[j].clone(),
            });
        }
        let mean = sum / count as f64;
        for i in 0..n {
            let v = a.values[[i, j]];
            let masked = held_out.is_some_and(|h| h.contains((i, j)));
            let filled = if v == 0 || masked { mean } else { v as f64 };
            out[[i, j]] = filled.ln();
        }
    }
    Ok(out)
}

/// Randomly splits the `n*m` cell indices into `r` subsets whose sizes differ
/// by at most one. A draw that leaves some row or column entirely held out in
/// one of the folds is redrawn, up to [`PARTITION_RETRY_LIMIT`] times.
pub fn partition_indices(n: usize, m: usize, r: usize, seed: u64) -> Result<Vec<HeldOutMask>> {
    if r < 2 {
        return Err(Error::Argument(format!("need at least 2 folds, got {r}")));
    }
    let total = n * m;
    if r > total {
        return Err(Error::Argument(format!(
            "cannot split {total} cells into {r} folds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<Cell> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let base = total / r;
    let remainder = total % r;

    let mut last_blocker = String::new();
    for _ in 0..PARTITION_RETRY_LIMIT {
        cells.shuffle(&mut rng);
        let mut folds = Vec::with_capacity(r);
        let mut start = 0usize;
        let mut ok = true;
        for t in 0..r {
            let size = base + usize::from(t < remainder);
            let chunk = cells[start..start + size].to_vec();
            start += size;
            match HeldOutMask::new(n, m, chunk) {
                Ok(mask) => folds.push(mask),
                Err(e) => {
                    last_blocker = e.to_string();
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(folds);
        }
    }
    Err(Error::PartitionInfeasible {
        n,
        m,
        folds: r,
        reason: format!("{PARTITION_RETRY_LIMIT} redraws exhausted; last blocker: {last_blocker}"),
    })
}

fn sniff_delimiter(header: &str) -> char {
    if header.contains('\t') {
        '\t'
    } else {
        ','
    }
}

fn parse_count(cell: &str, row_label: &str, col_label: &str) -> Result<u64> {
    let trimmed = cell.trim();
    if let Ok(v) = trimmed.parse::<u64>() {
        return Ok(v);
    }
    let detail = match trimmed.parse::<f64>() {
        Ok(v) if v < 0.0 => "counts must be non-negative",
        Ok(_) => "counts must be integers",
        Err(_) => "not a number",
    };
    Err(Error::Input(format!(
        "row '{row_label}', column '{col_label}': invalid count '{trimmed}' ({detail})"
    )))
}

/// Loads a count matrix from a delimited text file.
///
/// Expected layout: a header `sample_id,<taxon_1>,...,<taxon_m>` followed by
/// one row per sample whose first field is the sample label. Comma and tab
/// delimiters are auto-detected from the header.
pub fn load_counts(path: &Path) -> Result<CountMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_counts(&text)
}

/// Parses the count-file format from an in-memory string. See [`load_counts`].
pub fn parse_counts(text: &str) -> Result<CountMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Input("empty count file".into()))?;
    let delim = sniff_delimiter(header);
    let header_fields: Vec<&str> = header.split(delim).map(str::trim).collect();
    if header_fields.len() < 2 {
        return Err(Error::Input(
            "header must name at least one taxon after the sample-id column".into(),
        ));
    }
    let taxon_ids: Vec<String> = header_fields[1..].iter().map(|s| s.to_string()).collect();
    let m = taxon_ids.len();

    let mut sample_ids = Vec::new();
    let mut rows: Vec<u64> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        if fields.len() != m + 1 {
            return Err(Error::Input(format!(
                "row {} ('{}'): expected {} fields, got {}",
                lineno + 2,
                fields.first().copied().unwrap_or(""),
                m + 1,
                fields.len()
            )));
        }
        let sample = fields[0].to_string();
        for (j, cell) in fields[1..].iter().enumerate() {
            rows.push(parse_count(cell, &sample, &taxon_ids[j])?);
        }
        sample_ids.push(sample);
    }
    let n = sample_ids.len();
    if n == 0 {
        return Err(Error::Input("count file has no data rows".into()));
    }
    let values = Array2::from_shape_vec((n, m), rows).expect("shape checked above");
    CountMatrix::new(values, sample_ids, taxon_ids)
}

/// Writes a count matrix in the format read by [`load_counts`] (comma
/// delimited).
pub fn save_counts(a: &CountMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("sample_id");
    for t in &a.taxon_ids {
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
    for i in 0..a.n_samples() {
        out.push_str(&a.sample_ids[i]);
        for j in 0..a.n_taxa() {
            write!(out, ",{}", a.values[[i, j]]).expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
