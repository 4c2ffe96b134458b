//! Partially observed data: masks, masked rows, datasets and their CSV form.
//!
//! A row stores only its observed coordinates, in ascending index order,
//! alongside its [`Mask`]. Absent values therefore have no numeric slot at all
//! and cannot leak into arithmetic. The dense form used at the I/O boundary
//! ([`RawRow`]) is checked by [`validate_raw`] before it becomes a
//! [`MaskedDataset`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

/// Largest supported dimension (masks are stored as a 64-bit set).
pub const MAX_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dimension {0} outside 1..={MAX_DIM}")]
    Dimension(usize),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("invalid dataset: {0}")]
    Invalid(ValidationReport),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Observation pattern of one row: bit `j` set means coordinate `j` is missing.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mask {
    missing: u64,
    dim: u8,
}

impl Mask {
    pub fn all_observed(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Mask { missing: 0, dim: dim as u8 }
    }

    /// Builds a mask from flags (`true` = missing).
    pub fn from_flags(flags: &[bool]) -> Result<Self, DataError> {
        if flags.is_empty() || flags.len() > MAX_DIM {
            return Err(DataError::Dimension(flags.len()));
        }
        let missing = flags.iter().enumerate().fold(0u64, |acc, (j, &m)| if m { acc | (1 << j) } else { acc });
        Ok(Mask { missing, dim: flags.len() as u8 })
    }

    /// Parses `"010"`-style strings (`1` = missing).
    pub fn parse(s: &str) -> Result<Self, DataError> {
        let flags = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => {
                    Err(DataError::Parse { row: 0, col: 0, msg: format!("bad mask character {other:?} in {s:?}") })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Mask::from_flags(&flags)
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn is_missing(&self, j: usize) -> bool {
        self.missing >> j & 1 == 1
    }

    pub fn n_missing(&self) -> usize {
        self.missing.count_ones() as usize
    }

    pub fn n_observed(&self) -> usize {
        self.dim() - self.n_missing()
    }

    /// The forbidden all-missing pattern.
    pub fn is_empty_pattern(&self) -> bool {
        self.n_missing() == self.dim()
    }

    pub fn is_complete(&self) -> bool {
        self.missing == 0
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| !self.is_missing(j)).collect()
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.is_missing(j)).collect()
    }

    pub fn flags(&self) -> Vec<bool> {
        (0..self.dim()).map(|j| self.is_missing(j)).collect()
    }
}

impl Ord for Mask {
    // lexicographic on (b_1, ..., b_d)
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dim.cmp(&other.dim).then_with(|| self.flags().cmp(&other.flags()))
    }
}

impl PartialOrd for Mask {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.dim() {
            f.write_str(if self.is_missing(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask({self})")
    }
}

/// One partially observed row. `observed` holds the observed coordinates in
/// ascending index order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSample {
    observed: Vec<f64>,
    mask: Mask,
}

impl MaskedSample {
    /// Builds a row from dense cells (`None` = absent).
    pub fn from_cells(cells: &[Option<f64>]) -> Result<Self, DataError> {
        let flags: Vec<bool> = cells.iter().map(Option::is_none).collect();
        let mask = Mask::from_flags(&flags)?;
        let observed: Vec<f64> = cells.iter().flatten().copied().collect();
        Self::new(observed, mask)
    }

    /// Builds a row from its observed subvector and mask.
    pub fn new(observed: Vec<f64>, mask: Mask) -> Result<Self, DataError> {
        if mask.is_empty_pattern() {
            return Err(DataError::Row { row: 0, msg: "empty pattern".into() });
        }
        if observed.len() != mask.n_observed() {
            return Err(DataError::Row {
                row: 0,
                msg: format!(
                    "{} observed values for mask {mask} with {} observed bits",
                    observed.len(),
                    mask.n_observed()
                ),
            });
        }
        if let Some(v) = observed.iter().find(|v| !v.is_finite()) {
            return Err(DataError::Row { row: 0, msg: format!("non-finite observed value {v}") });
        }
        Ok(MaskedSample { observed, mask })
    }

    /// Fully observed row.
    pub fn complete(values: &[f64]) -> Result<Self, DataError> {
        Self::new(values.to_vec(), Mask::all_observed(values.len()))
    }

    /// Observed coordinates in ascending index order.
    pub fn project(&self) -> &[f64] {
        &self.observed
    }

    pub fn mask(&self) -> Mask {
        self.mask
    }

    pub fn dim(&self) -> usize {
        self.mask.dim()
    }

    /// Value at coordinate `j`, `None` when masked.
    pub fn get(&self, j: usize) -> Option<f64> {
        if self.mask.is_missing(j) {
            return None;
        }
        let pos = (0..j).filter(|&i| !self.mask.is_missing(i)).count();
        Some(self.observed[pos])
    }

    pub fn cells(&self) -> Vec<Option<f64>> {
        (0..self.dim()).map(|j| self.get(j)).collect()
    }
}

/// Fully observed data, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteDataset {
    d: usize,
    data: Vec<f64>,
}

impl CompleteDataset {
    pub fn new(d: usize, data: Vec<f64>) -> Result<Self, DataError> {
        if d == 0 || d > MAX_DIM {
            return Err(DataError::Dimension(d));
        }
        if !data.len().is_multiple_of(d) {
            return Err(DataError::Row {
                row: data.len() / d,
                msg: format!("buffer length {} not a multiple of d={d}", data.len()),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Parse {
                row: pos / d,
                col: pos % d,
                msg: "non-finite value in complete data".into(),
            });
        }
        Ok(CompleteDataset { d, data })
    }

    pub fn from_rows(d: usize, rows: &[Vec<f64>]) -> Result<Self, DataError> {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(DataError::Row { row: i, msg: format!("length {} != d={d}", r.len()) });
        }
        Self::new(d, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// The same data with every coordinate observed.
    pub fn to_masked(&self) -> MaskedDataset {
        let rows =
            self.rows().map(|r| MaskedSample { observed: r.to_vec(), mask: Mask::all_observed(self.d) }).collect();
        MaskedDataset::from_samples(self.d, rows).expect("complete rows are valid")
    }
}

/// Partially observed dataset with its pattern census.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDataset {
    d: usize,
    rows: Vec<MaskedSample>,
    census: BTreeMap<Mask, usize>,
}

impl MaskedDataset {
    pub fn from_samples(d: usize, rows: Vec<MaskedSample>) -> Result<Self, DataError> {
        if d == 0 || d > MAX_DIM {
            return Err(DataError::Dimension(d));
        }
        let report = validate_samples(d, &rows);
        if !report.is_ok() {
            return Err(DataError::Invalid(report));
        }
        let census = census_of(rows.iter().map(|r| r.mask));
        Ok(MaskedDataset { d, rows, census })
    }

    /// Checks dense rows and converts them.
    pub fn from_raw(d: usize, raw: &[RawRow]) -> Result<Self, DataError> {
        let report = validate_raw(d, raw);
        if !report.is_ok() {
            return Err(DataError::Invalid(report));
        }
        let rows = raw
            .iter()
            .map(|r| MaskedSample {
                observed: r
                    .values
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| !r.mask.is_missing(*j))
                    .map(|(_, v)| *v)
                    .collect(),
                mask: r.mask,
            })
            .collect();
        Self::from_samples(d, rows)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[MaskedSample] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &MaskedSample {
        &self.rows[i]
    }

    /// Distinct masks with their row counts, lexicographic on mask bits.
    pub fn pattern_census(&self) -> &BTreeMap<Mask, usize> {
        &self.census
    }

    pub fn validate(&self) -> ValidationReport {
        validate_samples(self.d, &self.rows)
    }

    /// Observed values of coordinate `j`.
    pub fn observed_column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.get(j)).collect()
    }

    pub fn to_raw(&self) -> Vec<RawRow> {
        self.rows
            .iter()
            .map(|r| RawRow { values: r.cells().into_iter().map(|c| c.unwrap_or(f64::NAN)).collect(), mask: r.mask })
            .collect()
    }
}

/// Census over any mask sequence.
pub fn census_of(masks: impl IntoIterator<Item = Mask>) -> BTreeMap<Mask, usize> {
    let mut census = BTreeMap::new();
    for m in masks {
        *census.entry(m).or_insert(0) += 1;
    }
    census
}

/// Dense row as it arrives from outside: `values` has one slot per coordinate
/// and masked slots are expected to hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub values: Vec<f64>,
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyPattern { row: usize },
    ValueUnderMask { row: usize, col: usize },
    AbsentUnderObserved { row: usize, col: usize },
    DimensionMismatch { row: usize, expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPattern { row } => write!(f, "empty pattern at row {row}"),
            Violation::ValueUnderMask { row, col } => {
                write!(f, "value under mask at row {row}, column {col}")
            }
            Violation::AbsentUnderObserved { row, col } => {
                write!(f, "absent value under observed bit at row {row}, column {col}")
            }
            Violation::DimensionMismatch { row, expected, found } => {
                write!(f, "dimension mismatch at row {row}: expected {expected}, found {found}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&msgs.join("; "))
    }
}

/// Reports every violation in dense rows; never aborts.
pub fn validate_raw(d: usize, rows: &[RawRow]) -> ValidationReport {
    let mut violations = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if r.values.len() != d || r.mask.dim() != d {
            let found = if r.values.len() != d { r.values.len() } else { r.mask.dim() };
            violations.push(Violation::DimensionMismatch { row: i, expected: d, found });
            continue;
        }
        if r.mask.is_empty_pattern() {
            violations.push(Violation::EmptyPattern { row: i });
        }
        for (j, v) in r.values.iter().enumerate() {
            match (r.mask.is_missing(j), v.is_finite()) {
                (true, true) => violations.push(Violation::ValueUnderMask { row: i, col: j }),
                (false, false) => violations.push(Violation::AbsentUnderObserved { row: i, col: j }),
                _ => {}
            }
        }
    }
    ValidationReport { violations }
}

fn validate_samples(d: usize, rows: &[MaskedSample]) -> ValidationReport {
    let mut violations = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if r.mask.dim() != d {
            violations.push(Violation::DimensionMismatch { row: i, expected: d, found: r.mask.dim() });
            continue;
        }
        if r.mask.is_empty_pattern() {
            violations.push(Violation::EmptyPattern { row: i });
        }
        if r.observed.len() != r.mask.n_observed() {
            violations.push(Violation::DimensionMismatch {
                row: i,
                expected: r.mask.n_observed(),
                found: r.observed.len(),
            });
            continue;
        }
        for (pos, j) in r.mask.observed_indices().into_iter().enumerate() {
            if !r.observed[pos].is_finite() {
                violations.push(Violation::AbsentUnderObserved { row: i, col: j });
            }
        }
    }
    ValidationReport { violations }
}

/// 17 significant digits, `.` decimal separator.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a header `x1,...,xd` and one line per row.
pub fn write_masked_csv_to<W: Write>(dataset: &MaskedDataset, out: W, absent_token: &str) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record((1..=dataset.dim()).map(|j| format!("x{j}")))?;
    for r in dataset.rows() {
        w.write_record(r.cells().iter().map(|c| match c {
            Some(v) => fmt_f64(*v),
            None => absent_token.to_string(),
        }))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_masked_csv(dataset: &MaskedDataset, path: impl AsRef<Path>, absent_token: &str) -> Result<(), DataError> {
    let f = std::fs::File::create(path)?;
    write_masked_csv_to(dataset, std::io::BufWriter::new(f), absent_token)
}

pub fn write_complete_csv(data: &CompleteDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let f = std::fs::File::create(path)?;
    let mut w = csv::WriterBuilder::new().from_writer(std::io::BufWriter::new(f));
    w.write_record((1..=data.dim()).map(|j| format!("x{j}")))?;
    for r in data.rows() {
        w.write_record(r.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a header-led numeric CSV. Row numbers in errors are 1-based data
/// rows (the header is row 0); columns are 1-based.
pub fn read_masked_csv_from<R: Read>(input: R, absent_token: &str) -> Result<MaskedDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(input);
    let d = rdr.headers()?.len();
    if d == 0 || d > MAX_DIM {
        return Err(DataError::Dimension(d));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != d {
            return Err(DataError::Parse {
                row,
                col: rec.len().min(d) + 1,
                msg: format!("ragged row: {} cells, expected {d}", rec.len()),
            });
        }
        let mut cells = Vec::with_capacity(d);
        for (j, cell) in rec.iter().enumerate() {
            if cell == absent_token {
                cells.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                row,
                col: j + 1,
                msg: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse { row, col: j + 1, msg: format!("non-finite value {cell:?}") });
            }
            cells.push(Some(v));
        }
        if cells.iter().all(Option::is_none) {
            return Err(DataError::Parse { row, col: 1, msg: "all cells absent".into() });
        }
        rows.push(MaskedSample::from_cells(&cells).map_err(|e| DataError::Row { row, msg: e.to_string() })?);
    }
    MaskedDataset::from_samples(d, rows)
}

pub fn read_masked_csv(path: impl AsRef<Path>, absent_token: &str) -> Result<MaskedDataset, DataError> {
    let f = std::fs::File::open(path)?;
    read_masked_csv_from(std::io::BufReader::new(f), absent_token)
}

/// Reads a CSV that must be fully observed.
pub fn read_complete_csv(path: impl AsRef<Path>) -> Result<CompleteDataset, DataError> {
    let masked = read_masked_csv(path, "NA")?;
    if let Some(i) = masked.rows().iter().position(|r| !r.mask().is_complete()) {
        return Err(DataError::Row { row: i + 1, msg: "absent value in complete data".into() });
    }
    let data = masked.rows().iter().flat_map(|r| r.project().iter().copied()).collect();
    CompleteDataset::new(masked.dim(), data)
}
