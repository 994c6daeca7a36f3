//! Score matrices, their CSV wire format, and reproducible splits.
//!
//! Wire format: header `sample_id,origin,<name1>,...,<nameD>` followed by one
//! row per sample. Detector names and origins use `[A-Za-z0-9_+-]` only, so
//! fields never need quoting; ID rows carry the origin `id`, anomaly rows
//! carry the name of the set they came from.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::SplitMix64;
use crate::scalar::Real;

/// Origin value that marks in-distribution rows.
pub const ID_ORIGIN: &str = "id";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix<T> {
    detector_names: Vec<String>,
    sample_ids: Vec<String>,
    origins: Vec<String>,
    values: Mat<T>,
}

impl<T: Real> ScoreMatrix<T> {
    /// Builds a matrix, enforcing every structural invariant of the wire
    /// format (name charset and uniqueness, unique sample ids, finite
    /// values, at least one row and one column).
    pub fn new(
        detector_names: Vec<String>,
        sample_ids: Vec<String>,
        origins: Vec<String>,
        values: Mat<T>,
    ) -> Result<Self> {
        if detector_names.is_empty() {
            return Err(Error::invalid("a score matrix needs at least one detector"));
        }
        if sample_ids.is_empty() {
            return Err(Error::invalid("a score matrix needs at least one row"));
        }
        if sample_ids.len() != origins.len()
            || values.rows() != sample_ids.len()
            || values.cols() != detector_names.len()
        {
            return Err(Error::invalid(format!(
                "inconsistent shapes: {} ids, {} origins, {}x{} values",
                sample_ids.len(),
                origins.len(),
                values.rows(),
                values.cols()
            )));
        }
        let mut seen = HashSet::new();
        for name in &detector_names {
            if !valid_field(name) {
                return Err(Error::invalid(format!(
                    "detector name {name:?} contains characters outside [A-Za-z0-9_+-]"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate detector name {name:?}")));
            }
        }
        let mut ids = HashSet::new();
        for (row, id) in sample_ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::invalid(format!("empty sample_id in row {}", row + 1)));
            }
            if !ids.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate sample_id {id:?}")));
            }
        }
        for (row, origin) in origins.iter().enumerate() {
            if !valid_field(origin) {
                return Err(Error::invalid(format!(
                    "origin {origin:?} in row {} contains characters outside [A-Za-z0-9_+-]",
                    row + 1
                )));
            }
        }
        for r in 0..values.rows() {
            for c in 0..values.cols() {
                if !values.get(r, c).is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite score in row {} column {}",
                        r + 1,
                        detector_names[c]
                    )));
                }
            }
        }
        Ok(ScoreMatrix {
            detector_names,
            sample_ids,
            origins,
            values,
        })
    }

    pub fn detector_names(&self) -> &[String] {
        &self.detector_names
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn origins(&self) -> &[String] {
        &self.origins
    }

    pub fn n_rows(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.detector_names.len()
    }

    pub fn values(&self) -> &Mat<T> {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[T] {
        self.values.row(r)
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.n_rows()).map(|r| self.values.get(r, c)).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.detector_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// True when every row is in-distribution.
    pub fn is_all_id(&self) -> bool {
        self.origins.iter().all(|o| o == ID_ORIGIN)
    }

    /// True when no row is in-distribution.
    pub fn is_all_ood(&self) -> bool {
        self.origins.iter().all(|o| o != ID_ORIGIN)
    }

    /// New matrix with the requested columns in the requested order.
    pub fn select_columns(&self, names: &[String]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("column selection must name at least one detector"));
        }
        let mut seen = HashSet::new();
        for name in names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!(
                    "column {name:?} requested more than once"
                )));
            }
        }
        let indices: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(self.n_rows() * indices.len());
        for r in 0..self.n_rows() {
            for &c in &indices {
                data.push(self.values.get(r, c));
            }
        }
        Ok(ScoreMatrix {
            detector_names: names.to_vec(),
            sample_ids: self.sample_ids.clone(),
            origins: self.origins.clone(),
            values: Mat::from_vec(self.n_rows(), indices.len(), data),
        })
    }

    /// New matrix keeping the given rows (in the given order).
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("row subset must keep at least one row"));
        }
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        let mut ids = Vec::with_capacity(rows.len());
        let mut origins = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.n_rows() {
                return Err(Error::invalid(format!("row index {r} out of range")));
            }
            data.extend_from_slice(self.values.row(r));
            ids.push(self.sample_ids[r].clone());
            origins.push(self.origins[r].clone());
        }
        Ok(ScoreMatrix {
            detector_names: self.detector_names.clone(),
            sample_ids: ids,
            origins,
            values: Mat::from_vec(rows.len(), self.n_cols(), data),
        })
    }

    /// Serializes back to the wire format (atomically: temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("sample_id,origin");
        for name in &self.detector_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for r in 0..self.n_rows() {
            out.push_str(&self.sample_ids[r]);
            out.push(',');
            out.push_str(&self.origins[r]);
            for c in 0..self.n_cols() {
                let _ = write!(out, ",{}", self.values.get(r, c));
            }
            out.push('\n');
        }
        crate::model_doc::write_atomic(path, out.as_bytes())
    }

    /// Parses the wire format, reporting the 1-based line and column of the
    /// first offending cell.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let display = path.display().to_string();
        Self::parse(&text, &display)
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| err(1, "empty file".to_string()))?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() < 3 || fields[0] != "sample_id" || fields[1] != "origin" {
            return Err(err(
                1,
                format!("header must start with sample_id,origin and name at least one detector, got {header:?}"),
            ));
        }
        let detector_names: Vec<String> = fields[2..].iter().map(|s| s.to_string()).collect();
        let width = fields.len();
        let mut sample_ids = Vec::new();
        let mut origins = Vec::new();
        let mut data: Vec<T> = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(err(
                    lineno,
                    format!("expected {width} fields, found {}", cells.len()),
                ));
            }
            sample_ids.push(cells[0].to_string());
            origins.push(cells[1].to_string());
            for (c, cell) in cells[2..].iter().enumerate() {
                let value: f64 = cell.parse().map_err(|_| {
                    err(
                        lineno,
                        format!("column {}: {cell:?} is not a number", detector_names[c]),
                    )
                })?;
                if !value.is_finite() {
                    return Err(err(
                        lineno,
                        format!("column {}: value {cell:?} is not finite", detector_names[c]),
                    ));
                }
                data.push(T::from_f64_c(value));
            }
        }
        if sample_ids.is_empty() {
            return Err(err(1, "no data rows".to_string()));
        }
        let rows = sample_ids.len();
        let cols = detector_names.len();
        ScoreMatrix::new(
            detector_names,
            sample_ids,
            origins,
            Mat::from_vec(rows, cols, data),
        )
    }
}

fn valid_field(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '+' | '-'))
}

/// How to divide rows: positive fractions summing to one, plus the shuffle
/// seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec<T> {
    pub fractions: Vec<T>,
    pub seed: u64,
}

impl<T: Real> SplitSpec<T> {
    pub fn new(fractions: Vec<T>, seed: u64) -> Result<Self> {
        if fractions.iter().any(|f| *f <= T::zero()) {
            return Err(Error::invalid("split fractions must be positive"));
        }
        let total: T = fractions.iter().copied().sum();
        if (total - T::one()).abs() > T::from_f64_c(1e-12) {
            return Err(Error::invalid(format!(
                "split fractions must sum to 1, got {total}"
            )));
        }
        Ok(SplitSpec { fractions, seed })
    }

    /// Default in-distribution split: 25% calibration, 25% validation,
    /// 50% test, seed 42.
    pub fn default_id() -> Self {
        SplitSpec {
            fractions: vec![
                T::from_f64_c(0.25),
                T::from_f64_c(0.25),
                T::from_f64_c(0.5),
            ],
            seed: 42,
        }
    }

    /// Default anomaly split: 50% validation, 50% test, seed 42.
    pub fn default_ood() -> Self {
        SplitSpec {
            fractions: vec![T::from_f64_c(0.5), T::from_f64_c(0.5)],
            seed: 42,
        }
    }
}

/// Named, disjoint row-index sets covering the input matrix. Indices are
/// stored ascending; the shuffle only decides membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBundle {
    parts: Vec<(String, Vec<usize>)>,
}

impl SplitBundle {
    pub fn parts(&self) -> &[(String, Vec<usize>)] {
        &self.parts
    }

    pub fn part(&self, name: &str) -> Result<&[usize]> {
        self.parts
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, idx)| idx.as_slice())
            .ok_or_else(|| Error::invalid(format!("no split part named {name:?}")))
    }
}

/// Integer sizes from fractions by largest remainder; ties go to the lower
/// index.
fn largest_remainder_sizes<T: Real>(fractions: &[T], n: usize) -> Vec<usize> {
    let n_t = T::from_usize(n).unwrap();
    let mut sizes: Vec<usize> = Vec::with_capacity(fractions.len());
    let mut remainders: Vec<(usize, T)> = Vec::with_capacity(fractions.len());
    let mut assigned = 0usize;
    for (i, &f) in fractions.iter().enumerate() {
        let exact = f * n_t;
        let base = exact.floor();
        let size = base.to_usize().unwrap_or(0);
        sizes.push(size);
        assigned += size;
        remainders.push((i, exact - base));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..n.saturating_sub(assigned) {
        sizes[remainders[k % remainders.len()].0] += 1;
    }
    sizes
}

fn partition_indices<T: Real>(
    indices: &mut [usize],
    fractions: &[T],
    rng: &mut SplitMix64,
) -> Vec<Vec<usize>> {
    rng.shuffle(indices);
    let sizes = largest_remainder_sizes(fractions, indices.len());
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        out.push(indices[start..start + size].to_vec());
        start += size;
    }
    out
}

/// Splits an all-ID matrix into calibration/validation/test row sets.
pub fn split_id<T: Real>(matrix: &ScoreMatrix<T>, spec: &SplitSpec<T>) -> Result<SplitBundle> {
    if spec.fractions.len() != 3 {
        return Err(Error::invalid(format!(
            "in-distribution split needs 3 fractions, got {}",
            spec.fractions.len()
        )));
    }
    if !matrix.is_all_id() {
        return Err(Error::invalid(
            "split_id expects every row to have origin \"id\"",
        ));
    }
    let mut indices: Vec<usize> = (0..matrix.n_rows()).collect();
    let mut rng = SplitMix64::new(spec.seed);
    let parts = partition_indices(&mut indices, &spec.fractions, &mut rng);
    let names = ["cal", "val", "test"];
    Ok(SplitBundle {
        parts: names
            .iter()
            .zip(parts)
            .map(|(name, mut idx)| {
                idx.sort_unstable();
                (name.to_string(), idx)
            })
            .collect(),
    })
}

/// Splits an anomaly matrix into validation/test row sets, stratified per
/// origin: each origin group is shuffled and divided separately (sorted
/// origin order, one shared random stream) so every origin keeps the same
/// proportions in both parts.
pub fn split_ood<T: Real>(matrix: &ScoreMatrix<T>, spec: &SplitSpec<T>) -> Result<SplitBundle> {
    if spec.fractions.len() != 2 {
        return Err(Error::invalid(format!(
            "anomaly split needs 2 fractions, got {}",
            spec.fractions.len()
        )));
    }
    if !matrix.is_all_ood() {
        return Err(Error::invalid(
            "split_ood expects no row to have origin \"id\"",
        ));
    }
    let mut origin_names: Vec<&String> = matrix.origins().iter().collect();
    origin_names.sort_unstable();
    origin_names.dedup();
    let mut rng = SplitMix64::new(spec.seed);
    let mut val = Vec::new();
    let mut test = Vec::new();
    for origin in origin_names {
        let mut group: Vec<usize> = (0..matrix.n_rows())
            .filter(|&r| &matrix.origins()[r] == origin)
            .collect();
        let parts = partition_indices(&mut group, &spec.fractions, &mut rng);
        val.extend_from_slice(&parts[0]);
        test.extend_from_slice(&parts[1]);
    }
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitBundle {
        parts: vec![("val".to_string(), val), ("test".to_string(), test)],
    })
}
