//! Categorical points, designs, one-hot encodings and Hamming geometry.
//!
//! Every public interface uses 1-indexed factor levels: a point with `d`
//! factors and `M` levels per factor has each entry in `1..=M`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

fn check_lattice(d: usize, m: u32) -> Result<()> {
    if d == 0 || m < 2 {
        return Err(Error::InvalidLattice { d, m });
    }
    Ok(())
}

/// Number of points in the lattice `[M]^d`, or `None` on overflow.
pub fn lattice_size(d: usize, m: u32) -> Option<u64> {
    let mut size: u64 = 1;
    for _ in 0..d {
        size = size.checked_mul(m as u64)?;
    }
    Some(size)
}

/// A point of the categorical lattice `[M]^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    levels: Vec<u32>,
    m: u32,
}

impl Point {
    pub fn new(levels: Vec<u32>, m: u32) -> Result<Self> {
        check_lattice(levels.len(), m)?;
        for (factor, &level) in levels.iter().enumerate() {
            if level == 0 || level > m {
                return Err(Error::InvalidLevel { factor, level, m });
            }
        }
        Ok(Self { levels, m })
    }

    /// Builds a point from 0-indexed levels. Callers guarantee validity.
    pub(crate) fn from_zero_based<I: IntoIterator<Item = usize>>(levels: I, m: u32) -> Self {
        let levels: Vec<u32> = levels.into_iter().map(|l| l as u32 + 1).collect();
        debug_assert!(levels.iter().all(|&l| l >= 1 && l <= m));
        Self { levels, m }
    }

    /// The `index`-th point of the lattice in lexicographic order, with the
    /// first factor most significant.
    pub fn from_index(mut index: u64, d: usize, m: u32) -> Result<Self> {
        check_lattice(d, m)?;
        match lattice_size(d, m) {
            Some(size) if index < size => {}
            _ => return Err(Error::InvalidParameter(format!("lattice index {index} out of range"))),
        }
        let mut levels = vec![0u32; d];
        for slot in levels.iter_mut().rev() {
            *slot = (index % m as u64) as u32 + 1;
            index /= m as u64;
        }
        Ok(Self { levels, m })
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn d(&self) -> usize {
        self.levels.len()
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub(crate) fn zero_based(&self, factor: usize) -> usize {
        (self.levels[factor] - 1) as usize
    }

    fn check_compatible(&self, other: &Point) -> Result<()> {
        if self.d() != other.d() || self.m != other.m {
            return Err(Error::DimensionMismatch {
                expected_d: self.d(),
                expected_m: self.m,
                got_d: other.d(),
                got_m: other.m,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, l) in self.levels.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

/// A run of `n` points sharing `(d, M)`. Duplicates are allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Design {
    points: Vec<Point>,
    d: usize,
    m: u32,
}

impl Design {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyDesign)?;
        let (d, m) = (first.d(), first.m());
        for p in &points[1..] {
            first.check_compatible(p)?;
        }
        Ok(Self { points, d, m })
    }

    pub fn from_rows(rows: Vec<Vec<u32>>, m: u32) -> Result<Self> {
        let points = rows
            .into_iter()
            .map(|r| Point::new(r, m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn push(&mut self, point: Point) -> Result<()> {
        self.points[0].check_compatible(&point)?;
        self.points.push(point);
        Ok(())
    }

    pub fn rows(&self) -> Vec<Vec<u32>> {
        self.points.iter().map(|p| p.levels.clone()).collect()
    }

    pub fn to_file(&self) -> DesignFile {
        DesignFile {
            schema_version: SCHEMA_VERSION,
            n: self.n(),
            d: self.d,
            m: self.m,
            points: self.rows(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("design serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: DesignFile = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("design JSON: {e}")))?;
        file.into_design()
    }

    /// Parses a headerless CSV with one point per row. When `m` is `None`
    /// the level count is the largest level seen (at least 2).
    pub fn from_csv_str(text: &str, m: Option<u32>) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .enumerate()
                .map(|(field, s)| {
                    s.trim().parse::<u32>().map_err(|e| {
                        Error::Parse(format!(
                            "design CSV line {}, field {}: {:?}: {e}",
                            lineno + 1,
                            field + 1,
                            s.trim()
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first().map(Vec::len) {
                if row.len() != first {
                    return Err(Error::Parse(format!(
                        "design CSV line {}: expected {first} fields, found {}",
                        lineno + 1,
                        row.len()
                    )));
                }
            }
            rows.push(row);
        }
        let m = m.unwrap_or_else(|| rows.iter().flatten().copied().max().unwrap_or(2).max(2));
        Self::from_rows(rows, m)
    }

    /// Reads a design from a `.json` or headerless `.csv` file.
    pub fn read(path: &Path, m: Option<u32>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
            || text.trim_start().starts_with('{');
        if is_json {
            let design = Self::from_json_str(&text)?;
            if let Some(m) = m {
                if m != design.m() {
                    return Err(Error::Parse(format!(
                        "design file declares M = {} but {m} was requested",
                        design.m()
                    )));
                }
            }
            Ok(design)
        } else {
            Self::from_csv_str(&text, m)
        }
    }
}

/// On-disk JSON form of a [`Design`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignFile {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "M")]
    pub m: u32,
    pub points: Vec<Vec<u32>>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

impl DesignFile {
    pub fn into_design(self) -> Result<Design> {
        if self.points.len() != self.n {
            return Err(Error::Parse(format!(
                "field \"n\" is {} but \"points\" has {} rows",
                self.n,
                self.points.len()
            )));
        }
        for (i, row) in self.points.iter().enumerate() {
            if row.len() != self.d {
                return Err(Error::Parse(format!(
                    "field \"points\"[{i}] has {} entries, expected d = {}",
                    row.len(),
                    self.d
                )));
            }
        }
        Design::from_rows(self.points, self.m)
    }
}

/// Binary `d x M` one-hot encoding of a point; each row sums to one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneHotMatrix {
    d: usize,
    m: usize,
    bits: Vec<u8>,
}

impl OneHotMatrix {
    /// Wraps raw rows without checking the sum-to-one constraint; use
    /// [`decode`] to validate.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let d = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        check_lattice(d, m as u32)?;
        let mut bits = Vec::with_capacity(d * m);
        for row in rows {
            if row.len() != m || row.iter().any(|&b| b > 1) {
                return Err(Error::Parse("one-hot rows must be binary and equally long".into()));
            }
            bits.extend_from_slice(row);
        }
        Ok(Self { d, m, bits })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Entry for factor `j` (0-indexed) and column `k` (0-indexed, level `k + 1`).
    pub fn get(&self, j: usize, k: usize) -> u8 {
        self.bits[j * self.m + k]
    }

    pub fn row(&self, j: usize) -> &[u8] {
        &self.bits[j * self.m..(j + 1) * self.m]
    }

    /// `tr(A B^T)`: the number of factors at which both encodings agree.
    pub fn trace_product(&self, other: &OneHotMatrix) -> Result<usize> {
        if self.d != other.d || self.m != other.m {
            return Err(Error::DimensionMismatch {
                expected_d: self.d,
                expected_m: self.m as u32,
                got_d: other.d,
                got_m: other.m as u32,
            });
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| (a * b) as usize)
            .sum())
    }
}

/// Binary `n x d x M` encoding of a design.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneHotTensor {
    pub slices: Vec<OneHotMatrix>,
}

pub fn encode(x: &Point) -> OneHotMatrix {
    let (d, m) = (x.d(), x.m() as usize);
    let mut bits = vec![0u8; d * m];
    for j in 0..d {
        bits[j * m + x.zero_based(j)] = 1;
    }
    OneHotMatrix { d, m, bits }
}

pub fn decode(matrix: &OneHotMatrix) -> Result<Point> {
    let mut levels = Vec::with_capacity(matrix.d);
    for j in 0..matrix.d {
        let row = matrix.row(j);
        let sum: usize = row.iter().map(|&b| b as usize).sum();
        if sum != 1 {
            return Err(Error::MalformedRow { row: j, sum });
        }
        let k = row.iter().position(|&b| b == 1).expect("row has a one");
        levels.push(k as u32 + 1);
    }
    Point::new(levels, matrix.m as u32)
}

pub fn encode_design(design: &Design) -> OneHotTensor {
    OneHotTensor {
        slices: design.points().iter().map(encode).collect(),
    }
}

/// Number of factors at which `x` and `y` differ.
pub fn hamming(x: &Point, y: &Point) -> Result<usize> {
    x.check_compatible(y)?;
    Ok(x.levels.iter().zip(&y.levels).filter(|(a, b)| a != b).count())
}

/// Smallest Hamming distance over all pairs of design points.
pub fn min_pairwise_distance(design: &Design) -> Result<usize> {
    let n = design.n();
    if n < 2 {
        return Err(Error::NeedsTwoPoints(n));
    }
    let pts = design.points();
    let mut best = design.d();
    for i in 0..n {
        for k in (i + 1)..n {
            best = best.min(hamming(&pts[i], &pts[k])?);
            if best == 0 {
                return Ok(0);
            }
        }
    }
    Ok(best)
}
