//! Binary outcome encoding.
//!
//! An observation `x ∈ {0,1}^m` corresponds to the cell whose index (0-based)
//! has `x` as its binary representation, first coordinate most significant.
//! Column `k` of `H` is therefore the bit pattern of `k`. External interfaces
//! (CSV, JSON, [`encode_outcome`]) number cells from 1.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Field;

pub const DEFAULT_M_MAX: usize = 14;

/// Dense 0/1 matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl BinaryMatrix {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.bits[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.cols..(i + 1) * self.cols]
    }

    fn set_row(&mut self, i: usize, row: &[u8]) {
        self.bits[i * self.cols..(i + 1) * self.cols].copy_from_slice(row);
    }

    /// Dense copy with entries in `T`.
    pub fn to_matrix<T: Field>(&self) -> crate::linalg::Matrix<T> {
        let data = self
            .bits
            .iter()
            .map(|&b| if b == 1 { T::one() } else { T::zero() })
            .collect();
        crate::linalg::Matrix::from_row_major(self.rows, self.cols, data).expect("shape matches")
    }

    /// `self · v` with the 0/1 entries acting as selectors.
    pub fn apply<T: Field>(&self, v: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .filter(|(b, _)| **b == 1)
                    .fold(T::zero(), |acc, (_, x)| acc + x.clone())
            })
            .collect()
    }

    /// `selfᵀ · b`.
    pub fn apply_transpose<T: Field>(&self, b: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for (i, bi) in b.iter().enumerate().take(self.rows) {
            if bi.is_zero() {
                continue;
            }
            for (o, bit) in out.iter_mut().zip(self.row(i)) {
                if *bit == 1 {
                    *o = o.clone() + bi.clone();
                }
            }
        }
        out
    }
}

impl fmt::Display for BinaryMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(u8::to_string).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// The transformation matrices for dimension `m`: `H` (m × w), the pairwise
/// products `H2` (m(m−1)/2 × w) and the stacked `Htilde` = [H; H2; 1ᵀ].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HBasis {
    m: usize,
    h: BinaryMatrix,
    h2: BinaryMatrix,
    htilde: BinaryMatrix,
    pairs: Vec<(usize, usize)>,
}

impl HBasis {
    pub fn new(m: usize) -> Result<Self> {
        Self::with_limit(m, DEFAULT_M_MAX)
    }

    pub fn with_limit(m: usize, m_max: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyDimension);
        }
        if m > m_max || m >= usize::BITS as usize {
            return Err(Error::DimensionTooLarge { m, max: m_max });
        }
        let w = 1usize << m;
        let mut h = BinaryMatrix::zeros(m, w);
        for j in 0..m {
            for k in 0..w {
                h.bits[j * w + k] = bit_of(k, j, m);
            }
        }
        let pairs = upper_pairs(m);
        let mut h2 = BinaryMatrix::zeros(pairs.len(), w);
        for (p, &(j, l)) in pairs.iter().enumerate() {
            let row: Vec<u8> = h.row(j).iter().zip(h.row(l)).map(|(a, b)| a & b).collect();
            h2.set_row(p, &row);
        }
        let r = 1 + m * (m + 1) / 2;
        let mut htilde = BinaryMatrix::zeros(r, w);
        for j in 0..m {
            htilde.set_row(j, h.row(j));
        }
        for p in 0..pairs.len() {
            htilde.set_row(m + p, h2.row(p));
        }
        htilde.set_row(r - 1, &vec![1; w]);
        Ok(Self {
            m,
            h,
            h2,
            htilde,
            pairs,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of cells, `2^m`.
    pub fn w(&self) -> usize {
        self.h.cols
    }

    /// Number of rows of `Htilde`, `1 + m(m+1)/2`.
    pub fn r(&self) -> usize {
        self.htilde.rows
    }

    pub fn h(&self) -> &BinaryMatrix {
        &self.h
    }

    pub fn h2(&self) -> &BinaryMatrix {
        &self.h2
    }

    pub fn htilde(&self) -> &BinaryMatrix {
        &self.htilde
    }

    /// Coordinate pairs `(j, j')`, `j < j'`, in the row order of `H2`.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Outcome vector of the 0-based cell `k`.
    pub fn column(&self, k: usize) -> Vec<u8> {
        (0..self.m).map(|j| self.h.get(j, k)).collect()
    }

    /// Entrywise product of the rows of `H` indexed by `set` (0-based
    /// coordinates): the indicator of cells whose outcome is 1 on all of `set`.
    pub fn hadamard_row(&self, set: &[usize]) -> Result<Vec<u8>> {
        if set.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        if let Some(&bad) = set.iter().find(|&&j| j >= self.m) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                m: self.m,
            });
        }
        let mut out = vec![1u8; self.w()];
        for &j in set {
            for (o, b) in out.iter_mut().zip(self.h.row(j)) {
                *o &= *b;
            }
        }
        Ok(out)
    }

    /// `H diag(weights) Hᵀ` for nonnegative integer weights, e.g. the update
    /// matrix built from cell counts.
    pub fn weighted_gram<T: Field>(&self, weights: &[T]) -> Result<crate::linalg::Matrix<T>> {
        if weights.len() != self.w() {
            return Err(Error::LengthMismatch {
                expected: self.w(),
                found: weights.len(),
            });
        }
        let m = self.m;
        let mut out = crate::linalg::Matrix::<T>::zeros(m, m);
        for (k, g) in weights.iter().enumerate() {
            if g.is_zero() {
                continue;
            }
            for j in 0..m {
                if self.h.get(j, k) == 0 {
                    continue;
                }
                for l in j..m {
                    if self.h.get(l, k) == 1 {
                        out[(j, l)] = out[(j, l)].clone() + g.clone();
                    }
                }
            }
        }
        for j in 0..m {
            for l in 0..j {
                out[(j, l)] = out[(l, j)].clone();
            }
        }
        Ok(out)
    }
}

fn bit_of(k: usize, j: usize, m: usize) -> u8 {
    ((k >> (m - 1 - j)) & 1) as u8
}

pub(crate) fn upper_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|j| (j + 1..m).map(move |l| (j, l)))
        .collect()
}

/// Build the basis for dimension `m` under the default size limit.
pub fn build_basis(m: usize) -> Result<HBasis> {
    HBasis::new(m)
}

/// 1-based cell number of a binary outcome.
pub fn encode_outcome(x: &[u8]) -> Result<usize> {
    Ok(cell_of(x)? + 1)
}

/// Binary outcome of the 1-based cell number `k` in dimension `m`.
pub fn decode_outcome(k: usize, m: usize) -> Result<Vec<u8>> {
    if m == 0 || m >= usize::BITS as usize {
        return Err(Error::EmptyDimension);
    }
    if k == 0 || k > (1usize << m) {
        return Err(Error::IndexOutOfRange { index: k, m });
    }
    Ok((0..m).map(|j| bit_of(k - 1, j, m)).collect())
}

/// 0-based cell of a binary outcome.
pub(crate) fn cell_of(x: &[u8]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::EmptyDimension);
    }
    x.iter()
        .enumerate()
        .try_fold(0usize, |acc, (col, &b)| match b {
            0 | 1 => Ok((acc << 1) | b as usize),
            _ => Err(Error::NonBinaryEntry { row: 0, col }),
        })
}

/// Multinomial cell counts `d` of an n × m binary data matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellCounts {
    m: usize,
    d: Vec<u64>,
}

impl CellCounts {
    pub fn zeros(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyDimension);
        }
        if m > DEFAULT_M_MAX {
            return Err(Error::DimensionTooLarge {
                m,
                max: DEFAULT_M_MAX,
            });
        }
        Ok(Self {
            m,
            d: vec![0; 1 << m],
        })
    }

    pub fn from_counts(m: usize, d: Vec<u64>) -> Result<Self> {
        let empty = Self::zeros(m)?;
        if d.len() != empty.d.len() {
            return Err(Error::LengthMismatch {
                expected: empty.d.len(),
                found: d.len(),
            });
        }
        Ok(Self { m, d })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn counts(&self) -> &[u64] {
        &self.d
    }

    /// Total number of observations `n = ||d||₁`.
    pub fn n(&self) -> u64 {
        self.d.iter().sum()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.m != other.m {
            return Err(Error::LengthMismatch {
                expected: self.d.len(),
                found: other.d.len(),
            });
        }
        Ok(Self {
            m: self.m,
            d: self.d.iter().zip(&other.d).map(|(a, b)| a + b).collect(),
        })
    }

    /// Adds one observation.
    pub fn record(&mut self, x: &[u8]) -> Result<()> {
        if x.len() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                found: x.len(),
            });
        }
        let k = cell_of(x)?;
        self.d[k] += 1;
        Ok(())
    }

    pub fn as_field<T: Field>(&self) -> Vec<T> {
        self.d.iter().map(|&c| T::from_count(c)).collect()
    }
}

/// Tabulates the rows of a binary data matrix into cell counts.
pub fn cell_counts(m: usize, rows: &[Vec<u8>]) -> Result<CellCounts> {
    let mut out = CellCounts::zeros(m)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                found: row.len(),
            });
        }
        if let Some(col) = row.iter().position(|&b| b > 1) {
            return Err(Error::NonBinaryEntry { row: i, col });
        }
        out.record(row)?;
    }
    Ok(out)
}
