//! Observed data and model supports.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ReproError, Result};

/// A response vector with its design matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(ReproError::DimensionMismatch(format!(
                "response has {} entries but design has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(ReproError::InvalidData("design matrix is empty".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(ReproError::InvalidData(format!("response entry {} is not finite", i + 1)));
        }
        for (j, col) in x.column_iter().enumerate() {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(ReproError::InvalidData(format!(
                    "design entry ({}, {}) is not finite",
                    i + 1,
                    j + 1
                )));
            }
            if col.iter().all(|&v| v == 0.0) {
                return Err(ReproError::InvalidData(format!("design column {} is all zero", j + 1)));
            }
        }
        Ok(Dataset { y, x })
    }

    /// Builds a dataset from row-major nested vectors.
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != p) {
            return Err(ReproError::DimensionMismatch(format!(
                "row {} has {} entries, expected {}",
                i + 1,
                rows[i].len(),
                p
            )));
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Dataset::new(DVector::from_vec(y), x)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Sorted, duplicate-free set of covariate indices (0-based).
///
/// Serialized as a list of 1-based indices, the convention used by all
/// file formats and the command line.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelSupport(Vec<usize>);

impl ModelSupport {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        ModelSupport(indices)
    }

    pub fn empty() -> Self {
        ModelSupport(Vec::new())
    }

    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        if indices.contains(&0) {
            return Err(ReproError::InvalidSupport("index 0 in a 1-based support".into()));
        }
        Ok(ModelSupport::new(indices.iter().map(|i| i - 1).collect()))
    }

    /// Checks indices against `p` and the residual degrees of freedom against `n`.
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if let Some(&last) = self.0.last() {
            if last >= p {
                return Err(ReproError::InvalidSupport(format!(
                    "index {} exceeds p = {}",
                    last + 1,
                    p
                )));
            }
        }
        if self.0.len() >= n {
            return Err(ReproError::InvalidSupport(format!(
                "support size {} leaves no residual degrees of freedom (n = {})",
                self.0.len(),
                n
            )));
        }
        Ok(())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn is_subset_of(&self, other: &ModelSupport) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }

    /// Indices in `self` that are also in `set`.
    pub fn intersection(&self, set: &[usize]) -> ModelSupport {
        ModelSupport(self.0.iter().copied().filter(|i| set.contains(i)).collect())
    }

    /// Indices in `self` that are not in `set`.
    pub fn difference(&self, set: &[usize]) -> ModelSupport {
        ModelSupport(self.0.iter().copied().filter(|i| !set.contains(i)).collect())
    }
}

impl From<Vec<usize>> for ModelSupport {
    fn from(v: Vec<usize>) -> Self {
        ModelSupport::new(v)
    }
}

impl fmt::Display for ModelSupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

impl Serialize for ModelSupport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelSupport {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<usize>::deserialize(d)?;
        ModelSupport::from_one_based(&raw).map_err(serde::de::Error::custom)
    }
}

/// Copies the listed columns of `x` into a new matrix.
pub fn select_columns(x: &DMatrix<f64>, columns: &[usize]) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, columns.len());
    for (k, &j) in columns.iter().enumerate() {
        out.column_mut(k).copy_from(&x.column(j));
    }
    out
}

/// Calls `f` on every `k`-subset of `0..p` in lexicographic order.
pub(crate) fn for_each_combination(p: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > p {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + p - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for m in i + 1..k {
            idx[m] = idx[m - 1] + 1;
        }
    }
}
