//! Dense row-major matrices of document-by-text log-probabilities and the
//! derived importance weights.

use crate::error::{Error, Result};

/// Dense `n_docs x n_texts` matrix of natural-log probabilities `log p(y_j | x_i)`.
///
/// Every entry is finite and `<= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbMatrix {
    n_docs: usize,
    n_texts: usize,
    values: Vec<f64>,
    doc_ids: Vec<String>,
    text_ids: Vec<String>,
}

impl LogProbMatrix {
    /// Builds a matrix with positional ids (`"0"`, `"1"`, ...).
    pub fn new(n_docs: usize, n_texts: usize, values: Vec<f64>) -> Result<Self> {
        let doc_ids = (0..n_docs).map(|i| i.to_string()).collect();
        let text_ids = (0..n_texts).map(|j| j.to_string()).collect();
        Self::with_ids(n_docs, n_texts, values, doc_ids, text_ids)
    }

    pub fn with_ids(
        n_docs: usize,
        n_texts: usize,
        values: Vec<f64>,
        doc_ids: Vec<String>,
        text_ids: Vec<String>,
    ) -> Result<Self> {
        if n_docs == 0 || n_texts == 0 {
            return Err(Error::Empty("matrix must have at least one row and one column"));
        }
        let expected = n_docs
            .checked_mul(n_texts)
            .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        if doc_ids.len() != n_docs {
            return Err(Error::LengthMismatch {
                left: doc_ids.len(),
                right: n_docs,
            });
        }
        if text_ids.len() != n_texts {
            return Err(Error::LengthMismatch {
                left: text_ids.len(),
                right: n_texts,
            });
        }
        for (idx, &value) in values.iter().enumerate() {
            let (row, col) = (idx / n_texts, idx % n_texts);
            if !value.is_finite() {
                return Err(Error::NonFinite { row, col, value });
            }
            if value > 0.0 {
                return Err(Error::PositiveLogProb { row, col, value });
            }
        }
        Ok(Self {
            n_docs,
            n_texts,
            values,
            doc_ids,
            text_ids,
        })
    }

    /// Crate-internal constructor for values already known to be valid.
    pub(crate) fn from_parts_unchecked(
        n_docs: usize,
        n_texts: usize,
        values: Vec<f64>,
        doc_ids: Vec<String>,
        text_ids: Vec<String>,
    ) -> Self {
        debug_assert_eq!(values.len(), n_docs * n_texts);
        Self {
            n_docs,
            n_texts,
            values,
            doc_ids,
            text_ids,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_texts(&self) -> usize {
        self.n_texts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_texts..(i + 1) * self.n_texts]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_texts + j]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn text_ids(&self) -> &[String] {
        &self.text_ids
    }

    pub fn set_ids(&mut self, doc_ids: Vec<String>, text_ids: Vec<String>) -> Result<()> {
        if doc_ids.len() != self.n_docs {
            return Err(Error::LengthMismatch {
                left: doc_ids.len(),
                right: self.n_docs,
            });
        }
        if text_ids.len() != self.n_texts {
            return Err(Error::LengthMismatch {
                left: text_ids.len(),
                right: self.n_texts,
            });
        }
        self.doc_ids = doc_ids;
        self.text_ids = text_ids;
        Ok(())
    }

    /// Selects `rows` (in the given order) and `cols` (duplicates allowed).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> LogProbMatrix {
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let row = self.row(i);
            values.extend(cols.iter().map(|&j| row[j]));
        }
        LogProbMatrix::from_parts_unchecked(
            rows.len(),
            cols.len(),
            values,
            rows.iter().map(|&i| self.doc_ids[i].clone()).collect(),
            cols.iter().map(|&j| self.text_ids[j].clone()).collect(),
        )
    }
}

/// Strictly positive importance weights `W_ij = (P_ij / phi_j)^alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n_docs: usize,
    n_texts: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(n_docs: usize, n_texts: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_docs * n_texts {
            return Err(Error::DimensionMismatch {
                expected: n_docs * n_texts,
                found: values.len(),
            });
        }
        for (idx, &value) in values.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::WeightOutOfRange {
                    row: idx / n_texts,
                    col: idx % n_texts,
                    value,
                });
            }
        }
        Ok(Self {
            n_docs,
            n_texts,
            values,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_texts(&self) -> usize {
        self.n_texts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_texts..(i + 1) * self.n_texts]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_texts + j]
    }
}

/// An arbitrary finite real matrix, used by the Euclidean baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl RealMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Empty("matrix must have at least one row and one column"));
        }
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                found: values.len(),
            });
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: idx / n_cols,
                col: idx % n_cols,
                value: values[idx],
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

impl From<&LogProbMatrix> for RealMatrix {
    fn from(m: &LogProbMatrix) -> Self {
        Self {
            n_rows: m.n_docs,
            n_cols: m.n_texts,
            values: m.values.clone(),
        }
    }
}
