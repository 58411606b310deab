// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention matrices, degree normalization and the symmetric/antisymmetric split.
//!
//! An [`AttentionMatrix`] is a validated non-negative `n_q x n_k` weight matrix.
//! [`normalize`] turns it into the degree-normalized [`TransportOperator`]
//! `M = D_Q^{-1/2} B D_K^{-1/2}`, whose singular values drive every spectral
//! diagnostic in this crate. For square operators, [`asymmetry_g`] measures the
//! Frobenius distance of `M` to the symmetric subspace.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral;

/// Row sums within this distance of 1 count as row-stochastic.
pub const ROW_STOCHASTIC_TOL: f64 = 1e-6;

/// Structural mask declared for an attention matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    None,
    Causal,
    /// Causal attention restricted to the last `w` positions (inclusive of the query).
    Window(usize),
}

impl MaskKind {
    /// Whether `(i, j)` lies inside the mask support.
    pub fn allows(&self, i: usize, j: usize) -> bool {
        match *self {
            MaskKind::None => true,
            MaskKind::Causal => j <= i,
            MaskKind::Window(w) => j <= i && j + w > i,
        }
    }
}

impl std::fmt::Display for MaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaskKind::None => write!(f, "none"),
            MaskKind::Causal => write!(f, "causal"),
            MaskKind::Window(w) => write!(f, "window:{w}"),
        }
    }
}

impl std::str::FromStr for MaskKind {
    type Err = Error;

    /// Accepts `none`, `causal`, `window:5`, `window(5)` and `window=5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "" | "none" | "full" => return Ok(MaskKind::None),
            "causal" => return Ok(MaskKind::Causal),
            _ => {}
        }
        let rest = s
            .strip_prefix("window")
            .ok_or_else(|| Error::Parse(format!("unknown mask `{s}`")))?;
        let digits = rest.trim_matches(|c: char| matches!(c, ':' | '=' | '(' | ')' | ' '));
        let w: usize = digits
            .parse()
            .map_err(|_| Error::Parse(format!("bad window width in `{s}`")))?;
        if w == 0 {
            return Err(Error::Parse("window width must be >= 1".into()));
        }
        Ok(MaskKind::Window(w))
    }
}

/// A validated non-negative attention matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    values: DMatrix<f64>,
    mask: MaskKind,
    row_stochastic: bool,
}

impl AttentionMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> MaskKind {
        self.mask
    }

    /// True when every row sums to 1 within [`ROW_STOCHASTIC_TOL`].
    pub fn is_row_stochastic(&self) -> bool {
        self.row_stochastic
    }

    pub fn n_queries(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_keys(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.values.nrows() == self.values.ncols()
    }

    /// The key-query swapped matrix `B^T`, with no mask.
    pub fn transpose(&self) -> AttentionMatrix {
        let values = self.values.transpose();
        let row_stochastic = rows_are_stochastic(&values);
        AttentionMatrix {
            values,
            mask: MaskKind::None,
            row_stochastic,
        }
    }

    /// Total attention mass `sum_ij B_ij`.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

fn rows_are_stochastic(values: &DMatrix<f64>) -> bool {
    values
        .row_iter()
        .all(|r| (r.sum() - 1.0).abs() <= ROW_STOCHASTIC_TOL)
}

/// Validate a dense matrix against the declared mask.
pub fn validate(values: DMatrix<f64>, mask: MaskKind) -> Result<AttentionMatrix> {
    if values.nrows() == 0 || values.ncols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    // Column-major storage; report the first offending entry in row-major order.
    for i in 0..values.nrows() {
        for j in 0..values.ncols() {
            let v = values[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
            if v < 0.0 {
                return Err(Error::NegativeEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    if mask != MaskKind::None && values.nrows() != values.ncols() {
        return Err(Error::NotSquare {
            rows: values.nrows(),
            cols: values.ncols(),
        });
    }
    for i in 0..values.nrows() {
        for j in 0..values.ncols() {
            if values[(i, j)] != 0.0 && !mask.allows(i, j) {
                return Err(Error::MaskViolation { row: i, col: j });
            }
        }
    }
    let row_stochastic = rows_are_stochastic(&values);
    Ok(AttentionMatrix {
        values,
        mask,
        row_stochastic,
    })
}

/// Convenience wrapper over [`validate`] for nested row vectors.
pub fn validate_rows(rows: &[Vec<f64>], mask: MaskKind) -> Result<AttentionMatrix> {
    validate(matrix_from_rows(rows)?, mask)
}

/// Build a dense matrix from row vectors, rejecting ragged input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n_cols {
            return Err(Error::RaggedRows {
                row: i,
                expected: n_cols,
                found: r.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
}

/// Row and column degrees with the summary statistics used by the sufficiency bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreePair {
    /// Row sums, length `n_q`.
    pub d_q: Vec<f64>,
    /// Column sums, length `n_k`.
    pub d_k: Vec<f64>,
    /// Mean over strictly positive column degrees.
    pub d_bar: f64,
    /// `d_max / d_min` over strictly positive column degrees.
    pub kappa: f64,
}

impl DegreePair {
    pub fn has_zero_column(&self) -> bool {
        self.d_k.iter().any(|&d| d <= 0.0)
    }

    pub fn first_zero_row(&self) -> Option<usize> {
        self.d_q.iter().position(|&d| d <= 0.0)
    }

    pub fn first_zero_column(&self) -> Option<usize> {
        self.d_k.iter().position(|&d| d <= 0.0)
    }
}

pub fn degrees(a: &AttentionMatrix) -> DegreePair {
    let b = a.values();
    let d_q: Vec<f64> = b.row_iter().map(|r| r.sum()).collect();
    let d_k: Vec<f64> = b.column_iter().map(|c| c.sum()).collect();
    degree_pair(d_q, d_k)
}

/// The degree-normalized cross-operator `M = D_Q^{-1/2} B D_K^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportOperator {
    values: DMatrix<f64>,
    degrees: DegreePair,
}

impl TransportOperator {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn degrees(&self) -> &DegreePair {
        &self.degrees
    }

    /// `(n_q, n_k)` of the source attention matrix.
    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn is_square(&self) -> bool {
        self.values.is_square()
    }

    /// The operator of `B^T`: transposed values with the degree roles swapped.
    pub fn transpose(&self) -> TransportOperator {
        let d = &self.degrees;
        let swapped = degree_pair(d.d_k.clone(), d.d_q.clone());
        TransportOperator {
            values: self.values.transpose(),
            degrees: swapped,
        }
    }

    /// Wrap an arbitrary dense matrix as an operator with unit degrees.
    ///
    /// Useful when a precomputed `M` is available and only the matrix-level
    /// diagnostics (singular values, `G`) are wanted.
    pub fn from_raw(values: DMatrix<f64>) -> TransportOperator {
        let d_q = vec![1.0; values.nrows()];
        let d_k = vec![1.0; values.ncols()];
        TransportOperator {
            values,
            degrees: degree_pair(d_q, d_k),
        }
    }
}

fn column_summary(d_k: &[f64]) -> (f64, f64) {
    let positive: Vec<f64> = d_k.iter().copied().filter(|&d| d > 0.0).collect();
    if positive.is_empty() {
        return (0.0, f64::NAN);
    }
    let mean = positive.iter().sum::<f64>() / positive.len() as f64;
    let max = positive.iter().copied().fold(f64::MIN, f64::max);
    let min = positive.iter().copied().fold(f64::MAX, f64::min);
    (mean, max / min)
}

fn degree_pair(d_q: Vec<f64>, d_k: Vec<f64>) -> DegreePair {
    let (d_bar, kappa) = column_summary(&d_k);
    DegreePair {
        d_q,
        d_k,
        d_bar,
        kappa,
    }
}

/// Degree-normalize an attention matrix. Zero degrees are rejected.
pub fn normalize(a: &AttentionMatrix) -> Result<TransportOperator> {
    let degrees = degrees(a);
    if let Some(i) = degrees.first_zero_row() {
        return Err(Error::ZeroRowDegree(i));
    }
    if let Some(j) = degrees.first_zero_column() {
        return Err(Error::ZeroColumnDegree(j));
    }
    let inv_q: Vec<f64> = degrees.d_q.iter().map(|d| 1.0 / d.sqrt()).collect();
    let inv_k: Vec<f64> = degrees.d_k.iter().map(|d| 1.0 / d.sqrt()).collect();
    let b = a.values();
    let values = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| {
        let v = b[(i, j)];
        if v == 0.0 {
            0.0
        } else {
            v * inv_q[i] * inv_k[j]
        }
    });
    Ok(TransportOperator { values, degrees })
}

/// Indices removed by [`drop_zero_degrees`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedIndices {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl DroppedIndices {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() && self.cols.is_empty()
    }
}

/// Remove zero-degree rows and columns so that [`normalize`] succeeds.
///
/// Dropping a column can zero out a row (and vice versa), so this repeats until
/// stable. The mask is reset to `None` because index alignment is lost.
pub fn drop_zero_degrees(a: &AttentionMatrix) -> Result<(AttentionMatrix, DroppedIndices)> {
    let b = a.values();
    let mut rows: Vec<usize> = (0..b.nrows()).collect();
    let mut cols: Vec<usize> = (0..b.ncols()).collect();
    loop {
        let keep_rows: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| cols.iter().any(|&j| b[(i, j)] > 0.0))
            .collect();
        let keep_cols: Vec<usize> = cols
            .iter()
            .copied()
            .filter(|&j| keep_rows.iter().any(|&i| b[(i, j)] > 0.0))
            .collect();
        let stable = keep_rows.len() == rows.len() && keep_cols.len() == cols.len();
        rows = keep_rows;
        cols = keep_cols;
        if stable {
            break;
        }
    }
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let dropped = DroppedIndices {
        rows: (0..b.nrows()).filter(|i| !rows.contains(i)).collect(),
        cols: (0..b.ncols()).filter(|j| !cols.contains(j)).collect(),
    };
    let values = DMatrix::from_fn(rows.len(), cols.len(), |i, j| b[(rows[i], cols[j])]);
    Ok((validate(values, MaskKind::None)?, dropped))
}

/// `M = Msym + Masym` with `Msym = (M + M^T)/2` and `Masym = (M - M^T)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSplit {
    pub sym: DMatrix<f64>,
    pub antisym: DMatrix<f64>,
}

pub fn sym_antisym(m: &TransportOperator) -> Result<SymSplit> {
    split_dense(m.values())
}

fn split_dense(m: &DMatrix<f64>) -> Result<SymSplit> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let t = m.transpose();
    Ok(SymSplit {
        sym: (m + &t) * 0.5,
        antisym: (m - &t) * 0.5,
    })
}

/// Asymmetry coefficient `G = ||Masym||_F / (||M||_F + eps)`.
///
/// For real matrices and `eps = 0` the value never exceeds `1/sqrt(2)`.
pub fn asymmetry_g(m: &TransportOperator, eps: f64) -> Result<f64> {
    asymmetry_g_dense(m.values(), eps)
}

/// [`asymmetry_g`] on a bare dense matrix.
pub fn asymmetry_g_dense(m: &DMatrix<f64>, eps: f64) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    let n = m.nrows();
    // Both sums visit each unordered pair once in the same order, so the
    // result is bit-identical for M and its transpose.
    let mut anti_sq = 0.0;
    let mut norm_sq = 0.0;
    for j in 0..n {
        norm_sq += m[(j, j)] * m[(j, j)];
        for i in (j + 1)..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            let d = a - b;
            anti_sq += d * d;
            norm_sq += a * a + b * b;
        }
    }
    let anti = (0.5 * anti_sq).sqrt();
    let norm = norm_sq.sqrt();
    let denom = norm + eps;
    if denom == 0.0 {
        return Err(Error::DegenerateNorm);
    }
    Ok(anti / denom)
}

/// Outcome of the degree-sufficiency comparison between `M` and `A / sqrt(d_bar)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyResidual {
    /// `|sigma_2(M) - sigma_2(A) / sqrt(d_bar)|`.
    pub residual: f64,
    /// `max_j |1 - sqrt(d_j / d_bar)|`.
    pub bound: f64,
    /// `sqrt(kappa) - 1`.
    pub kappa_bound: f64,
    pub sigma2_m: f64,
    pub sigma2_a: f64,
}

pub fn sufficiency_residual(a: &AttentionMatrix) -> Result<SufficiencyResidual> {
    let m = normalize(a)?;
    let d = m.degrees();
    let sigma2_m = second_singular_value(m.values());
    let sigma2_a = second_singular_value(a.values());
    let residual = (sigma2_m - sigma2_a / d.d_bar.sqrt()).abs();
    let bound = d
        .d_k
        .iter()
        .map(|&dj| (1.0 - (dj / d.d_bar).sqrt()).abs())
        .fold(0.0, f64::max);
    Ok(SufficiencyResidual {
        residual,
        bound,
        kappa_bound: d.kappa.sqrt() - 1.0,
        sigma2_m,
        sigma2_a,
    })
}

fn second_singular_value(m: &DMatrix<f64>) -> f64 {
    spectral::dense_singular_values(m).get(1).copied().unwrap_or(0.0)
}
