//! Dense tensors with labelled modes, matricization and pairwise contraction.
//!
//! Storage is row-major with the last mode fastest. That single flattening is
//! used everywhere: matricization, the interchange format and the oracle.

use std::collections::HashSet;

use crate::error::{invalid, Result};
use crate::par;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!("matrix dimensions must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(invalid(format!(
                "matmul shape mismatch: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = gemm(&self.data, &other.data, self.rows, self.cols, other.cols);
        Ok(Matrix { rows: self.rows, cols: other.cols, data })
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// `C = A·B` for row-major `A` (m×k) and `B` (k×n).
///
/// Each output entry accumulates its `k` products in ascending order, the same
/// sequence a textbook triple loop produces.
pub(crate) fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    if n == 0 {
        return out;
    }
    par::for_each_row(&mut out, n, k * n, |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &aip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (c, &bpj) in row.iter_mut().zip(b_row) {
                *c += aip * bpj;
            }
        }
    });
    out
}

pub(crate) fn norm2(data: &[f64]) -> f64 {
    // Scaled accumulation keeps huge/tiny entries from overflowing the squares.
    let scale = data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let inv = 1.0 / scale;
    scale * data.iter().map(|x| (x * inv) * (x * inv)).sum::<f64>().sqrt()
}

/// A d-way array of `f64` with one distinct label per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    labels: Vec<String>,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new<S: Into<String>>(labels: Vec<S>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() != shape.len() {
            return Err(invalid(format!(
                "{} labels for a tensor of order {}",
                labels.len(),
                shape.len()
            )));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(invalid(format!("duplicate mode label `{l}`")));
            }
        }
        if let Some(pos) = shape.iter().position(|&e| e == 0) {
            return Err(invalid(format!("mode `{}` has zero extent", labels[pos])));
        }
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(invalid(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite entry at flat offset {pos}")));
        }
        Ok(DenseTensor { labels, shape, data })
    }

    pub fn zeros<S: Into<String>>(labels: Vec<S>, shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        DenseTensor::new(labels, shape, vec![0.0; len])
    }

    /// Builds a tensor by evaluating `f` at every multi-index in storage order.
    pub fn from_fn<S: Into<String>>(
        labels: Vec<S>,
        shape: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self> {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, &shape);
        }
        DenseTensor::new(labels, shape, data)
    }

    pub fn scalar(value: f64) -> Self {
        DenseTensor { labels: Vec::new(), shape: Vec::new(), data: vec![value] }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn extent(&self, label: &str) -> Option<usize> {
        self.position(label).map(|p| self.shape[p])
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &e)| {
                debug_assert!(i < e);
                acc * e + i
            })
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn scaled(&self, alpha: f64) -> DenseTensor {
        DenseTensor {
            labels: self.labels.clone(),
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn relabel(&mut self, from: &str, to: &str) -> Result<()> {
        if from != to && self.has_label(to) {
            return Err(invalid(format!("label `{to}` already present")));
        }
        let pos = self
            .position(from)
            .ok_or_else(|| invalid(format!("label `{from}` not present")))?;
        self.labels[pos] = to.to_string();
        Ok(())
    }

    /// Returns the same tensor with its modes reordered to `order`.
    pub fn permuted<S: AsRef<str>>(&self, order: &[S]) -> Result<DenseTensor> {
        if order.len() != self.order() {
            return Err(invalid(format!(
                "permutation lists {} labels for a tensor of order {}",
                order.len(),
                self.order()
            )));
        }
        let mut perm = Vec::with_capacity(order.len());
        for l in order {
            let l = l.as_ref();
            let p = self
                .position(l)
                .ok_or_else(|| invalid(format!("label `{l}` not present")))?;
            if perm.contains(&p) {
                return Err(invalid(format!("label `{l}` listed twice")));
            }
            perm.push(p);
        }
        Ok(self.permute_axes(&perm))
    }

    fn permute_axes(&self, perm: &[usize]) -> DenseTensor {
        let labels = perm.iter().map(|&p| self.labels[p].clone()).collect();
        let shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return DenseTensor { labels, shape, data: self.data.clone() };
        }
        let src_strides = strides(&self.shape);
        let strides: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
        let data = gather(&self.data, &shape, &strides);
        DenseTensor { labels, shape, data }
    }

    /// Reshapes into a matrix whose row index flattens `rows` and whose column
    /// index flattens `cols`, both row-major in the order given.
    pub fn matricize<S: AsRef<str>, T: AsRef<str>>(&self, rows: &[S], cols: &[T]) -> Result<Matrix> {
        let order: Vec<&str> = rows
            .iter()
            .map(AsRef::as_ref)
            .chain(cols.iter().map(AsRef::as_ref))
            .collect();
        let p = self.permuted(&order)?;
        let nrows: usize = p.shape[..rows.len()].iter().product();
        let ncols: usize = p.shape[rows.len()..].iter().product();
        Matrix::new(nrows, ncols, p.data)
    }

    /// Inverse of [`matricize`](Self::matricize): folds a matrix back into a
    /// tensor with modes `rows ++ cols`.
    pub fn from_matrix(m: &Matrix, rows: &[(String, usize)], cols: &[(String, usize)]) -> Result<Self> {
        let nrows: usize = rows.iter().map(|r| r.1).product();
        let ncols: usize = cols.iter().map(|c| c.1).product();
        if (nrows, ncols) != (m.rows(), m.cols()) {
            return Err(invalid(format!(
                "cannot fold a {}x{} matrix into {}x{} modes",
                m.rows(),
                m.cols(),
                nrows,
                ncols
            )));
        }
        let (labels, shape) = rows.iter().chain(cols).cloned().unzip();
        DenseTensor::new(labels, shape, m.data().to_vec())
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Reads `src` at `offset = Σ idx[k]·strides[k]` for every `idx` of `shape` in
/// row-major order.
fn gather(src: &[f64], shape: &[usize], strides: &[usize]) -> Vec<f64> {
    let len: usize = shape.iter().product();
    let mut out = Vec::with_capacity(len);
    if shape.is_empty() {
        out.push(src[0]);
        return out;
    }
    let last = shape.len() - 1;
    let (inner_len, inner_stride) = (shape[last], strides[last]);
    let mut idx = vec![0usize; last];
    let mut base = 0usize;
    for _ in 0..len / inner_len {
        for j in 0..inner_len {
            out.push(src[base + j * inner_stride]);
        }
        for k in (0..last).rev() {
            idx[k] += 1;
            base += strides[k];
            if idx[k] < shape[k] {
                break;
            }
            base -= strides[k] * shape[k];
            idx[k] = 0;
        }
    }
    out
}

/// Sums `a` and `b` over every label in `shared`.
///
/// The result carries the remaining labels of `a` followed by those of `b`,
/// each in its original order.
pub fn contract<S: AsRef<str>>(a: &DenseTensor, b: &DenseTensor, shared: &[S]) -> Result<DenseTensor> {
    let shared: Vec<&str> = shared.iter().map(AsRef::as_ref).collect();
    for (i, l) in shared.iter().enumerate() {
        if shared[..i].contains(l) {
            return Err(invalid(format!("shared label `{l}` listed twice")));
        }
        let ea = a
            .extent(l)
            .ok_or_else(|| invalid(format!("shared label `{l}` missing from left operand")))?;
        let eb = b
            .extent(l)
            .ok_or_else(|| invalid(format!("shared label `{l}` missing from right operand")))?;
        if ea != eb {
            return Err(invalid(format!("extent mismatch on `{l}`: {ea} vs {eb}")));
        }
    }
    let free_a: Vec<&str> = a
        .labels
        .iter()
        .map(String::as_str)
        .filter(|l| !shared.contains(l))
        .collect();
    let free_b: Vec<&str> = b
        .labels
        .iter()
        .map(String::as_str)
        .filter(|l| !shared.contains(l))
        .collect();
    if let Some(l) = free_a.iter().find(|l| free_b.contains(l)) {
        return Err(invalid(format!("label `{l}` would appear twice in the result")));
    }

    let left = a.permuted(&[free_a.as_slice(), shared.as_slice()].concat())?;
    let right = b.permuted(&[shared.as_slice(), free_b.as_slice()].concat())?;
    let m: usize = left.shape[..free_a.len()].iter().product();
    let k: usize = left.shape[free_a.len()..].iter().product();
    let n: usize = right.shape[shared.len()..].iter().product();
    let data = gemm(&left.data, &right.data, m, k, n);

    let labels: Vec<String> = free_a.iter().chain(&free_b).map(|s| s.to_string()).collect();
    let shape: Vec<usize> = left.shape[..free_a.len()]
        .iter()
        .chain(&right.shape[shared.len()..])
        .copied()
        .collect();
    Ok(DenseTensor { labels, shape, data })
}

/// Tensor product; equivalent to contracting over no labels.
pub fn outer(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    contract::<&str>(a, b, &[])
}

pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.frobenius_norm()
}
