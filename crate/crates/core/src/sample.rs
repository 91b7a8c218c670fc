// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense observation matrix: rows are time points, columns are coordinates.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An `n × p` sample stored row-major. Every entry is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix<T> {
    data: Vec<T>,
    n: usize,
    p: usize,
}

impl<T: Scalar> SampleMatrix<T> {
    /// Wraps row-major `data`, rejecting non-finite entries with their location.
    pub fn from_row_major(n: usize, p: usize, data: Vec<T>) -> Result<Self> {
        if p == 0 {
            return Err(Error::Shape("sample must have at least one column".into()));
        }
        if data.len() != n * p {
            return Err(Error::Shape(format!(
                "expected {n} x {p} = {} entries, got {}",
                n * p,
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: idx / p,
                col: idx % p,
            });
        }
        Ok(Self { data, n, p })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != p {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {p}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), p, data)
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            data: vec![T::zero(); n * p],
            n,
            p,
        }
    }

    /// Number of time points.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of each observation.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + DoubleEndedIterator + '_ {
        self.data.chunks_exact(self.p)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.p + j]
    }

    /// Contiguous block of rows `start..end` as a new sample.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            data: self.data[start * self.p..end * self.p].to_vec(),
            n: end - start,
            p: self.p,
        }
    }

    /// Column means.
    pub fn mean(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.p];
        for r in self.rows() {
            for (a, &v) in acc.iter_mut().zip(r) {
                *a = *a + v;
            }
        }
        let denom = T::of_usize(self.n.max(1));
        acc.iter_mut().for_each(|a| *a = *a / denom);
        acc
    }

    /// Copy with the full-sample column means subtracted.
    pub fn centered(&self) -> Self {
        let mean = self.mean();
        let mut out = self.clone();
        for r in out.data.chunks_exact_mut(self.p) {
            for (v, &m) in r.iter_mut().zip(&mean) {
                *v = *v - m;
            }
        }
        out
    }

    /// Rows in reverse time order.
    pub fn reversed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for r in self.rows().rev() {
            data.extend_from_slice(r);
        }
        Self {
            data,
            n: self.n,
            p: self.p,
        }
    }

    /// Applies `y -> scale * y + shift` to every row.
    pub fn affine(&self, scale: T, shift: &[T]) -> Self {
        assert_eq!(shift.len(), self.p, "shift length must equal p");
        let mut out = self.clone();
        for r in out.data.chunks_exact_mut(self.p) {
            for (v, &c) in r.iter_mut().zip(shift) {
                *v = scale * *v + c;
            }
        }
        out
    }

    /// Reorders columns so that new column `j` is old column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.p);
        let mut data = Vec::with_capacity(self.data.len());
        for r in self.rows() {
            data.extend(perm.iter().map(|&j| r[j]));
        }
        Self {
            data,
            n: self.n,
            p: self.p,
        }
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> SampleMatrix<U> {
        SampleMatrix {
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            n: self.n,
            p: self.p,
        }
    }

    /// True when every row equals the first one.
    pub fn is_constant(&self) -> bool {
        let first = match self.rows().next() {
            Some(r) => r,
            None => return true,
        };
        self.rows().all(|r| r == first)
    }
}
