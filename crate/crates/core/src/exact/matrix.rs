use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Read access shared by the dense and sparse matrix types.
pub trait NonnegativeMatrix<T: Real>: Sync {
    fn order(&self) -> usize;

    /// Calls `f(j, m_ij)` for every stored entry of row `i`.
    fn for_each_in_row(&self, i: usize, f: &mut dyn FnMut(usize, T));

    /// `out = M v`.
    fn mul_vec(&self, v: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            self.for_each_in_row(i, &mut |j, m| acc += m * v[j]);
            *o = acc;
        }
    }

    fn row_sum(&self, i: usize) -> T {
        let mut acc = T::zero();
        self.for_each_in_row(i, &mut |_, m| acc += m);
        acc
    }
}

/// Dense row-major square matrix; row = source state.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    /// Builds from rows; rejects ragged input and negative or non-finite
    /// entries.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
                return Err(Error::invalid(format!("row {i} has a negative or non-finite entry")));
            }
            data.extend(row);
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub(crate) fn add(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] += v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for i in 0..self.n {
            w.write_record(self.row(i).iter().map(|v| format!("{v:e}")))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

impl<T: Real> NonnegativeMatrix<T> for SquareMatrix<T> {
    fn order(&self) -> usize {
        self.n
    }

    fn for_each_in_row(&self, i: usize, f: &mut dyn FnMut(usize, T)) {
        for (j, &v) in self.row(i).iter().enumerate() {
            if v != T::zero() {
                f(j, v);
            }
        }
    }
}

/// Compressed sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> SparseMatrix<T> {
    /// Rows of `(column, value)` pairs. Duplicate columns are summed, zero
    /// entries dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, T)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let start = cols.len();
            for (j, v) in row {
                debug_assert!(j < n);
                if cols.len() > start && *cols.last().unwrap() == j {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                }
            }
            let mut k = start;
            for r in start..cols.len() {
                if vals[r] != T::zero() {
                    cols[k] = cols[r];
                    vals[k] = vals[r];
                    k += 1;
                }
            }
            cols.truncate(k);
            vals.truncate(k);
            row_ptr.push(cols.len());
        }
        SparseMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).find(|&(c, _)| c == j).map_or(T::zero(), |(_, v)| v)
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn restrict(&self, keep: &[usize]) -> SparseMatrix<T> {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            pos[i] = k;
        }
        SparseMatrix::from_rows(
            keep.iter()
                .map(|&i| {
                    self.row(i)
                        .filter(|&(j, _)| pos[j] != usize::MAX)
                        .map(|(j, v)| (pos[j], v))
                        .collect()
                })
                .collect(),
        )
    }

    pub fn to_dense(&self) -> SquareMatrix<T> {
        let mut m = SquareMatrix::zeros(self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m.add(i, j, v);
            }
        }
        m
    }
}

impl<T: Real> NonnegativeMatrix<T> for SparseMatrix<T> {
    fn order(&self) -> usize {
        self.n
    }

    fn for_each_in_row(&self, i: usize, f: &mut dyn FnMut(usize, T)) {
        for (j, v) in self.row(i) {
            f(j, v);
        }
    }

    fn mul_vec(&self, v: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (j, m) in self.row(i) {
                acc += m * v[j];
            }
            *o = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_merges_duplicates_and_drops_zeros() {
        let m = SparseMatrix::from_rows(vec![
            vec![(1, 0.25), (1, 0.25), (0, 0.0)],
            vec![(0, 1.0)],
        ]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 0.5);
        let d = m.to_dense();
        assert_eq!(d.row(0), &[0.0, 0.5]);
        let r = m.restrict(&[1]);
        assert_eq!(r.order(), 1);
        assert_eq!(r.nnz(), 0);
    }

    #[test]
    fn dense_csv_round_trip() {
        let m = SquareMatrix::<f64>::from_rows(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let parsed: Vec<Vec<f64>> = text
            .lines()
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(SquareMatrix::<f64>::from_rows(parsed).unwrap(), m);
        assert!(SquareMatrix::<f64>::from_rows(vec![vec![-1.0]]).is_err());
    }
}
