//! Compressed sparse row matrices.
//!
//! Coupling blocks of the semi-discrete system are stored exactly once and
//! applied either forward (`mul_vec`) or as the transpose (`tr_mul_vec`), so
//! integration-by-parts partners are transposes of one another by
//! construction rather than by separate assembly.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets.
    ///
    /// Duplicates are summed in sorted (row, col) order, which keeps the
    /// result independent of the triplet insertion order.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut row_counts = vec![0usize; nrows];
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_counts[r] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for r in 0..nrows {
            row_ptr[r + 1] = row_ptr[r] + row_counts[r];
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = DVector::zeros(self.nrows);
        self.mul_vec_into(x, &mut y);
        y
    }

    /// y = A x, writing into an existing vector.
    pub fn mul_vec_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    /// y = A^T x
    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = DVector::zeros(self.ncols);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
        y
    }

    /// x^T A y
    pub fn quadratic_form(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        let mut acc = 0.0;
        for r in 0..self.nrows {
            let mut row_acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row_acc += self.values[k] * y[self.col_idx[k]];
            }
            acc += x[r] * row_acc;
        }
        acc
    }

    pub fn diagonal(&self) -> DVector<f64> {
        let n = self.nrows.min(self.ncols);
        let mut d = DVector::zeros(n);
        for r in 0..n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] += self.values[k];
                }
            }
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] += self.values[k];
            }
        }
        m
    }

    /// Largest |a_ij - a_ji| over the union pattern. Small matrices only.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.to_dense();
        let mut worst = 0.0f64;
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                worst = worst.max((d[(i, j)] - d[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn scale(&self, factor: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    /// Iterates stored entries as (row, col, value).
    pub fn triplet_iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    /// Writes the matrix as one `row col value` line per stored entry,
    /// 17 significant digits.
    pub fn write_triplets<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (r, c, v) in self.triplet_iter() {
            writeln!(w, "{} {} {:.16e}", r, c, v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_order_independent() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0)]);
        let b = CsrMatrix::from_triplets(2, 2, vec![(1, 1, 2.0), (0, 0, 3.0), (0, 0, 1.0)]);
        assert_eq!(a.to_dense(), b.to_dense());
        assert_eq!(a.to_dense()[(0, 0)], 4.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn matvec_and_transpose_agree_with_dense() {
        let a = CsrMatrix::from_triplets(
            3,
            2,
            vec![(0, 0, 1.0), (0, 1, -2.0), (2, 0, 5.0), (1, 1, 0.5)],
        );
        let x2 = DVector::from_vec(vec![1.0, 2.0]);
        let x3 = DVector::from_vec(vec![3.0, -1.0, 2.0]);
        let d = a.to_dense();
        assert_eq!(a.mul_vec(&x2), &d * &x2);
        assert_eq!(a.tr_mul_vec(&x3), d.transpose() * &x3);
        assert_eq!(a.quadratic_form(&x3, &x2), (x3.transpose() * d * x2)[(0, 0)]);
    }

    #[test]
    fn empty_rows_are_handled() {
        let a = CsrMatrix::from_triplets(4, 4, vec![(2, 3, 7.0)]);
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
        let y = a.mul_vec(&x);
        assert_eq!(y[2], 7.0);
        assert_eq!(y[0] + y[1] + y[3], 0.0);
    }
}
