//! Dense least squares by Householder QR with column pivoting.

use crate::error::{Error, Result};

/// Relative threshold on |R_kk| / |R_00| below which a column counts as
/// dependent on the ones already factored.
pub const RANK_RTOL: f64 = 1e-10;

/// Column-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ColMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.rows + r] = v;
    }

    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// `self * x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.col(c)) {
                *o += a * xc;
            }
        }
        out
    }

    /// `self^T * y`
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        (0..self.cols).map(|c| dot(self.col(c), y)).collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `min ||A x - b||` for every right-hand side in `rhs`.
///
/// Fails with [`Error::RankDeficient`] when pivoted QR finds fewer than
/// `A.cols()` independent columns.
pub fn solve_least_squares(a: &ColMatrix, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (m, n) = (a.rows, a.cols);
    if m < n {
        return Err(Error::RankDeficient {
            deficient: n - m,
            width: n,
        });
    }
    for b in rhs {
        if b.len() != m {
            return Err(Error::config(format!(
                "right-hand side has {} rows, matrix has {m}",
                b.len()
            )));
        }
    }

    let mut qr = a.clone();
    let mut bs: Vec<Vec<f64>> = rhs.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag = vec![0.0; n];
    let mut v = vec![0.0; m];
    let mut tol = 0.0;

    for k in 0..n {
        // Pivot on the largest remaining sub-column norm. Norms are recomputed
        // rather than downdated so cancellation cannot hide a dependent column.
        let (p, norm) = (k..n)
            .map(|j| (j, dot(&qr.col(j)[k..], &qr.col(j)[k..]).sqrt()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if k == 0 {
            tol = RANK_RTOL * norm;
        }
        if norm.is_nan() || norm <= tol || norm == 0.0 {
            return Err(Error::RankDeficient {
                deficient: n - k,
                width: n,
            });
        }
        if p != k {
            let (lo, hi) = qr.data.split_at_mut(p * m);
            lo[k * m..(k + 1) * m].swap_with_slice(&mut hi[..m]);
            perm.swap(k, p);
        }

        let x = &qr.col(k)[k..];
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let vk = &mut v[k..];
        vk.copy_from_slice(x);
        vk[0] -= alpha;
        let vnorm2 = dot(vk, vk);
        diag[k] = alpha;

        if vnorm2 > 0.0 {
            let scale = 2.0 / vnorm2;
            for j in k + 1..n {
                let col = &mut qr.col_mut(j)[k..];
                let s = dot(vk, col) * scale;
                for (c, vi) in col.iter_mut().zip(vk.iter()) {
                    *c -= s * vi;
                }
            }
            for b in bs.iter_mut() {
                let bk = &mut b[k..];
                let s = dot(vk, bk) * scale;
                for (c, vi) in bk.iter_mut().zip(vk.iter()) {
                    *c -= s * vi;
                }
            }
        }
    }

    // Back substitution on R (strict upper triangle in qr, diagonal in diag).
    let solutions = bs
        .iter()
        .map(|b| {
            let mut z = vec![0.0; n];
            for i in (0..n).rev() {
                let s = (i + 1..n).fold(b[i], |s, j| s - qr.get(i, j) * z[j]);
                z[i] = s / diag[i];
            }
            let mut x = vec![0.0; n];
            for (i, &pi) in perm.iter().enumerate() {
                x[pi] = z[i];
            }
            x
        })
        .collect();
    Ok(solutions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&[f64]]) -> ColMatrix {
        let mut a = ColMatrix::zeros(rows.len(), rows[0].len());
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                a.set(r, c, v);
            }
        }
        a
    }

    #[test]
    fn square_system_is_solved_exactly() {
        let a = from_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let x = solve_least_squares(&a, &[vec![3.0, 5.0]]).unwrap();
        assert!((x[0][0] - 0.8).abs() < 1e-14);
        assert!((x[0][1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn overdetermined_line_fit() {
        // y = 1 + 2x on four points, plus symmetric perturbations that cancel.
        let a = from_rows(&[&[1.0, 0.0], &[1.0, 1.0], &[1.0, 2.0], &[1.0, 3.0]]);
        let y = vec![1.1, 2.9, 5.1, 6.9];
        let x = &solve_least_squares(&a, std::slice::from_ref(&y)).unwrap()[0];
        let resid: Vec<f64> = a.mul_vec(x).iter().zip(&y).map(|(p, o)| o - p).collect();
        let g = a.tr_mul_vec(&resid);
        assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let a = from_rows(&[&[1.0, 2.0, 2.0], &[1.0, 5.0, 5.0], &[1.0, -1.0, -1.0], &[1.0, 0.5, 0.5]]);
        let err = solve_least_squares(&a, &[vec![0.0; 4]]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { deficient: 1, width: 3 }));
    }

    #[test]
    fn wide_matrix_is_rank_deficient() {
        let a = ColMatrix::zeros(2, 4);
        assert!(matches!(
            solve_least_squares(&a, &[vec![0.0; 2]]),
            Err(Error::RankDeficient { deficient: 2, width: 4 })
        ));
    }

    #[test]
    fn zero_matrix_reports_all_columns() {
        let a = ColMatrix::zeros(5, 3);
        assert!(matches!(
            solve_least_squares(&a, &[vec![1.0; 5]]),
            Err(Error::RankDeficient { deficient: 3, width: 3 })
        ));
    }
}
