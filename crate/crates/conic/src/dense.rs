//! Minimal dense matrix support: row-major storage plus an LU factorization
//! with partial pivoting, which is all the interior-point code needs.

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            y[r] = acc;
        }
        y
    }

    /// y = Aᵀ x
    pub fn mul_vec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            let row = self.row(r);
            for (c, a) in row.iter().enumerate() {
                y[c] += a * xr;
            }
        }
        y
    }
}

/// LU factorization with partial pivoting of a square matrix.
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularMatrix;

impl Lu {
    pub fn factor(a: &Mat) -> Result<Lu, SingularMatrix> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut piv: Vec<usize> = (0..n).collect();

        for k in 0..n {
            // pivot search in column k
            let mut p = k;
            let mut max = lu[k * n + k].abs();
            for r in (k + 1)..n {
                let v = lu[r * n + k].abs();
                if v > max {
                    max = v;
                    p = r;
                }
            }
            if max == 0.0 || !max.is_finite() {
                return Err(SingularMatrix);
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                piv.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for r in (k + 1)..n {
                let factor = lu[r * n + k] / pivot;
                lu[r * n + k] = factor;
                if factor != 0.0 {
                    let (upper, lower) = lu.split_at_mut(r * n);
                    let row_k = &upper[k * n + k + 1..k * n + n];
                    let row_r = &mut lower[k + 1..n];
                    for (x, y) in row_r.iter_mut().zip(row_k.iter()) {
                        *x -= factor * y;
                    }
                }
            }
        }
        Ok(Lu { n, lu, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut x: Vec<f64> = (0..n).map(|i| b[self.piv[i]]).collect();
        // forward substitution (unit lower)
        for r in 1..n {
            let mut acc = x[r];
            let row = &self.lu[r * n..r * n + r];
            for (c, l) in row.iter().enumerate() {
                acc -= l * x[c];
            }
            x[r] = acc;
        }
        // back substitution
        for r in (0..n).rev() {
            let mut acc = x[r];
            let row = &self.lu[r * n + r + 1..(r + 1) * n];
            for (off, u) in row.iter().enumerate() {
                acc -= u * x[r + 1 + off];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        x
    }

    /// Solve with one step of iterative refinement against the original matrix.
    pub fn solve_refined(&self, a: &Mat, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve(b);
        for _ in 0..2 {
            let ax = a.mul_vec(&x);
            let mut resid = vec![0.0; b.len()];
            let mut worst = 0.0f64;
            for i in 0..b.len() {
                resid[i] = b[i] - ax[i];
                worst = worst.max(resid[i].abs());
            }
            if worst < 1e-13 {
                break;
            }
            let dx = self.solve(&resid);
            for i in 0..x.len() {
                x[i] += dx[i];
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_small_system() {
        let mut a = Mat::zeros(3, 3);
        let vals = [[2.0, 1.0, -1.0], [-3.0, -1.0, 2.0], [-2.0, 1.0, 2.0]];
        for r in 0..3 {
            for c in 0..3 {
                a.set(r, c, vals[r][c]);
            }
        }
        let b = [8.0, -11.0, -3.0];
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve_refined(&a, &b);
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
        assert!((x[2] - -1.0).abs() < 1e-12);
    }

    #[test]
    fn lu_rejects_singular() {
        let mut a = Mat::zeros(2, 2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 4.0);
        assert!(Lu::factor(&a).is_err());
    }

    #[test]
    fn matvec_and_transpose_agree() {
        let mut a = Mat::zeros(2, 3);
        for r in 0..2 {
            for c in 0..3 {
                a.set(r, c, (r * 3 + c) as f64);
            }
        }
        let x = [1.0, 2.0, 3.0];
        let y = a.mul_vec(&x);
        assert_eq!(y, vec![8.0, 26.0]);
        let z = a.mul_vec_t(&[1.0, 1.0]);
        assert_eq!(z, vec![3.0, 5.0, 7.0]);
    }
}
