//! Minimal dense symmetric linear algebra for the IRLS solver: Cholesky
//! solve/inverse and a pivoted Cholesky for rank detection.

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix
/// stored row-major.
pub struct Cholesky {
    l: Vec<f64>,
    n: usize,
}

impl Cholesky {
    /// Factor a symmetric matrix (full row-major storage). Returns `None`
    /// when the matrix is not numerically positive definite.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        let mut l = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    l[i * n + j] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(Self { l, n })
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.l[i * n + k] * x[k];
            }
            x[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.l[k * n + i] * x[k];
            }
            x[i] /= self.l[i * n + i];
        }
        x
    }

    /// Full inverse of `A` (row-major).
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0f64; n * n];
        let mut e = vec![0.0f64; n];
        for col in 0..n {
            e.fill(0.0);
            e[col] = 1.0;
            let x = self.solve(&e);
            for row in 0..n {
                inv[row * n + col] = x[row];
            }
        }
        inv
    }
}

/// Rank detection on a symmetric PSD Gram matrix by Cholesky with column
/// skipping: columns are processed left to right, and any whose residual
/// pivot falls below `rel_tol` times the largest diagonal is reported as
/// dependent. Earlier columns win over later collinear ones.
pub fn ordered_independent_columns(gram: &[f64], n: usize, rel_tol: f64) -> Vec<usize> {
    let max_diag = (0..n)
        .map(|i| gram[i * n + i])
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = rel_tol * max_diag;
    let mut kept: Vec<usize> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new(); // Cholesky rows over kept columns
    for c in 0..n {
        let mut l_row = Vec::with_capacity(kept.len() + 1);
        for (j, &kc) in kept.iter().enumerate() {
            let mut v = gram[c * n + kc];
            for m in 0..j {
                v -= l_row[m] * rows[j][m];
            }
            l_row.push(v / rows[j][j]);
        }
        let mut resid = gram[c * n + c];
        for &v in &l_row {
            resid -= v * v;
        }
        if resid > tol {
            l_row.push(resid.sqrt());
            kept.push(c);
            rows.push(l_row);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_small_system() {
        // A = [[4,2],[2,3]], b = [8, 7] -> x = [1.25, 1.5]
        let a = vec![4.0, 2.0, 2.0, 3.0];
        let ch = Cholesky::factor(&a, 2).unwrap();
        let x = ch.solve(&[8.0, 7.0]);
        assert!((x[0] - 1.25).abs() < 1e-12);
        assert!((x[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn inverse_matches_identity() {
        let a = vec![4.0, 2.0, 1.0, 2.0, 5.0, 2.0, 1.0, 2.0, 6.0];
        let ch = Cholesky::factor(&a, 3).unwrap();
        let inv = ch.inverse();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a[i * 3 + k] * inv[k * 3 + j];
                }
                let expect = f64::from(u8::from(i == j));
                assert!((s - expect).abs() < 1e-10, "({i},{j}) = {s}");
            }
        }
    }

    #[test]
    fn non_pd_matrix_rejected() {
        let a = vec![1.0, 2.0, 2.0, 1.0]; // indefinite
        assert!(Cholesky::factor(&a, 2).is_none());
    }

    #[test]
    fn rank_detection_drops_the_later_duplicated_column() {
        // X = [x1, x2, x1 + x2]: Gram is rank 2, the later copy loses
        let x: Vec<[f64; 3]> = (0..6)
            .map(|i| {
                let a = i as f64;
                let b = (i * i) as f64 * 0.1;
                [a, b, a + b]
            })
            .collect();
        let mut gram = vec![0.0; 9];
        for row in &x {
            for i in 0..3 {
                for j in 0..3 {
                    gram[i * 3 + j] += row[i] * row[j];
                }
            }
        }
        assert_eq!(ordered_independent_columns(&gram, 3, 1e-10), vec![0, 1]);
    }

    #[test]
    fn full_rank_keeps_everything() {
        let a = vec![2.0, 0.1, 0.1, 3.0];
        assert_eq!(ordered_independent_columns(&a, 2, 1e-10), vec![0, 1]);
    }
}
