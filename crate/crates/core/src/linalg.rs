//! Cholesky solves for the small dense and banded SPD systems that appear
//! in IK refinement and in the barrier Newton steps.

/// Solves `A x = b` in place for a dense symmetric positive definite `A`
/// stored row-major. `A` is overwritten by its Cholesky factor. Returns
/// `false` when `A` is not numerically positive definite.
pub(crate) fn cholesky_solve(a: &mut [f64], n: usize, b: &mut [f64]) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    true
}

/// Symmetric banded matrix holding the lower band: `band[i][k] = A[i][i-k]`.
#[derive(Debug, Clone)]
pub(crate) struct BandedSpd {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedSpd {
    pub(crate) fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        debug_assert!(i - j <= self.bw);
        self.band[i * (self.bw + 1) + (i - j)] += v;
    }

    /// `y = A x`.
    #[cfg(test)]
    pub(crate) fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for k in 0..=self.bw.min(i) {
                let j = i - k;
                let v = self.band[i * (self.bw + 1) + k];
                y[i] += v * x[j];
                if k > 0 {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// Solves `A x = b` by banded Cholesky, leaving `self` untouched.
    pub(crate) fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.band.clone();
        for i in 0..n {
            for k in (0..=bw.min(i)).rev() {
                let j = i - k;
                let mut s = l[i * w + k];
                let lo = i.saturating_sub(bw).max(j.saturating_sub(bw));
                for p in lo..j {
                    s -= l[i * w + (i - p)] * l[j * w + (j - p)];
                }
                if k == 0 {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + k] = s / l[j * w];
                }
            }
        }
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 1..=bw.min(i) {
                s -= l[i * w + k] * x[i - k];
            }
            x[i] = s / l[i * w];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in 1..=bw.min(n - 1 - i) {
                s -= l[(i + k) * w + k] * x[i + k];
            }
            x[i] = s / l[i * w];
        }
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_matches_known_solution() {
        let mut a = vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let x = [1.0, -2.0, 0.5];
        let mut b = vec![
            4.0 * x[0] + 2.0 * x[1] + 0.6 * x[2],
            2.0 * x[0] + 5.0 * x[1] + 1.0 * x[2],
            0.6 * x[0] + 1.0 * x[1] + 3.0 * x[2],
        ];
        assert!(cholesky_solve(&mut a, 3, &mut b));
        for i in 0..3 {
            assert!((b[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        let mut b = vec![1.0, 1.0];
        assert!(!cholesky_solve(&mut a, 2, &mut b));
    }

    #[test]
    fn banded_solve_matches_dense() {
        let n = 9;
        let bw = 2;
        let mut band = BandedSpd::zeros(n, bw);
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..=bw.min(i) {
                let j = i - k;
                let v = if k == 0 {
                    6.0 + i as f64 * 0.1
                } else {
                    -1.0 / (k as f64 + 0.5) + 0.01 * j as f64
                };
                band.add(i, j, v);
                dense[i * n + j] = v;
                dense[j * n + i] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let x = band.solve(&b).unwrap();
        let ax = band.mul_vec(&x);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-12);
        }
        let mut d = dense.clone();
        let mut xd = b.clone();
        assert!(cholesky_solve(&mut d, n, &mut xd));
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-12);
        }
    }
}
